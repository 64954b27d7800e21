use dataflow_dialogue::engine::{EngineError, EvalError};
use dataflow_dialogue::graph::{ConstraintSpec, ExceptionKind, Value};
use dataflow_dialogue::{Engine, GraphContext, NodeId, Outcome, Syntax};

fn run(engine: &Engine, ctx: &mut GraphContext, text: &str) -> Outcome {
    engine.run_turn(text, Syntax::Call, ctx)
}

fn message(outcome: &Outcome) -> &str {
    match outcome {
        Outcome::Success { message, .. } => message,
        other => panic!("expected success, got {other:?}"),
    }
}

fn int_leaf(ctx: &GraphContext, turn: usize, v: i64) -> NodeId {
    let hits: Vec<NodeId> = ctx
        .nodes()
        .iter()
        .filter(|n| n.turn == turn && !n.detached_constraint && n.inputs.is_empty() && n.value == Some(Value::Int(v)))
        .map(|n| n.id)
        .collect();
    assert_eq!(hits.len(), 1, "expected one Int({v}) leaf in turn {turn}");
    hits[0]
}

#[test]
fn add_then_revise_shares_untouched_inputs() {
    let engine = Engine::new();
    let mut ctx = GraphContext::default();
    assert_eq!(message(&run(&engine, &mut ctx, "Add(2,Add(3,5))")), "10");
    let two = int_leaf(&ctx, 0, 2);
    let five = int_leaf(&ctx, 0, 5);
    let before: Vec<_> = ctx.nodes().to_vec();

    let out = run(&engine, &mut ctx, "revise(old=Int?(3), new=Int(6))");
    assert_eq!(message(&out), "13");
    assert_eq!(ctx.turns.len(), 2);

    // history is untouched
    assert_eq!(&ctx.nodes()[..before.len()], &before[..]);

    let fresh = &ctx.nodes()[before.len()..];
    let adds: Vec<_> = fresh.iter().filter(|n| n.func == "Add").collect();
    assert_eq!(adds.len(), 2, "exactly the two Adds on the path are copied");
    let results: Vec<NodeId> = ctx.nodes().iter().filter_map(|n| n.result.filter(|r| *r != n.id)).collect();
    let new_leaves: Vec<_> =
        fresh.iter().filter(|n| n.func == "Int" && !n.detached_constraint && !results.contains(&n.id)).collect();
    assert_eq!(new_leaves.len(), 1);
    assert_eq!(new_leaves[0].value, Some(Value::Int(6)));

    let outer = adds.iter().find(|n| n.inputs["pos1"] == two).expect("outer copy keeps Int(2)");
    let inner = adds.iter().find(|n| n.inputs["pos2"] == five).expect("inner copy keeps Int(5)");
    assert_eq!(outer.inputs["pos2"], inner.id);
    assert_eq!(inner.inputs["pos1"], new_leaves[0].id);

    // the figure numbering: copies come right after the revise turn's own nodes
    let labels: Vec<String> = adds.iter().map(|n| n.label()).collect();
    assert_eq!(labels, ["Add_13", "Add_14"]);

    // old turn still evaluates to 10
    let old_root = ctx.turns[0].root.unwrap();
    assert_eq!(message(&engine.evaluate(old_root, &mut ctx)), "10");
}

#[test]
fn dot_for_first_turn() {
    let engine = Engine::new();
    let mut ctx = GraphContext::default();
    run(&engine, &mut ctx, "Add(2,Add(3,5))");
    let dot = ctx.export_dot(Some(0)).unwrap();
    let dashed = dot.lines().filter(|l| l.contains("style=dashed")).count();
    let solid = dot.lines().filter(|l| l.contains("->") && !l.contains("style=dashed")).count();
    assert_eq!((solid, dashed), (5, 3));
    assert!(dot.contains("label=\"Add_1\""));
    assert!(ctx.export_dot(Some(4)).is_err());
}

#[test]
fn dot_of_empty_context_is_just_the_frame() {
    let dot = GraphContext::default().export_dot(None).unwrap();
    assert!(!dot.contains("->"));
    assert!(dot.starts_with("digraph") && dot.trim_end().ends_with('}'));
}

#[test]
fn missing_input_then_answer() {
    let engine = Engine::new();
    let mut ctx = GraphContext::default();
    match run(&engine, &mut ctx, "Add(2)") {
        Outcome::Pending(e) => {
            assert_eq!(e.kind, ExceptionKind::MissingInput);
            assert_eq!(e.param.as_deref(), Some("pos2"));
            assert_eq!(e.expected_type, "Int");
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(message(&run(&engine, &mut ctx, "7")), "9");
    assert!(ctx.pending.is_none());
    assert_eq!(ctx.turns.len(), 1, "the answer completes the suspended turn");
}

#[test]
fn wrong_answer_type_keeps_the_question() {
    let engine = Engine::new();
    let mut ctx = GraphContext::default();
    run(&engine, &mut ctx, "Add(2)");
    let pending = ctx.pending.clone();
    let out = run(&engine, &mut ctx, "\"abc\"");
    assert!(matches!(out, Outcome::Failed(EngineError::WrongAnswerType { .. })), "{out:?}");
    assert_eq!(ctx.pending, pending);
    assert_eq!(message(&run(&engine, &mut ctx, "1")), "3");
}

#[test]
fn expression_of_the_expected_type_is_an_answer() {
    let engine = Engine::new();
    let mut ctx = GraphContext::default();
    run(&engine, &mut ctx, "Add(2)");
    assert_eq!(message(&run(&engine, &mut ctx, "Add(1,1)")), "4");
    assert_eq!(ctx.turns.len(), 1);
}

#[test]
fn new_request_abandons_the_question() {
    let engine = Engine::new();
    let mut ctx = GraphContext::default();
    run(&engine, &mut ctx, "Add(2)");
    assert_eq!(message(&run(&engine, &mut ctx, "Str(\"hi\")")), "hi");
    assert!(ctx.pending.is_none());
    assert_eq!(ctx.turns.len(), 2);
}

#[test]
fn refer_finds_salient_nodes() {
    let engine = Engine::new();
    let mut ctx = GraphContext::default();
    run(&engine, &mut ctx, "Add(2,Add(3,5))");
    let five = int_leaf(&ctx, 0, 5);
    assert_eq!(engine.refer(&ConstraintSpec::of("Int").with("value", Value::Int(5)), &mut ctx), Ok(five));

    // newest Int is the computed total
    let any_int = engine.refer(&ConstraintSpec::of("Int"), &mut ctx).unwrap();
    assert_eq!(ctx.value_of(any_int), Some(&Value::Int(10)));
    assert_eq!(any_int, ctx.nodes().iter().filter(|n| n.func == "Int").map(|n| n.id).max().unwrap());

    assert_eq!(message(&run(&engine, &mut ctx, "Add(refer(Int?(5)),1)")), "6");
}

#[test]
fn refer_without_match_fails() {
    let engine = Engine::new();
    let mut ctx = GraphContext::default();
    assert!(matches!(engine.refer(&ConstraintSpec::of("Str"), &mut ctx), Err(EvalError::NoMatch(_))));
    match run(&engine, &mut ctx, "refer(Str?())") {
        Outcome::Failed(e) => {
            assert_eq!(e.code(), "no_match");
            assert!(e.to_string().starts_with("no match for"), "{e}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn revise_edge_cases() {
    let engine = Engine::new();
    let mut ctx = GraphContext::default();
    run(&engine, &mut ctx, "Add(1,2)");
    // the old node is the computation root itself
    assert_eq!(message(&run(&engine, &mut ctx, "revise(old=Add?(), new=Int(7))")), "7");
    let out = run(&engine, &mut ctx, "revise(old=Int?(99), new=Int(1))");
    assert!(matches!(out, Outcome::Failed(EngineError::Eval(EvalError::NoMatch(_)))), "{out:?}");
}

#[test]
fn revise_can_target_a_revised_turn() {
    let engine = Engine::new();
    let mut ctx = GraphContext::default();
    run(&engine, &mut ctx, "Add(2,Add(3,5))");
    run(&engine, &mut ctx, "revise(old=Int?(3), new=Int(6))");
    assert_eq!(message(&run(&engine, &mut ctx, "revise(old=Int?(2), new=Int(0))")), "11");
}

#[test]
fn reevaluation_is_idempotent() {
    let engine = Engine::new();
    let mut ctx = GraphContext::default();
    let first = run(&engine, &mut ctx, "Add(2,Add(3,5))");
    let n = ctx.len();
    let root = ctx.turns[0].root.unwrap();
    assert_eq!(engine.evaluate(root, &mut ctx), first);
    assert_eq!(ctx.len(), n);
}

#[test]
fn malformed_turn_is_recorded_and_harmless() {
    let engine = Engine::new();
    let mut ctx = GraphContext::default();
    let out = run(&engine, &mut ctx, "Add(2,");
    assert!(matches!(out, Outcome::Failed(EngineError::Parse(_))));
    assert_eq!(ctx.turns.len(), 1);
    assert_eq!(message(&run(&engine, &mut ctx, "Add(2,3)")), "5");
}

#[test]
fn build_errors() {
    let engine = Engine::new();
    let mut ctx = GraphContext::default();
    let code = |ctx: &mut GraphContext, t: &str| match run(&engine, ctx, t) {
        Outcome::Failed(e) => e.code(),
        other => panic!("{other:?}"),
    };
    assert_eq!(code(&mut ctx, "Nope(1)"), "unknown_function");
    assert_eq!(code(&mut ctx, "Add(1,2,3)"), "arity_error");
    assert_eq!(code(&mut ctx, "Add(1,zap=2)"), "bad_argument");
    assert_eq!(code(&mut ctx, "Add(1,\"x\")"), "type_error");
    assert_eq!(code(&mut ctx, "Add(99999999999999999999,1)"), "invalid_literal");
}

#[test]
fn shared_bindings_build_once() {
    let engine = Engine::new();
    let mut ctx = GraphContext::default();
    assert_eq!(message(&run(&engine, &mut ctx, "x0=Int(1); Add(x0,x0)")), "2");
    let add = ctx.nodes().iter().find(|n| n.func == "Add").unwrap();
    assert_eq!(add.inputs["pos1"], add.inputs["pos2"]);
}

#[test]
fn prefix_syntax_turns() {
    let engine = Engine::new();
    let mut ctx = GraphContext::default();
    let out = engine.run_turn("(Yield (Add 2 3))", Syntax::Prefix, &mut ctx);
    assert_eq!(message(&out), "5");
    let yields = ctx.nodes().iter().filter(|n| n.func == "Yield").count();
    assert_eq!(yields, 1, "an explicit Yield is not doubled");
}

#[test]
fn json_snapshot_round_trips() {
    let engine = Engine::new();
    let mut ctx = GraphContext::default();
    run(&engine, &mut ctx, "Add(2,Add(3,5))");
    run(&engine, &mut ctx, "Add(2)");
    let json = ctx.export_json();
    let back = GraphContext::import_json(&json, ctx.clock, ctx.store.clone()).unwrap();
    assert_eq!(back.export_json(), json);
    assert_eq!(back.pending, ctx.pending);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["version"], "v1");

    let empty: serde_json::Value = serde_json::from_str(&GraphContext::default().export_json()).unwrap();
    assert_eq!(empty["nodes"], serde_json::json!([]));
    assert_eq!(empty["turns"], serde_json::json!([]));
}
