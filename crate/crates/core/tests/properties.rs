use chrono::{NaiveDate, NaiveTime};
use proptest::prelude::*;

use dataflow_dialogue::calendar::{fill_defaults, Clock, HourSpec, PartialDateTime, PartialTime};
use dataflow_dialogue::expr::{parse_call, parse_prefix, print_call, print_prefix, tokenize_for_length};
use dataflow_dialogue::{Engine, GraphContext, SurfaceExpr, Syntax};

#[path = "support/gen.rs"]
mod gen;
use gen::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn call_syntax_round_trips(e in program()) {
        let text = print_call(&e);
        prop_assert_eq!(parse_call(&text).unwrap(), e, "{}", text);
    }

    #[test]
    fn prefix_syntax_round_trips(e in program()) {
        let text = print_prefix(&e);
        prop_assert_eq!(parse_prefix(&text).unwrap(), e, "{}", text);
    }

    #[test]
    fn syntaxes_agree(e in program()) {
        let call = print_call(&e);
        let via_prefix = print_call(&parse_prefix(&print_prefix(&parse_call(&call).unwrap())).unwrap());
        prop_assert_eq!(via_prefix, call);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1_000))]

    #[test]
    fn token_count_ignores_whitespace(e in program(), gaps in prop::collection::vec("[ \t\n]{1,3}", 64)) {
        let tokens = tokenize_for_length(&print_call(&e)).unwrap().tokens;
        let spaced: String = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| format!("{t}{}", gaps[i % gaps.len()]))
            .collect();
        prop_assert_eq!(tokenize_for_length(&spaced).unwrap().tokens, tokens.clone());
        prop_assert_eq!(tokenize_for_length(&tokens.join(" ")).unwrap().tokens, tokens);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn resume_matches_direct_evaluation((f, missing, seeds) in resume_cases()) {
        if let Err(e) = resume_case(f, missing, &seeds) {
            prop_assert!(false, "{}", e);
        }
    }

    #[test]
    fn yield_is_neutral(e in add_tree()) {
        let engine = Engine::new();
        let mut a = GraphContext::default();
        let mut b = GraphContext::default();
        let plain = engine.run_expr(&e, None, &mut a);
        let wrapped = engine.run_expr(&SurfaceExpr::call("Yield", vec![e]), None, &mut b);
        prop_assert_eq!(value(&plain, &a), value(&wrapped, &b));
        prop_assert_eq!(a.len(), b.len());
    }

    #[test]
    fn revise_leaves_history_alone(e in add_tree(), pick in any::<prop::sample::Index>(), new in -50i64..50) {
        let engine = Engine::new();
        let mut ctx = GraphContext::default();
        let first = engine.run_expr(&e, None, &mut ctx);
        let before = value(&first, &ctx);
        let snapshot = ctx.nodes().to_vec();

        let used: Vec<_> = ctx.nodes().iter().flat_map(|n| n.inputs.values().copied()).collect();
        let leaves: Vec<i64> = ctx
            .nodes()
            .iter()
            .filter(|n| n.inputs.is_empty() && used.contains(&n.id))
            .filter_map(|n| match n.value { Some(dataflow_dialogue::graph::Value::Int(v)) => Some(v), _ => None })
            .collect();
        let old = leaves[pick.index(leaves.len())];
        let revise = format!("revise(old=Int?({old}), new=Int({new}))");
        let second = engine.run_turn(&revise, Syntax::Call, &mut ctx);
        prop_assert!(second.is_success(), "{:?}", second);

        prop_assert_eq!(&ctx.nodes()[..snapshot.len()], &snapshot[..]);
        let root = ctx.turns[0].root.unwrap();
        let again = engine.evaluate(root, &mut ctx);
        prop_assert_eq!(value(&again, &ctx), before);
    }

    #[test]
    fn evaluation_is_deterministic(e in add_tree()) {
        let engine = Engine::new();
        let (mut a, mut b) = (GraphContext::default(), GraphContext::default());
        let ra = engine.run_expr(&e, None, &mut a);
        let rb = engine.run_expr(&e, None, &mut b);
        prop_assert_eq!(value(&ra, &a), value(&rb, &b));
        prop_assert_eq!(a.len(), b.len());
    }
}

fn hour_spec() -> impl Strategy<Value = HourSpec> {
    prop_oneof![
        (0u32..14).prop_map(HourSpec::Am),
        (0u32..14).prop_map(HourSpec::Pm),
        (0u32..25).prop_map(HourSpec::Bare),
        (0u32..25).prop_map(HourSpec::H24),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn fill_defaults_is_idempotent(
        date in prop::option::of((2000i32..2100, 1u32..13, 1u32..29)),
        time in prop::option::of((hour_spec(), 0u32..61)),
        now_h in 0u32..24,
    ) {
        let clock = Clock::at(NaiveDate::from_ymd_opt(2023, 1, 1).unwrap().and_time(NaiveTime::from_hms_opt(now_h, 0, 0).unwrap()));
        let partial = PartialDateTime {
            date: date.map(|(y, m, d)| NaiveDate::from_ymd_opt(y, m, d).unwrap()),
            time: time.map(|(hour, minute)| PartialTime { hour, minute }),
        };
        if let Ok(once) = fill_defaults(partial, &clock) {
            prop_assert_eq!(fill_defaults(PartialDateTime::from(once), &clock), Ok(once));
        }
    }
}
