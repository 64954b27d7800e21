//! Generators shared by the property tests and the acceptance target.
#![allow(dead_code)]

use proptest::prelude::*;

use dataflow_dialogue::calendar::{Clock, EventStore};
use dataflow_dialogue::expr::{escape, LitKind, Literal};
use dataflow_dialogue::graph::{ExceptionKind, ValueTree};
use dataflow_dialogue::{Engine, GraphContext, Outcome, SurfaceExpr};

// ---- expression generator ------------------------------------------------

pub fn ident() -> impl Strategy<Value = String> {
    "[A-Za-z_][A-Za-z0-9_]{0,6}".prop_filter("reserved", |s| !matches!(s.as_str(), "true" | "false" | "let"))
}

pub fn literal() -> impl Strategy<Value = SurfaceExpr> {
    let lit = |kind, text: String| SurfaceExpr::Literal(Literal { kind, text });
    prop_oneof![
        any::<i64>().prop_map(move |v| lit(LitKind::Int, v.to_string())),
        (-999i32..999, 0u32..1000).prop_map(move |(a, b)| lit(LitKind::Float, format!("{a}.{b}"))),
        "[ -~\n\t]{0,8}".prop_map(move |s| lit(LitKind::Str, escape(&s))),
        any::<bool>().prop_map(move |b| lit(LitKind::Bool, b.to_string())),
    ]
}

pub fn unique_keys<T: Clone>(args: Vec<(String, T)>) -> Vec<(String, T)> {
    let mut out: Vec<(String, T)> = Vec::new();
    for (k, v) in args {
        if !out.iter().any(|(o, _)| *o == k) {
            out.push((k, v));
        }
    }
    out
}

pub fn expr(vars: Vec<String>) -> impl Strategy<Value = SurfaceExpr> {
    let leaf = if vars.is_empty() {
        literal().boxed()
    } else {
        prop_oneof![3 => literal(), 1 => proptest::sample::select(vars).prop_map(SurfaceExpr::VarRef)].boxed()
    };
    leaf.prop_recursive(4, 24, 4, |inner| {
        prop_oneof![
            (
                (any::<bool>(), ident()).prop_map(|(acc, f)| if acc { format!(":{f}") } else { f }),
                prop::collection::vec(inner.clone(), 0..3),
                prop::collection::vec((ident(), inner.clone()), 0..3),
            )
                .prop_map(|(func, positional, named)| SurfaceExpr::Call {
                    func,
                    positional,
                    named: unique_keys(named),
                }),
            (ident(), prop::option::of(ident()), prop::collection::vec((ident(), inner), 0..3)).prop_map(
                |(type_name, type_param, named)| SurfaceExpr::Constraint {
                    type_name,
                    type_param,
                    named: unique_keys(named),
                }
            ),
        ]
    })
}

pub fn program() -> impl Strategy<Value = SurfaceExpr> {
    (0usize..3).prop_flat_map(|n| {
        let names: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
        let bindings: Vec<_> = (0..n).map(|i| expr(names[..i].to_vec())).collect();
        (bindings, expr(names.clone())).prop_map(move |(values, body)| {
            if values.is_empty() {
                body
            } else {
                SurfaceExpr::AssignSeq { bindings: names.iter().cloned().zip(values).collect(), body: Box::new(body) }
            }
        })
    })
}

// ---- engine properties ----------------------------------------------------

pub fn add_tree() -> impl Strategy<Value = SurfaceExpr> {
    let leaf = (-1000i64..1000).prop_map(SurfaceExpr::int);
    leaf.prop_recursive(4, 16, 2, |inner| {
        (inner.clone(), inner).prop_map(|(a, b)| SurfaceExpr::call("Add", vec![a, b]))
    })
}

pub fn value(outcome: &Outcome, ctx: &GraphContext) -> Result<ValueTree, String> {
    match outcome {
        Outcome::Success { result, .. } => Ok(ctx.value_tree(*result)),
        Outcome::Pending(e) => Err(format!("pending {:?}", e.kind)),
        Outcome::Failed(e) => Err(e.code().to_string()),
    }
}

pub fn fixture_store() -> EventStore {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/events.json");
    EventStore::load(std::path::Path::new(path)).unwrap()
}

/// Functions with required parameters, and the kind of answer each takes.
pub const FUNCTIONS: &[(&str, &[&str])] = &[
    ("Add", &["pos1", "pos2"]),
    ("NumberAM", &["number"]),
    ("NumberPM", &["number"]),
    ("HourMinuteAM", &["hours", "minutes"]),
    ("HourMinutePM", &["hours", "minutes"]),
    ("EventById", &["pos1"]),
    ("TimeAfterDateTime", &["dateTime", "time"]),
    ("nextDOW", &["dow"]),
];

pub fn arg_for(func: &str, param: &str, seed: i64) -> SurfaceExpr {
    match (func, param) {
        ("TimeAfterDateTime", "dateTime") => SurfaceExpr::call(
            "DateAtTimeWithDefaults",
            vec![
                SurfaceExpr::call("tomorrow", vec![]),
                SurfaceExpr::call("NumberAM", vec![SurfaceExpr::int(1 + seed.rem_euclid(12))]),
            ],
        ),
        ("TimeAfterDateTime", "time") => SurfaceExpr::call("NumberPM", vec![SurfaceExpr::int(1 + seed.rem_euclid(12))]),
        ("nextDOW", _) => {
            let days = ["monday", "Tuesday", "WEDNESDAY", "thu", "Fri", "saturday", "sunday", "someday"];
            SurfaceExpr::str(days[seed.rem_euclid(days.len() as i64) as usize])
        }
        ("EventById", _) => SurfaceExpr::int(seed.rem_euclid(4)),
        ("Add", _) => SurfaceExpr::int(seed),
        // hours and minutes, sometimes out of range on purpose
        _ => SurfaceExpr::int(seed.rem_euclid(64) - 1),
    }
}

pub fn named_call(func: &str, args: Vec<(&str, SurfaceExpr)>) -> SurfaceExpr {
    SurfaceExpr::call_named(func, args)
}

/// Resume equivalence for one case: calling `func` without `missing` and
/// then answering the question must give what the full call gives.
pub fn resume_case(f: usize, missing: usize, seeds: &[i64]) -> Result<(), String> {
    let engine = Engine::new();
    let (func, params) = FUNCTIONS[f % FUNCTIONS.len()];
    let missing = params[missing % params.len()];
    let answer = arg_for(func, missing, seeds[0]);
    let given: Vec<(&str, SurfaceExpr)> =
        params.iter().filter(|p| **p != missing).map(|p| (*p, arg_for(func, p, seeds[1]))).collect();
    let mut full = given.clone();
    full.push((missing, answer.clone()));

    let mut direct_ctx = GraphContext::new(Clock::default(), fixture_store());
    let direct = engine.run_expr(&named_call(func, full), None, &mut direct_ctx);

    let mut ctx = GraphContext::new(Clock::default(), fixture_store());
    match engine.run_expr(&named_call(func, given), None, &mut ctx) {
        Outcome::Pending(e) if e.kind == ExceptionKind::MissingInput && e.param.as_deref() == Some(missing) => {}
        other => return Err(format!("{func} without {missing}: expected a missing input, got {other:?}")),
    }
    let resumed = engine.resume(&answer, &mut ctx);
    let (a, b) = (value(&resumed, &ctx), value(&direct, &direct_ctx));
    if a == b {
        Ok(())
    } else {
        Err(format!("{func} missing {missing}: resumed {a:?}, direct {b:?}"))
    }
}

pub fn resume_cases() -> impl Strategy<Value = (usize, usize, Vec<i64>)> {
    (0..FUNCTIONS.len(), 0usize..2, prop::collection::vec(-100i64..100, 2))
}
