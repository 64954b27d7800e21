//! Framework functions available in every dialogue: `Yield`, `refer`,
//! `revise`, `singleton`, confirmation answers, literal constructors and a
//! little arithmetic.

use crate::engine::{DuplicateFunction, EvalError, FunctionDef, Invocation, Raise, Registry, ANY};
use crate::graph::{ExceptionKind, ExceptionRecord, NodeId, Value};

pub fn register_core(r: &mut Registry) -> Result<(), DuplicateFunction> {
    r.register(FunctionDef::new("Yield", ANY).param("output", ANY).exec(exec_yield))?;
    r.register(FunctionDef::new("refer", ANY).param("constraint", ANY).exec(exec_refer))?;
    r.register(
        FunctionDef::new("revise", ANY).param("old", ANY).param("new", ANY).optional("graph", ANY).exec(exec_revise),
    )?;
    r.register(FunctionDef::new("singleton", ANY).param("pos1", "Set").optional("choice", "Int").exec(exec_singleton))?;
    r.register(FunctionDef::new("Confirm", "Bool").exec(|inv| Ok(inv.add_value(Value::Bool(true)))))?;
    r.register(FunctionDef::new("Decline", "Bool").exec(|inv| Ok(inv.add_value(Value::Bool(false)))))?;
    r.register(FunctionDef::new("Add", "Int").param("pos1", "Int").param("pos2", "Int").exec(|inv| {
        let (a, b) = (inv.int("pos1")?, inv.int("pos2")?);
        let sum = a.checked_add(b).ok_or_else(|| EvalError::InvalidArgument(format!("{a} + {b} overflows")))?;
        Ok(inv.add_value(Value::Int(sum)))
    }))?;
    for ty in ["Int", "Float", "Str", "Bool"] {
        r.register(FunctionDef::new(ty, ty).param("pos1", ty).literal_ctor().exec(|inv| inv.required("pos1")))?;
    }
    Ok(())
}

fn exec_yield(inv: &mut Invocation<'_>) -> Result<NodeId, Raise> {
    let output = inv.raw_input("output").expect("output is required");
    let message = inv.engine.message_for(inv.ctx, output);
    inv.set_message(message);
    Ok(inv.ctx.resolve(output))
}

fn exec_refer(inv: &mut Invocation<'_>) -> Result<NodeId, Raise> {
    let spec = inv.constraint("constraint")?;
    Ok(inv.engine.refer(&spec, inv.ctx)?)
}

fn exec_revise(inv: &mut Invocation<'_>) -> Result<NodeId, Raise> {
    let root = match inv.raw_input("graph") {
        Some(g) => g,
        None => {
            let spec = inv.constraint("old")?;
            let new = inv.raw_input("new").expect("new is required");
            let root = inv.engine.revise_graph(inv.ctx, &spec, new)?;
            inv.ctx.node_mut(inv.node).inputs.insert("graph".into(), root);
            root
        }
    };
    inv.evaluate(root)?;
    Ok(root)
}

fn exec_singleton(inv: &mut Invocation<'_>) -> Result<NodeId, Raise> {
    let set = inv.required("pos1")?;
    let items: Vec<NodeId> = inv.ctx.node(set).inputs.values().map(|&i| inv.ctx.resolve(i)).collect();
    if items.is_empty() {
        return Err(inv.exception(ExceptionKind::Disambiguation, None, "Int", "no matching item".into()));
    }
    match inv.opt_int("choice")? {
        Some(k) if k >= 1 && (k as usize) <= items.len() => return Ok(items[k as usize - 1]),
        None if items.len() == 1 => return Ok(items[0]),
        _ => {}
    }
    let options: Vec<String> =
        items.iter().enumerate().map(|(i, &id)| format!("{}) {}", i + 1, inv.engine.render(inv.ctx, id))).collect();
    Err(Raise::Exception(ExceptionRecord {
        kind: ExceptionKind::Disambiguation,
        node: inv.node,
        param: None,
        prompt: format!("Which one did you mean? {}", options.join(" ")),
        expected_type: "Int".into(),
        candidates: items,
    }))
}
