//! Calendar function library, in both the original fine-grained style
//! (`...PreflightEventWrapper`, `FindEventWrapperWithDefaults`, ...) and the
//! simplified style (`DeleteEvent`, `starts_at`, `AND`, ...).

use chrono::{Duration, NaiveTime};
use indexmap::IndexMap;

use super::{
    apply_changes, event_from_spec, fill_defaults, parse_weekday, resolve_hour, resolve_time, CalendarError, Event,
    EventQuery, HourSpec, PartialDateTime, PartialTime,
};
use crate::engine::{DuplicateFunction, EvalError, FunctionDef, Invocation, Raise, Registry, ANY};
use crate::graph::{ExceptionKind, GraphContext, NodeId, Value};

const EVENT: &str = "Event";
const EVENT_C: &str = "Constraint[Event]";

/// Number of positional slots of `AND`.
pub const AND_ARITY: usize = 6;

/// Materializes an event as a struct node with leaf fields.
pub fn event_node(ctx: &mut GraphContext, e: &Event) -> NodeId {
    let mut inputs = IndexMap::new();
    inputs.insert("id".to_string(), ctx.add_value(Value::Int(e.id)));
    inputs.insert("subject".to_string(), ctx.add_value(Value::Str(e.subject.clone())));
    inputs.insert("start".to_string(), ctx.add_value(Value::DateTime(e.start)));
    inputs.insert("end".to_string(), ctx.add_value(Value::DateTime(e.end)));
    if let Some(loc) = &e.location {
        inputs.insert("location".to_string(), ctx.add_value(Value::Str(loc.clone())));
    }
    ctx.add_struct(EVENT, inputs)
}

/// Reads an `Event` struct node back.
pub fn read_event(ctx: &GraphContext, id: NodeId) -> Option<Event> {
    let n = ctx.node(ctx.resolve(id));
    if n.func != EVENT {
        return None;
    }
    let field = |k: &str| n.inputs.get(k).and_then(|&i| ctx.value_of(i));
    let (Some(Value::Int(id)), Some(Value::Str(subject)), Some(Value::DateTime(start)), Some(Value::DateTime(end))) =
        (field("id"), field("subject"), field("start"), field("end"))
    else {
        return None;
    };
    let location = match field("location") {
        Some(Value::Str(l)) => Some(l.clone()),
        _ => None,
    };
    Some(Event { id: *id, subject: subject.clone(), start: *start, end: *end, location })
}

fn event_input(inv: &Invocation<'_>, param: &str) -> Result<Event, Raise> {
    let node = inv.required(param)?;
    read_event(inv.ctx, node).ok_or_else(|| {
        EvalError::TypeError {
            func: inv.func().to_string(),
            param: param.to_string(),
            expected: EVENT.into(),
            got: inv.ctx.type_of(node),
        }
        .into()
    })
}

/// The stored version of an event, or `EventVanished`.
fn stored(inv: &Invocation<'_>, e: &Event) -> Result<Event, Raise> {
    inv.ctx.store.get(e.id).cloned().ok_or_else(|| CalendarError::EventVanished(e.id).into())
}

fn require_confirmation(inv: &Invocation<'_>, prompt: String) -> Result<(), Raise> {
    match inv.opt_bool("confirm")? {
        Some(true) => Ok(()),
        _ => Err(inv.exception(ExceptionKind::Confirmation, None, "Bool", prompt)),
    }
}

fn event_param(def: FunctionDef, name: &str) -> FunctionDef {
    def.param(name, EVENT).coerce("Int", "EventById").coerce("Set", "singleton").coerce(EVENT_C, "FindEvents")
}

fn find_events(inv: &mut Invocation<'_>, param: &str) -> Result<NodeId, Raise> {
    let spec = inv.constraint(param)?;
    let query = EventQuery::from_spec(&spec, &inv.ctx.clock)?;
    let events = inv.ctx.store.find(&query);
    let mut items = IndexMap::new();
    for (i, e) in events.iter().enumerate() {
        items.insert(format!("pos{}", i + 1), event_node(inv.ctx, e));
    }
    Ok(inv.add_struct("Set", items))
}

fn constraint_node(inv: &mut Invocation<'_>, fields: IndexMap<String, NodeId>) -> NodeId {
    inv.ctx.add_constraint(EVENT_C, fields)
}

fn constraint_fields(inv: &Invocation<'_>, param: &str) -> IndexMap<String, NodeId> {
    inv.input(param).map(|c| inv.ctx.node(c).inputs.clone()).unwrap_or_default()
}

/// Combines one or two temporal arguments into a single field value: a date
/// and a time become a date-time, an integer is a bare hour.
fn temporal(inv: &mut Invocation<'_>) -> Result<NodeId, Raise> {
    let first = inv.required("pos1")?;
    let second = inv.input("pos2");
    let value = |id: NodeId| inv.ctx.value_of(id).cloned();
    let bare = |h: i64| -> Result<NaiveTime, Raise> {
        let h = u32::try_from(h).map_err(|_| CalendarError::InvalidTime(format!("hour {h}")))?;
        Ok(NaiveTime::from_hms_opt(resolve_hour(HourSpec::Bare(h))?, 0, 0).expect("resolved hour is valid"))
    };
    let bad = |inv: &Invocation<'_>| -> Raise {
        EvalError::TypeError {
            func: inv.func().to_string(),
            param: "pos1".into(),
            expected: "Date, Time or DateTime".into(),
            got: inv.ctx.type_of(first),
        }
        .into()
    };
    let combined = match (value(first), second.map(value)) {
        (Some(Value::Date(_) | Value::Time(_) | Value::DateTime(_)), None) => return Ok(first),
        (Some(Value::Int(h)), None) => Value::Time(bare(h)?),
        (Some(Value::Date(d)), Some(Some(Value::Time(t)))) | (Some(Value::Time(t)), Some(Some(Value::Date(d)))) => {
            Value::DateTime(d.and_time(t))
        }
        (Some(Value::Date(d)), Some(Some(Value::Int(h)))) => Value::DateTime(d.and_time(bare(h)?)),
        _ => return Err(bad(inv)),
    };
    Ok(inv.add_value(combined))
}

fn field_constraint(inv: &mut Invocation<'_>, field: &str, value: NodeId) -> NodeId {
    let fields = IndexMap::from([(field.to_string(), value)]);
    constraint_node(inv, fields)
}

fn exec_and(inv: &mut Invocation<'_>) -> Result<NodeId, Raise> {
    let mut merged: IndexMap<String, NodeId> = IndexMap::new();
    for i in 1..=AND_ARITY {
        for (k, v) in constraint_fields(inv, &format!("pos{i}")) {
            match merged.get(&k) {
                Some(&existing) => {
                    let (a, b) = (inv.ctx.value_of(existing), inv.ctx.value_of(v));
                    let same = inv.ctx.resolve(existing) == inv.ctx.resolve(v) || (a.is_some() && a == b);
                    if !same {
                        return Err(EvalError::ConflictingConstraint(format!("'{k}' is constrained twice")).into());
                    }
                }
                None => {
                    merged.insert(k, v);
                }
            }
        }
    }
    Ok(constraint_node(inv, merged))
}

fn time_value(inv: &mut Invocation<'_>, hour: HourSpec, minute: i64) -> Result<NodeId, Raise> {
    let minute = u32::try_from(minute).map_err(|_| CalendarError::InvalidTime(format!("minute {minute}")))?;
    let t = resolve_time(PartialTime { hour, minute })?;
    Ok(inv.add_value(Value::Time(t)))
}

fn hour_arg(inv: &Invocation<'_>, param: &str) -> Result<u32, Raise> {
    let h = inv.int(param)?;
    u32::try_from(h).map_err(|_| CalendarError::InvalidTime(format!("hour {h}")).into())
}

fn accessor(name: &'static str, out: &str) -> FunctionDef {
    FunctionDef::new(&format!(":{name}"), out).param("pos1", ANY).exec(match name {
        "id" => |inv| field_of(inv, "id"),
        "start" => |inv| field_of(inv, "start"),
        "end" => |inv| field_of(inv, "end"),
        "subject" => |inv| field_of(inv, "subject"),
        "location" => |inv| field_of(inv, "location"),
        "results" => |inv| field_of(inv, "results"),
        "date" => |inv| field_of(inv, "date"),
        "time" => |inv| field_of(inv, "time"),
        _ => unreachable!("accessor list is fixed"),
    })
}

fn field_of(inv: &mut Invocation<'_>, field: &str) -> Result<NodeId, Raise> {
    let target = inv.required("pos1")?;
    if let Some(&i) = inv.ctx.node(target).inputs.get(field) {
        return Ok(inv.ctx.resolve(i));
    }
    let derived = match (field, inv.ctx.value_of(target)) {
        ("date", Some(Value::DateTime(dt))) => Value::Date(dt.date()),
        ("time", Some(Value::DateTime(dt))) => Value::Time(dt.time()),
        _ => {
            return Err(EvalError::InvalidArgument(format!(
                "{} has no field '{field}'",
                inv.engine.render(inv.ctx, target)
            ))
            .into())
        }
    };
    Ok(inv.add_value(derived))
}

// ---- side-effecting operations ----------------------------------------

fn check_delete(inv: &mut Invocation<'_>, param: &str) -> Result<(), Raise> {
    let e = stored(inv, &event_input(inv, param)?)?;
    require_confirmation(inv, format!("Delete {}?", e.summary()))
}

fn commit_delete(inv: &mut Invocation<'_>, param: &str) -> Result<NodeId, Raise> {
    let e = event_input(inv, param)?;
    let removed = inv.ctx.store.remove(e.id)?;
    inv.set_message(format!("deleted {}", removed.summary()));
    inv.required(param)
}

fn proposed_update(inv: &Invocation<'_>, event: &str, changes: &str) -> Result<(Event, Event), Raise> {
    let current = stored(inv, &event_input(inv, event)?)?;
    let spec = inv.constraint(changes)?;
    let updated = apply_changes(&current, &spec)?;
    Ok((current, updated))
}

fn check_update(inv: &mut Invocation<'_>, event: &str, changes: &str) -> Result<(), Raise> {
    let (current, updated) = proposed_update(inv, event, changes)?;
    require_confirmation(inv, format!("Change {} to {}?", current.summary(), updated.summary()))
}

fn commit_update(inv: &mut Invocation<'_>, e: Event) -> Result<NodeId, Raise> {
    inv.ctx.store.replace(e.clone())?;
    inv.set_message(format!("updated {}", e.summary()));
    Ok(event_node(inv.ctx, &e))
}

fn proposed_event(inv: &Invocation<'_>, param: &str) -> Result<Event, Raise> {
    let spec = inv.constraint(param)?;
    Ok(event_from_spec(inv.ctx.store.next_id(), &spec, &inv.ctx.clock)?)
}

fn check_create(inv: &mut Invocation<'_>) -> Result<(), Raise> {
    let e = proposed_event(inv, "constraint")?;
    require_confirmation(inv, format!("Create {}?", e.summary()))
}

fn commit_create(inv: &mut Invocation<'_>, e: Event) -> Result<NodeId, Raise> {
    let created = inv.ctx.store.insert(e)?;
    inv.set_message(format!("created {}", created.summary()));
    Ok(event_node(inv.ctx, &created))
}

pub fn register_calendar(r: &mut Registry) -> Result<(), DuplicateFunction> {
    // Lookup.
    r.register(FunctionDef::new("EventById", EVENT).param("pos1", "Int").exec(|inv| {
        let id = inv.int("pos1")?;
        let e = inv.ctx.store.get(id).cloned().ok_or(CalendarError::EventNotFound(id))?;
        Ok(event_node(inv.ctx, &e))
    }))?;
    r.register(FunctionDef::new("FindEvents", "Set").param("pos1", EVENT_C).exec(|inv| find_events(inv, "pos1")))?;
    r.register(
        FunctionDef::new("FindEventWrapperWithDefaults", "EventSearchResult").param("constraint", EVENT_C).exec(
            |inv| {
                let set = find_events(inv, "constraint")?;
                Ok(inv.add_struct("EventSearchResult", IndexMap::from([("results".to_string(), set)])))
            },
        ),
    )?;
    for (name, out) in [
        ("id", "Int"),
        ("start", "DateTime"),
        ("end", "DateTime"),
        ("subject", "Str"),
        ("location", "Str"),
        ("results", "Set"),
        ("date", "Date"),
        ("time", "Time"),
    ] {
        r.register(accessor(name, out))?;
    }

    // Dates and times.
    r.register(FunctionDef::new("today", "Date").exec(|inv| {
        let d = inv.ctx.clock.today();
        Ok(inv.add_value(Value::Date(d)))
    }))?;
    r.register(FunctionDef::new("tomorrow", "Date").exec(|inv| {
        let d = inv.ctx.clock.tomorrow();
        Ok(inv.add_value(Value::Date(d)))
    }))?;
    r.register(FunctionDef::new("nextDOW", "Date").param("dow", "Str").exec(|inv| {
        let name = inv.string("dow")?;
        let day =
            parse_weekday(&name).ok_or_else(|| EvalError::InvalidArgument(format!("unknown weekday '{name}'")))?;
        let d = inv.ctx.clock.next_dow(day);
        Ok(inv.add_value(Value::Date(d)))
    }))?;
    r.register(FunctionDef::new("NumberAM", "Time").param("number", "Int").exec(|inv| {
        let h = hour_arg(inv, "number")?;
        time_value(inv, HourSpec::Am(h), 0)
    }))?;
    r.register(FunctionDef::new("NumberPM", "Time").param("number", "Int").exec(|inv| {
        let h = hour_arg(inv, "number")?;
        time_value(inv, HourSpec::Pm(h), 0)
    }))?;
    r.register(FunctionDef::new("HourMinuteAM", "Time").param("hours", "Int").param("minutes", "Int").exec(|inv| {
        let (h, m) = (hour_arg(inv, "hours")?, inv.int("minutes")?);
        time_value(inv, HourSpec::Am(h), m)
    }))?;
    r.register(FunctionDef::new("HourMinutePM", "Time").param("hours", "Int").param("minutes", "Int").exec(|inv| {
        let (h, m) = (hour_arg(inv, "hours")?, inv.int("minutes")?);
        time_value(inv, HourSpec::Pm(h), m)
    }))?;
    r.register(
        FunctionDef::new("DateAtTimeWithDefaults", "DateTime").optional("date", "Date").param("time", "Time").exec(
            |inv| {
                let date = match inv.input("date") {
                    Some(_) => Some(inv.date("date")?),
                    None => None,
                };
                let t = inv.time("time")?;
                let partial = PartialDateTime { date, time: Some(PartialTime::from(t)) };
                let dt = fill_defaults(partial, &inv.ctx.clock)?;
                Ok(inv.add_value(Value::DateTime(dt)))
            },
        ),
    )?;
    r.register(
        FunctionDef::new("TimeAfterDateTime", "DateTime").param("dateTime", "DateTime").param("time", "Time").exec(
            |inv| {
                let (base, t) = (inv.datetime("dateTime")?, inv.time("time")?);
                let mut dt = base.date().and_time(t);
                if dt <= base {
                    dt += Duration::days(1);
                }
                Ok(inv.add_value(Value::DateTime(dt)))
            },
        ),
    )?;

    // Event constraints.
    r.register(
        FunctionDef::new("EventOnDateTime", EVENT_C).param("dateTime", "DateTime").optional("event", EVENT_C).exec(
            |inv| {
                let mut fields = constraint_fields(inv, "event");
                fields.insert("start".into(), inv.required("dateTime")?);
                Ok(constraint_node(inv, fields))
            },
        ),
    )?;
    r.register(FunctionDef::new("EventOnDate", EVENT_C).param("date", "Date").optional("event", EVENT_C).exec(
        |inv| {
            let mut fields = constraint_fields(inv, "event");
            fields.insert("start".into(), inv.required("date")?);
            Ok(constraint_node(inv, fields))
        },
    ))?;
    r.register(FunctionDef::new("starts_at", EVENT_C).param("pos1", ANY).optional("pos2", ANY).exec(|inv| {
        let v = temporal(inv)?;
        Ok(field_constraint(inv, "start", v))
    }))?;
    r.register(FunctionDef::new("ends_at", EVENT_C).param("pos1", ANY).optional("pos2", ANY).exec(|inv| {
        let v = temporal(inv)?;
        Ok(field_constraint(inv, "end", v))
    }))?;
    r.register(FunctionDef::new("at_location", EVENT_C).param("pos1", "Str").exec(|inv| {
        let v = inv.required("pos1")?;
        Ok(field_constraint(inv, "location", v))
    }))?;
    r.register(FunctionDef::new("has_subject", EVENT_C).param("pos1", "Str").exec(|inv| {
        let v = inv.required("pos1")?;
        Ok(field_constraint(inv, "subject", v))
    }))?;
    let mut and = FunctionDef::new("AND", EVENT_C).param("pos1", EVENT_C).param("pos2", EVENT_C);
    for i in 3..=AND_ARITY {
        and = and.optional(&format!("pos{i}"), EVENT_C);
    }
    r.register(and.exec(exec_and))?;

    // Delete.
    r.register(
        event_param(FunctionDef::new("DeletePreflightEventWrapper", EVENT), "id")
            .optional("confirm", "Bool")
            .check(|inv| check_delete(inv, "id"))
            .exec(|inv| inv.required("id")),
    )?;
    r.register(
        FunctionDef::new("DeleteCommitEventWrapper", EVENT)
            .param("event", EVENT)
            .exec(|inv| commit_delete(inv, "event")),
    )?;
    r.register(
        event_param(FunctionDef::new("DeleteEvent", EVENT), "event")
            .optional("confirm", "Bool")
            .check(|inv| check_delete(inv, "event"))
            .exec(|inv| commit_delete(inv, "event")),
    )?;

    // Update.
    r.register(
        event_param(FunctionDef::new("UpdatePreflightEventWrapper", EVENT), "id")
            .param("update", EVENT_C)
            .optional("confirm", "Bool")
            .check(|inv| check_update(inv, "id", "update"))
            .exec(|inv| {
                let (_, updated) = proposed_update(inv, "id", "update")?;
                Ok(event_node(inv.ctx, &updated))
            }),
    )?;
    r.register(FunctionDef::new("UpdateCommitEventWrapper", EVENT).param("event", EVENT).exec(|inv| {
        let e = event_input(inv, "event")?;
        commit_update(inv, e)
    }))?;
    r.register(
        event_param(FunctionDef::new("UpdateEvent", EVENT), "event")
            .param("changes", EVENT_C)
            .optional("confirm", "Bool")
            .check(|inv| check_update(inv, "event", "changes"))
            .exec(|inv| {
                let (_, updated) = proposed_update(inv, "event", "changes")?;
                commit_update(inv, updated)
            }),
    )?;

    // Create.
    r.register(
        FunctionDef::new("CreatePreflightEventWrapper", EVENT)
            .param("constraint", EVENT_C)
            .optional("confirm", "Bool")
            .check(check_create)
            .exec(|inv| {
                let e = proposed_event(inv, "constraint")?;
                Ok(event_node(inv.ctx, &e))
            }),
    )?;
    r.register(FunctionDef::new("CreateCommitEventWrapper", EVENT).param("event", EVENT).exec(|inv| {
        let e = event_input(inv, "event")?;
        commit_create(inv, e)
    }))?;
    r.register(
        FunctionDef::new("CreateEvent", EVENT)
            .param("constraint", EVENT_C)
            .optional("confirm", "Bool")
            .check(check_create)
            .exec(|inv| {
                let e = proposed_event(inv, "constraint")?;
                commit_create(inv, e)
            }),
    )?;
    Ok(())
}

impl From<NaiveTime> for PartialTime {
    fn from(t: NaiveTime) -> Self {
        use chrono::Timelike;
        PartialTime { hour: HourSpec::H24(t.hour()), minute: t.minute() }
    }
}
