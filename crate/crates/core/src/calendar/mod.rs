//! Calendar domain: events, the in-memory event store standing in for the
//! external calendar service, the fixed dialogue clock, and date/time
//! default filling.

mod functions;

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, NaiveTime, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ConstraintSpec, FieldSpec, Value};

pub use functions::{event_node, read_event, register_calendar, AND_ARITY};

/// Default event length when a creation request gives no end.
pub const DEFAULT_DURATION_MINUTES: i64 = 30;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CalendarError {
    #[error("date/time specification is empty")]
    EmptySpec,
    #[error("invalid time: {0}")]
    InvalidTime(String),
    #[error("invalid update: {0}")]
    InvalidUpdate(String),
    #[error("event {0} no longer exists")]
    EventVanished(i64),
    #[error("no event with id {0}")]
    EventNotFound(i64),
    #[error("duplicate event id {0}")]
    DuplicateId(i64),
    #[error("unsupported event constraint field '{0}'")]
    UnsupportedField(String),
    #[error("fixture error: {0}")]
    Fixture(String),
}

mod iso_minutes {
    use chrono::NaiveDateTime;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(dt: &NaiveDateTime, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&dt.format("%Y-%m-%dT%H:%M").to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDateTime, D::Error> {
        let s = String::deserialize(d)?;
        super::parse_iso(&s).map_err(serde::de::Error::custom)
    }
}

/// Parses an ISO-8601 local timestamp with or without seconds.
pub fn parse_iso(s: &str) -> Result<NaiveDateTime, String> {
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M"))
        .map_err(|e| format!("invalid ISO-8601 timestamp '{s}': {e}"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub id: i64,
    pub subject: String,
    #[serde(with = "iso_minutes")]
    pub start: NaiveDateTime,
    #[serde(with = "iso_minutes")]
    pub end: NaiveDateTime,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
}

impl Event {
    /// One-line summary used in messages and prompts.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "#{} {} on {} from {} to {}",
            self.id,
            self.subject,
            self.start.format("%Y-%m-%d"),
            self.start.format("%H:%M"),
            self.end.format("%H:%M"),
        );
        if self.end.date() != self.start.date() {
            s.push_str(&format!(" ({})", self.end.format("%Y-%m-%d")));
        }
        if let Some(loc) = &self.location {
            s.push_str(&format!(" at {loc}"));
        }
        s
    }

    fn validate(&self) -> Result<(), CalendarError> {
        if self.start >= self.end {
            return Err(CalendarError::InvalidUpdate(format!(
                "start {} is not before end {}",
                self.start.format("%Y-%m-%d %H:%M"),
                self.end.format("%Y-%m-%d %H:%M")
            )));
        }
        Ok(())
    }
}

/// Fixed "now" of a dialogue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clock {
    pub now: NaiveDateTime,
}

/// Default reference time: Sunday 2023-01-01 09:00.
pub const DEFAULT_NOW: &str = "2023-01-01T09:00";

impl Default for Clock {
    fn default() -> Self {
        Clock { now: parse_iso(DEFAULT_NOW).expect("valid default timestamp") }
    }
}

impl Clock {
    pub fn at(now: NaiveDateTime) -> Self {
        Clock { now }
    }

    pub fn parse(s: &str) -> Result<Self, String> {
        parse_iso(s).map(Clock::at)
    }

    pub fn today(&self) -> NaiveDate {
        self.now.date()
    }

    pub fn tomorrow(&self) -> NaiveDate {
        self.today() + Duration::days(1)
    }

    /// The next date strictly after today that falls on `day`.
    pub fn next_dow(&self, day: Weekday) -> NaiveDate {
        let mut d = self.today() + Duration::days(1);
        while d.weekday() != day {
            d += Duration::days(1);
        }
        d
    }
}

pub fn parse_weekday(name: &str) -> Option<Weekday> {
    match name.to_ascii_lowercase().as_str() {
        "monday" | "mon" => Some(Weekday::Mon),
        "tuesday" | "tue" => Some(Weekday::Tue),
        "wednesday" | "wed" => Some(Weekday::Wed),
        "thursday" | "thu" => Some(Weekday::Thu),
        "friday" | "fri" => Some(Weekday::Fri),
        "saturday" | "sat" => Some(Weekday::Sat),
        "sunday" | "sun" => Some(Weekday::Sun),
        _ => None,
    }
}

/// How an hour was stated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HourSpec {
    Am(u32),
    Pm(u32),
    /// No meridiem given ("at 3").
    Bare(u32),
    /// Already on the 24-hour clock.
    H24(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartialTime {
    pub hour: HourSpec,
    pub minute: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PartialDateTime {
    pub date: Option<NaiveDate>,
    pub time: Option<PartialTime>,
}

impl From<NaiveDateTime> for PartialDateTime {
    fn from(dt: NaiveDateTime) -> Self {
        use chrono::Timelike;
        PartialDateTime {
            date: Some(dt.date()),
            time: Some(PartialTime { hour: HourSpec::H24(dt.hour()), minute: dt.minute() }),
        }
    }
}

/// Resolves an hour to the 24-hour clock. Without a meridiem, 8-11 are
/// morning hours, 1-7 afternoon hours and 12 is noon.
pub fn resolve_hour(hour: HourSpec) -> Result<u32, CalendarError> {
    let twelve = |h: u32| {
        if (1..=12).contains(&h) {
            Ok(h)
        } else {
            Err(CalendarError::InvalidTime(format!("hour {h} is outside 1-12")))
        }
    };
    match hour {
        HourSpec::Am(h) => twelve(h).map(|h| h % 12),
        HourSpec::Pm(h) => twelve(h).map(|h| h % 12 + 12),
        HourSpec::Bare(h) => match h {
            8..=12 => Ok(h),
            1..=7 => Ok(h + 12),
            0 | 13..=23 => Ok(h),
            _ => Err(CalendarError::InvalidTime(format!("hour {h} is outside 0-23"))),
        },
        HourSpec::H24(h) if h < 24 => Ok(h),
        HourSpec::H24(h) => Err(CalendarError::InvalidTime(format!("hour {h} is outside 0-23"))),
    }
}

pub fn resolve_time(t: PartialTime) -> Result<NaiveTime, CalendarError> {
    let hour = resolve_hour(t.hour)?;
    NaiveTime::from_hms_opt(hour, t.minute, 0)
        .ok_or_else(|| CalendarError::InvalidTime(format!("minute {} is outside 0-59", t.minute)))
}

/// Completes a partial date-time: a missing date becomes today, a missing
/// time becomes 00:00, and a bare hour is resolved with the meridiem rule of
/// [`resolve_hour`].
pub fn fill_defaults(partial: PartialDateTime, clock: &Clock) -> Result<NaiveDateTime, CalendarError> {
    if partial.date.is_none() && partial.time.is_none() {
        return Err(CalendarError::EmptySpec);
    }
    let date = partial.date.unwrap_or_else(|| clock.today());
    let time = match partial.time {
        Some(t) => resolve_time(t)?,
        None => NaiveTime::MIN,
    };
    Ok(date.and_time(time))
}

/// A temporal field constraint on an event start or end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeBound {
    Day(NaiveDate),
    At(NaiveDateTime),
}

impl TimeBound {
    fn matches(&self, t: NaiveDateTime) -> bool {
        match self {
            TimeBound::Day(d) => t.date() == *d,
            TimeBound::At(at) => t == *at,
        }
    }
}

/// Store query derived from an `Event` constraint.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventQuery {
    pub id: Option<i64>,
    pub subject: Option<String>,
    pub location: Option<String>,
    pub start: Option<TimeBound>,
    pub end: Option<TimeBound>,
}

fn time_bound(value: &Value, clock: &Clock) -> Option<TimeBound> {
    match value {
        Value::Date(d) => Some(TimeBound::Day(*d)),
        Value::DateTime(dt) => Some(TimeBound::At(*dt)),
        Value::Time(t) => Some(TimeBound::At(clock.today().and_time(*t))),
        _ => None,
    }
}

impl EventQuery {
    pub fn from_spec(spec: &ConstraintSpec, clock: &Clock) -> Result<Self, CalendarError> {
        let mut q = EventQuery::default();
        for (field, value) in &spec.fields {
            let FieldSpec::Value(v) = value else {
                return Err(CalendarError::UnsupportedField(field.clone()));
            };
            let bad = || CalendarError::UnsupportedField(format!("{field}={v}"));
            match (field.as_str(), v) {
                ("id", Value::Int(i)) => q.id = Some(*i),
                ("subject", Value::Str(s)) => q.subject = Some(s.clone()),
                ("location", Value::Str(s)) => q.location = Some(s.clone()),
                ("start", v) => q.start = Some(time_bound(v, clock).ok_or_else(bad)?),
                ("end", v) => q.end = Some(time_bound(v, clock).ok_or_else(bad)?),
                _ => return Err(bad()),
            }
        }
        Ok(q)
    }

    /// Subject is a case-insensitive substring match, location a
    /// case-insensitive equality.
    pub fn matches(&self, e: &Event) -> bool {
        self.id.is_none_or(|id| e.id == id)
            && self.subject.as_ref().is_none_or(|s| e.subject.to_lowercase().contains(&s.to_lowercase()))
            && self.location.as_ref().is_none_or(|l| e.location.as_ref().is_some_and(|el| el.eq_ignore_ascii_case(l)))
            && self.start.is_none_or(|b| b.matches(e.start))
            && self.end.is_none_or(|b| b.matches(e.end))
    }
}

fn field_value<'a>(spec: &'a ConstraintSpec, name: &str) -> Result<Option<&'a Value>, CalendarError> {
    match spec.field(name) {
        None => Ok(None),
        Some(FieldSpec::Value(v)) => Ok(Some(v)),
        Some(_) => Err(CalendarError::UnsupportedField(name.to_string())),
    }
}

fn string_field(spec: &ConstraintSpec, name: &str) -> Result<Option<String>, CalendarError> {
    match field_value(spec, name)? {
        None => Ok(None),
        Some(Value::Str(s)) => Ok(Some(s.clone())),
        Some(other) => Err(CalendarError::UnsupportedField(format!("{name}={other}"))),
    }
}

/// Places a date/time/date-time value relative to a reference date-time:
/// a time keeps the reference date, a date keeps the reference time.
fn anchor(value: &Value, reference: NaiveDateTime, field: &str) -> Result<NaiveDateTime, CalendarError> {
    match value {
        Value::DateTime(dt) => Ok(*dt),
        Value::Date(d) => Ok(d.and_time(reference.time())),
        Value::Time(t) => Ok(reference.date().and_time(*t)),
        other => Err(CalendarError::UnsupportedField(format!("{field}={other}"))),
    }
}

fn check_fields(spec: &ConstraintSpec, allowed: &[&str]) -> Result<(), CalendarError> {
    match spec.fields.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
        Some((k, _)) => Err(CalendarError::UnsupportedField(k.clone())),
        None => Ok(()),
    }
}

/// Applies a change constraint to an event, keeping unchanged fields. A new
/// start given as a time keeps the event's date; a new end given as a time
/// lands on the (new) start date.
pub fn apply_changes(event: &Event, changes: &ConstraintSpec) -> Result<Event, CalendarError> {
    if changes.fields.is_empty() {
        return Err(CalendarError::InvalidUpdate("no changes given".into()));
    }
    check_fields(changes, &["subject", "location", "start", "end"])?;
    let mut updated = event.clone();
    if let Some(s) = string_field(changes, "subject")? {
        updated.subject = s;
    }
    if let Some(l) = string_field(changes, "location")? {
        updated.location = Some(l);
    }
    if let Some(v) = field_value(changes, "start")? {
        updated.start = anchor(v, event.start, "start")?;
    }
    if let Some(v) = field_value(changes, "end")? {
        let reference = updated.start.date().and_time(event.end.time());
        updated.end = anchor(v, reference, "end")?;
    }
    updated.validate()?;
    Ok(updated)
}

/// Builds a proposed event from a creation constraint. Missing start is the
/// clock's now, a start given as a time is today, missing end is start plus
/// the default duration.
pub fn event_from_spec(id: i64, spec: &ConstraintSpec, clock: &Clock) -> Result<Event, CalendarError> {
    check_fields(spec, &["subject", "location", "start", "end"])?;
    let subject = string_field(spec, "subject")?;
    let start_value = field_value(spec, "start")?;
    if subject.is_none() && start_value.is_none() {
        return Err(CalendarError::InvalidUpdate("a new event needs a subject or a start".into()));
    }
    let start = match start_value {
        Some(v) => anchor(v, clock.today().and_time(NaiveTime::MIN), "start")?,
        None => clock.now,
    };
    let end = match field_value(spec, "end")? {
        Some(v) => anchor(v, start, "end")?,
        None => start + Duration::minutes(DEFAULT_DURATION_MINUTES),
    };
    let event = Event {
        id,
        subject: subject.unwrap_or_else(|| "New event".to_string()),
        start,
        end,
        location: string_field(spec, "location")?,
    };
    event.validate()?;
    Ok(event)
}

/// In-memory stand-in for the external calendar service.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EventStore {
    events: BTreeMap<i64, Event>,
    next_id: i64,
    /// Number of successful insert/update/delete calls.
    #[serde(skip)]
    mutations: u64,
}

impl PartialEq for EventStore {
    fn eq(&self, other: &Self) -> bool {
        self.events == other.events && self.next_id == other.next_id
    }
}

impl EventStore {
    pub fn from_events(events: Vec<Event>) -> Result<Self, CalendarError> {
        let mut store = EventStore::default();
        for e in events {
            e.validate()?;
            if store.events.contains_key(&e.id) {
                return Err(CalendarError::DuplicateId(e.id));
            }
            store.next_id = store.next_id.max(e.id + 1);
            store.events.insert(e.id, e);
        }
        Ok(store)
    }

    /// Fixture format: a JSON array of `{id, subject, start, end, location}`.
    pub fn from_json(text: &str) -> Result<Self, CalendarError> {
        let events: Vec<Event> = serde_json::from_str(text).map_err(|e| CalendarError::Fixture(e.to_string()))?;
        Self::from_events(events)
    }

    pub fn load(path: &Path) -> Result<Self, CalendarError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CalendarError::Fixture(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn next_id(&self) -> i64 {
        self.next_id
    }

    pub fn mutations(&self) -> u64 {
        self.mutations
    }

    pub fn get(&self, id: i64) -> Option<&Event> {
        self.events.get(&id)
    }

    pub fn events(&self) -> impl Iterator<Item = &Event> {
        self.events.values()
    }

    /// Matching events in id order.
    pub fn find(&self, query: &EventQuery) -> Vec<Event> {
        self.events.values().filter(|e| query.matches(e)).cloned().collect()
    }

    /// Inserts with the next free id, ignoring `event.id`.
    pub fn insert(&mut self, mut event: Event) -> Result<Event, CalendarError> {
        event.validate()?;
        event.id = self.next_id;
        self.next_id += 1;
        self.events.insert(event.id, event.clone());
        self.mutations += 1;
        Ok(event)
    }

    pub fn replace(&mut self, event: Event) -> Result<(), CalendarError> {
        event.validate()?;
        match self.events.get_mut(&event.id) {
            Some(slot) => {
                *slot = event;
                self.mutations += 1;
                Ok(())
            }
            None => Err(CalendarError::EventVanished(event.id)),
        }
    }

    pub fn remove(&mut self, id: i64) -> Result<Event, CalendarError> {
        let e = self.events.remove(&id).ok_or(CalendarError::EventVanished(id))?;
        self.mutations += 1;
        Ok(e)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.events.values().collect::<Vec<_>>()).expect("events serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dt(s: &str) -> NaiveDateTime {
        parse_iso(s).unwrap()
    }

    fn clock() -> Clock {
        Clock::parse("2023-01-01T09:00").unwrap()
    }

    fn t(h: u32, m: u32) -> NaiveTime {
        NaiveTime::from_hms_opt(h, m, 0).unwrap()
    }

    /// Independent table of the meridiem rule, hour by hour.
    fn bare_hour_oracle(h: u32) -> u32 {
        const TABLE: [(u32, u32); 12] = [
            (1, 13),
            (2, 14),
            (3, 15),
            (4, 16),
            (5, 17),
            (6, 18),
            (7, 19),
            (8, 8),
            (9, 9),
            (10, 10),
            (11, 11),
            (12, 12),
        ];
        TABLE.iter().find(|(k, _)| *k == h).map(|(_, v)| *v).unwrap()
    }

    #[test]
    fn fill_defaults_rules() {
        let c = clock();
        let ten = PartialDateTime { date: None, time: Some(PartialTime { hour: HourSpec::H24(10), minute: 0 }) };
        assert_eq!(fill_defaults(ten, &c).unwrap(), dt("2023-01-01T10:00"));
        for h in 1..=12 {
            let p = PartialDateTime { date: None, time: Some(PartialTime { hour: HourSpec::Bare(h), minute: 0 }) };
            assert_eq!(fill_defaults(p, &c).unwrap().time(), t(bare_hour_oracle(h), 0), "bare hour {h}");
        }
        let full = PartialDateTime::from(dt("2023-03-04T03:15"));
        assert_eq!(fill_defaults(full, &c).unwrap(), dt("2023-03-04T03:15"));
        let date_only = PartialDateTime { date: Some(c.tomorrow()), time: None };
        assert_eq!(fill_defaults(date_only, &c).unwrap(), dt("2023-01-02T00:00"));
        assert_eq!(fill_defaults(PartialDateTime::default(), &c), Err(CalendarError::EmptySpec));
    }

    #[test]
    fn am_pm_hours() {
        assert_eq!(resolve_hour(HourSpec::Am(12)).unwrap(), 0);
        assert_eq!(resolve_hour(HourSpec::Pm(12)).unwrap(), 12);
        assert_eq!(resolve_hour(HourSpec::Pm(2)).unwrap(), 14);
        assert!(resolve_hour(HourSpec::Am(13)).is_err());
        assert!(resolve_hour(HourSpec::Pm(0)).is_err());
    }

    #[test]
    fn next_dow_is_strictly_after_today() {
        let c = clock();
        assert_eq!(c.next_dow(Weekday::Sun), NaiveDate::from_ymd_opt(2023, 1, 8).unwrap());
        assert_eq!(c.next_dow(Weekday::Mon), NaiveDate::from_ymd_opt(2023, 1, 2).unwrap());
    }

    fn store() -> EventStore {
        EventStore::from_json(
            r#"[
            {"id": 1, "subject": "Standup", "start": "2023-01-02T10:00", "end": "2023-01-02T10:30"},
            {"id": 2, "subject": "Brunch", "start": "2023-01-08T10:00", "end": "2023-01-08T10:30", "location": "Jeffs"},
            {"id": 3, "subject": "Team lunch", "start": "2023-01-02T12:00", "end": "2023-01-02T13:00", "location": "Cafe"}
        ]"#,
        )
        .unwrap()
    }

    #[test]
    fn queries() {
        let s = store();
        let c = clock();
        let all = EventQuery::from_spec(&ConstraintSpec::of("Event"), &c).unwrap();
        assert_eq!(s.find(&all).len(), 3);
        let jeffs = ConstraintSpec::of("Event").with("location", Value::Str("jeffs".into()));
        let found = s.find(&EventQuery::from_spec(&jeffs, &c).unwrap());
        assert_eq!(found.iter().map(|e| e.id).collect::<Vec<_>>(), [2]);
        let tomorrow_ten = ConstraintSpec::of("Event").with("start", Value::DateTime(dt("2023-01-02T10:00")));
        assert_eq!(s.find(&EventQuery::from_spec(&tomorrow_ten, &c).unwrap()).len(), 1);
        let tomorrow = ConstraintSpec::of("Event").with("start", Value::Date(c.tomorrow()));
        assert_eq!(s.find(&EventQuery::from_spec(&tomorrow, &c).unwrap()).len(), 2);
        let lunch = ConstraintSpec::of("Event").with("subject", Value::Str("LUNCH".into()));
        assert_eq!(s.find(&EventQuery::from_spec(&lunch, &c).unwrap())[0].id, 3);
        let bad = ConstraintSpec::of("Event").with("colour", Value::Str("red".into()));
        assert!(EventQuery::from_spec(&bad, &c).is_err());
    }

    #[test]
    fn updates_keep_unchanged_fields() {
        let s = store();
        let brunch = s.get(2).unwrap();
        let changes =
            ConstraintSpec::of("Event").with("start", Value::Time(t(10, 0))).with("end", Value::Time(t(14, 0)));
        let updated = apply_changes(brunch, &changes).unwrap();
        assert_eq!(updated.start, dt("2023-01-08T10:00"));
        assert_eq!(updated.end, dt("2023-01-08T14:00"));
        assert_eq!(updated.location.as_deref(), Some("Jeffs"));
        assert!(matches!(apply_changes(brunch, &ConstraintSpec::of("Event")), Err(CalendarError::InvalidUpdate(_))));
        let backwards = ConstraintSpec::of("Event").with("end", Value::Time(t(9, 0)));
        assert!(matches!(apply_changes(brunch, &backwards), Err(CalendarError::InvalidUpdate(_))));
    }

    #[test]
    fn create_defaults_duration() {
        let c = clock();
        let spec = ConstraintSpec::of("Event")
            .with("subject", Value::Str("Gym".into()))
            .with("start", Value::DateTime(dt("2023-01-03T18:00")));
        let e = event_from_spec(9, &spec, &c).unwrap();
        assert_eq!(e.end, dt("2023-01-03T18:30"));
        let at_time = ConstraintSpec::of("Event").with("start", Value::Time(t(15, 0)));
        assert_eq!(event_from_spec(9, &at_time, &c).unwrap().start, dt("2023-01-01T15:00"));
    }

    #[test]
    fn store_mutations() {
        let mut s = store();
        assert_eq!(s.next_id(), 4);
        let e = s.insert(s.get(1).unwrap().clone()).unwrap();
        assert_eq!(e.id, 4);
        assert_eq!(s.len(), 4);
        s.remove(4).unwrap();
        assert_eq!(s.remove(4), Err(CalendarError::EventVanished(4)));
        assert_eq!(s.mutations(), 2);
        assert!(EventStore::from_json(
            r#"[{"id":1,"subject":"x","start":"2023-01-01T10:00","end":"2023-01-01T09:00"}]"#
        )
        .is_err());
    }
}
