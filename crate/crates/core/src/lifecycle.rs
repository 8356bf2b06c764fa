//! Consent-state machine over consent events: transition legality, event
//! appending, point-in-time status, and expiry derived from validity
//! durations.
//!
//! The transition table is a shipped data asset. `Expired` is always
//! derived from a duration, never stored as an event, so re-serializing a
//! record cannot materialize it.

use std::sync::OnceLock;

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::model::{ConsentEvent, ConsentRecord, DurationValue, Term};
use crate::vocabulary::Registry;

const TRANSITIONS_DATA: &str = include_str!("../data/transitions.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConsentState {
    Requested,
    Given,
    Refused,
    Withdrawn,
    Expired,
    Terminated,
    Invalidated,
    Reaffirmed,
    /// No event yet.
    Unknown,
}

impl ConsentState {
    pub const ALL: [ConsentState; 9] = [
        ConsentState::Requested,
        ConsentState::Given,
        ConsentState::Refused,
        ConsentState::Withdrawn,
        ConsentState::Expired,
        ConsentState::Terminated,
        ConsentState::Invalidated,
        ConsentState::Reaffirmed,
        ConsentState::Unknown,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConsentState::Requested => "Requested",
            ConsentState::Given => "Given",
            ConsentState::Refused => "Refused",
            ConsentState::Withdrawn => "Withdrawn",
            ConsentState::Expired => "Expired",
            ConsentState::Terminated => "Terminated",
            ConsentState::Invalidated => "Invalidated",
            ConsentState::Reaffirmed => "Reaffirmed",
            ConsentState::Unknown => "Unknown",
        }
    }

    pub fn parse(name: &str) -> Option<ConsentState> {
        ConsentState::ALL.iter().copied().find(|s| s.name().eq_ignore_ascii_case(name))
    }

    /// The DPV status term for this state, if one exists (`Unknown` has
    /// none).
    pub fn term(self) -> Option<Term> {
        if self == ConsentState::Unknown {
            return None;
        }
        let curie = match self {
            ConsentState::Requested => "dpv:ConsentRequested",
            ConsentState::Given => "dpv:ConsentGiven",
            ConsentState::Refused => "dpv:ConsentRefused",
            ConsentState::Withdrawn => "dpv:ConsentWithdrawn",
            ConsentState::Expired => "dpv:ConsentExpired",
            ConsentState::Terminated => "dpv:ConsentTerminated",
            ConsentState::Invalidated => "dpv:ConsentInvalidated",
            ConsentState::Reaffirmed => "dpv:ConsentReaffirmed",
            ConsentState::Unknown => unreachable!(),
        };
        Term::parse(curie, Registry::builtin()).ok()
    }

    /// Map a DPV consent-status term to a state.
    pub fn from_term(term: &Term) -> Option<ConsentState> {
        let registry = Registry::builtin();
        ConsentState::ALL
            .iter()
            .copied()
            .find(|s| s.term().is_some_and(|t| registry.is_in_taxonomy(term.iri(), t.iri()).unwrap_or(false)))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LifecycleError {
    #[error("illegal transition {from:?} -> {to:?}")]
    IllegalTransition { from: ConsentState, to: ConsentState },
    #[error("event time {event} precedes latest event {latest}")]
    NonMonotonicTime { event: String, latest: String },
    #[error("event has no consent status")]
    MissingStatus,
    #[error("transition table parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// The set of allowed (from, to) state transitions.
#[derive(Debug, Clone)]
pub struct TransitionTable {
    allowed: Vec<(ConsentState, ConsentState)>,
}

impl TransitionTable {
    pub fn parse(text: &str) -> Result<TransitionTable, LifecycleError> {
        let mut allowed = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| LifecycleError::Parse { line: idx + 1, message };
            let (from_s, to_s) = line
                .split_once("->")
                .ok_or_else(|| err("missing '->'".into()))?;
            let from = ConsentState::parse(from_s.trim())
                .ok_or_else(|| err(format!("unknown state '{}'", from_s.trim())))?;
            for part in to_s.split(',') {
                let to = ConsentState::parse(part.trim())
                    .ok_or_else(|| err(format!("unknown state '{}'", part.trim())))?;
                allowed.push((from, to));
            }
        }
        Ok(TransitionTable { allowed })
    }

    /// The table shipped with the crate.
    pub fn builtin() -> &'static TransitionTable {
        static TABLE: OnceLock<TransitionTable> = OnceLock::new();
        TABLE.get_or_init(|| TransitionTable::parse(TRANSITIONS_DATA).expect("shipped table is valid"))
    }

    pub fn is_allowed(&self, from: ConsentState, to: ConsentState) -> bool {
        self.allowed.contains(&(from, to))
    }

    pub fn allowed_from(&self, from: ConsentState) -> Vec<ConsentState> {
        let mut out: Vec<ConsentState> =
            self.allowed.iter().filter(|(f, _)| *f == from).map(|(_, t)| *t).collect();
        out.sort();
        out.dedup();
        out
    }
}

/// Transitions allowed out of `state` under the shipped table.
pub fn allowed_transitions(state: ConsentState) -> Vec<ConsentState> {
    TransitionTable::builtin().allowed_from(state)
}

/// Append a consent event. Strict mode enforces the transition table and
/// monotone event times; lenient mode records violations as annotations
/// on the returned record instead.
pub fn append_event(
    record: &ConsentRecord,
    event: ConsentEvent,
    strict: bool,
) -> Result<ConsentRecord, LifecycleError> {
    let status = event.status.as_ref().ok_or(LifecycleError::MissingStatus)?;
    let to = ConsentState::from_term(status).ok_or(LifecycleError::MissingStatus)?;

    let mut annotations = Vec::new();
    if let Some(latest) = record.ordered_events().last() {
        if event.event_time.instant() < latest.event_time.instant() {
            if strict {
                return Err(LifecycleError::NonMonotonicTime {
                    event: event.event_time.raw().to_owned(),
                    latest: latest.event_time.raw().to_owned(),
                });
            }
            annotations.push(format!(
                "non-monotonic event time {} (latest {})",
                event.event_time.raw(),
                latest.event_time.raw()
            ));
        }
    }

    let from = current_status(record, event.event_time.instant());
    if !TransitionTable::builtin().is_allowed(from, to) {
        if strict {
            return Err(LifecycleError::IllegalTransition { from, to });
        }
        annotations.push(format!("illegal transition {} -> {}", from.name(), to.name()));
    }

    let mut updated = record.clone();
    updated.events.push(event);
    updated.annotations.extend(annotations);
    Ok(updated)
}

/// The consent state at time `at`: the status of the latest event with
/// time ≤ `at`, except that a Given/Reaffirmed event with a validity
/// duration that has elapsed reads as Expired. Reaffirmation resets the
/// validity clock. `Unknown` when no event qualifies.
pub fn current_status(record: &ConsentRecord, at: DateTime<Utc>) -> ConsentState {
    let mut latest: Option<(&ConsentEvent, ConsentState)> = None;
    for event in record.ordered_events() {
        if event.event_time.instant() > at {
            break;
        }
        if let Some(state) = event.status.as_ref().and_then(ConsentState::from_term) {
            latest = Some((event, state));
        }
    }
    let Some((event, state)) = latest else {
        return ConsentState::Unknown;
    };
    if matches!(state, ConsentState::Given | ConsentState::Reaffirmed) {
        if let Some(DurationValue::Iso(duration)) = &event.duration {
            let expiry = duration.add_to(event.event_time.instant());
            if at > expiry {
                return ConsentState::Expired;
            }
        }
    }
    state
}
