//! Domain types for consent records and receipts.
//!
//! Values are immutable: lifecycle and redaction operations return new
//! values, so records are safe to share across threads.

use chrono::{DateTime, Datelike, Months, NaiveDate, NaiveDateTime, TimeZone, Utc};
use thiserror::Error;

use crate::json::JsonValue;
use crate::vocabulary::{Registry, VocabularyError};

/// Unknown keys retained verbatim through parse/serialize.
pub type ExtBag = Vec<(String, JsonValue)>;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("dangling reference '{0}'")]
    DanglingReference(String),
    #[error("ambiguous reference '{0}' ({1} matches)")]
    AmbiguousReference(String, usize),
    #[error("process index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("invalid timestamp '{0}'")]
    InvalidTimestamp(String),
    #[error("invalid duration '{0}'")]
    InvalidDuration(String),
}

/// A vocabulary term: original lexical form plus the expanded IRI.
/// Equality is by expanded IRI, case-sensitive.
#[derive(Debug, Clone)]
pub struct Term {
    raw: String,
    iri: String,
}

impl Term {
    pub fn parse(raw: &str, registry: &Registry) -> Result<Term, VocabularyError> {
        let iri = registry.expand(raw)?;
        Ok(Term { raw: raw.to_owned(), iri })
    }

    pub fn from_iri(iri: &str) -> Term {
        Term { raw: iri.to_owned(), iri: iri.to_owned() }
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn iri(&self) -> &str {
        &self.iri
    }

    pub fn is_known(&self, registry: &Registry) -> bool {
        registry.contains(&self.iri)
    }

    pub fn in_taxonomy(&self, root: &str, registry: &Registry) -> bool {
        registry.is_in_taxonomy(&self.iri, root).unwrap_or(false)
    }
}

impl PartialEq for Term {
    fn eq(&self, other: &Self) -> bool {
        self.iri == other.iri
    }
}
impl Eq for Term {}

/// An ISO 8601 timestamp. The original lexical form is retained for
/// round-tripping; date-only values normalize to midnight UTC for ordering.
#[derive(Debug, Clone)]
pub struct Timestamp {
    raw: String,
    instant: DateTime<Utc>,
    date_only: bool,
}

impl Timestamp {
    pub fn parse(raw: &str) -> Result<Timestamp, ModelError> {
        if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
            return Ok(Timestamp { raw: raw.to_owned(), instant: dt.with_timezone(&Utc), date_only: false });
        }
        if let Ok(dt) = NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M:%S") {
            return Ok(Timestamp { raw: raw.to_owned(), instant: Utc.from_utc_datetime(&dt), date_only: false });
        }
        if let Ok(d) = NaiveDate::parse_from_str(raw, "%Y-%m-%d") {
            let dt = d.and_hms_opt(0, 0, 0).expect("midnight exists");
            return Ok(Timestamp { raw: raw.to_owned(), instant: Utc.from_utc_datetime(&dt), date_only: true });
        }
        Err(ModelError::InvalidTimestamp(raw.to_owned()))
    }

    pub fn from_instant(instant: DateTime<Utc>) -> Timestamp {
        let raw = instant.format("%Y-%m-%dT%H:%M:%SZ").to_string();
        Timestamp { raw, instant, date_only: false }
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn instant(&self) -> DateTime<Utc> {
        self.instant
    }

    pub fn is_date_only(&self) -> bool {
        self.date_only
    }

    /// Normalized UTC form at seconds precision, used in canonical bytes.
    pub fn canonical_lexical(&self) -> String {
        self.instant.format("%Y-%m-%dT%H:%M:%SZ").to_string()
    }
}

impl PartialEq for Timestamp {
    fn eq(&self, other: &Self) -> bool {
        self.raw == other.raw
    }
}

/// Parsed ISO 8601 duration, e.g. "P6M" or "P1YT12H".
#[derive(Debug, Clone, PartialEq)]
pub struct IsoDuration {
    raw: String,
    pub years: u32,
    pub months: u32,
    pub weeks: u32,
    pub days: u32,
    pub hours: u32,
    pub minutes: u32,
    pub seconds: u32,
}

impl IsoDuration {
    pub fn parse(raw: &str) -> Result<IsoDuration, ModelError> {
        let err = || ModelError::InvalidDuration(raw.to_owned());
        let body = raw.strip_prefix('P').ok_or_else(err)?;
        if body.is_empty() {
            return Err(err());
        }
        let mut d = IsoDuration {
            raw: raw.to_owned(),
            years: 0,
            months: 0,
            weeks: 0,
            days: 0,
            hours: 0,
            minutes: 0,
            seconds: 0,
        };
        let (date_part, time_part) = match body.split_once('T') {
            Some((a, b)) => (a, Some(b)),
            None => (body, None),
        };
        let mut digits = String::new();
        for c in date_part.chars() {
            if c.is_ascii_digit() {
                digits.push(c);
            } else {
                let n: u32 = digits.parse().map_err(|_| err())?;
                digits.clear();
                match c {
                    'Y' => d.years = n,
                    'M' => d.months = n,
                    'W' => d.weeks = n,
                    'D' => d.days = n,
                    _ => return Err(err()),
                }
            }
        }
        if !digits.is_empty() {
            return Err(err());
        }
        if let Some(time) = time_part {
            if time.is_empty() {
                return Err(err());
            }
            for c in time.chars() {
                if c.is_ascii_digit() {
                    digits.push(c);
                } else {
                    let n: u32 = digits.parse().map_err(|_| err())?;
                    digits.clear();
                    match c {
                        'H' => d.hours = n,
                        'M' => d.minutes = n,
                        'S' => d.seconds = n,
                        _ => return Err(err()),
                    }
                }
            }
            if !digits.is_empty() {
                return Err(err());
            }
        }
        Ok(d)
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    /// Calendar-aware addition: whole months first (day clamped to the
    /// target month's length), then days and clock time.
    pub fn add_to(&self, start: DateTime<Utc>) -> DateTime<Utc> {
        let total_months = self.years * 12 + self.months;
        let with_months = start
            .checked_add_months(Months::new(total_months))
            .expect("date within supported range");
        let extra_secs = i64::from(self.weeks) * 7 * 86_400
            + i64::from(self.days) * 86_400
            + i64::from(self.hours) * 3_600
            + i64::from(self.minutes) * 60
            + i64::from(self.seconds);
        with_months + chrono::Duration::seconds(extra_secs)
    }
}

/// A validity or storage duration: either a calendar duration or an
/// open-ended "until event" marker.
#[derive(Debug, Clone, PartialEq)]
pub enum DurationValue {
    Iso(IsoDuration),
    UntilEvent { label: String },
}

/// Reference to a party: an identifier (local id or IRI) or a role term
/// that resolves to the unique party holding that role.
#[derive(Debug, Clone, PartialEq)]
pub enum EntityRef {
    Id(String),
    Role(Term),
}

impl EntityRef {
    /// Classify a string reference: registered entity-role terms become
    /// role references, everything else is an identifier.
    pub fn parse(raw: &str, registry: &Registry) -> EntityRef {
        if let Ok(term) = Term::parse(raw, registry) {
            if term.is_known(registry) && term.in_taxonomy("dpv:Entity", registry) {
                return EntityRef::Role(term);
            }
        }
        EntityRef::Id(raw.to_owned())
    }

    pub fn raw(&self) -> &str {
        match self {
            EntityRef::Id(id) => id,
            EntityRef::Role(term) => term.raw(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Contact {
    pub postal_addresses: Vec<String>,
    pub emails: Vec<String>,
    pub phones: Vec<String>,
    pub urls: Vec<String>,
    pub extensions: ExtBag,
}

/// A party. `declared` distinguishes full party declarations (subject to
/// the Table 5 cardinalities) from stubs synthesized for bare references.
#[derive(Debug, Clone, PartialEq)]
pub struct Entity {
    pub id: Option<String>,
    pub identifiers: Vec<String>,
    pub names: Vec<String>,
    pub roles: Vec<Term>,
    pub contacts: Vec<Contact>,
    pub declared: bool,
    pub extensions: ExtBag,
}

impl Entity {
    pub fn stub(id: &str, role: Option<Term>) -> Entity {
        Entity {
            id: Some(id.to_owned()),
            identifiers: Vec::new(),
            names: Vec::new(),
            roles: role.into_iter().collect(),
            contacts: Vec::new(),
            declared: false,
            extensions: Vec::new(),
        }
    }

    /// All identifier forms this entity answers to.
    pub fn identifier_count(&self) -> usize {
        self.identifiers.len() + usize::from(self.id.is_some())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonalDataItem {
    pub data_types: Vec<Term>,
    pub identifier: Option<String>,
    pub literal_value: Option<String>,
    pub necessity: Option<Term>,
    pub sensitivity: Option<Term>,
    pub source: Option<EntityRef>,
    pub extensions: ExtBag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StorageCondition {
    pub kind: Term,
    pub locations: Vec<Term>,
    pub duration: Option<DurationValue>,
    pub extensions: ExtBag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessingCondition {
    pub kind: Term,
    pub locations: Vec<Term>,
    pub duration: Option<DurationValue>,
    pub extensions: ExtBag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoticeRef {
    pub id: Option<String>,
    pub kind: Option<Term>,
    pub date: Option<Timestamp>,
    pub languages: Vec<String>,
    pub coverage: Option<String>,
    pub extensions: ExtBag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RightRef {
    pub kinds: Vec<Term>,
    pub title: Option<String>,
    pub exercised_at: Option<String>,
    pub extensions: ExtBag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvolvementControl {
    pub kinds: Vec<Term>,
    pub exercised_at: Option<String>,
    pub extensions: ExtBag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssessmentRef {
    pub kinds: Vec<Term>,
    pub url: Option<String>,
    pub extensions: ExtBag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsentEvent {
    pub status: Option<Term>,
    pub consent_type: Option<Term>,
    /// Additional `@type` entries that are neither a status nor a consent
    /// type, retained for round-tripping.
    pub extra_types: Vec<Term>,
    pub event_time: Timestamp,
    pub duration: Option<DurationValue>,
    pub actor: Option<EntityRef>,
    pub methods: Vec<String>,
    pub extensions: ExtBag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Process {
    pub purposes: Vec<Term>,
    pub personal_data: Vec<PersonalDataItem>,
    pub processing_operations: Vec<Term>,
    pub data_controllers: Vec<EntityRef>,
    pub recipients: Vec<EntityRef>,
    pub legal_bases: Vec<Term>,
    pub storage_conditions: Vec<StorageCondition>,
    pub processing_conditions: Vec<ProcessingCondition>,
    pub geographic_restrictions: Vec<Term>,
    pub data_sources: Vec<EntityRef>,
    pub services: Vec<String>,
    pub codes_of_conduct: Vec<String>,
    pub extensions: ExtBag,
}

impl Default for Process {
    fn default() -> Self {
        Process {
            purposes: Vec::new(),
            personal_data: Vec::new(),
            processing_operations: Vec::new(),
            data_controllers: Vec::new(),
            recipients: Vec::new(),
            legal_bases: Vec::new(),
            storage_conditions: Vec::new(),
            processing_conditions: Vec::new(),
            geographic_restrictions: Vec::new(),
            data_sources: Vec::new(),
            services: Vec::new(),
            codes_of_conduct: Vec::new(),
            extensions: Vec::new(),
        }
    }
}

/// One data subject's consent documentation: metadata, processing,
/// parties, and consent events.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsentRecord {
    pub iri: Option<String>,
    pub schema_version: Option<Term>,
    pub record_ids: Vec<String>,
    pub data_subject: Option<EntityRef>,
    /// Record-level defaults inherited by every process (process-local
    /// values take precedence; lists are replaced, not unioned).
    pub controllers: Vec<EntityRef>,
    pub processors: Vec<EntityRef>,
    pub record_legal_basis: Vec<Term>,
    pub record_recipients: Vec<EntityRef>,
    pub record_storage_conditions: Vec<StorageCondition>,
    pub jurisdictions: Vec<Term>,
    pub applicable_law: Vec<Term>,
    pub processes: Vec<Process>,
    pub notices: Vec<NoticeRef>,
    pub rights: Vec<RightRef>,
    pub involvement_controls: Vec<InvolvementControl>,
    pub impact_assessments: Vec<AssessmentRef>,
    pub events: Vec<ConsentEvent>,
    pub parties: Vec<Entity>,
    /// In-memory annotations (e.g. lenient-mode lifecycle warnings).
    /// Never serialized.
    pub annotations: Vec<String>,
    pub extensions: ExtBag,
}

impl ConsentRecord {
    pub fn primary_id(&self) -> Option<&str> {
        self.record_ids.first().map(String::as_str)
    }

    /// Find the unique entity a reference points at.
    pub fn entity_lookup(&self, entity_ref: &EntityRef) -> Result<&Entity, ModelError> {
        let matches: Vec<&Entity> = match entity_ref {
            EntityRef::Id(id) => self
                .parties
                .iter()
                .filter(|e| {
                    e.id.as_deref() == Some(id.as_str()) || e.identifiers.iter().any(|i| i == id)
                })
                .collect(),
            EntityRef::Role(term) => {
                let registry = Registry::builtin();
                self.parties
                    .iter()
                    .filter(|e| {
                        e.roles
                            .iter()
                            .any(|r| registry.is_in_taxonomy(r.iri(), term.iri()).unwrap_or(false))
                    })
                    .collect()
            }
        };
        match matches.len() {
            0 => Err(ModelError::DanglingReference(entity_ref.raw().to_owned())),
            1 => Ok(matches[0]),
            n => Err(ModelError::AmbiguousReference(entity_ref.raw().to_owned(), n)),
        }
    }

    /// The process at `index` with record-level defaults merged in.
    pub fn resolve_process_view(&self, index: usize) -> Result<Process, ModelError> {
        let process = self.processes.get(index).ok_or(ModelError::IndexOutOfRange(index))?;
        let mut merged = process.clone();
        if merged.data_controllers.is_empty() {
            merged.data_controllers = self.controllers.clone();
        }
        if merged.legal_bases.is_empty() {
            merged.legal_bases = self.record_legal_basis.clone();
        }
        if merged.recipients.is_empty() {
            merged.recipients = self.record_recipients.clone();
        }
        if merged.storage_conditions.is_empty() {
            merged.storage_conditions = self.record_storage_conditions.clone();
        }
        Ok(merged)
    }

    /// Events ordered by normalized time, ties broken by insertion order.
    pub fn ordered_events(&self) -> Vec<&ConsentEvent> {
        let mut events: Vec<&ConsentEvent> = self.events.iter().collect();
        events.sort_by_key(|e| e.event_time.instant());
        events
    }
}

/// An authoritative copy of one or more consent records.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsentReceipt {
    pub iri: Option<String>,
    pub schema_version: Option<Term>,
    pub receipt_ids: Vec<String>,
    pub records: Vec<ConsentRecord>,
    pub created: Option<Timestamp>,
    pub publisher: Option<EntityRef>,
    pub recipient: Option<EntityRef>,
    pub extensions: ExtBag,
}

impl ConsentReceipt {
    pub fn primary_id(&self) -> Option<&str> {
        self.receipt_ids.first().map(String::as_str)
    }
}

/// A parsed record or receipt, for operations accepting either.
#[derive(Debug, Clone, PartialEq)]
pub enum ConsentDocument {
    Record(ConsentRecord),
    Receipt(ConsentReceipt),
}

impl ConsentDocument {
    pub fn primary_id(&self) -> Option<&str> {
        match self {
            ConsentDocument::Record(r) => r.primary_id(),
            ConsentDocument::Receipt(r) => r.primary_id(),
        }
    }

    pub fn schema_version(&self) -> Option<&Term> {
        match self {
            ConsentDocument::Record(r) => r.schema_version.as_ref(),
            ConsentDocument::Receipt(r) => r.schema_version.as_ref(),
        }
    }
}

/// Day-clamped month arithmetic helper exposed for date computations.
pub fn days_in_month(year: i32, month: u32) -> u32 {
    let (next_y, next_m) = if month == 12 { (year + 1, 1) } else { (year, month + 1) };
    NaiveDate::from_ymd_opt(next_y, next_m, 1)
        .expect("valid month start")
        .pred_opt()
        .expect("previous day exists")
        .day()
}
