//! The four shipped conformance profiles, the cardinality/taxonomy
//! validation engine, and the machine-readable crosswalk between
//! ISO-27560 clauses, ISO-29184 clauses, and GDPR articles.
//!
//! Profiles are plain data files using a one-constraint-per-line grammar,
//! so additional schemas can be added without code changes. Severity
//! policy: cardinality and taxonomy violations are errors; unknown terms
//! and unrecognized extra fields are warnings.

use std::sync::OnceLock;

use thiserror::Error;

use crate::model::{ConsentDocument, ConsentRecord, ConsentReceipt, Entity, Term};
use crate::vocabulary::Registry;

const PROFILE_FILES: [&str; 4] = [
    include_str!("../data/profile-record.txt"),
    include_str!("../data/profile-record-eu-gdpr.txt"),
    include_str!("../data/profile-receipt.txt"),
    include_str!("../data/profile-receipt-eu-gdpr.txt"),
];

const CROSSWALK_DATA: &str = include_str!("../data/crosswalk.tsv");

#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("unknown profile '{0}'")]
    UnknownProfile(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("profile parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Where a constraint is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    /// Once per record.
    Record,
    /// Per process, after record-level defaults are merged in.
    Process,
    /// Per declared party.
    Entity,
    /// Per consent event.
    Event,
    /// Per personal-data item.
    DataItem,
    /// Per notice.
    Notice,
    /// Once per receipt.
    Receipt,
}

impl Scope {
    fn parse(s: &str) -> Option<Scope> {
        Some(match s {
            "record" => Scope::Record,
            "process" => Scope::Process,
            "entity" => Scope::Entity,
            "event" => Scope::Event,
            "data-item" => Scope::DataItem,
            "notice" => Scope::Notice,
            "receipt" => Scope::Receipt,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldConstraint {
    pub path: String,
    pub min: u32,
    /// None means unbounded.
    pub max: Option<u32>,
    pub scope: Scope,
    /// Taxonomy root every value must fall under.
    pub taxonomy: Option<String>,
    /// At least one value (across the record) must fall under this root.
    pub contains: Option<String>,
    /// Event-scope only: constraint applies when the event status is one
    /// of these.
    pub when_status: Vec<String>,
    /// GDPR citations attached to findings raised by this constraint.
    pub gdpr_refs: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileTarget {
    Record,
    Receipt,
}

#[derive(Debug, Clone)]
pub struct Profile {
    pub id: String,
    pub shortname: String,
    pub target: ProfileTarget,
    pub base: Option<String>,
    /// Effective constraints after resolving `@extends`.
    pub constraints: Vec<FieldConstraint>,
    /// Constraints declared in this profile's own file (the delta over
    /// the base profile).
    pub own_constraints: Vec<FieldConstraint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Finding {
    pub severity: Severity,
    pub path: String,
    pub rule: String,
    pub message: String,
    pub gdpr_refs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
    pub passed: bool,
}

impl ValidationReport {
    fn finish(mut findings: Vec<Finding>) -> ValidationReport {
        findings.sort_by(|a, b| a.path.cmp(&b.path).then_with(|| a.rule.cmp(&b.rule)));
        let passed = !findings.iter().any(|f| f.severity == Severity::Error);
        ValidationReport { findings, passed }
    }

    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity == Severity::Error)
    }
}

fn parse_profile(text: &str) -> Result<Profile, ProfileError> {
    let mut id = None;
    let mut shortname = None;
    let mut target = None;
    let mut base = None;
    let mut own = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| ProfileError::Parse { line: idx + 1, message };
        if let Some(rest) = line.strip_prefix("@profile ") {
            id = Some(rest.trim().to_owned());
            continue;
        }
        if let Some(rest) = line.strip_prefix("@shortname ") {
            shortname = Some(rest.trim().to_owned());
            continue;
        }
        if let Some(rest) = line.strip_prefix("@target ") {
            target = Some(match rest.trim() {
                "record" => ProfileTarget::Record,
                "receipt" => ProfileTarget::Receipt,
                other => return Err(err(format!("unknown target '{other}'"))),
            });
            continue;
        }
        if let Some(rest) = line.strip_prefix("@extends ") {
            base = Some(rest.trim().to_owned());
            continue;
        }
        let mut parts = line.split_whitespace();
        let path = parts.next().ok_or_else(|| err("missing path".into()))?.to_owned();
        let card = parts.next().ok_or_else(|| err("missing cardinality".into()))?;
        let (min_s, max_s) = card
            .split_once("..")
            .ok_or_else(|| err(format!("bad cardinality '{card}'")))?;
        let min: u32 = min_s.parse().map_err(|_| err(format!("bad min '{min_s}'")))?;
        let max = if max_s == "n" {
            None
        } else {
            Some(max_s.parse::<u32>().map_err(|_| err(format!("bad max '{max_s}'")))?)
        };
        if let Some(m) = max {
            if min > m {
                return Err(err(format!("min {min} > max {m}")));
            }
        }
        let mut constraint = FieldConstraint {
            path,
            min,
            max,
            scope: Scope::Record,
            taxonomy: None,
            contains: None,
            when_status: Vec::new(),
            gdpr_refs: Vec::new(),
        };
        for opt in parts {
            let (key, value) = opt
                .split_once('=')
                .ok_or_else(|| err(format!("bad option '{opt}'")))?;
            match key {
                "scope" => {
                    constraint.scope = Scope::parse(value)
                        .ok_or_else(|| err(format!("unknown scope '{value}'")))?
                }
                "taxonomy" => constraint.taxonomy = Some(value.to_owned()),
                "contains" => constraint.contains = Some(value.to_owned()),
                "when-status" => {
                    constraint.when_status = value.split(',').map(str::to_owned).collect()
                }
                "gdpr" => constraint.gdpr_refs = value.split(',').map(str::to_owned).collect(),
                other => return Err(err(format!("unknown option '{other}'"))),
            }
        }
        own.push(constraint);
    }
    let id = id.ok_or(ProfileError::Parse { line: 0, message: "missing @profile".into() })?;
    let shortname =
        shortname.ok_or(ProfileError::Parse { line: 0, message: "missing @shortname".into() })?;
    let target =
        target.ok_or(ProfileError::Parse { line: 0, message: "missing @target".into() })?;
    Ok(Profile { id, shortname, target, base, constraints: own.clone(), own_constraints: own })
}

/// The four shipped profiles, `@extends` resolved.
pub fn profiles() -> &'static [Profile] {
    static PROFILES: OnceLock<Vec<Profile>> = OnceLock::new();
    PROFILES.get_or_init(|| {
        let mut parsed: Vec<Profile> =
            PROFILE_FILES.iter().map(|f| parse_profile(f).expect("shipped profile is valid")).collect();
        // Resolve extension: child constraints override same-path base
        // constraints; new paths are appended. Single level is enough for
        // the shipped set.
        for i in 0..parsed.len() {
            if let Some(base_id) = parsed[i].base.clone() {
                let base = parsed
                    .iter()
                    .find(|p| p.id == base_id)
                    .expect("base profile present")
                    .clone();
                let own = parsed[i].own_constraints.clone();
                let mut merged = base.constraints.clone();
                for constraint in own {
                    match merged.iter_mut().find(|c| c.path == constraint.path) {
                        Some(slot) => *slot = constraint,
                        None => merged.push(constraint),
                    }
                }
                parsed[i].constraints = merged;
            }
        }
        parsed
    })
}

/// Look up a profile by IRI, CURIE, or shortname.
pub fn profile(name: &str) -> Result<&'static Profile, ProfileError> {
    let expanded = Registry::builtin().expand(name).unwrap_or_else(|_| name.to_owned());
    profiles()
        .iter()
        .find(|p| p.id == expanded || p.shortname == name)
        .ok_or_else(|| ProfileError::UnknownProfile(name.to_owned()))
}

/// The record profile whose embedded records a receipt profile validates
/// against.
pub fn record_profile_for_receipt(receipt_profile: &Profile) -> &'static Profile {
    let shortname = match receipt_profile.shortname.as_str() {
        "receipt-eu-gdpr" => "record-eu-gdpr",
        _ => "record",
    };
    profile(shortname).expect("shipped record profile")
}

/// One counted occurrence of a constrained field.
struct Instance {
    path: String,
    count: usize,
    terms: Vec<Term>,
}

fn term_instance(path: &str, terms: &[Term]) -> Instance {
    Instance { path: path.to_owned(), count: terms.len(), terms: terms.to_vec() }
}

fn opt_instance(path: &str, present: bool) -> Instance {
    Instance { path: path.to_owned(), count: usize::from(present), terms: Vec::new() }
}

fn count_instance(path: &str, count: usize) -> Instance {
    Instance { path: path.to_owned(), count, terms: Vec::new() }
}

fn declared_parties(record: &ConsentRecord) -> Vec<(usize, &Entity)> {
    record.parties.iter().filter(|e| e.declared).enumerate().collect()
}

/// Enumerate the occurrences of `path` in `record` for counting.
/// Unknown paths yield no instances (the constraint is vacuously met for
/// min 0 and reported as absent otherwise).
fn instances(record: &ConsentRecord, constraint: &FieldConstraint) -> Vec<Instance> {
    let registry = Registry::builtin();
    let path = constraint.path.as_str();
    match constraint.scope {
        Scope::Record => vec![match path {
            "metadata.schema_version" => Instance {
                path: path.to_owned(),
                count: usize::from(record.schema_version.is_some()),
                terms: record.schema_version.iter().cloned().collect(),
            },
            "metadata.record_ids" => count_instance(path, record.record_ids.len()),
            "metadata.data_subject" => opt_instance(path, record.data_subject.is_some()),
            "processing.processes" => count_instance(path, record.processes.len()),
            "processing.jurisdictions" => term_instance(path, &record.jurisdictions),
            "processing.notices" => count_instance(path, record.notices.len()),
            "processing.rights" => Instance {
                path: path.to_owned(),
                count: record.rights.len(),
                terms: record.rights.iter().flat_map(|r| r.kinds.clone()).collect(),
            },
            "processing.involvement_controls" => Instance {
                path: path.to_owned(),
                count: record.involvement_controls.len(),
                terms: record.involvement_controls.iter().flat_map(|c| c.kinds.clone()).collect(),
            },
            "processing.impact_assessments" => Instance {
                path: path.to_owned(),
                count: record.impact_assessments.len(),
                terms: record.impact_assessments.iter().flat_map(|a| a.kinds.clone()).collect(),
            },
            "event.events" => count_instance(path, record.events.len()),
            _ => count_instance(path, 0),
        }],
        Scope::Process => {
            let field = path.strip_prefix("processing.").unwrap_or(path);
            (0..record.processes.len())
                .map(|i| {
                    let merged = record.resolve_process_view(i).expect("index in range");
                    let prefix = format!("processes[{i}].{field}");
                    match field {
                        "purposes" => term_instance(&prefix, &merged.purposes),
                        "personal_data" => count_instance(&prefix, merged.personal_data.len()),
                        "processing_operations" => {
                            term_instance(&prefix, &merged.processing_operations)
                        }
                        "storage_conditions" => Instance {
                            path: prefix,
                            count: merged.storage_conditions.len(),
                            terms: merged.storage_conditions.iter().map(|c| c.kind.clone()).collect(),
                        },
                        "processing_conditions" => Instance {
                            path: prefix,
                            count: merged.processing_conditions.len(),
                            terms: merged
                                .processing_conditions
                                .iter()
                                .map(|c| c.kind.clone())
                                .collect(),
                        },
                        "geographic_restrictions" => {
                            term_instance(&prefix, &merged.geographic_restrictions)
                        }
                        "data_controllers" => count_instance(&prefix, merged.data_controllers.len()),
                        "legal_bases" => term_instance(&prefix, &merged.legal_bases),
                        "recipients" => count_instance(&prefix, merged.recipients.len()),
                        "data_sources" => count_instance(
                            &prefix,
                            merged.data_sources.len()
                                + merged
                                    .personal_data
                                    .iter()
                                    .filter(|d| d.source.is_some())
                                    .count(),
                        ),
                        "services" => count_instance(&prefix, merged.services.len()),
                        "codes_of_conduct" => count_instance(&prefix, merged.codes_of_conduct.len()),
                        _ => count_instance(&prefix, 0),
                    }
                })
                .collect()
        }
        Scope::DataItem => {
            let field = path.strip_prefix("processing.").unwrap_or(path);
            let mut out = Vec::new();
            for (i, process) in record.processes.iter().enumerate() {
                for (j, item) in process.personal_data.iter().enumerate() {
                    let prefix = format!("processes[{i}].personal_data[{j}].{field}");
                    out.push(match field {
                        "personal_data_type" => term_instance(&prefix, &item.data_types),
                        "personal_data_identifier" => {
                            opt_instance(&prefix, item.identifier.is_some())
                        }
                        "personal_data_necessity" => Instance {
                            path: prefix,
                            count: usize::from(item.necessity.is_some()),
                            terms: item.necessity.iter().cloned().collect(),
                        },
                        "sensitive_category" => Instance {
                            path: prefix,
                            count: usize::from(item.sensitivity.is_some()),
                            terms: item.sensitivity.iter().cloned().collect(),
                        },
                        _ => count_instance(&prefix, 0),
                    });
                }
            }
            out
        }
        Scope::Entity => {
            let field = path.strip_prefix("party.").unwrap_or(path);
            declared_parties(record)
                .into_iter()
                .map(|(i, entity)| {
                    let prefix = format!("parties[{i}].{field}");
                    match field {
                        "names" => count_instance(&prefix, entity.names.len()),
                        "identifiers" => count_instance(&prefix, entity.identifier_count()),
                        "roles" => term_instance(&prefix, &entity.roles),
                        "contacts" => count_instance(&prefix, entity.contacts.len()),
                        "postal_address" => count_instance(
                            &prefix,
                            entity.contacts.iter().map(|c| c.postal_addresses.len()).sum(),
                        ),
                        "email" => count_instance(
                            &prefix,
                            entity.contacts.iter().map(|c| c.emails.len()).sum(),
                        ),
                        "phone" => count_instance(
                            &prefix,
                            entity.contacts.iter().map(|c| c.phones.len()).sum(),
                        ),
                        "url" => count_instance(
                            &prefix,
                            entity.contacts.iter().map(|c| c.urls.len()).sum(),
                        ),
                        _ => count_instance(&prefix, 0),
                    }
                })
                .collect()
        }
        Scope::Event => {
            let field = path.strip_prefix("event.").unwrap_or(path);
            record
                .events
                .iter()
                .enumerate()
                .filter(|(_, event)| {
                    if constraint.when_status.is_empty() {
                        return true;
                    }
                    event.status.as_ref().is_some_and(|s| {
                        constraint.when_status.iter().any(|w| {
                            registry
                                .expand(w)
                                .map(|iri| iri == s.iri())
                                .unwrap_or(false)
                        })
                    })
                })
                .map(|(i, event)| {
                    let prefix = format!("events[{i}].{field}");
                    match field {
                        "status" => Instance {
                            path: prefix,
                            count: usize::from(event.status.is_some()),
                            terms: event.status.iter().cloned().collect(),
                        },
                        "consent_type" => Instance {
                            path: prefix,
                            count: usize::from(event.consent_type.is_some()),
                            terms: event.consent_type.iter().cloned().collect(),
                        },
                        "event_time" => count_instance(&prefix, 1),
                        "duration" => opt_instance(&prefix, event.duration.is_some()),
                        "actor" => opt_instance(&prefix, event.actor.is_some()),
                        "method" => count_instance(&prefix, event.methods.len()),
                        _ => count_instance(&prefix, 0),
                    }
                })
                .collect()
        }
        Scope::Notice => {
            let field = path.strip_prefix("processing.").unwrap_or(path);
            record
                .notices
                .iter()
                .enumerate()
                .map(|(i, notice)| {
                    let prefix = format!("notices[{i}].{field}");
                    match field {
                        "notice_language" => count_instance(&prefix, notice.languages.len()),
                        _ => count_instance(&prefix, 0),
                    }
                })
                .collect()
        }
        Scope::Receipt => Vec::new(),
    }
}

fn check_constraint(record: &ConsentRecord, constraint: &FieldConstraint, findings: &mut Vec<Finding>) {
    let registry = Registry::builtin();
    let occurrences = instances(record, constraint);
    let mut all_terms: Vec<Term> = Vec::new();
    for instance in &occurrences {
        if (instance.count as u32) < constraint.min {
            findings.push(Finding {
                severity: Severity::Error,
                path: instance.path.clone(),
                rule: format!("cardinality:{}", constraint.path),
                message: format!(
                    "{} requires at least {} value(s), found {}",
                    constraint.path, constraint.min, instance.count
                ),
                gdpr_refs: constraint.gdpr_refs.clone(),
            });
        }
        if let Some(max) = constraint.max {
            if instance.count as u32 > max {
                findings.push(Finding {
                    severity: Severity::Error,
                    path: instance.path.clone(),
                    rule: format!("cardinality:{}", constraint.path),
                    message: format!(
                        "{} allows at most {} value(s), found {}",
                        constraint.path, max, instance.count
                    ),
                    gdpr_refs: constraint.gdpr_refs.clone(),
                });
            }
        }
        if let Some(root) = &constraint.taxonomy {
            for term in &instance.terms {
                if !term.is_known(registry) {
                    findings.push(Finding {
                        severity: Severity::Warning,
                        path: instance.path.clone(),
                        rule: format!("unknown-term:{}", constraint.path),
                        message: format!("unknown term '{}'", term.raw()),
                        gdpr_refs: Vec::new(),
                    });
                } else if !term.in_taxonomy(root, registry) {
                    findings.push(Finding {
                        severity: Severity::Error,
                        path: instance.path.clone(),
                        rule: format!("taxonomy:{}", constraint.path),
                        message: format!("'{}' is not a {root} term", term.raw()),
                        gdpr_refs: constraint.gdpr_refs.clone(),
                    });
                }
            }
        }
        all_terms.extend(instance.terms.iter().cloned());
    }
    if let Some(target) = &constraint.contains {
        let found = all_terms.iter().any(|t| t.in_taxonomy(target, registry));
        if !found {
            findings.push(Finding {
                severity: Severity::Error,
                path: constraint.path.clone(),
                rule: format!("contains:{}", constraint.path),
                message: format!("{} must include a {target} value", constraint.path),
                gdpr_refs: constraint.gdpr_refs.clone(),
            });
        }
    }
}

fn validate_record_against(record: &ConsentRecord, profile: &Profile) -> Vec<Finding> {
    let mut findings = Vec::new();
    for constraint in &profile.constraints {
        check_constraint(record, constraint, &mut findings);
    }
    for (key, _) in &record.extensions {
        findings.push(Finding {
            severity: Severity::Warning,
            path: key.clone(),
            rule: "extension".into(),
            message: format!("unrecognized field '{key}' retained as extension"),
            gdpr_refs: Vec::new(),
        });
    }
    for (i, notice) in record.notices.iter().enumerate() {
        for lang in &notice.languages {
            if !is_bcp47_shaped(lang) {
                findings.push(Finding {
                    severity: Severity::Warning,
                    path: format!("notices[{i}].notice_language"),
                    rule: "language-shape".into(),
                    message: format!("'{lang}' is not a BCP-47-shaped language tag"),
                    gdpr_refs: Vec::new(),
                });
            }
        }
    }
    findings
}

fn is_bcp47_shaped(tag: &str) -> bool {
    let mut parts = tag.split('-');
    let Some(first) = parts.next() else { return false };
    if !(2..=8).contains(&first.len()) || !first.chars().all(|c| c.is_ascii_alphabetic()) {
        return false;
    }
    parts.all(|p| (1..=8).contains(&p.len()) && p.chars().all(|c| c.is_ascii_alphanumeric()))
}

fn validate_receipt_against(receipt: &ConsentReceipt, profile: &Profile) -> Vec<Finding> {
    let mut findings = Vec::new();
    for constraint in &profile.constraints {
        if constraint.scope != Scope::Receipt {
            continue;
        }
        let count = match constraint.path.as_str() {
            "metadata.schema_version" => usize::from(receipt.schema_version.is_some()),
            "metadata.receipt_ids" => receipt.receipt_ids.len(),
            "metadata.records" => receipt.records.len(),
            _ => 0,
        };
        if (count as u32) < constraint.min {
            findings.push(Finding {
                severity: Severity::Error,
                path: constraint.path.clone(),
                rule: format!("cardinality:{}", constraint.path),
                message: format!(
                    "{} requires at least {} value(s), found {}",
                    constraint.path, constraint.min, count
                ),
                gdpr_refs: constraint.gdpr_refs.clone(),
            });
        }
        if let Some(max) = constraint.max {
            if count as u32 > max {
                findings.push(Finding {
                    severity: Severity::Error,
                    path: constraint.path.clone(),
                    rule: format!("cardinality:{}", constraint.path),
                    message: format!(
                        "{} allows at most {} value(s), found {}",
                        constraint.path, max, count
                    ),
                    gdpr_refs: constraint.gdpr_refs.clone(),
                });
            }
        }
    }
    let record_profile = record_profile_for_receipt(profile);
    for (i, record) in receipt.records.iter().enumerate() {
        for finding in validate_record_against(record, record_profile) {
            findings.push(Finding { path: format!("records[{i}].{}", finding.path), ..finding });
        }
    }
    findings
}

/// Validate a document against one of the shipped profiles. Embedded
/// records of a receipt are validated against the corresponding record
/// profile. Findings are ordered by document path.
pub fn validate(doc: &ConsentDocument, profile_name: &str) -> Result<ValidationReport, ProfileError> {
    let profile = profile(profile_name)?;
    let findings = match (doc, profile.target) {
        (ConsentDocument::Record(record), ProfileTarget::Record) => {
            validate_record_against(record, profile)
        }
        (ConsentDocument::Receipt(receipt), ProfileTarget::Receipt) => {
            validate_receipt_against(receipt, profile)
        }
        (ConsentDocument::Record(_), ProfileTarget::Receipt) => {
            return Err(ProfileError::TypeMismatch(format!(
                "consent record validated against receipt profile '{}'",
                profile.shortname
            )))
        }
        (ConsentDocument::Receipt(_), ProfileTarget::Record) => {
            return Err(ProfileError::TypeMismatch(format!(
                "consent receipt validated against record profile '{}'",
                profile.shortname
            )))
        }
    };
    Ok(ValidationReport::finish(findings))
}

pub fn validate_record(record: &ConsentRecord, profile_name: &str) -> Result<ValidationReport, ProfileError> {
    validate(&ConsentDocument::Record(record.clone()), profile_name)
}

pub fn validate_receipt(receipt: &ConsentReceipt, profile_name: &str) -> Result<ValidationReport, ProfileError> {
    validate(&ConsentDocument::Receipt(receipt.clone()), profile_name)
}

/// The constraints record-eu-gdpr adds over the base record profile.
pub fn gdpr_profile_delta() -> Vec<FieldConstraint> {
    profile("record-eu-gdpr").expect("shipped profile").own_constraints.clone()
}

// ---------------------------------------------------------------------------
// Crosswalk
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct CrosswalkEntry {
    pub iso27560_clause: String,
    pub iso27560_name: String,
    pub iso29184_refs: Vec<String>,
    pub gdpr_refs: Vec<String>,
    pub note: String,
}

/// All crosswalk rows, in table order.
pub fn crosswalk() -> &'static [CrosswalkEntry] {
    static ENTRIES: OnceLock<Vec<CrosswalkEntry>> = OnceLock::new();
    ENTRIES.get_or_init(|| {
        CROSSWALK_DATA
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .map(|line| {
                let mut cols = line.split('\t');
                let clause = cols.next().unwrap_or_default().trim().to_owned();
                let name = cols.next().unwrap_or_default().trim().to_owned();
                let iso29184 = cols.next().unwrap_or_default().trim();
                let gdpr = cols.next().unwrap_or_default().trim();
                let note = cols.next().unwrap_or_default().trim().to_owned();
                let split = |s: &str, sep: char| -> Vec<String> {
                    if s == "-" || s.is_empty() {
                        Vec::new()
                    } else {
                        s.split(sep).map(|p| p.trim().to_owned()).collect()
                    }
                };
                CrosswalkEntry {
                    iso27560_clause: clause,
                    iso27560_name: name,
                    iso29184_refs: split(iso29184, ';'),
                    gdpr_refs: split(gdpr, ','),
                    note,
                }
            })
            .collect()
    })
}

fn normalize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Crosswalk entries matching a clause id, field name, or GDPR citation.
pub fn gdpr_requirements(clause_or_field: &str) -> Vec<&'static CrosswalkEntry> {
    let query = normalize(clause_or_field);
    crosswalk()
        .iter()
        .filter(|e| {
            e.iso27560_clause == clause_or_field
                || normalize(&e.iso27560_name) == query
                || e.gdpr_refs.iter().any(|r| r == clause_or_field)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_profiles_ship() {
        let names: Vec<&str> = profiles().iter().map(|p| p.shortname.as_str()).collect();
        assert_eq!(names, ["record", "record-eu-gdpr", "receipt", "receipt-eu-gdpr"]);
        for p in profiles() {
            assert!(p.id.starts_with("https://w3id.org/dpv/schema/dpv-27560#"));
        }
    }

    #[test]
    fn gdpr_profile_strengthens_base() {
        let base = profile("record").unwrap();
        let gdpr = profile("record-eu-gdpr").unwrap();
        // Every base constraint survives with min no lower than before.
        for c in &base.constraints {
            let g = gdpr.constraints.iter().find(|g| g.path == c.path).expect("path retained");
            assert!(g.min >= c.min, "{} weakened", c.path);
        }
        let delta = gdpr_profile_delta();
        let legal = delta.iter().find(|c| c.path == "processing.legal_bases").unwrap();
        assert_eq!(legal.min, 1);
        assert_eq!(legal.taxonomy.as_deref(), Some("dpv:Consent"));
        assert_eq!(
            base.constraints.iter().find(|c| c.path == "processing.legal_bases").unwrap().min,
            0
        );
    }

    #[test]
    fn unknown_profile_is_an_error() {
        assert!(matches!(profile("no-such"), Err(ProfileError::UnknownProfile(_))));
    }

    #[test]
    fn crosswalk_queries() {
        assert_eq!(crosswalk().len(), 51);
        let retention = gdpr_requirements("6.3.4.12");
        assert_eq!(retention.len(), 1);
        assert_eq!(retention[0].gdpr_refs, ["13-2a", "14-2a", "15-1d", "30-1f"]);
        let withdrawal = gdpr_requirements("withdrawal_method");
        assert_eq!(withdrawal.len(), 1);
        assert_eq!(withdrawal[0].iso27560_clause, "6.3.4.18");
        assert_eq!(withdrawal[0].gdpr_refs, ["R42", "7-3", "13-2c", "14-2d"]);
        assert!(gdpr_requirements("no-such-field").is_empty());
    }

    #[test]
    fn clause_ids_unique() {
        let mut seen = std::collections::HashSet::new();
        for entry in crosswalk() {
            assert!(seen.insert(entry.iso27560_clause.clone()), "{}", entry.iso27560_clause);
        }
    }
}
