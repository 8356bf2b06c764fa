//! Receipt issuance and completeness checking. A receipt is an
//! authoritative copy of one or more consent records provided to another
//! entity; issuance embeds record copies rather than references.

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::model::{ConsentRecord, ConsentReceipt, EntityRef, Term, Timestamp};
use crate::profiles::{
    self, record_profile_for_receipt, Finding, Profile, ProfileError, Severity, ValidationReport,
};
use crate::vocabulary::Registry;

#[derive(Debug, Error)]
pub enum ReceiptError {
    #[error("empty record set")]
    EmptyRecordSet,
    #[error("source record {index} fails validation")]
    InvalidSourceRecord { index: usize, report: ValidationReport },
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IssueMode {
    /// Embed records verbatim.
    Full,
    /// Strip fields whose record-profile cardinality minimum is 0.
    /// Event fields are kept: they are provenance, not optional extras.
    MandatoryOnly,
}

/// An issued receipt plus non-fatal warnings (e.g. cross-subject
/// aggregation).
#[derive(Debug)]
pub struct Issued {
    pub receipt: ConsentReceipt,
    pub warnings: Vec<String>,
}

fn record_profile_name(record: &ConsentRecord) -> &'static str {
    let gdpr_id = profiles::profile("record-eu-gdpr").expect("shipped profile").id.clone();
    match &record.schema_version {
        Some(term) if term.iri() == gdpr_id => "record-eu-gdpr",
        _ => "record",
    }
}

/// Issue a receipt covering `records`, stamped with the injected clock.
/// Every source record must pass its own declared profile. The receipt
/// profile is the GDPR variant iff all records are GDPR-profiled.
pub fn issue_receipt(
    records: &[ConsentRecord],
    receipt_id: &str,
    publisher: EntityRef,
    recipient: EntityRef,
    mode: IssueMode,
    now: DateTime<Utc>,
) -> Result<Issued, ReceiptError> {
    if records.is_empty() {
        return Err(ReceiptError::EmptyRecordSet);
    }
    let mut warnings = Vec::new();
    let mut all_gdpr = true;
    for (index, record) in records.iter().enumerate() {
        let profile_name = record_profile_name(record);
        if profile_name != "record-eu-gdpr" {
            all_gdpr = false;
        }
        let report = profiles::validate_record(record, profile_name)?;
        if !report.passed {
            return Err(ReceiptError::InvalidSourceRecord { index, report });
        }
    }

    let subjects: std::collections::BTreeSet<String> = records
        .iter()
        .filter_map(|r| r.data_subject.as_ref())
        .map(|s| s.raw().to_owned())
        .collect();
    if subjects.len() > 1 {
        warnings.push(format!(
            "receipt aggregates records of {} different data subjects",
            subjects.len()
        ));
    }

    let receipt_profile = if all_gdpr { "receipt-eu-gdpr" } else { "receipt" };
    let profile = profiles::profile(receipt_profile)?;
    let record_profile = record_profile_for_receipt(profile);

    let embedded: Vec<ConsentRecord> = records
        .iter()
        .map(|r| match mode {
            IssueMode::Full => r.clone(),
            IssueMode::MandatoryOnly => strip_optional(r, record_profile),
        })
        .collect();

    let registry = Registry::builtin();
    let receipt = ConsentReceipt {
        iri: None,
        schema_version: Some(
            Term::parse(&registry.compact(&profile.id), registry).expect("profile term"),
        ),
        receipt_ids: vec![receipt_id.to_owned()],
        records: embedded,
        created: Some(Timestamp::from_instant(now)),
        publisher: Some(publisher),
        recipient: Some(recipient),
        extensions: Vec::new(),
    };
    Ok(Issued { receipt, warnings })
}

/// Remove fields the record profile marks optional (minimum 0), plus
/// personal-data literal values. Cardinalities of mandatory fields are
/// untouched, so the result still passes the profile.
fn strip_optional(record: &ConsentRecord, profile: &Profile) -> ConsentRecord {
    let optional = |path: &str| {
        profile
            .constraints
            .iter()
            .find(|c| c.path == path)
            .map(|c| c.min == 0)
            .unwrap_or(false)
    };
    let mut out = record.clone();
    out.annotations.clear();
    if optional("processing.impact_assessments") {
        out.impact_assessments.clear();
    }
    if optional("processing.legal_bases") {
        out.record_legal_basis.clear();
    }
    for process in &mut out.processes {
        if optional("processing.legal_bases") {
            process.legal_bases.clear();
        }
        if optional("processing.processing_operations") {
            process.processing_operations.clear();
        }
        if optional("processing.processing_conditions") {
            process.processing_conditions.clear();
        }
        if optional("processing.geographic_restrictions") {
            process.geographic_restrictions.clear();
        }
        if optional("processing.data_sources") {
            process.data_sources.clear();
        }
        if optional("processing.services") {
            process.services.clear();
        }
        if optional("processing.codes_of_conduct") {
            process.codes_of_conduct.clear();
        }
        for item in &mut process.personal_data {
            item.literal_value = None;
            if optional("processing.personal_data_identifier") {
                item.identifier = None;
            }
            if optional("processing.personal_data_necessity") {
                item.necessity = None;
            }
            if optional("processing.data_sources") {
                item.source = None;
            }
        }
    }
    for entity in &mut out.parties {
        for contact in &mut entity.contacts {
            if optional("party.email") {
                contact.emails.clear();
            }
            if optional("party.phone") {
                contact.phones.clear();
            }
            if optional("party.url") {
                contact.urls.clear();
            }
        }
    }
    out
}

/// Table 7 metadata checks combined with the embedded-record mandatory
/// checks; never fails outright, the report carries the verdict.
pub fn receipt_completeness(receipt: &ConsentReceipt) -> ValidationReport {
    let profile_name = match &receipt.schema_version {
        Some(term) => {
            let compacted = Registry::builtin().compact(term.iri());
            match compacted.as_str() {
                "dpv-27560:receipt-eu-gdpr" => "receipt-eu-gdpr",
                _ => "receipt",
            }
        }
        None => "receipt",
    };
    match profiles::validate_receipt(receipt, profile_name) {
        Ok(report) => report,
        Err(e) => ValidationReport {
            findings: vec![Finding {
                severity: Severity::Error,
                path: String::new(),
                rule: "profile".into(),
                message: e.to_string(),
                gdpr_refs: Vec::new(),
            }],
            passed: false,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    use crate::serialization;

    fn fixture_record() -> ConsentRecord {
        let text = include_str!("../fixtures/consent-record.json");
        let doc = serialization::parse_document(text).unwrap();
        serialization::parse_record(&doc).unwrap().value
    }

    #[test]
    fn empty_record_set_is_rejected() {
        let publisher = EntityRef::Id("ex:Acme".into());
        let recipient = EntityRef::Id("0760c9ba".into());
        let now = Utc.with_ymd_and_hms(2024, 1, 31, 0, 0, 0).unwrap();
        assert!(matches!(
            issue_receipt(&[], "r1", publisher, recipient, IssueMode::Full, now),
            Err(ReceiptError::EmptyRecordSet)
        ));
    }

    #[test]
    fn mandatory_only_matches_shipped_receipt_shape() {
        let record = fixture_record();
        let registry = Registry::builtin();
        let publisher = EntityRef::Id("ex:Acme".into());
        let recipient = EntityRef::parse("dpv:DataSubject", registry);
        let now = Utc.with_ymd_and_hms(2024, 1, 31, 0, 0, 0).unwrap();
        let issued = issue_receipt(
            &[record],
            "receipt-asdmj1oasd",
            publisher,
            recipient,
            IssueMode::MandatoryOnly,
            now,
        )
        .unwrap();
        let receipt = issued.receipt;
        assert_eq!(receipt.primary_id(), Some("receipt-asdmj1oasd"));
        let embedded = &receipt.records[0];
        assert!(embedded.impact_assessments.is_empty());
        assert!(embedded.record_legal_basis.is_empty());
        for process in &embedded.processes {
            assert!(process.services.is_empty());
            for item in &process.personal_data {
                assert!(item.literal_value.is_none());
                assert!(item.identifier.is_none());
                assert!(item.necessity.is_none());
                assert!(item.source.is_none());
            }
        }
        // Events survive untouched, including the consent type.
        assert_eq!(embedded.events.len(), 2);
        assert!(embedded.events[0].consent_type.is_some());
        assert!(receipt_completeness(&receipt).passed);
    }

    #[test]
    fn full_mode_receipt_passes_receipt_profile() {
        let record = fixture_record();
        let publisher = EntityRef::Id("ex:Acme".into());
        let recipient = EntityRef::Id("0760c9ba".into());
        let now = Utc.with_ymd_and_hms(2024, 1, 31, 0, 0, 0).unwrap();
        let issued =
            issue_receipt(&[record], "r-full", publisher, recipient, IssueMode::Full, now).unwrap();
        let report = receipt_completeness(&issued.receipt);
        assert!(report.passed, "{:#?}", report.findings);
    }
}
