//! Seeded generation of valid consent records for property tests.

use consent27560::model::{
    ConsentEvent, ConsentRecord, DurationValue, EntityRef, IsoDuration, PersonalDataItem, Process,
    StorageCondition, Term, Timestamp,
};
use consent27560::serialization;
use consent27560::Registry;
use chrono::{DateTime, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FULL_RECORD_JSON: &str = include_str!("../../fixtures/full-record.json");
pub const RECORD_JSON: &str = include_str!("../../fixtures/consent-record.json");
pub const RECEIPT_JSON: &str = include_str!("../../fixtures/consent-receipt.json");

pub fn term(raw: &str) -> Term {
    Term::parse(raw, Registry::builtin()).expect("registered term")
}

pub fn entity_ref(raw: &str) -> EntityRef {
    EntityRef::parse(raw, Registry::builtin())
}

pub fn full_record() -> ConsentRecord {
    let doc = serialization::parse_document(FULL_RECORD_JSON).expect("fixture json");
    serialization::parse_record(&doc).expect("fixture record").value
}

pub fn example_record() -> ConsentRecord {
    let doc = serialization::parse_document(RECORD_JSON).expect("fixture json");
    serialization::parse_record(&doc).expect("fixture record").value
}

const PURPOSES: &[&str] =
    &["dpv:PaymentManagement", "dpv:IdentityVerification", "dpv:Marketing", "dpv:ServiceProvision"];
const PROCESSING_OPS: &[&str] = &["dpv:Collect", "dpv:Store", "dpv:Use", "dpv:Share"];
const LOCATIONS: &[&str] = &["loc:IE", "loc:FR", "loc:DE", "loc:EU"];
const CONSENT_TYPES: &[&str] =
    &["eu-gdpr:A6-1-a", "eu-gdpr:A9-2-a", "dpv:ExpressedConsent", "dpv:ExplicitlyExpressedConsent"];
const DURATIONS: &[&str] = &["P6M", "P12M", "P30D", "P1Y"];

/// Seeded generator of profile-valid records, varied around the
/// full-coverage fixture.
pub struct Generator {
    pub rng: ChaCha8Rng,
    template: ConsentRecord,
    counter: u64,
}

impl Generator {
    pub fn new(seed: u64) -> Generator {
        Generator { rng: ChaCha8Rng::seed_from_u64(seed), template: full_record(), counter: 0 }
    }

    fn hex(&mut self, len: usize) -> String {
        (0..len).map(|_| char::from_digit(self.rng.gen_range(0..16), 16).unwrap()).collect()
    }

    fn subset<'a>(&mut self, pool: &[&'a str], min: usize) -> Vec<&'a str> {
        let n = self.rng.gen_range(min..=pool.len());
        let mut choices = pool.to_vec();
        choices.shuffle(&mut self.rng);
        choices.truncate(n.max(min));
        choices
    }

    fn instant(&mut self) -> DateTime<Utc> {
        let year = self.rng.gen_range(2023..=2025);
        let month = self.rng.gen_range(1..=12);
        let day = self.rng.gen_range(1..=28);
        let (h, m, s) =
            (self.rng.gen_range(0..24), self.rng.gen_range(0..60), self.rng.gen_range(0..60));
        Utc.with_ymd_and_hms(year, month, day, h, m, s).unwrap()
    }

    fn personal_data_item(&mut self) -> PersonalDataItem {
        let registry = Registry::builtin();
        let kind = self.rng.gen_range(0..4);
        let (data_type, identifier, literal_value) = match kind {
            0 => ("pd:EmailAddress", None, Some(format!("user{}@example.com", self.counter))),
            1 => ("pd:OfficialID", Some(format!("ID-{}", self.hex(8)).to_uppercase()), None),
            2 => ("pd:Contact", None, None),
            _ => ("pd:Health", None, None),
        };
        let data_types = vec![term(data_type)];
        let sensitivity = data_types
            .iter()
            .find(|t| t.in_taxonomy("dpv:SensitivePersonalData", registry))
            .cloned();
        let necessity = match self.rng.gen_range(0..3) {
            0 => Some(term("dpv:Required")),
            1 => Some(term("dpv:Optional")),
            _ => None,
        };
        let source = match self.rng.gen_range(0..3) {
            0 => Some(entity_ref("dpv:DataSubject")),
            1 => Some(entity_ref("ex:Acme")),
            _ => None,
        };
        PersonalDataItem {
            data_types,
            identifier,
            literal_value,
            necessity,
            sensitivity,
            source,
            extensions: Vec::new(),
        }
    }

    fn process(&mut self, gdpr: bool) -> Process {
        let mut process = Process::default();
        process.purposes = self.subset(PURPOSES, 1).into_iter().map(term).collect();
        process.processing_operations =
            self.subset(PROCESSING_OPS, 0).into_iter().map(term).collect();
        process.recipients = vec![entity_ref("ex:Acme")];
        if self.rng.gen_bool(0.2) {
            // Local override of the record-level controller default.
            process.data_controllers = vec![entity_ref("ex:Beta")];
        }
        if gdpr || self.rng.gen_bool(0.5) {
            let basis = CONSENT_TYPES[self.rng.gen_range(0..2)];
            process.legal_bases = vec![term(basis)];
        }
        let items = self.rng.gen_range(1..=2);
        for _ in 0..items {
            let item = self.personal_data_item();
            process.personal_data.push(item);
        }
        process.storage_conditions = vec![
            StorageCondition {
                kind: term("dpv:StorageLocation"),
                locations: self.subset(LOCATIONS, 1).into_iter().map(term).collect(),
                duration: None,
                extensions: Vec::new(),
            },
            StorageCondition {
                kind: term("dpv:StorageDuration"),
                locations: Vec::new(),
                duration: Some(DurationValue::Iso(
                    IsoDuration::parse(DURATIONS[self.rng.gen_range(0..DURATIONS.len())]).unwrap(),
                )),
                extensions: Vec::new(),
            },
        ];
        if self.rng.gen_bool(0.3) {
            process.services = vec![format!("Service {}", self.counter)];
        }
        if self.rng.gen_bool(0.2) {
            process.geographic_restrictions = vec![term("loc:EU")];
        }
        process
    }

    fn event(
        &mut self,
        status: &str,
        at: DateTime<Utc>,
        consent_type: Option<&str>,
        duration: Option<&str>,
    ) -> ConsentEvent {
        let actor = if status == "dpv:ConsentRequested" {
            entity_ref("ex:Acme")
        } else {
            entity_ref("dpv:DataSubject")
        };
        ConsentEvent {
            status: Some(term(status)),
            consent_type: consent_type.map(term),
            extra_types: Vec::new(),
            event_time: Timestamp::from_instant(at),
            duration: duration
                .map(|d| DurationValue::Iso(IsoDuration::parse(d).expect("valid duration"))),
            actor: Some(actor),
            methods: vec!["Interaction in app".to_owned()],
            extensions: Vec::new(),
        }
    }

    /// A fresh record that passes its declared profile with zero errors.
    pub fn record(&mut self, gdpr: bool) -> ConsentRecord {
        self.counter += 1;
        let mut record = self.template.clone();

        let id = format!("{}-{}-{}", self.hex(8), self.hex(4), self.hex(12));
        record.record_ids = vec![id.clone()];
        record.iri = Some(format!("https://example.com/{id}"));
        record.schema_version =
            Some(term(if gdpr { "dpv-27560:record-eu-gdpr" } else { "dpv-27560:record" }));

        // Re-point the data subject (and its synthesized stub party) at a
        // fresh id drawn from a small pool so queries see repeats.
        let old_subject = record.data_subject.as_ref().expect("template subject").raw().to_owned();
        let subject = format!("subject-{:02}", self.rng.gen_range(0..20));
        for party in &mut record.parties {
            if party.id.as_deref() == Some(old_subject.as_str()) {
                party.id = Some(subject.clone());
            }
        }
        record.data_subject = Some(EntityRef::Id(subject));

        record.jurisdictions = self.subset(LOCATIONS, 1).into_iter().map(term).collect();
        let processes = self.rng.gen_range(1..=3);
        record.processes = (0..processes).map(|_| self.process(gdpr)).collect();

        for notice in &mut record.notices {
            notice.languages = self
                .subset(&["en", "de", "fr", "en-IE"], 1)
                .into_iter()
                .map(str::to_owned)
                .collect();
        }

        let t0 = self.instant();
        let t1 = t0 + chrono::Duration::days(1);
        let consent_type = CONSENT_TYPES[self.rng.gen_range(0..CONSENT_TYPES.len())];
        let validity = if self.rng.gen_bool(0.5) {
            Some(DURATIONS[self.rng.gen_range(0..DURATIONS.len())])
        } else {
            None
        };
        let mut events = vec![
            self.event("dpv:ConsentRequested", t0, None, None),
            self.event("dpv:ConsentGiven", t1, Some(consent_type), validity),
        ];
        if self.rng.gen_bool(0.3) {
            let t2 = t1 + chrono::Duration::days(self.rng.gen_range(1..30));
            events.push(self.event("dpv:ConsentWithdrawn", t2, None, None));
        }
        record.events = events;
        record
    }
}
