//! Parse and serialize records/receipts as compact JSON-LD under the
//! pinned context, including the canonical byte form used for hashing
//! and signing.
//!
//! No general JSON-LD expansion is performed: exactly the pinned context
//! (or an inline prefix map matching the registry) is supported. Canonical
//! mode emits UTF-8 with keys sorted by code point, all IRIs expanded,
//! arrays for every multi-cardinality field, and timestamps normalized to
//! UTC at seconds precision.

use thiserror::Error;

use crate::json::JsonValue;
use crate::model::*;
use crate::vocabulary::{is_absolute_iri, Registry};

/// IRI accepted for `@context` in input documents.
pub const PINNED_CONTEXT_IRI: &str = "https://w3id.org/dpv/schema/dpv-27560/context";

/// The pinned context document shipped with the crate.
pub const PINNED_CONTEXT_JSON: &str = include_str!("../data/context.json");

pub const RECORD_TYPE: &str = "dpv:ConsentRecord";
pub const RECEIPT_TYPE: &str = "dpv:ConsentReceipt";
/// Spelling variant accepted on input and corrected on output.
pub const RECEIPT_TYPE_VARIANT: &str = "dpv:ConsentRereceipt";

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("unknown context: {0}")]
    UnknownContext(String),
    #[error("document is not a consent record ({0})")]
    NotARecord(String),
    #[error("document is not a consent receipt ({0})")]
    NotAReceipt(String),
    #[error("duplicate key '{key}' at {path}")]
    DuplicateKey { path: String, key: String },
    #[error("malformed field at {path}: {message}")]
    MalformedField { path: String, message: String },
}

impl ParseError {
    fn prefixed(self, prefix: &str) -> ParseError {
        match self {
            ParseError::DuplicateKey { path, key } => {
                ParseError::DuplicateKey { path: join_path(prefix, &path), key }
            }
            ParseError::MalformedField { path, message } => {
                ParseError::MalformedField { path: join_path(prefix, &path), message }
            }
            other => other,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SerializeError {
    #[error("unserializable value: {0}")]
    UnserializableValue(String),
}

fn join_path(prefix: &str, path: &str) -> String {
    if path.is_empty() {
        prefix.to_owned()
    } else {
        format!("{prefix}.{path}")
    }
}

/// A parsed value plus non-fatal warnings collected along the way.
#[derive(Debug)]
pub struct Parsed<T> {
    pub value: T,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SerializeMode {
    Pretty,
    Canonical,
}

// Keys are matched by expanded IRI so documents may spell them as CURIEs
// under any registered prefix or as absolute IRIs.
struct Ctx<'a> {
    registry: &'a Registry,
    warnings: Vec<String>,
    parties: Vec<Entity>,
}

impl<'a> Ctx<'a> {
    fn new(registry: &'a Registry) -> Self {
        Ctx { registry, warnings: Vec::new(), parties: Vec::new() }
    }

    fn expand_key(&self, key: &str) -> String {
        if key == "type" {
            return "@type".to_owned();
        }
        if key.starts_with('@') {
            return key.to_owned();
        }
        self.registry.expand(key).unwrap_or_else(|_| key.to_owned())
    }

    fn warn(&mut self, path: &str, message: impl AsRef<str>) {
        self.warnings.push(format!("{path}: {}", message.as_ref()));
    }

    fn term(&mut self, raw: &str, path: &str) -> Result<Term, ParseError> {
        let term = Term::parse(raw, self.registry).map_err(|e| ParseError::MalformedField {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        if !term.is_known(self.registry) && !is_absolute_iri(raw) {
            self.warn(path, format!("unknown term '{raw}' retained as extension"));
        }
        Ok(term)
    }

    fn term_list(&mut self, value: &JsonValue, path: &str) -> Result<Vec<Term>, ParseError> {
        as_values(value)
            .iter()
            .map(|v| match v.as_str() {
                Some(s) => self.term(s, path),
                None => Err(ParseError::MalformedField {
                    path: path.to_owned(),
                    message: "expected a term string".into(),
                }),
            })
            .collect()
    }

    fn ensure_stub(&mut self, id: &str, role: Option<&str>) {
        let exists = self.parties.iter().any(|e| e.id.as_deref() == Some(id));
        if !exists {
            let role_term = role.and_then(|r| Term::parse(r, self.registry).ok());
            self.parties.push(Entity::stub(id, role_term));
        }
    }

    /// Parse an entity reference. String identifiers get a stub party with
    /// `default_role` so the reference resolves; inline objects become
    /// parties themselves.
    fn entity_ref(
        &mut self,
        value: &JsonValue,
        default_role: Option<&str>,
        path: &str,
    ) -> Result<EntityRef, ParseError> {
        match value {
            JsonValue::String(s) => {
                let entity_ref = EntityRef::parse(s, self.registry);
                if let EntityRef::Id(id) = &entity_ref {
                    self.ensure_stub(id, default_role);
                }
                Ok(entity_ref)
            }
            JsonValue::Object(_) => {
                let entity = self.entity(value, false, path)?;
                let id = entity.id.clone().ok_or_else(|| ParseError::MalformedField {
                    path: path.to_owned(),
                    message: "inline entity without @id".into(),
                })?;
                if !self.parties.iter().any(|e| e.id.as_deref() == Some(id.as_str())) {
                    self.parties.push(entity);
                }
                Ok(EntityRef::Id(id))
            }
            _ => Err(ParseError::MalformedField {
                path: path.to_owned(),
                message: "expected an entity reference".into(),
            }),
        }
    }

    fn entity_ref_list(
        &mut self,
        value: &JsonValue,
        default_role: Option<&str>,
        path: &str,
    ) -> Result<Vec<EntityRef>, ParseError> {
        as_values(value)
            .iter()
            .map(|v| self.entity_ref(v, default_role, path))
            .collect()
    }

    fn entity(&mut self, value: &JsonValue, declared: bool, path: &str) -> Result<Entity, ParseError> {
        let obj = expect_object(value, path)?;
        check_duplicates(obj, path)?;
        let mut entity = Entity {
            id: None,
            identifiers: Vec::new(),
            names: Vec::new(),
            roles: Vec::new(),
            contacts: Vec::new(),
            declared,
            extensions: Vec::new(),
        };
        for (key, v) in obj {
            let expanded = self.expand_key(key);
            match expanded.as_str() {
                "@id" => entity.id = v.as_str().map(str::to_owned),
                "@type" => entity.roles = self.term_list(v, &format!("{path}.@type"))?,
                k if k == keys().has_name => entity.names = string_list(v, &format!("{path}.names"))?,
                k if k == keys().has_identifier => {
                    entity.identifiers = string_list(v, &format!("{path}.identifiers"))?
                }
                k if k == keys().contact_point => {
                    for c in as_values(v) {
                        entity.contacts.push(self.contact(c, &format!("{path}.contacts"))?);
                    }
                }
                _ => entity.extensions.push((key.clone(), v.clone())),
            }
        }
        Ok(entity)
    }

    fn contact(&mut self, value: &JsonValue, path: &str) -> Result<Contact, ParseError> {
        let mut contact = Contact::default();
        match value {
            JsonValue::String(s) => contact.postal_addresses.push(s.clone()),
            JsonValue::Object(entries) => {
                check_duplicates(entries, path)?;
                for (key, v) in entries {
                    let expanded = self.expand_key(key);
                    match expanded.as_str() {
                        "@type" => {}
                        k if k == keys().postal_address => {
                            contact.postal_addresses = string_list(v, path)?
                        }
                        k if k == keys().email => contact.emails = string_list(v, path)?,
                        k if k == keys().telephone => contact.phones = string_list(v, path)?,
                        k if k == keys().url => contact.urls = string_list(v, path)?,
                        _ => contact.extensions.push((key.clone(), v.clone())),
                    }
                }
            }
            _ => {
                return Err(ParseError::MalformedField {
                    path: path.to_owned(),
                    message: "expected a contact point".into(),
                })
            }
        }
        Ok(contact)
    }

    fn duration(&mut self, value: &JsonValue, path: &str) -> Result<DurationValue, ParseError> {
        match value {
            JsonValue::String(s) => IsoDuration::parse(s).map(DurationValue::Iso).map_err(|e| {
                ParseError::MalformedField { path: path.to_owned(), message: e.to_string() }
            }),
            JsonValue::Object(_) => {
                let label = value
                    .get("rdf:value")
                    .or_else(|| value.get(&keys().rdf_value))
                    .and_then(JsonValue::as_str)
                    .ok_or_else(|| ParseError::MalformedField {
                        path: path.to_owned(),
                        message: "until-event duration without rdf:value".into(),
                    })?;
                Ok(DurationValue::UntilEvent { label: label.to_owned() })
            }
            _ => Err(ParseError::MalformedField {
                path: path.to_owned(),
                message: "expected a duration".into(),
            }),
        }
    }

    fn storage_condition(&mut self, value: &JsonValue, path: &str) -> Result<StorageCondition, ParseError> {
        let obj = expect_object(value, path)?;
        check_duplicates(obj, path)?;
        let mut kind: Option<Term> = None;
        let mut locations = Vec::new();
        let mut duration = None;
        let mut extensions = Vec::new();
        for (key, v) in obj {
            let expanded = self.expand_key(key);
            match expanded.as_str() {
                "@type" => {
                    let kinds = self.term_list(v, &format!("{path}.kind"))?;
                    kind = kinds.into_iter().next();
                }
                k if k == keys().has_location => {
                    locations = self.term_list(v, &format!("{path}.location"))?
                }
                k if k == keys().has_duration => {
                    duration = Some(self.duration(v, &format!("{path}.duration"))?)
                }
                _ => extensions.push((key.clone(), v.clone())),
            }
        }
        let kind = kind.ok_or_else(|| ParseError::MalformedField {
            path: path.to_owned(),
            message: "storage condition without @type".into(),
        })?;
        Ok(StorageCondition { kind, locations, duration, extensions })
    }

    fn processing_condition(
        &mut self,
        value: &JsonValue,
        path: &str,
    ) -> Result<ProcessingCondition, ParseError> {
        let sc = self.storage_condition(value, path)?;
        Ok(ProcessingCondition {
            kind: sc.kind,
            locations: sc.locations,
            duration: sc.duration,
            extensions: sc.extensions,
        })
    }

    fn personal_data(&mut self, value: &JsonValue, path: &str) -> Result<PersonalDataItem, ParseError> {
        let mut item = PersonalDataItem {
            data_types: Vec::new(),
            identifier: None,
            literal_value: None,
            necessity: None,
            sensitivity: None,
            source: None,
            extensions: Vec::new(),
        };
        match value {
            JsonValue::String(s) => {
                item.data_types.push(self.term(s, path)?);
            }
            JsonValue::Object(entries) => {
                check_duplicates(entries, path)?;
                for (key, v) in entries {
                    let expanded = self.expand_key(key);
                    match expanded.as_str() {
                        "@type" => item.data_types = self.term_list(v, &format!("{path}.data_type"))?,
                        k if k == keys().rdf_value => {
                            item.literal_value = v.as_str().map(str::to_owned)
                        }
                        k if k == keys().identifier => {
                            item.identifier = as_values(v)
                                .first()
                                .and_then(|x| x.as_str())
                                .map(str::to_owned)
                        }
                        k if k == keys().has_necessity => {
                            item.necessity = v
                                .as_str()
                                .map(|s| self.term(s, &format!("{path}.necessity")))
                                .transpose()?
                        }
                        k if k == keys().has_data_source => {
                            if let Some(first) = as_values(v).first() {
                                item.source =
                                    Some(self.entity_ref(first, None, &format!("{path}.source"))?)
                            }
                        }
                        _ => item.extensions.push((key.clone(), v.clone())),
                    }
                }
            }
            _ => {
                return Err(ParseError::MalformedField {
                    path: path.to_owned(),
                    message: "expected personal data".into(),
                })
            }
        }
        item.sensitivity = item
            .data_types
            .iter()
            .find(|t| t.in_taxonomy("dpv:SensitivePersonalData", self.registry))
            .cloned();
        Ok(item)
    }

    fn process(&mut self, value: &JsonValue, path: &str) -> Result<Process, ParseError> {
        let obj = expect_object(value, path)?;
        check_duplicates(obj, path)?;
        let mut process = Process::default();
        for (key, v) in obj {
            let expanded = self.expand_key(key);
            match expanded.as_str() {
                "@type" => {}
                k if k == keys().has_purpose => {
                    process.purposes = self.term_list(v, &format!("{path}.purposes"))?
                }
                k if k == keys().has_personal_data => {
                    for (i, item) in as_values(v).iter().enumerate() {
                        process
                            .personal_data
                            .push(self.personal_data(item, &format!("{path}.personal_data[{i}]"))?);
                    }
                }
                k if k == keys().has_processing => {
                    process.processing_operations =
                        self.term_list(v, &format!("{path}.processing_operations"))?
                }
                k if k == keys().has_data_controller => {
                    process.data_controllers = self.entity_ref_list(
                        v,
                        Some("dpv:DataController"),
                        &format!("{path}.data_controllers"),
                    )?
                }
                k if k == keys().has_recipient => {
                    process.recipients = self.entity_ref_list(
                        v,
                        Some("dpv:Recipient"),
                        &format!("{path}.recipients"),
                    )?
                }
                k if k == keys().has_legal_basis => {
                    process.legal_bases = self.term_list(v, &format!("{path}.legal_bases"))?
                }
                k if k == keys().has_storage_condition => {
                    for (i, c) in as_values(v).iter().enumerate() {
                        process.storage_conditions.push(
                            self.storage_condition(c, &format!("{path}.storage_conditions[{i}]"))?,
                        );
                    }
                }
                k if k == keys().has_processing_condition => {
                    for (i, c) in as_values(v).iter().enumerate() {
                        process.processing_conditions.push(self.processing_condition(
                            c,
                            &format!("{path}.processing_conditions[{i}]"),
                        )?);
                    }
                }
                k if k == keys().has_rule => {
                    process.geographic_restrictions =
                        self.term_list(v, &format!("{path}.geographic_restrictions"))?
                }
                k if k == keys().has_data_source => {
                    process.data_sources =
                        self.entity_ref_list(v, None, &format!("{path}.data_sources"))?
                }
                k if k == keys().has_service => {
                    process.services = string_list(v, &format!("{path}.services"))?
                }
                k if k == keys().has_organisational_measure => {
                    process.codes_of_conduct = string_list(v, &format!("{path}.codes_of_conduct"))?
                }
                _ => process.extensions.push((key.clone(), v.clone())),
            }
        }
        Ok(process)
    }

    fn notice(&mut self, value: &JsonValue, path: &str) -> Result<NoticeRef, ParseError> {
        match value {
            JsonValue::String(s) => Ok(NoticeRef {
                id: Some(s.clone()),
                kind: None,
                date: None,
                languages: Vec::new(),
                coverage: None,
                extensions: Vec::new(),
            }),
            JsonValue::Object(entries) => {
                check_duplicates(entries, path)?;
                let mut notice = NoticeRef {
                    id: None,
                    kind: None,
                    date: None,
                    languages: Vec::new(),
                    coverage: None,
                    extensions: Vec::new(),
                };
                for (key, v) in entries {
                    let expanded = self.expand_key(key);
                    match expanded.as_str() {
                        "@id" => notice.id = v.as_str().map(str::to_owned),
                        "@type" => {
                            notice.kind =
                                self.term_list(v, &format!("{path}.kind"))?.into_iter().next()
                        }
                        k if k == keys().date => {
                            notice.date = v
                                .as_str()
                                .map(Timestamp::parse)
                                .transpose()
                                .map_err(|e| ParseError::MalformedField {
                                    path: format!("{path}.date"),
                                    message: e.to_string(),
                                })?
                        }
                        k if k == keys().language => {
                            notice.languages = string_list(v, &format!("{path}.language"))?
                        }
                        k if k == keys().coverage => {
                            notice.coverage = v.as_str().map(str::to_owned)
                        }
                        _ => notice.extensions.push((key.clone(), v.clone())),
                    }
                }
                Ok(notice)
            }
            _ => Err(ParseError::MalformedField {
                path: path.to_owned(),
                message: "expected a notice".into(),
            }),
        }
    }

    fn right(&mut self, value: &JsonValue, path: &str) -> Result<RightRef, ParseError> {
        let obj = expect_object(value, path)?;
        check_duplicates(obj, path)?;
        let mut right = RightRef { kinds: Vec::new(), title: None, exercised_at: None, extensions: Vec::new() };
        for (key, v) in obj {
            let expanded = self.expand_key(key);
            match expanded.as_str() {
                "@type" => right.kinds = self.term_list(v, &format!("{path}.kinds"))?,
                k if k == keys().title => right.title = v.as_str().map(str::to_owned),
                k if k == keys().is_exercised_at => {
                    right.exercised_at = v.as_str().map(str::to_owned)
                }
                _ => right.extensions.push((key.clone(), v.clone())),
            }
        }
        Ok(right)
    }

    fn involvement_control(
        &mut self,
        value: &JsonValue,
        path: &str,
    ) -> Result<InvolvementControl, ParseError> {
        let obj = expect_object(value, path)?;
        check_duplicates(obj, path)?;
        let mut control =
            InvolvementControl { kinds: Vec::new(), exercised_at: None, extensions: Vec::new() };
        for (key, v) in obj {
            let expanded = self.expand_key(key);
            match expanded.as_str() {
                "@type" => control.kinds = self.term_list(v, &format!("{path}.kinds"))?,
                k if k == keys().is_exercised_at => {
                    control.exercised_at = v.as_str().map(str::to_owned)
                }
                _ => control.extensions.push((key.clone(), v.clone())),
            }
        }
        Ok(control)
    }

    fn assessment(&mut self, value: &JsonValue, path: &str) -> Result<AssessmentRef, ParseError> {
        let obj = expect_object(value, path)?;
        check_duplicates(obj, path)?;
        let mut assessment = AssessmentRef { kinds: Vec::new(), url: None, extensions: Vec::new() };
        for (key, v) in obj {
            let expanded = self.expand_key(key);
            match expanded.as_str() {
                "@type" => assessment.kinds = self.term_list(v, &format!("{path}.kinds"))?,
                k if k == keys().url || k == "@id" => {
                    assessment.url =
                        as_values(v).first().and_then(|x| x.as_str()).map(str::to_owned)
                }
                _ => assessment.extensions.push((key.clone(), v.clone())),
            }
        }
        Ok(assessment)
    }

    fn event(&mut self, value: &JsonValue, path: &str) -> Result<ConsentEvent, ParseError> {
        let obj = expect_object(value, path)?;
        check_duplicates(obj, path)?;
        let mut status: Option<Term> = None;
        let mut consent_type: Option<Term> = None;
        let mut extra_types = Vec::new();
        let mut event_time: Option<Timestamp> = None;
        let mut duration = None;
        let mut actor = None;
        let mut methods = Vec::new();
        let mut extensions = Vec::new();
        for (key, v) in obj {
            let expanded = self.expand_key(key);
            match expanded.as_str() {
                "@type" => {
                    for term in self.term_list(v, &format!("{path}.status"))? {
                        if term.in_taxonomy("dpv:ConsentStatus", self.registry) {
                            if status.is_some() {
                                return Err(ParseError::MalformedField {
                                    path: format!("{path}.status"),
                                    message: "more than one consent status on event".into(),
                                });
                            }
                            status = Some(term);
                        } else if term.in_taxonomy("dpv:LegalBasis", self.registry) {
                            if consent_type.is_none() {
                                consent_type = Some(term);
                            } else {
                                extra_types.push(term);
                            }
                        } else {
                            extra_types.push(term);
                        }
                    }
                }
                k if k == keys().is_indicated_at_time => {
                    let raw = v.as_str().ok_or_else(|| ParseError::MalformedField {
                        path: format!("{path}.event_time"),
                        message: "expected a timestamp string".into(),
                    })?;
                    event_time = Some(Timestamp::parse(raw).map_err(|e| {
                        ParseError::MalformedField {
                            path: format!("{path}.event_time"),
                            message: e.to_string(),
                        }
                    })?);
                }
                k if k == keys().is_indicated_by => {
                    actor = Some(self.entity_ref(v, None, &format!("{path}.actor"))?)
                }
                k if k == keys().has_indication_method => {
                    methods = string_list(v, &format!("{path}.method"))?
                }
                k if k == keys().has_duration => {
                    duration = Some(self.duration(v, &format!("{path}.duration"))?)
                }
                _ => extensions.push((key.clone(), v.clone())),
            }
        }
        let event_time = event_time.ok_or_else(|| ParseError::MalformedField {
            path: format!("{path}.event_time"),
            message: "event without time".into(),
        })?;
        Ok(ConsentEvent { status, consent_type, extra_types, event_time, duration, actor, methods, extensions })
    }
}

/// Verify the document's `@context` is the pinned one (or an inline prefix
/// map matching the registry). Absent contexts default to the pinned one.
pub fn check_context(doc: &JsonValue, registry: &Registry) -> Result<(), ParseError> {
    let Some(context) = doc.get("@context") else {
        return Ok(());
    };
    match context {
        JsonValue::String(iri) if iri == PINNED_CONTEXT_IRI => Ok(()),
        JsonValue::String(iri) => Err(ParseError::UnknownContext(iri.clone())),
        JsonValue::Object(entries) => {
            for (prefix, ns) in entries {
                let Some(ns) = ns.as_str() else {
                    return Err(ParseError::UnknownContext(format!("non-string namespace for '{prefix}'")));
                };
                match registry.prefixes().namespace(prefix) {
                    Some(registered) if registered == ns => {}
                    _ => {
                        return Err(ParseError::UnknownContext(format!("prefix '{prefix}' -> '{ns}'")))
                    }
                }
            }
            Ok(())
        }
        _ => Err(ParseError::UnknownContext("unsupported @context form".into())),
    }
}

pub fn parse_document(text: &str) -> Result<JsonValue, ParseError> {
    JsonValue::parse(text).map_err(|e| ParseError::Json(e.to_string()))
}

/// Structural parse of a consent record. No profile validation happens
/// here; unknown keys land in the extensions bag.
pub fn parse_record(doc: &JsonValue) -> Result<Parsed<ConsentRecord>, ParseError> {
    let registry = Registry::builtin();
    let mut ctx = Ctx::new(registry);
    let record = parse_record_inner(doc, &mut ctx, "")?;
    Ok(Parsed { value: record, warnings: ctx.warnings })
}

fn document_types(doc: &JsonValue, ctx: &Ctx) -> Vec<String> {
    let mut types = Vec::new();
    for value in doc.get_all("@type").into_iter().chain(doc.get_all("type")) {
        for v in as_values(value) {
            if let Some(s) = v.as_str() {
                types.push(ctx.registry.expand(s).unwrap_or_else(|_| s.to_owned()));
            }
        }
    }
    types
}

fn parse_record_inner(doc: &JsonValue, ctx: &mut Ctx, path: &str) -> Result<ConsentRecord, ParseError> {
    let obj = expect_object(doc, path)?;
    if path.is_empty() {
        check_context(doc, ctx.registry)?;
    }
    let types = document_types(doc, ctx);
    let record_type = ctx.registry.expand(RECORD_TYPE).expect("known type");
    if !types.iter().any(|t| t == &record_type) {
        return Err(ParseError::NotARecord(format!(
            "expected @type {RECORD_TYPE}, found {types:?}"
        )));
    }
    check_duplicates_allowing(obj, path, &[keys().has_process.as_str()], ctx)?;

    let outer_parties = std::mem::take(&mut ctx.parties);
    let mut record = ConsentRecord {
        iri: None,
        schema_version: None,
        record_ids: Vec::new(),
        data_subject: None,
        controllers: Vec::new(),
        processors: Vec::new(),
        record_legal_basis: Vec::new(),
        record_recipients: Vec::new(),
        record_storage_conditions: Vec::new(),
        jurisdictions: Vec::new(),
        applicable_law: Vec::new(),
        processes: Vec::new(),
        notices: Vec::new(),
        rights: Vec::new(),
        involvement_controls: Vec::new(),
        impact_assessments: Vec::new(),
        events: Vec::new(),
        parties: Vec::new(),
        annotations: Vec::new(),
        extensions: Vec::new(),
    };

    let mut process_index = 0usize;
    for (key, v) in obj {
        let expanded = ctx.expand_key(key);
        match expanded.as_str() {
            "@context" | "@type" => {}
            "@id" => record.iri = v.as_str().map(str::to_owned),
            k if k == keys().identifier => record.record_ids = string_list(v, "record_ids")?,
            k if k == keys().conforms_to => {
                let raw = v.as_str().ok_or_else(|| ParseError::MalformedField {
                    path: "schema_version".into(),
                    message: "expected a profile IRI".into(),
                })?;
                record.schema_version = Some(ctx.term(raw, "schema_version")?);
            }
            k if k == keys().has_data_subject => {
                record.data_subject =
                    Some(ctx.entity_ref(v, Some("dpv:DataSubject"), "data_subject")?)
            }
            k if k == keys().has_data_controller => {
                record.controllers =
                    ctx.entity_ref_list(v, Some("dpv:DataController"), "controllers")?
            }
            k if k == keys().has_data_processor => {
                record.processors =
                    ctx.entity_ref_list(v, Some("dpv:DataProcessor"), "processors")?
            }
            k if k == keys().has_jurisdiction => {
                record.jurisdictions = ctx.term_list(v, "jurisdictions")?
            }
            k if k == keys().has_applicable_law => {
                record.applicable_law = ctx.term_list(v, "applicable_law")?
            }
            k if k == keys().has_legal_basis => {
                record.record_legal_basis = ctx.term_list(v, "legal_basis")?
            }
            k if k == keys().has_recipient => {
                record.record_recipients =
                    ctx.entity_ref_list(v, Some("dpv:Recipient"), "recipients")?
            }
            k if k == keys().has_storage_condition => {
                for (i, c) in as_values(v).iter().enumerate() {
                    record
                        .record_storage_conditions
                        .push(ctx.storage_condition(c, &format!("storage_conditions[{i}]"))?);
                }
            }
            k if k == keys().has_process => {
                for item in as_values(v) {
                    record
                        .processes
                        .push(ctx.process(item, &format!("processes[{process_index}]"))?);
                    process_index += 1;
                }
            }
            k if k == keys().has_notice => {
                for (i, n) in as_values(v).iter().enumerate() {
                    record.notices.push(ctx.notice(n, &format!("notices[{i}]"))?);
                }
            }
            k if k == keys().has_right => {
                for (i, r) in as_values(v).iter().enumerate() {
                    record.rights.push(ctx.right(r, &format!("rights[{i}]"))?);
                }
            }
            k if k == keys().has_involvement_control => {
                for (i, c) in as_values(v).iter().enumerate() {
                    record
                        .involvement_controls
                        .push(ctx.involvement_control(c, &format!("involvement_controls[{i}]"))?);
                }
            }
            k if k == keys().has_impact_assessment => {
                for (i, a) in as_values(v).iter().enumerate() {
                    record
                        .impact_assessments
                        .push(ctx.assessment(a, &format!("impact_assessments[{i}]"))?);
                }
            }
            k if k == keys().has_consent_status => {
                for (i, e) in as_values(v).iter().enumerate() {
                    record.events.push(ctx.event(e, &format!("events[{i}]"))?);
                }
            }
            k if k == keys().has_entity => {
                for (i, e) in as_values(v).iter().enumerate() {
                    let entity = ctx.entity(e, true, &format!("parties[{i}]"))?;
                    // A declared party replaces any stub synthesized for
                    // an earlier bare reference to the same id. The stub is
                    // removed and the declared entity appended so party
                    // order follows the declaration list, independent of
                    // where bare references appear in the document.
                    if entity.id.is_some() {
                        ctx.parties.retain(|p| p.declared || p.id != entity.id);
                    }
                    ctx.parties.push(entity);
                }
            }
            _ => record.extensions.push((key.clone(), v.clone())),
        }
    }

    record.parties = std::mem::replace(&mut ctx.parties, outer_parties);
    Ok(record)
}

/// Structural parse of a consent receipt. The `ConsentRereceipt` spelling
/// variant is accepted and corrected with a warning.
pub fn parse_receipt(doc: &JsonValue) -> Result<Parsed<ConsentReceipt>, ParseError> {
    let registry = Registry::builtin();
    let mut ctx = Ctx::new(registry);
    let obj = expect_object(doc, "")?;
    check_context(doc, registry)?;

    let types = document_types(doc, &ctx);
    let receipt_type = registry.expand(RECEIPT_TYPE).expect("known type");
    let variant_type = registry.expand(RECEIPT_TYPE_VARIANT).expect("expandable");
    if types.iter().any(|t| t == &variant_type) {
        ctx.warn("@type", format!("'{RECEIPT_TYPE_VARIANT}' corrected to '{RECEIPT_TYPE}'"));
    } else if !types.iter().any(|t| t == &receipt_type) {
        return Err(ParseError::NotAReceipt(format!(
            "expected @type {RECEIPT_TYPE}, found {types:?}"
        )));
    }
    check_duplicates_allowing(obj, "", &[keys().has_record_of_activity.as_str()], &ctx)?;

    let mut receipt = ConsentReceipt {
        iri: None,
        schema_version: None,
        receipt_ids: Vec::new(),
        records: Vec::new(),
        created: None,
        publisher: None,
        recipient: None,
        extensions: Vec::new(),
    };

    let mut record_index = 0usize;
    for (key, v) in obj {
        let expanded = ctx.expand_key(key);
        match expanded.as_str() {
            "@context" | "@type" => {}
            "@id" => receipt.iri = v.as_str().map(str::to_owned),
            k if k == keys().identifier => receipt.receipt_ids = string_list(v, "receipt_ids")?,
            k if k == keys().conforms_to => {
                let raw = v.as_str().ok_or_else(|| ParseError::MalformedField {
                    path: "schema_version".into(),
                    message: "expected a profile IRI".into(),
                })?;
                receipt.schema_version = Some(ctx.term(raw, "schema_version")?);
            }
            k if k == keys().created => {
                let raw = v.as_str().ok_or_else(|| ParseError::MalformedField {
                    path: "created".into(),
                    message: "expected a timestamp".into(),
                })?;
                receipt.created = Some(Timestamp::parse(raw).map_err(|e| {
                    ParseError::MalformedField { path: "created".into(), message: e.to_string() }
                })?);
            }
            k if k == keys().publisher => {
                receipt.publisher = Some(ctx.entity_ref(v, None, "publisher")?)
            }
            k if k == keys().recipient => {
                receipt.recipient = Some(ctx.entity_ref(v, None, "recipient")?)
            }
            k if k == keys().has_record_of_activity => {
                let items = as_values(v);
                if items.is_empty() {
                    return Err(ParseError::MalformedField {
                        path: "records".into(),
                        message: "receipt with empty record list".into(),
                    });
                }
                for item in items {
                    let prefix = format!("records[{record_index}]");
                    let record = parse_record_inner(item, &mut ctx, &prefix)
                        .map_err(|e| e.prefixed(&prefix))?;
                    receipt.records.push(record);
                    record_index += 1;
                }
            }
            _ => receipt.extensions.push((key.clone(), v.clone())),
        }
    }
    Ok(Parsed { value: receipt, warnings: ctx.warnings })
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// Serialize to bytes. Pretty mode preserves lexical forms and collapses
/// single-element lists to scalars; canonical mode is the deterministic
/// byte form used for digests and signatures.
pub fn serialize_record(record: &ConsentRecord, mode: SerializeMode) -> Result<Vec<u8>, SerializeError> {
    check_record_refs(record)?;
    let tree = record_tree(record, mode);
    Ok(render(tree, mode))
}

pub fn serialize_receipt(receipt: &ConsentReceipt, mode: SerializeMode) -> Result<Vec<u8>, SerializeError> {
    for record in &receipt.records {
        check_record_refs(record)?;
    }
    let tree = receipt_tree(receipt, mode);
    Ok(render(tree, mode))
}

pub fn serialize_document(doc: &ConsentDocument, mode: SerializeMode) -> Result<Vec<u8>, SerializeError> {
    match doc {
        ConsentDocument::Record(r) => serialize_record(r, mode),
        ConsentDocument::Receipt(r) => serialize_receipt(r, mode),
    }
}

fn render(tree: JsonValue, mode: SerializeMode) -> Vec<u8> {
    match mode {
        SerializeMode::Pretty => tree.to_pretty_string().into_bytes(),
        SerializeMode::Canonical => tree.to_canonical_string().into_bytes(),
    }
}

fn check_record_refs(record: &ConsentRecord) -> Result<(), SerializeError> {
    let mut refs: Vec<&EntityRef> = Vec::new();
    refs.extend(record.data_subject.iter());
    refs.extend(record.controllers.iter());
    refs.extend(record.processors.iter());
    refs.extend(record.record_recipients.iter());
    for process in &record.processes {
        refs.extend(process.data_controllers.iter());
        refs.extend(process.recipients.iter());
        refs.extend(process.data_sources.iter());
        for item in &process.personal_data {
            refs.extend(item.source.iter());
        }
    }
    for event in &record.events {
        refs.extend(event.actor.iter());
    }
    for entity_ref in refs {
        record
            .entity_lookup(entity_ref)
            .map_err(|e| SerializeError::UnserializableValue(e.to_string()))?;
    }
    Ok(())
}

struct Emit {
    mode: SerializeMode,
}

impl Emit {
    fn key(&self, curie: &str) -> String {
        match self.mode {
            SerializeMode::Pretty => curie.to_owned(),
            SerializeMode::Canonical => {
                Registry::builtin().expand(curie).unwrap_or_else(|_| curie.to_owned())
            }
        }
    }

    fn string_value(&self, raw: &str) -> JsonValue {
        match self.mode {
            SerializeMode::Pretty => JsonValue::String(raw.to_owned()),
            SerializeMode::Canonical => JsonValue::String(canonical_string(raw)),
        }
    }

    fn term(&self, term: &Term) -> JsonValue {
        match self.mode {
            SerializeMode::Pretty => JsonValue::String(term.raw().to_owned()),
            SerializeMode::Canonical => JsonValue::String(term.iri().to_owned()),
        }
    }

    fn entity_ref(&self, entity_ref: &EntityRef) -> JsonValue {
        match entity_ref {
            EntityRef::Id(id) => self.string_value(id),
            EntityRef::Role(term) => self.term(term),
        }
    }

    fn timestamp(&self, ts: &Timestamp) -> JsonValue {
        match self.mode {
            SerializeMode::Pretty => JsonValue::String(ts.raw().to_owned()),
            SerializeMode::Canonical => JsonValue::String(ts.canonical_lexical()),
        }
    }

    /// Multi-cardinality field: pretty mode collapses singleton lists.
    fn multi(&self, values: Vec<JsonValue>) -> JsonValue {
        match self.mode {
            SerializeMode::Pretty if values.len() == 1 => values.into_iter().next().expect("len 1"),
            _ => JsonValue::Array(values),
        }
    }

    fn push_multi(&self, out: &mut Vec<(String, JsonValue)>, curie: &str, values: Vec<JsonValue>) {
        if !values.is_empty() {
            out.push((self.key(curie), self.multi(values)));
        }
    }

    fn push_extensions(&self, out: &mut Vec<(String, JsonValue)>, extensions: &ExtBag) {
        for (key, value) in extensions {
            let key = match self.mode {
                SerializeMode::Pretty => key.clone(),
                SerializeMode::Canonical => {
                    if key == "type" {
                        "@type".to_owned()
                    } else {
                        Registry::builtin().expand(key).unwrap_or_else(|_| key.clone())
                    }
                }
            };
            let value = match self.mode {
                SerializeMode::Pretty => value.clone(),
                SerializeMode::Canonical => canonicalize_extension(value),
            };
            out.push((key, value));
        }
    }

    fn duration(&self, duration: &DurationValue) -> JsonValue {
        match duration {
            DurationValue::Iso(d) => JsonValue::String(d.raw().to_owned()),
            DurationValue::UntilEvent { label } => JsonValue::Object(vec![
                (self.key("@type"), self.multi_type(vec![self.term_from_curie("dpv:UntilEventDuration")])),
                (self.key("rdf:value"), JsonValue::String(label.clone())),
            ]),
        }
    }

    fn term_from_curie(&self, curie: &str) -> JsonValue {
        match self.mode {
            SerializeMode::Pretty => JsonValue::String(curie.to_owned()),
            SerializeMode::Canonical => {
                JsonValue::String(Registry::builtin().expand(curie).unwrap_or_else(|_| curie.to_owned()))
            }
        }
    }

    fn multi_type(&self, values: Vec<JsonValue>) -> JsonValue {
        self.multi(values)
    }
}

fn canonical_string(raw: &str) -> String {
    Registry::builtin().expand(raw).unwrap_or_else(|_| raw.to_owned())
}

fn canonicalize_extension(value: &JsonValue) -> JsonValue {
    match value {
        JsonValue::String(s) => JsonValue::String(canonical_string(s)),
        JsonValue::Array(items) => JsonValue::Array(items.iter().map(canonicalize_extension).collect()),
        JsonValue::Object(entries) => JsonValue::Object(
            entries
                .iter()
                .map(|(k, v)| {
                    let key = if k == "type" {
                        "@type".to_owned()
                    } else {
                        canonical_string(k)
                    };
                    (key, canonicalize_extension(v))
                })
                .collect(),
        ),
        other => other.clone(),
    }
}

fn storage_condition_value(emit: &Emit, condition: &StorageCondition) -> JsonValue {
    let mut obj = Vec::new();
    obj.push((emit.key("@type"), emit.multi_type(vec![emit.term(&condition.kind)])));
    emit.push_multi(&mut obj, "dpv:hasLocation", condition.locations.iter().map(|t| emit.term(t)).collect());
    if let Some(duration) = &condition.duration {
        obj.push((emit.key("dpv:hasDuration"), emit.duration(duration)));
    }
    emit.push_extensions(&mut obj, &condition.extensions);
    JsonValue::Object(obj)
}

fn personal_data_value(emit: &Emit, item: &PersonalDataItem) -> JsonValue {
    let bare = item.identifier.is_none()
        && item.literal_value.is_none()
        && item.necessity.is_none()
        && item.source.is_none()
        && item.extensions.is_empty();
    if bare && item.data_types.len() == 1 && emit.mode == SerializeMode::Pretty {
        return emit.term(&item.data_types[0]);
    }
    let mut obj = Vec::new();
    emit.push_multi(&mut obj, "@type", item.data_types.iter().map(|t| emit.term(t)).collect());
    if let Some(value) = &item.literal_value {
        obj.push((emit.key("rdf:value"), JsonValue::String(value.clone())));
    }
    if let Some(id) = &item.identifier {
        // dct:identifier is array-valued in canonical form everywhere.
        emit.push_multi(&mut obj, "dct:identifier", vec![JsonValue::String(id.clone())]);
    }
    if let Some(necessity) = &item.necessity {
        obj.push((emit.key("dpv:hasNecessity"), emit.term(necessity)));
    }
    if let Some(source) = &item.source {
        emit.push_multi(&mut obj, "dpv:hasDataSource", vec![emit.entity_ref(source)]);
    }
    emit.push_extensions(&mut obj, &item.extensions);
    JsonValue::Object(obj)
}

fn process_value(emit: &Emit, process: &Process) -> JsonValue {
    let mut obj = Vec::new();
    obj.push((emit.key("@type"), emit.multi_type(vec![emit.term_from_curie("dpv:Process")])));
    emit.push_multi(&mut obj, "dpv:hasService", process.services.iter().map(|s| JsonValue::String(s.clone())).collect());
    emit.push_multi(&mut obj, "dpv:hasRecipient", process.recipients.iter().map(|r| emit.entity_ref(r)).collect());
    emit.push_multi(&mut obj, "dpv:hasPurpose", process.purposes.iter().map(|t| emit.term(t)).collect());
    emit.push_multi(&mut obj, "dpv:hasPersonalData", process.personal_data.iter().map(|i| personal_data_value(emit, i)).collect());
    emit.push_multi(&mut obj, "dpv:hasProcessing", process.processing_operations.iter().map(|t| emit.term(t)).collect());
    emit.push_multi(&mut obj, "dpv:hasDataController", process.data_controllers.iter().map(|r| emit.entity_ref(r)).collect());
    emit.push_multi(&mut obj, "dpv:hasLegalBasis", process.legal_bases.iter().map(|t| emit.term(t)).collect());
    emit.push_multi(&mut obj, "dpv:hasDataSource", process.data_sources.iter().map(|r| emit.entity_ref(r)).collect());
    emit.push_multi(&mut obj, "dpv:hasStorageCondition", process.storage_conditions.iter().map(|c| storage_condition_value(emit, c)).collect());
    emit.push_multi(&mut obj, "dpv:hasProcessingCondition", process.processing_conditions.iter().map(|c| {
        let sc = StorageCondition {
            kind: c.kind.clone(),
            locations: c.locations.clone(),
            duration: c.duration.clone(),
            extensions: c.extensions.clone(),
        };
        storage_condition_value(emit, &sc)
    }).collect());
    emit.push_multi(&mut obj, "dpv:hasRule", process.geographic_restrictions.iter().map(|t| emit.term(t)).collect());
    emit.push_multi(&mut obj, "dpv:hasOrganisationalMeasure", process.codes_of_conduct.iter().map(|s| JsonValue::String(s.clone())).collect());
    emit.push_extensions(&mut obj, &process.extensions);
    JsonValue::Object(obj)
}

fn notice_value(emit: &Emit, notice: &NoticeRef) -> JsonValue {
    let mut obj = Vec::new();
    if let Some(id) = &notice.id {
        obj.push((emit.key("@id"), JsonValue::String(id.clone())));
    }
    if let Some(kind) = &notice.kind {
        obj.push((emit.key("@type"), emit.multi_type(vec![emit.term(kind)])));
    }
    if let Some(date) = &notice.date {
        obj.push((emit.key("dct:date"), emit.timestamp(date)));
    }
    emit.push_multi(&mut obj, "dct:language", notice.languages.iter().map(|l| JsonValue::String(l.clone())).collect());
    if let Some(coverage) = &notice.coverage {
        obj.push((emit.key("dct:coverage"), JsonValue::String(coverage.clone())));
    }
    emit.push_extensions(&mut obj, &notice.extensions);
    JsonValue::Object(obj)
}

fn right_value(emit: &Emit, right: &RightRef) -> JsonValue {
    let mut obj = Vec::new();
    emit.push_multi(&mut obj, "@type", right.kinds.iter().map(|t| emit.term(t)).collect());
    if let Some(title) = &right.title {
        obj.push((emit.key("dct:title"), JsonValue::String(title.clone())));
    }
    if let Some(at) = &right.exercised_at {
        obj.push((emit.key("dpv:isExercisedAt"), JsonValue::String(at.clone())));
    }
    emit.push_extensions(&mut obj, &right.extensions);
    JsonValue::Object(obj)
}

fn control_value(emit: &Emit, control: &InvolvementControl) -> JsonValue {
    let mut obj = Vec::new();
    emit.push_multi(&mut obj, "@type", control.kinds.iter().map(|t| emit.term(t)).collect());
    if let Some(at) = &control.exercised_at {
        obj.push((emit.key("dpv:isExercisedAt"), JsonValue::String(at.clone())));
    }
    emit.push_extensions(&mut obj, &control.extensions);
    JsonValue::Object(obj)
}

fn assessment_value(emit: &Emit, assessment: &AssessmentRef) -> JsonValue {
    let mut obj = Vec::new();
    emit.push_multi(&mut obj, "@type", assessment.kinds.iter().map(|t| emit.term(t)).collect());
    if let Some(url) = &assessment.url {
        emit.push_multi(&mut obj, "schema:url", vec![JsonValue::String(url.clone())]);
    }
    emit.push_extensions(&mut obj, &assessment.extensions);
    JsonValue::Object(obj)
}

fn event_value(emit: &Emit, event: &ConsentEvent) -> JsonValue {
    let mut obj = Vec::new();
    let mut types = Vec::new();
    if let Some(status) = &event.status {
        types.push(emit.term(status));
    }
    if let Some(consent_type) = &event.consent_type {
        types.push(emit.term(consent_type));
    }
    types.extend(event.extra_types.iter().map(|t| emit.term(t)));
    emit.push_multi(&mut obj, "@type", types);
    if let Some(actor) = &event.actor {
        obj.push((emit.key("dpv:isIndicatedBy"), emit.entity_ref(actor)));
    }
    emit.push_multi(&mut obj, "dpv:hasIndicationMethod", event.methods.iter().map(|m| JsonValue::String(m.clone())).collect());
    obj.push((emit.key("dpv:isIndicatedAtTime"), emit.timestamp(&event.event_time)));
    if let Some(duration) = &event.duration {
        obj.push((emit.key("dpv:hasDuration"), emit.duration(duration)));
    }
    emit.push_extensions(&mut obj, &event.extensions);
    JsonValue::Object(obj)
}

fn contact_value(emit: &Emit, contact: &Contact) -> JsonValue {
    let mut obj = Vec::new();
    obj.push((emit.key("@type"), emit.multi_type(vec![emit.term_from_curie("schema:ContactPoint")])));
    emit.push_multi(&mut obj, "schema:postalAddress", contact.postal_addresses.iter().map(|s| JsonValue::String(s.clone())).collect());
    emit.push_multi(&mut obj, "schema:email", contact.emails.iter().map(|s| JsonValue::String(s.clone())).collect());
    emit.push_multi(&mut obj, "schema:telephone", contact.phones.iter().map(|s| JsonValue::String(s.clone())).collect());
    emit.push_multi(&mut obj, "schema:url", contact.urls.iter().map(|s| JsonValue::String(s.clone())).collect());
    emit.push_extensions(&mut obj, &contact.extensions);
    JsonValue::Object(obj)
}

fn entity_value(emit: &Emit, entity: &Entity) -> JsonValue {
    let mut obj = Vec::new();
    if let Some(id) = &entity.id {
        obj.push((emit.key("@id"), emit.string_value(id)));
    }
    emit.push_multi(&mut obj, "@type", entity.roles.iter().map(|t| emit.term(t)).collect());
    emit.push_multi(&mut obj, "dpv:hasName", entity.names.iter().map(|s| JsonValue::String(s.clone())).collect());
    emit.push_multi(&mut obj, "dpv:hasIdentifier", entity.identifiers.iter().map(|s| JsonValue::String(s.clone())).collect());
    emit.push_multi(&mut obj, "schema:contactPoint", entity.contacts.iter().map(|c| contact_value(emit, c)).collect());
    emit.push_extensions(&mut obj, &entity.extensions);
    JsonValue::Object(obj)
}

/// Serialize the data-subject reference. When the record carries a stub
/// party for it (the inline `{"@id": ..., "@type": ...}` form), that
/// object form is reproduced so the roles survive the round trip.
fn data_subject_value(emit: &Emit, record: &ConsentRecord, subject: &EntityRef) -> JsonValue {
    if let EntityRef::Id(id) = subject {
        if let Some(entity) = record
            .parties
            .iter()
            .find(|e| !e.declared && e.id.as_deref() == Some(id.as_str()) && !e.roles.is_empty())
        {
            let mut obj = Vec::new();
            obj.push((emit.key("@id"), emit.string_value(id)));
            obj.push((emit.key("@type"), emit.multi_type(entity.roles.iter().map(|t| emit.term(t)).collect())));
            return JsonValue::Object(obj);
        }
    }
    emit.entity_ref(subject)
}

fn record_tree(record: &ConsentRecord, mode: SerializeMode) -> JsonValue {
    let emit = Emit { mode };
    let mut obj = Vec::new();
    if mode == SerializeMode::Pretty {
        obj.push(("@context".to_owned(), JsonValue::String(PINNED_CONTEXT_IRI.to_owned())));
    }
    if let Some(iri) = &record.iri {
        obj.push((emit.key("@id"), JsonValue::String(iri.clone())));
    }
    obj.push((emit.key("@type"), emit.multi_type(vec![emit.term_from_curie(RECORD_TYPE)])));
    emit.push_multi(&mut obj, "dct:identifier", record.record_ids.iter().map(|s| JsonValue::String(s.clone())).collect());
    if let Some(version) = &record.schema_version {
        obj.push((emit.key("dct:conformsTo"), emit.term(version)));
    }
    if let Some(subject) = &record.data_subject {
        obj.push((emit.key("dpv:hasDataSubject"), data_subject_value(&emit, record, subject)));
    }
    emit.push_multi(&mut obj, "dpv:hasDataController", record.controllers.iter().map(|r| emit.entity_ref(r)).collect());
    emit.push_multi(&mut obj, "dpv:hasDataProcessor", record.processors.iter().map(|r| emit.entity_ref(r)).collect());
    emit.push_multi(&mut obj, "dpv:hasJurisdiction", record.jurisdictions.iter().map(|t| emit.term(t)).collect());
    emit.push_multi(&mut obj, "dpv:hasApplicableLaw", record.applicable_law.iter().map(|t| emit.term(t)).collect());
    emit.push_multi(&mut obj, "dpv:hasLegalBasis", record.record_legal_basis.iter().map(|t| emit.term(t)).collect());
    emit.push_multi(&mut obj, "dpv:hasRecipient", record.record_recipients.iter().map(|r| emit.entity_ref(r)).collect());
    emit.push_multi(&mut obj, "dpv:hasStorageCondition", record.record_storage_conditions.iter().map(|c| storage_condition_value(&emit, c)).collect());
    emit.push_multi(&mut obj, "dpv:hasProcess", record.processes.iter().map(|p| process_value(&emit, p)).collect());
    emit.push_multi(&mut obj, "dpv:hasNotice", record.notices.iter().map(|n| notice_value(&emit, n)).collect());
    emit.push_multi(&mut obj, "dpv:hasImpactAssessment", record.impact_assessments.iter().map(|a| assessment_value(&emit, a)).collect());
    emit.push_multi(&mut obj, "dpv:hasInvolvementControl", record.involvement_controls.iter().map(|c| control_value(&emit, c)).collect());
    emit.push_multi(&mut obj, "dpv:hasRight", record.rights.iter().map(|r| right_value(&emit, r)).collect());
    emit.push_multi(&mut obj, "dpv:hasConsentStatus", record.events.iter().map(|e| event_value(&emit, e)).collect());
    let declared: Vec<JsonValue> =
        record.parties.iter().filter(|e| e.declared).map(|e| entity_value(&emit, e)).collect();
    emit.push_multi(&mut obj, "dpv:hasEntity", declared);
    emit.push_extensions(&mut obj, &record.extensions);
    JsonValue::Object(obj)
}

fn receipt_tree(receipt: &ConsentReceipt, mode: SerializeMode) -> JsonValue {
    let emit = Emit { mode };
    let mut obj = Vec::new();
    if mode == SerializeMode::Pretty {
        obj.push(("@context".to_owned(), JsonValue::String(PINNED_CONTEXT_IRI.to_owned())));
    }
    if let Some(iri) = &receipt.iri {
        obj.push((emit.key("@id"), JsonValue::String(iri.clone())));
    }
    obj.push((emit.key("@type"), emit.multi_type(vec![emit.term_from_curie(RECEIPT_TYPE)])));
    emit.push_multi(&mut obj, "dct:identifier", receipt.receipt_ids.iter().map(|s| JsonValue::String(s.clone())).collect());
    if let Some(version) = &receipt.schema_version {
        obj.push((emit.key("dct:conformsTo"), emit.term(version)));
    }
    if let Some(created) = &receipt.created {
        obj.push((emit.key("dct:created"), emit.timestamp(created)));
    }
    if let Some(publisher) = &receipt.publisher {
        obj.push((emit.key("dct:publisher"), emit.entity_ref(publisher)));
    }
    if let Some(recipient) = &receipt.recipient {
        obj.push((emit.key("schema:recipient"), emit.entity_ref(recipient)));
    }
    let records: Vec<JsonValue> = receipt
        .records
        .iter()
        .map(|r| {
            let mut tree = record_tree(r, mode);
            if mode == SerializeMode::Pretty {
                if let Some(entries) = tree.object_mut() {
                    entries.retain(|(k, _)| k != "@context");
                }
            }
            tree
        })
        .collect();
    emit.push_multi(&mut obj, "dpv:hasRecordOfActivity", records);
    emit.push_extensions(&mut obj, &receipt.extensions);
    JsonValue::Object(obj)
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

fn as_values(value: &JsonValue) -> Vec<&JsonValue> {
    match value {
        JsonValue::Array(items) => items.iter().collect(),
        other => vec![other],
    }
}

fn expect_object<'a>(value: &'a JsonValue, path: &str) -> Result<&'a [(String, JsonValue)], ParseError> {
    value.as_object().ok_or_else(|| ParseError::MalformedField {
        path: path.to_owned(),
        message: "expected an object".into(),
    })
}

fn string_list(value: &JsonValue, path: &str) -> Result<Vec<String>, ParseError> {
    as_values(value)
        .iter()
        .map(|v| {
            v.as_str().map(str::to_owned).ok_or_else(|| ParseError::MalformedField {
                path: path.to_owned(),
                message: "expected a string".into(),
            })
        })
        .collect()
}

fn check_duplicates(entries: &[(String, JsonValue)], path: &str) -> Result<(), ParseError> {
    for (i, (key, _)) in entries.iter().enumerate() {
        if entries.iter().take(i).any(|(k, _)| k == key) {
            return Err(ParseError::DuplicateKey { path: path.to_owned(), key: key.clone() });
        }
    }
    Ok(())
}

fn check_duplicates_allowing(
    entries: &[(String, JsonValue)],
    path: &str,
    allowed_expanded: &[&str],
    ctx: &Ctx,
) -> Result<(), ParseError> {
    for (i, (key, _)) in entries.iter().enumerate() {
        let expanded = ctx.expand_key(key);
        if allowed_expanded.contains(&expanded.as_str()) {
            continue;
        }
        if entries.iter().take(i).any(|(k, _)| ctx.expand_key(k) == expanded) {
            return Err(ParseError::DuplicateKey { path: path.to_owned(), key: key.clone() });
        }
    }
    Ok(())
}

/// Expanded-IRI key constants, built once from the registry.
pub struct Keys {
    pub identifier: String,
    pub conforms_to: String,
    pub created: String,
    pub publisher: String,
    pub date: String,
    pub language: String,
    pub coverage: String,
    pub title: String,
    pub recipient: String,
    pub url: String,
    pub contact_point: String,
    pub postal_address: String,
    pub email: String,
    pub telephone: String,
    pub rdf_value: String,
    pub has_data_subject: String,
    pub has_data_controller: String,
    pub has_data_processor: String,
    pub has_jurisdiction: String,
    pub has_applicable_law: String,
    pub has_legal_basis: String,
    pub has_recipient: String,
    pub has_process: String,
    pub has_purpose: String,
    pub has_personal_data: String,
    pub has_necessity: String,
    pub has_data_source: String,
    pub has_storage_condition: String,
    pub has_processing_condition: String,
    pub has_processing: String,
    pub has_rule: String,
    pub has_service: String,
    pub has_organisational_measure: String,
    pub has_location: String,
    pub has_duration: String,
    pub has_notice: String,
    pub has_impact_assessment: String,
    pub has_involvement_control: String,
    pub has_right: String,
    pub has_consent_status: String,
    pub has_entity: String,
    pub has_name: String,
    pub has_identifier: String,
    pub is_exercised_at: String,
    pub is_indicated_by: String,
    pub is_indicated_at_time: String,
    pub has_indication_method: String,
    pub has_record_of_activity: String,
}

pub fn keys() -> &'static Keys {
    use std::sync::OnceLock;
    static KEYS: OnceLock<Keys> = OnceLock::new();
    KEYS.get_or_init(|| {
        let x = |curie: &str| Registry::builtin().expand(curie).expect("registered prefix");
        Keys {
            identifier: x("dct:identifier"),
            conforms_to: x("dct:conformsTo"),
            created: x("dct:created"),
            publisher: x("dct:publisher"),
            date: x("dct:date"),
            language: x("dct:language"),
            coverage: x("dct:coverage"),
            title: x("dct:title"),
            recipient: x("schema:recipient"),
            url: x("schema:url"),
            contact_point: x("schema:contactPoint"),
            postal_address: x("schema:postalAddress"),
            email: x("schema:email"),
            telephone: x("schema:telephone"),
            rdf_value: x("rdf:value"),
            has_data_subject: x("dpv:hasDataSubject"),
            has_data_controller: x("dpv:hasDataController"),
            has_data_processor: x("dpv:hasDataProcessor"),
            has_jurisdiction: x("dpv:hasJurisdiction"),
            has_applicable_law: x("dpv:hasApplicableLaw"),
            has_legal_basis: x("dpv:hasLegalBasis"),
            has_recipient: x("dpv:hasRecipient"),
            has_process: x("dpv:hasProcess"),
            has_purpose: x("dpv:hasPurpose"),
            has_personal_data: x("dpv:hasPersonalData"),
            has_necessity: x("dpv:hasNecessity"),
            has_data_source: x("dpv:hasDataSource"),
            has_storage_condition: x("dpv:hasStorageCondition"),
            has_processing_condition: x("dpv:hasProcessingCondition"),
            has_processing: x("dpv:hasProcessing"),
            has_rule: x("dpv:hasRule"),
            has_service: x("dpv:hasService"),
            has_organisational_measure: x("dpv:hasOrganisationalMeasure"),
            has_location: x("dpv:hasLocation"),
            has_duration: x("dpv:hasDuration"),
            has_notice: x("dpv:hasNotice"),
            has_impact_assessment: x("dpv:hasImpactAssessment"),
            has_involvement_control: x("dpv:hasInvolvementControl"),
            has_right: x("dpv:hasRight"),
            has_consent_status: x("dpv:hasConsentStatus"),
            has_entity: x("dpv:hasEntity"),
            has_name: x("dpv:hasName"),
            has_identifier: x("dpv:hasIdentifier"),
            is_exercised_at: x("dpv:isExercisedAt"),
            is_indicated_by: x("dpv:isIndicatedBy"),
            is_indicated_at_time: x("dpv:isIndicatedAtTime"),
            has_indication_method: x("dpv:hasIndicationMethod"),
            has_record_of_activity: x("dpv:hasRecordOfActivity"),
        }
    })
}
