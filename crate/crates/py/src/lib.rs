//! Python bindings: consent records and receipts as Python classes, plus
//! module-level helpers for validation, lifecycle, integrity, and the
//! clause crosswalk.

use chrono::{DateTime, Utc};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use consent27560::integrity;
use consent27560::lifecycle::{self, ConsentState};
use consent27560::model::{ConsentDocument, ConsentEvent, EntityRef, Timestamp};
use consent27560::profiles::{self, Severity};
use consent27560::receipts::{self, IssueMode};
use consent27560::serialization::{self, SerializeMode};
use consent27560::Registry;

fn value_error(message: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(message.to_string())
}

fn parse_instant(raw: &str) -> PyResult<DateTime<Utc>> {
    Ok(Timestamp::parse(raw).map_err(value_error)?.instant())
}

fn report_to_dict<'py>(
    py: Python<'py>,
    report: &profiles::ValidationReport,
) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    out.set_item("passed", report.passed)?;
    let findings = PyList::empty(py);
    for finding in &report.findings {
        let row = PyDict::new(py);
        row.set_item(
            "severity",
            match finding.severity {
                Severity::Error => "error",
                Severity::Warning => "warning",
            },
        )?;
        row.set_item("path", &finding.path)?;
        row.set_item("rule", &finding.rule)?;
        row.set_item("message", &finding.message)?;
        row.set_item("gdpr_refs", &finding.gdpr_refs)?;
        findings.append(row)?;
    }
    out.set_item("findings", findings)?;
    Ok(out)
}

/// A parsed consent record.
#[pyclass(name = "ConsentRecord", from_py_object)]
#[derive(Clone)]
struct PyConsentRecord {
    inner: consent27560::ConsentRecord,
}

#[pymethods]
impl PyConsentRecord {
    /// Parse a compact JSON-LD consent record.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<PyConsentRecord> {
        let doc = serialization::parse_document(text).map_err(value_error)?;
        let parsed = serialization::parse_record(&doc).map_err(value_error)?;
        Ok(PyConsentRecord { inner: parsed.value })
    }

    #[getter]
    fn id(&self) -> Option<String> {
        self.inner.primary_id().map(str::to_owned)
    }

    #[getter]
    fn data_subject(&self) -> Option<String> {
        self.inner.data_subject.as_ref().map(|s| s.raw().to_owned())
    }

    #[getter]
    fn schema_version(&self) -> Option<String> {
        self.inner.schema_version.as_ref().map(|t| t.iri().to_owned())
    }

    #[getter]
    fn process_count(&self) -> usize {
        self.inner.processes.len()
    }

    #[getter]
    fn event_count(&self) -> usize {
        self.inner.events.len()
    }

    /// Serialize; `canonical=True` yields the digestable byte form.
    #[pyo3(signature = (canonical = false))]
    fn to_json(&self, canonical: bool) -> PyResult<String> {
        let mode = if canonical { SerializeMode::Canonical } else { SerializeMode::Pretty };
        let bytes = serialization::serialize_record(&self.inner, mode).map_err(value_error)?;
        Ok(String::from_utf8(bytes).expect("serializer emits utf-8"))
    }

    /// Validate against a profile shortname or IRI.
    fn validate<'py>(&self, py: Python<'py>, profile: &str) -> PyResult<Bound<'py, PyDict>> {
        let report = profiles::validate_record(&self.inner, profile).map_err(value_error)?;
        report_to_dict(py, &report)
    }

    /// Hex sha-256 of the canonical bytes.
    fn digest(&self) -> PyResult<String> {
        Ok(integrity::digest_record(&self.inner).map_err(value_error)?.hex())
    }

    /// The consent state name at an RFC 3339 instant.
    fn status_at(&self, at: &str) -> PyResult<String> {
        Ok(lifecycle::current_status(&self.inner, parse_instant(at)?).name().to_owned())
    }

    /// Append a consent event; returns the updated record.
    #[pyo3(signature = (status, time, actor = "dpv:DataSubject", strict = true))]
    fn append_event(
        &self,
        status: &str,
        time: &str,
        actor: &str,
        strict: bool,
    ) -> PyResult<PyConsentRecord> {
        let state = ConsentState::parse(status)
            .ok_or_else(|| value_error(format!("unknown consent state '{status}'")))?;
        let term = state.term().ok_or_else(|| value_error("cannot append an unknown state"))?;
        let event = ConsentEvent {
            status: Some(term),
            consent_type: None,
            extra_types: Vec::new(),
            event_time: Timestamp::from_instant(parse_instant(time)?),
            duration: None,
            actor: Some(EntityRef::parse(actor, Registry::builtin())),
            methods: Vec::new(),
            extensions: Vec::new(),
        };
        let updated = lifecycle::append_event(&self.inner, event, strict).map_err(value_error)?;
        Ok(PyConsentRecord { inner: updated })
    }

    fn __repr__(&self) -> String {
        format!("ConsentRecord(id={:?})", self.inner.primary_id())
    }
}

/// A parsed consent receipt.
#[pyclass(name = "ConsentReceipt", from_py_object)]
#[derive(Clone)]
struct PyConsentReceipt {
    inner: consent27560::ConsentReceipt,
}

#[pymethods]
impl PyConsentReceipt {
    /// Parse a compact JSON-LD consent receipt.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<PyConsentReceipt> {
        let doc = serialization::parse_document(text).map_err(value_error)?;
        let parsed = serialization::parse_receipt(&doc).map_err(value_error)?;
        Ok(PyConsentReceipt { inner: parsed.value })
    }

    #[getter]
    fn id(&self) -> Option<String> {
        self.inner.primary_id().map(str::to_owned)
    }

    #[getter]
    fn record_count(&self) -> usize {
        self.inner.records.len()
    }

    /// The embedded records.
    fn records(&self) -> Vec<PyConsentRecord> {
        self.inner.records.iter().map(|r| PyConsentRecord { inner: r.clone() }).collect()
    }

    #[pyo3(signature = (canonical = false))]
    fn to_json(&self, canonical: bool) -> PyResult<String> {
        let mode = if canonical { SerializeMode::Canonical } else { SerializeMode::Pretty };
        let bytes = serialization::serialize_receipt(&self.inner, mode).map_err(value_error)?;
        Ok(String::from_utf8(bytes).expect("serializer emits utf-8"))
    }

    fn validate<'py>(&self, py: Python<'py>, profile: &str) -> PyResult<Bound<'py, PyDict>> {
        let report = profiles::validate_receipt(&self.inner, profile).map_err(value_error)?;
        report_to_dict(py, &report)
    }

    fn digest(&self) -> PyResult<String> {
        Ok(integrity::digest(&ConsentDocument::Receipt(self.inner.clone()))
            .map_err(value_error)?
            .hex())
    }

    fn __repr__(&self) -> String {
        format!("ConsentReceipt(id={:?})", self.inner.primary_id())
    }
}

/// Issue a receipt over one or more records at the injected clock time.
#[pyfunction]
#[pyo3(signature = (records, receipt_id, publisher, recipient, mandatory_only = false, now = "2025-01-01T00:00:00Z"))]
fn issue_receipt(
    records: Vec<PyConsentRecord>,
    receipt_id: &str,
    publisher: &str,
    recipient: &str,
    mandatory_only: bool,
    now: &str,
) -> PyResult<PyConsentReceipt> {
    let sources: Vec<_> = records.into_iter().map(|r| r.inner).collect();
    let registry = Registry::builtin();
    let mode = if mandatory_only { IssueMode::MandatoryOnly } else { IssueMode::Full };
    let issued = receipts::issue_receipt(
        &sources,
        receipt_id,
        EntityRef::parse(publisher, registry),
        EntityRef::parse(recipient, registry),
        mode,
        parse_instant(now)?,
    )
    .map_err(value_error)?;
    Ok(PyConsentReceipt { inner: issued.receipt })
}

/// Consent states reachable from `state` in one step.
#[pyfunction]
fn allowed_transitions(state: &str) -> PyResult<Vec<String>> {
    let state = ConsentState::parse(state)
        .ok_or_else(|| value_error(format!("unknown consent state '{state}'")))?;
    Ok(lifecycle::allowed_transitions(state).into_iter().map(|s| s.name().to_owned()).collect())
}

/// Sign a record with a 32-byte hex-encoded ed25519 key; returns the
/// detached envelope as JSON.
#[pyfunction]
fn sign_record(record: &PyConsentRecord, key_hex: &str, signer: &str) -> PyResult<String> {
    let key = integrity::signing_key_from_hex(key_hex).map_err(value_error)?;
    let kid = integrity::key_id_for(&key.verifying_key());
    let envelope = integrity::sign(
        &ConsentDocument::Record(record.inner.clone()),
        &key,
        &kid,
        &EntityRef::parse(signer, Registry::builtin()),
    )
    .map_err(value_error)?;
    Ok(envelope.to_json())
}

/// Verify a detached envelope; returns (ok, reason).
#[pyfunction]
fn verify_record(
    record: &PyConsentRecord,
    envelope_json: &str,
    public_key_hex: &str,
) -> PyResult<(bool, Option<String>)> {
    let envelope = integrity::SignatureEnvelope::from_json(envelope_json).map_err(value_error)?;
    let key = integrity::verifying_key_from_hex(public_key_hex).map_err(value_error)?;
    let outcome =
        integrity::verify(&ConsentDocument::Record(record.inner.clone()), &envelope, &key);
    Ok((outcome.ok, outcome.reason))
}

/// Crosswalk entries matching a clause id, field name, or GDPR citation.
#[pyfunction]
fn crosswalk<'py>(py: Python<'py>, query: &str) -> PyResult<Bound<'py, PyList>> {
    let rows = PyList::empty(py);
    for entry in profiles::gdpr_requirements(query) {
        let row = PyDict::new(py);
        row.set_item("clause", &entry.iso27560_clause)?;
        row.set_item("name", &entry.iso27560_name)?;
        row.set_item("iso29184", &entry.iso29184_refs)?;
        row.set_item("gdpr", &entry.gdpr_refs)?;
        row.set_item("note", &entry.note)?;
        rows.append(row)?;
    }
    Ok(rows)
}

#[pymodule]
fn consent27560_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConsentRecord>()?;
    m.add_class::<PyConsentReceipt>()?;
    m.add_function(wrap_pyfunction!(issue_receipt, m)?)?;
    m.add_function(wrap_pyfunction!(allowed_transitions, m)?)?;
    m.add_function(wrap_pyfunction!(sign_record, m)?)?;
    m.add_function(wrap_pyfunction!(verify_record, m)?)?;
    m.add_function(wrap_pyfunction!(crosswalk, m)?)?;
    Ok(())
}
