//! Canonical hashing, detached signatures, and literal redaction.
//!
//! Signatures are detached envelopes stored beside the document as
//! `<name>.sig.json`, so signing never alters the signed bytes. Only
//! sha-256 and ed25519 are shipped; the envelope names its algorithms so
//! others can be added.

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::json::JsonValue;
use crate::model::{ConsentDocument, ConsentRecord, EntityRef};
use crate::serialization::{self, SerializeError, SerializeMode};

pub const DIGEST_ALG: &str = "sha-256";
pub const SIGNATURE_ALG: &str = "ed25519";

#[derive(Debug, Error)]
pub enum IntegrityError {
    #[error(transparent)]
    Unserializable(#[from] SerializeError),
    #[error("bad key: {0}")]
    BadKey(String),
    #[error("bad envelope: {0}")]
    BadEnvelope(String),
    #[error("path not found: {0}")]
    PathNotFound(String),
    #[error("path does not select a literal: {0}")]
    NonLiteralPath(String),
}

/// A named-algorithm content hash.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContentDigest {
    pub algorithm: String,
    pub value: Vec<u8>,
}

impl ContentDigest {
    pub fn hex(&self) -> String {
        hex::encode(&self.value)
    }
}

fn sha256_digest(bytes: &[u8]) -> ContentDigest {
    ContentDigest { algorithm: DIGEST_ALG.to_owned(), value: Sha256::digest(bytes).to_vec() }
}

/// Digest over the canonical bytes; stable across platforms and field
/// insertion orders.
pub fn digest(doc: &ConsentDocument) -> Result<ContentDigest, IntegrityError> {
    let bytes = serialization::serialize_document(doc, SerializeMode::Canonical)?;
    Ok(sha256_digest(&bytes))
}

pub fn digest_record(record: &ConsentRecord) -> Result<ContentDigest, IntegrityError> {
    let bytes = serialization::serialize_record(record, SerializeMode::Canonical)?;
    Ok(sha256_digest(&bytes))
}

/// A detached signature over a document digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureEnvelope {
    pub alg: String,
    pub kid: String,
    /// Lowercase hex of the signed digest.
    pub digest: String,
    /// Base64 signature bytes.
    pub sig: String,
    pub signer: String,
}

impl SignatureEnvelope {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("envelope serializes")
    }

    pub fn from_json(text: &str) -> Result<SignatureEnvelope, IntegrityError> {
        serde_json::from_str(text).map_err(|e| IntegrityError::BadEnvelope(e.to_string()))
    }
}

/// The byte string a signature covers: algorithm, key id, signer, and
/// digest in a fixed-order newline-separated preamble.
fn signing_preamble(alg: &str, kid: &str, signer: &str, digest_hex: &str) -> Vec<u8> {
    format!("{alg}\n{kid}\n{signer}\n{digest_hex}\n").into_bytes()
}

pub fn sign(
    doc: &ConsentDocument,
    key: &SigningKey,
    key_id: &str,
    signer: &EntityRef,
) -> Result<SignatureEnvelope, IntegrityError> {
    let digest = digest(doc)?;
    let preamble = signing_preamble(SIGNATURE_ALG, key_id, signer.raw(), &digest.hex());
    let signature = key.sign(&preamble);
    Ok(SignatureEnvelope {
        alg: SIGNATURE_ALG.to_owned(),
        kid: key_id.to_owned(),
        digest: digest.hex(),
        sig: base64::Engine::encode(&base64::engine::general_purpose::STANDARD, signature.to_bytes()),
        signer: signer.raw().to_owned(),
    })
}

/// Why a verification failed, when it did.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOutcome {
    pub ok: bool,
    pub reason: Option<String>,
}

impl VerifyOutcome {
    fn fail(reason: impl Into<String>) -> VerifyOutcome {
        VerifyOutcome { ok: false, reason: Some(reason.into()) }
    }
}

/// True iff the document's digest matches the envelope and the signature
/// validates under `public_key`. Never errors: all failure modes yield
/// `ok = false` with a diagnostic reason.
pub fn verify(doc: &ConsentDocument, envelope: &SignatureEnvelope, public_key: &VerifyingKey) -> VerifyOutcome {
    if envelope.alg != SIGNATURE_ALG {
        return VerifyOutcome::fail(format!("unsupported algorithm '{}'", envelope.alg));
    }
    let digest = match digest(doc) {
        Ok(d) => d,
        Err(e) => return VerifyOutcome::fail(e.to_string()),
    };
    if digest.hex() != envelope.digest {
        return VerifyOutcome::fail(format!(
            "digest mismatch: document {} != envelope {}",
            digest.hex(),
            envelope.digest
        ));
    }
    let sig_bytes =
        match base64::Engine::decode(&base64::engine::general_purpose::STANDARD, &envelope.sig) {
            Ok(b) => b,
            Err(e) => return VerifyOutcome::fail(format!("bad signature encoding: {e}")),
        };
    let signature = match Signature::from_slice(&sig_bytes) {
        Ok(s) => s,
        Err(e) => return VerifyOutcome::fail(format!("bad signature bytes: {e}")),
    };
    let preamble = signing_preamble(&envelope.alg, &envelope.kid, &envelope.signer, &envelope.digest);
    match public_key.verify(&preamble, &signature) {
        Ok(()) => VerifyOutcome { ok: true, reason: None },
        Err(_) => VerifyOutcome::fail("signature does not verify"),
    }
}

// ---------------------------------------------------------------------------
// Key material helpers (hex-encoded files)
// ---------------------------------------------------------------------------

pub fn signing_key_from_hex(text: &str) -> Result<SigningKey, IntegrityError> {
    let bytes = hex::decode(text.trim())
        .map_err(|e| IntegrityError::BadKey(format!("invalid hex: {e}")))?;
    let seed: [u8; 32] = bytes
        .try_into()
        .map_err(|_| IntegrityError::BadKey("signing key must be 32 bytes".into()))?;
    Ok(SigningKey::from_bytes(&seed))
}

pub fn verifying_key_from_hex(text: &str) -> Result<VerifyingKey, IntegrityError> {
    let bytes = hex::decode(text.trim())
        .map_err(|e| IntegrityError::BadKey(format!("invalid hex: {e}")))?;
    let raw: [u8; 32] = bytes
        .try_into()
        .map_err(|_| IntegrityError::BadKey("public key must be 32 bytes".into()))?;
    VerifyingKey::from_bytes(&raw).map_err(|e| IntegrityError::BadKey(e.to_string()))
}

/// Default key id: first 8 hex chars of the sha-256 of the public key.
pub fn key_id_for(key: &VerifyingKey) -> String {
    hex::encode(Sha256::digest(key.as_bytes()))[..8].to_owned()
}

// ---------------------------------------------------------------------------
// Redaction
// ---------------------------------------------------------------------------

/// Record of what was redacted, attached to the record as an extension
/// so verifiers know redaction occurred. The salt itself is not stored,
/// only its digest.
#[derive(Debug, Clone, PartialEq)]
pub struct RedactionManifest {
    pub salt_digest: String,
    pub paths: Vec<String>,
}

pub const REDACTION_KEY: &str = "dpv-27560:redaction";

fn redacted_literal(original: &str, salt: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(salt);
    hasher.update(original.as_bytes());
    format!("redacted:sha-256:{}", hex::encode(hasher.finalize()))
}

fn parse_index(part: &str, prefix: &str) -> Option<usize> {
    part.strip_prefix(prefix)?.strip_prefix('[')?.strip_suffix(']')?.parse().ok()
}

/// Replace literal values selected by `paths` with salted digests.
/// Supported selectors:
/// `processes[i].personal_data[j].value`,
/// `processes[i].personal_data[j].identifier`,
/// `parties[i].identifiers`, `parties[i].emails`, `parties[i].phones`,
/// `parties[i].postal_addresses`.
/// Structure and cardinalities are unchanged; an empty path list is the
/// identity (no manifest attached).
pub fn redact(
    record: &ConsentRecord,
    paths: &[String],
    salt: &[u8],
) -> Result<(ConsentRecord, Option<RedactionManifest>), IntegrityError> {
    if paths.is_empty() {
        return Ok((record.clone(), None));
    }
    let mut out = record.clone();
    for path in paths {
        apply_redaction(&mut out, path, salt)?;
    }
    let manifest = RedactionManifest {
        salt_digest: sha256_digest(salt).hex(),
        paths: paths.to_vec(),
    };
    out.extensions.push((
        REDACTION_KEY.to_owned(),
        JsonValue::Object(vec![
            ("salt-digest".to_owned(), JsonValue::String(manifest.salt_digest.clone())),
            (
                "paths".to_owned(),
                JsonValue::Array(manifest.paths.iter().map(|p| JsonValue::String(p.clone())).collect()),
            ),
        ]),
    ));
    Ok((out, Some(manifest)))
}

fn apply_redaction(record: &mut ConsentRecord, path: &str, salt: &[u8]) -> Result<(), IntegrityError> {
    let not_found = || IntegrityError::PathNotFound(path.to_owned());
    let parts: Vec<&str> = path.split('.').collect();
    match parts.as_slice() {
        [p, d, field] if p.starts_with("processes[") && d.starts_with("personal_data[") => {
            let i = parse_index(p, "processes").ok_or_else(not_found)?;
            let j = parse_index(d, "personal_data").ok_or_else(not_found)?;
            let item = record
                .processes
                .get_mut(i)
                .and_then(|pr| pr.personal_data.get_mut(j))
                .ok_or_else(not_found)?;
            match *field {
                "value" => {
                    let value = item.literal_value.as_ref().ok_or_else(not_found)?;
                    item.literal_value = Some(redacted_literal(value, salt));
                }
                "identifier" => {
                    let value = item.identifier.as_ref().ok_or_else(not_found)?;
                    item.identifier = Some(redacted_literal(value, salt));
                }
                _ => return Err(IntegrityError::NonLiteralPath(path.to_owned())),
            }
            Ok(())
        }
        [p, field] if p.starts_with("parties[") => {
            let i = parse_index(p, "parties").ok_or_else(not_found)?;
            let entity = record.parties.get_mut(i).ok_or_else(not_found)?;
            match *field {
                "identifiers" => {
                    if entity.identifiers.is_empty() {
                        return Err(not_found());
                    }
                    for id in &mut entity.identifiers {
                        *id = redacted_literal(id, salt);
                    }
                }
                "emails" | "phones" | "postal_addresses" => {
                    let mut touched = false;
                    for contact in &mut entity.contacts {
                        let list = match *field {
                            "emails" => &mut contact.emails,
                            "phones" => &mut contact.phones,
                            _ => &mut contact.postal_addresses,
                        };
                        for value in list.iter_mut() {
                            *value = redacted_literal(value, salt);
                            touched = true;
                        }
                    }
                    if !touched {
                        return Err(not_found());
                    }
                }
                _ => return Err(IntegrityError::NonLiteralPath(path.to_owned())),
            }
            Ok(())
        }
        _ => Err(IntegrityError::NonLiteralPath(path.to_owned())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles;
    use crate::serialization;

    fn fixture_doc() -> ConsentDocument {
        let text = include_str!("../fixtures/consent-record.json");
        let doc = serialization::parse_document(text).unwrap();
        ConsentDocument::Record(serialization::parse_record(&doc).unwrap().value)
    }

    fn test_key() -> SigningKey {
        SigningKey::from_bytes(&[7u8; 32])
    }

    #[test]
    fn sign_verify_round_trip() {
        let doc = fixture_doc();
        let key = test_key();
        let signer = EntityRef::Id("ex:Acme".into());
        let envelope = sign(&doc, &key, "k1", &signer).unwrap();
        assert_eq!(envelope.alg, "ed25519");
        let outcome = verify(&doc, &envelope, &key.verifying_key());
        assert!(outcome.ok, "{:?}", outcome.reason);

        let other = SigningKey::from_bytes(&[9u8; 32]);
        assert!(!verify(&doc, &envelope, &other.verifying_key()).ok);
    }

    #[test]
    fn mutation_changes_digest_and_breaks_verify() {
        let ConsentDocument::Record(record) = fixture_doc() else { unreachable!() };
        let d1 = digest_record(&record).unwrap();

        let mut mutated = record.clone();
        mutated.events[1].event_time = crate::model::Timestamp::parse("2024-04-21").unwrap();
        let d2 = digest_record(&mutated).unwrap();
        assert_ne!(d1, d2);

        let key = test_key();
        let signer = EntityRef::Id("ex:Acme".into());
        let envelope = sign(&ConsentDocument::Record(record), &key, "k1", &signer).unwrap();
        let outcome = verify(&ConsentDocument::Record(mutated), &envelope, &key.verifying_key());
        assert!(!outcome.ok);
        assert!(outcome.reason.unwrap().contains("digest mismatch"));
    }

    #[test]
    fn envelope_json_round_trips() {
        let doc = fixture_doc();
        let key = test_key();
        let envelope = sign(&doc, &key, "k1", &EntityRef::Id("ex:Acme".into())).unwrap();
        let text = envelope.to_json();
        assert_eq!(SignatureEnvelope::from_json(&text).unwrap(), envelope);
    }

    #[test]
    fn redact_email_keeps_record_valid() {
        let ConsentDocument::Record(record) = fixture_doc() else { unreachable!() };
        let paths = vec!["processes[0].personal_data[0].value".to_owned()];
        let (redacted, manifest) = redact(&record, &paths, b"salt").unwrap();
        let manifest = manifest.unwrap();
        assert_eq!(manifest.paths, paths);
        let value = redacted.processes[0].personal_data[0].literal_value.as_ref().unwrap();
        assert!(value.starts_with("redacted:sha-256:"));
        assert_ne!(digest_record(&record).unwrap(), digest_record(&redacted).unwrap());

        let report = profiles::validate_record(&redacted, "record").unwrap();
        assert!(report.passed, "{:#?}", report.findings);
    }

    #[test]
    fn redact_empty_paths_is_identity() {
        let ConsentDocument::Record(record) = fixture_doc() else { unreachable!() };
        let (same, manifest) = redact(&record, &[], b"salt").unwrap();
        assert!(manifest.is_none());
        assert_eq!(same, record);
    }

    #[test]
    fn redact_bad_paths_error() {
        let ConsentDocument::Record(record) = fixture_doc() else { unreachable!() };
        assert!(matches!(
            redact(&record, &["processes[9].personal_data[0].value".to_owned()], b"s"),
            Err(IntegrityError::PathNotFound(_))
        ));
        assert!(matches!(
            redact(&record, &["processes[0].personal_data[0].types".to_owned()], b"s"),
            Err(IntegrityError::NonLiteralPath(_))
        ));
    }
}
