//! File-backed persistence and querying of records and receipts.
//!
//! Layout: one canonical document per file, sharded by the first two hex
//! chars of its digest, with records and receipts in separate subtrees.
//! Writes are atomic (temp file + rename) and serialized via an advisory
//! lock on `store.lock`. The store is append-only: no deletion, and an id
//! can never change content (`IdConflict`). Indexes are derivable purely
//! from the stored documents, so `rebuild_index` always reproduces the
//! live index.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::lifecycle::{self, ConsentState};
use crate::model::{ConsentDocument, ConsentRecord};
use crate::profiles::{self, ValidationReport};
use crate::receipts;
use crate::serialization::{self, SerializeMode};
use crate::integrity;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("document fails validation")]
    ValidationFailed(ValidationReport),
    #[error("id conflict: '{id}' already stored with different content")]
    IdConflict { id: String },
    #[error("document has no identifier")]
    MissingId,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("unparseable document: {0}")]
    Corrupt(String),
}

/// A stored file that could not be decoded during an index rebuild.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptDocument {
    pub path: PathBuf,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StoreIndex {
    pub by_subject: BTreeMap<String, BTreeSet<String>>,
    pub by_controller: BTreeMap<String, BTreeSet<String>>,
    pub by_status: BTreeMap<String, BTreeSet<String>>,
    pub by_purpose: BTreeMap<String, BTreeSet<String>>,
    /// record id -> file path
    pub record_locations: BTreeMap<String, PathBuf>,
    /// receipt id -> file path
    pub receipt_locations: BTreeMap<String, PathBuf>,
    /// id -> digest hex, for conflict detection
    pub digests: BTreeMap<String, String>,
}

/// Index keys are normalized to expanded IRIs so the live index and a
/// rebuild from canonical files (which store IRIs) agree.
fn index_key(raw: &str) -> String {
    crate::vocabulary::Registry::builtin().expand(raw).unwrap_or_else(|_| raw.to_owned())
}

impl StoreIndex {
    fn add_record(&mut self, id: &str, record: &ConsentRecord, path: PathBuf, digest_hex: String) {
        let insert = |map: &mut BTreeMap<String, BTreeSet<String>>, key: String| {
            map.entry(key).or_default().insert(id.to_owned());
        };
        if let Some(subject) = &record.data_subject {
            insert(&mut self.by_subject, index_key(subject.raw()));
            if let Ok(entity) = record.entity_lookup(subject) {
                if let Some(eid) = &entity.id {
                    insert(&mut self.by_subject, index_key(eid));
                }
            }
        }
        for i in 0..record.processes.len() {
            let merged = record.resolve_process_view(i).expect("index in range");
            for controller in &merged.data_controllers {
                insert(&mut self.by_controller, index_key(controller.raw()));
            }
            for purpose in &merged.purposes {
                insert(&mut self.by_purpose, purpose.iri().to_owned());
            }
        }
        for event in &record.events {
            if let Some(state) = event.status.as_ref().and_then(ConsentState::from_term) {
                insert(&mut self.by_status, state.name().to_owned());
            }
        }
        self.record_locations.insert(id.to_owned(), path);
        self.digests.insert(id.to_owned(), digest_hex);
    }
}

/// Query clauses; all provided clauses must match.
#[derive(Debug, Clone, Default)]
pub struct QueryFilter {
    pub subject: Option<String>,
    pub controller: Option<String>,
    pub purpose: Option<String>,
    pub status_at: Option<(ConsentState, DateTime<Utc>)>,
}

pub struct Store {
    root: PathBuf,
    index: StoreIndex,
}

fn shard_path(base: &Path, kind: &str, digest_hex: &str) -> PathBuf {
    base.join(kind).join(&digest_hex[..2]).join(format!("{digest_hex}.json"))
}

impl Store {
    /// Open (creating if needed) a store rooted at `root`; the in-memory
    /// index is rebuilt from the stored documents.
    pub fn open(root: impl Into<PathBuf>) -> Result<Store, StoreError> {
        let root = root.into();
        fs::create_dir_all(root.join("records"))?;
        fs::create_dir_all(root.join("receipts"))?;
        let (index, _corrupt) = rebuild_index(&root)?;
        Ok(Store { root, index })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn index(&self) -> &StoreIndex {
        &self.index
    }

    fn lock(&self) -> Result<fs::File, StoreError> {
        let lock_path = self.root.join("store.lock");
        let file = fs::OpenOptions::new().create(true).append(true).open(lock_path)?;
        file.lock()?;
        Ok(file)
    }

    /// Store a document. The document must pass its declared profile.
    /// Idempotent for identical content; same id with different content is
    /// an `IdConflict`. Returns the primary id.
    pub fn put(&mut self, doc: &ConsentDocument) -> Result<String, StoreError> {
        let (report, kind) = match doc {
            ConsentDocument::Record(record) => {
                let profile_name = match &record.schema_version {
                    Some(term)
                        if term.iri().ends_with("#record-eu-gdpr") =>
                    {
                        "record-eu-gdpr"
                    }
                    _ => "record",
                };
                (
                    profiles::validate_record(record, profile_name)
                        .map_err(|e| StoreError::Corrupt(e.to_string()))?,
                    "records",
                )
            }
            ConsentDocument::Receipt(receipt) => (receipts::receipt_completeness(receipt), "receipts"),
        };
        if !report.passed {
            return Err(StoreError::ValidationFailed(report));
        }
        let id = doc.primary_id().ok_or(StoreError::MissingId)?.to_owned();
        let bytes = serialization::serialize_document(doc, SerializeMode::Canonical)
            .map_err(|e| StoreError::Corrupt(e.to_string()))?;
        let digest_hex = integrity::digest(doc).map_err(|e| StoreError::Corrupt(e.to_string()))?.hex();

        let _guard = self.lock()?;
        if let Some(existing) = self.index.digests.get(&id) {
            if *existing == digest_hex {
                return Ok(id);
            }
            return Err(StoreError::IdConflict { id });
        }

        let path = shard_path(&self.root, kind, &digest_hex);
        fs::create_dir_all(path.parent().expect("sharded path has parent"))?;
        let tmp = self.root.join(format!(".tmp-{digest_hex}"));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &path)?;

        match doc {
            ConsentDocument::Record(record) => {
                self.index.add_record(&id, record, path, digest_hex);
            }
            ConsentDocument::Receipt(_) => {
                self.index.receipt_locations.insert(id.clone(), path);
                self.index.digests.insert(id.clone(), digest_hex);
            }
        }
        Ok(id)
    }

    /// Load a stored record by id.
    pub fn get_record(&self, id: &str) -> Result<ConsentRecord, StoreError> {
        let path = self
            .index
            .record_locations
            .get(id)
            .ok_or_else(|| StoreError::Corrupt(format!("unknown record id '{id}'")))?;
        load_record(path)
    }

    /// Load a stored receipt by id.
    pub fn get_receipt(&self, id: &str) -> Result<crate::model::ConsentReceipt, StoreError> {
        let path = self
            .index
            .receipt_locations
            .get(id)
            .ok_or_else(|| StoreError::Corrupt(format!("unknown receipt id '{id}'")))?;
        let text = fs::read_to_string(path)?;
        let doc = serialization::parse_document(&text)
            .map_err(|e| StoreError::Corrupt(e.to_string()))?;
        Ok(serialization::parse_receipt(&doc)
            .map_err(|e| StoreError::Corrupt(e.to_string()))?
            .value)
    }

    /// Record ids matching every provided clause, sorted. `status_at` is
    /// computed exactly with the lifecycle state machine, not from the
    /// index.
    pub fn query(&self, filter: &QueryFilter) -> Result<Vec<String>, StoreError> {
        let mut ids: BTreeSet<String> = self.index.record_locations.keys().cloned().collect();
        if let Some(subject) = &filter.subject {
            let matching =
                self.index.by_subject.get(&index_key(subject)).cloned().unwrap_or_default();
            ids.retain(|id| matching.contains(id));
        }
        if let Some(controller) = &filter.controller {
            let matching =
                self.index.by_controller.get(&index_key(controller)).cloned().unwrap_or_default();
            ids.retain(|id| matching.contains(id));
        }
        if let Some(purpose) = &filter.purpose {
            let matching =
                self.index.by_purpose.get(&index_key(purpose)).cloned().unwrap_or_default();
            ids.retain(|id| matching.contains(id));
        }
        if let Some((state, at)) = &filter.status_at {
            let mut kept = BTreeSet::new();
            for id in &ids {
                let record = self.get_record(id)?;
                if lifecycle::current_status(&record, *at) == *state {
                    kept.insert(id.clone());
                }
            }
            ids = kept;
        }
        Ok(ids.into_iter().collect())
    }
}

fn load_record(path: &Path) -> Result<ConsentRecord, StoreError> {
    let text = fs::read_to_string(path)?;
    let doc = serialization::parse_document(&text).map_err(|e| StoreError::Corrupt(e.to_string()))?;
    Ok(serialization::parse_record(&doc).map_err(|e| StoreError::Corrupt(e.to_string()))?.value)
}

fn walk_json_files(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    if !dir.exists() {
        return Ok(());
    }
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        if path.is_dir() {
            walk_json_files(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "json") {
            out.push(path);
        }
    }
    Ok(())
}

/// Rebuild the index purely from the documents under `root`. Undecodable
/// files are listed, skipped, and reported.
pub fn rebuild_index(root: &Path) -> Result<(StoreIndex, Vec<CorruptDocument>), StoreError> {
    let mut index = StoreIndex::default();
    let mut corrupt = Vec::new();

    let mut record_files = Vec::new();
    walk_json_files(&root.join("records"), &mut record_files)?;
    record_files.sort();
    for path in record_files {
        let digest_hex = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_owned();
        match load_record(&path) {
            Ok(record) => {
                let Some(id) = record.primary_id().map(str::to_owned) else {
                    corrupt.push(CorruptDocument { path, message: "record has no identifier".into() });
                    continue;
                };
                index.add_record(&id, &record, path, digest_hex);
            }
            Err(e) => corrupt.push(CorruptDocument { path, message: e.to_string() }),
        }
    }

    let mut receipt_files = Vec::new();
    walk_json_files(&root.join("receipts"), &mut receipt_files)?;
    receipt_files.sort();
    for path in receipt_files {
        let digest_hex = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_owned();
        let parsed = fs::read_to_string(&path)
            .map_err(StoreError::from)
            .and_then(|text| {
                serialization::parse_document(&text)
                    .map_err(|e| StoreError::Corrupt(e.to_string()))
            })
            .and_then(|doc| {
                serialization::parse_receipt(&doc)
                    .map(|p| p.value)
                    .map_err(|e| StoreError::Corrupt(e.to_string()))
            });
        match parsed {
            Ok(receipt) => {
                let Some(id) = receipt.primary_id().map(str::to_owned) else {
                    corrupt.push(CorruptDocument { path, message: "receipt has no identifier".into() });
                    continue;
                };
                index.receipt_locations.insert(id.clone(), path);
                index.digests.insert(id, digest_hex);
            }
            Err(e) => corrupt.push(CorruptDocument { path, message: e.to_string() }),
        }
    }

    Ok((index, corrupt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn fixture_record() -> ConsentRecord {
        let text = include_str!("../fixtures/consent-record.json");
        let doc = serialization::parse_document(text).unwrap();
        serialization::parse_record(&doc).unwrap().value
    }

    #[test]
    fn put_get_query_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open(dir.path()).unwrap();
        let record = fixture_record();
        let id = store.put(&ConsentDocument::Record(record.clone())).unwrap();
        assert_eq!(id, "a6f58318-72e6-46a2-bfd7-f36d795e30cd");

        // Idempotent re-put.
        assert_eq!(store.put(&ConsentDocument::Record(record.clone())).unwrap(), id);

        // Same id, mutated content -> conflict.
        let mut mutated = record.clone();
        mutated.jurisdictions.push(
            crate::model::Term::parse("loc:FR", crate::vocabulary::Registry::builtin()).unwrap(),
        );
        assert!(matches!(
            store.put(&ConsentDocument::Record(mutated)),
            Err(StoreError::IdConflict { .. })
        ));

        // Stored form is canonical, so lexical forms normalize; compare
        // by canonical digest.
        let loaded = store.get_record(&id).unwrap();
        assert_eq!(
            integrity::digest_record(&loaded).unwrap(),
            integrity::digest_record(&record).unwrap()
        );

        let at = Utc.with_ymd_and_hms(2024, 5, 1, 0, 0, 0).unwrap();
        let hits = store
            .query(&QueryFilter {
                status_at: Some((ConsentState::Withdrawn, at)),
                ..Default::default()
            })
            .unwrap();
        assert_eq!(hits, vec![id.clone()]);

        let at_feb = Utc.with_ymd_and_hms(2024, 2, 1, 0, 0, 0).unwrap();
        let misses = store
            .query(&QueryFilter {
                status_at: Some((ConsentState::Withdrawn, at_feb)),
                ..Default::default()
            })
            .unwrap();
        assert!(misses.is_empty());

        // Empty filter returns everything.
        assert_eq!(store.query(&QueryFilter::default()).unwrap(), vec![id.clone()]);

        // Rebuilt index equals the live one.
        let (rebuilt, corrupt) = rebuild_index(dir.path()).unwrap();
        assert!(corrupt.is_empty());
        assert_eq!(&rebuilt, store.index());
    }

    #[test]
    fn interrupted_put_leaves_store_intact() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open(dir.path()).unwrap();
        let record = fixture_record();
        store.put(&ConsentDocument::Record(record)).unwrap();
        let before = store.index().clone();

        // Simulate a crash between temp write and rename: a stray temp
        // file appears under the root.
        fs::write(dir.path().join(".tmp-deadbeef"), b"partial{").unwrap();

        let (rebuilt, corrupt) = rebuild_index(dir.path()).unwrap();
        assert!(corrupt.is_empty());
        assert_eq!(rebuilt, before);
    }

    #[test]
    fn corrupt_file_is_reported_and_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open(dir.path()).unwrap();
        let record = fixture_record();
        store.put(&ConsentDocument::Record(record)).unwrap();

        let bad = dir.path().join("records").join("zz");
        fs::create_dir_all(&bad).unwrap();
        fs::write(bad.join("zzzz.json"), b"{ not json").unwrap();

        let (rebuilt, corrupt) = rebuild_index(dir.path()).unwrap();
        assert_eq!(corrupt.len(), 1);
        assert_eq!(rebuilt.record_locations.len(), 1);
    }

    #[test]
    fn empty_root_empty_index() {
        let dir = tempfile::tempdir().unwrap();
        let (index, corrupt) = rebuild_index(dir.path()).unwrap();
        assert_eq!(index, StoreIndex::default());
        assert!(corrupt.is_empty());
    }

    #[test]
    fn invalid_document_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open(dir.path()).unwrap();
        let mut record = fixture_record();
        record.data_subject = None;
        assert!(matches!(
            store.put(&ConsentDocument::Record(record)),
            Err(StoreError::ValidationFailed(_))
        ));
    }
}
