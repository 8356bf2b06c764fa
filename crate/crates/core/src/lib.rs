//! Conformance toolkit for consent records and consent receipts expressed
//! with the Data Privacy Vocabulary: parsing, profile validation, lifecycle
//! tracking, receipt issuance, integrity (digests and signatures), and a
//! file-backed store.

pub mod integrity;
pub mod json;
pub mod lifecycle;
pub mod model;
pub mod profiles;
pub mod receipts;
pub mod serialization;
pub mod store;
pub mod vocabulary;

pub use json::JsonValue;
pub use model::{ConsentDocument, ConsentRecord, ConsentReceipt};
pub use serialization::{parse_document, parse_record, parse_receipt, SerializeMode};
pub use vocabulary::Registry;
