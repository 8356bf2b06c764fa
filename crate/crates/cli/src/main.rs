//! Command-line interface for the consent record conformance toolkit.
//!
//! Exit codes: 0 success/valid, 1 validation errors, 2 usage error,
//! 3 I/O or integrity failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{DateTime, Utc};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use consent27560::integrity;
use consent27560::lifecycle::{self, ConsentState};
use consent27560::model::{
    ConsentDocument, ConsentEvent, ConsentRecord, ConsentReceipt, EntityRef, Timestamp,
};
use consent27560::profiles::{self, ProfileError, Severity};
use consent27560::receipts::{self, IssueMode};
use consent27560::serialization::{self, ParseError, SerializeMode};
use consent27560::store::{QueryFilter, Store};
use consent27560::Registry;

const EXIT_OK: u8 = 0;
const EXIT_INVALID: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(
    name = "consent27560",
    version,
    about = "Parse, validate, and manage consent records and receipts"
)]
struct Cli {
    /// Output format for reports.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a record or receipt against a profile.
    Validate {
        file: PathBuf,
        /// Profile IRI or shortname (record, record-eu-gdpr, receipt,
        /// receipt-eu-gdpr).
        #[arg(long)]
        profile: String,
    },
    /// Record management.
    Record {
        #[command(subcommand)]
        command: RecordCommand,
    },
    /// Consent event management.
    Event {
        #[command(subcommand)]
        command: EventCommand,
    },
    /// Receipt issuance.
    Receipt {
        #[command(subcommand)]
        command: ReceiptCommand,
    },
    /// Print the canonical content digest of a record or receipt.
    Digest { file: PathBuf },
    /// Sign a record or receipt with an ed25519 key (hex-encoded file).
    Sign {
        file: PathBuf,
        /// Path to a 32-byte hex-encoded signing key.
        #[arg(long)]
        key: PathBuf,
        /// Signing party reference; defaults to the document's first
        /// controller or publisher.
        #[arg(long)]
        signer: Option<String>,
        /// Write the signature envelope here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify a detached signature envelope.
    Verify {
        file: PathBuf,
        /// Path to the signature envelope JSON.
        #[arg(long)]
        sig: PathBuf,
        /// Path to a 32-byte hex-encoded public key.
        #[arg(long = "pub")]
        public: PathBuf,
    },
    /// Store a record or receipt in a consent store.
    Put {
        file: PathBuf,
        /// Store root directory (or set CONSENT_STORE).
        #[arg(long, env = "CONSENT_STORE")]
        store: PathBuf,
    },
    /// Query record ids in a consent store.
    Query {
        /// Store root directory (or set CONSENT_STORE).
        #[arg(env = "CONSENT_STORE")]
        store: PathBuf,
        #[arg(long)]
        subject: Option<String>,
        #[arg(long)]
        controller: Option<String>,
        #[arg(long)]
        purpose: Option<String>,
        /// Consent state (e.g. Given, Withdrawn); requires --at.
        #[arg(long, requires = "at")]
        status: Option<String>,
        /// Timestamp at which --status is evaluated.
        #[arg(long)]
        at: Option<String>,
    },
    /// Look up clause mappings and GDPR references.
    Crosswalk { query: String },
}

#[derive(Subcommand)]
enum RecordCommand {
    /// Create a record from a template, with a fresh identifier.
    New {
        #[arg(long)]
        from: PathBuf,
        /// Write the record here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum EventCommand {
    /// Append a consent event to a record.
    Add {
        record: PathBuf,
        /// Target consent state (e.g. Given, Withdrawn).
        #[arg(long)]
        status: String,
        /// Event time; defaults to --now, then to the system clock.
        #[arg(long)]
        time: Option<String>,
        /// Acting party reference.
        #[arg(long, default_value = "dpv:DataSubject")]
        actor: String,
        /// Indication method note.
        #[arg(long)]
        method: Option<String>,
        /// Reject illegal transitions instead of annotating them.
        #[arg(long)]
        strict: bool,
        /// Injected clock for deterministic output.
        #[arg(long)]
        now: Option<String>,
        /// Write the updated record here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ReceiptCommand {
    /// Issue a receipt over one or more records.
    Issue {
        #[arg(required = true)]
        records: Vec<PathBuf>,
        #[arg(long)]
        id: String,
        #[arg(long)]
        publisher: String,
        #[arg(long)]
        recipient: String,
        /// Strip optional fields from the embedded records.
        #[arg(long)]
        mandatory_only: bool,
        /// Injected clock for deterministic output.
        #[arg(long)]
        now: Option<String>,
        /// Write the receipt here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Failure {
        Failure { code: EXIT_INVALID, message: message.into() }
    }
    fn usage(message: impl Into<String>) -> Failure {
        Failure { code: EXIT_USAGE, message: message.into() }
    }
    fn io(message: impl Into<String>) -> Failure {
        Failure { code: EXIT_IO, message: message.into() }
    }
}

fn read_file(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::io(format!("cannot read {}: {e}", path.display())))
}

fn write_output(out: Option<&PathBuf>, content: &str) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| Failure::io(format!("cannot write {}: {e}", path.display()))),
        None => {
            println!("{content}");
            Ok(())
        }
    }
}

enum Loaded {
    Record(ConsentRecord, Vec<String>),
    Receipt(ConsentReceipt, Vec<String>),
}

fn load_document(path: &Path) -> Result<Loaded, Failure> {
    let text = read_file(path)?;
    let doc = serialization::parse_document(&text)
        .map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
    match serialization::parse_record(&doc) {
        Ok(parsed) => Ok(Loaded::Record(parsed.value, parsed.warnings)),
        Err(ParseError::NotARecord(_)) => match serialization::parse_receipt(&doc) {
            Ok(parsed) => Ok(Loaded::Receipt(parsed.value, parsed.warnings)),
            Err(e) => Err(Failure::invalid(format!("{}: {e}", path.display()))),
        },
        Err(e) => Err(Failure::invalid(format!("{}: {e}", path.display()))),
    }
}

fn load_record(path: &Path) -> Result<(ConsentRecord, Vec<String>), Failure> {
    match load_document(path)? {
        Loaded::Record(record, warnings) => Ok((record, warnings)),
        Loaded::Receipt(..) => {
            Err(Failure::invalid(format!("{}: expected a consent record", path.display())))
        }
    }
}

fn parse_instant(raw: &str, what: &str) -> Result<DateTime<Utc>, Failure> {
    Timestamp::parse(raw)
        .map(|t| t.instant())
        .map_err(|e| Failure::usage(format!("invalid {what} '{raw}': {e}")))
}

fn entity_ref(raw: &str) -> EntityRef {
    EntityRef::parse(raw, Registry::builtin())
}

fn pretty(doc: &ConsentDocument) -> Result<String, Failure> {
    let bytes = serialization::serialize_document(doc, SerializeMode::Pretty)
        .map_err(|e| Failure::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("serializer emits utf-8"))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate { file, profile } => cmd_validate(&file, &profile, cli.format),
        Command::Record { command } => match command {
            RecordCommand::New { from, out } => cmd_record_new(&from, out.as_ref()),
        },
        Command::Event { command } => match command {
            EventCommand::Add { record, status, time, actor, method, strict, now, out } => {
                cmd_event_add(
                    &record,
                    &status,
                    time.as_deref(),
                    &actor,
                    method.as_deref(),
                    strict,
                    now.as_deref(),
                    out.as_ref(),
                )
            }
        },
        Command::Receipt { command } => match command {
            ReceiptCommand::Issue {
                records,
                id,
                publisher,
                recipient,
                mandatory_only,
                now,
                out,
            } => cmd_receipt_issue(
                &records,
                &id,
                &publisher,
                &recipient,
                mandatory_only,
                now.as_deref(),
                out.as_ref(),
            ),
        },
        Command::Digest { file } => cmd_digest(&file, cli.format),
        Command::Sign { file, key, signer, out } => {
            cmd_sign(&file, &key, signer.as_deref(), out.as_ref())
        }
        Command::Verify { file, sig, public } => cmd_verify(&file, &sig, &public, cli.format),
        Command::Put { file, store } => cmd_put(&file, &store),
        Command::Query { store, subject, controller, purpose, status, at } => {
            cmd_query(&store, subject, controller, purpose, status, at, cli.format)
        }
        Command::Crosswalk { query } => cmd_crosswalk(&query, cli.format),
    }
}

fn cmd_validate(file: &Path, profile_name: &str, format: Format) -> Result<(), Failure> {
    // Resolve the profile first so unknown names are usage errors.
    profiles::profile(profile_name).map_err(|e| match e {
        ProfileError::UnknownProfile(_) => Failure::usage(e.to_string()),
        other => Failure::invalid(other.to_string()),
    })?;

    let (doc, warnings) = match load_document(file)? {
        Loaded::Record(record, warnings) => (ConsentDocument::Record(record), warnings),
        Loaded::Receipt(receipt, warnings) => (ConsentDocument::Receipt(receipt), warnings),
    };
    let report = profiles::validate(&doc, profile_name)
        .map_err(|e| Failure::invalid(e.to_string()))?;

    match format {
        Format::Json => {
            let findings: Vec<_> = report
                .findings
                .iter()
                .map(|f| {
                    json!({
                        "severity": match f.severity {
                            Severity::Error => "error",
                            Severity::Warning => "warning",
                        },
                        "path": f.path,
                        "rule": f.rule,
                        "message": f.message,
                        "gdpr_refs": f.gdpr_refs,
                    })
                })
                .collect();
            let out = json!({
                "profile": profile_name,
                "passed": report.passed,
                "findings": findings,
                "warnings": warnings,
            });
            println!("{}", serde_json::to_string_pretty(&out).expect("valid json"));
        }
        Format::Text => {
            for warning in &warnings {
                eprintln!("warning: {warning}");
            }
            for finding in &report.findings {
                let tag = match finding.severity {
                    Severity::Error => "error",
                    Severity::Warning => "warning",
                };
                let refs = if finding.gdpr_refs.is_empty() {
                    String::new()
                } else {
                    format!(" [gdpr: {}]", finding.gdpr_refs.join(", "))
                };
                println!("{tag}: {}: {}{refs}", finding.path, finding.message);
            }
            println!("{}", if report.passed { "passed" } else { "failed" });
        }
    }
    if report.passed {
        Ok(())
    } else {
        Err(Failure { code: EXIT_INVALID, message: String::new() })
    }
}

fn cmd_record_new(from: &Path, out: Option<&PathBuf>) -> Result<(), Failure> {
    use rand::RngCore;
    let (mut record, _) = load_record(from)?;
    let mut bytes = [0u8; 16];
    rand::thread_rng().fill_bytes(&mut bytes);
    let hex = hex::encode(bytes);
    let id = format!("{}-{}-{}-{}-{}", &hex[..8], &hex[8..12], &hex[12..16], &hex[16..20], &hex[20..]);
    record.record_ids = vec![id.clone()];
    record.iri = Some(format!("https://example.com/{id}"));
    record.events.clear();
    record.annotations.clear();
    let text = pretty(&ConsentDocument::Record(record))?;
    write_output(out, &text)
}

#[allow(clippy::too_many_arguments)]
fn cmd_event_add(
    record_path: &Path,
    status: &str,
    time: Option<&str>,
    actor: &str,
    method: Option<&str>,
    strict: bool,
    now: Option<&str>,
    out: Option<&PathBuf>,
) -> Result<(), Failure> {
    let (record, _) = load_record(record_path)?;
    let state = ConsentState::parse(status)
        .ok_or_else(|| Failure::usage(format!("unknown consent state '{status}'")))?;
    let status_term = state
        .term()
        .ok_or_else(|| Failure::usage("cannot append an event with an unknown state"))?;

    let event_time = match (time, now) {
        (Some(raw), _) => parse_instant(raw, "time")?,
        (None, Some(raw)) => parse_instant(raw, "now")?,
        (None, None) => Utc::now(),
    };
    let event = ConsentEvent {
        status: Some(status_term),
        consent_type: None,
        extra_types: Vec::new(),
        event_time: Timestamp::from_instant(event_time),
        duration: None,
        actor: Some(entity_ref(actor)),
        methods: method.into_iter().map(str::to_owned).collect(),
        extensions: Vec::new(),
    };
    let updated = lifecycle::append_event(&record, event, strict)
        .map_err(|e| Failure::invalid(e.to_string()))?;
    for note in &updated.annotations {
        eprintln!("warning: {note}");
    }
    let text = pretty(&ConsentDocument::Record(updated))?;
    write_output(out, &text)
}

fn cmd_receipt_issue(
    record_paths: &[PathBuf],
    id: &str,
    publisher: &str,
    recipient: &str,
    mandatory_only: bool,
    now: Option<&str>,
    out: Option<&PathBuf>,
) -> Result<(), Failure> {
    let mut records = Vec::new();
    for path in record_paths {
        records.push(load_record(path)?.0);
    }
    let clock = match now {
        Some(raw) => parse_instant(raw, "now")?,
        None => Utc::now(),
    };
    let mode = if mandatory_only { IssueMode::MandatoryOnly } else { IssueMode::Full };
    let issued = receipts::issue_receipt(
        &records,
        id,
        entity_ref(publisher),
        entity_ref(recipient),
        mode,
        clock,
    )
    .map_err(|e| Failure::invalid(e.to_string()))?;
    for warning in &issued.warnings {
        eprintln!("warning: {warning}");
    }
    let text = pretty(&ConsentDocument::Receipt(issued.receipt))?;
    write_output(out, &text)
}

fn cmd_digest(file: &Path, format: Format) -> Result<(), Failure> {
    let doc = match load_document(file)? {
        Loaded::Record(record, _) => ConsentDocument::Record(record),
        Loaded::Receipt(receipt, _) => ConsentDocument::Receipt(receipt),
    };
    let digest = integrity::digest(&doc).map_err(|e| Failure::invalid(e.to_string()))?;
    match format {
        Format::Json => println!(
            "{}",
            json!({ "algorithm": digest.algorithm, "digest": digest.hex() })
        ),
        Format::Text => println!("{}", digest.hex()),
    }
    Ok(())
}

fn default_signer(doc: &ConsentDocument) -> EntityRef {
    match doc {
        ConsentDocument::Record(record) => record
            .controllers
            .first()
            .cloned()
            .unwrap_or_else(|| entity_ref("dpv:DataController")),
        ConsentDocument::Receipt(receipt) => receipt
            .publisher
            .clone()
            .unwrap_or_else(|| entity_ref("dpv:DataController")),
    }
}

fn cmd_sign(
    file: &Path,
    key_path: &Path,
    signer: Option<&str>,
    out: Option<&PathBuf>,
) -> Result<(), Failure> {
    let doc = match load_document(file)? {
        Loaded::Record(record, _) => ConsentDocument::Record(record),
        Loaded::Receipt(receipt, _) => ConsentDocument::Receipt(receipt),
    };
    let key_text = read_file(key_path)?;
    let key = integrity::signing_key_from_hex(&key_text)
        .map_err(|e| Failure::io(e.to_string()))?;
    let kid = integrity::key_id_for(&key.verifying_key());
    let signer = signer.map(entity_ref).unwrap_or_else(|| default_signer(&doc));
    let envelope = integrity::sign(&doc, &key, &kid, &signer)
        .map_err(|e| Failure::invalid(e.to_string()))?;
    write_output(out, &envelope.to_json())
}

fn cmd_verify(file: &Path, sig: &Path, public: &Path, format: Format) -> Result<(), Failure> {
    let doc = match load_document(file)? {
        Loaded::Record(record, _) => ConsentDocument::Record(record),
        Loaded::Receipt(receipt, _) => ConsentDocument::Receipt(receipt),
    };
    let envelope = integrity::SignatureEnvelope::from_json(&read_file(sig)?)
        .map_err(|e| Failure::io(e.to_string()))?;
    let key = integrity::verifying_key_from_hex(&read_file(public)?)
        .map_err(|e| Failure::io(e.to_string()))?;
    let outcome = integrity::verify(&doc, &envelope, &key);
    match format {
        Format::Json => println!(
            "{}",
            json!({ "ok": outcome.ok, "reason": outcome.reason })
        ),
        Format::Text => match &outcome.reason {
            Some(reason) => println!("verification failed: {reason}"),
            None => println!("verification ok"),
        },
    }
    if outcome.ok {
        Ok(())
    } else {
        Err(Failure { code: EXIT_IO, message: String::new() })
    }
}

fn cmd_put(file: &Path, store_root: &Path) -> Result<(), Failure> {
    let doc = match load_document(file)? {
        Loaded::Record(record, _) => ConsentDocument::Record(record),
        Loaded::Receipt(receipt, _) => ConsentDocument::Receipt(receipt),
    };
    let mut store = Store::open(store_root).map_err(|e| Failure::io(e.to_string()))?;
    let id = store.put(&doc).map_err(|e| match e {
        consent27560::store::StoreError::ValidationFailed(report) => {
            let details: Vec<String> =
                report.errors().map(|f| format!("{}: {}", f.path, f.message)).collect();
            Failure::invalid(format!("document fails its profile:\n{}", details.join("\n")))
        }
        other => Failure::io(other.to_string()),
    })?;
    println!("{id}");
    Ok(())
}

fn cmd_query(
    store_root: &Path,
    subject: Option<String>,
    controller: Option<String>,
    purpose: Option<String>,
    status: Option<String>,
    at: Option<String>,
    format: Format,
) -> Result<(), Failure> {
    let status_at = match (status, at) {
        (Some(state_name), Some(at_raw)) => {
            let state = ConsentState::parse(&state_name)
                .ok_or_else(|| Failure::usage(format!("unknown consent state '{state_name}'")))?;
            Some((state, parse_instant(&at_raw, "at")?))
        }
        (None, _) => None,
        (Some(_), None) => return Err(Failure::usage("--status requires --at")),
    };
    let filter = QueryFilter { subject, controller, purpose, status_at };
    let store = Store::open(store_root).map_err(|e| Failure::io(e.to_string()))?;
    let ids = store.query(&filter).map_err(|e| Failure::io(e.to_string()))?;
    match format {
        Format::Json => println!("{}", json!(ids)),
        Format::Text => {
            for id in ids {
                println!("{id}");
            }
        }
    }
    Ok(())
}

fn cmd_crosswalk(query: &str, format: Format) -> Result<(), Failure> {
    let entries = profiles::gdpr_requirements(query);
    if entries.is_empty() {
        return Err(Failure::usage(format!("no crosswalk entry matches '{query}'")));
    }
    match format {
        Format::Json => {
            let rows: Vec<_> = entries
                .iter()
                .map(|e| {
                    json!({
                        "clause": e.iso27560_clause,
                        "name": e.iso27560_name,
                        "iso29184": e.iso29184_refs,
                        "gdpr": e.gdpr_refs,
                        "note": e.note,
                    })
                })
                .collect();
            println!("{}", serde_json::to_string_pretty(&rows).expect("valid json"));
        }
        Format::Text => {
            for entry in entries {
                let gdpr = if entry.gdpr_refs.is_empty() {
                    "-".to_owned()
                } else {
                    entry.gdpr_refs.join(", ")
                };
                println!("{} {} -> gdpr: {gdpr}", entry.iso27560_clause, entry.iso27560_name);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(failure) => {
            if !failure.message.is_empty() {
                eprintln!("error: {}", failure.message);
            }
            ExitCode::from(failure.code)
        }
    }
}
