//! End-to-end tests of the command-line binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_consent27560")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("exit code")
}

#[test]
fn validate_record_against_record_profile_passes() {
    let out = run(&["validate", fixture("consent-record.json").to_str().unwrap(), "--profile", "record"]);
    assert_eq!(code(&out), 0, "{out:?}");
    assert!(stdout(&out).contains("passed"));
}

#[test]
fn validate_accepts_profile_iri_alias() {
    let out = run(&[
        "validate",
        fixture("consent-record.json").to_str().unwrap(),
        "--profile",
        "https://w3id.org/dpv/schema/dpv-27560#record-eu-gdpr",
    ]);
    assert_eq!(code(&out), 0, "{out:?}");
}

#[test]
fn validate_wrong_document_kind_is_a_validation_error() {
    let out = run(&["validate", fixture("consent-record.json").to_str().unwrap(), "--profile", "receipt"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn unknown_profile_is_a_usage_error() {
    let out = run(&["validate", fixture("consent-record.json").to_str().unwrap(), "--profile", "nope"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn missing_file_is_an_io_error() {
    let out = run(&["digest", "/nonexistent/record.json"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn validate_json_report_is_machine_readable() {
    let out = run(&[
        "validate",
        fixture("consent-record.json").to_str().unwrap(),
        "--profile",
        "record",
        "--format",
        "json",
    ]);
    assert_eq!(code(&out), 0);
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["passed"], serde_json::Value::Bool(true));
    assert!(report["findings"].is_array());
}

#[test]
fn digest_prints_the_pinned_fixture_digest() {
    let out = run(&["digest", fixture("consent-record.json").to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(
        stdout(&out).trim(),
        "fd4004da3d9cc8d25c835a7108d7aa29d95ae673ab54b1211afe6a723f42f8f4"
    );
}

#[test]
fn crosswalk_prints_gdpr_references() {
    let out = run(&["crosswalk", "6.3.4.12"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    for reference in ["13-2a", "14-2a", "15-1d", "30-1f"] {
        assert!(text.contains(reference), "missing {reference} in {text}");
    }

    let out = run(&["crosswalk", "no-such-clause"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn record_event_receipt_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("rec.json");

    let out = run(&[
        "record",
        "new",
        "--from",
        fixture("full-record.json").to_str().unwrap(),
        "--out",
        rec.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{out:?}");

    for (status, time) in [("Requested", "2024-01-01T00:00:00Z"), ("Given", "2024-01-02T00:00:00Z")] {
        let out = run(&[
            "event",
            "add",
            rec.to_str().unwrap(),
            "--status",
            status,
            "--time",
            time,
            "--strict",
            "--out",
            rec.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{status}: {out:?}");
    }

    // An illegal strict transition is refused.
    let out = run(&[
        "event",
        "add",
        rec.to_str().unwrap(),
        "--status",
        "Requested",
        "--time",
        "2024-01-03T00:00:00Z",
        "--strict",
    ]);
    assert_eq!(code(&out), 1);

    // The record still validates, so a receipt can be issued over it.
    let receipt = dir.path().join("receipt.json");
    let out = run(&[
        "receipt",
        "issue",
        rec.to_str().unwrap(),
        "--id",
        "receipt-cli-1",
        "--publisher",
        "ex:Acme",
        "--recipient",
        "dpv:DataSubject",
        "--mandatory-only",
        "--now",
        "2024-02-01T00:00:00Z",
        "--out",
        receipt.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{out:?}");

    let out = run(&["validate", receipt.to_str().unwrap(), "--profile", "receipt"]);
    assert_eq!(code(&out), 0, "{out:?}");

    // Deterministic issuance under an injected clock.
    let receipt2 = dir.path().join("receipt2.json");
    let out = run(&[
        "receipt",
        "issue",
        rec.to_str().unwrap(),
        "--id",
        "receipt-cli-1",
        "--publisher",
        "ex:Acme",
        "--recipient",
        "dpv:DataSubject",
        "--mandatory-only",
        "--now",
        "2024-02-01T00:00:00Z",
        "--out",
        receipt2.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(
        std::fs::read_to_string(&receipt).unwrap(),
        std::fs::read_to_string(&receipt2).unwrap()
    );
}

#[test]
fn sign_and_verify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let key = dir.path().join("key.hex");
    std::fs::write(&key, format!("{:064}", 7)).unwrap();

    // Derive the matching public key through the library.
    let signing = consent27560::integrity::signing_key_from_hex(&format!("{:064}", 7)).unwrap();
    let public = dir.path().join("pub.hex");
    std::fs::write(&public, hex::encode(signing.verifying_key().as_bytes())).unwrap();

    let sig = dir.path().join("sig.json");
    let out = run(&[
        "sign",
        fixture("consent-record.json").to_str().unwrap(),
        "--key",
        key.to_str().unwrap(),
        "--out",
        sig.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{out:?}");

    let out = run(&[
        "verify",
        fixture("consent-record.json").to_str().unwrap(),
        "--sig",
        sig.to_str().unwrap(),
        "--pub",
        public.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{out:?}");
    assert!(stdout(&out).contains("verification ok"));

    // A different document fails verification with exit 3.
    let out = run(&[
        "verify",
        fixture("full-record.json").to_str().unwrap(),
        "--sig",
        sig.to_str().unwrap(),
        "--pub",
        public.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn put_and_query_through_a_store() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");

    let out = run(&[
        "put",
        fixture("consent-record.json").to_str().unwrap(),
        "--store",
        store.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{out:?}");
    let id = stdout(&out).trim().to_owned();
    assert_eq!(id, "a6f58318-72e6-46a2-bfd7-f36d795e30cd");

    let out = run(&["query", store.to_str().unwrap(), "--subject", "0760c9ba"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).trim(), id);

    let out = run(&[
        "query",
        store.to_str().unwrap(),
        "--status",
        "Withdrawn",
        "--at",
        "2024-05-01T00:00:00Z",
        "--format",
        "json",
    ]);
    assert_eq!(code(&out), 0);
    let ids: Vec<String> = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(ids, vec![id.clone()]);

    // The store root can come from the environment.
    let out = Command::new(bin())
        .args(["query", "--subject", "0760c9ba"])
        .env("CONSENT_STORE", &store)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{out:?}");
    assert_eq!(stdout(&out).trim(), id);
}
