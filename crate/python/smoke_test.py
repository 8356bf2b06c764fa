#!/usr/bin/env python3
"""Smoke test for the Python extension module.

Builds (if needed) and loads the cdylib produced by `cargo build -p
consent27560-py`, then exercises the main types and operations end to end.

    python3 python/smoke_test.py
"""

import pathlib
import shutil
import subprocess
import sys
import sysconfig
import tempfile

REPO = pathlib.Path(__file__).resolve().parent.parent
GOLDEN_RECORD_DIGEST = "fd4004da3d9cc8d25c835a7108d7aa29d95ae673ab54b1211afe6a723f42f8f4"


def load_module():
    lib = None
    for profile in ("debug", "release"):
        candidate = REPO / "target" / profile / "libconsent27560_py.so"
        if candidate.exists():
            lib = candidate
            break
    if lib is None:
        subprocess.run(
            ["cargo", "build", "-p", "consent27560-py"], cwd=REPO, check=True
        )
        lib = REPO / "target" / "debug" / "libconsent27560_py.so"

    staging = pathlib.Path(tempfile.mkdtemp(prefix="consent27560-py-"))
    suffix = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    shutil.copy2(lib, staging / f"consent27560_py{suffix}")
    sys.path.insert(0, str(staging))
    import consent27560_py

    return consent27560_py


def main():
    mod = load_module()

    record_text = (REPO / "crates/core/fixtures/consent-record.json").read_text()
    record = mod.ConsentRecord.parse(record_text)
    assert record.id == "a6f58318-72e6-46a2-bfd7-f36d795e30cd", record.id
    assert record.process_count == 2
    assert record.event_count == 2

    report = record.validate("record-eu-gdpr")
    assert report["passed"], report["findings"]

    assert record.digest() == GOLDEN_RECORD_DIGEST, record.digest()

    # Round trip through the pretty serializer.
    again = mod.ConsentRecord.parse(record.to_json())
    assert again.digest() == record.digest()

    # Lifecycle: the shipped example is Given in February, Withdrawn in May.
    assert record.status_at("2024-02-01") == "Given"
    assert record.status_at("2024-05-01") == "Withdrawn"
    assert mod.allowed_transitions("Withdrawn") == ["Requested"]

    # A withdrawn record can be re-requested, but not re-withdrawn.
    updated = record.append_event("Requested", "2024-06-01T00:00:00Z")
    assert updated.event_count == 3
    try:
        record.append_event("Withdrawn", "2024-06-01T00:00:00Z")
    except ValueError:
        pass
    else:
        raise AssertionError("illegal transition must raise")

    # Receipt issuance with an injected clock is deterministic.
    receipt = mod.issue_receipt(
        [record],
        "receipt-py-1",
        "ex:Acme",
        "dpv:DataSubject",
        mandatory_only=True,
        now="2024-02-01T00:00:00Z",
    )
    assert receipt.id == "receipt-py-1"
    assert receipt.record_count == 1
    assert receipt.validate("receipt")["passed"]
    embedded = receipt.records()[0]
    assert embedded.id == record.id
    reparsed = mod.ConsentReceipt.parse(receipt.to_json())
    assert reparsed.digest() == receipt.digest()

    # Sign and verify with a throwaway key; the public key is derived
    # independently in Python as a cross-check on the signature path.
    key_hex = "11" * 32
    envelope = mod.sign_record(record, key_hex, "ex:Acme")
    ok, reason = mod.verify_record(record, envelope, derive_public(key_hex))
    assert ok, reason
    ok, _ = mod.verify_record(updated, envelope, derive_public(key_hex))
    assert not ok, "a changed record must fail verification"

    # Crosswalk lookup.
    rows = mod.crosswalk("6.3.4.12")
    assert len(rows) == 1
    assert rows[0]["gdpr"] == ["13-2a", "14-2a", "15-1d", "30-1f"], rows[0]

    print("smoke test passed")


def derive_public(key_hex: str) -> str:
    """Ed25519 public key for a seed, via the stdlib-free RFC 8032 math."""
    import hashlib

    p = 2**255 - 19
    d = (-121665 * pow(121666, p - 2, p)) % p
    q = 2**252 + 27742317777372353535851937790883648493
    Bx = 15112221349535400772501151409588531511454012693041857206046113283949847762202
    By = 46316835694926478169428394003475163141307993866256225615783033603165251855960

    def point_add(P, Q):
        x1, y1, z1, t1 = P
        x2, y2, z2, t2 = Q
        a = (y1 - x1) * (y2 - x2) % p
        b = (y1 + x1) * (y2 + x2) % p
        c = 2 * t1 * t2 * d % p
        dd = 2 * z1 * z2 % p
        e, f, g, h = b - a, dd - c, dd + c, b + a
        return (e * f % p, g * h % p, f * g % p, e * h % p)

    def scalar_mult(s, P):
        Q = (0, 1, 1, 0)
        while s > 0:
            if s & 1:
                Q = point_add(Q, P)
            P = point_add(P, P)
            s >>= 1
        return Q

    seed = bytes.fromhex(key_hex)
    h = hashlib.sha512(seed).digest()
    a = int.from_bytes(h[:32], "little")
    a &= (1 << 254) - 8
    a |= 1 << 254
    B = (Bx, By, 1, Bx * By % p)
    x, y, z, _ = scalar_mult(a, B)
    zinv = pow(z, p - 2, p)
    x, y = x * zinv % p, y * zinv % p
    encoded = (y | ((x & 1) << 255)).to_bytes(32, "little")
    return encoded.hex()


if __name__ == "__main__":
    main()
