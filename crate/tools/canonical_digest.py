#!/usr/bin/env python3
"""Independent canonicalizer for consent records/receipts.

Computes the sha-256 digest of the canonical byte form of a compact
JSON-LD consent document, implemented separately from the Rust library so
the two can cross-check each other. Usage:

    python3 tools/canonical_digest.py crates/core/fixtures/consent-record.json
"""

import hashlib
import json
import sys
from datetime import datetime

PREFIXES = {
    "dpv": "https://w3id.org/dpv#",
    "eu-gdpr": "https://w3id.org/dpv/legal/eu/gdpr#",
    "pd": "https://w3id.org/dpv/pd#",
    "loc": "https://w3id.org/dpv/loc#",
    "dct": "http://purl.org/dc/terms/",
    "schema": "https://schema.org/",
    "rdf": "http://www.w3.org/1999/02/22-rdf-syntax-ns#",
    "dpv-27560": "https://w3id.org/dpv/schema/dpv-27560#",
    "ex": "https://example.com/",
}

# Keys (expanded) whose values are always arrays in canonical form.
MULTI_KEYS = {
    "@type",
    "dct:identifier",
    "dct:language",
    "dpv:hasDataController",
    "dpv:hasDataProcessor",
    "dpv:hasJurisdiction",
    "dpv:hasApplicableLaw",
    "dpv:hasLegalBasis",
    "dpv:hasRecipient",
    "dpv:hasStorageCondition",
    "dpv:hasProcessingCondition",
    "dpv:hasProcess",
    "dpv:hasNotice",
    "dpv:hasRight",
    "dpv:hasInvolvementControl",
    "dpv:hasImpactAssessment",
    "dpv:hasConsentStatus",
    "dpv:hasEntity",
    "dpv:hasPurpose",
    "dpv:hasPersonalData",
    "dpv:hasProcessing",
    "dpv:hasRule",
    "dpv:hasDataSource",
    "dpv:hasLocation",
    "dpv:hasIndicationMethod",
    "dpv:hasService",
    "dpv:hasOrganisationalMeasure",
    "dpv:hasName",
    "dpv:hasIdentifier",
    "dpv:hasRecordOfActivity",
    "schema:contactPoint",
    "schema:postalAddress",
    "schema:email",
    "schema:telephone",
    "schema:url",
}

TIMESTAMP_KEYS = {"dpv:isIndicatedAtTime", "dct:created", "dct:date"}


def expand(value):
    if "://" in value or value.startswith(("urn:", "mailto:")):
        return value
    if ":" in value:
        prefix, local = value.split(":", 1)
        if prefix in PREFIXES and local and ":" not in local:
            return PREFIXES[prefix] + local
    return value


MULTI_IRIS = {expand(k) for k in MULTI_KEYS}
TIMESTAMP_IRIS = {expand(k) for k in TIMESTAMP_KEYS}
RECEIPT_VARIANT = expand("dpv:ConsentRereceipt")
RECEIPT_TYPE = expand("dpv:ConsentReceipt")
PERSONAL_DATA_IRI = expand("dpv:hasPersonalData")


def pairs_hook(pairs):
    """Keep duplicate keys by returning the raw pair list."""
    return list(pairs)


def is_pair_object(node):
    return isinstance(node, list) and bool(node) and isinstance(node[0], tuple)


def normalize_key(key):
    if key == "type":
        return "@type"
    if key.startswith("@"):
        return key
    return expand(key)


def normalize_timestamp(raw):
    for fmt in ("%Y-%m-%dT%H:%M:%S%z", "%Y-%m-%dT%H:%M:%SZ", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d"):
        try:
            dt = datetime.strptime(raw, fmt)
        except ValueError:
            continue
        if dt.tzinfo is not None:
            from datetime import timezone

            dt = dt.astimezone(timezone.utc).replace(tzinfo=None)
        return dt.strftime("%Y-%m-%dT%H:%M:%SZ")
    return raw


def canonicalize(node, parent_key=None):
    if is_pair_object(node):
        # An object as a pair list: merge duplicate keys, expand, sort.
        merged = {}
        order = []
        for raw_key, value in node:
            key = normalize_key(raw_key)
            if key == "@context":
                continue
            if key in merged:
                existing = merged[key]
                if is_pair_object(existing) or not isinstance(existing, list):
                    existing = [existing]
                addition = (
                    value
                    if isinstance(value, list) and not is_pair_object(value)
                    else [value]
                )
                merged[key] = existing + addition
            else:
                merged[key] = value
                order.append(key)
        out = {}
        for key in order:
            value = canonicalize(merged[key], key)
            if key in MULTI_IRIS and not isinstance(value, list):
                value = [value]
            out[key] = value
        return dict(sorted(out.items()))
    if isinstance(node, list):
        return [canonicalize(item, parent_key) for item in node]
    if isinstance(node, str):
        if parent_key in TIMESTAMP_IRIS:
            return normalize_timestamp(node)
        value = expand(node)
        if parent_key == "@type" and value == RECEIPT_VARIANT:
            return RECEIPT_TYPE
        if parent_key == PERSONAL_DATA_IRI:
            # Bare personal-data terms normalize to object form.
            return {"@type": [value]}
        return value
    return node


def main():
    path = sys.argv[1]
    with open(path, encoding="utf-8") as f:
        doc = json.load(f, object_pairs_hook=pairs_hook)
    canonical = canonicalize(doc)
    data = json.dumps(canonical, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    print(hashlib.sha256(data).hexdigest())


if __name__ == "__main__":
    main()
