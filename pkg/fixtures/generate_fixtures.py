#!/usr/bin/env python3
"""Regenerate the committed fixtures.

Deterministic: a fixed RNG seed produces the same 150-site declaration, and
the escrow parameters (suite, secret, nonce) are fixed, so the recorded
root digest pins build reproducibility for the test suite.
"""

from __future__ import annotations

import json
import random
from decimal import Decimal
from pathlib import Path

from treaty_escrow import (
    DPRK_GRID,
    Declaration,
    Level0Preimage,
    Level1Payload,
    Level1Preimage,
    Presence,
    SiteRecord,
    build_escrow,
    coord_to_key,
    encode_level0,
    encode_level1,
    parse_suite,
)
from treaty_escrow.commitments import TAG_LEAF, TAG_LEVEL1, zero_level1_digest
from treaty_escrow.escrow import declaration_to_json

HERE = Path(__file__).parent

FACILITY_TYPES = [
    "Storage site",
    "Assembly facility",
    "Enrichment plant",
    "Reprocessing plant",
    "Missile base",
    "Test site",
    "Research reactor",
]
STATUSES = ["Active", "Inactive", "Standby", "Decommissioning"]
NUCLIDES = ["U-235", "U-238", "Pu-239", "Pu-240", "Pu-241"]

SUITE = "concat(sha2-256,sha3-256)"
SECRET = bytes.fromhex(
    "6b2cb1a53d2f9a0d8a3be1c55f2e4a7d9c0b1e2f3a4d5c6b7a8990a1b2c3d4e5"
)
NONCE = bytes.fromhex(
    "1f8e7d6c5b4a39281706f5e4d3c2b1a00112233445566778899aabbccddeeff0"
)


def sample_declaration(rng: random.Random, n_sites: int = 150) -> Declaration:
    keys = set()
    sites = []
    while len(sites) < n_sites:
        i = rng.randint(0, DPRK_GRID.i_max)
        j = rng.randint(0, DPRK_GRID.j_max)
        if (i, j) in keys:
            continue
        keys.add((i, j))
        lat = DPRK_GRID.lat_max_deg - j / 60
        lon = DPRK_GRID.lon_min_deg + i / 60
        key = coord_to_key(lat, lon)
        u235 = Decimal(rng.randint(0, 9800)) / 100
        payload = Level1Payload(
            warhead_count=rng.randint(0, 30),
            missile_count=rng.randint(0, 60),
            uranium_kg=Decimal(rng.randint(0, 500_000)) / 1000,
            plutonium_kg=Decimal(rng.randint(0, 60_000)) / 1000,
            isotopics=(
                ("U-235", u235),
                ("U-238", Decimal("100") - u235),
                (rng.choice(NUCLIDES[2:]), Decimal(rng.randint(0, 10000)) / 100),
            ),
            free_text="" if rng.random() < 0.7 else f"note {rng.randint(1000, 9999)}",
        )
        sites.append(
            SiteRecord(
                key=key,
                facility_type=rng.choice(FACILITY_TYPES),
                status=rng.choice(STATUSES),
                level1=payload,
            )
        )
    return Declaration(sites=tuple(sites), declarer="DPRK (synthetic)", declared_on="2026-02-01")


def write_sample(rng: random.Random) -> None:
    declaration = sample_declaration(rng)
    doc = declaration_to_json(declaration, DPRK_GRID)
    (HERE / "sample_declaration.json").write_text(json.dumps(doc, indent=2) + "\n")

    package, pc = build_escrow(declaration, NONCE, parse_suite(SUITE), DPRK_GRID, SECRET)
    escrow_doc = {
        "suite": SUITE,
        "master_secret": SECRET.hex(),
        "inspector_nonce": NONCE.hex(),
        "root": pc.root.hex,
        "sites": len(declaration.sites),
    }
    (HERE / "sample_escrow.json").write_text(json.dumps(escrow_doc, indent=2) + "\n")
    print("sample root:", pc.root.hex)


def write_tlv_conformance() -> None:
    """Frozen encodings and digests: the bit-exact interop contract."""
    suites = ["sha2-256", "sha3-256", "concat(sha2-256,sha3-256)"]
    salt0 = bytes(range(32))
    salt1 = bytes(range(32, 64))
    nonce = bytes(range(64, 96))

    payload = Level1Payload(
        warhead_count=10,
        missile_count=4,
        uranium_kg=Decimal("12.345"),
        plutonium_kg=Decimal("1.500"),
        isotopics=(("U-235", Decimal("93.25")), ("U-238", Decimal("6.75"))),
        free_text="storage bunker B",
    )
    q = Level1Preimage(salt1=salt1, payload=payload)
    enc1 = encode_level1(q)

    entries = []
    entries.append(
        {
            "name": "level1-inventory",
            "level": 1,
            "encoded": enc1.hex(),
            "commit": {
                s: parse_suite(s).hash_bytes(TAG_LEVEL1 + enc1).hex() for s in suites
            },
        }
    )
    for suite_name in suites:
        suite = parse_suite(suite_name)
        l1d = parse_suite(suite_name).hash_bytes(TAG_LEVEL1 + enc1)
        present = Level0Preimage(
            salt0=salt0,
            inspector_nonce=nonce,
            presence=Presence.PRESENT,
            facility_type="Storage site",
            coord=(420, 360),
            status="Active",
            level1_digest=l1d,
        )
        enc0 = encode_level0(present)
        entries.append(
            {
                "name": f"level0-present-{suite_name}",
                "level": 0,
                "encoded": enc0.hex(),
                "commit": {suite_name: suite.hash_bytes(TAG_LEAF + enc0).hex()},
            }
        )
        absent = Level0Preimage(
            salt0=salt0,
            inspector_nonce=nonce,
            presence=Presence.ABSENT,
            level1_digest=zero_level1_digest(suite),
        )
        enca = encode_level0(absent)
        entries.append(
            {
                "name": f"level0-absent-{suite_name}",
                "level": 0,
                "encoded": enca.hex(),
                "commit": {suite_name: suite.hash_bytes(TAG_LEAF + enca).hex()},
            }
        )
    doc = {"format_version": 1, "entries": entries}
    (HERE / "tlv_conformance.json").write_text(json.dumps(doc, indent=2) + "\n")


if __name__ == "__main__":
    rng = random.Random(20260201)
    write_sample(rng)
    write_tlv_conformance()
    print("fixtures written to", HERE)
