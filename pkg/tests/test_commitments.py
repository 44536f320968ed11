"""Canonical encoding, leaf commitments, openings, and salt derivation."""

from __future__ import annotations

import hashlib
import json
import random
from decimal import Decimal
from pathlib import Path

import pytest

from treaty_escrow.commitments import (
    EncodingError,
    Level0Preimage,
    Level1Payload,
    Level1Preimage,
    OpeningResult,
    Presence,
    SiteRecord,
    commit_leaf,
    commit_level1,
    decode_level0,
    decode_level1,
    derive_salts,
    encode_level0,
    encode_level1,
    payload_from_json,
    payload_to_json,
    verify_opening,
    zero_level1_digest,
)
from treaty_escrow.grid import GridKey
from treaty_escrow.hash_suite import SuiteMode, make_suite

CONFORMANCE = json.loads(
    (Path(__file__).parent.parent / "fixtures" / "tlv_conformance.json").read_text()
)

SUITE = make_suite(["sha2-256"], SuiteMode.SINGLE)
CONCAT = make_suite(["sha2-256", "sha3-256"], SuiteMode.CONCAT)


def random_payload(rng: random.Random) -> Level1Payload:
    iso = []
    for _ in range(rng.randint(0, 4)):
        iso.append((f"N-{rng.randint(1, 300)}", Decimal(rng.randint(0, 10000)) / 100))
    return Level1Payload(
        warhead_count=rng.randint(0, 1000),
        missile_count=rng.randint(0, 1000),
        uranium_kg=Decimal(rng.randint(0, 10**9)) / 1000,
        plutonium_kg=Decimal(rng.randint(0, 10**9)) / 1000,
        isotopics=tuple(iso),
        free_text="" if rng.random() < 0.5 else "x" * rng.randint(1, 100),
    )


def random_level0(rng: random.Random, present: bool | None = None) -> Level0Preimage:
    if present is None:
        present = rng.random() < 0.5
    salt0 = rng.randbytes(32)
    nonce = rng.randbytes(32)
    if not present:
        return Level0Preimage(
            salt0=salt0,
            inspector_nonce=nonce,
            presence=Presence.ABSENT,
            level1_digest=bytes(32),
        )
    return Level0Preimage(
        salt0=salt0,
        inspector_nonce=nonce,
        presence=Presence.PRESENT,
        facility_type=f"Facility {rng.randint(0, 99)}",
        coord=(rng.randint(0, 420), rng.randint(0, 360)),
        status=rng.choice(["Active", "Inactive"]),
        level1_digest=rng.randbytes(32),
    )


# -- encoding ----------------------------------------------------------------

def test_encode_level0_deterministic():
    rng = random.Random(0)
    p = random_level0(rng, present=True)
    q = Level0Preimage(
        salt0=p.salt0,
        inspector_nonce=p.inspector_nonce,
        presence=p.presence,
        facility_type=p.facility_type,
        coord=p.coord,
        status=p.status,
        level1_digest=p.level1_digest,
    )
    assert encode_level0(p) == encode_level0(q)


def test_level0_roundtrip_property():
    rng = random.Random(1)
    for _ in range(10_000):
        p = random_level0(rng)
        assert decode_level0(encode_level0(p)) == p


def test_presence_flag_is_first_difference():
    rng = random.Random(2)
    salt0, nonce = rng.randbytes(32), rng.randbytes(32)
    absent = Level0Preimage(
        salt0=salt0, inspector_nonce=nonce, presence=Presence.ABSENT, level1_digest=bytes(32)
    )
    present = Level0Preimage(
        salt0=salt0,
        inspector_nonce=nonce,
        presence=Presence.PRESENT,
        facility_type="Storage site",
        coord=(1, 2),
        status="Active",
        level1_digest=rng.randbytes(32),
    )
    ea, ep = encode_level0(absent), encode_level0(present)
    # version + TLV(salt0) + TLV(nonce) + presence header = 1 + 35 + 35 + 3
    offset = 1 + 35 + 35 + 3
    assert ea[:offset] == ep[:offset]
    assert ea[offset] == 0 and ep[offset] == 1


def test_level1_roundtrip_property():
    rng = random.Random(3)
    for _ in range(5000):
        q = Level1Preimage(salt1=rng.randbytes(32), payload=random_payload(rng))
        assert decode_level1(encode_level1(q)) == q


def test_empty_isotopics_zero_count_header():
    q = Level1Preimage(
        salt1=bytes(32),
        payload=Level1Payload(
            warhead_count=0, missile_count=0, uranium_kg=Decimal(0), plutonium_kg=Decimal(0)
        ),
    )
    encoded = encode_level1(q)
    # isotopics are field 6; walk to it and check the two-byte count is zero
    decoded = decode_level1(encoded)
    assert decoded.payload.isotopics == ()
    assert b"\x06\x00\x02\x00\x00" in encoded


def test_isotopics_order_significant():
    base = dict(warhead_count=1, missile_count=1, uranium_kg=Decimal(1), plutonium_kg=Decimal(1))
    a = Level1Preimage(
        salt1=bytes(32),
        payload=Level1Payload(
            isotopics=(("U-235", Decimal("93.25")), ("U-238", Decimal("6.75"))), **base
        ),
    )
    b = Level1Preimage(
        salt1=bytes(32),
        payload=Level1Payload(
            isotopics=(("U-238", Decimal("6.75")), ("U-235", Decimal("93.25"))), **base
        ),
    )
    assert encode_level1(a) != encode_level1(b)


def test_field_length_bounds_enforced():
    with pytest.raises(EncodingError):
        Level1Payload(
            warhead_count=0,
            missile_count=0,
            uranium_kg=Decimal(0),
            plutonium_kg=Decimal(0),
            free_text="x" * 4097,
        )
    with pytest.raises(EncodingError):
        Level1Payload(
            warhead_count=0,
            missile_count=0,
            uranium_kg=Decimal("1.2345"),  # four fractional digits
            plutonium_kg=Decimal(0),
        )
    with pytest.raises(EncodingError):
        SiteRecord(
            key=GridKey(i=0, j=0),
            facility_type="f" * 65,
            status="Active",
            level1=Level1Payload(
                warhead_count=0, missile_count=0, uranium_kg=Decimal(0), plutonium_kg=Decimal(0)
            ),
        )


def test_percent_range_enforced():
    with pytest.raises(EncodingError):
        Level1Payload(
            warhead_count=0,
            missile_count=0,
            uranium_kg=Decimal(0),
            plutonium_kg=Decimal(0),
            isotopics=(("U-235", Decimal("100.01")),),
        )


def test_absent_invariants_enforced():
    with pytest.raises(EncodingError):
        Level0Preimage(
            salt0=bytes(32),
            inspector_nonce=bytes(32),
            presence=Presence.ABSENT,
            facility_type="sneaky",
            level1_digest=bytes(32),
        )


# -- commitments ---------------------------------------------------------------

def test_commit_level1_stable_and_sized():
    q = Level1Preimage(salt1=bytes(range(32)), payload=random_payload(random.Random(4)))
    d1 = commit_level1(SUITE, q)
    d2 = commit_level1(SUITE, q)
    assert d1 == d2
    assert len(d1) == SUITE.output_length
    assert len(commit_level1(CONCAT, q)) == CONCAT.output_length


def test_commit_level1_salt_avalanche():
    # reference oracle: hashlib over the domain-tagged encoding
    rng = random.Random(5)
    for _ in range(1000):
        payload = random_payload(rng)
        salt = bytearray(rng.randbytes(32))
        q = Level1Preimage(salt1=bytes(salt), payload=payload)
        bit = rng.randrange(256)
        salt[bit // 8] ^= 1 << (bit % 8)
        q2 = Level1Preimage(salt1=bytes(salt), payload=payload)
        assert commit_level1(SUITE, q) != commit_level1(SUITE, q2)
        expected = hashlib.sha256(b"\x02" + encode_level1(q)).digest()
        assert commit_level1(SUITE, q).value == expected


def test_commit_leaf_absent_and_hiding():
    rng = random.Random(6)
    nonce = rng.randbytes(32)
    absent = Level0Preimage(
        salt0=rng.randbytes(32),
        inspector_nonce=nonce,
        presence=Presence.ABSENT,
        level1_digest=zero_level1_digest(SUITE),
    )
    d = commit_leaf(SUITE, absent)
    assert len(d) == 32
    # same site, different salt -> different digest
    present = random_level0(rng, present=True)
    p2 = Level0Preimage(
        salt0=rng.randbytes(32),
        inspector_nonce=present.inspector_nonce,
        presence=present.presence,
        facility_type=present.facility_type,
        coord=present.coord,
        status=present.status,
        level1_digest=present.level1_digest,
    )
    assert commit_leaf(SUITE, present) != commit_leaf(SUITE, p2)
    assert commit_leaf(SUITE, present) == commit_leaf(SUITE, present)


def test_hiding_surrogate_no_structural_leak():
    # absent and present digests have equal length and no shared structure
    rng = random.Random(7)
    max_prefix = 0
    for _ in range(1000):
        da = commit_leaf(SUITE, random_level0(rng, present=False)).value
        dp = commit_leaf(SUITE, random_level0(rng, present=True)).value
        assert len(da) == len(dp) == 32
        common = 0
        while common < 32 and da[common] == dp[common]:
            common += 1
        max_prefix = max(max_prefix, common)
    assert max_prefix < 4


def test_verify_opening_honest_and_tampered():
    rng = random.Random(8)
    for _ in range(300):
        payload = random_payload(rng)
        q = Level1Preimage(salt1=rng.randbytes(32), payload=payload)
        p = Level0Preimage(
            salt0=rng.randbytes(32),
            inspector_nonce=rng.randbytes(32),
            presence=Presence.PRESENT,
            facility_type="Storage site",
            coord=(3, 4),
            status="Active",
            level1_digest=commit_level1(SUITE, q).value,
        )
        leaf = commit_leaf(SUITE, p)
        assert verify_opening(SUITE, leaf, p, q) is OpeningResult.OK
        # altered inventory after commitment
        bumped = Level1Payload(
            warhead_count=payload.warhead_count + 1,
            missile_count=payload.missile_count,
            uranium_kg=payload.uranium_kg,
            plutonium_kg=payload.plutonium_kg,
            isotopics=payload.isotopics,
            free_text=payload.free_text,
        )
        q_bad = Level1Preimage(salt1=q.salt1, payload=bumped)
        assert verify_opening(SUITE, leaf, p, q_bad) is OpeningResult.MISMATCH_L1
        # altered salt0
        p_bad = Level0Preimage(
            salt0=rng.randbytes(32),
            inspector_nonce=p.inspector_nonce,
            presence=p.presence,
            facility_type=p.facility_type,
            coord=p.coord,
            status=p.status,
            level1_digest=p.level1_digest,
        )
        assert verify_opening(SUITE, leaf, p_bad, q) is OpeningResult.MISMATCH_L0


def test_binding_single_field_mutations_detected():
    # >= 10^4 randomized single-field mutations, zero misses
    rng = random.Random(9)
    trials = 0
    while trials < 10_000:
        p = random_level0(rng, present=True)
        leaf = commit_leaf(SUITE, p)
        field = rng.choice(["salt0", "nonce", "facility", "coord", "status", "digest"])
        if field == "salt0":
            mutated = dict(salt0=rng.randbytes(32))
        elif field == "nonce":
            mutated = dict(inspector_nonce=rng.randbytes(32))
        elif field == "facility":
            mutated = dict(facility_type=p.facility_type + "!")
        elif field == "coord":
            mutated = dict(coord=(p.coord[0], (p.coord[1] + 1) % 361))
        elif field == "status":
            mutated = dict(status=p.status + " ")
        else:
            mutated = dict(level1_digest=rng.randbytes(32))
        base = dict(
            salt0=p.salt0,
            inspector_nonce=p.inspector_nonce,
            presence=p.presence,
            facility_type=p.facility_type,
            coord=p.coord,
            status=p.status,
            level1_digest=p.level1_digest,
        )
        base.update(mutated)
        p_mut = Level0Preimage(**base)
        assert verify_opening(SUITE, leaf, p_mut) is OpeningResult.MISMATCH_L0
        trials += 1


def test_level_separation_no_containment():
    rng = random.Random(10)
    for _ in range(1000):
        q = Level1Preimage(salt1=rng.randbytes(32), payload=random_payload(rng))
        p = Level0Preimage(
            salt0=rng.randbytes(32),
            inspector_nonce=rng.randbytes(32),
            presence=Presence.PRESENT,
            facility_type="Storage site",
            coord=(1, 1),
            status="Active",
            level1_digest=commit_level1(SUITE, q).value,
        )
        assert encode_level1(q) not in encode_level0(p)


# -- salt derivation -----------------------------------------------------------

def test_derive_salts_exhaustive_collision_scan():
    secret = bytes(range(32))
    seen = set()
    for i in range(421):
        for j in range(361):
            salt0, _ = derive_salts(secret, GridKey(i=i, j=j), SUITE)
            seen.add(salt0)
    assert len(seen) == 421 * 361


def test_derive_salts_deterministic_and_separated():
    secret = bytes(range(32))
    rng = random.Random(11)
    for _ in range(10_000):
        key = GridKey(i=rng.randint(0, 511), j=rng.randint(0, 511))
        s0a, s1a = derive_salts(secret, key, SUITE)
        s0b, s1b = derive_salts(secret, key, SUITE)
        assert (s0a, s1a) == (s0b, s1b)
        assert s0a != s1a


# -- conformance fixture ---------------------------------------------------------

def test_tlv_conformance_fixture():
    # the committed fixture is the interop contract: encodings reproduce
    # bit-exactly and digests recompute via hashlib, independent of the
    # suite plumbing
    for entry in CONFORMANCE["entries"]:
        encoded = bytes.fromhex(entry["encoded"])
        if entry["level"] == 0:
            assert encode_level0(decode_level0(encoded)) == encoded
            tag = b"\x00"
        else:
            assert encode_level1(decode_level1(encoded)) == encoded
            tag = b"\x02"
        for suite_name, digest_hex in entry["commit"].items():
            expected = b""
            for comp in suite_name.removeprefix("concat(").removesuffix(")").split(","):
                fn = hashlib.sha256 if comp == "sha2-256" else hashlib.sha3_256
                expected += fn(tag + encoded).digest()
            assert expected.hex() == digest_hex


def test_payload_json_roundtrip():
    rng = random.Random(12)
    for _ in range(500):
        p = random_payload(rng)
        doc = json.loads(json.dumps(payload_to_json(p)), parse_float=Decimal)
        assert payload_from_json(doc) == p
