"""Suite construction, known-answer vectors, and the combiner property."""

from __future__ import annotations

import hashlib
import json
import random
from pathlib import Path

import pytest

from treaty_escrow.hash_suite import (
    SHA2_256,
    SHA3_256,
    SuiteError,
    SuiteMode,
    digest,
    make_suite,
    parse_suite,
    register_algorithm,
)

KATS = json.loads((Path(__file__).parent.parent / "fixtures" / "hash_kats.json").read_text())


def test_known_answer_vectors():
    for vec in KATS["vectors"]:
        suite = make_suite([vec["algorithm"]], SuiteMode.SINGLE)
        assert digest(suite, vec["message"].encode()).hex == vec["digest"]


def test_sha2_empty_message_vector():
    suite = make_suite([SHA2_256], SuiteMode.SINGLE)
    assert (
        digest(suite, b"").hex
        == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
    )


def test_single_suite_output_length():
    suite = make_suite([SHA2_256], SuiteMode.SINGLE)
    assert suite.output_length == 32
    assert len(digest(suite, b"anything")) == 32


def test_concat_suite_output_length():
    suite = make_suite([SHA2_256, SHA3_256], SuiteMode.CONCAT)
    assert suite.output_length == 64
    assert len(digest(suite, b"anything")) == 64


def test_concat_structure_matches_components():
    # Independently composed from the two single-suite outputs.
    suite = make_suite([SHA2_256, SHA3_256], SuiteMode.CONCAT)
    out = digest(suite, b"abc").value
    assert out[:32] == hashlib.sha256(b"abc").digest()
    assert out[32:] == hashlib.sha3_256(b"abc").digest()


def test_concat_structure_randomized():
    suite = make_suite([SHA3_256, SHA2_256], SuiteMode.CONCAT)
    rng = random.Random(1)
    for _ in range(200):
        m = rng.randbytes(rng.randint(0, 200))
        out = digest(suite, m).value
        assert out == hashlib.sha3_256(m).digest() + hashlib.sha256(m).digest()


def test_determinism_over_random_messages():
    suite = make_suite([SHA2_256, SHA3_256], SuiteMode.CONCAT)
    rng = random.Random(2)
    for _ in range(10_000):
        m = rng.randbytes(rng.randint(0, 64))
        assert suite.hash_bytes(m) == suite.hash_bytes(m)


def test_duplicate_component_rejected():
    with pytest.raises(SuiteError):
        make_suite([SHA2_256, SHA2_256], SuiteMode.CONCAT)


def test_empty_component_list_rejected():
    with pytest.raises(SuiteError):
        make_suite([], SuiteMode.SINGLE)


def test_mode_arity_mismatch_rejected():
    with pytest.raises(SuiteError):
        make_suite([SHA2_256, SHA3_256], SuiteMode.SINGLE)
    with pytest.raises(SuiteError):
        make_suite([SHA2_256], SuiteMode.CONCAT)


def test_unknown_algorithm_rejected():
    with pytest.raises(SuiteError):
        make_suite(["md5"], SuiteMode.SINGLE)


def test_canonical_names():
    assert make_suite([SHA2_256], SuiteMode.SINGLE).name == "sha2-256"
    assert (
        make_suite([SHA2_256, SHA3_256], SuiteMode.CONCAT).name
        == "concat(sha2-256,sha3-256)"
    )
    # order-preserving
    assert (
        make_suite([SHA3_256, SHA2_256], SuiteMode.CONCAT).name
        == "concat(sha3-256,sha2-256)"
    )


def test_parse_suite_roundtrip():
    for name in ["sha2-256", "sha3-256", "concat(sha2-256,sha3-256)"]:
        assert parse_suite(name).name == name
    with pytest.raises(SuiteError):
        parse_suite("concat(sha2-256)")
    with pytest.raises(SuiteError):
        parse_suite("whirlpool")


def test_broken_component_does_not_break_concat():
    # A deliberately constant hash stands in for a broken component; the
    # surviving real component keeps distinct messages distinct.
    register_algorithm("broken-const", lambda m: b"\x42" * 32)
    suite = make_suite(["broken-const", SHA2_256], SuiteMode.CONCAT)
    rng = random.Random(3)
    seen = set()
    for _ in range(2000):
        m = rng.randbytes(16)
        seen.add(suite.hash_bytes(m))
    assert len(seen) == 2000


def test_register_algorithm_validates():
    with pytest.raises(SuiteError):
        register_algorithm("short-hash", lambda m: b"\x00" * 16)
    with pytest.raises(SuiteError):
        register_algorithm("Bad,Name", lambda m: b"\x00" * 32)
