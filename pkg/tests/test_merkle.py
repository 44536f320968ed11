"""Tree building, authentication paths, verification, and the naive oracle."""

from __future__ import annotations

import hashlib
import random

import pytest

from treaty_escrow.grid import GridKey, GridSpec, key_from_index
from treaty_escrow.hash_suite import SuiteMode, make_suite, register_algorithm
from treaty_escrow.merkle import (
    MerkleProof,
    TreeError,
    build_tree,
    oracle_root,
    prove,
    verify_proof,
)

SUITE = make_suite(["sha2-256"], SuiteMode.SINGLE)
CONCAT = make_suite(["sha2-256", "sha3-256"], SuiteMode.CONCAT)


def toy_spec(bits: int) -> GridSpec:
    # synthetic square grid whose depth is 2*bits
    span = (2**bits - 1) / 60
    return GridSpec(
        lat_min_deg=43.5 - span,
        lat_max_deg=43.5,
        lon_min_deg=124.0,
        lon_max_deg=124.0 + span,
        i_bits=bits,
        j_bits=bits,
    )


def rand_leaves(rng: random.Random, n: int, width: int = 32) -> list[bytes]:
    return [rng.randbytes(width) for _ in range(n)]


def test_depth2_root_hand_computed():
    rng = random.Random(0)
    leaves = rand_leaves(rng, 4)
    tree = build_tree(SUITE, leaves)
    h = lambda m: hashlib.sha256(m).digest()
    left = h(b"\x01" + leaves[0] + leaves[1])
    right = h(b"\x01" + leaves[2] + leaves[3])
    assert tree.root.value == h(b"\x01" + left + right)


def test_leaf_permutation_changes_root():
    rng = random.Random(1)
    for _ in range(50):
        leaves = rand_leaves(rng, 16)
        a, b = rng.sample(range(16), 2)
        swapped = list(leaves)
        swapped[a], swapped[b] = swapped[b], swapped[a]
        assert build_tree(SUITE, leaves).root != build_tree(SUITE, swapped).root


def test_rebuild_deterministic():
    rng = random.Random(2)
    leaves = rand_leaves(rng, 64)
    assert build_tree(SUITE, leaves).root == build_tree(SUITE, leaves).root


def test_depth2_proof_structure():
    # leaf index 3: siblings are [leaf 2, hash(leaf0||leaf1)], leaf-adjacent first
    rng = random.Random(3)
    leaves = rand_leaves(rng, 4)
    tree = build_tree(SUITE, leaves)
    key = GridKey(i=1, j=1, i_bits=1, j_bits=1)
    assert key.index == 3
    proof = prove(tree, key)
    h = lambda m: hashlib.sha256(m).digest()
    assert proof.siblings == (leaves[2], h(b"\x01" + leaves[0] + leaves[1]))
    assert verify_proof(tree.root, proof, SUITE)


def test_proof_roundtrip_random_keys():
    rng = random.Random(4)
    spec = toy_spec(4)  # depth 8, 256 leaves
    leaves = rand_leaves(rng, 256)
    tree = build_tree(SUITE, leaves)
    for _ in range(500):
        key = key_from_index(rng.randrange(256), spec)
        proof = prove(tree, key)
        assert len(proof.siblings) == 8
        assert verify_proof(tree.root, proof, SUITE)


def test_distinct_keys_share_at_most_depth_minus_one_siblings():
    rng = random.Random(5)
    spec = toy_spec(3)  # depth 6
    tree = build_tree(SUITE, rand_leaves(rng, 64))
    for _ in range(200):
        a, b = rng.sample(range(64), 2)
        pa = prove(tree, key_from_index(a, spec))
        pb = prove(tree, key_from_index(b, spec))
        shared = sum(1 for x, y in zip(pa.siblings, pb.siblings) if x == y)
        assert shared <= 5


def test_single_bit_tampering_detected():
    rng = random.Random(6)
    spec = toy_spec(4)
    leaves = rand_leaves(rng, 256)
    tree = build_tree(SUITE, leaves)
    for _ in range(1000):
        key = key_from_index(rng.randrange(256), spec)
        proof = prove(tree, key)
        root = bytearray(tree.root.value)
        target = rng.choice(["leaf", "sibling", "root"])
        if target == "leaf":
            leaf = bytearray(proof.leaf_digest)
            bit = rng.randrange(len(leaf) * 8)
            leaf[bit // 8] ^= 1 << (bit % 8)
            proof = MerkleProof(
                key=proof.key, leaf_digest=bytes(leaf), siblings=proof.siblings, suite_id=proof.suite_id
            )
        elif target == "sibling":
            idx = rng.randrange(len(proof.siblings))
            sib = bytearray(proof.siblings[idx])
            bit = rng.randrange(len(sib) * 8)
            sib[bit // 8] ^= 1 << (bit % 8)
            siblings = list(proof.siblings)
            siblings[idx] = bytes(sib)
            proof = MerkleProof(
                key=proof.key, leaf_digest=proof.leaf_digest, siblings=tuple(siblings), suite_id=proof.suite_id
            )
        else:
            bit = rng.randrange(len(root) * 8)
            root[bit // 8] ^= 1 << (bit % 8)
        assert not verify_proof(bytes(root), proof, SUITE)


def test_proof_not_valid_against_other_tree():
    rng = random.Random(7)
    spec = toy_spec(3)
    tree_a = build_tree(SUITE, rand_leaves(rng, 64))
    tree_b = build_tree(SUITE, rand_leaves(rng, 64))
    for index in range(0, 64, 7):
        proof = prove(tree_a, key_from_index(index, spec))
        assert not verify_proof(tree_b.root, proof, SUITE)


def test_malformed_proofs_return_false():
    rng = random.Random(8)
    spec = toy_spec(2)
    tree = build_tree(SUITE, rand_leaves(rng, 16))
    good = prove(tree, key_from_index(5, spec))
    short = MerkleProof(
        key=good.key, leaf_digest=good.leaf_digest, siblings=good.siblings[:-1], suite_id=good.suite_id
    )
    assert not verify_proof(tree.root, short, SUITE)
    foreign = MerkleProof(
        key=good.key, leaf_digest=good.leaf_digest, siblings=good.siblings, suite_id="sha3-256"
    )
    assert not verify_proof(tree.root, foreign, SUITE)


def test_oracle_matches_build_tree():
    rng = random.Random(9)
    for depth in range(0, 11):
        leaves = rand_leaves(rng, 2**depth)
        assert oracle_root(SUITE, leaves) == build_tree(SUITE, leaves).root


def test_oracle_single_leaf_is_root():
    leaf = bytes(range(32))
    assert oracle_root(SUITE, [leaf]).value == leaf
    assert build_tree(SUITE, [leaf]).root.value == leaf


def test_oracle_rejects_non_power_of_two():
    rng = random.Random(10)
    with pytest.raises(TreeError):
        oracle_root(SUITE, rand_leaves(rng, 3))
    with pytest.raises(TreeError):
        build_tree(SUITE, rand_leaves(rng, 12))


def test_build_rejects_wrong_digest_length():
    with pytest.raises(TreeError):
        build_tree(SUITE, [b"\x00" * 16] * 4)


def test_internal_hash_count_is_n_minus_one():
    calls = {"n": 0}

    def counting(m: bytes) -> bytes:
        calls["n"] += 1
        return hashlib.sha256(m).digest()

    register_algorithm("counting-sha2", counting)
    suite = make_suite(["counting-sha2"], SuiteMode.SINGLE)
    rng = random.Random(11)
    leaves = rand_leaves(rng, 1024)
    calls["n"] = 0
    build_tree(suite, leaves)
    assert calls["n"] == 1023


def test_proof_byte_size_per_suite():
    rng = random.Random(12)
    spec = toy_spec(4)
    for suite, width in ((SUITE, 32), (CONCAT, 64)):
        tree = build_tree(suite, rand_leaves(rng, 256, width))
        proof = prove(tree, key_from_index(77, spec))
        assert sum(len(s) for s in proof.siblings) == 8 * width


def test_proof_json_roundtrip():
    rng = random.Random(13)
    spec = toy_spec(4)
    tree = build_tree(SUITE, rand_leaves(rng, 256))
    proof = prove(tree, key_from_index(123, spec))
    doc = proof.to_json()
    back = MerkleProof.from_json(doc, spec)
    assert back == proof
    assert verify_proof(tree.root, back, SUITE)
