"""Fixed-depth binary hash tree over every grid leaf.

The tree is fully materialized: with 2^18 leaves that is about half a
million digests, a few tens of megabytes at desk scale, and every proof is
a straight array lookup. Internal nodes hash 0x01 || left || right under
the escrow's suite; the root alone is published.

Proof convention (versioned into the file formats): siblings are listed
leaf-adjacent first, and at each level the current node is the left child
when the corresponding key bit is 0, consuming bits LSB-first from the
bottom of the tree.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .grid import GridKey, key_from_index, GridSpec
from .hash_suite import Digest, HashSuite

NODE_TAG = b"\x01"


class TreeError(ValueError):
    """Bad leaf count or malformed digest input."""


@dataclass(frozen=True)
class MerkleProof:
    """Authentication path for one leaf: the sibling digests from the leaf's
    neighbour up to the root's children."""

    key: GridKey
    leaf_digest: bytes
    siblings: tuple[bytes, ...]
    suite_id: str

    def to_json(self) -> dict:
        return {
            "format_version": 1,
            "suite": self.suite_id,
            "key": self.key.x,
            "leaf_digest": self.leaf_digest.hex(),
            "siblings": [s.hex() for s in self.siblings],
        }

    @classmethod
    def from_json(cls, doc: dict, spec: GridSpec) -> "MerkleProof":
        from .grid import parse_key

        return cls(
            key=parse_key(doc["key"], spec),
            leaf_digest=bytes.fromhex(doc["leaf_digest"]),
            siblings=tuple(bytes.fromhex(s) for s in doc["siblings"]),
            suite_id=doc["suite"],
        )


class MerkleTree:
    """Materialized levels: level 0 holds the leaves, the last level the root."""

    def __init__(self, suite: HashSuite, levels: list[list[bytes]]) -> None:
        self.suite = suite
        self.levels = levels
        self.depth = len(levels) - 1

    @property
    def root(self) -> Digest:
        return Digest(value=self.levels[-1][0], suite_id=self.suite.name)

    def prove(self, key: GridKey) -> MerkleProof:
        return prove(self, key)


def build_tree(suite: HashSuite, leaf_digests: Sequence[bytes | Digest]) -> MerkleTree:
    """Hash a full power-of-two leaf array up to its root.

    Performs exactly len(leaves) - 1 internal hash evaluations.
    """
    n = len(leaf_digests)
    if n == 0 or n & (n - 1):
        raise TreeError(f"leaf count must be a power of two, got {n}")
    width = suite.output_length
    leaves: list[bytes] = []
    for d in leaf_digests:
        raw = d.value if isinstance(d, Digest) else d
        if len(raw) != width:
            raise TreeError(f"leaf digest length {len(raw)} != suite output {width}")
        leaves.append(raw)
    h = suite.hasher()
    levels = [leaves]
    current = leaves
    while len(current) > 1:
        nxt = [
            h(NODE_TAG + current[k] + current[k + 1])
            for k in range(0, len(current), 2)
        ]
        levels.append(nxt)
        current = nxt
    return MerkleTree(suite=suite, levels=levels)


def prove(tree: MerkleTree, key: GridKey) -> MerkleProof:
    """Collect the sibling digests along the leaf-to-root path."""
    if key.depth != tree.depth:
        raise TreeError(f"key depth {key.depth} != tree depth {tree.depth}")
    index = key.index
    siblings = []
    pos = index
    for level in range(tree.depth):
        siblings.append(tree.levels[level][pos ^ 1])
        pos >>= 1
    return MerkleProof(
        key=key,
        leaf_digest=tree.levels[0][index],
        siblings=tuple(siblings),
        suite_id=tree.suite.name,
    )


def verify_proof(root: Digest | bytes, proof: MerkleProof, suite: HashSuite) -> bool:
    """Fold the leaf digest up through the siblings and compare to the root.

    Malformed proofs (wrong sibling count or digest lengths, foreign suite)
    return False rather than raising.
    """
    root_bytes = root.value if isinstance(root, Digest) else root
    width = suite.output_length
    if proof.suite_id != suite.name or len(root_bytes) != width:
        return False
    if len(proof.siblings) != proof.key.depth or len(proof.leaf_digest) != width:
        return False
    if any(len(s) != width for s in proof.siblings):
        return False
    h = suite.hasher()
    current = proof.leaf_digest
    index = proof.key.index
    for level, sibling in enumerate(proof.siblings):
        if (index >> level) & 1:
            current = h(NODE_TAG + sibling + current)
        else:
            current = h(NODE_TAG + current + sibling)
    return current == root_bytes


def oracle_root(suite: HashSuite, leaf_digests: Sequence[bytes | Digest]) -> Digest:
    """Independent naive root recomputation for cross-checking build_tree.

    Recursive halving instead of level sweeps; capped at 2^10 leaves. Test
    infrastructure, not a production path.
    """
    n = len(leaf_digests)
    if n == 0 or n & (n - 1):
        raise TreeError(f"leaf count must be a power of two, got {n}")
    if n > 1 << 10:
        raise TreeError("oracle_root is capped at 1024 leaves")
    raw = [d.value if isinstance(d, Digest) else d for d in leaf_digests]

    def fold(part: list[bytes]) -> bytes:
        if len(part) == 1:
            return part[0]
        mid = len(part) // 2
        return suite.hash_bytes(NODE_TAG + fold(part[:mid]) + fold(part[mid:]))

    return Digest(value=fold(raw), suite_id=suite.name)
