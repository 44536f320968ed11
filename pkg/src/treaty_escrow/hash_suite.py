"""Named hash primitives and the concatenation combiner.

Each party nominates a hash function it trusts; the escrow hashes with the
concatenation of all nominees, which stays collision-resistant as long as at
least one component does. Only 256-bit primitives ship in the registry;
additional algorithms can be registered at runtime.

Canonical suite names follow the grammar
``sha2-256 | sha3-256 | concat(<name>,<name>[,...])`` (lowercase, no
whitespace) and are embedded verbatim in file headers, so they must never
change for a given suite.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

SHA2_256 = "sha2-256"
SHA3_256 = "sha3-256"

COMPONENT_DIGEST_LEN = 32


class SuiteError(ValueError):
    """Bad suite construction: unknown algorithm, duplicates, arity mismatch."""


class SuiteMode(str, Enum):
    SINGLE = "single"
    CONCAT = "concat"


_REGISTRY: dict[str, Callable[[bytes], bytes]] = {
    SHA2_256: lambda m: hashlib.sha256(m).digest(),
    SHA3_256: lambda m: hashlib.sha3_256(m).digest(),
}


def register_algorithm(name: str, fn: Callable[[bytes], bytes]) -> None:
    """Add a hash function to the registry.

    The function must map bytes to a 32-byte digest; this is probed once at
    registration time.
    """
    if not name or any(c in name for c in "(),") or name != name.lower():
        raise SuiteError(f"invalid algorithm name {name!r}")
    probe = fn(b"")
    if not isinstance(probe, bytes) or len(probe) != COMPONENT_DIGEST_LEN:
        raise SuiteError(f"algorithm {name!r} does not produce 32-byte digests")
    _REGISTRY[name] = fn


def registered_algorithms() -> tuple[str, ...]:
    return tuple(sorted(_REGISTRY))


@dataclass(frozen=True)
class Digest:
    """A suite output: fixed-length bytes tagged with the producing suite."""

    value: bytes
    suite_id: str

    @property
    def hex(self) -> str:
        return self.value.hex()

    def __len__(self) -> int:
        return len(self.value)


@dataclass(frozen=True)
class HashSuite:
    """An ordered combination of registry algorithms.

    SINGLE wraps exactly one component; CONCAT concatenates the digests of
    two or more distinct components in order. Output length is fixed for the
    suite's lifetime.
    """

    components: tuple[str, ...]
    mode: SuiteMode

    @property
    def name(self) -> str:
        if self.mode is SuiteMode.SINGLE:
            return self.components[0]
        return "concat(" + ",".join(self.components) + ")"

    @property
    def output_length(self) -> int:
        return COMPONENT_DIGEST_LEN * len(self.components)

    def hash_bytes(self, message: bytes) -> bytes:
        """Raw digest bytes; the hot path for bulk tree building."""
        fns = [_REGISTRY[c] for c in self.components]
        if len(fns) == 1:
            return fns[0](message)
        return b"".join(fn(message) for fn in fns)

    def hasher(self) -> Callable[[bytes], bytes]:
        """A bound bytes->bytes closure over the current registry entries."""
        fns = tuple(_REGISTRY[c] for c in self.components)
        if len(fns) == 1:
            return fns[0]

        def combined(message: bytes, _fns=fns) -> bytes:
            return b"".join(fn(message) for fn in _fns)

        return combined


def make_suite(components: Sequence[str], mode: SuiteMode | str) -> HashSuite:
    """Build a suite from component algorithm names.

    CONCAT requires at least two distinct components; SINGLE exactly one.
    """
    mode = SuiteMode(mode)
    if not components:
        raise SuiteError("component list is empty")
    for c in components:
        if c not in _REGISTRY:
            raise SuiteError(f"unknown hash algorithm {c!r}")
    if mode is SuiteMode.SINGLE:
        if len(components) != 1:
            raise SuiteError("SINGLE suites take exactly one component")
    else:
        if len(components) < 2:
            raise SuiteError("CONCAT suites take at least two components")
        if len(set(components)) != len(components):
            raise SuiteError("duplicate component in CONCAT suite")
    if len(components) > 4:
        raise SuiteError("suites are limited to four components")
    return HashSuite(components=tuple(components), mode=mode)


def parse_suite(name: str) -> HashSuite:
    """Reconstruct a suite from its canonical name."""
    if name.startswith("concat(") and name.endswith(")"):
        inner = name[len("concat(") : -1]
        return make_suite(inner.split(","), SuiteMode.CONCAT)
    return make_suite([name], SuiteMode.SINGLE)


def digest(suite: HashSuite, message: bytes) -> Digest:
    """Hash a message under the suite; CONCAT outputs are the in-order
    concatenation of the component digests."""
    return Digest(value=suite.hash_bytes(message), suite_id=suite.name)
