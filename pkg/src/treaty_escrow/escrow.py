"""The declarer's escrow: build, reveal, prove absence, verify, re-commit.

One build walks every leaf of the grid tree: declared sites become PRESENT
leaves, everything else (including the key space beyond the valid grid
domain) becomes ABSENT leaves with their own derived salts, so revealing
any one cell says nothing about the rest. The published commitment is the
root digest plus the parameters a verifier needs; the private package keeps
the declaration and the master secret, and re-derives salts and the tree on
demand.

File formats (format-version 1):
  declaration  JSON records with lat/lon as 6-decimal-degree strings
  package      binary container, magic "TESC", length-prefixed sections
  commitment   canonical JSON, hex digests
  revelation   JSON wrapping the TLV preimage bytes (hex) and the proof
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass
from datetime import datetime, timezone
from decimal import Decimal
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

from .commitments import (
    Level0Preimage,
    Level1Preimage,
    NONCE_LEN,
    OpeningResult,
    Presence,
    SALT_LEN,
    SiteRecord,
    TAG_LEAF,
    TAG_SALT0,
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
from .grid import (
    DPRK_GRID,
    GridKey,
    GridSpec,
    coord_to_key,
    format_coord,
    is_grid_aligned,
    key_to_coord,
    parse_key,
)
from .hash_suite import Digest, HashSuite, parse_suite
from .merkle import MerkleProof, MerkleTree, build_tree, verify_proof

PACKAGE_MAGIC = b"TESC"
FILE_FORMAT_VERSION = 1


class NotASite(Exception):
    """No declared site at this key; use prove_absence."""

    def __init__(self, key: GridKey) -> None:
        self.key = key
        super().__init__(f"no declared site at key {key.x}")


class IsASite(Exception):
    """A declared site occupies this key; use reveal."""

    def __init__(self, key: GridKey) -> None:
        self.key = key
        super().__init__(f"declared site at key {key.x}")


class IntegrityError(Exception):
    """Stored escrow data fails its self-consistency check."""

    def __init__(self, field: str, detail: str = "") -> None:
        self.field = field
        super().__init__(f"integrity failure at {field}" + (f": {detail}" if detail else ""))


class RevelationKind(str, Enum):
    PRESENCE_L0 = "PRESENCE_L0"
    PRESENCE_L1 = "PRESENCE_L1"
    ABSENCE = "ABSENCE"


class RevelationResult(str, Enum):
    OK = "OK"
    BAD_PATH = "BAD_PATH"
    BAD_OPENING = "BAD_OPENING"
    NONCE_MISMATCH = "NONCE_MISMATCH"


def canonical_json(doc) -> str:
    """The one JSON rendering used for files, wire bodies, and log hashing."""
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass(frozen=True)
class Declaration:
    """The complete site list a declarer commits to."""

    sites: tuple[SiteRecord, ...]
    declarer: str = ""
    declared_on: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "sites", tuple(self.sites))
        seen = set()
        for site in self.sites:
            if site.key.x in seen:
                raise ValueError(f"duplicate site key {site.key.x}")
            seen.add(site.key.x)


@dataclass(frozen=True)
class PublicCommitment:
    """Everything a verifier needs, and nothing site-derived beyond the root."""

    root: Digest
    suite_name: str
    grid_spec: GridSpec
    inspector_nonce: bytes
    created_at: str
    format_version: int = FILE_FORMAT_VERSION

    def to_json(self) -> dict:
        return {
            "format_version": self.format_version,
            "root": self.root.hex,
            "suite": self.suite_name,
            "grid": self.grid_spec.to_json(),
            "inspector_nonce": self.inspector_nonce.hex(),
            "created_at": self.created_at,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "PublicCommitment":
        suite_name = doc["suite"]
        return cls(
            root=Digest(value=bytes.fromhex(doc["root"]), suite_id=suite_name),
            suite_name=suite_name,
            grid_spec=GridSpec.from_json(doc["grid"]),
            inspector_nonce=bytes.fromhex(doc["inspector_nonce"]),
            created_at=doc["created_at"],
            format_version=int(doc["format_version"]),
        )


@dataclass(frozen=True)
class Revelation:
    """One opened cell: preimage(s) plus the authentication path."""

    kind: RevelationKind
    level0: Level0Preimage
    level1: Optional[Level1Preimage]
    proof: MerkleProof

    def __post_init__(self) -> None:
        if self.kind is RevelationKind.PRESENCE_L1 and self.level1 is None:
            raise ValueError("PRESENCE_L1 revelations include the level-1 preimage")
        if self.kind is not RevelationKind.PRESENCE_L1 and self.level1 is not None:
            raise ValueError(f"{self.kind.value} revelations carry no level-1 preimage")
        if self.kind is RevelationKind.ABSENCE and self.level0.presence is not Presence.ABSENT:
            raise ValueError("ABSENCE revelations open an ABSENT leaf")

    def to_json(self) -> dict:
        return {
            "format_version": FILE_FORMAT_VERSION,
            "kind": self.kind.value,
            "suite": self.proof.suite_id,
            "level0": encode_level0(self.level0).hex(),
            "level1": encode_level1(self.level1).hex() if self.level1 else None,
            "proof": self.proof.to_json(),
        }

    @classmethod
    def from_json(cls, doc: dict, spec: GridSpec) -> "Revelation":
        level1 = decode_level1(bytes.fromhex(doc["level1"])) if doc.get("level1") else None
        return cls(
            kind=RevelationKind(doc["kind"]),
            level0=decode_level0(bytes.fromhex(doc["level0"])),
            level1=level1,
            proof=MerkleProof.from_json(doc["proof"], spec),
        )


@dataclass
class EscrowPackage:
    """PRIVATE to the declarer: declaration, master secret, and parameters.

    The tree and per-leaf salts are derived, not stored; the root is kept so
    loads can verify self-consistency.
    """

    declaration: Declaration
    master_secret: bytes
    inspector_nonce: bytes
    suite: HashSuite
    grid_spec: GridSpec
    root: Digest
    created_at: str
    _tree: Optional[MerkleTree] = dataclasses.field(default=None, compare=False, repr=False)
    _by_index: Optional[dict] = dataclasses.field(default=None, compare=False, repr=False)

    def tree(self) -> MerkleTree:
        if self._tree is None:
            leaves = _leaf_digests(
                self.declaration, self.master_secret, self.inspector_nonce, self.suite, self.grid_spec
            )
            self._tree = build_tree(self.suite, leaves)
        return self._tree

    def site_at(self, key: GridKey) -> Optional[SiteRecord]:
        if self._by_index is None:
            self._by_index = {site.key.index: site for site in self.declaration.sites}
        return self._by_index.get(key.index)


def _leaf_digests(
    declaration: Declaration,
    master_secret: bytes,
    inspector_nonce: bytes,
    suite: HashSuite,
    spec: GridSpec,
) -> list[bytes]:
    """All 2^depth leaf digests in index order.

    The absent-leaf encoding differs only in the salt bytes, so the TLV
    template is built once and spliced; every index still gets its own
    derived salt and two hash evaluations.
    """
    h = suite.hasher()
    absent_template = encode_level0(
        Level0Preimage(
            salt0=bytes(SALT_LEN),
            inspector_nonce=inspector_nonce,
            presence=Presence.ABSENT,
            level1_digest=zero_level1_digest(suite),
        )
    )
    # salt0 is the first TLV field: 1 version byte + 3 header bytes, then 32 bytes of salt.
    head = TAG_LEAF + absent_template[:4]
    tail = absent_template[4 + SALT_LEN :]
    salt_prefix = TAG_SALT0 + master_secret

    present: dict[int, bytes] = {}
    for site in declaration.sites:
        salt0, salt1 = derive_salts(master_secret, site.key, suite)
        q = Level1Preimage(salt1=salt1, payload=site.level1)
        p = Level0Preimage(
            salt0=salt0,
            inspector_nonce=inspector_nonce,
            presence=Presence.PRESENT,
            facility_type=site.facility_type,
            coord=(site.key.i, site.key.j),
            status=site.status,
            level1_digest=commit_level1(suite, q).value,
        )
        present[site.key.index] = commit_leaf(suite, p).value

    depth = spec.depth
    fmt = f"0{depth}b"
    leaves: list[bytes] = []
    append = leaves.append
    get_present = present.get
    for idx in range(spec.leaf_count):
        known = get_present(idx)
        if known is not None:
            append(known)
        else:
            salt0 = h(salt_prefix + format(idx, fmt).encode())[:SALT_LEN]
            append(h(head + salt0 + tail))
    return leaves


def build_escrow(
    declaration: Declaration,
    inspector_nonce: bytes,
    suite: HashSuite,
    grid_spec: GridSpec = DPRK_GRID,
    master_secret: bytes = b"",
) -> tuple[EscrowPackage, PublicCommitment]:
    """Commit to the full declaration and emit the single public digest."""
    if len(inspector_nonce) != NONCE_LEN:
        raise ValueError("inspector nonce must be 32 bytes")
    if len(master_secret) != SALT_LEN:
        raise ValueError("master secret must be 32 bytes")
    for site in declaration.sites:
        if not grid_spec.contains(site.key):
            raise ValueError(f"site key {site.key.x} outside the valid grid domain")
    leaves = _leaf_digests(declaration, master_secret, inspector_nonce, suite, grid_spec)
    tree = build_tree(suite, leaves)
    created = now_iso()
    package = EscrowPackage(
        declaration=declaration,
        master_secret=master_secret,
        inspector_nonce=inspector_nonce,
        suite=suite,
        grid_spec=grid_spec,
        root=tree.root,
        created_at=created,
        _tree=tree,
    )
    return package, commitment_for(package)


def commitment_for(package: EscrowPackage) -> PublicCommitment:
    return PublicCommitment(
        root=package.root,
        suite_name=package.suite.name,
        grid_spec=package.grid_spec,
        inspector_nonce=package.inspector_nonce,
        created_at=package.created_at,
    )


def _preimages_for_site(package: EscrowPackage, site: SiteRecord) -> tuple[Level0Preimage, Level1Preimage]:
    salt0, salt1 = derive_salts(package.master_secret, site.key, package.suite)
    q = Level1Preimage(salt1=salt1, payload=site.level1)
    p = Level0Preimage(
        salt0=salt0,
        inspector_nonce=package.inspector_nonce,
        presence=Presence.PRESENT,
        facility_type=site.facility_type,
        coord=(site.key.i, site.key.j),
        status=site.status,
        level1_digest=commit_level1(package.suite, q).value,
    )
    return p, q


def reveal(package: EscrowPackage, key: GridKey, level: str) -> Revelation:
    """Open a declared site at level L0 (existence, type, status) or L1
    (inventories too). Level-0 revelations carry the level-1 digest but no
    level-1 plaintext."""
    if level not in ("L0", "L1"):
        raise ValueError(f"level must be L0 or L1, got {level!r}")
    site = package.site_at(key)
    if site is None:
        raise NotASite(key)
    p, q = _preimages_for_site(package, site)
    proof = package.tree().prove(key)
    if level == "L0":
        return Revelation(kind=RevelationKind.PRESENCE_L0, level0=p, level1=None, proof=proof)
    return Revelation(kind=RevelationKind.PRESENCE_L1, level0=p, level1=q, proof=proof)


def prove_absence(package: EscrowPackage, key: GridKey) -> Revelation:
    """Open the empty leaf at a challenged key."""
    if package.site_at(key) is not None:
        raise IsASite(key)
    salt0, _ = derive_salts(package.master_secret, key, package.suite)
    p = Level0Preimage(
        salt0=salt0,
        inspector_nonce=package.inspector_nonce,
        presence=Presence.ABSENT,
        level1_digest=zero_level1_digest(package.suite),
    )
    proof = package.tree().prove(key)
    return Revelation(kind=RevelationKind.ABSENCE, level0=p, level1=None, proof=proof)


def verify_revelation(pc: PublicCommitment, rev: Revelation) -> RevelationResult:
    """Check a revelation against the published commitment.

    Diagnoses, in evaluation order: the authentication path must reproduce
    the root; the preimages must reproduce the leaf digest; the leaf's
    freshness nonce must equal the published one; PRESENT coordinates must
    match the proof's key.
    """
    suite = parse_suite(pc.suite_name)
    expected_presence = (
        Presence.ABSENT if rev.kind is RevelationKind.ABSENCE else Presence.PRESENT
    )
    if rev.level0.presence is not expected_presence:
        return RevelationResult.BAD_OPENING
    if not verify_proof(pc.root, rev.proof, suite):
        return RevelationResult.BAD_PATH
    if verify_opening(suite, rev.proof.leaf_digest, rev.level0, rev.level1) is not OpeningResult.OK:
        return RevelationResult.BAD_OPENING
    if rev.level0.inspector_nonce != pc.inspector_nonce:
        return RevelationResult.NONCE_MISMATCH
    if rev.level0.presence is Presence.PRESENT:
        if rev.level0.coord != (rev.proof.key.i, rev.proof.key.j):
            return RevelationResult.BAD_OPENING
    return RevelationResult.OK


def rekey(
    package: EscrowPackage,
    new_suite: HashSuite,
    new_master_secret: bytes,
    inspector_nonce: Optional[bytes] = None,
) -> tuple[EscrowPackage, PublicCommitment]:
    """Re-commit the identical declaration under a new suite, e.g. after
    doubts arise about a hash function's collision resistance."""
    nonce = package.inspector_nonce if inspector_nonce is None else inspector_nonce
    new_package, new_pc = build_escrow(
        package.declaration, nonce, new_suite, package.grid_spec, new_master_secret
    )
    if new_package.declaration != package.declaration:
        raise IntegrityError("declaration", "content changed during rekey")
    return new_package, new_pc


# ---------------------------------------------------------------------------
# Declaration file format
# ---------------------------------------------------------------------------

def site_to_json(site: SiteRecord, spec: GridSpec) -> dict:
    lat, lon = key_to_coord(site.key, spec)
    doc = {
        "lat": format_coord(lat),
        "lon": format_coord(lon),
        "facility_type": site.facility_type,
        "status": site.status,
    }
    doc.update(payload_to_json(site.level1))
    return doc


def site_from_json(doc: dict, spec: GridSpec) -> SiteRecord:
    lat = float(Decimal(str(doc["lat"])))
    lon = float(Decimal(str(doc["lon"])))
    if not is_grid_aligned(lat, lon, spec):
        raise ValueError(
            f"coordinates ({doc['lat']}, {doc['lon']}) are not grid-aligned; "
            "declarations must name exact grid points"
        )
    return SiteRecord(
        key=coord_to_key(lat, lon, spec),
        facility_type=doc["facility_type"],
        status=doc["status"],
        level1=payload_from_json(doc),
    )


def declaration_to_json(declaration: Declaration, spec: GridSpec) -> dict:
    return {
        "format_version": FILE_FORMAT_VERSION,
        "declarer": declaration.declarer,
        "declared_on": declaration.declared_on,
        "sites": [site_to_json(s, spec) for s in declaration.sites],
    }


def declaration_from_json(doc: dict, spec: GridSpec) -> Declaration:
    return Declaration(
        sites=tuple(site_from_json(s, spec) for s in doc["sites"]),
        declarer=doc.get("declarer", ""),
        declared_on=doc.get("declared_on", ""),
    )


def load_declaration(path: str | Path, spec: GridSpec = DPRK_GRID) -> Declaration:
    doc = json.loads(Path(path).read_text(), parse_float=Decimal)
    return declaration_from_json(doc, spec)


def save_declaration(declaration: Declaration, path: str | Path, spec: GridSpec = DPRK_GRID) -> None:
    Path(path).write_text(json.dumps(declaration_to_json(declaration, spec), indent=2) + "\n")


# ---------------------------------------------------------------------------
# Package and commitment files
# ---------------------------------------------------------------------------

def _section(value: bytes) -> bytes:
    return struct.pack(">I", len(value)) + value


def save_package(package: EscrowPackage, path: str | Path) -> None:
    decl_json = canonical_json(declaration_to_json(package.declaration, package.grid_spec))
    blob = (
        PACKAGE_MAGIC
        + bytes([FILE_FORMAT_VERSION])
        + _section(package.suite.name.encode())
        + _section(canonical_json(package.grid_spec.to_json()).encode())
        + _section(package.inspector_nonce)
        + _section(package.master_secret)
        + _section(decl_json.encode())
        + _section(package.root.value)
        + _section(package.created_at.encode())
    )
    Path(path).write_bytes(blob)


def load_package(path: str | Path) -> EscrowPackage:
    """Read a package and verify it end to end: the root is recomputed from
    the stored declaration and secrets, so silent corruption is a hard error."""
    blob = Path(path).read_bytes()
    if blob[:4] != PACKAGE_MAGIC:
        raise IntegrityError("magic", "not a TESC package")
    if len(blob) < 5 or blob[4] != FILE_FORMAT_VERSION:
        raise IntegrityError("format_version", "unsupported version")
    pos = 5

    def section(name: str) -> bytes:
        nonlocal pos
        if pos + 4 > len(blob):
            raise IntegrityError(name, "truncated header")
        (length,) = struct.unpack_from(">I", blob, pos)
        pos += 4
        if pos + length > len(blob):
            raise IntegrityError(name, "truncated section")
        value = blob[pos : pos + length]
        pos += length
        return value

    try:
        suite = parse_suite(section("suite").decode())
    except Exception as exc:
        raise IntegrityError("suite", str(exc)) from exc
    try:
        grid_spec = GridSpec.from_json(json.loads(section("grid")))
    except IntegrityError:
        raise
    except Exception as exc:
        raise IntegrityError("grid", str(exc)) from exc
    nonce = section("inspector_nonce")
    secret = section("master_secret")
    if len(nonce) != NONCE_LEN:
        raise IntegrityError("inspector_nonce", "wrong length")
    if len(secret) != SALT_LEN:
        raise IntegrityError("master_secret", "wrong length")
    decl_raw = section("declaration")
    try:
        declaration = declaration_from_json(json.loads(decl_raw, parse_float=Decimal), grid_spec)
    except IntegrityError:
        raise
    except Exception as exc:
        raise IntegrityError("declaration", str(exc)) from exc
    stored_root = section("root")
    created_at = section("created_at").decode()
    if pos != len(blob):
        raise IntegrityError("trailer", "trailing bytes")

    leaves = _leaf_digests(declaration, secret, nonce, suite, grid_spec)
    tree = build_tree(suite, leaves)
    if tree.root.value != stored_root:
        raise IntegrityError("root", "stored root does not match recomputed root")
    return EscrowPackage(
        declaration=declaration,
        master_secret=secret,
        inspector_nonce=nonce,
        suite=suite,
        grid_spec=grid_spec,
        root=tree.root,
        created_at=created_at,
        _tree=tree,
    )


def save_commitment(pc: PublicCommitment, path: str | Path) -> None:
    Path(path).write_text(canonical_json(pc.to_json()))


def load_commitment(path: str | Path) -> PublicCommitment:
    return PublicCommitment.from_json(json.loads(Path(path).read_text()))


def save_revelation(rev: Revelation, path: str | Path) -> None:
    Path(path).write_text(canonical_json(rev.to_json()))


def load_revelation(path: str | Path, spec: GridSpec) -> Revelation:
    return Revelation.from_json(json.loads(Path(path).read_text()), spec)


def challenge_key(pc: PublicCommitment, lat_deg: float, lon_deg: float) -> GridKey:
    """The key an inspector names when challenging a coordinate."""
    return coord_to_key(lat_deg, lon_deg, pc.grid_spec)


def parse_commitment_key(pc: PublicCommitment, x: str) -> GridKey:
    return parse_key(x, pc.grid_spec)
