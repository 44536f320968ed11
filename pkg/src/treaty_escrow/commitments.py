"""Nested two-level leaf commitments with salts and the inspector nonce.

Every leaf commits to a level-0 message: the host salt, the inspector's
freshness nonce, a presence flag, the clear-text site fields, and the digest
of the level-1 message (inventories). Revealing level 0 shows that a site
exists and where; the level-1 preimage can follow later without re-opening
anything else. Empty cells commit the same way with empty site fields.

The wire form is a fixed-order TLV encoding (format-version byte, then
tag + 2-byte big-endian length + value per field). It is the bit-exact
interop contract: both parties must produce identical bytes for identical
content. Decimal quantities travel as scaled integers (grams, centi-percent)
so no floating-point representation leaks into the hash preimages.

Domain-separation tags: 0x00 leaf commit, 0x02 level-1 commit, 0x10/0x11
salt derivation (0x01 is the tree's internal-node tag).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from enum import Enum
from typing import Optional, Sequence

from .grid import GridKey
from .hash_suite import Digest, HashSuite, digest as suite_digest

FORMAT_VERSION = 1

TAG_LEAF = b"\x00"
TAG_LEVEL1 = b"\x02"
TAG_SALT0 = b"\x10"
TAG_SALT1 = b"\x11"

SALT_LEN = 32
NONCE_LEN = 32
MAX_SHORT_FIELD = 64
MAX_NUCLIDE = 32
MAX_FREE_TEXT = 4096


class EncodingError(ValueError):
    """Field out of bounds or malformed canonical bytes."""


class Presence(Enum):
    ABSENT = 0
    PRESENT = 1


class OpeningResult(Enum):
    OK = "OK"
    MISMATCH_L0 = "MISMATCH_L0"
    MISMATCH_L1 = "MISMATCH_L1"


def _as_decimal(value, what: str) -> Decimal:
    try:
        d = value if isinstance(value, Decimal) else Decimal(str(value))
    except InvalidOperation as exc:
        raise EncodingError(f"{what} is not a decimal number: {value!r}") from exc
    return d


def _scaled_int(value: Decimal, digits: int, what: str, limit: int) -> int:
    """Scale a non-negative decimal with at most `digits` fractional digits
    to an integer."""
    scaled = value.scaleb(digits)
    if scaled != scaled.to_integral_value():
        raise EncodingError(f"{what} has more than {digits} fractional digits: {value}")
    n = int(scaled)
    if n < 0:
        raise EncodingError(f"{what} must be non-negative: {value}")
    if n >= limit:
        raise EncodingError(f"{what} too large: {value}")
    return n


@dataclass(frozen=True)
class Level1Payload:
    """Site inventory: counts, fissile-material masses, and isotopics."""

    warhead_count: int
    missile_count: int
    uranium_kg: Decimal
    plutonium_kg: Decimal
    isotopics: tuple[tuple[str, Decimal], ...] = ()
    free_text: str = ""

    def __post_init__(self) -> None:
        for name in ("warhead_count", "missile_count"):
            n = getattr(self, name)
            if not isinstance(n, int) or n < 0 or n >= 1 << 32:
                raise EncodingError(f"{name} must be a non-negative integer, got {n!r}")
        object.__setattr__(self, "uranium_kg", _as_decimal(self.uranium_kg, "uranium_kg"))
        object.__setattr__(self, "plutonium_kg", _as_decimal(self.plutonium_kg, "plutonium_kg"))
        _scaled_int(self.uranium_kg, 3, "uranium_kg", 1 << 64)
        _scaled_int(self.plutonium_kg, 3, "plutonium_kg", 1 << 64)
        entries = []
        for nuclide, percent in self.isotopics:
            if not nuclide or len(nuclide.encode()) > MAX_NUCLIDE:
                raise EncodingError(f"nuclide tag out of bounds: {nuclide!r}")
            p = _as_decimal(percent, f"isotopic {nuclide}")
            if not 0 <= p <= 100:
                raise EncodingError(f"isotopic {nuclide} percent outside [0, 100]: {p}")
            _scaled_int(p, 2, f"isotopic {nuclide}", 10001)
            entries.append((nuclide, p))
        object.__setattr__(self, "isotopics", tuple(entries))
        if len(self.free_text.encode()) > MAX_FREE_TEXT:
            raise EncodingError("free_text exceeds 4096 bytes")


@dataclass(frozen=True)
class SiteRecord:
    """One declared site: its grid key, clear-text fields, and inventory."""

    key: GridKey
    facility_type: str
    status: str
    level1: Level1Payload

    def __post_init__(self) -> None:
        for name in ("facility_type", "status"):
            v = getattr(self, name)
            if not v or len(v.encode()) > MAX_SHORT_FIELD:
                raise EncodingError(f"{name} must be 1..{MAX_SHORT_FIELD} bytes, got {v!r}")


@dataclass(frozen=True)
class Level1Preimage:
    salt1: bytes
    payload: Level1Payload

    def __post_init__(self) -> None:
        if len(self.salt1) != SALT_LEN:
            raise EncodingError("salt1 must be 32 bytes")


@dataclass(frozen=True)
class Level0Preimage:
    """The leaf message: host salt, inspector nonce, presence flag, site
    fields, and the level-1 digest (all-zero placeholder for empty cells)."""

    salt0: bytes
    inspector_nonce: bytes
    presence: Presence
    facility_type: str = ""
    coord: Optional[tuple[int, int]] = None
    status: str = ""
    level1_digest: bytes = b""

    def __post_init__(self) -> None:
        if len(self.salt0) != SALT_LEN:
            raise EncodingError("salt0 must be 32 bytes")
        if len(self.inspector_nonce) != NONCE_LEN:
            raise EncodingError("inspector_nonce must be 32 bytes")
        if self.presence is Presence.ABSENT:
            if self.facility_type or self.status or self.coord is not None:
                raise EncodingError("ABSENT leaves carry empty site fields")
            if self.level1_digest.strip(b"\x00"):
                raise EncodingError("ABSENT leaves carry an all-zero level-1 digest")
        else:
            if not self.facility_type or not self.status:
                raise EncodingError("PRESENT leaves need facility_type and status")
            if self.coord is None:
                raise EncodingError("PRESENT leaves need coordinates")
            if not self.level1_digest:
                raise EncodingError("PRESENT leaves need a level-1 digest")
        for name in ("facility_type", "status"):
            if len(getattr(self, name).encode()) > MAX_SHORT_FIELD:
                raise EncodingError(f"{name} exceeds {MAX_SHORT_FIELD} bytes")


def _tlv(tag: int, value: bytes) -> bytes:
    if len(value) > 0xFFFF:
        raise EncodingError(f"field 0x{tag:02x} exceeds TLV length bound")
    return struct.pack(">BH", tag, len(value)) + value


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def version(self) -> int:
        if self.pos >= len(self.data):
            raise EncodingError("truncated encoding: missing version byte")
        v = self.data[self.pos]
        self.pos += 1
        return v

    def f(self, expected_tag: int) -> bytes:
        if self.pos + 3 > len(self.data):
            raise EncodingError("truncated encoding: missing TLV header")
        tag, length = struct.unpack_from(">BH", self.data, self.pos)
        if tag != expected_tag:
            raise EncodingError(f"expected tag 0x{expected_tag:02x}, found 0x{tag:02x}")
        self.pos += 3
        if self.pos + length > len(self.data):
            raise EncodingError(f"truncated value for tag 0x{tag:02x}")
        value = self.data[self.pos : self.pos + length]
        self.pos += length
        return value

    def finish(self) -> None:
        if self.pos != len(self.data):
            raise EncodingError("trailing bytes after the last field")


def encode_level0(p: Level0Preimage) -> bytes:
    coord = b"" if p.coord is None else struct.pack(">ii", p.coord[0], p.coord[1])
    return (
        bytes([FORMAT_VERSION])
        + _tlv(0x01, p.salt0)
        + _tlv(0x02, p.inspector_nonce)
        + _tlv(0x03, bytes([p.presence.value]))
        + _tlv(0x04, p.facility_type.encode())
        + _tlv(0x05, coord)
        + _tlv(0x06, p.status.encode())
        + _tlv(0x07, p.level1_digest)
    )


def decode_level0(data: bytes) -> Level0Preimage:
    r = _Reader(data)
    if r.version() != FORMAT_VERSION:
        raise EncodingError("unsupported level-0 format version")
    salt0 = r.f(0x01)
    nonce = r.f(0x02)
    presence_raw = r.f(0x03)
    facility = r.f(0x04).decode()
    coord_raw = r.f(0x05)
    status = r.f(0x06).decode()
    level1_digest = r.f(0x07)
    r.finish()
    if len(presence_raw) != 1 or presence_raw[0] not in (0, 1):
        raise EncodingError("presence flag must be one byte of 0/1")
    if len(coord_raw) not in (0, 8):
        raise EncodingError("coordinates must be empty or two 4-byte offsets")
    coord = struct.unpack(">ii", coord_raw) if coord_raw else None
    return Level0Preimage(
        salt0=salt0,
        inspector_nonce=nonce,
        presence=Presence(presence_raw[0]),
        facility_type=facility,
        coord=coord,
        status=status,
        level1_digest=level1_digest,
    )


def encode_level1(p: Level1Preimage) -> bytes:
    pl = p.payload
    iso = struct.pack(">H", len(pl.isotopics))
    for nuclide, percent in pl.isotopics:
        tag = nuclide.encode()
        iso += struct.pack(">B", len(tag)) + tag
        iso += struct.pack(">H", _scaled_int(percent, 2, nuclide, 10001))
    return (
        bytes([FORMAT_VERSION])
        + _tlv(0x01, p.salt1)
        + _tlv(0x02, struct.pack(">I", pl.warhead_count))
        + _tlv(0x03, struct.pack(">I", pl.missile_count))
        + _tlv(0x04, struct.pack(">Q", _scaled_int(pl.uranium_kg, 3, "uranium_kg", 1 << 64)))
        + _tlv(0x05, struct.pack(">Q", _scaled_int(pl.plutonium_kg, 3, "plutonium_kg", 1 << 64)))
        + _tlv(0x06, iso)
        + _tlv(0x07, pl.free_text.encode())
    )


def decode_level1(data: bytes) -> Level1Preimage:
    r = _Reader(data)
    if r.version() != FORMAT_VERSION:
        raise EncodingError("unsupported level-1 format version")
    salt1 = r.f(0x01)
    warheads = struct.unpack(">I", r.f(0x02))[0]
    missiles = struct.unpack(">I", r.f(0x03))[0]
    uranium_g = struct.unpack(">Q", r.f(0x04))[0]
    plutonium_g = struct.unpack(">Q", r.f(0x05))[0]
    iso_raw = r.f(0x06)
    free_text = r.f(0x07).decode()
    r.finish()
    if len(iso_raw) < 2:
        raise EncodingError("isotopics list missing its count header")
    count = struct.unpack_from(">H", iso_raw, 0)[0]
    pos = 2
    isotopics = []
    for _ in range(count):
        if pos >= len(iso_raw):
            raise EncodingError("truncated isotopics entry")
        tag_len = iso_raw[pos]
        pos += 1
        if pos + tag_len + 2 > len(iso_raw):
            raise EncodingError("truncated isotopics entry")
        nuclide = iso_raw[pos : pos + tag_len].decode()
        pos += tag_len
        centi = struct.unpack_from(">H", iso_raw, pos)[0]
        pos += 2
        isotopics.append((nuclide, Decimal(centi).scaleb(-2)))
    if pos != len(iso_raw):
        raise EncodingError("trailing bytes in isotopics list")
    payload = Level1Payload(
        warhead_count=warheads,
        missile_count=missiles,
        uranium_kg=Decimal(uranium_g).scaleb(-3),
        plutonium_kg=Decimal(plutonium_g).scaleb(-3),
        isotopics=tuple(isotopics),
        free_text=free_text,
    )
    return Level1Preimage(salt1=salt1, payload=payload)


def commit_level1(suite: HashSuite, p: Level1Preimage) -> Digest:
    return suite_digest(suite, TAG_LEVEL1 + encode_level1(p))


def commit_leaf(suite: HashSuite, p: Level0Preimage) -> Digest:
    return suite_digest(suite, TAG_LEAF + encode_level0(p))


def verify_opening(
    suite: HashSuite,
    claimed_leaf_digest: Digest | bytes,
    p: Level0Preimage,
    q: Optional[Level1Preimage] = None,
) -> OpeningResult:
    """Check that preimages reproduce the committed leaf digest.

    Mismatches are diagnoses, not errors; a tampered level-1 preimage reports
    MISMATCH_L1 only when the level-0 opening itself holds.
    """
    claimed = claimed_leaf_digest.value if isinstance(claimed_leaf_digest, Digest) else claimed_leaf_digest
    if commit_leaf(suite, p).value != claimed:
        return OpeningResult.MISMATCH_L0
    if q is not None and commit_level1(suite, q).value != p.level1_digest:
        return OpeningResult.MISMATCH_L1
    return OpeningResult.OK


def derive_salts(master_secret: bytes, key: GridKey, suite: HashSuite) -> tuple[bytes, bytes]:
    """Per-leaf salts from one private master secret.

    Keeps the private package small: salts are recomputed on demand instead
    of stored, and revealing one leaf's salt says nothing about any other.
    The key enters as its ASCII bit string, the same rendering files use.
    """
    if len(master_secret) != SALT_LEN:
        raise EncodingError("master secret must be 32 bytes")
    bits = key.x.encode()
    salt0 = suite.hash_bytes(TAG_SALT0 + master_secret + bits)[:SALT_LEN]
    salt1 = suite.hash_bytes(TAG_SALT1 + master_secret + bits)[:SALT_LEN]
    return (salt0, salt1)


def zero_level1_digest(suite: HashSuite) -> bytes:
    """The placeholder digest carried by empty leaves."""
    return b"\x00" * suite.output_length


def payload_to_json(p: Level1Payload) -> dict:
    """JSON rendering shared by declaration files and wire messages.

    Masses and percents travel as plain numbers; parse with
    ``parse_float=Decimal`` to keep them exact.
    """
    return {
        "warheads": p.warhead_count,
        "missiles": p.missile_count,
        "uranium_kg": float(p.uranium_kg),
        "plutonium_kg": float(p.plutonium_kg),
        "isotopics": [
            {"nuclide": n, "percent": float(pc)} for n, pc in p.isotopics
        ],
        "free_text": p.free_text,
    }


def payload_from_json(doc: dict) -> Level1Payload:
    return Level1Payload(
        warhead_count=int(doc["warheads"]),
        missile_count=int(doc["missiles"]),
        uranium_kg=_as_decimal(doc["uranium_kg"], "uranium_kg"),
        plutonium_kg=_as_decimal(doc["plutonium_kg"], "plutonium_kg"),
        isotopics=tuple(
            (e["nuclide"], _as_decimal(e["percent"], "percent")) for e in doc.get("isotopics", [])
        ),
        free_text=doc.get("free_text", "") or "",
    )
