"""Minute-resolution coordinate grid and its binary leaf keys.

A bounding box is divided into one-minute cells. A point's local coordinates
(i, j) count grid steps east of the western edge and south of the northern
edge; their fixed-width binary renderings concatenate into the key x, which
is also the root-to-leaf path in the escrow tree (0 = left child, MSB first).

Files render keys as 0/1 strings of length i_bits + j_bits and coordinates
as decimal degrees with six fractional digits.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction


class BoundsError(ValueError):
    """Coordinate outside the grid's bounding box."""

    def __init__(self, axis: str, value: float) -> None:
        self.axis = axis
        self.value = value
        super().__init__(f"{axis} {value} outside grid bounds")


class InvalidKey(ValueError):
    """Key bits that do not decode to a grid point inside the valid domain."""


@dataclass(frozen=True)
class GridSpec:
    """Grid geometry. Defaults are the DPRK box at one-minute resolution."""

    lat_min_deg: float = 37.5
    lat_max_deg: float = 43.5
    lon_min_deg: float = 124.0
    lon_max_deg: float = 131.0
    resolution_minutes: int = 1
    i_bits: int = 9
    j_bits: int = 9

    def __post_init__(self) -> None:
        if self.lat_min_deg >= self.lat_max_deg:
            raise ValueError("lat_min_deg must be below lat_max_deg")
        if self.lon_min_deg >= self.lon_max_deg:
            raise ValueError("lon_min_deg must be below lon_max_deg")
        if self.resolution_minutes < 1:
            raise ValueError("resolution_minutes must be >= 1")
        if self.i_max >= (1 << self.i_bits) or self.j_max >= (1 << self.j_bits):
            raise ValueError("bit widths too small for the grid extent")

    @property
    def depth(self) -> int:
        return self.i_bits + self.j_bits

    @property
    def i_max(self) -> int:
        steps = Fraction(str(self.lon_max_deg)) - Fraction(str(self.lon_min_deg))
        return int(steps * 60 / self.resolution_minutes)

    @property
    def j_max(self) -> int:
        steps = Fraction(str(self.lat_max_deg)) - Fraction(str(self.lat_min_deg))
        return int(steps * 60 / self.resolution_minutes)

    @property
    def leaf_count(self) -> int:
        return 1 << self.depth

    @property
    def valid_point_count(self) -> int:
        return (self.i_max + 1) * (self.j_max + 1)

    def contains(self, key: GridKey) -> bool:
        """Whether the key decodes to a point inside the valid domain.

        Keys representable in the bit widths but beyond (i_max, j_max) address
        tree leaves that an escrow commits as empty.
        """
        return (
            key.i_bits == self.i_bits
            and key.j_bits == self.j_bits
            and key.i <= self.i_max
            and key.j <= self.j_max
        )

    def to_json(self) -> dict:
        return {
            "lat_min_deg": self.lat_min_deg,
            "lat_max_deg": self.lat_max_deg,
            "lon_min_deg": self.lon_min_deg,
            "lon_max_deg": self.lon_max_deg,
            "resolution_minutes": self.resolution_minutes,
            "i_bits": self.i_bits,
            "j_bits": self.j_bits,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "GridSpec":
        return cls(
            lat_min_deg=float(doc["lat_min_deg"]),
            lat_max_deg=float(doc["lat_max_deg"]),
            lon_min_deg=float(doc["lon_min_deg"]),
            lon_max_deg=float(doc["lon_max_deg"]),
            resolution_minutes=int(doc["resolution_minutes"]),
            i_bits=int(doc["i_bits"]),
            j_bits=int(doc["j_bits"]),
        )


DPRK_GRID = GridSpec()


@dataclass(frozen=True, order=True)
class GridKey:
    """Local coordinates (i, j) plus the bit widths that fix the rendering
    of the binary key x."""

    i: int
    j: int
    i_bits: int = 9
    j_bits: int = 9

    def __post_init__(self) -> None:
        if not 0 <= self.i < (1 << self.i_bits):
            raise InvalidKey(f"i={self.i} does not fit in {self.i_bits} bits")
        if not 0 <= self.j < (1 << self.j_bits):
            raise InvalidKey(f"j={self.j} does not fit in {self.j_bits} bits")

    @property
    def x(self) -> str:
        """The binary key: i then j, MSB first."""
        return format(self.i, f"0{self.i_bits}b") + format(self.j, f"0{self.j_bits}b")

    @property
    def depth(self) -> int:
        return self.i_bits + self.j_bits

    @property
    def index(self) -> int:
        """x read as an unsigned integer; the leaf position in the tree."""
        return (self.i << self.j_bits) | self.j


def parse_key(x: str, spec: GridSpec = DPRK_GRID) -> GridKey:
    """Decode an 0/1 key string under the spec's bit widths."""
    if len(x) != spec.depth or set(x) - {"0", "1"}:
        raise InvalidKey(f"key must be {spec.depth} bits of 0/1, got {x!r}")
    return GridKey(
        i=int(x[: spec.i_bits], 2),
        j=int(x[spec.i_bits :], 2),
        i_bits=spec.i_bits,
        j_bits=spec.j_bits,
    )


def key_from_index(index: int, spec: GridSpec = DPRK_GRID) -> GridKey:
    if not 0 <= index < spec.leaf_count:
        raise InvalidKey(f"leaf index {index} out of range")
    return GridKey(
        i=index >> spec.j_bits,
        j=index & ((1 << spec.j_bits) - 1),
        i_bits=spec.i_bits,
        j_bits=spec.j_bits,
    )


def coord_to_key(lat_deg: float, lon_deg: float, spec: GridSpec = DPRK_GRID) -> GridKey:
    """Map a coordinate to its grid key, rounding to the nearest grid step
    (ties to even)."""
    if not spec.lat_min_deg <= lat_deg <= spec.lat_max_deg:
        raise BoundsError("latitude", lat_deg)
    if not spec.lon_min_deg <= lon_deg <= spec.lon_max_deg:
        raise BoundsError("longitude", lon_deg)
    i = round((lon_deg - spec.lon_min_deg) * 60 / spec.resolution_minutes)
    j = round((spec.lat_max_deg - lat_deg) * 60 / spec.resolution_minutes)
    i = min(max(i, 0), spec.i_max)
    j = min(max(j, 0), spec.j_max)
    return GridKey(i=i, j=j, i_bits=spec.i_bits, j_bits=spec.j_bits)


def key_to_coord(key: GridKey, spec: GridSpec = DPRK_GRID) -> tuple[float, float]:
    """Exact inverse of coord_to_key on grid-aligned points."""
    if not spec.contains(key):
        raise InvalidKey(f"key ({key.i}, {key.j}) outside the valid grid domain")
    lat = spec.lat_max_deg - key.j * spec.resolution_minutes / 60
    lon = spec.lon_min_deg + key.i * spec.resolution_minutes / 60
    return (lat, lon)


def key_to_path(key: GridKey) -> list[int]:
    """Direction bits from the root, MSB first; 0 selects the left child."""
    return [int(b) for b in key.x]


def is_grid_aligned(lat_deg: float, lon_deg: float, spec: GridSpec = DPRK_GRID) -> bool:
    """Whether the coordinate survives key rounding at six-decimal rendering.

    Declarations must be grid-aligned; the escrow builder rejects records
    whose coordinates would silently snap to a different point.
    """
    key = coord_to_key(lat_deg, lon_deg, spec)
    lat2, lon2 = key_to_coord(key, spec)
    return round(lat_deg, 6) == round(lat2, 6) and round(lon_deg, 6) == round(lon2, 6)


def format_coord(value: float) -> str:
    """Decimal degrees with exactly six fractional digits, the file rendering."""
    return f"{value:.6f}"
