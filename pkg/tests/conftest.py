"""Shared fixtures: a small fast grid for unit tests and the full-scale
sample escrow (built once per session) for the acceptance suite."""

from __future__ import annotations

import json
import random
from decimal import Decimal
from pathlib import Path

import pytest

from treaty_escrow import (
    DPRK_GRID,
    Declaration,
    GridKey,
    GridSpec,
    Level1Payload,
    SiteRecord,
    build_escrow,
    parse_suite,
)

FIXTURES = Path(__file__).parent.parent / "fixtures"

FACILITY_TYPES = ["Storage site", "Assembly facility", "Missile base", "Test site"]
STATUSES = ["Active", "Inactive", "Standby"]


@pytest.fixture(scope="session")
def small_grid() -> GridSpec:
    # 64x64 one-minute cells, depth 12: large enough to be interesting,
    # small enough that builds are effectively free.
    return GridSpec(
        lat_min_deg=42.45,
        lat_max_deg=43.5,
        lon_min_deg=124.0,
        lon_max_deg=125.05,
        i_bits=6,
        j_bits=6,
    )


def random_payload(rng: random.Random) -> Level1Payload:
    u235 = Decimal(rng.randint(0, 10000)) / 100
    return Level1Payload(
        warhead_count=rng.randint(0, 30),
        missile_count=rng.randint(0, 60),
        uranium_kg=Decimal(rng.randint(0, 500_000)) / 1000,
        plutonium_kg=Decimal(rng.randint(0, 60_000)) / 1000,
        isotopics=(("U-235", u235), ("U-238", Decimal("100") - u235)),
        free_text="" if rng.random() < 0.5 else f"note {rng.randint(0, 999)}",
    )


def random_declaration(rng: random.Random, spec: GridSpec, n_sites: int) -> Declaration:
    seen = set()
    sites = []
    while len(sites) < n_sites:
        i = rng.randint(0, spec.i_max)
        j = rng.randint(0, spec.j_max)
        if (i, j) in seen:
            continue
        seen.add((i, j))
        key = GridKey(i=i, j=j, i_bits=spec.i_bits, j_bits=spec.j_bits)
        sites.append(
            SiteRecord(
                key=key,
                facility_type=rng.choice(FACILITY_TYPES),
                status=rng.choice(STATUSES),
                level1=random_payload(rng),
            )
        )
    return Declaration(sites=tuple(sites), declarer="Testland", declared_on="2026-01-01")


@pytest.fixture()
def decl_factory(small_grid):
    def factory(seed: int = 7, n_sites: int = 12, spec: GridSpec | None = None) -> Declaration:
        return random_declaration(random.Random(seed), spec or small_grid, n_sites)

    return factory


@pytest.fixture(scope="session")
def small_suite():
    return parse_suite("sha2-256")


@pytest.fixture(scope="session")
def small_escrow(small_grid, small_suite):
    """A 40-site escrow on the small grid, shared read-only by many tests."""
    declaration = random_declaration(random.Random(99), small_grid, 40)
    nonce = bytes(range(32))
    secret = bytes(range(32, 64))
    package, pc = build_escrow(declaration, nonce, small_suite, small_grid, secret)
    return package, pc


@pytest.fixture(scope="session")
def sample_params() -> dict:
    return json.loads((FIXTURES / "sample_escrow.json").read_text())


@pytest.fixture(scope="session")
def full_package(sample_params):
    """The bundled 150-site declaration built on the full DPRK grid."""
    from treaty_escrow import load_declaration

    declaration = load_declaration(FIXTURES / "sample_declaration.json", DPRK_GRID)
    package, pc = build_escrow(
        declaration,
        bytes.fromhex(sample_params["inspector_nonce"]),
        parse_suite(sample_params["suite"]),
        DPRK_GRID,
        bytes.fromhex(sample_params["master_secret"]),
    )
    return package, pc
