"""Two-party step-by-step verification over one committed escrow.

The session is a deterministic state machine fed by wire messages: the
inspector supplies a freshness nonce, the declarer publishes the
commitment, and the parties then interleave reveal requests, voluntary
reveals, coordinate challenges, jointly-seeded random target selection,
and inspection verdicts until the declarer claims completeness.

The machine itself verifies every revelation against the session
commitment before any cell state moves; a failed proof is recorded as a
proof-failure event and the cell stays put, so a dishonest declarer cannot
advance the board. The event log is append-only and replayable: folding
`advance` over the logged messages reproduces the final state exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional, Sequence

from .commitments import Level1Payload, payload_from_json, payload_to_json
from .escrow import (
    PublicCommitment,
    Revelation,
    RevelationKind,
    RevelationResult,
    canonical_json,
    verify_revelation,
)
from .grid import GridKey, coord_to_key, parse_key
from .hash_suite import parse_suite

TAG_SELECT = b"\x20"


class ProtocolViolation(Exception):
    """Message illegal in the current phase or for the current cell state."""

    def __init__(self, reason: str, expected_phase: Optional[str] = None) -> None:
        self.reason = reason
        self.expected_phase = expected_phase
        super().__init__(reason)


class Role(str, Enum):
    DECLARER = "DECLARER"
    INSPECTOR = "INSPECTOR"


class Phase(str, Enum):
    SETUP = "SETUP"
    COMMITTED = "COMMITTED"
    ACTIVE = "ACTIVE"
    COMPLETE = "COMPLETE"


class CellState(str, Enum):
    HIDDEN = "HIDDEN"
    CHALLENGED = "CHALLENGED"
    REVEALED_L0 = "REVEALED_L0"
    REVEALED_L1 = "REVEALED_L1"
    INSPECTED_CONSISTENT = "INSPECTED_CONSISTENT"
    INSPECTED_DISCREPANT = "INSPECTED_DISCREPANT"
    PROVEN_ABSENT = "PROVEN_ABSENT"


_TERMINAL = {
    CellState.INSPECTED_CONSISTENT,
    CellState.INSPECTED_DISCREPANT,
    CellState.PROVEN_ABSENT,
}
_CHAIN_RANK = {
    CellState.HIDDEN: 0,
    CellState.CHALLENGED: 1,
    CellState.REVEALED_L0: 2,
    CellState.REVEALED_L1: 3,
}


def _can_move(current: CellState, target: CellState) -> bool:
    """Monotone cell transitions; PROVEN_ABSENT only from HIDDEN/CHALLENGED."""
    if current in _TERMINAL:
        return False
    if target is CellState.PROVEN_ABSENT:
        return current in (CellState.HIDDEN, CellState.CHALLENGED)
    if target in (CellState.INSPECTED_CONSISTENT, CellState.INSPECTED_DISCREPANT):
        return current is CellState.REVEALED_L1
    return _CHAIN_RANK[target] > _CHAIN_RANK[current]


# Wire message variants
NONCE = "NONCE"
COMMIT = "COMMIT"
REVEAL_REQUEST = "REVEAL_REQUEST"
REVEAL = "REVEAL"
CHALLENGE = "CHALLENGE"
CHALLENGE_RESPONSE = "CHALLENGE_RESPONSE"
INSPECTION_RESULT = "INSPECTION_RESULT"
SELECT_TARGETS = "SELECT_TARGETS"
COMPLETE_CLAIM = "COMPLETE_CLAIM"

_VARIANTS = {
    NONCE,
    COMMIT,
    REVEAL_REQUEST,
    REVEAL,
    CHALLENGE,
    CHALLENGE_RESPONSE,
    INSPECTION_RESULT,
    SELECT_TARGETS,
    COMPLETE_CLAIM,
}


@dataclass(frozen=True)
class WireMessage:
    variant: str
    sender: Role
    seq: int
    timestamp: str
    body: dict

    def to_json(self) -> dict:
        return {
            "variant": self.variant,
            "sender": self.sender.value,
            "seq": self.seq,
            "timestamp": self.timestamp,
            "body": self.body,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "WireMessage":
        return cls(
            variant=doc["variant"],
            sender=Role(doc["sender"]),
            seq=int(doc["seq"]),
            timestamp=doc["timestamp"],
            body=doc["body"],
        )


class VerdictKind(str, Enum):
    CONSISTENT = "CONSISTENT"
    DISCREPANT = "DISCREPANT"


@dataclass(frozen=True)
class InspectionVerdict:
    verdict: VerdictKind
    diff: tuple[tuple[str, str, str], ...]

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "diff": [list(entry) for entry in self.diff],
        }


def compare_payloads(declared: Level1Payload, observed: Level1Payload) -> InspectionVerdict:
    """Field-by-field comparison; CONSISTENT iff nothing differs."""
    diff = []
    pairs = [
        ("warhead_count", declared.warhead_count, observed.warhead_count),
        ("missile_count", declared.missile_count, observed.missile_count),
        ("uranium_kg", declared.uranium_kg, observed.uranium_kg),
        ("plutonium_kg", declared.plutonium_kg, observed.plutonium_kg),
        ("isotopics", declared.isotopics, observed.isotopics),
        ("free_text", declared.free_text, observed.free_text),
    ]
    for name, a, b in pairs:
        if a != b:
            diff.append((name, str(a), str(b)))
    kind = VerdictKind.CONSISTENT if not diff else VerdictKind.DISCREPANT
    return InspectionVerdict(verdict=kind, diff=tuple(diff))


@dataclass(frozen=True)
class Obligation:
    """A response the other party now owes."""

    variant: str
    key: Optional[str] = None
    level: Optional[str] = None

    def to_json(self) -> dict:
        doc: dict = {"variant": self.variant}
        if self.key is not None:
            doc["key"] = self.key
        if self.level is not None:
            doc["level"] = self.level
        return doc


@dataclass(frozen=True)
class SessionState:
    phase: Phase = Phase.SETUP
    nonce: Optional[bytes] = None
    commitment: Optional[PublicCommitment] = None
    cells: dict = field(default_factory=dict)
    revealed_level1: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    proof_failures: tuple = ()
    claimed_site_count: Optional[int] = None
    last_seq: int = 0
    log: tuple = ()

    def cell(self, x: str) -> CellState:
        return self.cells.get(x, CellState.HIDDEN)


def initial_state() -> SessionState:
    return SessionState()


def state_to_json(state: SessionState) -> dict:
    """Canonical structural rendering, used for byte-level state comparison."""
    return {
        "phase": state.phase.value,
        "nonce": state.nonce.hex() if state.nonce else None,
        "commitment": state.commitment.to_json() if state.commitment else None,
        "cells": {x: s.value for x, s in sorted(state.cells.items())},
        "revealed_level1": {
            x: payload_to_json(p) for x, p in sorted(state.revealed_level1.items())
        },
        "verdicts": {x: v.to_json() for x, v in sorted(state.verdicts.items())},
        "proof_failures": [list(entry) for entry in state.proof_failures],
        "claimed_site_count": state.claimed_site_count,
        "last_seq": state.last_seq,
        "log": [m.to_json() for m in state.log],
    }


def _require_phase(state: SessionState, allowed: tuple[Phase, ...], msg: WireMessage) -> None:
    if state.phase not in allowed:
        expected = "/".join(p.value for p in allowed)
        raise ProtocolViolation(
            f"{msg.variant} not allowed in phase {state.phase.value} (expected {expected})",
            expected_phase=expected,
        )


def _require_sender(msg: WireMessage, role: Role) -> None:
    if msg.sender is not role:
        raise ProtocolViolation(f"{msg.variant} must come from {role.value}")


def _parse_revelation(state: SessionState, msg: WireMessage) -> Revelation:
    assert state.commitment is not None
    try:
        return Revelation.from_json(msg.body["revelation"], state.commitment.grid_spec)
    except (KeyError, ValueError) as exc:
        raise ValueError(f"malformed revelation in {msg.variant}: {exc}") from exc


_KIND_TARGET = {
    RevelationKind.PRESENCE_L0: CellState.REVEALED_L0,
    RevelationKind.PRESENCE_L1: CellState.REVEALED_L1,
    RevelationKind.ABSENCE: CellState.PROVEN_ABSENT,
}


def advance(state: SessionState, msg: WireMessage) -> tuple[SessionState, list[Obligation]]:
    """Apply one message; returns the new state and any responses now owed.

    Rejected messages raise ProtocolViolation (or ValueError for malformed
    bodies) and the input state is untouched. Revelations that fail
    verification are accepted into the log as proof-failure events but move
    no cell.
    """
    if msg.variant not in _VARIANTS:
        raise ValueError(f"unknown message variant {msg.variant!r}")
    if msg.seq <= state.last_seq:
        raise ProtocolViolation(
            f"sequence number {msg.seq} not above {state.last_seq}"
        )

    accepted = replace(state, last_seq=msg.seq, log=state.log + (msg,))
    obligations: list[Obligation] = []

    if msg.variant == NONCE:
        _require_phase(state, (Phase.SETUP,), msg)
        _require_sender(msg, Role.INSPECTOR)
        if state.nonce is not None:
            raise ProtocolViolation("session nonce already supplied")
        nonce = bytes.fromhex(msg.body["nonce"])
        if len(nonce) != 32:
            raise ValueError("nonce must be 32 bytes of hex")
        accepted = replace(accepted, nonce=nonce)
        obligations.append(Obligation(COMMIT))

    elif msg.variant == COMMIT:
        _require_phase(state, (Phase.SETUP,), msg)
        _require_sender(msg, Role.DECLARER)
        if state.nonce is None:
            raise ProtocolViolation("commitment before the inspector nonce")
        pc = PublicCommitment.from_json(msg.body["commitment"])
        if pc.inspector_nonce != state.nonce:
            raise ProtocolViolation("commitment nonce does not match the session nonce")
        accepted = replace(accepted, commitment=pc, phase=Phase.COMMITTED)

    elif msg.variant == REVEAL_REQUEST:
        _require_phase(state, (Phase.COMMITTED, Phase.ACTIVE), msg)
        _require_sender(msg, Role.INSPECTOR)
        x = _validate_key(state, msg.body["key"])
        level = _validate_level(msg.body["level"])
        target = CellState.REVEALED_L0 if level == "L0" else CellState.REVEALED_L1
        if not _can_move(state.cell(x), target):
            raise ProtocolViolation(
                f"cell {x} at {state.cell(x).value} cannot be requested to {target.value}"
            )
        accepted = replace(accepted, phase=Phase.ACTIVE)
        obligations.append(Obligation(REVEAL, key=x, level=level))

    elif msg.variant == REVEAL:
        _require_phase(state, (Phase.COMMITTED, Phase.ACTIVE), msg)
        _require_sender(msg, Role.DECLARER)
        accepted = _apply_revelation(state, accepted, msg)

    elif msg.variant == CHALLENGE:
        _require_phase(state, (Phase.COMMITTED, Phase.ACTIVE), msg)
        _require_sender(msg, Role.INSPECTOR)
        assert state.commitment is not None
        key = coord_to_key(
            float(msg.body["lat"]), float(msg.body["lon"]), state.commitment.grid_spec
        )
        if not _can_move(state.cell(key.x), CellState.CHALLENGED):
            raise ProtocolViolation(f"cell {key.x} at {state.cell(key.x).value} cannot be challenged")
        cells = dict(state.cells)
        cells[key.x] = CellState.CHALLENGED
        accepted = replace(accepted, cells=cells, phase=Phase.ACTIVE)
        obligations.append(Obligation(CHALLENGE_RESPONSE, key=key.x))

    elif msg.variant == CHALLENGE_RESPONSE:
        _require_phase(state, (Phase.ACTIVE,), msg)
        _require_sender(msg, Role.DECLARER)
        rev = _parse_revelation(state, msg)
        if state.cell(rev.proof.key.x) is not CellState.CHALLENGED:
            raise ProtocolViolation(
                f"challenge response for {rev.proof.key.x} which is not challenged"
            )
        accepted = _apply_revelation(state, accepted, msg, parsed=rev)

    elif msg.variant == INSPECTION_RESULT:
        _require_phase(state, (Phase.ACTIVE,), msg)
        _require_sender(msg, Role.INSPECTOR)
        x = _validate_key(state, msg.body["key"])
        if state.cell(x) is not CellState.REVEALED_L1:
            raise ProtocolViolation(
                f"inspection of cell {x} at {state.cell(x).value}; level-1 reveal required first"
            )
        observed = payload_from_json(msg.body["observed"])
        verdict = compare_payloads(state.revealed_level1[x], observed)
        cells = dict(state.cells)
        cells[x] = (
            CellState.INSPECTED_CONSISTENT
            if verdict.verdict is VerdictKind.CONSISTENT
            else CellState.INSPECTED_DISCREPANT
        )
        verdicts = dict(state.verdicts)
        verdicts[x] = verdict
        accepted = replace(accepted, cells=cells, verdicts=verdicts)

    elif msg.variant == SELECT_TARGETS:
        _require_phase(state, (Phase.COMMITTED, Phase.ACTIVE), msg)
        assert state.commitment is not None
        candidates = [_validate_key(state, x) for x in msg.body["candidates"]]
        expected = select_targets(
            state.commitment,
            bytes.fromhex(msg.body["declarer_seed"]),
            bytes.fromhex(msg.body["inspector_seed"]),
            [parse_key(x, state.commitment.grid_spec) for x in candidates],
            int(msg.body["k"]),
        )
        if [k.x for k in expected] != list(msg.body["selection"]):
            raise ProtocolViolation("selection does not match the seeded recomputation")
        accepted = replace(accepted, phase=Phase.ACTIVE)

    elif msg.variant == COMPLETE_CLAIM:
        _require_phase(state, (Phase.ACTIVE,), msg)
        _require_sender(msg, Role.DECLARER)
        claimed = int(msg.body["declared_site_count"])
        pending = [
            x
            for x, s in state.cells.items()
            if s in (CellState.CHALLENGED, CellState.REVEALED_L0)
        ]
        if pending:
            raise ProtocolViolation(
                f"cells not yet resolved to level 1 or absence: {sorted(pending)[:5]}"
            )
        revealed = sum(
            1
            for s in state.cells.values()
            if s
            in (
                CellState.REVEALED_L1,
                CellState.INSPECTED_CONSISTENT,
                CellState.INSPECTED_DISCREPANT,
            )
        )
        if revealed != claimed:
            raise ProtocolViolation(
                f"claimed {claimed} declared sites but {revealed} are revealed to level 1"
            )
        accepted = replace(accepted, claimed_site_count=claimed, phase=Phase.COMPLETE)

    return accepted, obligations


def _validate_level(level: str) -> str:
    if level not in ("L0", "L1"):
        raise ValueError(f"level must be L0 or L1, got {level!r}")
    return level


def _validate_key(state: SessionState, x: str) -> str:
    assert state.commitment is not None
    return parse_key(x, state.commitment.grid_spec).x


def _apply_revelation(
    state: SessionState,
    accepted: SessionState,
    msg: WireMessage,
    parsed: Optional[Revelation] = None,
) -> SessionState:
    """Verify-then-move: a failing revelation is logged, the cell stays."""
    assert state.commitment is not None
    rev = parsed if parsed is not None else _parse_revelation(state, msg)
    x = rev.proof.key.x
    result = verify_revelation(state.commitment, rev)
    if result is not RevelationResult.OK:
        failures = accepted.proof_failures + ((msg.seq, x, result.value),)
        return replace(accepted, proof_failures=failures, phase=Phase.ACTIVE)
    target = _KIND_TARGET[rev.kind]
    if not _can_move(state.cell(x), target):
        raise ProtocolViolation(
            f"cell {x} at {state.cell(x).value} cannot move to {target.value}"
        )
    cells = dict(state.cells)
    cells[x] = target
    revealed = accepted.revealed_level1
    if rev.kind is RevelationKind.PRESENCE_L1:
        revealed = dict(revealed)
        revealed[x] = rev.level1.payload
    return replace(accepted, cells=cells, revealed_level1=revealed, phase=Phase.ACTIVE)


def record_inspection(
    state: SessionState,
    key: GridKey,
    observed: Level1Payload,
    seq: Optional[int] = None,
    timestamp: str = "",
) -> tuple[SessionState, InspectionVerdict]:
    """Convenience wrapper: build the INSPECTION_RESULT message and advance."""
    msg = WireMessage(
        variant=INSPECTION_RESULT,
        sender=Role.INSPECTOR,
        seq=state.last_seq + 1 if seq is None else seq,
        timestamp=timestamp,
        body={"key": key.x, "observed": payload_to_json(observed)},
    )
    new_state, _ = advance(state, msg)
    return new_state, new_state.verdicts[key.x]


def select_targets(
    commitment: PublicCommitment,
    declarer_seed: bytes,
    inspector_seed: bytes,
    candidates: Sequence[GridKey],
    k: int,
) -> list[GridKey]:
    """Jointly-seeded draw of k candidates, without replacement.

    Both parties expand the same digest stream (root and both seeds bound
    in) and rejection-sample indices, so neither can bias the outcome and
    each can recompute the other's draw exactly. Candidate order is part of
    the contract; callers canonicalize before drawing.
    """
    if not candidates:
        raise ValueError("candidate list is empty")
    if k > len(candidates):
        raise ValueError(f"cannot draw {k} from {len(candidates)} candidates")
    suite = parse_suite(commitment.suite_name)
    seed_body = TAG_SELECT + commitment.root.value + declarer_seed + inspector_seed
    remaining = list(candidates)
    chosen: list[GridKey] = []
    counter = 0
    pool = b""
    while len(chosen) < k:
        if len(pool) < 4:
            pool += suite.hash_bytes(seed_body + counter.to_bytes(4, "big"))
            counter += 1
        v = int.from_bytes(pool[:4], "big")
        pool = pool[4:]
        n = len(remaining)
        limit = (1 << 32) - ((1 << 32) % n)
        if v < limit:
            chosen.append(remaining.pop(v % n))
    return chosen


def completeness_report(state: SessionState) -> dict:
    """Counts per cell state plus the session's all-clear verdict."""
    counts = {s.value: 0 for s in CellState if s is not CellState.HIDDEN}
    for s in state.cells.values():
        counts[s.value] += 1
    presence_known = (
        counts[CellState.REVEALED_L0.value]
        + counts[CellState.REVEALED_L1.value]
        + counts[CellState.INSPECTED_CONSISTENT.value]
        + counts[CellState.INSPECTED_DISCREPANT.value]
    )
    declared_total = state.claimed_site_count
    denominator = declared_total if declared_total is not None else presence_known
    consistent = counts[CellState.INSPECTED_CONSISTENT.value]
    fraction = consistent / denominator if denominator else 0.0
    hidden = None
    if state.commitment is not None:
        hidden = state.commitment.grid_spec.leaf_count - len(state.cells)
    return {
        "phase": state.phase.value,
        "counts": counts,
        "hidden": hidden,
        "presence_cells_known": presence_known,
        "declared_total": declared_total,
        "inspected_consistent_fraction": fraction,
        "open_challenges": sorted(
            x for x, s in state.cells.items() if s is CellState.CHALLENGED
        ),
        "proof_failures": len(state.proof_failures),
        "all_clear": counts[CellState.INSPECTED_DISCREPANT.value] == 0
        and not state.proof_failures,
    }


def replay_log(messages: Iterable[WireMessage]) -> SessionState:
    """Rebuild a session from its append-only log."""
    state = initial_state()
    for msg in messages:
        state, _ = advance(state, msg)
    return state


def log_digest(state: SessionState) -> str:
    """Hex digest of the canonical log rendering, for audit comparison."""
    import hashlib

    blob = canonical_json([m.to_json() for m in state.log]).encode()
    return hashlib.sha256(blob).hexdigest()
