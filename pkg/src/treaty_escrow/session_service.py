"""Declarer-side HTTP service driving one live verification session.

A single escrow package is opened read-only; every state change flows
through protocol.advance and is appended to a JSON-lines event log before
the request is acknowledged, so a restarted service resumes the exact
session by replay. Role separation is a static bearer token per party.

Endpoints (JSON bodies and responses):
  GET  /commitment       the public commitment (no token required)
  GET  /session          phase, non-hidden cells, completeness report
  GET  /log              the append-only event log
  POST /nonce            inspector, SETUP only; auto-publishes the commitment
  POST /reveal-request   inspector asks for a cell at L0/L1
  POST /reveal           declarer opens a cell; returns the revelation
  POST /challenge        inspector names coordinates; absence proofs return
                         immediately, declared cells go to CHALLENGED
  POST /inspection       inspector files observed inventories for a verdict
  POST /select-targets   jointly-seeded random draw among candidates
  POST /complete-claim   declarer claims the declaration fully revealed

Errors: 400 malformed, 401 bad token, 409 protocol conflict, each with a
machine-readable {"error", "reason"} body.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from decimal import Decimal
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional

from . import protocol
from .escrow import (
    EscrowPackage,
    IsASite,
    NotASite,
    canonical_json,
    commitment_for,
    load_package,
    now_iso,
    prove_absence,
    reveal,
)
from .grid import coord_to_key, parse_key
from .protocol import (
    CellState,
    Obligation,
    ProtocolViolation,
    Role,
    SessionState,
    WireMessage,
    completeness_report,
)

MAX_BODY = 8 << 20
TAG_SESSION_SEED = b"\x21"


class ResumeError(Exception):
    """The event log cannot be replayed; names the first bad entry."""

    def __init__(self, index: int, detail: str) -> None:
        self.index = index
        super().__init__(f"log entry {index}: {detail}")


@dataclass
class ServiceConfig:
    host: str
    port: int
    package_path: str
    log_path: str
    declarer_token: str
    inspector_token: str
    role: str = "DECLARER_HOST"

    @classmethod
    def from_json(cls, doc: dict) -> "ServiceConfig":
        return cls(
            host=doc.get("host", "127.0.0.1"),
            port=int(doc.get("port", 8787)),
            package_path=doc["package_path"],
            log_path=doc["log_path"],
            declarer_token=doc["declarer_token"],
            inspector_token=doc["inspector_token"],
            role=doc.get("role", "DECLARER_HOST"),
        )

    @classmethod
    def load(cls, path: str | Path) -> "ServiceConfig":
        return cls.from_json(json.loads(Path(path).read_text()))


class SessionService:
    """Transport-independent request core; the HTTP layer is a thin shim."""

    def __init__(self, config: ServiceConfig, package: Optional[EscrowPackage] = None) -> None:
        self.config = config
        self.package = package if package is not None else load_package(config.package_path)
        self.commitment = commitment_for(self.package)
        self._tokens = {
            config.declarer_token: Role.DECLARER,
            config.inspector_token: Role.INSPECTOR,
        }
        self._lock = threading.Lock()
        self.state: SessionState = self._resume()

    # -- session persistence ------------------------------------------------

    def _resume(self) -> SessionState:
        state = protocol.initial_state()
        path = Path(self.config.log_path)
        if not path.exists():
            return state
        with path.open("r", encoding="utf-8") as fh:
            for index, line in enumerate(fh):
                if not line.endswith("\n"):
                    raise ResumeError(index, "truncated entry")
                try:
                    msg = WireMessage.from_json(json.loads(line, parse_float=Decimal))
                    state, _ = protocol.advance(state, msg)
                except ResumeError:
                    raise
                except Exception as exc:
                    raise ResumeError(index, str(exc)) from exc
        return state

    def _persist(self, messages: list[WireMessage]) -> None:
        with open(self.config.log_path, "a", encoding="utf-8") as fh:
            for msg in messages:
                fh.write(canonical_json(msg.to_json()) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def _advance_and_persist(
        self, pending: list[tuple[str, Role, dict]]
    ) -> tuple[SessionState, list[Obligation]]:
        """Apply a batch of messages atomically: all advance, then all persist."""
        state = self.state
        accepted: list[WireMessage] = []
        obligations: list[Obligation] = []
        for variant, sender, body in pending:
            msg = WireMessage(
                variant=variant,
                sender=sender,
                seq=state.last_seq + 1,
                timestamp=now_iso(),
                body=body,
            )
            state, obs = protocol.advance(state, msg)
            accepted.append(msg)
            obligations.extend(obs)
        self._persist(accepted)
        self.state = state
        return state, obligations

    # -- request core -------------------------------------------------------

    def handle(
        self, method: str, path: str, body: Optional[bytes], token: Optional[str]
    ) -> tuple[int, dict]:
        try:
            return self._route(method, path, body, token)
        except (ProtocolViolation, NotASite, IsASite) as exc:
            return 409, {"error": type(exc).__name__, "reason": str(exc)}
        except (ValueError, KeyError, TypeError) as exc:
            return 400, {"error": "BadRequest", "reason": str(exc)}

    def _route(
        self, method: str, path: str, body: Optional[bytes], token: Optional[str]
    ) -> tuple[int, dict]:
        if method == "GET" and path == "/commitment":
            return 200, self.commitment.to_json()

        role = self._tokens.get(token or "")
        if role is None:
            return 401, {"error": "Unauthorized", "reason": "missing or unknown bearer token"}

        if method == "GET":
            if path == "/session":
                return 200, self._session_view()
            if path == "/log":
                return 200, {"entries": [m.to_json() for m in self.state.log]}
            return 404, {"error": "NotFound", "reason": path}

        if method != "POST":
            return 405, {"error": "MethodNotAllowed", "reason": method}
        doc = self._parse_body(body)

        if path == "/nonce":
            self._require_role(role, Role.INSPECTOR)
            return self._post_nonce(doc)
        if path == "/reveal-request":
            self._require_role(role, Role.INSPECTOR)
            return self._post_reveal_request(doc)
        if path == "/reveal":
            self._require_role(role, Role.DECLARER)
            return self._post_reveal(doc)
        if path == "/challenge":
            self._require_role(role, Role.INSPECTOR)
            return self._post_challenge(doc)
        if path == "/inspection":
            self._require_role(role, Role.INSPECTOR)
            return self._post_inspection(doc)
        if path == "/select-targets":
            return self._post_select_targets(doc)
        if path == "/complete-claim":
            self._require_role(role, Role.DECLARER)
            return self._post_complete_claim()
        return 404, {"error": "NotFound", "reason": path}

    @staticmethod
    def _parse_body(body: Optional[bytes]) -> dict:
        if not body:
            return {}
        doc = json.loads(body.decode("utf-8"), parse_float=Decimal)
        if not isinstance(doc, dict):
            raise ValueError("request body must be a JSON object")
        return doc

    @staticmethod
    def _require_role(role: Role, expected: Role) -> None:
        if role is not expected:
            raise ProtocolViolation(f"endpoint is for the {expected.value} role")

    def _session_view(self) -> dict:
        state = self.state
        return {
            "phase": state.phase.value,
            "commitment": self.commitment.to_json(),
            "cells": {x: s.value for x, s in sorted(state.cells.items())},
            "report": completeness_report(state),
            "last_seq": state.last_seq,
        }

    # -- endpoint handlers --------------------------------------------------

    def _post_nonce(self, doc: dict) -> tuple[int, dict]:
        nonce = bytes.fromhex(doc["nonce"])
        with self._lock:
            if nonce != self.package.inspector_nonce:
                raise ProtocolViolation("nonce does not match the one this escrow was built for")
            self._advance_and_persist(
                [
                    (protocol.NONCE, Role.INSPECTOR, {"nonce": nonce.hex()}),
                    (protocol.COMMIT, Role.DECLARER, {"commitment": self.commitment.to_json()}),
                ]
            )
        return 200, {"phase": self.state.phase.value, "commitment": self.commitment.to_json()}

    def _post_reveal_request(self, doc: dict) -> tuple[int, dict]:
        body = {"key": str(doc["key"]), "level": str(doc["level"])}
        with self._lock:
            _, obligations = self._advance_and_persist(
                [(protocol.REVEAL_REQUEST, Role.INSPECTOR, body)]
            )
        return 200, {"obligations": [o.to_json() for o in obligations]}

    def _resolve_key(self, doc: dict):
        if "key" in doc:
            return parse_key(str(doc["key"]), self.package.grid_spec)
        return coord_to_key(float(doc["lat"]), float(doc["lon"]), self.package.grid_spec)

    def _post_reveal(self, doc: dict) -> tuple[int, dict]:
        key = self._resolve_key(doc)
        level = str(doc["level"])
        with self._lock:
            rev = reveal(self.package, key, level)
            self._advance_and_persist(
                [(protocol.REVEAL, Role.DECLARER, {"revelation": rev.to_json()})]
            )
        return 200, {
            "revelation": rev.to_json(),
            "cell": self.state.cell(key.x).value,
        }

    def _post_challenge(self, doc: dict) -> tuple[int, dict]:
        lat = float(doc["lat"])
        lon = float(doc["lon"])
        key = coord_to_key(lat, lon, self.package.grid_spec)
        with self._lock:
            batch = [(protocol.CHALLENGE, Role.INSPECTOR, {"lat": lat, "lon": lon})]
            absent = self.package.site_at(key) is None
            rev = None
            if absent:
                rev = prove_absence(self.package, key)
                batch.append(
                    (protocol.CHALLENGE_RESPONSE, Role.DECLARER, {"revelation": rev.to_json()})
                )
            self._advance_and_persist(batch)
        response: dict = {"key": key.x, "cell": self.state.cell(key.x).value}
        if rev is not None:
            response["revelation"] = rev.to_json()
        else:
            response["pending"] = True
        return 200, response

    def _post_inspection(self, doc: dict) -> tuple[int, dict]:
        body = {"key": str(doc["key"]), "observed": doc["observed"]}
        with self._lock:
            self._advance_and_persist([(protocol.INSPECTION_RESULT, Role.INSPECTOR, body)])
        x = parse_key(str(doc["key"]), self.package.grid_spec).x
        return 200, {
            "verdict": self.state.verdicts[x].to_json(),
            "cell": self.state.cell(x).value,
        }

    def declarer_seed(self) -> bytes:
        """Fixed per escrow so it cannot be ground after the inspector's seed."""
        return self.package.suite.hash_bytes(TAG_SESSION_SEED + self.package.master_secret)[:32]

    def _post_select_targets(self, doc: dict) -> tuple[int, dict]:
        inspector_seed = bytes.fromhex(doc["inspector_seed"])
        k = int(doc["k"])
        if "candidates" in doc:
            candidates = sorted(str(x) for x in doc["candidates"])
        else:
            revealed = {
                CellState.REVEALED_L0,
                CellState.REVEALED_L1,
                CellState.INSPECTED_CONSISTENT,
                CellState.INSPECTED_DISCREPANT,
            }
            candidates = sorted(x for x, s in self.state.cells.items() if s in revealed)
        if not candidates:
            raise ProtocolViolation("no candidate cells to select from")
        dseed = self.declarer_seed()
        selection = protocol.select_targets(
            self.commitment,
            dseed,
            inspector_seed,
            [parse_key(x, self.package.grid_spec) for x in candidates],
            k,
        )
        body = {
            "declarer_seed": dseed.hex(),
            "inspector_seed": inspector_seed.hex(),
            "k": k,
            "candidates": candidates,
            "selection": [key.x for key in selection],
        }
        with self._lock:
            self._advance_and_persist([(protocol.SELECT_TARGETS, Role.INSPECTOR, body)])
        return 200, {
            "selection": [key.x for key in selection],
            "declarer_seed": dseed.hex(),
            "candidates": candidates,
        }

    def _post_complete_claim(self) -> tuple[int, dict]:
        count = len(self.package.declaration.sites)
        with self._lock:
            self._advance_and_persist(
                [
                    (
                        protocol.COMPLETE_CLAIM,
                        Role.DECLARER,
                        {"declared_site_count": count},
                    )
                ]
            )
        return 200, {
            "phase": self.state.phase.value,
            "report": completeness_report(self.state),
        }


class _Handler(BaseHTTPRequestHandler):
    service: SessionService = None  # type: ignore[assignment]

    def do_GET(self) -> None:
        self._dispatch("GET")

    def do_POST(self) -> None:
        self._dispatch("POST")

    def _dispatch(self, method: str) -> None:
        length = int(self.headers.get("Content-Length") or 0)
        if length > MAX_BODY:
            self._respond(400, {"error": "BadRequest", "reason": "body too large"})
            return
        body = self.rfile.read(length) if length else None
        auth = self.headers.get("Authorization") or ""
        token = auth.removeprefix("Bearer ").strip() if auth.startswith("Bearer ") else None
        try:
            status, doc = self.service.handle(method, self.path, body, token)
        except Exception as exc:  # defensive: never kill the connection thread
            status, doc = 500, {"error": "Internal", "reason": str(exc)}
        self._respond(status, doc)

    def _respond(self, status: int, doc: dict) -> None:
        payload = canonical_json(doc).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, fmt: str, *args) -> None:  # quiet by default
        pass


def make_server(
    config: ServiceConfig, package: Optional[EscrowPackage] = None
) -> tuple[ThreadingHTTPServer, SessionService]:
    """Bind the service; port 0 picks an ephemeral port (see server_address)."""
    service = SessionService(config, package=package)
    handler = type("BoundHandler", (_Handler,), {"service": service})
    server = ThreadingHTTPServer((config.host, config.port), handler)
    return server, service


def serve(config: ServiceConfig) -> None:
    """Run until interrupted. Refuses to start on package or log corruption."""
    server, service = make_server(config)
    host, port = server.server_address[:2]
    print(f"treaty-escrow session service on http://{host}:{port}")
    print(f"package: {config.package_path}")
    print(f"session log: {config.log_path} (phase {service.state.phase.value})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
