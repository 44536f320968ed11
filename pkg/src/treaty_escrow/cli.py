"""Command-line access to every escrow operation.

Exit codes: 0 success, 1 verification failure, 2 usage error, 3
integrity or protocol error. Secrets come from a file or the
TREATY_ESCROW_SECRET environment variable, never from a bare flag.
"""

from __future__ import annotations

import argparse
import json
import os
import secrets as _secrets
import sys
from decimal import Decimal
from pathlib import Path

from . import protocol, session_service
from .escrow import (
    IntegrityError,
    IsASite,
    NotASite,
    RevelationResult,
    build_escrow,
    canonical_json,
    challenge_key,
    load_commitment,
    load_declaration,
    load_package,
    load_revelation,
    parse_commitment_key,
    prove_absence,
    rekey,
    reveal,
    save_commitment,
    save_package,
    save_revelation,
    verify_revelation,
)
from .grid import DPRK_GRID, GridSpec, coord_to_key, parse_key
from .hash_suite import parse_suite
from .protocol import ProtocolViolation, replay_log, completeness_report
from .session_service import ResumeError, ServiceConfig, serve

SECRET_ENV = "TREATY_ESCROW_SECRET"

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2
EXIT_INTEGRITY = 3


def _emit(args, doc: dict, text: str) -> None:
    if args.json:
        print(canonical_json(doc))
    else:
        print(text)


def _read_secret(args) -> bytes:
    if getattr(args, "secret_file", None):
        raw = Path(args.secret_file).read_text().strip()
    elif os.environ.get(SECRET_ENV):
        raw = os.environ[SECRET_ENV].strip()
    else:
        raise ValueError(
            f"no secret: pass --secret-file or set {SECRET_ENV} (64 hex chars)"
        )
    secret = bytes.fromhex(raw)
    if len(secret) != 32:
        raise ValueError("secret must be 32 bytes of hex")
    return secret


def _read_nonce(args) -> bytes:
    if getattr(args, "nonce_file", None):
        raw = Path(args.nonce_file).read_text().strip()
    elif getattr(args, "nonce", None):
        raw = args.nonce
    else:
        raise ValueError("no nonce: pass --nonce or --nonce-file")
    nonce = bytes.fromhex(raw)
    if len(nonce) != 32:
        raise ValueError("nonce must be 32 bytes of hex")
    return nonce


def _grid_from_args(args) -> GridSpec:
    if getattr(args, "grid", None):
        return GridSpec.from_json(json.loads(Path(args.grid).read_text()))
    return DPRK_GRID


def _key_from_args(args, spec: GridSpec):
    if getattr(args, "key", None):
        return parse_key(args.key, spec)
    if args.lat is None or args.lon is None:
        raise ValueError("pass --lat and --lon, or --key")
    return coord_to_key(args.lat, args.lon, spec)


# -- subcommands -------------------------------------------------------------

def _cmd_nonce(args) -> int:
    nonce = _secrets.token_bytes(32).hex()
    _emit(args, {"nonce": nonce}, nonce)
    return EXIT_OK


def _cmd_build(args) -> int:
    spec = _grid_from_args(args)
    declaration = load_declaration(args.declaration, spec)
    suite = parse_suite(args.suite)
    package, pc = build_escrow(
        declaration, _read_nonce(args), suite, spec, _read_secret(args)
    )
    save_package(package, args.out_package)
    save_commitment(pc, args.out_commitment)
    doc = {
        "root": pc.root.hex,
        "suite": pc.suite_name,
        "sites": len(declaration.sites),
        "package": str(args.out_package),
        "commitment": str(args.out_commitment),
    }
    _emit(args, doc, f"root {pc.root.hex}\nsites {len(declaration.sites)}")
    return EXIT_OK


def _cmd_reveal(args) -> int:
    package = load_package(args.package)
    key = _key_from_args(args, package.grid_spec)
    rev = reveal(package, key, args.level)
    if args.out:
        save_revelation(rev, args.out)
    _emit(args, rev.to_json(), f"{rev.kind.value} at key {key.x}" + (f" -> {args.out}" if args.out else ""))
    return EXIT_OK


def _cmd_prove_absent(args) -> int:
    package = load_package(args.package)
    key = _key_from_args(args, package.grid_spec)
    rev = prove_absence(package, key)
    if args.out:
        save_revelation(rev, args.out)
    _emit(args, rev.to_json(), f"ABSENCE at key {key.x}" + (f" -> {args.out}" if args.out else ""))
    return EXIT_OK


def _cmd_verify(args) -> int:
    pc = load_commitment(args.commitment)
    rev = load_revelation(args.revelation, pc.grid_spec)
    result = verify_revelation(pc, rev)
    _emit(args, {"result": result.value, "key": rev.proof.key.x}, result.value)
    return EXIT_OK if result is RevelationResult.OK else EXIT_VERIFY_FAILED


def _cmd_challenge(args) -> int:
    pc = load_commitment(args.commitment)
    key = challenge_key(pc, args.lat, args.lon)
    _emit(args, {"key": key.x, "i": key.i, "j": key.j, "leaf_index": key.index}, key.x)
    return EXIT_OK


def _cmd_select(args) -> int:
    pc = load_commitment(args.commitment)
    candidates = json.loads(Path(args.candidates).read_text())
    keys = sorted(parse_commitment_key(pc, x) for x in candidates)
    selection = protocol.select_targets(
        pc,
        bytes.fromhex(args.declarer_seed),
        bytes.fromhex(args.inspector_seed),
        keys,
        args.k,
    )
    _emit(
        args,
        {"selection": [k.x for k in selection]},
        "\n".join(k.x for k in selection),
    )
    return EXIT_OK


def _cmd_rekey(args) -> int:
    package = load_package(args.package)
    new_suite = parse_suite(args.suite)
    nonce = bytes.fromhex(args.nonce) if args.nonce else None
    new_package, pc = rekey(package, new_suite, _read_secret(args), nonce)
    save_package(new_package, args.out_package)
    save_commitment(pc, args.out_commitment)
    doc = {"root": pc.root.hex, "suite": pc.suite_name}
    _emit(args, doc, f"root {pc.root.hex}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    serve(ServiceConfig.load(args.config))
    return EXIT_OK


def _cmd_report(args) -> int:
    messages = []
    with open(args.log, "r", encoding="utf-8") as fh:
        for index, line in enumerate(fh):
            if not line.endswith("\n"):
                raise ResumeError(index, "truncated entry")
            try:
                messages.append(
                    protocol.WireMessage.from_json(json.loads(line, parse_float=Decimal))
                )
            except (ValueError, KeyError) as exc:
                raise ResumeError(index, str(exc)) from exc
    state = replay_log(messages)
    report = completeness_report(state)
    lines = [f"phase {report['phase']}"]
    for name, count in report["counts"].items():
        lines.append(f"{name.lower()} {count}")
    lines.append(f"all clear: {report['all_clear']}")
    _emit(args, report, "\n".join(lines))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="treaty-escrow",
        description="grid-keyed Merkle escrow for treaty site declarations",
    )
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("nonce", help="emit a fresh 32-byte inspector nonce")
    p.set_defaults(fn=_cmd_nonce)

    p = sub.add_parser("build", help="build a package and public commitment")
    p.add_argument("--declaration", required=True)
    p.add_argument("--nonce")
    p.add_argument("--nonce-file")
    p.add_argument("--suite", default="concat(sha2-256,sha3-256)")
    p.add_argument("--secret-file")
    p.add_argument("--grid", help="grid spec JSON (defaults to the DPRK grid)")
    p.add_argument("--out-package", required=True)
    p.add_argument("--out-commitment", required=True)
    p.set_defaults(fn=_cmd_build)

    p = sub.add_parser("reveal", help="open a declared site at L0 or L1")
    p.add_argument("--package", required=True)
    p.add_argument("--lat", type=float)
    p.add_argument("--lon", type=float)
    p.add_argument("--key")
    p.add_argument("--level", required=True, choices=["L0", "L1"])
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_reveal)

    p = sub.add_parser("prove-absent", help="open the empty leaf at a key")
    p.add_argument("--package", required=True)
    p.add_argument("--lat", type=float)
    p.add_argument("--lon", type=float)
    p.add_argument("--key")
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_prove_absent)

    p = sub.add_parser("verify", help="check a revelation against a commitment")
    p.add_argument("--commitment", required=True)
    p.add_argument("--revelation", required=True)
    p.set_defaults(fn=_cmd_verify)

    p = sub.add_parser("challenge", help="print the key x for coordinates")
    p.add_argument("--commitment", required=True)
    p.add_argument("--lat", type=float, required=True)
    p.add_argument("--lon", type=float, required=True)
    p.set_defaults(fn=_cmd_challenge)

    p = sub.add_parser("select", help="jointly-seeded random target draw")
    p.add_argument("--commitment", required=True)
    p.add_argument("--declarer-seed", required=True)
    p.add_argument("--inspector-seed", required=True)
    p.add_argument("--candidates", required=True, help="JSON file: list of keys")
    p.add_argument("--k", type=int, required=True)
    p.set_defaults(fn=_cmd_select)

    p = sub.add_parser("rekey", help="re-commit under a new suite/secret")
    p.add_argument("--package", required=True)
    p.add_argument("--suite", required=True)
    p.add_argument("--secret-file")
    p.add_argument("--nonce", help="new inspector nonce (hex); defaults to the old one")
    p.add_argument("--out-package", required=True)
    p.add_argument("--out-commitment", required=True)
    p.set_defaults(fn=_cmd_rekey)

    p = sub.add_parser("serve", help="run the session service")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=_cmd_serve)

    p = sub.add_parser("report", help="completeness report from an event log")
    p.add_argument("--log", required=True)
    p.set_defaults(fn=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (IntegrityError, ProtocolViolation, NotASite, IsASite, ResumeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
