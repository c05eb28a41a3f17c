"""Command-line front-end: verify, repair, taint, encode, check-cert, bench.

Exit codes: 0 safe/repaired, 1 unsafe (verify) or failed check, 2 input
error, 3 resource exhaustion.

The bench CSV is byte-stable across runs for a fixed seed; its time_ms
column is therefore a deterministic work proxy (total satisfiability
queries for the row), while wall-clock times go to stderr.
"""

from __future__ import annotations

import argparse
import shlex
import sys
import time
from pathlib import Path

from specfence import ir
from specfence.certificate import OracleError, check_certificate, export_certificate
from specfence.encode import Placement, SpecMode, encode_speculative, encode_standard, fence_sites
from specfence.logic.cdcl import ResourceError
from specfence.repair import RepairOptions, repair, verify
from specfence.threat import ThreatModel, compute_vinst, format_taint_map, taint_map

CSV_HEADER = ("benchmark,ni,nb,nm,placement,incremental,mode,nf,"
              "time_ms,verdict,lemmas_kept,lemmas_dropped")

BENCH_BOUNDED_K = 20

# baseline first: every-inst placement, no activation heuristic, from-scratch
BENCH_CONFIGS = [
    (Placement.EVERY_INST, False, "unbounded", "split-point"),
    (Placement.AFTER_BRANCH, True, "unbounded", "nearest"),
    (Placement.AFTER_BRANCH, False, "unbounded", "nearest"),
    (Placement.AFTER_BRANCH, True, f"bounded:{BENCH_BOUNDED_K}", "nearest"),
    (Placement.AFTER_BRANCH, False, f"bounded:{BENCH_BOUNDED_K}", "nearest"),
    (Placement.BEFORE_MEMORY, True, "unbounded", "nearest"),
    (Placement.BEFORE_MEMORY, False, "unbounded", "nearest"),
    (Placement.BEFORE_MEMORY, True, f"bounded:{BENCH_BOUNDED_K}", "nearest"),
    (Placement.BEFORE_MEMORY, False, f"bounded:{BENCH_BOUNDED_K}", "nearest"),
]


def _parse_mode(text: str) -> SpecMode:
    if text == "unbounded":
        return SpecMode.unbounded()
    if text.startswith("bounded:"):
        k = int(text.split(":", 1)[1])
        if k < 1:
            raise ValueError("speculation bound must be >= 1")
        return SpecMode.bounded(k)
    raise ValueError(f"bad --mode {text!r}, expected unbounded or bounded:<k>")


def _common_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--threat", choices=["strong", "classical"], default="strong")
    sp.add_argument("--mode", default="unbounded", help="unbounded or bounded:<k>")
    sp.add_argument("--placement", default="after-branch",
                    choices=[p.value for p in Placement])
    sp.add_argument("--activation", choices=["nearest", "split-point"], default="nearest")
    sp.add_argument("--incremental", choices=["on", "off"], default="on")
    sp.add_argument("--fences", default="", help="comma-separated site ids to pre-activate")
    sp.add_argument("--loads-only", action="store_true",
                    help="restrict VInst to loads (exclude stores)")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--timeout", type=float, default=120.0, help="seconds")
    sp.add_argument("--log", choices=["pdr"], default=None)
    sp.add_argument("--out", default=None)


def _options(args) -> RepairOptions:
    log = (lambda line: print(f"[pdr] {line}", file=sys.stderr)) if args.log else None
    fences = tuple(f for f in args.fences.split(",") if f)
    return RepairOptions(
        placement=Placement(args.placement),
        activation=args.activation,
        incremental=args.incremental == "on",
        mode=_parse_mode(args.mode),
        threat=ThreatModel(args.threat),
        loads_only=args.loads_only,
        initial_fences=fences,
        seed=args.seed,
        deadline=time.monotonic() + args.timeout,
        log=log,
    )


def _load_program(path: str) -> ir.Program:
    return ir.parse_program(Path(path).read_text(encoding="utf-8"))


def _site_report(result) -> str:
    by_id = {s.id: s for s in result.sites}
    lines = []
    for fid in result.fences:
        s = by_id[fid]
        if s.position in ("then", "else"):
            branch = fid.split("@L", 1)[1]
            where = f"{s.position} side of branch L{branch}, guards L{s.anchor}"
        else:
            where = f"before L{s.anchor}"
        lines.append(f"  fence {fid}: {where}")
    return "\n".join(lines)


def cmd_verify(args) -> int:
    p = _load_program(args.path)
    opts = _options(args)
    verdict, payload, ts, engine = verify(p, opts)
    if verdict == "SAFE":
        cert = export_certificate(ts, payload,
                                  header_note=f"verify {Path(args.path).name}")
        out = Path(args.out) if args.out else Path(Path(args.path).stem + ".cert.smt2")
        out.write_text(cert, encoding="utf-8")
        print(f"SAFE certificate={out}")
        return 0
    print("UNSAFE")
    print(payload.render())
    return 1


def cmd_repair(args) -> int:
    p = _load_program(args.path)
    opts = _options(args)
    result = repair(p, opts)
    cert = export_certificate(result.ts, result.invariant,
                              header_note=f"repair {Path(args.path).name}")
    outcome = check_certificate(cert, seed=args.seed)
    if not outcome:
        raise RuntimeError(f"emitted certificate fails condition {outcome.failed_condition}")
    out = Path(args.out) if args.out else Path(Path(args.path).stem + ".cert.smt2")
    out.write_text(cert, encoding="utf-8")
    print(f"SAFE after {result.iterations} fence(s); certificate={out}")
    if result.fences:
        print(_site_report(result))
    for i, it in enumerate(result.per_iteration):
        tail = f"activated {it.fence}" if it.fence else "proved safe"
        print(f"  iteration {i}: {it.queries} queries, "
              f"lemmas kept {it.lemmas_kept} dropped {it.lemmas_dropped}, "
              f"{it.wall_ms:.0f} ms, {tail}")
    return 0


def cmd_taint(args) -> int:
    p = _load_program(args.path)
    text = format_taint_map(p, taint_map(p))
    vinst = compute_vinst(p, ThreatModel(args.threat), loads_only=args.loads_only)
    text += "vinst ({}): {}\n".format(
        args.threat, " ".join(f"L{l}" for l in sorted(vinst.labels)) or "-")
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        print(text, end="")
    return 0


def cmd_encode(args) -> int:
    p = _load_program(args.path)
    if args.standard:
        ts = encode_standard(p)
    else:
        vinst = compute_vinst(p, ThreatModel(args.threat), loads_only=args.loads_only)
        sites = fence_sites(p, vinst, Placement(args.placement))
        active = set(f for f in args.fences.split(",") if f)
        ts = encode_speculative(p, vinst, sites, _parse_mode(args.mode), active=active)
    text = export_certificate(ts, None, header_note=f"encode {Path(args.path).name}")
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        print(text, end="")
    return 0


def cmd_check_cert(args) -> int:
    text = Path(args.path).read_text(encoding="utf-8")
    cmd = shlex.split(args.solver_cmd) if args.solver_cmd else None
    outcome = check_certificate(text, solver_cmd=cmd, seed=args.seed)
    if outcome:
        print("PASS")
        return 0
    print(f"FAIL condition ({'i' * outcome.failed_condition})")
    if outcome.witness is not None:
        nonzero = {k: v for k, v in sorted(outcome.witness.values.items()) if v}
        print(f"  witness: {nonzero}")
    return 1


def _bench_row(path: Path, placement: Placement, incremental: bool,
               mode_text: str, activation: str, args) -> tuple[str, str | None]:
    p = _load_program(str(path))
    ni = len(p.insts)
    nb = len(ir.conditional_instructions(p))
    nm = len(ir.memory_instructions(p))
    opts = RepairOptions(
        placement=placement,
        activation=activation,
        incremental=incremental,
        mode=_parse_mode(mode_text),
        threat=ThreatModel(args.threat),
        loads_only=args.loads_only,
        seed=args.seed,
        deadline=time.monotonic() + args.timeout,
    )
    name = path.stem
    inc = "on" if incremental else "off"
    t0 = time.monotonic()
    try:
        result = repair(p, opts)
    except ResourceError:
        row = (f"{name},{ni},{nb},{nm},{placement.value},{inc},{mode_text},"
               f"0,0,TIMEOUT,0,0")
        print(f"[bench] {name} {placement.value} inc={inc} {mode_text}: TIMEOUT",
              file=sys.stderr)
        return row, None
    wall = (time.monotonic() - t0) * 1000
    verdict = "SAFE-after-repair" if result.fences else "SAFE-unmodified"
    cert = export_certificate(
        result.ts, result.invariant,
        header_note=f"bench {name} {placement.value} inc={inc} {mode_text}")
    if not check_certificate(cert, seed=args.seed):
        raise RuntimeError(f"bench row {name}/{placement.value} emitted a bad certificate")
    row = (f"{name},{ni},{nb},{nm},{placement.value},{inc},{mode_text},"
           f"{len(result.fences)},{result.total_queries},{verdict},"
           f"{result.lemmas_kept},{result.lemmas_dropped}")
    print(f"[bench] {name} {placement.value} inc={inc} {mode_text}: "
          f"{len(result.fences)} fences, {wall:.0f} ms wall", file=sys.stderr)
    return row, cert


def cmd_bench(args) -> int:
    root = Path(args.path)
    files = sorted(root.glob("*.sir"))
    if not files:
        raise FileNotFoundError(f"no .sir files in {root}")
    rows = [CSV_HEADER]
    cert_dir = Path(args.cert_dir) if args.cert_dir else None
    if cert_dir:
        cert_dir.mkdir(parents=True, exist_ok=True)
    for path in files:
        for placement, incremental, mode_text, activation in BENCH_CONFIGS:
            row, cert = _bench_row(path, placement, incremental, mode_text,
                                   activation, args)
            rows.append(row)
            if cert_dir and cert is not None:
                inc = "on" if incremental else "off"
                fname = f"{path.stem}__{placement.value}__{inc}__{mode_text.replace(':', '-')}.cert.smt2"
                (cert_dir / fname).write_text(cert, encoding="utf-8")
    csv = "\n".join(rows) + "\n"
    if args.out:
        Path(args.out).write_text(csv, encoding="utf-8")
    else:
        print(csv, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="specfence",
        description="Prove programs leak-free under speculative execution, "
                    "or insert fences until they are.")
    sub = ap.add_subparsers(dest="command", required=True)

    for name, fn in [("verify", cmd_verify), ("repair", cmd_repair),
                     ("taint", cmd_taint), ("encode", cmd_encode),
                     ("check-cert", cmd_check_cert), ("bench", cmd_bench)]:
        sp = sub.add_parser(name)
        sp.add_argument("path")
        _common_flags(sp)
        sp.set_defaults(fn=fn)
        if name == "encode":
            sp.add_argument("--standard", action="store_true",
                            help="dump the non-speculative encoding")
        if name == "check-cert":
            sp.add_argument("--solver-cmd", default=None,
                            help="external SMT-LIB2 solver command line")
        if name == "bench":
            sp.add_argument("--cert-dir", default=None,
                            help="directory for per-row certificates")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ir.ParseError, ir.ValidationError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ResourceError, OracleError) as e:
        print(f"resource error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
