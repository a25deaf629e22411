"""Command-line front end.

    apsd run --trace workload.trace [--config sim.ini] [--out-dir out] [--seed N] [--level-default PL1]
    apsd forensics --reference out/reference.json out/final.apsd [more.apsd ...] [--out-dir out]
    apsd report [--config sim.ini] [--out-dir report] [--seed N]
    apsd snapshot-info out/final.apsd
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from .config import load_config, resolve_seed
from .errors import ApsdError
from .forensics import ReferenceStore, footnotes, report_csv, residual_report
from .runner import run
from .snapshot import load_snapshot, snapshot_info
from .trace import parse_trace
from .workload import level_trials, run_standard

log = logging.getLogger("apsd")


def _level(text: str) -> str:
    value = text.upper()
    if value not in ("PL0", "PL1", "PL2", "PL3"):
        raise argparse.ArgumentTypeError(f"expected PL0..PL3, got {text!r}")
    return value


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 1 << 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def cmd_run(args) -> int:
    config = load_config(args.config)
    seed = resolve_seed(args.seed, config)
    with open(args.trace, encoding="utf-8") as fh:
        events = parse_trace(fh.read())
    result = run(config, events, seed, args.out_dir, args.level_default)
    if result.exit_code:
        print(f"error: {result.log_lines[-1]}", file=sys.stderr)
    else:
        print(f"ok: {len(events)} events, seed {seed}, artifacts in {args.out_dir}")
    return result.exit_code


def _analyse(snapshot_path, reference, seed):
    sim = load_snapshot(snapshot_path, seed=seed)
    dump = sim.dump()
    return residual_report(dump, reference, sim.peek)


def cmd_forensics(args) -> int:
    with open(args.reference, encoding="utf-8") as fh:
        reference = ReferenceStore.from_json(json.load(fh))
    os.makedirs(args.out_dir, exist_ok=True)
    with ThreadPoolExecutor(max_workers=min(4, len(args.snapshots))) as pool:
        reports = list(pool.map(lambda p: _analyse(p, reference, args.seed or 0), args.snapshots))
    for path, report in zip(args.snapshots, reports):
        name = "forensics.csv" if len(args.snapshots) == 1 else f"forensics_{os.path.splitext(os.path.basename(path))[0]}.csv"
        with open(os.path.join(args.out_dir, name), "w", encoding="utf-8", newline="") as fh:
            fh.write(report_csv(report))
        notes = footnotes(r["technique"] for r in report.rows)
        print(f"{path}: {len(report.rows)} technique rows -> {name}")
        for note in notes:
            print(f"  note: {note}")
    return 0


def cmd_report(args) -> int:
    config = load_config(args.config)
    seed = resolve_seed(args.seed, config)
    result = run_standard(config, seed, args.out_dir)
    trials = level_trials(config, seed)
    lines = ["Privacy level comparison (single deletion, identical device state)", ""]
    lines.append(f"{'level':<6}{'technique':<11}{'latency_us':>12}{'energy_uj':>11}{'erases':>8}")
    for level, t in trials.items():
        lines.append(f"{level.name:<6}{t.technique.value:<11}{t.latency_us:>12g}{t.energy_uj:>11g}{t.erases:>8}")
    lines += ["", "Technique profile (standard workload)", ""]
    for row in result.sim.ledger.technique_profile():
        lines.append(f"{row['technique']:<11}{row['latency_us']:>10g} us  erases {row['erase']}  partial {row['partial_program']}")
    report = residual_report(result.sim.dump(), result.sim.reference, result.sim.peek)
    lines += ["", "Notes:"] + [f"  {n}" for n in footnotes(r["technique"] for r in report.rows)]
    text = "\n".join(lines) + "\n"
    with open(os.path.join(args.out_dir, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(text)
    print(text, end="")
    return 0


def cmd_snapshot_info(args) -> int:
    info = snapshot_info(args.snapshot)
    names = ("blocks", "pages_per_block", "page_data_bytes", "page_spare_bytes", "erase_limit", "partial_program_limit")
    print(f"version {info.version}, {info.size} bytes, CRC ok")
    for name, value in zip(names, info.geometry):
        print(f"  {name} = {value}")
    print(f"  mapped_out_blocks = {info.mapped_out}")
    print(f"  mappings = {info.mappings}")
    print(f"  keys = {info.keys}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="apsd", description="NAND SSD simulator with graduated secure deletion")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute a workload trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--config")
    p.add_argument("--out-dir", default="out")
    p.add_argument("--seed", type=_seed)
    p.add_argument("--level-default", type=_level)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("forensics", help="chip-level residual analysis of snapshots")
    p.add_argument("snapshots", nargs="+")
    p.add_argument("--reference", required=True)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--seed", type=_seed)
    p.set_defaults(func=cmd_forensics)

    p = sub.add_parser("report", help="run the standard workload and write comparison tables")
    p.add_argument("--config")
    p.add_argument("--out-dir", default="report")
    p.add_argument("--seed", type=_seed)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("snapshot-info", help="print snapshot header")
    p.add_argument("snapshot")
    p.set_defaults(func=cmd_snapshot_info)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (ApsdError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
