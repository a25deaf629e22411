"""Execute parsed trace events against one simulator and emit run artifacts."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field

from .config import Config
from .engine import DeleteOutcome
from .errors import ApsdError
from .forensics import footnotes, report_csv, residual_report
from .metrics import levels_csv, metrics_csv, techniques_csv
from .simulator import Simulator
from .snapshot import save_snapshot
from .trace import TraceEvent

log = logging.getLogger(__name__)


@dataclass
class RunResult:
    exit_code: int
    sim: Simulator
    log_lines: list[str] = field(default_factory=list)
    outcomes: list[DeleteOutcome] = field(default_factory=list)
    failed_line: int | None = None
    checkpoints: list[str] = field(default_factory=list)


def build_simulator(config: Config, seed: int, track_reference: bool = True) -> Simulator:
    return Simulator(config.geometry, seed, config.op_ratio, config.costs, config.policy, track_reference)


class Runner:
    def __init__(self, sim: Simulator, out_dir: str | None = None, level_default: str | None = None):
        self.sim = sim
        self.out_dir = out_dir
        self.level_default = level_default
        self.result = RunResult(0, sim)

    def _say(self, text: str) -> None:
        self.result.log_lines.append(text)
        log.debug(text)

    def execute(self, events: list[TraceEvent]) -> RunResult:
        for event in events:
            try:
                self._step(event)
            except (ApsdError, ValueError) as exc:
                self._say(f"line {event.line}: {event} failed: {type(exc).__name__}: {exc}")
                self.result.exit_code = 1
                self.result.failed_line = event.line
                break
        return self.result

    def _step(self, e: TraceEvent) -> None:
        sim = self.sim
        if e.verb == "W":
            ppa = sim.write(e.lpa, e.payload.expand(sim.geometry.page_data_bytes), e.encrypted)
            self._say(f"line {e.line}: W {e.lpa} -> ppa {ppa}")
        elif e.verb == "R":
            result = sim.read(e.lpa)
            self._say(f"line {e.line}: R {e.lpa} -> {result.status.value}")
        elif e.verb == "T":
            ppa = sim.trim(e.lpa)
            self._say(f"line {e.line}: T {e.lpa} (ppa {ppa})")
        elif e.verb == "D":
            target = e.target or self.level_default
            if target is None:
                raise ValueError("D without a level and no --level-default")
            if target == "auto" or target.startswith("PL"):
                outcome = sim.delete(e.lpa, level=target)
            else:
                outcome = sim.delete(e.lpa, technique=target)
            self.result.outcomes.append(outcome)
            v = outcome.verification
            level = outcome.level.name if outcome.level else "-"
            self._say(
                f"line {e.line}: D {e.lpa} {level} {outcome.technique.value} ppa {outcome.ppa} "
                f"relocations {outcome.relocations} latency_us {outcome.ledger_delta['latency_us']:g} "
                f"denied {v.controller_denied} ({v.denial_kind.value})"
            )
        elif e.verb == "G":
            moved = sim.garbage_collect(e.min_free)
            self._say(f"line {e.line}: G {e.min_free} relocated {moved}")
        elif e.verb == "C":
            sim.sensitivity, sim.network_trust, sim.threat_alert = e.context
            self._say(f"line {e.line}: C {e.context[0]} {e.context[1]} {int(e.context[2])}")
        elif e.verb == "X":
            name = f"checkpoint_{len(self.result.checkpoints):03d}.apsd"
            if self.out_dir is not None:
                save_snapshot(sim, os.path.join(self.out_dir, name))
            self.result.checkpoints.append(name)
            self._say(f"line {e.line}: X {name}")
        else:  # pragma: no cover - parse_trace rejects unknown verbs
            raise ValueError(f"unknown verb {e.verb}")


def write_artifacts(result: RunResult, out_dir: str) -> dict[str, str]:
    """metrics.csv, techniques.csv, levels.csv, forensics.csv, reference.json, final.apsd, run.log."""
    os.makedirs(out_dir, exist_ok=True)
    sim = result.sim
    paths = {}

    def emit(name: str, text: str) -> None:
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        paths[name] = path

    residuals = None
    if sim.reference is not None:
        report = residual_report(sim.dump(), sim.reference, sim.peek)
        by_lpa = {x.lpa: x for x in report.entries}
        levels: dict[str, list[float]] = {}
        for lpa, entry in sim.reference.deleted().items():
            if entry.level is not None:
                levels.setdefault(entry.level, []).append(by_lpa[lpa].chip_recoverable)
        residuals = {k: sum(v) / len(v) for k, v in levels.items()}
        emit("forensics.csv", report_csv(report))
        notes = footnotes(r["technique"] for r in report.rows)
        emit("notes.txt", "".join(f"{n}\n" for n in notes))
        emit("reference.json", json.dumps(sim.reference.to_json(), sort_keys=True, indent=1) + "\n")
    emit("metrics.csv", metrics_csv(sim.ledger))
    emit("techniques.csv", techniques_csv(sim.ledger))
    emit("levels.csv", levels_csv(sim.ledger, residuals))
    emit("run.log", "".join(f"{line}\n" for line in result.log_lines))
    snap = os.path.join(out_dir, "final.apsd")
    save_snapshot(sim, snap)
    paths["final.apsd"] = snap
    return paths


def run(config: Config, events: list[TraceEvent], seed: int, out_dir: str | None = None, level_default: str | None = None) -> RunResult:
    sim = build_simulator(config, seed)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    result = Runner(sim, out_dir, level_default).execute(events)
    if out_dir is not None:
        write_artifacts(result, out_dir)
    return result
