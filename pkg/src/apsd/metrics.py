"""Latency, energy and wear accounting."""

from __future__ import annotations

import contextlib
import copy
import csv
import io
from collections import Counter
from dataclasses import asdict, dataclass, field, fields

from .errors import DivisionUndefined

OPS = ("read", "program", "partial_program", "erase", "pulse", "downlevel", "meta")


@dataclass(frozen=True)
class CostParams:
    """Per-operation latency (µs) and energy (µJ). Datasheet-typical SLC values."""

    read_us: float = 50
    read_uj: float = 30
    program_us: float = 600
    program_uj: float = 90
    partial_program_us: float = 200
    partial_program_uj: float = 40
    erase_us: float = 3500
    erase_uj: float = 250
    pulse_us: float = 400
    pulse_uj: float = 60
    downlevel_us: float = 300
    downlevel_uj: float = 50
    meta_us: float = 10
    meta_uj: float = 1

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not value > 0:
                raise ValueError(f"cost.{f.name} must be positive, got {value!r}")

    def latency(self, op: str) -> float:
        return getattr(self, f"{op}_us")

    def energy(self, op: str) -> float:
        return getattr(self, f"{op}_uj")


def block_erase_cost(valid_pages: int, costs: CostParams | None = None) -> float:
    """Latency of reclaiming a block that still holds ``valid_pages`` live pages."""
    if valid_pages < 0:
        raise ValueError("valid_pages must be >= 0")
    c = costs or CostParams()
    return c.erase_us + valid_pages * (c.read_us + c.program_us)


def _empty_profile() -> dict:
    return {"deletions": 0, "latency_us": 0.0, "energy_uj": 0.0, **{op: 0 for op in OPS}, "relocations": 0}


@dataclass
class MetricsLedger:
    costs: CostParams = field(default_factory=CostParams)
    counts: Counter = field(default_factory=Counter)
    latency_us: float = 0.0
    energy_uj: float = 0.0
    logical_pages_written: int = 0
    physical_pages_programmed: int = 0
    relocations: int = 0
    block_erases: Counter = field(default_factory=Counter)
    techniques: dict = field(default_factory=dict)
    levels: dict = field(default_factory=dict)
    log: list = field(default_factory=list)
    _context: tuple | None = None

    def record(self, op: str, block: int | None = None) -> None:
        if op not in OPS:
            raise ValueError(f"unknown op kind {op!r}")
        lat, en = self.costs.latency(op), self.costs.energy(op)
        self.counts[op] += 1
        self.latency_us += lat
        self.energy_uj += en
        if op == "erase" and block is not None:
            self.block_erases[block] += 1
        if op == "program":
            self.physical_pages_programmed += 1
        self.log.append((op,) + (self._context or (None, None)))
        for row in self._active_rows():
            row[op] += 1
            row["latency_us"] += lat
            row["energy_uj"] += en

    def record_relocation(self) -> None:
        self.relocations += 1
        for row in self._active_rows():
            row["relocations"] += 1

    def record_host_write(self) -> None:
        self.logical_pages_written += 1

    def _active_rows(self):
        if self._context is None:
            return ()
        technique, level = self._context
        rows = [self.techniques[technique]]
        if level is not None:
            rows.append(self.levels[level])
        return rows

    @contextlib.contextmanager
    def attribute(self, technique: str, level: str | None = None):
        """Charge every op recorded inside the block to ``technique`` (and ``level``)."""
        if self._context is not None:
            raise RuntimeError("deletions do not nest")
        self.techniques.setdefault(technique, _empty_profile())["deletions"] += 1
        if level is not None:
            self.levels.setdefault(level, _empty_profile())["deletions"] += 1
        self._context = (technique, level)
        try:
            yield
        finally:
            self._context = None

    def write_amplification(self) -> float:
        if self.logical_pages_written == 0:
            raise DivisionUndefined("no logical pages written")
        return self.physical_pages_programmed / self.logical_pages_written

    def recomputed_latency(self) -> float:
        return sum(self.costs.latency(entry[0]) for entry in self.log)

    def snapshot(self) -> "MetricsLedger":
        return copy.deepcopy(self)

    # -- tables -------------------------------------------------------------

    def technique_profile(self) -> list[dict]:
        return [{"technique": name, **self.techniques[name]} for name in sorted(self.techniques)]

    def level_profile(self) -> list[dict]:
        return [{"level": name, **self.levels[name]} for name in sorted(self.levels)]

    def counter_rows(self) -> list[tuple[str, float]]:
        rows = [(f"{op}_count", self.counts[op]) for op in OPS]
        rows += [
            ("latency_us", self.latency_us),
            ("energy_uj", self.energy_uj),
            ("logical_pages_written", self.logical_pages_written),
            ("physical_pages_programmed", self.physical_pages_programmed),
            ("relocations", self.relocations),
            ("blocks_erased", len(self.block_erases)),
        ]
        if self.logical_pages_written:
            rows.append(("write_amplification", round(self.write_amplification(), 6)))
        return rows


PROFILE_COLUMNS = ["deletions", "latency_us", "energy_uj", "erase", "partial_program", "program", "read", "pulse", "downlevel", "meta", "relocations"]


def _fmt(value) -> str:
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    return str(value)


def metrics_csv(ledger: MetricsLedger) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["metric", "value"])
    for name, value in ledger.counter_rows():
        w.writerow([name, _fmt(value)])
    return out.getvalue()


def techniques_csv(ledger: MetricsLedger) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["technique"] + PROFILE_COLUMNS)
    for row in ledger.technique_profile():
        w.writerow([row["technique"]] + [_fmt(row[c]) for c in PROFILE_COLUMNS])
    return out.getvalue()


def levels_csv(ledger: MetricsLedger, residuals: dict | None = None) -> str:
    """Per-level cost rows; ``residuals`` optionally maps level -> mean chip residual."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    header = ["level"] + PROFILE_COLUMNS
    if residuals is not None:
        header.append("chip_residual")
    w.writerow(header)
    for row in ledger.level_profile():
        line = [row["level"]] + [_fmt(row[c]) for c in PROFILE_COLUMNS]
        if residuals is not None:
            line.append(_fmt(residuals.get(row["level"], "")))
        w.writerow(line)
    return out.getvalue()


def cost_params_dict(costs: CostParams) -> dict:
    return asdict(costs)
