"""Context-driven privacy level selection.

A linear score over the context features is cut by three thresholds.  A score
that lands exactly on a threshold takes the higher level.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import asdict, dataclass, fields

from .engine import PrivacyLevel
from .errors import InvalidPolicy


@dataclass(frozen=True)
class ContextVector:
    sensitivity: int = 0
    network_trust: int = 1
    threat_alert: bool = False
    workload_pressure: float = 0.0

    def __post_init__(self):
        if not 0 <= self.sensitivity <= 3:
            raise ValueError(f"sensitivity must be in 0..3, got {self.sensitivity}")
        if not 0 <= self.network_trust <= 2:
            raise ValueError(f"network_trust must be in 0..2, got {self.network_trust}")
        if not 0.0 <= self.workload_pressure <= 1.0:
            raise ValueError(f"workload_pressure must be in [0, 1], got {self.workload_pressure}")


@dataclass(frozen=True)
class PolicyTable:
    w_sensitivity: float = 1.0
    w_trust: float = -0.5
    w_threat: float = 1.5
    w_pressure: float = -1.0
    t1: float = 0.5
    t2: float = 1.5
    t3: float = 2.5

    def __post_init__(self):
        if not self.t1 < self.t2 < self.t3:
            raise InvalidPolicy(f"thresholds must be strictly increasing, got {self.t1}, {self.t2}, {self.t3}")

    def score(self, ctx: ContextVector) -> float:
        return (
            self.w_sensitivity * ctx.sensitivity
            + self.w_trust * ctx.network_trust
            + self.w_threat * (1 if ctx.threat_alert else 0)
            + self.w_pressure * ctx.workload_pressure
        )


def select_level(ctx: ContextVector, table: PolicyTable | None = None) -> PrivacyLevel:
    table = table or PolicyTable()
    score = table.score(ctx)
    if score < table.t1:
        return PrivacyLevel.PL0
    if score < table.t2:
        return PrivacyLevel.PL1
    if score < table.t3:
        return PrivacyLevel.PL2
    return PrivacyLevel.PL3


_KEYS = {f.name for f in fields(PolicyTable)}


def load_policy(config: dict | None) -> PolicyTable:
    """Build a table from a ``{key: number}`` mapping; missing keys keep defaults."""
    config = dict(config or {})
    unknown = set(config) - _KEYS
    if unknown:
        raise InvalidPolicy(f"unknown policy keys: {', '.join(sorted(unknown))}")
    values = {}
    for key, raw in config.items():
        try:
            values[key] = float(raw)
        except (TypeError, ValueError):
            raise InvalidPolicy(f"policy.{key} is not a number: {raw!r}") from None
    return PolicyTable(**values)


def dump_policy(table: PolicyTable) -> str:
    parser = configparser.ConfigParser()
    parser["policy"] = {k: repr(v) for k, v in asdict(table).items()}
    out = io.StringIO()
    parser.write(out)
    return out.getvalue()
