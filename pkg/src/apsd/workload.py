"""The standard scripted workload behind the level and technique comparisons.

Setup: fill one block per technique sequentially, then rewrite every page
except one target in the middle of each block.  Each target therefore sits
alone among stale pages in its block, the state of a cold record left behind
by churn, and the targets never move before they are deleted.  One target is
written encrypted so crypto-erase has something to destroy.
"""

from __future__ import annotations

from dataclasses import dataclass

from .config import Config
from .engine import PrivacyLevel, Technique
from .nand import Geometry
from .runner import RunResult, run
from .trace import parse_trace

TECHNIQUE_ORDER = (
    Technique.UNMAP,
    Technique.CRYPTO_ERASE,
    Technique.BLOCK_ERASE,
    Technique.SCRUB,
    Technique.OVERWRITE,
    Technique.DELETION_PULSE,
    Technique.DOWN_LEVEL,
    Technique.ECC_MODULATION,
    Technique.FLAG_LOCK,
    Technique.MAP_OUT,
)

REWRITE_SEED_OFFSET = 1_000_000


@dataclass(frozen=True)
class StandardLayout:
    geometry: Geometry
    blocks: int

    @property
    def target_page(self) -> int:
        return self.geometry.pages_per_block // 2

    def target(self, index: int) -> int:
        return index * self.geometry.pages_per_block + self.target_page


def setup_lines(geometry: Geometry, blocks: int = len(TECHNIQUE_ORDER), encrypted_targets=(1,)) -> list[str]:
    layout = StandardLayout(geometry, blocks)
    ppb = geometry.pages_per_block
    targets = {layout.target(i) for i in range(blocks)}
    enc = {layout.target(i) for i in encrypted_targets if i < blocks}
    lines = ["# standard workload: sequential fill"]
    for lpa in range(blocks * ppb):
        lines.append(f"W {lpa} seed:{lpa + 1}" + (" enc" if lpa in enc else ""))
    lines.append("# rewrite everything except one target per block")
    for lpa in range(blocks * ppb):
        if lpa not in targets:
            lines.append(f"W {lpa} seed:{lpa + 1 + REWRITE_SEED_OFFSET}")
    return lines


def standard_trace(geometry: Geometry | None = None) -> str:
    """Setup plus one deletion per technique and a final dump checkpoint."""
    geometry = geometry or Geometry()
    layout = StandardLayout(geometry, len(TECHNIQUE_ORDER))
    lines = setup_lines(geometry)
    lines.append("# one deletion per technique")
    for i, technique in enumerate(TECHNIQUE_ORDER):
        lines.append(f"D {layout.target(i)} {technique.value}")
    lines.append("X")
    return "\n".join(lines) + "\n"


def level_trace(geometry: Geometry, level: PrivacyLevel) -> str:
    """Identical setup for every level, then a single deletion of the first target."""
    layout = StandardLayout(geometry, 2)
    lines = setup_lines(geometry, blocks=2, encrypted_targets=())
    lines.append(f"D {layout.target(0)} {level.name}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class LevelTrial:
    level: PrivacyLevel
    technique: Technique
    latency_us: float
    energy_uj: float
    erases: int
    partial_programs: int
    programs: int
    denied: bool
    device_erases: int


def level_trials(config: Config | None = None, seed: int = 0) -> dict[PrivacyLevel, LevelTrial]:
    config = config or Config()
    trials = {}
    for level in PrivacyLevel:
        result = run(config, parse_trace(level_trace(config.geometry, level)), seed)
        if result.exit_code:
            raise RuntimeError(result.log_lines[-1])
        outcome = result.outcomes[-1]
        d = outcome.ledger_delta
        trials[level] = LevelTrial(
            level,
            outcome.technique,
            d["latency_us"],
            d["energy_uj"],
            d.get("erase", 0),
            d.get("partial_program", 0),
            d.get("program", 0),
            outcome.verification.controller_denied,
            int(result.sim.nand.erase_count.sum()),
        )
    return trials


def run_standard(config: Config | None = None, seed: int = 0, out_dir: str | None = None) -> RunResult:
    config = config or Config()
    result = run(config, parse_trace(standard_trace(config.geometry)), seed, out_dir)
    if result.exit_code:
        raise RuntimeError(result.log_lines[-1])
    return result
