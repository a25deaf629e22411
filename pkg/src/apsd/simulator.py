"""One simulated device: NAND array, FTL, ledger, deletion engine and ground truth."""

from __future__ import annotations

from .engine import DeleteEngine, DeleteOutcome, PrivacyLevel, Technique
from .forensics import ChipDump, ReferenceStore, chip_dump
from .ftl import DEFAULT_OP_RATIO, FlashTranslationLayer, ReadResult
from .metrics import CostParams, MetricsLedger
from .nand import Geometry, NandArray
from .policy import ContextVector, PolicyTable, select_level


class Simulator:
    def __init__(
        self,
        geometry: Geometry | None = None,
        seed: int = 0,
        op_ratio: float = DEFAULT_OP_RATIO,
        costs: CostParams | None = None,
        policy: PolicyTable | None = None,
        track_reference: bool = True,
        nand: NandArray | None = None,
    ):
        self.seed = seed
        self.nand = nand if nand is not None else NandArray(geometry or Geometry(), seed)
        self.geometry = self.nand.geometry
        self.ledger = MetricsLedger(costs or CostParams())
        self.reference = ReferenceStore(self.geometry.pages_per_block) if track_reference else None
        self.ftl = FlashTranslationLayer(self.nand, self.ledger, op_ratio, reference=self.reference)
        self.engine = DeleteEngine(self.ftl)
        self.policy = policy or PolicyTable()
        self.sensitivity = 0
        self.network_trust = 1
        self.threat_alert = False

    def write(self, lpa: int, data, encrypted: bool = False) -> int:
        return self.ftl.host_write(lpa, data, encrypted)

    def read(self, lpa: int) -> ReadResult:
        return self.ftl.host_read(lpa)

    def peek(self, lpa: int) -> ReadResult:
        """Host read that leaves the ledger untouched, for analysis."""
        return self.ftl.host_read(lpa, charge=False)

    def trim(self, lpa: int) -> int:
        ppa = self.ftl.trim_unmap(lpa)
        if self.reference is not None and lpa in self.reference.entries:
            self.reference.mark_deleted(lpa, Technique.UNMAP.value)
        return ppa

    def context(self) -> ContextVector:
        total = self.geometry.total_pages
        pressure = 1.0 - self.ftl.free_pages() / total
        return ContextVector(self.sensitivity, self.network_trust, self.threat_alert, min(max(pressure, 0.0), 1.0))

    def auto_level(self) -> PrivacyLevel:
        return select_level(self.context(), self.policy)

    def delete(self, lpa: int, level: PrivacyLevel | str | None = None, technique: Technique | str | None = None) -> DeleteOutcome:
        if isinstance(level, str):
            level = self.auto_level() if level == "auto" else PrivacyLevel.parse(level)
        if isinstance(technique, str):
            technique = Technique(technique)
        outcome = self.engine.secure_delete(lpa, level, technique)
        if self.reference is not None and lpa in self.reference.entries:
            self.reference.mark_deleted(lpa, outcome.technique.value, outcome.level.name if outcome.level else None)
        return outcome

    def garbage_collect(self, min_free_pages: int) -> int:
        return self.ftl.garbage_collect(min_free_pages)

    def dump(self) -> ChipDump:
        return chip_dump(self.nand)

    def audit(self) -> None:
        self.ftl.audit()
