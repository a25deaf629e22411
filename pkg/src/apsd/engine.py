"""Privacy-level dispatcher and deletion techniques.

Every technique starts by unmapping the logical address; the level then picks
what happens to the physical page:

    PL0  erase       relocate the block's other live pages, erase the block
    PL1  scrub       program the data area to 0x00 (also overwrite, pulse, downlevel)
    PL2  eccmod      zero magic/CRC/parity in the spare (also flaglock)
    PL3  mapout      relocate the block's other live pages, exclude the block

``unmap`` (address only) and ``crypto`` (key destruction) sit outside the
level ladder and are reachable by naming the technique.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import total_ordering

from .codec import make_flag_lock_mask, make_poison_mask
from .errors import NotEncrypted, Unmapped
from .ftl import FlashTranslationLayer, ReadStatus


@total_ordering
class PrivacyLevel(enum.Enum):
    PL0 = 0
    PL1 = 1
    PL2 = 2
    PL3 = 3

    def __lt__(self, other):
        if not isinstance(other, PrivacyLevel):
            return NotImplemented
        return self.value < other.value

    @classmethod
    def parse(cls, text: str) -> "PrivacyLevel":
        try:
            return cls[text.upper()]
        except KeyError:
            raise ValueError(f"unknown privacy level {text!r}") from None


class Technique(str, enum.Enum):
    UNMAP = "unmap"
    CRYPTO_ERASE = "crypto"
    BLOCK_ERASE = "erase"
    SCRUB = "scrub"
    OVERWRITE = "overwrite"
    DELETION_PULSE = "pulse"
    DOWN_LEVEL = "downlevel"
    ECC_MODULATION = "eccmod"
    FLAG_LOCK = "flaglock"
    MAP_OUT = "mapout"

    def __str__(self) -> str:
        return self.value


DEFAULT_TECHNIQUE = {
    PrivacyLevel.PL0: Technique.BLOCK_ERASE,
    PrivacyLevel.PL1: Technique.SCRUB,
    PrivacyLevel.PL2: Technique.ECC_MODULATION,
    PrivacyLevel.PL3: Technique.MAP_OUT,
}

LEVEL_FAMILY = {
    PrivacyLevel.PL0: frozenset({Technique.BLOCK_ERASE}),
    PrivacyLevel.PL1: frozenset({Technique.SCRUB, Technique.OVERWRITE, Technique.DELETION_PULSE, Technique.DOWN_LEVEL}),
    PrivacyLevel.PL2: frozenset({Technique.ECC_MODULATION, Technique.FLAG_LOCK}),
    PrivacyLevel.PL3: frozenset({Technique.MAP_OUT}),
}

# raw cells still hold the written image after these
PERSISTENT = frozenset(
    {Technique.UNMAP, Technique.FLAG_LOCK, Technique.ECC_MODULATION, Technique.MAP_OUT, Technique.CRYPTO_ERASE}
)
DESTRUCTIVE = frozenset(
    {Technique.BLOCK_ERASE, Technique.SCRUB, Technique.OVERWRITE, Technique.DELETION_PULSE, Technique.DOWN_LEVEL}
)


def level_of(technique: Technique) -> PrivacyLevel | None:
    for level, family in LEVEL_FAMILY.items():
        if technique in family:
            return level
    return None


def resolve(level: PrivacyLevel | None, technique: Technique | None) -> tuple[PrivacyLevel | None, Technique]:
    if technique is None:
        if level is None:
            raise ValueError("either a privacy level or a technique is required")
        return level, DEFAULT_TECHNIQUE[level]
    technique = Technique(technique)
    if level is None:
        return level_of(technique), technique
    if technique not in LEVEL_FAMILY[level]:
        raise ValueError(f"technique {technique.value!r} is not in the {level.name} family")
    return level, technique


@dataclass(frozen=True)
class VerificationReport:
    controller_denied: bool
    denial_kind: ReadStatus
    chip_residual_expected: float


@dataclass(frozen=True)
class DeleteOutcome:
    lpa: int
    ppa: int
    level: PrivacyLevel | None
    technique: Technique
    pages_touched: int
    relocations: int
    ledger_delta: dict = field(default_factory=dict)
    verification: VerificationReport | None = None


class DeleteEngine:
    def __init__(self, ftl: FlashTranslationLayer):
        self.ftl = ftl
        self.nand = ftl.nand
        self.ledger = ftl.ledger
        self.layout = ftl.layout
        self.history: list[DeleteOutcome] = []

    # -- dispatch -----------------------------------------------------------

    def secure_delete(self, lpa: int, level: PrivacyLevel | None = None, technique: Technique | None = None) -> DeleteOutcome:
        level, technique = resolve(level, technique)
        ppa = self.ftl.l2p.get(lpa)
        if ppa is None:
            raise Unmapped(lpa)
        if technique is Technique.CRYPTO_ERASE and ppa not in self.ftl.keys:
            raise NotEncrypted(ppa)

        mark = len(self.ledger.log)
        with self.ledger.attribute(technique.value, level.name if level else None):
            self.ftl.trim_unmap(lpa)
            touched, relocated = self._apply(ppa, technique)
            if technique is not Technique.UNMAP and technique is not Technique.BLOCK_ERASE:
                self.ftl.set_tombstone(lpa, ppa)
            report = self.verify_deletion(lpa, technique)
            if not report.controller_denied and technique in DESTRUCTIVE:
                # destroyed cells happened to equal the old image (e.g. an
                # all-zero page scrubbed); poison the parity so reads still fail
                block, page = self.ftl.split(ppa)
                offset, mask = make_poison_mask(self.layout)
                self.nand.partial_program(block, page, self.nand.geometry.page_data_bytes + offset, mask)
                self.ledger.record("partial_program", block)
                report = self.verify_deletion(lpa, technique)
        delta: dict = {}
        for entry in self.ledger.log[mark:]:
            delta[entry[0]] = delta.get(entry[0], 0) + 1
        delta["latency_us"] = sum(self.ledger.costs.latency(e[0]) for e in self.ledger.log[mark:])
        delta["energy_uj"] = sum(self.ledger.costs.energy(e[0]) for e in self.ledger.log[mark:])
        outcome = DeleteOutcome(lpa, ppa, level, technique, touched, relocated, delta, report)
        self.history.append(outcome)
        return outcome

    def _apply(self, ppa: int, technique: Technique) -> tuple[int, int]:
        if technique is Technique.UNMAP:
            return 0, 0
        if technique is Technique.BLOCK_ERASE:
            return self._block_erase(ppa)
        if technique in (Technique.SCRUB, Technique.OVERWRITE, Technique.DELETION_PULSE, Technique.DOWN_LEVEL):
            return self._page_destroy(ppa, technique), 0
        if technique in (Technique.ECC_MODULATION, Technique.FLAG_LOCK):
            return self._parity(ppa, technique), 0
        if technique is Technique.CRYPTO_ERASE:
            self.ftl.keys.destroy(ppa)
            self.ledger.record("meta")
            return 0, 0
        if technique is Technique.MAP_OUT:
            block, _ = self.ftl.split(ppa)
            moved = self.ftl.map_out_block(block)
            return self.nand.geometry.pages_per_block, moved
        raise ValueError(technique)

    # -- techniques ---------------------------------------------------------

    def _block_erase(self, ppa: int) -> tuple[int, int]:
        block, _ = self.ftl.split(ppa)
        moved = self.ftl.reclaim_block(block)
        return self.nand.geometry.pages_per_block, moved

    def _page_destroy(self, ppa: int, variant: Technique) -> int:
        g = self.nand.geometry
        block, page = self.ftl.split(ppa)
        zeros = bytes(g.page_data_bytes)
        if variant is Technique.DELETION_PULSE:
            self.nand.deletion_pulse(block, page)
            self.ledger.record("pulse", block)
        elif variant is Technique.DOWN_LEVEL:
            self.nand.partial_program(block, page, 0, zeros, disturb=4)
            self.ledger.record("downlevel", block)
        else:
            self.nand.partial_program(block, page, 0, zeros)
            self.ledger.record("partial_program", block)
        # cell-state read-back
        self.nand.read_raw(block, page)
        self.ledger.record("read", block)
        if variant is Technique.OVERWRITE:
            self.nand.partial_program(block, page, 0, bytes(g.page_bytes))
            self.ledger.record("partial_program", block)
            self.nand.read_raw(block, page)
            self.ledger.record("read", block)
        return 1

    def _parity(self, ppa: int, variant: Technique) -> int:
        block, page = self.ftl.split(ppa)
        if variant is Technique.ECC_MODULATION:
            offset, mask = make_poison_mask(self.layout)
        else:
            offset, mask = make_flag_lock_mask(self.layout)
        self.nand.partial_program(block, page, self.nand.geometry.page_data_bytes + offset, mask)
        self.ledger.record("partial_program", block)
        return 1

    # ppa-addressed entry points

    def _lpa_at(self, ppa: int) -> int:
        lpa = int(self.ftl.p2l[ppa])
        if lpa < 0:
            raise ValueError(f"physical page {ppa} holds no valid data")
        return lpa

    def technique_block_erase(self, ppa: int) -> DeleteOutcome:
        return self.secure_delete(self._lpa_at(ppa), technique=Technique.BLOCK_ERASE)

    def technique_page_destroy(self, ppa: int, variant: Technique = Technique.SCRUB) -> DeleteOutcome:
        if Technique(variant) not in LEVEL_FAMILY[PrivacyLevel.PL1]:
            raise ValueError(f"{variant} is not a page-destruction variant")
        return self.secure_delete(self._lpa_at(ppa), technique=variant)

    def technique_parity(self, ppa: int, variant: Technique = Technique.ECC_MODULATION) -> DeleteOutcome:
        if Technique(variant) not in LEVEL_FAMILY[PrivacyLevel.PL2]:
            raise ValueError(f"{variant} is not a parity-management variant")
        return self.secure_delete(self._lpa_at(ppa), technique=variant)

    def technique_crypto_erase(self, ppa: int) -> DeleteOutcome:
        if ppa not in self.ftl.keys:
            raise NotEncrypted(ppa)
        return self.secure_delete(self._lpa_at(ppa), technique=Technique.CRYPTO_ERASE)

    def technique_map_out(self, ppa: int) -> DeleteOutcome:
        return self.secure_delete(self._lpa_at(ppa), technique=Technique.MAP_OUT)

    # -- verification -------------------------------------------------------

    def verify_deletion(self, lpa: int, technique: Technique) -> VerificationReport:
        result = self.ftl.host_read(lpa)
        residual = 1.0 if Technique(technique) in PERSISTENT else 0.0
        return VerificationReport(not result.ok, result.status, residual)
