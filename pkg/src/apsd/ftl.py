"""Page-mapped flash translation layer.

Writes are out-of-place: a rewrite programs a fresh page and only flips the
old page's validity bit, so superseded bytes stay in the cells until garbage
collection erases their block.

Encrypted writes XOR the page with a keystream derived from a 128-bit per-page
key.  Keystream byte ``i`` is byte ``i % 64`` of
``blake2b(le64(i // 64), key=page_key, digest_size=64, person=b"apsd-keystream")``.
Page keys are ``blake2b(le64(seed) || le64(ppa) || le32(block erase count),
digest_size=16, person=b"apsd-pagekey")``.
"""

from __future__ import annotations

import enum
import hashlib
import math
import struct
from dataclasses import dataclass

import numpy as np

from .codec import SpareLayout, Verdict, decode_page, encode_spare
from .errors import AlreadyMappedOut, DeviceFull, Unmapped
from .metrics import MetricsLedger
from .nand import NandArray

DEFAULT_OP_RATIO = 0.07


class ReadStatus(enum.Enum):
    OK = "Ok"
    UNMAPPED = "Unmapped"
    LOCKED = "Locked"
    POISONED = "Poisoned"
    UNCORRECTABLE = "Uncorrectable"
    MAPPED_OUT = "MappedOut"


_FROM_VERDICT = {
    Verdict.OK: ReadStatus.OK,
    Verdict.LOCKED: ReadStatus.LOCKED,
    Verdict.POISONED: ReadStatus.POISONED,
    Verdict.UNCORRECTABLE: ReadStatus.UNCORRECTABLE,
}


@dataclass(frozen=True)
class ReadResult:
    status: ReadStatus
    data: bytes | None = None
    corrected_bits: int = 0

    @property
    def ok(self) -> bool:
        return self.status is ReadStatus.OK


def keystream(key: bytes, length: int) -> bytes:
    chunks = []
    for counter in range(math.ceil(length / 64)):
        chunks.append(
            hashlib.blake2b(struct.pack("<Q", counter), key=key, digest_size=64, person=b"apsd-keystream").digest()
        )
    return b"".join(chunks)[:length]


def xor_bytes(a: bytes, b: bytes) -> bytes:
    return (np.frombuffer(a, dtype=np.uint8) ^ np.frombuffer(b, dtype=np.uint8)).tobytes()


class KeyStore:
    """ppa -> 128-bit crypto-erase key. Destroyed keys are gone for the rest of the run."""

    def __init__(self, seed: int):
        self.seed = seed
        self.keys: dict[int, bytes] = {}

    def derive(self, ppa: int, epoch: int) -> bytes:
        return hashlib.blake2b(
            struct.pack("<QQI", self.seed, ppa, epoch), digest_size=16, person=b"apsd-pagekey"
        ).digest()

    def __contains__(self, ppa) -> bool:
        return ppa in self.keys

    def __len__(self) -> int:
        return len(self.keys)

    def get(self, ppa):
        return self.keys.get(ppa)

    def put(self, ppa: int, key: bytes) -> None:
        self.keys[ppa] = key

    def destroy(self, ppa: int) -> bytes:
        return self.keys.pop(ppa)

    def move(self, src: int, dst: int) -> None:
        if src in self.keys:
            self.keys[dst] = self.keys.pop(src)


class FlashTranslationLayer:
    def __init__(
        self,
        nand: NandArray,
        ledger: MetricsLedger | None = None,
        op_ratio: float = DEFAULT_OP_RATIO,
        gc_reserve_pages: int | None = None,
        reference=None,
    ):
        if not 0.0 <= op_ratio < 1.0:
            raise ValueError(f"op_ratio must be in [0, 1), got {op_ratio}")
        self.nand = nand
        self.geometry = g = nand.geometry
        self.layout = SpareLayout.for_geometry(g)
        self.ledger = ledger if ledger is not None else MetricsLedger()
        self.op_ratio = op_ratio
        self.gc_reserve_pages = gc_reserve_pages if gc_reserve_pages is not None else 2 * g.pages_per_block
        # ReferenceStore-like observer: on_write(lpa, plaintext, stored, ppa, epoch), on_relocate(lpa, ppa, epoch)
        self.reference = reference

        self.l2p: dict[int, int] = {}
        self.p2l = np.full(g.total_pages, -1, dtype=np.int64)
        self.valid_count = np.zeros(g.blocks, dtype=np.int64)
        self.cursor = np.zeros(g.blocks, dtype=np.int64)
        self.active: int | None = None
        self.reclaiming: set[int] = set()
        self.keys = KeyStore(nand.seed)
        self.encrypted: set[int] = set()
        # lpa -> ppa for pages deleted in place; host reads of a deleted lpa are
        # served from here so they report the page's denial verdict until the
        # block is erased or the lpa is rewritten
        self.tombstones: dict[int, int] = {}
        self._tomb_owner: dict[int, int] = {}

    # -- addressing ---------------------------------------------------------

    def ppa(self, block: int, page: int) -> int:
        return block * self.geometry.pages_per_block + page

    def split(self, ppa: int) -> tuple[int, int]:
        return divmod(int(ppa), self.geometry.pages_per_block)

    @property
    def mapped_out_blocks(self) -> set[int]:
        return {int(b) for b in np.flatnonzero(self.nand.mapped_out)}

    @property
    def logical_capacity(self) -> int:
        usable = int((~self.nand.mapped_out).sum()) * self.geometry.pages_per_block
        return int(usable * (1.0 - self.op_ratio))

    def is_valid(self, ppa: int) -> bool:
        return self.p2l[ppa] >= 0

    def free_pages(self) -> int:
        ppb = self.geometry.pages_per_block
        free = ppb * sum(1 for _ in self._free_blocks())
        if self.active is not None:
            free += ppb - int(self.cursor[self.active])
        return free

    def _free_blocks(self):
        for b in np.flatnonzero((self.cursor == 0) & ~self.nand.mapped_out):
            b = int(b)
            if b != self.active and b not in self.reclaiming:
                yield b

    # -- allocation ---------------------------------------------------------

    def _allocate(self) -> int:
        ppb = self.geometry.pages_per_block
        if self.active is None or self.cursor[self.active] >= ppb:
            candidates = list(self._free_blocks())
            if not candidates:
                self.active = None
                raise DeviceFull("no free page available")
            self.active = min(candidates, key=lambda b: (int(self.nand.erase_count[b]), b))
        block = self.active
        page = int(self.cursor[block])
        self.cursor[block] += 1
        if self.cursor[block] >= ppb:
            self.active = None
        return self.ppa(block, page)

    def _close_if_active(self, block: int) -> None:
        if self.active == block:
            self.active = None

    def _map(self, lpa: int, ppa: int) -> None:
        self.l2p[lpa] = ppa
        self.p2l[ppa] = lpa
        self.valid_count[ppa // self.geometry.pages_per_block] += 1

    def _invalidate(self, ppa: int) -> None:
        if self.p2l[ppa] >= 0:
            self.p2l[ppa] = -1
            self.valid_count[ppa // self.geometry.pages_per_block] -= 1

    def _program(self, ppa: int, stored: bytes) -> None:
        block, page = self.split(ppa)
        self.nand.program_page(block, page, stored, encode_spare(stored, self.layout))
        self.ledger.record("program", block)

    # -- host interface -----------------------------------------------------

    def host_write(self, lpa: int, data, encrypted: bool = False) -> int:
        g = self.geometry
        data = bytes(data)
        if len(data) != g.page_data_bytes:
            raise ValueError(f"expected {g.page_data_bytes} bytes, got {len(data)}")
        if not 0 <= lpa < self.logical_capacity:
            raise ValueError(f"lpa {lpa} outside logical capacity {self.logical_capacity}")
        if self.free_pages() < self.gc_reserve_pages:
            self.garbage_collect(self.gc_reserve_pages)
        ppa = self._allocate()
        block = ppa // g.pages_per_block
        stored = data
        if encrypted:
            key = self.keys.derive(ppa, int(self.nand.erase_count[block]))
            stored = xor_bytes(data, keystream(key, len(data)))
        self._program(ppa, stored)
        if encrypted:
            self.keys.put(ppa, key)
            self.encrypted.add(ppa)
        old = self.l2p.pop(lpa, None)
        if old is not None:
            self._invalidate(old)
        self._drop_tombstone(lpa)
        self._map(lpa, ppa)
        self.ledger.record_host_write()
        if self.reference is not None:
            self.reference.on_write(lpa, data, stored, ppa, int(self.nand.erase_count[block]))
        return ppa

    def read_physical(self, ppa: int, charge: bool = True) -> ReadResult:
        """Controller read of one physical page, before any decryption."""
        block, page = self.split(ppa)
        if self.nand.mapped_out[block]:
            return ReadResult(ReadStatus.MAPPED_OUT)
        data, spare = self.nand.read_raw(block, page)
        if charge:
            self.ledger.record("read", block)
        outcome = decode_page(data, spare, self.layout)
        return ReadResult(_FROM_VERDICT[outcome.verdict], outcome.data, outcome.corrected_bits)

    def host_read(self, lpa: int, charge: bool = True) -> ReadResult:
        ppa = self.l2p.get(lpa)
        if ppa is None:
            ppa = self.tombstones.get(lpa)
            if ppa is None:
                return ReadResult(ReadStatus.UNMAPPED)
        result = self.read_physical(ppa, charge)
        if not result.ok or ppa not in self.encrypted:
            return result
        key = self.keys.get(ppa)
        if key is None:
            return ReadResult(ReadStatus.UNCORRECTABLE)
        return ReadResult(ReadStatus.OK, xor_bytes(result.data, keystream(key, len(result.data))), result.corrected_bits)

    def trim_unmap(self, lpa: int) -> int:
        ppa = self.l2p.pop(lpa, None)
        if ppa is None:
            raise Unmapped(lpa)
        self._invalidate(ppa)
        self.ledger.record("meta")
        return ppa

    # -- tombstones ---------------------------------------------------------

    def set_tombstone(self, lpa: int, ppa: int) -> None:
        self.tombstones[lpa] = ppa
        self._tomb_owner[ppa] = lpa

    def _drop_tombstone(self, lpa: int) -> None:
        ppa = self.tombstones.pop(lpa, None)
        if ppa is not None:
            self._tomb_owner.pop(ppa, None)

    # -- reclamation --------------------------------------------------------

    def relocate_valid(self, block: int, skip: frozenset = frozenset()) -> int:
        """Move every valid page of ``block`` (except ``skip``) through the write path."""
        ppb = self.geometry.pages_per_block
        moved = 0
        for page in range(ppb):
            src = self.ppa(block, page)
            lpa = int(self.p2l[src])
            if lpa < 0 or src in skip:
                continue
            result = self.read_physical(src)
            if result.ok:
                stored = result.data
            else:
                stored, _ = self.nand.read_raw(block, page)
            dst = self._allocate()
            self._program(dst, stored)
            self._invalidate(src)
            self._map(lpa, dst)
            self.keys.move(src, dst)
            if src in self.encrypted:
                self.encrypted.discard(src)
                self.encrypted.add(dst)
            self.ledger.record_relocation()
            if self.reference is not None:
                dblock = dst // ppb
                self.reference.on_relocate(lpa, dst, int(self.nand.erase_count[dblock]))
            moved += 1
        return moved

    def erase(self, block: int) -> None:
        ppb = self.geometry.pages_per_block
        if self.valid_count[block]:
            raise RuntimeError(f"block {block} still holds {self.valid_count[block]} valid pages")
        self.nand.erase_block(block)
        self.ledger.record("erase", block)
        self.cursor[block] = 0
        for ppa in range(block * ppb, (block + 1) * ppb):
            self.keys.keys.pop(ppa, None)
            self.encrypted.discard(ppa)
            lpa = self._tomb_owner.pop(ppa, None)
            if lpa is not None:
                self.tombstones.pop(lpa, None)

    def reclaim_block(self, block: int, skip: frozenset = frozenset()) -> int:
        """Relocate live pages then erase; pages in ``skip`` must already be unmapped."""
        self._close_if_active(block)
        self.reclaiming.add(block)
        try:
            moved = self.relocate_valid(block, skip)
            self.erase(block)
        finally:
            self.reclaiming.discard(block)
        return moved

    def garbage_collect(self, min_free_pages: int) -> int:
        ppb = self.geometry.pages_per_block
        limit = self.geometry.erase_limit
        relocated = 0
        while self.free_pages() < min_free_pages:
            candidates = [
                int(b)
                for b in np.flatnonzero((self.cursor > 0) & ~self.nand.mapped_out)
                if int(b) != self.active and int(b) not in self.reclaiming and self.nand.erase_count[b] < limit
            ]
            if not candidates:
                break
            victim = min(candidates, key=lambda b: (int(self.valid_count[b]), int(self.nand.erase_count[b]), b))
            valid = int(self.valid_count[victim])
            if valid >= ppb or valid > self.free_pages():
                break
            relocated += self.reclaim_block(victim)
        return relocated

    def map_out_block(self, block: int) -> int:
        if self.nand.mapped_out[block]:
            raise AlreadyMappedOut(block)
        self._close_if_active(block)
        self.reclaiming.add(block)
        try:
            moved = self.relocate_valid(block)
        finally:
            self.reclaiming.discard(block)
        self.nand.map_out(block)
        self.ledger.record("meta")
        return moved

    # -- audit --------------------------------------------------------------

    def audit(self) -> None:
        """Full-scan consistency check; raises AssertionError on any violation."""
        ppb = self.geometry.pages_per_block
        for lpa, ppa in self.l2p.items():
            assert self.p2l[ppa] == lpa, f"reverse map disagrees for lpa {lpa}"
            assert not self.nand.mapped_out[ppa // ppb], f"lpa {lpa} maps into a mapped-out block"
        valid = np.flatnonzero(self.p2l >= 0)
        assert len(valid) == len(self.l2p), "validity bits do not match forward map size"
        for ppa in valid:
            assert self.l2p.get(int(self.p2l[ppa])) == ppa, f"stale reverse entry at ppa {ppa}"
        counts = np.bincount(valid // ppb, minlength=self.geometry.blocks)
        assert np.array_equal(counts, self.valid_count), "per-block valid counts drifted"
        assert ((self.cursor >= 0) & (self.cursor <= ppb)).all()
        programmed = self.nand.full_programs.astype(bool)
        for b in range(self.geometry.blocks):
            c = int(self.cursor[b])
            assert programmed[b, :c].all() and not programmed[b, c:].any(), f"block {b} not programmed in order"
        for lpa, ppa in self.tombstones.items():
            assert lpa not in self.l2p and self._tomb_owner.get(ppa) == lpa
        if self.active is not None:
            assert not self.nand.mapped_out[self.active]

    # -- state restore ------------------------------------------------------

    def restore(self, mapping: dict[int, int], keys: dict[int, bytes]) -> None:
        """Rebuild controller state from a persisted mapping and key store."""
        ppb = self.geometry.pages_per_block
        programmed = self.nand.full_programs.astype(bool)
        for b in range(self.geometry.blocks):
            idx = np.flatnonzero(programmed[b])
            self.cursor[b] = int(idx[-1]) + 1 if idx.size else 0
        for lpa, ppa in sorted(mapping.items()):
            self._map(lpa, ppa)
        for ppa, key in keys.items():
            self.keys.put(ppa, key)
            self.encrypted.add(ppa)
        partial = [b for b in range(self.geometry.blocks) if 0 < self.cursor[b] < ppb and not self.nand.mapped_out[b]]
        self.active = partial[0] if partial else None
