"""Bit-accurate NAND flash array.

Cells only ever lose charge through programming (``old & new``); the only ways
back to ``0xFF`` are a block erase or a single-page deletion pulse.  Program
disturb is a deterministic counter: every time a page's counter crosses a
multiple of ``disturb_threshold`` one of its remaining 1-bits is cleared, the
bit chosen by hashing ``(seed, block, page, crossing index)``.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .errors import AlreadyProgrammed, LimitExceeded, MappedOut, WornOut

SECTOR_BYTES = 512


@dataclass(frozen=True)
class Geometry:
    blocks: int = 256
    pages_per_block: int = 64
    page_data_bytes: int = 2048
    page_spare_bytes: int = 64
    erase_limit: int = 3000
    partial_program_limit: int = 8
    disturb_threshold: int = 64

    def __post_init__(self):
        for name in (
            "blocks",
            "pages_per_block",
            "page_data_bytes",
            "page_spare_bytes",
            "erase_limit",
            "partial_program_limit",
            "disturb_threshold",
        ):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ValueError(f"geometry.{name} must be an integer >= 1, got {value!r}")
        if self.page_data_bytes % SECTOR_BYTES:
            raise ValueError(
                f"page_data_bytes must be a multiple of {SECTOR_BYTES}, got {self.page_data_bytes}"
            )
        # magic + 3 flags + crc32 + 2 parity bytes per sector
        need = 8 + 2 * self.sectors
        if need > self.page_spare_bytes:
            raise ValueError(
                f"page_spare_bytes={self.page_spare_bytes} cannot hold the spare layout ({need} bytes)"
            )

    @property
    def sectors(self) -> int:
        return self.page_data_bytes // SECTOR_BYTES

    @property
    def page_bytes(self) -> int:
        return self.page_data_bytes + self.page_spare_bytes

    @property
    def total_pages(self) -> int:
        return self.blocks * self.pages_per_block


class NandArray:
    """Raw cell state for every page of every block.

    Storage is a handful of dense numpy arrays so whole-device dumps and
    snapshots are cheap copies.
    """

    def __init__(self, geometry: Geometry | None = None, seed: int = 0):
        self.geometry = geometry or Geometry()
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        g = self.geometry
        shape = (g.blocks, g.pages_per_block)
        self.data = np.full(shape + (g.page_data_bytes,), 0xFF, dtype=np.uint8)
        self.spare = np.full(shape + (g.page_spare_bytes,), 0xFF, dtype=np.uint8)
        self.full_programs = np.zeros(shape, dtype=np.uint8)
        self.partial_programs = np.zeros(shape, dtype=np.uint8)
        self.disturb = np.zeros(shape, dtype=np.uint16)
        self.erase_count = np.zeros(g.blocks, dtype=np.uint32)
        self.mapped_out = np.zeros(g.blocks, dtype=bool)
        # bit flips injected by disturb, for inspection; not part of persisted state
        self.injected_flips: list[tuple[int, int, int]] = []

    # -- checks -------------------------------------------------------------

    def _check(self, block: int, page: int | None = None) -> None:
        g = self.geometry
        if not 0 <= block < g.blocks:
            raise IndexError(f"block {block} out of range")
        if page is not None and not 0 <= page < g.pages_per_block:
            raise IndexError(f"page {page} out of range")

    def _check_controller(self, block: int, page: int | None = None) -> None:
        self._check(block, page)
        if self.mapped_out[block]:
            raise MappedOut(block)

    # -- operations ---------------------------------------------------------

    def erase_block(self, block: int) -> None:
        self._check_controller(block)
        if self.erase_count[block] >= self.geometry.erase_limit:
            raise WornOut(block)
        self.data[block] = 0xFF
        self.spare[block] = 0xFF
        self.full_programs[block] = 0
        self.partial_programs[block] = 0
        self.disturb[block] = 0
        self.erase_count[block] += 1

    def program_page(self, block: int, page: int, data, spare) -> None:
        self._check_controller(block, page)
        g = self.geometry
        data = np.frombuffer(bytes(data), dtype=np.uint8)
        spare = np.frombuffer(bytes(spare), dtype=np.uint8)
        if data.size != g.page_data_bytes or spare.size != g.page_spare_bytes:
            raise ValueError("data/spare length does not match geometry")
        if self.full_programs[block, page]:
            raise AlreadyProgrammed(block, page)
        np.bitwise_and(self.data[block, page], data, out=self.data[block, page])
        np.bitwise_and(self.spare[block, page], spare, out=self.spare[block, page])
        self.full_programs[block, page] = 1
        self._disturb_neighbors(block, page, 1)

    def partial_program(self, block: int, page: int, offset: int, payload, disturb: int = 1) -> None:
        """AND ``payload`` into the page extent (data followed by spare) at ``offset``."""
        self._check_controller(block, page)
        g = self.geometry
        payload = np.frombuffer(bytes(payload), dtype=np.uint8)
        end = offset + payload.size
        if offset < 0 or end > g.page_bytes:
            raise ValueError(f"region [{offset}, {end}) outside page extent of {g.page_bytes} bytes")
        if self.partial_programs[block, page] >= g.partial_program_limit:
            raise LimitExceeded(block, page)
        split = g.page_data_bytes
        if offset < split:
            n = min(end, split) - offset
            region = self.data[block, page, offset : offset + n]
            np.bitwise_and(region, payload[:n], out=region)
        if end > split:
            start = max(offset, split)
            region = self.spare[block, page, start - split : end - split]
            np.bitwise_and(region, payload[start - offset :], out=region)
        self.partial_programs[block, page] += 1
        self._disturb_neighbors(block, page, disturb)

    def deletion_pulse(self, block: int, page: int, disturb: int = 4) -> None:
        self._check_controller(block, page)
        self.data[block, page] = 0xFF
        self._disturb_neighbors(block, page, disturb)

    def read_raw(self, block: int, page: int) -> tuple[bytes, bytes]:
        # chip-level path: mapped-out blocks stay readable
        self._check(block, page)
        return self.data[block, page].tobytes(), self.spare[block, page].tobytes()

    def map_out(self, block: int) -> None:
        self._check(block)
        self.mapped_out[block] = True

    # -- disturb ------------------------------------------------------------

    def _disturb_neighbors(self, block: int, page: int, amount: int) -> None:
        for nb in (page - 1, page + 1):
            if 0 <= nb < self.geometry.pages_per_block:
                self._add_disturb(block, nb, amount)

    def _add_disturb(self, block: int, page: int, amount: int) -> None:
        t = self.geometry.disturb_threshold
        before = int(self.disturb[block, page])
        after = min(before + amount, 0xFFFF)
        self.disturb[block, page] = after
        for crossing in range(before // t + 1, after // t + 1):
            self._inject_flip(block, page, crossing)

    def _inject_flip(self, block: int, page: int, crossing: int) -> None:
        cells = self.data[block, page]
        bits = np.unpackbits(cells)
        ones = np.flatnonzero(bits)
        if ones.size == 0:
            return
        digest = hashlib.blake2b(
            struct.pack("<QIII", self.seed, block, page, crossing),
            digest_size=8,
            person=b"apsd-disturb",
        ).digest()
        bit = int(ones[int.from_bytes(digest, "little") % ones.size])
        cells[bit // 8] &= ~np.uint8(0x80 >> (bit % 8))
        self.injected_flips.append((block, page, bit))

    # -- bulk views ---------------------------------------------------------

    def copy(self) -> "NandArray":
        other = NandArray.__new__(NandArray)
        other.geometry = self.geometry
        other.seed = self.seed
        for name in ("data", "spare", "full_programs", "partial_programs", "disturb", "erase_count", "mapped_out"):
            setattr(other, name, getattr(self, name).copy())
        other.injected_flips = list(self.injected_flips)
        return other

    def state_equal(self, other: "NandArray") -> bool:
        return self.geometry == other.geometry and all(
            np.array_equal(getattr(self, n), getattr(other, n))
            for n in ("data", "spare", "full_programs", "partial_programs", "disturb", "erase_count", "mapped_out")
        )
