"""Spare-area integrity codec.

Spare layout (offsets relative to the start of the spare area)::

    0        magic, 0xA5 on a valid page, 0x00 once poisoned
    1..3     three flag copies, 0xFF = valid
    4..7     ~CRC-32(data), little-endian
    8..      per 512-byte sector, a little-endian u16:
               bits 0-12  Hamming parity (codeword positions 1, 2, 4, ... 4096)
               bit  13    overall parity over data + Hamming bits (double-error detect)
               bits 14-15 unused, written as 1
    rest     reserved, 0xFF

Data bit ``i`` of a sector is byte ``i // 8``, bit ``7 - i % 8`` (MSB first) and
sits at the ``i``-th non-power-of-two codeword position starting from 3.
"""

from __future__ import annotations

import enum
import zlib
from dataclasses import dataclass

import numpy as np

from .nand import SECTOR_BYTES, Geometry

MAGIC_VALID = 0xA5
MAGIC_POISONED = 0x00
FLAG_VALID = 0xFF

SECTOR_BITS = SECTOR_BYTES * 8
HAMMING_BITS = 13
_OVERALL_BIT = 1 << HAMMING_BITS
_UNUSED_BITS = 0xC000

_PARITY8 = np.array([bin(i).count("1") & 1 for i in range(256)], dtype=np.uint8)


def _data_positions(n: int) -> np.ndarray:
    out = []
    p = 3
    while len(out) < n:
        if p & (p - 1):
            out.append(p)
        p += 1
    return np.array(out, dtype=np.int64)


_POSITIONS = _data_positions(SECTOR_BITS)
# masks[k] selects the data bits whose codeword position has bit k set
_MASKS = np.packbits(((_POSITIONS[None, :] >> np.arange(HAMMING_BITS)[:, None]) & 1).astype(np.uint8), axis=1)
_SYNDROME_TO_BIT = np.full(1 << HAMMING_BITS, -1, dtype=np.int64)
_SYNDROME_TO_BIT[_POSITIONS] = np.arange(SECTOR_BITS)
_WEIGHTS = (1 << np.arange(HAMMING_BITS)).astype(np.int64)


class Verdict(enum.Enum):
    OK = "Ok"
    LOCKED = "Locked"
    POISONED = "Poisoned"
    UNCORRECTABLE = "Uncorrectable"


@dataclass(frozen=True)
class DecodeOutcome:
    verdict: Verdict
    corrected_bits: int = 0
    data: bytes | None = None

    @property
    def ok(self) -> bool:
        return self.verdict is Verdict.OK


@dataclass(frozen=True)
class SpareLayout:
    sectors: int
    spare_bytes: int
    magic_offset: int = 0
    flag_offset: int = 1
    flag_copies: int = 3
    crc_offset: int = 4
    parity_offset: int = 8

    @classmethod
    def for_geometry(cls, geometry: Geometry) -> "SpareLayout":
        return cls(sectors=geometry.sectors, spare_bytes=geometry.page_spare_bytes)

    @property
    def used_bytes(self) -> int:
        return self.parity_offset + 2 * self.sectors


def crc32(data) -> int:
    return zlib.crc32(bytes(data)) & 0xFFFFFFFF


def _sector_parity(sectors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hamming parity words and data parity for an ``(n, 512)`` uint8 array."""
    folded = np.bitwise_xor.reduce(sectors[:, None, :] & _MASKS[None, :, :], axis=2)
    words = _PARITY8[folded].astype(np.int64) @ _WEIGHTS
    data_parity = _PARITY8[np.bitwise_xor.reduce(sectors, axis=1)].astype(np.int64)
    return words, data_parity


def _popparity(values: np.ndarray) -> np.ndarray:
    v = values.copy()
    out = np.zeros_like(v)
    while v.any():
        out ^= v & 1
        v >>= 1
    return out


def encode_spare(data, layout: SpareLayout) -> bytes:
    arr = np.frombuffer(bytes(data), dtype=np.uint8)
    if arr.size != layout.sectors * SECTOR_BYTES:
        raise ValueError(f"expected {layout.sectors * SECTOR_BYTES} data bytes, got {arr.size}")
    spare = np.full(layout.spare_bytes, 0xFF, dtype=np.uint8)
    spare[layout.magic_offset] = MAGIC_VALID
    crc = (~crc32(arr)) & 0xFFFFFFFF
    spare[layout.crc_offset : layout.crc_offset + 4] = np.frombuffer(crc.to_bytes(4, "little"), dtype=np.uint8)
    words, data_parity = _sector_parity(arr.reshape(layout.sectors, SECTOR_BYTES))
    overall = data_parity ^ _popparity(words)
    stored = (words | (overall << HAMMING_BITS) | _UNUSED_BITS).astype("<u2")
    spare[layout.parity_offset : layout.used_bytes] = stored.view(np.uint8)
    return spare.tobytes()


def flag_majority(spare, layout: SpareLayout | None = None) -> str:
    offset = layout.flag_offset if layout else 1
    copies = bytes(spare)[offset : offset + 3]
    valid = sum(1 for b in copies if b == FLAG_VALID)
    return "valid" if valid >= 2 else "deleted"


def decode_page(data, spare, layout: SpareLayout) -> DecodeOutcome:
    spare = bytes(spare)
    if flag_majority(spare, layout) == "deleted":
        return DecodeOutcome(Verdict.LOCKED)
    magic = spare[layout.magic_offset]
    if magic == MAGIC_POISONED:
        return DecodeOutcome(Verdict.POISONED)
    if magic != MAGIC_VALID:
        return DecodeOutcome(Verdict.UNCORRECTABLE)

    arr = np.frombuffer(bytes(data), dtype=np.uint8).copy()
    if arr.size != layout.sectors * SECTOR_BYTES:
        raise ValueError(f"expected {layout.sectors * SECTOR_BYTES} data bytes, got {arr.size}")
    sectors = arr.reshape(layout.sectors, SECTOR_BYTES)
    stored = np.frombuffer(spare[layout.parity_offset : layout.used_bytes], dtype="<u2").astype(np.int64)
    stored_words = stored & (_OVERALL_BIT - 1)
    stored_overall = (stored >> HAMMING_BITS) & 1
    words, data_parity = _sector_parity(sectors)
    syndrome = words ^ stored_words
    overall = data_parity ^ _popparity(stored_words) ^ stored_overall

    corrected = 0
    for s in range(layout.sectors):
        syn, odd = int(syndrome[s]), int(overall[s])
        if not odd:
            if syn:
                return DecodeOutcome(Verdict.UNCORRECTABLE)
            continue
        corrected += 1
        if syn == 0 or syn & (syn - 1) == 0:
            # the flipped bit is the overall or a Hamming parity bit; data is intact
            continue
        bit = int(_SYNDROME_TO_BIT[syn])
        if bit < 0:
            return DecodeOutcome(Verdict.UNCORRECTABLE)
        sectors[s, bit // 8] ^= 0x80 >> (bit % 8)

    stored_crc = int.from_bytes(spare[layout.crc_offset : layout.crc_offset + 4], "little")
    if crc32(arr) != (~stored_crc) & 0xFFFFFFFF:
        return DecodeOutcome(Verdict.UNCORRECTABLE)
    return DecodeOutcome(Verdict.OK, corrected, arr.tobytes())


def make_poison_mask(layout: SpareLayout) -> tuple[int, bytes]:
    """Region that zeroes magic, CRC and parity while leaving the flag copies alone.

    The returned offset is relative to the spare area. Flag bytes are 0xFF in
    the mask so the AND-only program leaves them untouched.
    """
    mask = bytearray(layout.used_bytes)
    for i in range(layout.flag_copies):
        mask[layout.flag_offset + i] = 0xFF
    return layout.magic_offset, bytes(mask)


def make_flag_lock_mask(layout: SpareLayout) -> tuple[int, bytes]:
    return layout.flag_offset, bytes(layout.flag_copies)
