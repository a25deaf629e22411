"""Binary snapshot of device state.

All integers little-endian::

    "APSD"                      4 bytes
    version                     u16 (= 1)
    geometry                    6 x u32: blocks, pages_per_block, page_data_bytes,
                                page_spare_bytes, erase_limit, partial_program_limit
    map-out bitmap              ceil(blocks / 8) bytes, block i = bit (i % 8) of byte i // 8
    erase counts                u32 per block
    pages, block-major          u8 full_programs, u8 partial_programs, u16 disturb,
                                data bytes, spare bytes
    mapping                     u32 count, then (u32 lpa, u32 block, u32 page), ascending lpa
    key store                   u32 count, then (u64 ppa, 16 key bytes), ascending ppa
    CRC-32 of everything above  u32

The disturb threshold and RNG seed are run parameters, not state, and come
from the caller on load.
"""

from __future__ import annotations

import os
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import CorruptSnapshot
from .nand import Geometry, NandArray
from .simulator import Simulator

MAGIC = b"APSD"
VERSION = 1
_HEADER = struct.Struct("<4sH6I")


def snapshot_bytes(sim: Simulator) -> bytes:
    nand, ftl = sim.nand, sim.ftl
    g = nand.geometry
    parts = [
        _HEADER.pack(
            MAGIC, VERSION, g.blocks, g.pages_per_block, g.page_data_bytes, g.page_spare_bytes, g.erase_limit, g.partial_program_limit
        ),
        np.packbits(nand.mapped_out.astype(np.uint8), bitorder="little").tobytes(),
        nand.erase_count.astype("<u4").tobytes(),
    ]
    n = g.total_pages
    rec = np.empty((n, 4 + g.page_bytes), dtype=np.uint8)
    rec[:, 0] = nand.full_programs.reshape(n)
    rec[:, 1] = nand.partial_programs.reshape(n)
    rec[:, 2:4] = nand.disturb.reshape(n).astype("<u2").view(np.uint8).reshape(n, 2)
    rec[:, 4 : 4 + g.page_data_bytes] = nand.data.reshape(n, g.page_data_bytes)
    rec[:, 4 + g.page_data_bytes :] = nand.spare.reshape(n, g.page_spare_bytes)
    parts.append(rec.tobytes())

    mapping = sorted(ftl.l2p.items())
    parts.append(struct.pack("<I", len(mapping)))
    parts.append(b"".join(struct.pack("<III", lpa, *ftl.split(ppa)) for lpa, ppa in mapping))
    keys = sorted(ftl.keys.keys.items())
    parts.append(struct.pack("<I", len(keys)))
    parts.append(b"".join(struct.pack("<Q", ppa) + key for ppa, key in keys))
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def save_snapshot(sim: Simulator, path) -> int:
    blob = snapshot_bytes(sim)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)
    return len(blob)


@dataclass(frozen=True)
class SnapshotInfo:
    version: int
    geometry: tuple
    mapped_out: int
    mappings: int
    keys: int
    size: int


class _Reader:
    def __init__(self, blob: bytes):
        self.blob, self.pos = blob, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CorruptSnapshot("truncated snapshot")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))


def _verify(blob: bytes) -> None:
    if len(blob) < _HEADER.size + 4:
        raise CorruptSnapshot("truncated snapshot")
    (stored,) = struct.unpack("<I", blob[-4:])
    if zlib.crc32(blob[:-4]) & 0xFFFFFFFF != stored:
        raise CorruptSnapshot("CRC mismatch")
    magic, version = struct.unpack("<4sH", blob[:6])
    if magic != MAGIC:
        raise CorruptSnapshot(f"bad magic {magic!r}")
    if version != VERSION:
        raise CorruptSnapshot(f"unsupported version {version}")


def parse_snapshot(blob: bytes, *, seed: int = 0, disturb_threshold: int | None = None, **sim_kwargs) -> Simulator:
    _verify(blob)
    r = _Reader(blob[:-4])
    _, _, blocks, ppb, data_bytes, spare_bytes, erase_limit, pp_limit = r.unpack(_HEADER.format)
    extra = {"disturb_threshold": disturb_threshold} if disturb_threshold is not None else {}
    try:
        g = Geometry(blocks, ppb, data_bytes, spare_bytes, erase_limit, pp_limit, **extra)
    except ValueError as exc:
        raise CorruptSnapshot(f"bad geometry: {exc}") from None
    nand = NandArray(g, seed)
    bitmap = np.frombuffer(r.take((blocks + 7) // 8), dtype=np.uint8)
    nand.mapped_out[:] = np.unpackbits(bitmap, bitorder="little")[:blocks].astype(bool)
    nand.erase_count[:] = np.frombuffer(r.take(4 * blocks), dtype="<u4")
    n = g.total_pages
    rec = np.frombuffer(r.take(n * (4 + g.page_bytes)), dtype=np.uint8).reshape(n, 4 + g.page_bytes)
    shape = (blocks, ppb)
    nand.full_programs[:] = rec[:, 0].reshape(shape)
    nand.partial_programs[:] = rec[:, 1].reshape(shape)
    nand.disturb[:] = rec[:, 2:4].copy().view("<u2").reshape(shape)
    nand.data[:] = rec[:, 4 : 4 + data_bytes].reshape(shape + (data_bytes,))
    nand.spare[:] = rec[:, 4 + data_bytes :].reshape(shape + (spare_bytes,))

    (count,) = r.unpack("<I")
    mapping = {}
    for _ in range(count):
        lpa, block, page = r.unpack("<III")
        if block >= blocks or page >= ppb:
            raise CorruptSnapshot(f"mapping for lpa {lpa} points outside the array")
        mapping[lpa] = block * ppb + page
    (count,) = r.unpack("<I")
    keys = {}
    for _ in range(count):
        (ppa,) = r.unpack("<Q")
        keys[ppa] = r.take(16)
    if r.pos != len(r.blob):
        raise CorruptSnapshot("trailing bytes after key store")

    sim = Simulator(nand=nand, seed=seed, track_reference=False, **sim_kwargs)
    sim.ftl.restore(mapping, keys)
    return sim


def load_snapshot(path, **kwargs) -> Simulator:
    with open(path, "rb") as fh:
        return parse_snapshot(fh.read(), **kwargs)


def snapshot_info(path) -> SnapshotInfo:
    with open(path, "rb") as fh:
        blob = fh.read()
    _verify(blob)
    _, version, *geo = _HEADER.unpack_from(blob)
    blocks, ppb, data_bytes, spare_bytes = geo[:4]
    pos = _HEADER.size
    bitmap = np.frombuffer(blob[pos : pos + (blocks + 7) // 8], dtype=np.uint8)
    mapped_out = int(np.unpackbits(bitmap, bitorder="little")[:blocks].sum())
    pos += (blocks + 7) // 8 + 4 * blocks + blocks * ppb * (4 + data_bytes + spare_bytes)
    (mappings,) = struct.unpack_from("<I", blob, pos)
    pos += 4 + 12 * mappings
    (keys,) = struct.unpack_from("<I", blob, pos)
    return SnapshotInfo(version, tuple(geo), mapped_out, mappings, keys, len(blob))
