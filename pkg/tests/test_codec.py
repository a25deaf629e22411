import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apsd.codec import (
    SpareLayout,
    Verdict,
    crc32,
    decode_page,
    encode_spare,
    flag_majority,
    make_flag_lock_mask,
    make_poison_mask,
)
from apsd.nand import Geometry

from oracles import crc32_bitwise, majority_truth_table

LAYOUT = SpareLayout.for_geometry(Geometry())


def _and(spare: bytes, offset: int, mask: bytes) -> bytes:
    out = bytearray(spare)
    for i, m in enumerate(mask):
        out[offset + i] &= m
    return bytes(out)


def rand_page(rng, n=2048):
    return bytes(rng.getrandbits(8) for _ in range(n))


def test_layout_fits_default_spare():
    assert LAYOUT.used_bytes == 16 <= 64


def test_roundtrip_zero_page():
    data = bytes(2048)
    out = decode_page(data, encode_spare(data, LAYOUT), LAYOUT)
    assert out.verdict is Verdict.OK and out.corrected_bits == 0 and out.data == data


def test_layout_fields():
    spare = encode_spare(b"\xff" * 2048, LAYOUT)
    assert spare[0] == 0xA5
    assert spare[1:4] == b"\xff\xff\xff"
    assert spare[16:] == b"\xff" * 48
    for s in range(4):
        word = int.from_bytes(spare[8 + 2 * s : 10 + 2 * s], "little")
        assert word & 0xC000 == 0xC000


@pytest.mark.parametrize("seed", range(5))
def test_crc_field_is_complement_of_independent_crc(seed):
    data = rand_page(random.Random(seed))
    spare = encode_spare(data, LAYOUT)
    assert crc32(data) == crc32_bitwise(data)
    assert int.from_bytes(spare[4:8], "little") == crc32_bitwise(data) ^ 0xFFFFFFFF


def test_exhaustive_single_bit_correction_sector0():
    data = rand_page(random.Random(1))
    spare = encode_spare(data, LAYOUT)
    for bit in range(4096):
        bad = bytearray(data)
        bad[bit // 8] ^= 0x80 >> (bit % 8)
        out = decode_page(bytes(bad), spare, LAYOUT)
        assert out.verdict is Verdict.OK and out.corrected_bits == 1 and out.data == data, bit


def test_single_bit_in_parity_field_is_absorbed():
    data = rand_page(random.Random(2))
    spare = encode_spare(data, LAYOUT)
    for bit in range(16):
        bad = bytearray(spare)
        bad[8 + bit // 8] ^= 1 << (bit % 8)
        out = decode_page(data, bytes(bad), LAYOUT)
        assert out.verdict is Verdict.OK and out.data == data
        assert out.corrected_bits == (0 if bit >= 14 else 1)


def test_one_error_per_sector_all_corrected():
    rng = random.Random(3)
    data = rand_page(rng)
    spare = encode_spare(data, LAYOUT)
    bad = bytearray(data)
    for s in range(4):
        bit = rng.randrange(4096)
        bad[s * 512 + bit // 8] ^= 0x80 >> (bit % 8)
    out = decode_page(bytes(bad), spare, LAYOUT)
    assert out.verdict is Verdict.OK and out.corrected_bits == 4 and out.data == data


def test_double_errors_never_miscorrect():
    rng = random.Random(4)
    data = rand_page(rng)
    spare = encode_spare(data, LAYOUT)
    for _ in range(2000):
        a, b = rng.sample(range(4096), 2)
        bad = bytearray(data)
        for bit in (a, b):
            bad[bit // 8] ^= 0x80 >> (bit % 8)
        out = decode_page(bytes(bad), spare, LAYOUT)
        assert out.verdict is Verdict.UNCORRECTABLE or out.data == data


@settings(max_examples=50, deadline=None)
@given(st.binary(min_size=2048, max_size=2048))
def test_roundtrip_property(data):
    out = decode_page(data, encode_spare(data, LAYOUT), LAYOUT)
    assert out.verdict is Verdict.OK and out.corrected_bits == 0 and out.data == data


@settings(max_examples=50, deadline=None)
@given(st.binary(min_size=2048, max_size=2048), st.binary(min_size=64, max_size=64))
def test_poison_total_over_any_prior_spare(data, prior):
    # flags kept valid so lock precedence does not mask the poison verdict
    prior = prior[:1] + b"\xff\xff\xff" + prior[4:]
    offset, mask = make_poison_mask(LAYOUT)
    assert decode_page(data, _and(prior, offset, mask), LAYOUT).verdict is Verdict.POISONED


def test_poison_on_random_pages():
    rng = random.Random(5)
    offset, mask = make_poison_mask(LAYOUT)
    for _ in range(1000):
        data = rand_page(rng)
        spare = _and(encode_spare(data, LAYOUT), offset, mask)
        assert decode_page(data, spare, LAYOUT).verdict is Verdict.POISONED


def test_poison_mask_shape():
    offset, mask = make_poison_mask(LAYOUT)
    spare = encode_spare(bytes(2048), LAYOUT)
    once = _and(spare, offset, mask)
    assert _and(once, offset, mask) == once
    assert once[1:4] == spare[1:4]
    assert once[0] == 0 and once[4:16] == bytes(12)
    assert once[16:] == spare[16:]


def test_flag_lock():
    data = rand_page(random.Random(6))
    spare = encode_spare(data, LAYOUT)
    offset, mask = make_flag_lock_mask(LAYOUT)
    assert (offset, mask) == (1, b"\x00\x00\x00")
    locked = _and(spare, offset, mask)
    assert decode_page(data, locked, LAYOUT).verdict is Verdict.LOCKED
    # one copy restored to something odd, majority still deleted
    partly = bytearray(locked)
    partly[1] = 0x0F
    assert decode_page(data, bytes(partly), LAYOUT).verdict is Verdict.LOCKED
    # one damaged copy on a valid page does not lock it
    damaged = bytearray(spare)
    damaged[2] = 0x7F
    assert decode_page(data, bytes(damaged), LAYOUT).verdict is Verdict.OK


@pytest.mark.parametrize("combo", list(itertools.product([0xFF, 0x00], repeat=3)))
def test_flag_majority_truth_table(combo):
    spare = bytes([0xA5, *combo]) + b"\xff" * 60
    assert flag_majority(spare, LAYOUT) == majority_truth_table(combo)


def test_lock_takes_precedence_over_poison():
    data = bytes(2048)
    spare = encode_spare(data, LAYOUT)
    spare = _and(spare, *make_poison_mask(LAYOUT))
    spare = _and(spare, *make_flag_lock_mask(LAYOUT))
    assert decode_page(data, spare, LAYOUT).verdict is Verdict.LOCKED


def test_foreign_magic_and_erased_spare_uncorrectable():
    data = rand_page(random.Random(7))
    spare = bytearray(encode_spare(data, LAYOUT))
    spare[0] = 0x5A
    assert decode_page(data, bytes(spare), LAYOUT).verdict is Verdict.UNCORRECTABLE
    assert decode_page(b"\xff" * 2048, b"\xff" * 64, LAYOUT).verdict is Verdict.UNCORRECTABLE


def test_scrubbed_page_fails_crc():
    data = rand_page(random.Random(8))
    spare = encode_spare(data, LAYOUT)
    assert decode_page(bytes(2048), spare, LAYOUT).verdict is Verdict.UNCORRECTABLE
