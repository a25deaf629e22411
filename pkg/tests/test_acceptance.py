"""Acceptance criteria, one test each.

Every test prints a single ``[criterion N] PASS|FAIL ...`` line; the lines are
also collected and repeated in the pytest terminal summary.
"""

import os
import random

import numpy as np
import pytest

from apsd.codec import SpareLayout, Verdict, decode_page, encode_spare
from apsd.config import Config
from apsd.engine import PrivacyLevel
from apsd.errors import CorruptSnapshot
from apsd.ftl import ReadStatus
from apsd.forensics import footnotes, residual_report
from apsd.nand import Geometry
from apsd.policy import ContextVector, select_level
from apsd.simulator import Simulator
from apsd.snapshot import parse_snapshot, snapshot_bytes
from apsd.trace import parse_trace, seed_payload
from apsd.workload import level_trace, level_trials, standard_trace
from apsd.runner import run

from scenarios import flag_lock_sequence

RESULTS: list[str] = []


def verdict(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"[criterion {number:2d}] {'PASS' if ok else 'FAIL'} {title}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def trials():
    return level_trials(Config(), seed=0)


def test_c01_dispatch():
    expected = {"PL0": "erase", "PL1": "scrub", "PL2": "eccmod", "PL3": "mapout"}
    got = {}
    for level in PrivacyLevel:
        result = run(Config(), parse_trace(level_trace(Geometry(), level)), 0)
        got[level.name] = result.outcomes[-1].technique.value
    verdict(1, "level dispatch", got == expected, str(got))


def test_c02_ecc_poison_totality():
    sim = Simulator(seed=2, track_reference=False)
    n = sim.geometry.page_data_bytes
    pages = 1000
    for lpa in range(pages):
        sim.write(lpa, seed_payload(2_000_000 + lpa, n))
    poisoned = sum(sim.delete(lpa, technique="eccmod").verification.denial_kind is ReadStatus.POISONED for lpa in range(pages))
    reread = sum(sim.read(lpa).status is ReadStatus.POISONED for lpa in range(pages))
    verdict(2, "ECC poison totality", poisoned == reread == pages, f"{poisoned}/{pages} poisoned at delete, {reread}/{pages} on re-read")


def test_c03_level_latency_and_wear(trials):
    lat = {lvl.name: t.latency_us for lvl, t in trials.items()}
    wear = {lvl.name: t.erases for lvl, t in trials.items()}
    ok = lat["PL0"] > lat["PL1"] > lat["PL2"] >= lat["PL3"]
    ok = ok and wear["PL0"] >= 1 and wear["PL1"] == wear["PL2"] == wear["PL3"] == 0
    verdict(3, "level latency and wear ordering", ok, f"latency_us {lat}, erases {wear}")


def test_c04_technique_orderings(standard_run):
    rows = {r["technique"]: r for r in standard_run.sim.ledger.technique_profile()}
    lat = {t: r["latency_us"] for t, r in rows.items()}
    others = [v for t, v in lat.items() if t != "unmap"]
    costs = standard_run.sim.ledger.costs
    parity_cap = costs.partial_program_us + costs.read_us + costs.meta_us
    parity_ok = all(
        rows[t]["partial_program"] <= 1 and rows[t]["read"] <= 1 and rows[t]["erase"] == 0
        and rows[t]["program"] == 0 and lat[t] <= parity_cap
        for t in ("eccmod", "flaglock")
    )
    notes = footnotes(rows)
    ok = (
        all(lat["unmap"] < v for v in others)
        and all(lat["erase"] > v for t, v in lat.items() if t != "erase")
        and parity_ok
        and lat["overwrite"] > lat["scrub"]
        and any(n.startswith("crypto:") for n in notes)
        and any(n.startswith("scrub:") for n in notes)
    )
    verdict(4, "technique cost orderings", ok, f"latency_us {dict(sorted(lat.items()))}; {len(notes)} divergence notes")


def test_c05_residuals_exact(standard_run):
    sim = standard_run.sim
    report = residual_report(sim.dump(), sim.reference, sim.peek)
    expected = {
        "unmap": 1.0, "eccmod": 1.0, "flaglock": 1.0, "mapout": 1.0,
        "erase": 0.0, "scrub": 0.0, "overwrite": 0.0, "pulse": 0.0, "downlevel": 0.0,
    }
    chip = {r["technique"]: r["chip_recoverable_mean"] for r in report.rows}
    ctrl = {r["technique"]: r["controller_recoverable"] for r in report.rows}
    ok = all(chip[t] == v for t, v in expected.items()) and all(v == 0 for v in ctrl.values())
    verdict(5, "forensic residuals", ok, f"chip {chip}, controller max {max(ctrl.values())}")


def test_c06_codec():
    layout = SpareLayout.for_geometry(Geometry())
    rng = random.Random(6)
    data = bytes(rng.getrandbits(8) for _ in range(2048))
    spare = encode_spare(data, layout)
    singles = 0
    for bit in range(4096):
        bad = bytearray(data)
        bad[bit // 8] ^= 0x80 >> (bit % 8)
        out = decode_page(bytes(bad), spare, layout)
        singles += out.verdict is Verdict.OK and out.data == data
    for bit in range(16):
        bad = bytearray(spare)
        bad[8 + bit // 8] ^= 1 << (bit % 8)
        out = decode_page(data, bytes(bad), layout)
        singles += out.verdict is Verdict.OK and out.data == data
    wrong = 0
    for _ in range(10_000):
        a, b = rng.sample(range(4096), 2)
        bad = bytearray(data)
        for bit in (a, b):
            bad[bit // 8] ^= 0x80 >> (bit % 8)
        out = decode_page(bytes(bad), spare, layout)
        wrong += out.verdict is Verdict.OK and out.data != data
    roundtrips = 0
    nrng = np.random.default_rng(6)
    for _ in range(1000):
        page = nrng.integers(0, 256, 2048, dtype=np.uint8).tobytes()
        out = decode_page(page, encode_spare(page, layout), layout)
        roundtrips += out.verdict is Verdict.OK and out.data == page
    ok = singles == 4112 and wrong == 0 and roundtrips == 1000
    verdict(6, "codec", ok, f"single flips corrected {singles}/4112, double flips miscorrected {wrong}/10000, roundtrips {roundtrips}/1000")


def test_c07_flag_irreversibility():
    checks, failure = 0, None
    for seed in range(100):
        try:
            checks += flag_lock_sequence(seed, 50)
        except AssertionError as exc:
            failure = str(exc)
            break
    detail = failure or f"100 sequences x 50 ops, {checks} post-op checks on locked pages, no Ok read"
    verdict(7, "flag irreversibility", failure is None, detail)


def test_c08_write_amplification():
    sim = Simulator(seed=8, track_reference=False)
    n = sim.geometry.page_data_bytes
    cap = sim.ftl.logical_capacity
    for lpa in range(cap):
        sim.write(lpa, seed_payload(lpa, n))
    sequential = sim.ledger.write_amplification()
    rng = random.Random(8)
    for i in range(3000):
        sim.write(rng.randrange(cap), seed_payload(cap + i, n))
    random_wa = sim.ledger.write_amplification()
    ok = sequential == 1.0 and random_wa > 1.05
    verdict(8, "write amplification", ok, f"sequential fill {sequential}, after 3000 random overwrites {random_wa:.4f}")


def test_c09_determinism_and_persistence(tmp_path):
    events = parse_trace(standard_trace())
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        run(Config(), events, 9, str(out))
        outs.append({f: (out / f).read_bytes() for f in sorted(os.listdir(out))})
    identical = outs[0] == outs[1]
    blob = outs[0]["final.apsd"]
    back = parse_snapshot(blob, seed=9)
    bit_exact = snapshot_bytes(back) == blob
    flipped = bytearray(blob)
    flipped[len(blob) // 2] ^= 0x10
    try:
        parse_snapshot(bytes(flipped))
        detected = False
    except CorruptSnapshot:
        detected = True
    ok = identical and bit_exact and detected
    verdict(9, "determinism and persistence", ok, f"{len(outs[0])} artifacts identical={identical}, reload bit-exact={bit_exact}, corruption detected={detected}")


def test_c10_policy_monotonicity():
    rng = np.random.default_rng(10)
    violations = 0
    for _ in range(10_000):
        s, n, alert, p = int(rng.integers(0, 4)), int(rng.integers(0, 3)), bool(rng.integers(0, 2)), float(rng.random())
        base = select_level(ContextVector(s, n, alert, p))
        if s < 3 and select_level(ContextVector(s + 1, n, alert, p)) < base:
            violations += 1
        if n < 2 and select_level(ContextVector(s, n + 1, alert, p)) > base:
            violations += 1
    verdict(10, "policy monotonicity", violations == 0, f"10000 contexts, {violations} violations")
