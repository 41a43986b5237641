"""Acceptance criteria, one test each.

Every criterion prints a single ``PASS``/``FAIL`` line in the pytest terminal
summary.  Run directly (``python3 tests/test_acceptance.py``) to print the
lines without pytest.
"""

import time

import numpy as np
import pytest

from lattice_calderon.forward import assemble_dtn, random_conductivity
from lattice_calderon.lattice import all_corners, build_lattice, corner_map
from lattice_calderon.reconstruction import reconstruct, reconstruct_from_corner
from lattice_calderon.verification import compare, error_growth_study, growth_decades, run_property_suite

RESULTS: dict[str, tuple[bool, str]] = {}


def _record(key, passed, detail):
    RESULTS[key] = (bool(passed), detail)
    return bool(passed)


def _round_trip(d, n, seeds, lo=0.5, hi=2.0):
    lat = build_lattice(d, n)
    worst = 0.0
    for seed in seeds:
        g = random_conductivity(lat, lo, hi, seed=seed)
        rep = reconstruct(lat, assemble_dtn(lat, g))
        worst = max(worst, float(np.max(np.abs(rep.estimates - g))))
    return worst


def criterion_1():
    t0 = time.perf_counter()
    worst = _round_trip(3, 4, range(10))
    dt = time.perf_counter() - t0
    return _record("1 round trip d=3 n=4", worst <= 1e-8, f"max err {worst:.2e} <= 1e-8 ({dt:.1f} s)")


def criterion_2():
    worst = _round_trip(2, 5, range(10))
    return _record("2 round trip d=2 n=5", worst <= 1e-8, f"max err {worst:.2e} <= 1e-8")


def criterion_3():
    rows = error_growth_study([8, 13], d=3, lo=1.0, hi=2.0, seed=0)
    e8, e13 = rows[0].max_err, rows[-1].max_err
    growth = growth_decades(rows)
    ok = e8 <= 1e-6 and e13 >= 1e-3 and growth >= 6
    return _record("3 error growth n=8..13", ok,
                   f"n=8 {e8:.2e} <= 1e-6, n=13 {e13:.2e} >= 1e-3, growth {growth:.1f} >= 6 decades")


def criterion_4():
    lat = build_lattice(3, 10)
    g = random_conductivity(lat, 1.0, 2.0, seed=0)
    er = compare(lat, g, reconstruct(lat, assemble_dtn(lat, g)))
    shallow = float(np.median(er.abs_err[er.depth <= 3]))
    bands = np.floor(er.depth).astype(int)
    deep = float(np.median(er.abs_err[bands == bands.max()]))
    gap = np.log10(deep) - np.log10(max(shallow, 1e-300))
    return _record("4 depth resolution n=10", gap >= 3,
                   f"median depth<=3 {shallow:.2e}, deepest band {bands.max()} {deep:.2e}, gap {gap:.1f} >= 3 decades")


def criterion_5():
    t0 = time.perf_counter()
    failures = []
    for d in (2, 3):
        for n in (2, 3, 4):
            for seed in (0, 1, 2):
                res = run_property_suite(d, n, seed, round_trip=False)
                failures += [f"d={d} n={n} seed={seed} {c.name}" for c in res.failures]
    dt = time.perf_counter() - t0
    ok = not failures and dt < 60
    detail = f"18 suites in {dt:.1f} s < 60 s" + (f"; failed: {', '.join(failures[:5])}" if failures else "")
    return _record("5 property suites", ok, detail)


def criterion_6():
    lat = build_lattice(3, 3)
    g = random_conductivity(lat, 0.5, 2.0, seed=0)
    dtn = assemble_dtn(lat, g)
    worst_corner = 0.0
    for c in all_corners(3):
        _, edge_perm = corner_map(lat, c)
        direct = reconstruct_from_corner(lat, dtn, c).estimates
        mirrored = reconstruct_from_corner(lat, assemble_dtn(lat, g[edge_perm])).estimates[edge_perm]
        ok = ~np.isnan(direct)
        if not np.array_equal(ok, ~np.isnan(mirrored)):
            worst_corner = np.inf
            break
        worst_corner = max(worst_corner, np.abs(direct[ok] - mirrored[ok]).max() / np.abs(direct[ok]).max())
    base = reconstruct(lat, dtn).estimates
    worst_scale = 0.0
    for c in (0.01, 7.5, 1e3):
        scaled = reconstruct(lat, assemble_dtn(lat, c * g)).estimates
        worst_scale = max(worst_scale, np.abs(scaled - c * base).max() / np.abs(c * base).max())
    ok = worst_corner <= 1e-9 and worst_scale <= 1e-9
    return _record("6 equivariance", ok,
                   f"corner {worst_corner:.1e}, homogeneity {worst_scale:.1e} (relative, <= 1e-9)")


def test_criterion_1_round_trip_3d():
    assert criterion_1(), RESULTS["1 round trip d=3 n=4"][1]


def test_criterion_2_round_trip_2d():
    assert criterion_2(), RESULTS["2 round trip d=2 n=5"][1]


@pytest.mark.slow
def test_criterion_3_error_growth():
    assert criterion_3(), RESULTS["3 error growth n=8..13"][1]


def test_criterion_4_depth_resolution():
    assert criterion_4(), RESULTS["4 depth resolution n=10"][1]


def test_criterion_5_property_suites():
    assert criterion_5(), RESULTS["5 property suites"][1]


def test_criterion_6_equivariance():
    assert criterion_6(), RESULTS["6 equivariance"][1]


def summary_lines():
    return [f"{'PASS' if ok else 'FAIL'}  {key}: {detail}" for key, (ok, detail) in sorted(RESULTS.items())]


if __name__ == "__main__":
    for fn in (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6):
        before = set(RESULTS)
        fn()
        (key,) = set(RESULTS) - before
        ok, detail = RESULTS[key]
        print(f"{'PASS' if ok else 'FAIL'}  {key}: {detail}", flush=True)
