"""Acceptance suite: one PASS/FAIL line per criterion, printed as each test finishes.

Run alone with ``pytest -m acceptance -v``. The full-scale pipeline runs are
shared through module-scoped fixtures, so the whole file takes several minutes.
"""

import csv
import math
import time

import numpy as np
import pytest

import oracles
from conftest import grown_layout, random_nets, random_owner_layout
from flora.anneal import metropolis_accept
from flora.layout import BLANK, Layout
from flora.metrics import FeedthroughParams, ftmod_total, ftpin_total
from flora.pipeline import RunConfig, run
from flora.placement import ModulePacker
from flora.resize import largest_blank_rectangle
from test_masks import _rect_instance, check_wiremask
from test_placement import random_packing_instance
from test_resize import check_delta_ftpin

pytestmark = pytest.mark.acceptance

SEEDS = (0, 1, 2, 3, 4)
DESIGNS = ("n10", "n30", "n50")


def report(capsys, crit, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {crit}: {detail}")


def timed_run(**kw):
    t0 = time.perf_counter()
    results = run(RunConfig(**kw))
    return results, time.perf_counter() - t0


@pytest.fixture(scope="module")
def ensemble(tmp_path_factory):
    """Full-scale 3-stage runs, 5 seeds per design, with wall times."""
    out = tmp_path_factory.mktemp("ensemble")
    return {d: timed_run(design=d, seeds=SEEDS, out_dir=out) for d in DESIGNS}, out


@pytest.fixture(scope="module")
def n10_rerun(tmp_path_factory):
    """A single-seed n10 run, used for determinism and the time budget."""
    out = tmp_path_factory.mktemp("rerun")
    results, secs = timed_run(design="n10", seeds=(0,), out_dir=out)
    return results[0], secs, out


def rows_by_stage(res):
    return {r["stage"]: r for r in res.rows}


def test_criterion_1_zero_whitespace(ensemble, capsys):
    runs, _ = ensemble
    parts, ok = [], True
    for d, (results, secs) in runs.items():
        ws = [rows_by_stage(r)["stage2"]["WS_pct"] for r in results]
        blanks = [r.layouts["stage2"].blank_count() for r in results]
        good = all(w == 0.0 for w in ws) and not any(blanks)
        fast = secs < 120
        ok &= good and fast
        parts.append(f"{d} WS={ws} in {secs:.0f}s")
    report(capsys, 1, ok, "; ".join(parts) + " (limit 120s per design)")
    assert ok


def test_criterion_2_placement_density(ensemble, capsys):
    results, _ = ensemble[0]["n10"]
    pds = [rows_by_stage(r)["stage3"]["PD_pct"] for r in results]
    full = sum(p == 100.0 for p in pds)
    ok = np.mean(pds) >= 95 and full >= 3
    report(capsys, 2, ok, f"n10 PD={pds} mean={np.mean(pds):.2f} full={full}/5")
    assert ok


def test_criterion_3_ablation_direction(ensemble, capsys):
    parts, ok = [], True
    for d, (results, _) in ensemble[0].items():
        mod = pin = wl = 0
        ratios = []
        for res in results:
            s = rows_by_stage(res)
            mod += s["stage2"]["FTmod"] < s["stage1"]["FTmod"]
            pin += s["stage3"]["FTpin"] <= s["stage2"]["FTpin"]
            ratios.append(s["stage2"]["HPWL"] / s["stage1"]["HPWL"])
            wl += ratios[-1] <= 1.10
        ok &= mod >= 4 and pin >= 4 and wl == len(results)
        parts.append(f"{d} FTmod down {mod}/5, FTpin not up {pin}/5, "
                     f"HPWL ratio max {max(ratios):.3f}")
    report(capsys, 3, ok, "; ".join(parts))
    assert ok


N_ORACLE = 200


def test_criterion_4_oracle_suites(capsys):
    t0 = time.perf_counter()
    for k in range(N_ORACLE):
        rng = np.random.default_rng([41, k])
        check_wiremask(*_rect_instance(rng, int(rng.integers(3, 17))))
    for k in range(N_ORACLE):
        rng = np.random.default_rng([42, k])
        w, h = int(rng.integers(1, 13)), int(rng.integers(1, 13))
        blank = rng.random((h, w)) < rng.uniform(0.3, 0.95)
        blank[int(rng.integers(h)), int(rng.integers(w))] = True
        ys, xs = np.nonzero(blank)
        j = int(rng.integers(len(xs)))
        lay = Layout(w, h, ["a"], np.where(blank, BLANK, 0))
        got = largest_blank_rectangle(lay, (int(xs[j]), int(ys[j])))
        assert (got.x, got.y, got.w, got.h) == oracles.largest_blank_rect(blank, int(xs[j]),
                                                                            int(ys[j]))
    for k in range(N_ORACLE):
        rng = np.random.default_rng([43, k])
        w, h, n = (int(v) for v in rng.integers([2, 2, 2], [13, 13, 7]))
        n = min(n, w * h)
        lay = random_owner_layout(rng, w, h, n)
        nets = random_nets(rng, n, 8, w, h)
        params = FeedthroughParams.from_nets(nets, int(rng.integers(1, 3)))
        assert ftmod_total(lay, nets) == oracles.ftmod_total(lay.owner, nets)
        assert ftpin_total(lay, params) == oracles.ftpin_total(lay.owner, params.demand,
                                                               params.u)
    done, k = 0, 0
    while done < N_ORACLE:
        rng = np.random.default_rng([44, k])
        k += 1
        lay = grown_layout(rng, 10, 10, 5, fill=0.6)
        demand = {(i, j): int(rng.integers(0, 6)) for i in range(5) for j in range(i + 1, 5)}
        done += check_delta_ftpin(lay, FeedthroughParams(int(rng.integers(1, 3)), demand), rng)
    secs = time.perf_counter() - t0
    report(capsys, 4, secs < 60, f"4 x {N_ORACLE} instances exact in {secs:.1f}s (limit 60s)")
    assert secs < 60


def hard_instance(rng):
    """Random macro shapes up to the region size with total area at most the region."""
    W, H = int(rng.integers(3, 9)), int(rng.integers(3, 9))
    region = np.ones((H, W), dtype=bool)
    if rng.random() < 0.5:
        region[H - int(rng.integers(1, H)):, W - int(rng.integers(1, W)):] = False
    cells = int(region.sum())
    while True:
        k = int(rng.integers(2, 6))
        dims = [(int(rng.integers(1, W + 1)), int(rng.integers(1, H + 1))) for _ in range(k)]
        if sum(w * h for w, h in dims) <= cells:
            return region, dims


def tiled_instance(rng):
    """Guillotine cuts of a box, shuffled and randomly rotated: optimum PD is 1."""
    W, H = int(rng.integers(2, 9)), int(rng.integers(2, 9))
    pieces = [(W, H)]
    k = int(rng.integers(2, 6))
    while len(pieces) < k:
        cand = [i for i, (w, h) in enumerate(pieces) if w > 1 or h > 1]
        if not cand:
            break
        w, h = pieces.pop(int(rng.choice(cand)))
        if w > 1 and (h == 1 or rng.random() < 0.5):
            c = int(rng.integers(1, w))
            pieces += [(c, h), (w - c, h)]
        else:
            c = int(rng.integers(1, h))
            pieces += [(w, c), (w, h - c)]
    dims = [(h, w) if rng.random() < 0.5 else (w, h) for w, h in pieces]
    rng.shuffle(dims)
    return np.ones((H, W), dtype=bool), dims


def test_criterion_5_packing_quality(capsys):
    families = (random_packing_instance, hard_instance, tiled_instance)
    equal = greater = 0
    for k in range(200):
        rng = np.random.default_rng([5, k])
        region, dims = families[k % 3](rng)
        value = ModulePacker(region, dims).search().value
        best = oracles.best_packing_area(region, dims) / sum(w * h for w, h in dims)
        equal += math.isclose(value, best, abs_tol=1e-12)
        greater += value > best + 1e-12
    ok = equal >= 180 and greater == 0
    report(capsys, 5, ok, f"optimal on {equal}/200, above optimum on {greater}")
    assert ok


def test_criterion_6_metropolis(capsys):
    parts, ok = [], True
    rng = np.random.default_rng(6)
    n = 10_000
    for delta, temp in ((0.5, 1.0), (1.0, 1.0), (3.0, 2.0), (10.0, 50.0)):
        p = math.exp(-delta / temp)
        rate = sum(metropolis_accept(delta, temp, rng) for _ in range(n)) / n
        z = abs(rate - p) / math.sqrt(p * (1 - p) / n)
        ok &= z <= 3
        parts.append(f"d={delta} T={temp} rate={rate:.4f} p={p:.4f} z={z:.2f}")
    report(capsys, 6, ok, "; ".join(parts))
    assert ok


def _csv_rows(path, seed):
    with open(path, newline="") as fh:
        return [{k: v for k, v in r.items() if not k.startswith("RT")}
                for r in csv.DictReader(fh) if int(r["seed"]) == seed]


def test_criterion_7_determinism(ensemble, n10_rerun, capsys):
    (results, _), out = ensemble[0]["n10"], ensemble[1]
    again, _, rerun_out = n10_rerun
    same_layouts = all(results[0].layouts[k] == again.layouts[k] for k in results[0].layouts)
    same_csv = (_csv_rows(out / "n10" / "report.csv", 0)
                == _csv_rows(rerun_out / "n10" / "report.csv", 0))
    ok = same_layouts and same_csv
    report(capsys, 7, ok, f"n10 seed 0 rerun: layouts equal {same_layouts}, "
                          f"CSV equal without RT {same_csv}")
    assert ok


def test_criterion_8_runtime(n10_rerun, tmp_path, capsys):
    n10_secs = n10_rerun[1]
    _, n100_secs = timed_run(design="n100", seeds=(0,), out_dir=tmp_path)
    ok = n10_secs < 60 and n100_secs < 600
    report(capsys, 8, ok, f"n10 {n10_secs:.1f}s (limit 60s), n100 {n100_secs:.1f}s "
                          f"(limit 600s)")
    assert ok
