"""Acceptance suite: one PASS/FAIL line per criterion, then the assertion.

Run alone with ``pytest tests/test_acceptance.py -v``; the verdict lines are
printed to the terminal even when output capture is on.
"""
import math
from fractions import Fraction as F

import numpy as np
import pytest

from housesweep import gw_branching as gw
from housesweep import moran as M
from housesweep.clonal import pit_evolve
from housesweep.gw_branching import GwParams
from housesweep.harness import convergence_report, preset, run_experiment
from housesweep.house import House, house_path
from housesweep.m1 import CadlagPath, m1_distance, sup_distance
from housesweep.params import ModelParams
from housesweep.walks import (chain_path_probs, drift_dominates, enumerate_paths,
                              h_transform_up_prob, naive_path_probs, reverse_paths)

from conftest import tv_distance
from oracles import capped_tv, excursion_mass, hit_before_prob, m1_dense_grid, m1_exact, random_step_pair

pytestmark = pytest.mark.acceptance


@pytest.fixture
def report(capsys):
    def emit(k, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {k}: {detail}")
        return ok
    return emit


def ks_stat(x, y):
    grid = np.sort(np.concatenate((x, y)))
    fx = np.searchsorted(np.sort(x), grid, side="right") / len(x)
    fy = np.searchsorted(np.sort(y), grid, side="right") / len(y)
    return float(np.abs(fx - fy).max())


def verdict_map(table):
    return {v.stat: v for v in convergence_report([table])}


def test_criterion_01_fixation_probability(report):
    n = 100_000
    parts, ok = [], True
    for N, s in ((100, 0.2), (10_000, 0.05)):
        p = ModelParams(N, s, 1.0)
        freq = M.fixation_frequency(p, 1, n, seed=101 + N).mean()
        exact = M.fixation_prob_exact(p, 1)
        se = math.sqrt(exact * (1 - exact) / n)
        ok &= abs(freq - exact) <= 3 * se
        parts.append(f"N={N}: MC {freq:.5f} vs {exact:.5f} ({abs(freq - exact) / se:.2f} SE)")
        if N == 10_000:
            approx = s / (1 + s)
            ok &= abs(exact - approx) <= 0.02 * approx
            parts.append(f"vs s/(1+s) rel {abs(exact - approx) / approx:.2e}")
    assert report(1, ok, "; ".join(parts))


def test_criterion_02_conditioning(report):
    n = 100_000
    p = ModelParams(50, 0.3, 1.0)
    cond = M.jump_marginal(p, 10, n, seed=201, method="conditioned")
    pf = M.fixation_prob_exact(p, 1)
    rej = M.jump_marginal(p, 10, int(1.1 * n / pf), seed=202, method="rejection")[:n]
    tvs = {"moran N=50": tv_distance(cond, rej)}
    for lam in (1.5, 2.0):
        gp = GwParams(lam, 1.0)
        c = gw.jump_marginal(gp, 10, n, seed=203, conditioned=True)
        surv = (lam - 1.0) / lam
        r = gw.jump_marginal_rejection(gp, 10, int(1.1 * n / surv), seed=204)[:n]
        tvs[f"gw lam={lam}"] = tv_distance(c, r)
    ok = len(rej) == n and all(v <= 0.01 for v in tvs.values())
    assert report(2, ok, ", ".join(f"{k}: TV {v:.4f}" for k, v in tvs.items()))


def test_criterion_03_time_change(report):
    n = 100_000
    p = ModelParams.power(30, 1.0, 0.2)
    tc = M.time_changed_fixation_times(p, n, seed=301)
    direct, fixed = M.absorption_times(p, n, seed=302, conditioned=True)
    ks = ks_stat(tc, direct)
    assert report(3, ks <= 0.02 and fixed.all(), f"KS {ks:.4f} at N=30")


@pytest.fixture(scope="module")
def house_table():
    return run_experiment(preset("house-distance", replicates=200), persist=False)


def test_criterion_04_fixation_time(report):
    table = run_experiment(preset("fixation-time", replicates=200), persist=False)
    v = verdict_map(table)["sigma_fix"]
    rel = v.final_gap / 1.6
    ok = v.verdict == "PASS" and rel <= 0.2
    meds = ", ".join(f"{m:.4f}" for m in v.medians)
    assert report(4, ok, f"median sigma_fix [{meds}] toward 1.6; rel gap {rel:.3f} ({v.reason})")


def test_criterion_05_house_distance(report, house_table):
    v = verdict_map(house_table)
    stats = ("sup_H0", "sup_H1", "m1_H0", "m1_H1")
    ok = all(v[s].verdict == "PASS" for s in stats)
    last = max(v["m1_H0"].medians[-1], v["m1_H1"].medians[-1])
    ok &= last < 0.15
    detail = "; ".join(f"{s} [{', '.join(f'{m:.4f}' for m in v[s].medians)}] {v[s].verdict}"
                       for s in stats)
    assert report(5, ok, detail)


def test_criterion_06_gw_closed_forms(report):
    grid = [(1.2, 1.0, 1.0, 2), (1.5, 1.0, 2.0, 3), (2.0, 1.0, 0.5, 1),
            (1.0, 1.3, 1.0, 1), (1.0, 2.0, 0.7, 2), (1.1, 1.0, 3.0, 4)]
    n = 40_000
    worst, ok = 0.0, True
    for i, (lam, mu, t, j) in enumerate(grid):
        gp = GwParams(lam, mu)
        z = gw.sample_sizes(gp, 1, t, n, seed=600 + i).astype(np.float64)
        tail = gw.gw_tail_prob(gp, t, j)
        se = math.sqrt(tail * (1 - tail) / n)
        dev = abs(np.mean(z >= j) - tail) / se
        mean, var = gw.gw_mean_var(gp, 1, t)
        se_m = math.sqrt(var / n)
        c = z - z.mean()
        se_v = math.sqrt(max(np.mean(c ** 4) - np.var(z) ** 2, 0.0) / n)
        devs = (dev, abs(z.mean() - mean) / se_m, abs(np.var(z, ddof=1) - var) / se_v)
        worst = max(worst, *devs)
        ok &= all(d <= 3 for d in devs)
    assert report(6, ok, f"6 grid points, worst deviation {worst:.2f} SE")


def test_criterion_07_exact_identities(report):
    p, N = 0.7, 6
    paths, lengths = enumerate_paths(1, N, 0, cap=25)
    naive = naive_path_probs(paths, lengths, p) / hit_before_prob(p, 1, N, 0)
    chain = chain_path_probs(paths, lengths, lambda k: h_transform_up_prob(k, p) if k else 1.0)
    tv_a = capped_tv(naive, chain)
    tv_b = 0.0
    caps = {2: 4, 3: 40, 4: 34, 5: 26}
    for q in (0.2, 0.3, 0.45):
        for n_ in (2, 3, 4, 5):
            w, ln = enumerate_paths(n_, 0, n_, cap=caps[n_])
            down = naive_path_probs(w, ln, q) / excursion_mass(q, n_)
            up = chain_path_probs(reverse_paths(w, ln), ln,
                                  lambda k: h_transform_up_prob(k, 1 - q) if k else 1.0)
            tv_b = max(tv_b, capped_tv(down, up))
    p_grid = (0.5 + 1e-9, 0.5 + 1e-6, 0.5001, 0.51, 0.6, 0.75, 0.9, 0.99, 1 - 1e-6)
    dom = all(drift_dominates(x, 10_000) for x in p_grid)
    ok = tv_a < 1e-10 and tv_b < 1e-10 and dom
    assert report(7, ok, f"(a) TV {tv_a:.2e}; (b) max TV {tv_b:.2e}; "
                         f"(c) drift inequality on {len(p_grid)} p values: {dom}")


def test_criterion_08_walk_fluctuations(report):
    table = run_experiment(preset("drawdowns", replicates=500), persist=False)
    v = verdict_map(table)
    ok = True
    parts = []
    for s in ("drawdown_up", "drawdown_down", "lil"):
        m = v[s].medians
        ok &= v[s].verdict == "PASS" and m[0] > m[1] > m[2]
        parts.append(f"{s} [{', '.join(f'{x:.4f}' for x in m)}]")
    assert report(8, ok, "; ".join(parts))


def test_criterion_09_m1_metric(report):
    rng = np.random.default_rng(900)
    contained = 0
    for _ in range(100):
        f, g = random_step_pair(rng, 5)
        br = m1_distance(f, g, tol=1e-3)
        dense, gap = m1_dense_grid(f, g)
        exact = m1_exact(f, g)
        contained += br.contains(dense, slack=gap) and br.contains(exact, slack=1e-8)
    f, _ = random_step_pair(rng, 5)
    off = CadlagPath(f.t, f.left + 0.37, f.right + 0.37)
    br = m1_distance(f, off, tol=1e-6)
    offset_ok = abs(br.upper - 0.37) <= 1e-6 and abs(br.lower - 0.37) <= 1e-6
    axioms = True
    for _ in range(30):
        f, g = random_step_pair(rng, 5)
        h, _ = random_step_pair(rng, 5)
        fg, gf = m1_distance(f, g), m1_distance(g, f)
        axioms &= fg.lower <= gf.upper + 1e-12 and gf.lower <= fg.upper + 1e-12
        axioms &= m1_distance(f, f).upper <= 1e-3
        axioms &= fg.lower <= m1_distance(f, h).upper + m1_distance(h, g).upper + 2e-3
        axioms &= fg.lower <= sup_distance(f, g) + 1e-12
    ok = contained == 100 and offset_ok and axioms
    assert report(9, ok, f"{contained}/100 brackets contain the oracles; constant offset "
                         f"[{br.lower:.7f}, {br.upper:.7f}]; axioms {axioms}")


def test_criterion_10_pit(report):
    b, a = F(1, 5), F(1)
    single = pit_evolve([(0, a)], b, 3)
    ev = [(t, k) for t, k, _ in single.events if k != "arrival"]
    exact = ev == [((1 - b) / a, "fix"), (2 * (1 - b) / a, "death")]
    h = House(1.0, 0.2)
    exact &= all(sup_distance(single.trajectories[w].to_path((0, 3)), house_path(h, w, (0, 3))) == 0
                 for w in (0, 1))
    scenarios = {
        "A": ([(0, 1), (0.3, 2)], [0.7, 1.1, 1.4]),
        "B": ([(0, 1), (0.5, 2)], [0.8, 1.0, 1.3, 1.8]),
        "C": ([(0, 1), (0.4, 0.5)], [0.8, 1.2, 1.6]),
    }
    worst = 0.0
    for marks, expected in scenarios.values():
        s = pit_evolve(marks, 0.2, 5.0)
        got = [float(t) for t, k, _ in s.events if k != "arrival"]
        worst = max(worst, max(abs(x - y) for x, y in zip(got, expected)))
        exact &= len(got) == len(expected)
    table = run_experiment(preset("pit-vs-moran", replicates=20), persist=False)
    med = verdict_map(table)["m1_max"].medians
    ok = exact and worst <= 1e-12
    assert report(10, ok, f"house exact: {exact}; kink scenarios max error {worst:.1e}; "
                          f"pit_vs_moran median M1 (reported) [{', '.join(f'{m:.3f}' for m in med)}]")


def test_criterion_11_determinism(report, tmp_path):
    from housesweep.harness import PRESETS
    small = dict(N=[300, 600, 1200], seed=11)
    same = []
    for name in sorted(PRESETS):
        reps = 2 if name in ("pit-vs-moran", "house-distance") else 4
        outs = []
        for threads, tag in ((1, "a"), (2, "b"), (4, "c")):
            run_experiment(preset(name, replicates=reps, threads=threads,
                                  out=str(tmp_path / tag), **small))
            outs.append((tmp_path / tag / f"{name}.csv").read_bytes())
        same.append(outs[0] == outs[1] == outs[2])
    assert report(11, all(same), f"{sum(same)}/{len(same)} presets byte-identical over 1/2/4 threads")
