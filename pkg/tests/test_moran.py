import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import tv_distance
from oracles import conditioned_fixation_time_mean
from housesweep import moran as M
from housesweep.gw_branching import GwParams, StopRule, simulate_gw, simulate_gw_conditioned_survival
from housesweep.params import ModelParams


def test_rates_absorbing_boundaries():
    p = ModelParams.strong(10, 0.5)
    assert M.moran_rates(0, p) == (0.0, 0.0)
    assert M.moran_rates(10, p) == (0.0, 0.0)


def test_rates_substitution():
    assert M.moran_rates(1, ModelParams.strong(2, 1.0)) == (0.5, 1.0)


@given(st.integers(2, 500), st.floats(0.01, 2.0))
def test_rate_ratio(N, a):
    p = ModelParams.strong(N, a)
    for k in range(1, N):
        up, down = M.moran_rates(k, p)
        assert down / up == pytest.approx(1 + a, rel=1e-14)


def test_rates_out_of_range():
    with pytest.raises(ValueError):
        M.moran_rates(11, ModelParams.strong(10, 0.5))


def test_fixation_prob_boundaries():
    p = ModelParams.strong(20, 0.3)
    assert M.fixation_prob_exact(p, 0) == 0.0
    assert M.fixation_prob_exact(p, 20) == pytest.approx(1.0, abs=1e-15)


def test_fixation_prob_two_individuals():
    # first-step equation with one interior state: up to N with (1+s)/(2+s)
    assert M.fixation_prob_exact(ModelParams.strong(2, 1.0), 1) == pytest.approx(2 / 3)


def _gamblers_ruin(N, s, m):
    # exact rational solution of the first-step equations
    q = Fraction(1) / (1 + Fraction(s))
    return (1 - q ** m) / (1 - q ** N)


@pytest.mark.parametrize("N,s,m", [(5, Fraction(1, 2), 2), (12, Fraction(1, 5), 1), (30, Fraction(3), 7)])
def test_fixation_prob_rational_oracle(N, s, m):
    p = ModelParams.strong(N, float(s))
    assert M.fixation_prob_exact(p, m) == pytest.approx(float(_gamblers_ruin(N, s, m)), rel=1e-13)


def test_fixation_prob_asymptotic():
    p = ModelParams(10_000, 0.1, 1.0)
    assert M.fixation_prob_exact(p, 1) == pytest.approx(1 / 11, rel=0.01)


def test_fixation_prob_monotone():
    vals = [M.fixation_prob_exact(ModelParams.strong(50, 0.2), m) for m in range(51)]
    assert all(x < y for x, y in zip(vals, vals[1:]))
    vals = [M.fixation_prob_exact(ModelParams.strong(50, a), 1) for a in (0.05, 0.1, 0.5, 1, 3)]
    assert all(x < y for x, y in zip(vals, vals[1:]))


def test_start_at_n_fixes_immediately():
    path = M.simulate_moran(ModelParams.strong(10, 0.5), 10, rng=1)
    assert path.terminal == M.FIXATION and path.end_time == 0.0


def test_neutral_fixation_frequency():
    N, n = 20, 100_000
    fixed = M.fixation_frequency(ModelParams(N, 0.0, 1.0), 1, n, seed=4)
    assert abs(fixed.mean() - 1 / N) < 3 * math.sqrt((1 / N) * (1 - 1 / N) / n)


def test_fixation_frequency_matches_exact():
    p = ModelParams(100, 0.2, 1.0)
    n = 100_000
    pf = M.fixation_prob_exact(p, 1)
    freq = M.fixation_frequency(p, 1, n, seed=9).mean()
    assert abs(freq - pf) < 3 * math.sqrt(pf * (1 - pf) / n)


def test_full_path_invariants():
    p = ModelParams.strong(40, 0.3)
    path = M.simulate_moran(p, 3, rng=2)
    assert path.times[0] == 0 and path.mutant[0] == 3
    assert np.all(np.abs(np.diff(path.resident)) == 1)
    assert np.all(np.diff(path.times) > 0)
    assert path.mutant[-1] in (0, 40)
    assert path.terminal == (M.FIXATION if path.mutant[-1] == 40 else M.LOSS)
    assert path.resident_at(-1.0) == 40


def test_simulate_same_seed_reproducible():
    p = ModelParams.strong(40, 0.3)
    a = M.simulate_moran(p, 3, rng=5)
    b = M.simulate_moran(p, 3, rng=5)
    assert np.array_equal(a.times, b.times) and np.array_equal(a.resident, b.resident)


def test_level_policy_matches_full_policy():
    p = ModelParams.strong(200, 0.5)
    levels = M.sweep_levels(p, 30)
    full = M.simulate_moran_conditioned_fixation(p, rng=6)
    lv = M.simulate_moran_conditioned_fixation(p, rng=6, record="levels", levels=levels)
    for level in levels:
        assert lv.level_time(int(level)) == full.level_time(int(level))
    assert lv.end_time == full.end_time


def test_grid_policy_matches_full_policy():
    p = ModelParams.strong(200, 0.5)
    grid = np.linspace(0.0, 30.0, 61)
    full = M.simulate_moran_conditioned_fixation(p, rng=6)
    gp = M.simulate_moran_conditioned_fixation(p, rng=6, record="grid", grid=grid)
    for t, k in zip(gp.times[1:], gp.resident[1:]):
        assert k == full.resident_at(t)


def test_unknown_policy():
    with pytest.raises(ValueError):
        M.simulate_moran(ModelParams.strong(10, 0.5), 1, record="sparse")


def test_conditioned_first_jump_up_and_fixes():
    p = ModelParams.strong(50, 0.5)
    for seed in range(100):
        path = M.simulate_moran_conditioned_fixation(p, rng=seed)
        assert path.mutant[1] == 2
        assert path.terminal == M.FIXATION and path.mutant[-1] == 50


def test_conditioned_requires_selection():
    with pytest.raises(ValueError):
        M.simulate_moran_conditioned_fixation(ModelParams(50, 0.0, 1.0))


def test_conditioned_matches_rejection_oracle():
    p = ModelParams.strong(50, 0.5)
    n = 100_000
    cond = M.jump_marginal(p, 10, n, seed=1)
    pf = M.fixation_prob_exact(p, 1)
    rej = M.jump_marginal(p, 10, int(1.1 * n / pf), seed=2, method="rejection")
    assert len(rej) >= n
    assert tv_distance(cond, rej) < 0.01


def test_hitting_time_small_eps_is_start():
    path = M.simulate_moran_conditioned_fixation(ModelParams.strong(50, 0.5), rng=3)
    assert M.hitting_time(path, 0.01) == 0.0


def test_hitting_time_one_is_fixation_time():
    path = M.simulate_moran_conditioned_fixation(ModelParams.strong(50, 0.5), rng=3)
    assert M.hitting_time(path, 1.0) == path.end_time


def test_hitting_time_hand_path():
    path = M.SweepPath(4, np.array([0.0, 1.0, 2.5, 3.0, 4.2, 5.0]),
                       np.array([3, 2, 3, 2, 1, 0]), M.FIXATION)
    assert M.hitting_time(path, 0.5) == 1.0
    assert M.hitting_time(path, 0.75) == 4.2
    assert M.hitting_time(path, 1.0) == 5.0
    lost = M.SweepPath(4, np.array([0.0, 1.0]), np.array([3, 4]), M.LOSS)
    assert M.hitting_time(lost, 0.5) == math.inf


def _tc_inputs(p, seed):
    g = np.random.default_rng(seed)
    L = p.level_34
    z1 = simulate_gw_conditioned_survival(GwParams.supercritical(p), StopRule(level=L), g)
    while True:
        z0 = simulate_gw(GwParams.subcritical(p), p.N - L, StopRule(level=p.N), g)
        if z0.absorbed:
            return z1, z0


def test_conditioned_fixation_time_mean_matches_oracle():
    p = ModelParams(60, 0.2, 1.0)
    n = 20_000
    times, fixed = M.absorption_times(p, n, seed=41, conditioned=True)
    exact = conditioned_fixation_time_mean(60, 0.2)
    assert fixed.all()
    assert abs(times.mean() - exact) <= 3 * times.std(ddof=1) / np.sqrt(n)


def test_time_change_factor_and_monotonicity():
    p = ModelParams.power(2000, 1.0, 0.2)
    z1, z0 = _tc_inputs(p, 4)
    moran, sigma, f, resident = M.time_change(z1, z0, p)
    assert np.all(np.diff(sigma) > 0)
    assert np.all(sigma <= moran)
    early = (p.N - resident[:-1]) <= p.level_23
    early &= np.arange(len(early)) < len(z1.times)
    assert np.all(f[:-1][early] >= 1 - 1 / p.log_N)
    assert np.all(f <= 1)


def test_time_changed_pair_is_a_sweep():
    p = ModelParams.strong(30, 0.3)
    z1, z0 = _tc_inputs(p, 5)
    path = M.build_time_changed_pair(z1, z0, p)
    assert path.terminal == M.FIXATION
    assert path.mutant[0] == 1 and path.mutant[-1] == 30
    assert np.all(np.abs(np.diff(path.resident)) == 1)


def test_time_changed_pair_rejects_bad_inputs():
    p = ModelParams.strong(30, 0.3)
    z1, z0 = _tc_inputs(p, 6)
    short = simulate_gw_conditioned_survival(GwParams.supercritical(p), StopRule(level=3), rng=1)
    with pytest.raises(ValueError):
        M.build_time_changed_pair(short, z0, p)
    with pytest.raises(ValueError):
        M.build_time_changed_pair(z1, z1, p)


def test_time_changed_fixation_time_law():
    from scipy.stats import ks_2samp
    p = ModelParams.strong(30, 0.3)
    n = 20_000
    tc = M.time_changed_fixation_times(p, n, seed=1)
    direct, fixed = M.absorption_times(p, n, seed=2)
    assert fixed.all()
    assert ks_2samp(tc, direct).statistic < 0.02


def test_csv_roundtrip(tmp_path):
    path = M.simulate_moran_conditioned_fixation(ModelParams.strong(30, 0.3), rng=3)
    M.write_csv(path, tmp_path / "p.csv")
    back = M.read_csv(tmp_path / "p.csv")
    assert back.N == 30 and back.terminal == M.FIXATION
    assert np.array_equal(back.times, path.times)
    assert np.array_equal(back.resident, path.resident)
    assert (tmp_path / "p.csv").read_text().splitlines()[1] == "time,resident,mutant"


def test_binary_roundtrip(tmp_path):
    path = M.simulate_moran(ModelParams.strong(30, 0.3), 2, rng=4)
    M.write_binary(path, tmp_path / "p.bin")
    back = M.read_binary(tmp_path / "p.bin")
    assert back.terminal == path.terminal
    assert np.array_equal(back.times, path.times)
    assert np.array_equal(back.resident, path.resident)


def test_binary_rejects_garbage(tmp_path):
    (tmp_path / "x.bin").write_bytes(b"\0" * 64)
    with pytest.raises(ValueError):
        M.read_binary(tmp_path / "x.bin")


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 60), st.floats(0.05, 2.0), st.integers(0, 2**32))
def test_conditioned_paths_never_lose(N, a, seed):
    path = M.simulate_moran_conditioned_fixation(ModelParams.strong(N, a), rng=seed)
    assert path.mutant.min() >= 1 and path.mutant[-1] == N
