"""Continuous-time binary Galton-Watson (linear birth-death) processes.

Every individual gives birth at rate ``birth_rate`` and dies at rate
``death_rate``. Paths are simulated exactly through the embedded jump chain
with exponential holding times. Conditioning on survival is exact: the jump
chain is Doob-transformed with the survival function ``1 - (mu/lam)**k``
while holding rates are kept, because the survival event is measurable with
respect to the jump chain alone.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit

from ._rand import exponential, new_state, uniform
from .params import ModelParams
from .rng import kernel_seed, replicate_seeds

DEFAULT_EVENT_CAP = 10**9

_STOP_LEVEL, _STOP_HORIZON, _STOP_ABSORBED, _STOP_CAP = 0, 1, 2, 3


class CapExceeded(RuntimeError):
    """A replicate needed more events than the configured cap."""


class SubcriticalWarning(UserWarning):
    pass


@dataclass(frozen=True)
class GwParams:
    birth_rate: float
    death_rate: float

    def __post_init__(self):
        if self.birth_rate < 0 or self.death_rate < 0:
            raise ValueError("rates must be nonnegative")
        if self.birth_rate == 0 and self.death_rate == 0:
            raise ValueError("birth and death rate cannot both vanish")

    @property
    def net_rate(self) -> float:
        return self.birth_rate - self.death_rate

    @property
    def up_prob(self) -> float:
        return self.birth_rate / (self.birth_rate + self.death_rate)

    @classmethod
    def supercritical(cls, params: ModelParams) -> "GwParams":
        """Rates ``(1 + a phi, 1)`` of the process accompanying the mutant."""
        return cls(1.0 + params.s, 1.0)

    @classmethod
    def subcritical(cls, params: ModelParams) -> "GwParams":
        """Rates ``(1, 1 + a phi)`` of the process accompanying the resident."""
        return cls(1.0, 1.0 + params.s)


@dataclass(frozen=True)
class StopRule:
    """Stop at the first of: hitting ``level``, passing ``horizon``, absorption at 0."""

    level: int | None = None
    horizon: float = math.inf

    def check(self, params: GwParams, conditioned: bool = False) -> None:
        if self.level is not None or math.isfinite(self.horizon):
            return
        if conditioned or params.birth_rate > params.death_rate:
            raise ValueError("stop rule is not a.s. finite: give a level or a horizon")


@dataclass
class GwPath:
    """Jump times and sizes after each jump; ``end_time`` is where recording stopped."""

    start: int
    times: np.ndarray
    sizes: np.ndarray
    absorbed: bool
    end_time: float

    @property
    def final_size(self) -> int:
        return int(self.sizes[-1]) if len(self.sizes) else self.start

    def size_at(self, t: float) -> int:
        i = np.searchsorted(self.times, t, side="right")
        return self.start if i == 0 else int(self.sizes[i - 1])

    def hitting_time(self, level: int) -> float:
        if self.start == level:
            return 0.0
        idx = np.flatnonzero(self.sizes == level)
        return float(self.times[idx[0]]) if len(idx) else math.inf

    def breakpoints(self) -> tuple[np.ndarray, np.ndarray]:
        """``(times, sizes)`` including the initial state at time 0."""
        return (np.concatenate(([0.0], self.times)),
                np.concatenate(([self.start], self.sizes)).astype(np.int64))


# --------------------------------------------------------------------------
# compiled kernels


@njit(cache=True, nogil=True)
def _h_up(k, log_r):
    # (1 - r^(k+1)) / ((1 + r)(1 - r^k)) with r = exp(log_r) < 1
    return math.expm1((k + 1) * log_r) / ((1.0 + math.exp(log_r)) * math.expm1(k * log_r))


@njit(cache=True, nogil=True)
def _gw_path_kernel(lam, mu, start, level, horizon, conditioned, seed, cap):
    s = new_state(seed)
    size = 64
    times = np.empty(size)
    sizes = np.empty(size, dtype=np.int64)
    n = 0
    t = 0.0
    comp = 0.0
    k = start
    total = lam + mu
    p = lam / total
    log_r = math.log(mu / lam) if (conditioned and mu > 0) else -np.inf
    status = _STOP_ABSORBED
    if k == level:
        return times[:0], sizes[:0], _STOP_LEVEL, 0.0
    while True:
        if k == 0:
            status = _STOP_ABSORBED
            break
        if n >= cap:
            status = _STOP_CAP
            break
        dt = exponential(s) / (total * k)
        if t + dt > horizon:
            t = horizon
            status = _STOP_HORIZON
            break
        # compensated summation of sojourn times
        y = dt - comp
        tn = t + y
        comp = (tn - t) - y
        t = tn
        up = _h_up(k, log_r) if conditioned else p
        if uniform(s) < up:
            k += 1
        else:
            k -= 1
        if n == size:
            size *= 2
            nt = np.empty(size)
            ns = np.empty(size, dtype=np.int64)
            nt[:n] = times[:n]
            ns[:n] = sizes[:n]
            times = nt
            sizes = ns
        times[n] = t
        sizes[n] = k
        n += 1
        if k == level:
            status = _STOP_LEVEL
            break
    return times[:n], sizes[:n], status, t


@njit(cache=True, nogil=True)
def _gw_run(lam, mu, start, level, horizon, conditioned, seed, cap):
    """Like ``_gw_path_kernel`` but keeps only (final size, end time, status, events)."""
    s = new_state(seed)
    t = 0.0
    comp = 0.0
    k = start
    total = lam + mu
    p = lam / total
    log_r = math.log(mu / lam) if (conditioned and mu > 0) else -np.inf
    n = 0
    if k == level:
        return k, 0.0, _STOP_LEVEL, 0
    while True:
        if k == 0:
            return 0, t, _STOP_ABSORBED, n
        if n >= cap:
            return k, t, _STOP_CAP, n
        dt = exponential(s) / (total * k)
        if t + dt > horizon:
            return k, horizon, _STOP_HORIZON, n
        y = dt - comp
        tn = t + y
        comp = (tn - t) - y
        t = tn
        up = _h_up(k, log_r) if conditioned else p
        if uniform(s) < up:
            k += 1
        else:
            k -= 1
        n += 1
        if k == level:
            return k, t, _STOP_LEVEL, n


@njit(cache=True, nogil=True)
def _gw_batch(lam, mu, start, level, horizon, conditioned, seeds, cap):
    m = len(seeds)
    final = np.empty(m, dtype=np.int64)
    end = np.empty(m)
    status = np.empty(m, dtype=np.int64)
    for i in range(m):
        final[i], end[i], status[i], _ = _gw_run(
            lam, mu, start, level, horizon, conditioned, seeds[i], cap)
    return final, end, status


@njit(cache=True, nogil=True)
def _jump_marginal_batch(lam, mu, n_jumps, conditioned, seeds):
    """Size after ``n_jumps`` jumps from 1 (0 if absorbed earlier)."""
    out = np.empty(len(seeds), dtype=np.int64)
    p = lam / (lam + mu)
    log_r = math.log(mu / lam) if (conditioned and mu > 0) else -np.inf
    for i in range(len(seeds)):
        s = new_state(seeds[i])
        k = 1
        for _ in range(n_jumps):
            if k == 0:
                break
            up = _h_up(k, log_r) if conditioned else p
            k += 1 if uniform(s) < up else -1
        out[i] = k
    return out


@njit(cache=True, nogil=True)
def _jump_marginal_rejection_batch(lam, mu, n_jumps, proxy_level, seeds):
    """Size after ``n_jumps`` jumps, or -1 if the replicate dies before ``proxy_level``."""
    out = np.empty(len(seeds), dtype=np.int64)
    p = lam / (lam + mu)
    for i in range(len(seeds)):
        s = new_state(seeds[i])
        k = 1
        mark = 1
        n = 0
        while 0 < k < proxy_level:
            k += 1 if uniform(s) < p else -1
            n += 1
            if n == n_jumps:
                mark = k
        if n < n_jumps:
            mark = k
        out[i] = mark if k > 0 else -1
    return out


# --------------------------------------------------------------------------
# public operations


def _level_arg(level):
    return -1 if level is None else int(level)


def simulate_gw(params: GwParams, start: int, stop: StopRule, rng=None,
                cap: int = DEFAULT_EVENT_CAP) -> GwPath:
    """Simulate one path from ``start`` until ``stop`` fires."""
    if start < 0:
        raise ValueError("start must be nonnegative")
    if start == 0:
        return GwPath(0, np.empty(0), np.empty(0, dtype=np.int64), True, 0.0)
    stop.check(params)
    times, sizes, status, end = _gw_path_kernel(
        float(params.birth_rate), float(params.death_rate), int(start),
        _level_arg(stop.level), float(stop.horizon), False, kernel_seed(rng), int(cap))
    if status == _STOP_CAP:
        raise CapExceeded(f"more than {cap} events")
    return GwPath(int(start), times, sizes, status == _STOP_ABSORBED, float(end))


def simulate_gw_conditioned_survival(params: GwParams, stop: StopRule, rng=None,
                                     cap: int = DEFAULT_EVENT_CAP) -> GwPath:
    """Path from 1 conditioned on never dying out.

    ``stop`` must contain a level or a finite horizon; the conditioned chain
    itself never terminates.
    """
    if not params.birth_rate > params.death_rate:
        raise ValueError("survival has probability zero unless birth_rate > death_rate")
    stop.check(params, conditioned=True)
    times, sizes, status, end = _gw_path_kernel(
        float(params.birth_rate), float(params.death_rate), 1,
        _level_arg(stop.level), float(stop.horizon), True, kernel_seed(rng), int(cap))
    if status == _STOP_CAP:
        raise CapExceeded(f"more than {cap} events")
    return GwPath(1, times, sizes, False, float(end))


def gw_tail_prob(params: GwParams, t: float, j: int) -> float:
    """``P(Z(t) >= j)`` for ``Z(0) = 1`` (non-critical case)."""
    lam, mu = params.birth_rate, params.death_rate
    if lam == mu:
        raise ValueError("critical case unsupported")
    if lam <= 0 or mu <= 0:
        raise ValueError("closed form needs strictly positive rates")
    if j < 1:
        raise ValueError("j must be a positive integer")
    r = lam - mu
    # exp(-r t) and exp(r t) may overflow separately for large |r t|
    if r * t < 700:
        alive = r / (lam - mu * math.exp(-r * t))
        ratio = 1.0 - r / (lam * math.exp(r * t) - mu)
    else:
        alive = r / lam
        ratio = 1.0
    val = alive * ratio ** (j - 1)
    return min(1.0, max(0.0, val))


def gw_survival_prob(params: GwParams) -> float:
    """Probability that the process started from 1 never dies out.

    Returns 0.0 with a :class:`SubcriticalWarning` when ``birth_rate <= death_rate``.
    """
    lam, mu = params.birth_rate, params.death_rate
    if lam <= mu:
        warnings.warn("subcritical or critical: survival probability is 0", SubcriticalWarning,
                      stacklevel=2)
        return 0.0
    return (lam - mu) / lam


def gw_mean_var(params: GwParams, start: int, t: float) -> tuple[float, float]:
    lam, mu = params.birth_rate, params.death_rate
    r = lam - mu
    if r == 0:
        raise ValueError("critical case unsupported")
    g = math.exp(r * t)
    return start * g, start * (lam + mu) / r * (g * g - g)


def sample_sizes(params: GwParams, start: int, t: float, n: int, seed: int,
                 cap: int = DEFAULT_EVENT_CAP) -> np.ndarray:
    """``Z(t)`` over ``n`` independent replicates."""
    seeds = replicate_seeds(seed, n)
    final, _, status = _gw_batch(float(params.birth_rate), float(params.death_rate),
                                 int(start), -1, float(t), False, seeds, int(cap))
    if np.any(status == _STOP_CAP):
        raise CapExceeded(f"more than {cap} events")
    return final


def sample_absorbed(params: GwParams, start: int, n: int, seed: int, level: int,
                    cap: int = DEFAULT_EVENT_CAP) -> np.ndarray:
    """Absorption indicators, each replicate run until it dies or reaches ``level``."""
    seeds = replicate_seeds(seed, n)
    final, _, status = _gw_batch(float(params.birth_rate), float(params.death_rate),
                                 int(start), int(level), math.inf, False, seeds, int(cap))
    if np.any(status == _STOP_CAP):
        raise CapExceeded(f"more than {cap} events")
    return status == _STOP_ABSORBED


def jump_marginal(params: GwParams, n_jumps: int, n: int, seed: int,
                  conditioned: bool) -> np.ndarray:
    """Size after ``n_jumps`` jumps of the chain started at 1 (0 once absorbed)."""
    if conditioned and not params.birth_rate > params.death_rate:
        raise ValueError("conditioning on survival needs birth_rate > death_rate")
    return _jump_marginal_batch(float(params.birth_rate), float(params.death_rate),
                                int(n_jumps), bool(conditioned), replicate_seeds(seed, n))


def jump_marginal_rejection(params: GwParams, n_jumps: int, n: int, seed: int,
                            proxy_level: int = 200) -> np.ndarray:
    """Rejection oracle for the survival-conditioned jump chain.

    Runs the plain chain from 1 and keeps replicates that reach
    ``proxy_level`` before 0; reaching that level stands in for survival,
    which leaves a bias of order ``(mu/lam)**proxy_level``.
    """
    if not params.birth_rate > params.death_rate:
        raise ValueError("conditioning on survival needs birth_rate > death_rate")
    out = _jump_marginal_rejection_batch(float(params.birth_rate), float(params.death_rate),
                                         int(n_jumps), int(proxy_level), replicate_seeds(seed, n))
    return out[out >= 0]


# --------------------------------------------------------------------------
# phase statistics


@njit(cache=True, nogil=True)
def _sup_dev_linear(times, sizes, start, t_end, scale, log_base, intercept, slope):
    """sup over [0, t_end] of |log_N^+(Z(u * scale)) - (intercept + slope*u)|.

    ``times`` are jump times in the unscaled clock, ``sizes`` the sizes after
    each jump. Exact: on each constant piece the deviation from a line is
    maximal at an endpoint.
    """
    best = 0.0
    t0 = 0.0
    k = start
    i = 0
    n = len(times)
    while True:
        t1 = times[i] / scale if i < n else t_end
        if t1 > t_end:
            t1 = t_end
        v = math.log(k) / log_base if k > 1 else 0.0
        d0 = abs(v - (intercept + slope * t0))
        d1 = abs(v - (intercept + slope * t1))
        if d0 > best:
            best = d0
        if d1 > best:
            best = d1
        if t1 >= t_end or i >= n:
            break
        k = sizes[i]
        t0 = t1
        i += 1
    return best


def log_growth_deviation(params: ModelParams, start: int, supercritical: bool,
                         horizon: float, rng=None, intercept: float | None = None,
                         cap: int = DEFAULT_EVENT_CAP) -> float:
    """sup over ``t <= horizon`` of ``|log_N^+ Z(t log N / phi) - (beta +- a t)|``.

    ``Z`` starts at ``start`` with rates ``(1 + a phi, 1)`` if ``supercritical``
    else ``(1, 1 + a phi)``; ``beta`` defaults to ``log_N(start)``.
    """
    params.require_selection()
    gw = GwParams.supercritical(params) if supercritical else GwParams.subcritical(params)
    scale = params.time_scale
    path = simulate_gw(gw, start, StopRule(horizon=horizon * scale), rng, cap)
    beta = math.log(start) / params.log_N if intercept is None else intercept
    slope = params.a if supercritical else -params.a
    return float(_sup_dev_linear(path.times, path.sizes, start, horizon, scale,
                                 params.log_N, beta, slope))


def phase4_eps(N: int) -> float:
    """Default vanishing margin ``1/log log N`` for the resident decline window."""
    return 1.0 / math.log(math.log(N))


def phase_statistic(phase: int, params: ModelParams, rng=None, horizon: float | None = None,
                    eps: float | None = None, cap: int = DEFAULT_EVENT_CAP) -> float:
    """One replicate of the statistic that vanishes (or converges) in phase ``phase``.

    1: rescaled time for the surviving mutant process to reach ``log N / phi``;
    2: uniform log-deviation from ``b + a t`` after starting at ``log N / phi``;
    3: time from ``N/sqrt(log N)`` to ``N(1 - 1/sqrt(log N))`` in units ``sqrt(log N)/phi``;
    4: uniform log-deviation of the declining resident from ``beta - a t``;
    5: rescaled extinction time of the resident from ``log N / phi``.
    """
    params.require_selection()
    N, phi, a, b = params.N, params.phi, params.a, params.b
    logN = params.log_N
    sup = GwParams.supercritical(params)
    sub = GwParams.subcritical(params)
    if phase == 1:
        level = params.level_drift
        path = simulate_gw_conditioned_survival(sup, StopRule(level=level), rng, cap)
        return phi / logN * path.hitting_time(level)
    if phase == 2:
        T = (1.0 - b) / a if horizon is None else horizon
        return log_growth_deviation(params, params.level_drift, True, T, rng,
                                    intercept=b, cap=cap)
    if phase == 3:
        level = params.level_34
        path = simulate_gw(sup, params.level_low, StopRule(level=level), rng, cap)
        return phi / math.sqrt(logN) * path.hitting_time(level)
    if phase == 4:
        e = phase4_eps(N) if eps is None else eps
        T = (1.0 - b - e) / a if horizon is None else horizon
        if T <= 0:
            raise ValueError(f"empty decline window at N={N}: (1 - b - eps)/a <= 0")
        return log_growth_deviation(params, params.level_low, False, T, rng, cap=cap)
    if phase == 5:
        path = simulate_gw(sub, params.level_drift, StopRule(), rng, cap)
        return phi / logN * path.end_time
    raise ValueError(f"phase must be in 1..5, got {phase}")
