"""Discrete-time nearest-neighbour walks behind the sweep fluctuation bounds.

* the walk with up-probability ``p > 1/2`` conditioned never to hit 0
  (``W*_p``); its up-probability from ``k`` is
  ``(1 - r^(k+1)) / ((1 + r)(1 - r^k))`` with ``r = (1 - p)/p``;
* the Bessel-like walk ``W*_{1/2}`` with up-probability ``(k+1)/(2k)``;
* time reversal of excursions from ``N`` down to 0;
* logarithmic drawdown functionals and the log-LIL statistic.

Exhaustive path enumeration with an explicit length cap is provided for
exact comparisons on small state spaces.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ._rand import new_state, uniform
from .gw_branching import DEFAULT_EVENT_CAP, CapExceeded
from .params import ModelParams
from .rng import kernel_seed, replicate_seeds

__all__ = [
    "LatticePath", "PathFunctionals", "h_transform_up_prob", "bessel_up_prob",
    "drift_gap_log", "drift_dominates", "simulate_conditioned_walk", "simulate_bessel",
    "simulate_walk", "reverse_path", "path_functionals", "log_drawdown_up",
    "log_drawdown_down", "lil_fluctuation_stat", "up_prob_mutant", "up_prob_resident",
    "enumerate_paths", "naive_path_probs", "chain_path_probs", "reverse_paths",
    "drawdown_up_batch", "drawdown_down_batch", "lil_batch", "default_lil_steps",
]

LIL_EXPONENT = 2.5
LIL_STEP_CAP = 31_622_777  # 1000^2.5


@dataclass(frozen=True, eq=False)
class LatticePath:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.int64)
        if v.ndim != 1 or len(v) == 0:
            raise ValueError("a lattice path needs at least one value")
        if len(v) > 1 and not np.all(np.abs(np.diff(v)) == 1):
            raise ValueError("steps must be +1 or -1")
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.values)

    def equals(self, other: "LatticePath") -> bool:
        return np.array_equal(self.values, other.values)


# --------------------------------------------------------------------------
# transition probabilities


def up_prob_mutant(params: ModelParams) -> float:
    """Up-probability ``(1 + a phi)/(2 + a phi)`` of the mutant jump chain."""
    return (1.0 + params.s) / (2.0 + params.s)


def up_prob_resident(params: ModelParams) -> float:
    """Up-probability ``1/(2 + a phi)`` of the resident jump chain."""
    return 1.0 / (2.0 + params.s)


def _check_p(p: float) -> None:
    if not 0.5 < p < 1:
        raise ValueError("p must lie in (1/2, 1)")


def h_transform_up_prob(k: int, p: float) -> float:
    """Up-probability from ``k >= 1`` of the walk conditioned to survive."""
    _check_p(p)
    if k < 1:
        raise ValueError("k must be at least 1")
    if k == 1:
        return 1.0
    log_r = math.log1p(-p) - math.log(p)
    return math.expm1((k + 1) * log_r) / ((1.0 + math.exp(log_r)) * math.expm1(k * log_r))


def bessel_up_prob(k: int) -> float:
    """``(k + 1)/(2k)`` for ``k >= 1``; the step from 0 is forced up."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    return 1.0 if k == 0 else (k + 1) / (2 * k)


def drift_gap_log(p: float, k_max: int) -> np.ndarray:
    """``log(h(k) - B(k))`` for ``k = 2..k_max`` in log-space.

    ``h`` is the conditioned up-probability and ``B`` the Bessel one. The
    difference factors as ``(1 - r)^3 Q(r) / (2k (1 + r)(1 - r^k))`` with
    ``Q(r) = sum_{j=1}^{k-1} j (k - j) r^(j-1)``, a sum of positive terms,
    so every factor is evaluated without cancellation.
    """
    _check_p(p)
    if k_max < 2:
        return np.empty(0)
    log_r = math.log1p(-p) - math.log(p)
    r = math.exp(log_r)
    j = np.arange(1, k_max, dtype=np.float64)
    log_j = np.log(j)
    pw = (j - 1) * log_r
    out = np.empty(k_max - 1)
    const = 3.0 * math.log1p(-r) - math.log1p(r)
    for k in range(2, k_max + 1):
        terms = log_j[: k - 1] + log_j[k - 2:: -1] + pw[: k - 1]
        m = terms.max()
        log_q = m + math.log(np.exp(terms - m).sum())
        out[k - 2] = const + log_q - math.log(2 * k) - math.log(-math.expm1(k * log_r))
    return out


def drift_dominates(p: float, k_max: int) -> bool:
    """Whether the conditioned walk drifts up strictly more than the Bessel walk.

    At ``k = 1`` both up-probabilities equal 1, so strictness is checked for
    ``2 <= k <= k_max``; the ``k = 1`` equality is verified as well.
    """
    if h_transform_up_prob(1, p) != 1.0 or bessel_up_prob(1) != 1.0:
        return False
    gap = drift_gap_log(p, k_max)
    return bool(np.all(np.isfinite(gap)))


# --------------------------------------------------------------------------
# simulation kernels


@njit(cache=True, nogil=True)
def _cond_up(k, log_r, bessel):
    if k <= 1:
        return 1.0
    if bessel:
        return (k + 1) / (2.0 * k)
    return math.expm1((k + 1) * log_r) / ((1.0 + math.exp(log_r)) * math.expm1(k * log_r))


@njit(cache=True, nogil=True)
def _push(buf, n, v):
    if n == len(buf):
        nb = np.empty(2 * len(buf), dtype=np.int64)
        nb[:n] = buf[:n]
        buf = nb
    buf[n] = v
    return buf


@njit(cache=True, nogil=True)
def _walk_kernel(mode, p, start, lo, hi, n_steps, seed, cap):
    """mode 0: plain walk until lo or hi; 1: conditioned until hi; 2: Bessel for n_steps."""
    st = new_state(seed)
    buf = np.empty(1024, dtype=np.int64)
    buf[0] = start
    n = 1
    k = start
    log_r = math.log1p(-p) - math.log(p) if mode == 1 else 0.0
    steps = 0
    while True:
        if mode == 0 and (k <= lo or k >= hi):
            break
        if mode == 1 and k >= hi:
            break
        if mode == 2 and steps >= n_steps:
            break
        if steps >= cap:
            return buf[:n], True
        if mode == 0:
            up = p
        else:
            up = _cond_up(k, log_r, mode == 2)
        k += 1 if uniform(st) < up else -1
        buf = _push(buf, n, k)
        n += 1
        steps += 1
    return buf[:n], False


def simulate_walk(p: float, start: int, lo: int, hi: int, rng=None,
                  cap: int = DEFAULT_EVENT_CAP) -> LatticePath:
    """Plain walk with up-probability ``p`` from ``start`` until it hits ``lo`` or ``hi``."""
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    vals, capped = _walk_kernel(0, float(p), int(start), int(lo), int(hi), 0,
                                kernel_seed(rng), int(cap))
    if capped:
        raise CapExceeded(f"more than {cap} steps")
    return LatticePath(vals)


def simulate_conditioned_walk(p: float, start: int, stop_level: int, rng=None,
                              cap: int = DEFAULT_EVENT_CAP) -> LatticePath:
    """``W*_p`` from ``start`` until it first reaches ``stop_level``.

    From 0 the first step is forced up (the walk is conditioned never to
    return to 0).
    """
    _check_p(p)
    if start < 0 or stop_level < start:
        raise ValueError("need 0 <= start <= stop_level")
    vals, capped = _walk_kernel(1, float(p), int(start), 0, int(stop_level), 0,
                                kernel_seed(rng), int(cap))
    if capped:
        raise CapExceeded(f"more than {cap} steps")
    return LatticePath(vals)


def simulate_bessel(start: int, n_steps: int, rng=None) -> LatticePath:
    """``n_steps`` steps of the Bessel-like walk ``W*_{1/2}``."""
    if start < 0 or n_steps < 0:
        raise ValueError("start and n_steps must be nonnegative")
    vals, _ = _walk_kernel(2, 0.5, int(start), 0, 0, int(n_steps), kernel_seed(rng),
                           DEFAULT_EVENT_CAP)
    return LatticePath(vals)


# --------------------------------------------------------------------------
# reversal and path functionals


def reverse_path(w: LatticePath) -> LatticePath:
    """Index reversal of a path that starts at ``N``, ends at 0 and never returns to ``N``."""
    v = w.values
    N = v[0]
    if N < 1 or v[-1] != 0 or np.any(v[1:] >= N) or np.any(v[:-1] <= 0):
        raise ValueError("path must start at N >= 1, reach 0 only at the end and not return to N")
    return LatticePath(v[::-1].copy())


@dataclass
class PathFunctionals:
    """First visits, first returns, last visits before 0 and the pre-0 maximum.

    Levels that are never visited (or functionals that need a visit to 0
    when the path does not reach 0) are absent from the maps; ``S`` is
    ``None`` if the path never hits 0.
    """

    tau: dict = field(default_factory=dict)
    tau_plus: dict = field(default_factory=dict)
    sigma: dict = field(default_factory=dict)
    S: int | None = None


def path_functionals(w: LatticePath) -> PathFunctionals:
    v = w.values
    out = PathFunctionals()
    for n, x in enumerate(v.tolist()):
        out.tau.setdefault(x, n)
        if n >= 1:
            out.tau_plus.setdefault(x, n)
    zeros = np.flatnonzero(v == 0)
    if len(zeros):
        t0 = int(zeros[0])
        head = v[: t0 + 1]
        out.S = int(head.max())
        for n, x in enumerate(head.tolist()):
            if x >= 0:
                out.sigma[x] = n
    return out


@njit(cache=True, nogil=True)
def _drawdown_up(v, N):
    log_n = math.log(N)
    best = 0.0
    M = v[0]
    for n in range(len(v)):
        x = v[n]
        if x > M:
            M = x
        if M > N:
            break
        if x <= 0:
            return np.inf
        d = (math.log(M) - math.log(x)) / log_n
        if d > best:
            best = d
    return best


@njit(cache=True, nogil=True)
def _drawdown_down(v, N):
    """Returns (part before sigma_S, part over last-visit windows); -1 if 0 is not hit."""
    t0 = -1
    for n in range(len(v)):
        if v[n] == 0:
            t0 = n
            break
    if t0 < 0:
        return -1.0, -1.0
    S = 0
    for n in range(t0):
        if v[n] > S:
            S = v[n]
    last = np.full(S + 1, -1, dtype=np.int64)
    for n in range(t0 + 1):
        last[v[n]] = n
    log_n = math.log(N)
    first = 0.0
    second = 0.0
    k = S
    for n in range(t0):
        while k > 1 and n >= last[k - 1]:
            k -= 1
        d_level = (math.log(k) - math.log(v[n])) / log_n
        if n < last[S]:
            d_top = (math.log(S) - math.log(v[n])) / log_n
            if d_top > first:
                first = d_top
        else:
            if d_level > second:
                second = d_level
    return first, second


def log_drawdown_up(w: LatticePath, N: int) -> float:
    """``max_k max_{tau_k <= n < tau_{k+1}} (log_N k - log_N w(n))`` over levels ``k <= N``."""
    if N < 2:
        raise ValueError("N must be at least 2")
    return float(_drawdown_up(w.values, int(N)))


def log_drawdown_down(w: LatticePath, N: int, parts: bool = False):
    """Largest logarithmic drop below the last-visit levels of a path that hits 0.

    The first part is ``max_{n < sigma_S} (log_N S - log_N w(n))``; the second is
    ``max_{S >= k > 0} max_{sigma_k <= n < sigma_{k-1}} (log_N k - log_N w(n))``.
    Returns their maximum, or both with ``parts=True``.
    """
    if N < 2:
        raise ValueError("N must be at least 2")
    first, second = _drawdown_down(w.values, int(N))
    if first < 0:
        raise ValueError("path never hits 0: last-visit functionals are undefined")
    return (first, second) if parts else max(first, second)


# --------------------------------------------------------------------------
# LIL statistic


@njit(cache=True, nogil=True)
def _lil_kernel(n_max, N, seed):
    # |log k - log sqrt(n)| = |log(k^2/n)|/2: track both ratio extremes, one log at the end
    st = new_state(seed)
    k = 0
    hi = 1.0
    lo = 1.0
    for n in range(1, n_max + 1):
        # up with probability (k+1)/(2k); certain at k = 0, 1
        k += 2 * (uniform(st) * (2 * k) < k + 1) - 1
        kk = float(k * k)
        if kk > hi * n:
            hi = kk / n
        elif kk < lo * n:
            lo = kk / n
    return 0.5 * max(math.log(hi), -math.log(lo)) / math.log(N)


def default_lil_steps(N: int) -> int:
    """``N^2.5`` steps, capped at ``LIL_STEP_CAP`` to keep runtimes bounded."""
    return int(min(N ** LIL_EXPONENT, LIL_STEP_CAP))


def lil_fluctuation_stat(n_max: int, N: int, rng=None) -> float:
    """``sup_{1 <= n <= n_max} |log_N W*(n) - log_N sqrt(n)|`` for the Bessel-like walk from 0."""
    if n_max < 1 or N < 2:
        raise ValueError("need n_max >= 1 and N >= 2")
    return float(_lil_kernel(int(n_max), int(N), kernel_seed(rng)))


# --------------------------------------------------------------------------
# batches


@njit(cache=True, nogil=True)
def _drawdown_up_batch(p, N, seeds, cap):
    out = np.empty(len(seeds))
    for i in range(len(seeds)):
        v, capped = _walk_kernel(1, p, 1, 0, N, 0, seeds[i], cap)
        out[i] = np.nan if capped else _drawdown_up(v, N)
    return out


@njit(cache=True, nogil=True)
def _drawdown_down_batch(p, N, start, seeds, cap):
    out = np.empty(len(seeds))
    for i in range(len(seeds)):
        # run to 0; paths that reach the ceiling N are kept running (ceiling unused)
        v, capped = _walk_kernel(0, p, start, 0, 1 << 62, 0, seeds[i], cap)
        if capped:
            out[i] = np.nan
        else:
            a, b = _drawdown_down(v, N)
            out[i] = max(a, b)
    return out


@njit(cache=True, nogil=True)
def _lil_batch(n_max, N, seeds):
    out = np.empty(len(seeds))
    for i in range(len(seeds)):
        out[i] = _lil_kernel(n_max, N, seeds[i])
    return out


def drawdown_up_batch(p: float, N: int, n: int, seed: int,
                      cap: int = DEFAULT_EVENT_CAP) -> np.ndarray:
    """Up-drawdown of ``n`` conditioned walks from 1 to ``N``."""
    _check_p(p)
    out = _drawdown_up_batch(float(p), int(N), replicate_seeds(seed, n), int(cap))
    if np.isnan(out).any():
        raise CapExceeded(f"more than {cap} steps")
    return out


def drawdown_down_batch(p: float, N: int, n: int, seed: int, start: int | None = None,
                        cap: int = DEFAULT_EVENT_CAP) -> np.ndarray:
    """Down-drawdown of ``n`` walks from ``floor(N/sqrt(log N))`` (default) to 0."""
    if not 0 < p < 0.5:
        raise ValueError("p must lie in (0, 1/2)")
    k0 = int(N / math.sqrt(math.log(N))) if start is None else int(start)
    out = _drawdown_down_batch(float(p), int(N), k0, replicate_seeds(seed, n), int(cap))
    if np.isnan(out).any():
        raise CapExceeded(f"more than {cap} steps")
    return out


def lil_batch(N: int, n: int, seed: int, n_max: int | None = None) -> np.ndarray:
    steps = default_lil_steps(N) if n_max is None else int(n_max)
    return _lil_batch(steps, int(N), replicate_seeds(seed, n))


# --------------------------------------------------------------------------
# exhaustive enumeration


@njit(cache=True)
def _enumerate(start, target, forbidden, cap):
    lo = min(target, forbidden)
    hi = max(target, forbidden)
    width = cap + 1
    rows = 1024
    paths = np.full((rows, width), -1, dtype=np.int16)
    lengths = np.empty(rows, dtype=np.int64)
    count = 0
    stack = np.empty(width, dtype=np.int64)
    # choice[d]: 0 = try up next, 1 = try down next, 2 = exhausted
    choice = np.zeros(width, dtype=np.int64)
    stack[0] = start
    depth = 0
    while depth >= 0:
        x = stack[depth]
        done = depth > 0 and (x == target)
        if done:
            if count == rows:
                rows *= 2
                np_ = np.full((rows, width), -1, dtype=np.int16)
                np_[:count] = paths[:count]
                paths = np_
                nl = np.empty(rows, dtype=np.int64)
                nl[:count] = lengths[:count]
                lengths = nl
            for d in range(depth + 1):
                paths[count, d] = stack[d]
            lengths[count] = depth
            count += 1
            depth -= 1
            continue
        if depth == cap or choice[depth] == 2:
            choice[depth] = 0
            depth -= 1
            continue
        step = 1 if choice[depth] == 0 else -1
        choice[depth] += 1
        y = x + step
        if y == target or lo < y < hi:
            depth += 1
            stack[depth] = y
            choice[depth] = 0
    return paths[:count], lengths[:count]


def enumerate_paths(start: int, target: int, forbidden: int, cap: int = 40):
    """All +-1 paths from ``start`` that reach ``target`` within ``cap`` steps
    while staying strictly between ``target`` and ``forbidden`` in between.

    ``start`` may equal ``forbidden`` (paths that leave it and never return).
    Returns ``(paths, lengths)``: rows padded with -1 and step counts. Paths
    longer than ``cap`` are omitted; their total mass is what the caller's
    exact normaliser leaves over.
    """
    if cap < 1:
        raise ValueError("cap must be positive")
    return _enumerate(int(start), int(target), int(forbidden), int(cap))


def naive_path_probs(paths: np.ndarray, lengths: np.ndarray, p: float) -> np.ndarray:
    """``p^(up steps) (1 - p)^(down steps)`` for every enumerated path."""
    up, down = _step_counts(paths, lengths)
    return np.exp(up * math.log(p) + down * math.log1p(-p))


def _step_counts(paths, lengths):
    steps = np.diff(paths.astype(np.int64), axis=1)
    valid = np.arange(steps.shape[1])[None, :] < lengths[:, None]
    up = ((steps == 1) & valid).sum(axis=1)
    return up, lengths - up


def chain_path_probs(paths: np.ndarray, lengths: np.ndarray, up_prob) -> np.ndarray:
    """Probability of each path under the chain with state-dependent ``up_prob(k)``."""
    top = int(paths.max()) + 1
    table = np.array([up_prob(k) for k in range(top)], dtype=np.float64)
    steps = np.diff(paths.astype(np.int64), axis=1)
    valid = np.arange(steps.shape[1])[None, :] < lengths[:, None]
    here = np.clip(paths[:, :-1], 0, None).astype(np.int64)
    pu = table[here]
    factor = np.where(steps == 1, pu, 1.0 - pu)
    factor = np.where(valid, factor, 1.0)
    return np.exp(np.log(factor).sum(axis=1))


def reverse_paths(paths: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Row-wise :func:`reverse_path` for an enumerated batch."""
    cols = np.arange(paths.shape[1])[None, :]
    src = lengths[:, None] - cols
    out = np.where(src >= 0, np.take_along_axis(paths, np.clip(src, 0, None), axis=1), -1)
    return out.astype(paths.dtype)
