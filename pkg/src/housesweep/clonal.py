"""Recurrent beneficial mutations and the interacting-trajectory limit.

``simulate_multi_moran`` runs the Moran model in which an individual of
fitness level ``M`` replaces one of level ``M'`` at rate
``(1 + (M - M')^+) / N`` per ordered pair, while mutations arrive at rate
``lambda / log N`` and add ``A phi`` to the fitness of a uniformly chosen
individual. Families are the offspring of single mutation events.

``pit_evolve`` runs the deterministic system of piecewise-linear
trajectories that the log-frequencies of contender families should follow
on the time scale ``log N / phi``. All event times are computed exactly
with :class:`fractions.Fraction`.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numba import njit

from ._rand import exponential, new_state, uniform
from .gw_branching import DEFAULT_EVENT_CAP, CapExceeded
from .m1 import CadlagPath, M1Bracket, last_at_each_time, m1_distance
from .params import ModelParams
from .rng import as_generator, kernel_seed

__all__ = [
    "GammaSpec", "Family", "MultiMoranState", "simulate_multi_moran", "contender_threshold",
    "PitTrajectory", "PitSystem", "pit_evolve", "sample_pit_marks", "write_marks_json",
    "read_marks_json", "write_pit_csv", "pit_vs_moran_distance",
    "LATENT", "ACTIVE", "RESIDENT", "DEAD",
]

LATENT, ACTIVE, RESIDENT, DEAD = "latent", "active", "fixed-resident", "dead"


# --------------------------------------------------------------------------
# increment distributions


@dataclass(frozen=True)
class GammaSpec:
    """Distribution ``gamma`` of fitness increments ``A > 0``.

    Either finite support (``values``, ``weights``), sampled and size-biased
    exactly, or a continuous ``sampler`` with a bound ``upper`` on its
    support, size-biased by rejection.
    """

    values: tuple = ()
    weights: tuple = ()
    sampler: Callable[[np.random.Generator], float] | None = None
    upper: float | None = None

    def __post_init__(self):
        if self.sampler is None:
            if not self.values or len(self.values) != len(self.weights):
                raise ValueError("finite support needs matching values and weights")
            if min(self.values) <= 0 or min(self.weights) < 0 or sum(self.weights) <= 0:
                raise ValueError("values must be positive and weights nonnegative")
        elif self.upper is None or not self.upper > 0:
            raise ValueError("a continuous sampler needs a positive support bound")

    @classmethod
    def point(cls, a: float) -> "GammaSpec":
        return cls((float(a),), (1.0,))

    @classmethod
    def finite(cls, values: Sequence[float], weights: Sequence[float]) -> "GammaSpec":
        return cls(tuple(float(v) for v in values), tuple(float(w) for w in weights))

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "GammaSpec":
        if not 0 < lo < hi:
            raise ValueError("need 0 < lo < hi")
        return cls(sampler=lambda g: float(g.uniform(lo, hi)), upper=float(hi))

    @property
    def is_finite(self) -> bool:
        return self.sampler is None

    def _probs(self, biased: bool) -> np.ndarray:
        w = np.asarray(self.weights, dtype=np.float64)
        if biased:
            w = w * np.asarray(self.values)
        return w / w.sum()

    def sample(self, rng, n: int) -> np.ndarray:
        g = as_generator(rng)
        if self.is_finite:
            return np.asarray(self.values)[g.choice(len(self.values), size=n, p=self._probs(False))]
        return np.array([self.sampler(g) for _ in range(n)], dtype=np.float64)

    def sample_size_biased(self, rng, n: int) -> np.ndarray:
        """Draws from ``x gamma(dx) / E[A]``."""
        g = as_generator(rng)
        if self.is_finite:
            return np.asarray(self.values)[g.choice(len(self.values), size=n, p=self._probs(True))]
        out = np.empty(n)
        for i in range(n):
            while True:
                x = self.sampler(g)
                if g.random() * self.upper < x:
                    out[i] = x
                    break
        return out

    def mean(self) -> float:
        if not self.is_finite:
            raise ValueError("mean is only known exactly for finite support")
        return float(np.dot(self._probs(False), self.values))


# --------------------------------------------------------------------------
# multi-type Moran model


@dataclass
class Family:
    index: int
    parent: int
    arrival: float
    increment: float
    fitness: float
    max_count: int
    extinction: float
    contender: bool


@dataclass
class MultiMoranState:
    """Final state plus the recorded trace of a multi-type run.

    ``records`` holds ``(time, family, count)`` rows written whenever a
    family's count moves to a new log-level bin (``n_log`` bins per unit of
    ``log_N``) and at every arrival and extinction.
    """

    N: int
    phi: float
    clock: float
    counts: np.ndarray
    families: list[Family]
    records: np.ndarray
    n_events: int
    contender_level: float

    def count_path(self, family: int) -> tuple[np.ndarray, np.ndarray]:
        rows = self.records[self.records[:, 1] == family]
        return rows[:, 0], rows[:, 2].astype(np.int64)

    def log_path(self, family: int, time_scale: float, window: tuple[float, float]) -> CadlagPath:
        """Step path ``log_N^+`` of the family's count on the rescaled ``window``."""
        lo, hi = window
        t, x = self.count_path(family)
        t = t / time_scale
        v = np.where(x > 1, np.log(np.maximum(x, 1)) / math.log(self.N), 0.0)
        ext = 1.0 if family == 0 else 0.0
        inner = (t > lo) & (t < hi)
        prior = t <= lo
        v0 = v[prior][-1] if prior.any() else (ext if family == 0 else 0.0)
        tt = np.concatenate(([lo], t[inner]))
        vv = np.concatenate(([v0], v[inner]))
        tt, vv = last_at_each_time(tt, vv)
        keep = np.concatenate(([True], np.diff(vv) != 0))
        return CadlagPath.step(tt[keep], vv[keep], hi, before=ext if lo <= 0 else None)

    @property
    def contenders(self) -> list[Family]:
        return [f for f in self.families[1:] if f.contender]


def contender_threshold(params: ModelParams) -> float:
    """Size ``N^b log N`` a family must reach to count as a contender."""
    return params.N ** params.b * params.log_N


@njit(cache=True, nogil=True)
def _bin(x, log_n, n_log):
    if x <= 0:
        return -2
    if x == 1:
        return -1
    return int(math.floor(n_log * math.log(x) / log_n))


@njit(cache=True, nogil=True)
def _multi_kernel(N, phi, arr_t, arr_a, t_end, stop_single, seed, cap, n_log):
    st = new_state(seed)
    F = len(arr_t) + 1
    X = np.zeros(F, dtype=np.int64)
    fit = np.zeros(F)
    parent = np.full(F, -1, dtype=np.int64)
    born = np.full(F, np.inf)
    dead = np.full(F, np.inf)
    xmax = np.zeros(F, dtype=np.int64)
    lvl = np.full(F, -3, dtype=np.int64)
    R = np.zeros(F)
    act = np.empty(F, dtype=np.int64)
    X[0] = N
    xmax[0] = N
    born[0] = 0.0
    act[0] = 0
    na = 1
    log_n = math.log(N)
    cap_rec = 4096
    rt = np.empty(cap_rec)
    rf = np.empty(cap_rec, dtype=np.int64)
    rx = np.empty(cap_rec, dtype=np.int64)
    nr = 0
    rt[0] = 0.0
    rf[0] = 0
    rx[0] = N
    nr = 1
    lvl[0] = _bin(N, log_n, n_log)
    t = 0.0
    nxt = 0
    events = 0
    while True:
        if stop_single and na == 1 and nxt == len(arr_t):
            break
        total = 0.0
        for q in range(na):
            total += R[act[q]]
        t_arr = arr_t[nxt] if nxt < len(arr_t) else np.inf
        dt = exponential(st) / total if total > 0 else np.inf
        if t + dt >= t_arr and t_arr < t_end:
            # mutation hits a uniformly chosen individual
            t = t_arr
            u = uniform(st) * N
            acc = 0.0
            par = act[na - 1]
            for q in range(na):
                acc += X[act[q]]
                if u < acc:
                    par = act[q]
                    break
            f = nxt + 1
            nxt += 1
            X[par] -= 1
            X[f] = 1
            fit[f] = fit[par] + arr_a[f - 1] * phi
            parent[f] = par
            born[f] = t
            xmax[f] = 1
            act[na] = f
            na += 1
            changed = (par, f)
        elif t + dt >= t_end:
            t = t_end
            break
        else:
            events += 1
            if events > cap:
                return t, X, fit, parent, born, dead, xmax, rt[:nr], rf[:nr], rx[:nr], events, True
            t += dt
            u = uniform(st) * total
            k = act[na - 1]
            acc = 0.0
            for q in range(na):
                acc += R[act[q]]
                if u < acc:
                    k = act[q]
                    break
            w = 0.0
            for q in range(na):
                j = act[q]
                if j != k:
                    w += X[j] * (1.0 + max(fit[k] - fit[j], 0.0))
            u = uniform(st) * w
            acc = 0.0
            j = -1
            for q in range(na):
                c = act[q]
                if c != k:
                    j = c
                    acc += X[c] * (1.0 + max(fit[k] - fit[c], 0.0))
                    if u < acc:
                        break
            X[k] += 1
            X[j] -= 1
            if X[k] > xmax[k]:
                xmax[k] = X[k]
            changed = (k, j)
        # bookkeeping for the two changed families
        for c in changed:
            b = _bin(X[c], log_n, n_log)
            if b != lvl[c]:
                lvl[c] = b
                if nr == len(rt):
                    rt2 = np.empty(2 * nr)
                    rf2 = np.empty(2 * nr, dtype=np.int64)
                    rx2 = np.empty(2 * nr, dtype=np.int64)
                    rt2[:nr] = rt
                    rf2[:nr] = rf
                    rx2[:nr] = rx
                    rt, rf, rx = rt2, rf2, rx2
                rt[nr] = t
                rf[nr] = c
                rx[nr] = X[c]
                nr += 1
        for c in changed:
            if X[c] == 0:
                dead[c] = t
                for q in range(na):
                    if act[q] == c:
                        act[q] = act[na - 1]
                        na -= 1
                        break
        # O(F^2) recompute; live families stay few, and no rounding drift accrues
        for q in range(na):
            m = act[q]
            s_m = 0.0
            for r_ in range(na):
                j = act[r_]
                if j != m:
                    s_m += X[j] * (1.0 + max(fit[m] - fit[j], 0.0))
            R[m] = X[m] * s_m / N
    return t, X, fit, parent, born, dead, xmax, rt[:nr], rf[:nr], rx[:nr], events, False


def simulate_multi_moran(params: ModelParams, lam: float, gamma: GammaSpec, horizon: float,
                         rng=None, arrivals: Sequence[tuple[float, float]] | None = None,
                         stop_when_single: bool = False, n_log: int = 200,
                         cap: int = DEFAULT_EVENT_CAP) -> MultiMoranState:
    """Event-driven run up to rescaled time ``horizon`` (units of ``log N / phi``).

    Mutation times form a Poisson process of rate ``lam / log N`` in real
    time with increments drawn from ``gamma``. Passing ``arrivals`` as
    ``(rescaled time, increment)`` pairs replaces the Poisson stream (forced
    arrivals). With ``stop_when_single`` the run ends once a single family
    remains and no arrivals are pending.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    g = as_generator(rng)
    scale = params.time_scale
    t_end = horizon * scale
    if arrivals is None:
        rate = lam / params.log_N
        times = []
        t = g.exponential(1 / rate) if rate > 0 else math.inf
        while t < t_end:
            times.append(t)
            t += g.exponential(1 / rate)
        arr_t = np.asarray(times, dtype=np.float64)
        arr_a = gamma.sample(g, len(arr_t)) if len(arr_t) else np.empty(0)
    else:
        pairs = sorted((float(T) * scale, float(A)) for T, A in arrivals)
        arr_t = np.array([p[0] for p in pairs], dtype=np.float64)
        arr_a = np.array([p[1] for p in pairs], dtype=np.float64)
        if np.any(arr_a <= 0) or (len(arr_t) > 1 and np.any(np.diff(arr_t) <= 0)):
            raise ValueError("forced arrivals need distinct times and positive increments")
    (t, X, fit, parent, born, dead, xmax, rt, rf, rx, events, capped) = _multi_kernel(
        params.N, float(params.phi), arr_t, arr_a, float(t_end), bool(stop_when_single),
        kernel_seed(g), int(cap), int(n_log))
    if capped:
        raise CapExceeded(f"more than {cap} events")
    level = contender_threshold(params)
    fams = []
    for i in range(len(X)):
        if not np.isfinite(born[i]):
            continue
        inc = 0.0 if i == 0 else float(arr_a[i - 1])
        fams.append(Family(i, int(parent[i]), float(born[i]) / scale, inc, float(fit[i]),
                           int(xmax[i]), float(dead[i]) / scale, bool(i > 0 and xmax[i] >= level)))
    records = np.column_stack((rt, rf.astype(np.float64), rx.astype(np.float64)))
    return MultiMoranState(params.N, float(params.phi), float(t), X, fams, records, int(events), level)


# --------------------------------------------------------------------------
# interacting trajectories


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


@dataclass
class PitTrajectory:
    """Piecewise-linear trajectory; ``knots`` are ``(time, height, slope)`` from that time on."""

    index: int
    start: Fraction
    increment: Fraction | None
    knots: list = field(default_factory=list)
    status: str = LATENT
    death: Fraction | None = None

    def height(self, t: Fraction) -> Fraction:
        t = _frac(t)
        if t < self.start or (self.death is not None and t >= self.death) or not self.knots:
            return Fraction(0)
        k = max(i for i, kn in enumerate(self.knots) if kn[0] <= t)
        t0, h0, v = self.knots[k]
        return h0 + v * (t - t0)

    def slope(self, t: Fraction) -> Fraction:
        t = _frac(t)
        if t < self.start or (self.death is not None and t >= self.death) or not self.knots:
            return Fraction(0)
        return max((kn for kn in self.knots if kn[0] <= t), key=lambda kn: kn[0])[2]

    def to_path(self, window: tuple[float, float]) -> CadlagPath:
        """Cadlag path on ``window`` with the jumps at arrival and death."""
        lo, hi = _frac(window[0]), _frac(window[1])
        cuts = {lo, hi, self.start, *(kn[0] for kn in self.knots)}
        if self.death is not None:
            cuts.add(self.death)
        cuts = sorted(c for c in cuts if lo <= c <= hi)
        left = [float(self._left(c)) for c in cuts]
        right = [float(self.height(c)) for c in cuts]
        return CadlagPath(np.array([float(c) for c in cuts]), np.array(left), np.array(right))

    def _left(self, t: Fraction) -> Fraction:
        if t <= self.start:
            return Fraction(1) if self.index == 0 else Fraction(0)
        if self.death is not None and t > self.death:
            return Fraction(0)
        t0, h0, v = max((kn for kn in self.knots if kn[0] < t), key=lambda kn: kn[0])
        return h0 + v * (t - t0)


@dataclass
class PitSystem:
    b: Fraction
    horizon: Fraction
    trajectories: list[PitTrajectory]
    events: list = field(default_factory=list)

    def heights(self, t) -> list[Fraction]:
        return [tr.height(t) for tr in self.trajectories]

    def breakpoints(self) -> list[Fraction]:
        ts = {Fraction(0), self.horizon}
        for tr in self.trajectories:
            ts.update(kn[0] for kn in tr.knots)
            if tr.death is not None:
                ts.add(tr.death)
        return sorted(t for t in ts if t <= self.horizon)


def pit_evolve(arrivals: Sequence[tuple], b, horizon) -> PitSystem:
    """Evolve the trajectory system driven by ``(T_i, A_i)`` up to ``horizon``.

    Rules: the resident starts at height 1 with slope 0; trajectory ``i``
    starts at ``T_i`` at height ``b`` with slope ``A_i``; a trajectory that
    reaches 1 with slope ``v`` stops there and lowers by ``v`` the slope of
    every other trajectory with height strictly above ``b``; a trajectory
    that comes down to ``b`` drops to 0 for good. Simultaneous events are
    handled in the order: reaching 1, reaching ``b``, arrivals (then by index).
    Inputs may be floats (taken at their exact binary value) or Fractions.
    """
    b = _frac(b)
    horizon = _frac(horizon)
    if not 0 <= b < 1:
        raise ValueError("b must lie in [0, 1)")
    marks = sorted((_frac(T), _frac(A)) for T, A in arrivals)
    for i, (T, A) in enumerate(marks):
        if A <= 0 or T < 0:
            raise ValueError("arrival times must be nonnegative and increments positive")
        if i and T == marks[i - 1][0]:
            raise ValueError("arrival times must be distinct")
    trs = [PitTrajectory(0, Fraction(0), None, [(Fraction(0), Fraction(1), Fraction(0))], RESIDENT)]
    trs += [PitTrajectory(i + 1, T, A) for i, (T, A) in enumerate(marks)]
    sys_ = PitSystem(b, horizon, trs)
    # current state of live trajectories: index -> [t_ref, h_ref, slope]
    live = {0: [Fraction(0), Fraction(1), Fraction(0)]}
    t = Fraction(0)
    nxt = 1

    def h_at(i, s):
        t0, h0, v = live[i]
        return h0 + v * (s - t0)

    while True:
        cand = []
        for i, (t0, h0, v) in live.items():
            h = h_at(i, t)
            if v > 0 and h <= 1:
                cand.append((t + (1 - h) / v, 0, i))
            elif v < 0 and h >= b:
                cand.append((t + (h - b) / (-v), 1, i))
        if nxt < len(trs):
            cand.append((trs[nxt].start, 2, nxt))
        if not cand:
            break
        te, kind, i = min(cand)
        if te > horizon:
            break
        t = te
        if kind == 0:
            v = live[i][2]
            live[i] = [t, Fraction(1), Fraction(0)]
            trs[i].knots.append((t, Fraction(1), Fraction(0)))
            trs[i].status = RESIDENT
            for j in sorted(live):
                if j != i and h_at(j, t) > b:
                    hj = h_at(j, t)
                    live[j] = [t, hj, live[j][2] - v]
                    trs[j].knots.append((t, hj, live[j][2]))
                    if trs[j].status == RESIDENT:
                        trs[j].status = ACTIVE
            sys_.events.append((t, "fix", i))
        elif kind == 1:
            del live[i]
            trs[i].death = t
            trs[i].status = DEAD
            sys_.events.append((t, "death", i))
        else:
            tr = trs[i]
            live[i] = [t, b, tr.increment]
            tr.knots.append((t, b, tr.increment))
            tr.status = ACTIVE
            nxt += 1
            sys_.events.append((t, "arrival", i))
    return sys_


def sample_pit_marks(lam: float, gamma: GammaSpec, horizon: float, rng=None) -> list[tuple[float, float]]:
    """Rate-``lam`` Poisson times on ``[0, horizon]`` with size-biased increments."""
    g = as_generator(rng)
    n = g.poisson(lam * horizon)
    times = np.sort(g.uniform(0, horizon, n))
    return list(zip(times.tolist(), gamma.sample_size_biased(g, n).tolist()))


def _enc(x) -> str:
    f = _frac(x)
    return f"{f.numerator}/{f.denominator}"


def write_marks_json(arrivals, b, dest) -> None:
    """Exact marks for replay (rationals as ``"p/q"`` strings)."""
    doc = {"b": _enc(b), "arrivals": [[_enc(T), _enc(A)] for T, A in arrivals]}
    Path(dest).write_text(json.dumps(doc, indent=1) + "\n")


def read_marks_json(src) -> tuple[list[tuple[Fraction, Fraction]], Fraction]:
    doc = json.loads(Path(src).read_text())
    return [(Fraction(T), Fraction(A)) for T, A in doc["arrivals"]], Fraction(doc["b"])


def write_pit_csv(system: PitSystem, dest) -> None:
    """Heights of every trajectory at each breakpoint, right values and left limits."""
    ts = system.breakpoints()
    n = len(system.trajectories)
    lines = ["t,side," + ",".join(f"H{i}" for i in range(n))]
    for t in ts:
        left = [tr._left(t) for tr in system.trajectories]
        right = system.heights(t)
        lines.append(f"{float(t)!r},left," + ",".join(repr(float(h)) for h in left))
        lines.append(f"{float(t)!r},right," + ",".join(repr(float(h)) for h in right))
    Path(dest).write_text("\n".join(lines) + "\n")


def pit_vs_moran_distance(params: ModelParams, lam: float, gamma: GammaSpec, rng=None,
                          horizon: float = 3.0, tol: float = 1e-2) -> list[M1Bracket]:
    """M1 brackets between each contender's ``H_i^N`` and the trajectory driven by its marks.

    The resident comes first, then contenders in arrival order. Marks are
    the contenders' rescaled arrival times and their own increments.
    """
    state = simulate_multi_moran(params, lam, gamma, horizon, rng)
    cons = state.contenders
    marks = [(f.arrival, f.increment) for f in cons]
    system = pit_evolve(marks, Fraction(params.b).limit_denominator(10 ** 9), horizon)
    window = (0.0, float(horizon))
    out = []
    for tr, fam in zip(system.trajectories, [state.families[0]] + cons):
        H = state.log_path(fam.index, params.time_scale, window)
        out.append(m1_distance(H, tr.to_path(window), tol))
    return out
