"""Exact simulation of the two-type Moran model with selection.

State is the resident count ``k``; the mutant count is ``N - k``. From
``k`` the resident gains one at rate ``k(N-k)/N`` and loses one at rate
``(1 + a phi) k(N-k)/N``. Paths are stored as breakpoints ``(time,
resident)`` starting with the initial state at time 0; for negative times
the population is taken to be all resident.
"""
from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from ._rand import exponential, new_state, uniform
from .gw_branching import (DEFAULT_EVENT_CAP, CapExceeded, GwParams, GwPath, StopRule,
                           simulate_gw, simulate_gw_conditioned_survival)
from .params import ModelParams
from .rng import kernel_seed, replicate_seeds

__all__ = [
    "ModelParams", "SweepPath", "moran_rates", "fixation_prob_exact", "simulate_moran",
    "simulate_moran_conditioned_fixation", "hitting_time", "build_time_changed_pair",
    "time_change", "sample_time_changed_sweep", "write_csv", "read_csv", "write_binary",
    "read_binary", "time_changed_fixation_times", "fixation_frequency",
    "jump_marginal", "absorption_times", "sweep_levels",
]

FIXATION = "fixation"
LOSS = "loss"

RECORD_FULL = "full"
RECORD_LEVELS = "levels"
RECORD_GRID = "grid"
_MODES = {RECORD_FULL: 0, RECORD_LEVELS: 1, RECORD_GRID: 2}


@dataclass
class SweepPath:
    """Piecewise-constant resident count of one Moran run.

    ``times[0] == 0`` holds the initial state. Under the ``full`` policy
    consecutive counts differ by one; under ``levels`` the breakpoints are
    the first-passage times of the recorded mutant levels; under ``grid``
    they are the states at the grid times.
    """

    N: int
    times: np.ndarray
    resident: np.ndarray
    terminal: str | None
    policy: str = RECORD_FULL
    end_time: float = math.nan
    levels: np.ndarray | None = field(default=None, repr=False)

    @property
    def mutant(self) -> np.ndarray:
        return self.N - self.resident

    @property
    def absorption_time(self) -> float:
        return self.end_time

    def resident_at(self, t: float) -> int:
        if t < 0:
            return self.N
        i = np.searchsorted(self.times, t, side="right")
        return int(self.resident[i - 1])

    def mutant_at(self, t: float) -> int:
        return self.N - self.resident_at(t)

    def level_time(self, level: int) -> float:
        """First time the mutant count reaches ``level`` (``inf`` if never)."""
        mut = self.mutant
        if self.policy == RECORD_GRID:
            raise ValueError("grid-recorded paths do not carry passage times")
        if self.policy == RECORD_LEVELS and level > mut[0]:
            hit = np.flatnonzero(self.levels == level)
            if len(hit) == 0:
                raise ValueError(f"level {level} was not recorded")
        idx = np.flatnonzero(mut >= level)
        return float(self.times[idx[0]]) if len(idx) else math.inf


def moran_rates(k: int, params: ModelParams) -> tuple[float, float]:
    """(resident +1 rate, resident -1 rate) in state ``k``."""
    N = params.N
    if not 0 <= k <= N:
        raise ValueError(f"resident count {k} outside [0, {N}]")
    base = k * (N - k) / N
    return base, (1.0 + params.s) * base


def fixation_prob_exact(params: ModelParams, start_mutants: int) -> float:
    """Probability that ``start_mutants`` mutants eventually take over."""
    N, m = params.N, start_mutants
    if not 0 <= m <= N:
        raise ValueError(f"mutant count {m} outside [0, {N}]")
    if params.s == 0:
        return m / N
    log_r = -math.log1p(params.s)
    return math.expm1(m * log_r) / math.expm1(N * log_r)


# --------------------------------------------------------------------------
# kernels (state variable: mutant count m)


@njit(cache=True, nogil=True)
def _up_prob(m, s, log_r, conditioned):
    if not conditioned:
        return (1.0 + s) / (2.0 + s)
    if s == 0.0:
        return 0.5 * (m + 1) / m
    return math.expm1((m + 1) * log_r) / ((1.0 + math.exp(log_r)) * math.expm1(m * log_r))


@njit(cache=True, nogil=True)
def _moran_kernel(N, s, m0, conditioned, seed, cap, mode, levels, grid):
    st = new_state(seed)
    log_r = -math.log1p(s) if s > 0 else 0.0
    size = 1024 if mode == 0 else 1
    times = np.empty(size)
    muts = np.empty(size, dtype=np.int64)
    times[0] = 0.0
    muts[0] = m0
    n = 1
    level_t = np.full(len(levels), np.inf)
    li = 0
    while li < len(levels) and levels[li] <= m0:
        level_t[li] = 0.0
        li += 1
    grid_m = np.empty(len(grid), dtype=np.int64)
    gi = 0
    t = 0.0
    comp = 0.0
    m = m0
    events = 0
    capped = False
    while 0 < m < N:
        if events >= cap:
            capped = True
            break
        rate = (2.0 + s) * m * (N - m) / N
        dt = exponential(st) / rate
        y = dt - comp
        tn = t + y
        comp = (tn - t) - y
        while gi < len(grid) and grid[gi] < tn:
            grid_m[gi] = m
            gi += 1
        t = tn
        if uniform(st) < _up_prob(m, s, log_r, conditioned):
            m += 1
        else:
            m -= 1
        events += 1
        if mode == 0:
            if n == size:
                size *= 2
                nt = np.empty(size)
                nm = np.empty(size, dtype=np.int64)
                nt[:n] = times[:n]
                nm[:n] = muts[:n]
                times = nt
                muts = nm
            times[n] = t
            muts[n] = m
            n += 1
        while li < len(levels) and levels[li] <= m:
            level_t[li] = t
            li += 1
    while gi < len(grid):
        grid_m[gi] = m
        gi += 1
    return times[:n], muts[:n], level_t, grid_m, m, t, capped


@njit(cache=True, nogil=True)
def _fixation_batch(N, s, m0, seeds, cap):
    """Jump chain only: 1 for fixation, 0 for loss, -1 for cap."""
    out = np.empty(len(seeds), dtype=np.int64)
    p = (1.0 + s) / (2.0 + s)
    for i in range(len(seeds)):
        st = new_state(seeds[i])
        m = m0
        n = 0
        while 0 < m < N and n < cap:
            if uniform(st) < p:
                m += 1
            else:
                m -= 1
            n += 1
        out[i] = 1 if m == N else (0 if m == 0 else -1)
    return out


@njit(cache=True, nogil=True)
def _jump_marginal_batch(N, s, m0, n_jumps, conditioned, rejection, seeds, cap):
    """Mutant count after ``n_jumps`` jumps.

    With ``rejection`` the unconditioned chain is run to absorption and
    replicates that end in loss are discarded (returned as -1).
    """
    out = np.empty(len(seeds), dtype=np.int64)
    log_r = -math.log1p(s) if s > 0 else 0.0
    for i in range(len(seeds)):
        st = new_state(seeds[i])
        m = m0
        mark = m0
        n = 0
        while 0 < m < N and n < cap:
            if not rejection and n == n_jumps:
                break
            if uniform(st) < _up_prob(m, s, log_r, conditioned):
                m += 1
            else:
                m -= 1
            n += 1
            if n == n_jumps:
                mark = m
        if n < n_jumps:
            mark = m
        if rejection and m != N:
            mark = -1
        out[i] = mark
    return out


@njit(cache=True, nogil=True)
def _absorption_time_batch(N, s, m0, conditioned, seeds, cap):
    out = np.empty(len(seeds))
    fixed = np.empty(len(seeds), dtype=np.bool_)
    log_r = -math.log1p(s) if s > 0 else 0.0
    for i in range(len(seeds)):
        st = new_state(seeds[i])
        m = m0
        t = 0.0
        comp = 0.0
        n = 0
        while 0 < m < N and n < cap:
            rate = (2.0 + s) * m * (N - m) / N
            y = exponential(st) / rate - comp
            tn = t + y
            comp = (tn - t) - y
            t = tn
            if uniform(st) < _up_prob(m, s, log_r, conditioned):
                m += 1
            else:
                m -= 1
            n += 1
        out[i] = t if (m == 0 or m == N) else np.nan
        fixed[i] = m == N
    return out, fixed


# --------------------------------------------------------------------------
# public simulation API


def _simulate(params, m0, conditioned, rng, record, levels, grid, cap):
    if record not in _MODES:
        raise ValueError(f"unknown recording policy {record!r}")
    N = params.N
    lv = np.unique(np.asarray([] if levels is None else levels, dtype=np.int64))
    gr = np.sort(np.asarray([] if grid is None else grid, dtype=np.float64))
    if record == RECORD_LEVELS and len(lv) == 0:
        raise ValueError("level recording needs a nonempty level set")
    if record == RECORD_GRID and len(gr) == 0:
        raise ValueError("grid recording needs a nonempty time grid")
    times, muts, level_t, grid_m, m, t, capped = _moran_kernel(
        N, float(params.s), int(m0), bool(conditioned), kernel_seed(rng), int(cap),
        _MODES[record], lv, gr)
    if capped:
        raise CapExceeded(f"more than {cap} events")
    terminal = FIXATION if m == N else LOSS
    if record == RECORD_FULL:
        return SweepPath(N, times, N - muts, terminal, record, float(t))
    if record == RECORD_LEVELS:
        reached = np.isfinite(level_t)
        bt = np.concatenate(([0.0], level_t[reached]))
        bm = np.concatenate(([m0], lv[reached]))
        keep = np.concatenate(([True], bt[1:] > 0))
        return SweepPath(N, bt[keep], N - bm[keep], terminal, record, float(t), levels=lv)
    return SweepPath(N, np.concatenate(([0.0], gr)), N - np.concatenate(([m0], grid_m)),
                     terminal, record, float(t))


def simulate_moran(params: ModelParams, start_mutants: int, rng=None, record: str = RECORD_FULL,
                   levels=None, grid=None, cap: int = DEFAULT_EVENT_CAP) -> SweepPath:
    """Run the Moran model from ``start_mutants`` mutants until absorption.

    ``a == 0`` (neutral) is accepted here for testing.
    """
    if not 0 <= start_mutants <= params.N:
        raise ValueError("start_mutants outside [0, N]")
    return _simulate(params, start_mutants, False, rng, record, levels, grid, cap)


def simulate_moran_conditioned_fixation(params: ModelParams, rng=None,
                                        record: str = RECORD_FULL, levels=None, grid=None,
                                        cap: int = DEFAULT_EVENT_CAP) -> SweepPath:
    """One mutant conditioned on fixation (Doob transform of the jump chain)."""
    params.require_selection()
    return _simulate(params, 1, True, rng, record, levels, grid, cap)


def sweep_levels(params: ModelParams, n_log: int = 200) -> np.ndarray:
    """Mutant levels worth recording for rescaled paths under the ``levels`` policy.

    ``n_log`` geometrically spaced levels plus the phase boundaries.
    """
    N = params.N
    geo = np.unique(np.floor(np.exp(np.linspace(0.0, math.log(N), n_log))).astype(np.int64))
    extra = [params.level_drift, params.level_23, params.level_low, params.level_34, N]
    lv = np.unique(np.concatenate((geo, np.array(extra, dtype=np.int64))))
    return lv[(lv >= 1) & (lv <= N)]


def hitting_time(path: SweepPath, eps: float) -> float:
    """First time the mutant count is at least ``eps * N`` (``inf`` if never)."""
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    return path.level_time(int(math.ceil(eps * path.N - 1e-12)))


def fixation_frequency(params: ModelParams, start_mutants: int, n: int, seed: int,
                       cap: int = DEFAULT_EVENT_CAP) -> np.ndarray:
    """Fixation indicators of ``n`` replicates (jump chain only)."""
    out = _fixation_batch(params.N, float(params.s), int(start_mutants),
                          replicate_seeds(seed, n), int(cap))
    if np.any(out < 0):
        raise CapExceeded(f"more than {cap} events")
    return out == 1


def jump_marginal(params: ModelParams, n_jumps: int, n: int, seed: int,
                  method: str = "conditioned", cap: int = DEFAULT_EVENT_CAP) -> np.ndarray:
    """Mutant count after ``n_jumps`` jumps from one mutant, given fixation.

    ``method="conditioned"`` uses the Doob-transformed chain; ``"rejection"``
    runs the plain chain and drops replicates that end in loss, so the
    returned array is shorter than ``n``.
    """
    if method not in ("conditioned", "rejection"):
        raise ValueError(method)
    out = _jump_marginal_batch(params.N, float(params.s), 1, int(n_jumps),
                               method == "conditioned", method == "rejection",
                               replicate_seeds(seed, n), int(cap))
    return out[out >= 0]


def absorption_times(params: ModelParams, n: int, seed: int, conditioned: bool = True,
                     start_mutants: int = 1, cap: int = DEFAULT_EVENT_CAP):
    """(absorption times, fixed flags) of ``n`` replicates."""
    return _absorption_time_batch(params.N, float(params.s), int(start_mutants),
                                  bool(conditioned), replicate_seeds(seed, n), int(cap))


# --------------------------------------------------------------------------
# branching-process construction


def time_change(z1: GwPath, z0: GwPath, params: ModelParams):
    """Glue the two branching paths and convert their clock to Moran time.

    ``z1`` is the surviving mutant process stopped at ``L = floor(N(1 -
    1/sqrt(log N)))``; ``z0`` is the resident process started at ``N - L``
    and run until it dies. During a sojourn in a state where the glued
    process (mutant count before the switch, resident count after it) has
    value ``x``, the time-change factor is ``f = 1 - x/N`` and one unit of
    branching time takes ``1/f`` units of Moran time.

    Returns ``(moran_times, branching_times, f, resident)`` at the
    breakpoints; ``branching_times`` is the time change ``sigma`` evaluated at
    ``moran_times``.
    """
    N = params.N
    L = params.level_34
    if z1.start != 1 or z1.final_size != L:
        raise ValueError(f"z1 must run from 1 to level {L}")
    if z0.start != N - L:
        raise ValueError(f"z0 must start at the complement level {N - L}")
    if not z0.absorbed:
        raise ValueError("z0 must die out before reaching N (the mutant fixes)")
    t1, k1 = z1.breakpoints()
    t0, k0 = z0.breakpoints()
    # sojourn states and lengths in the branching clock
    ds = np.concatenate((np.diff(t1), np.diff(t0)))
    x = np.concatenate((k1[:-1], k0[:-1])).astype(np.float64)
    f = 1.0 - x / N
    if np.any(f <= 0):
        raise ValueError("time-change factor vanished")
    moran = np.concatenate(([0.0], np.cumsum(ds / f)))
    branching = np.concatenate(([0.0], np.cumsum(ds)))
    resident = np.concatenate((N - k1, k0[1:]))
    return moran, branching, np.concatenate((f, [1.0])), resident


def build_time_changed_pair(z1: GwPath, z0: GwPath, params: ModelParams) -> SweepPath:
    """Moran sweep obtained by time-changing the two branching processes."""
    moran, _, _, resident = time_change(z1, z0, params)
    return SweepPath(params.N, moran, resident.astype(np.int64), FIXATION, RECORD_FULL,
                     float(moran[-1]))


def sample_time_changed_sweep(params: ModelParams, rng=None, max_redraws: int = 10_000,
                              cap: int = DEFAULT_EVENT_CAP) -> SweepPath:
    """Draw ``z1``, ``z0`` and build the sweep.

    ``z0`` is redrawn until it dies before reaching ``N``; this is exact
    conditioning on fixation because the redraw does not touch ``z1``.
    """
    params.require_selection()
    from .rng import as_generator
    gen = as_generator(rng)
    N, L = params.N, params.level_34
    z1 = simulate_gw_conditioned_survival(GwParams.supercritical(params), StopRule(level=L),
                                          gen, cap)
    sub = GwParams.subcritical(params)
    for _ in range(max_redraws):
        z0 = simulate_gw(sub, N - L, StopRule(level=N), gen, cap)
        if z0.absorbed:
            return build_time_changed_pair(z1, z0, params)
    raise RuntimeError("resident process kept reaching N")


# --------------------------------------------------------------------------
# serialization

CSV_VERSION = 1
_MAGIC = b"HSWP"
_BIN_VERSION = 1
_HEADER = struct.Struct("<4sHqBq")  # magic, version, N, terminal code, count
_TERMINAL_CODES = {None: 0, FIXATION: 1, LOSS: 2}
_TERMINAL_NAMES = {v: k for k, v in _TERMINAL_CODES.items()}


def write_csv(path: SweepPath, dest) -> None:
    """CSV with a ``#`` header line carrying format version, N and terminal state."""
    buf = io.StringIO()
    buf.write(f"# housesweep-sweeppath v{CSV_VERSION} N={path.N} terminal={path.terminal}\n")
    buf.write("time,resident,mutant\n")
    for t, k in zip(path.times.tolist(), path.resident.tolist()):
        buf.write(f"{t!r},{k},{path.N - k}\n")
    Path(dest).write_text(buf.getvalue())


def read_csv(src) -> SweepPath:
    lines = Path(src).read_text().splitlines()
    head = lines[0].split()
    if head[:2] != ["#", "housesweep-sweeppath"] or head[2] != f"v{CSV_VERSION}":
        raise ValueError("not a version-1 sweep path CSV")
    meta = dict(item.split("=", 1) for item in head[3:])
    N = int(meta["N"])
    terminal = None if meta["terminal"] == "None" else meta["terminal"]
    rows = [ln.split(",") for ln in lines[2:] if ln]
    times = np.array([float(r[0]) for r in rows])
    resident = np.array([int(r[1]) for r in rows], dtype=np.int64)
    return SweepPath(N, times, resident, terminal, RECORD_FULL,
                     float(times[-1]) if len(times) else math.nan)


def write_binary(path: SweepPath, dest) -> None:
    """Little-endian: header, float64 times, int64 resident counts."""
    n = len(path.times)
    with open(dest, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _BIN_VERSION, path.N, _TERMINAL_CODES[path.terminal], n))
        fh.write(np.ascontiguousarray(path.times, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(path.resident, dtype="<i8").tobytes())


def read_binary(src) -> SweepPath:
    data = Path(src).read_bytes()
    magic, version, N, code, n = _HEADER.unpack_from(data)
    if magic != _MAGIC or version != _BIN_VERSION:
        raise ValueError("not a version-1 binary sweep path")
    off = _HEADER.size
    times = np.frombuffer(data, dtype="<f8", count=n, offset=off).astype(np.float64)
    resident = np.frombuffer(data, dtype="<i8", count=n, offset=off + 8 * n).astype(np.int64)
    return SweepPath(N, times, resident, _TERMINAL_NAMES[code], RECORD_FULL,
                     float(times[-1]) if n else math.nan)


def time_changed_fixation_times(params: ModelParams, n: int, seed: int) -> np.ndarray:
    """Fixation times of ``n`` sweeps built by the time change (replicate ``i`` uses its own stream)."""
    out = np.empty(n)
    for i, s in enumerate(replicate_seeds(seed, n).tolist()):
        out[i] = sample_time_changed_sweep(params, np.random.default_rng(s)).end_time
    return out
