"""Logarithmic rescaling of sweeps and the limiting piecewise-linear house.

On the time scale ``log N / phi`` the log-frequencies ``H_i(t) = log_N^+
X_i(t log N / phi)`` of the mutant (``i = 1``) and resident (``i = 0``)
approach

    h_1(t) = 0 (t < 0),  b + a t (0 <= t < T),  1 (t >= T)
    h_0(t) = 1 (t < T),  2 - b - a t (T <= t < 2T),  0 (t >= 2T)

with ``T = (1 - b)/a``. Before time 0 the pair is ``(H_0, H_1) = (1, 0)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .m1 import CadlagPath, M1Bracket, last_at_each_time, m1_distance, simplify, sup_distance
from .moran import FIXATION, SweepPath
from .params import ModelParams

__all__ = [
    "House", "house_eval", "house_path", "default_window", "rescale",
    "sup_distance_restricted", "fixation_time_rescaled", "phase_boundaries",
    "write_house_csv", "m1_to_house",
]

DEFAULT_EPS = 0.1


@dataclass(frozen=True)
class House:
    a: float
    b: float

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("slope a must be positive")
        if not 0 <= self.b < 1:
            raise ValueError("jump height b must lie in [0, 1)")

    @classmethod
    def from_params(cls, params: ModelParams) -> "House":
        return cls(params.a, params.b)

    @property
    def ridge(self) -> float:
        """Time ``(1 - b)/a`` at which the mutant reaches height 1."""
        return (1.0 - self.b) / self.a

    @property
    def wall(self) -> float:
        """Time ``2(1 - b)/a`` at which the resident drops to 0."""
        return 2.0 * (1.0 - self.b) / self.a


def house_eval(house: House, which: int, t):
    """``h_which(t)``, right-continuous at the walls."""
    t = np.asarray(t, dtype=np.float64)
    a, b, T, W = house.a, house.b, house.ridge, house.wall
    if which == 1:
        out = np.where(t < 0, 0.0, np.where(t < T, b + a * t, 1.0))
    elif which == 0:
        out = np.where(t < T, 1.0, np.where(t < W, 2.0 - b - a * t, 0.0))
    else:
        raise ValueError("which must be 0 (resident) or 1 (mutant)")
    return out if out.ndim else float(out)


def default_window(house: House, eps: float = DEFAULT_EPS) -> tuple[float, float]:
    return -eps, house.wall + 3 * eps


def house_path(house: House, which: int, window: tuple[float, float] | None = None) -> CadlagPath:
    """Exact :class:`CadlagPath` of ``h_which`` on ``window``."""
    lo, hi = default_window(house) if window is None else window
    if not lo < hi:
        raise ValueError("empty window")
    a, b, T, W = house.a, house.b, house.ridge, house.wall
    if which == 1:
        # (time, left limit, value)
        knots = [(0.0, 0.0, b), (T, 1.0, 1.0)]
    elif which == 0:
        knots = [(T, 1.0, 1.0), (W, b, 0.0)]
    else:
        raise ValueError("which must be 0 (resident) or 1 (mutant)")
    inner = [k for k in knots if lo < k[0] < hi]
    t = [lo] + [k[0] for k in inner] + [hi]
    left = [_house_left(house, which, lo)] + [k[1] for k in inner]
    left.append(_house_left(house, which, hi))
    right = [float(house_eval(house, which, lo))] + [k[2] for k in inner]
    right.append(float(house_eval(house, which, hi)))
    return CadlagPath(np.array(t), np.array(left), np.array(right))


def _house_left(house: House, which: int, t: float) -> float:
    a, b, T, W = house.a, house.b, house.ridge, house.wall
    if which == 1:
        return 0.0 if t <= 0 else (b + a * t if t <= T else 1.0)
    return 1.0 if t <= T else (2.0 - b - a * t if t <= W else 0.0)


def _log_plus(counts: np.ndarray, N: int) -> np.ndarray:
    c = np.asarray(counts, dtype=np.float64)
    out = np.zeros_like(c)
    pos = c > 1
    out[pos] = np.log(c[pos]) / math.log(N)
    return out


def rescale(path: SweepPath, params: ModelParams, which: int,
            window: tuple[float, float] | None = None) -> CadlagPath:
    """Step path ``H_which`` on ``window`` (default: the house window).

    Counts are taken between breakpoints as recorded, so the result is exact
    for fully recorded paths.
    """
    if which not in (0, 1):
        raise ValueError("which must be 0 (resident) or 1 (mutant)")
    if path.N != params.N:
        raise ValueError("path and parameters disagree on N")
    lo, hi = default_window(House.from_params(params)) if window is None else window
    if not lo < hi:
        raise ValueError("empty window")
    counts = path.mutant if which == 1 else path.resident
    vals = _log_plus(counts, params.N)
    times = path.times / params.time_scale
    ext = 1.0 if which == 0 else 0.0
    inner = (times > lo) & (times < hi)
    t = times[inner]
    v = vals[inner]
    if lo < times[0]:
        v0 = ext
    else:
        v0 = vals[np.searchsorted(times, lo, side="right") - 1]
    t = np.concatenate(([lo], t))
    v = np.concatenate(([v0], v))
    t, v = last_at_each_time(t, v)
    keep = np.concatenate(([True], np.diff(v) != 0))
    return CadlagPath.step(t[keep], v[keep], hi, before=ext if lo <= 0 else None)


def sup_distance_restricted(f: CadlagPath, g: CadlagPath, which: int, eps: float,
                            house: House | None = None) -> float:
    """Exact ``sup |f - g|`` over the window minus the excluded wall neighbourhood.

    For the mutant (``which = 1``) the set is ``R \\ [0, eps)``; for the
    resident it is ``R \\ (t0 - eps, t0 + eps)`` with ``t0`` the wall time
    of ``house``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    inf = math.inf
    if which == 1:
        pieces = [(-inf, 0.0, False), (eps, inf, True)]
    elif which == 0:
        if house is None:
            raise ValueError("the resident restriction needs the house (wall time)")
        t0 = house.wall
        pieces = [(-inf, t0 - eps, True), (t0 + eps, inf, True)]
    else:
        raise ValueError("which must be 0 (resident) or 1 (mutant)")
    return sup_distance(f, g, pieces)


def fixation_time_rescaled(path: SweepPath, params: ModelParams) -> float:
    """Fixation time in units of ``log N / phi``."""
    if path.terminal != FIXATION:
        raise ValueError("path does not end in fixation")
    return path.end_time / params.time_scale


def phase_boundaries(path: SweepPath, params: ModelParams) -> tuple[float, float]:
    """Rescaled first-passage times of ``floor(N/log N)`` and ``floor(N(1 - 1/sqrt(log N)))``."""
    if path.terminal != FIXATION:
        raise ValueError("path does not end in fixation")
    t23 = path.level_time(params.level_23)
    t34 = path.level_time(params.level_34)
    assert math.isfinite(t23) and math.isfinite(t34), "fixation path missed a level"
    return t23 / params.time_scale, t34 / params.time_scale


def m1_to_house(path: SweepPath, params: ModelParams, which: int, tol: float = 1e-2,
                delta: float = 1e-3, window: tuple[float, float] | None = None) -> M1Bracket:
    """M1 bracket between ``H_which`` and ``h_which``.

    ``H`` is first compressed to within uniform distance ``delta`` (see
    :func:`~housesweep.m1.simplify`); the bracket is widened by ``delta``
    so it still contains the distance for the uncompressed path.
    """
    house = House.from_params(params)
    win = default_window(house) if window is None else window
    H = rescale(path, params, which, win)
    if delta > 0:
        H = simplify(H, delta)
    br = m1_distance(H, house_path(house, which, win), tol)
    if delta > 0:
        return M1Bracket(max(0.0, br.lower - delta), br.upper + delta)
    return br


def write_house_csv(path: SweepPath, params: ModelParams, dest,
                    window: tuple[float, float] | None = None) -> None:
    """Columns ``t, H0, H1, h0, h1`` at every breakpoint of the four paths."""
    house = House.from_params(params)
    win = default_window(house) if window is None else window
    H0, H1 = rescale(path, params, 0, win), rescale(path, params, 1, win)
    h0, h1 = house_path(house, 0, win), house_path(house, 1, win)
    t = np.unique(np.concatenate((H0.t, H1.t, h0.t, h1.t)))
    cols = [H0(t), H1(t), h0(t), h1(t)]
    lines = ["t,H0,H1,h0,h1"]
    for i, ti in enumerate(t.tolist()):
        lines.append(",".join([repr(ti)] + [repr(float(c[i])) for c in cols]))
    Path(dest).write_text("\n".join(lines) + "\n")
