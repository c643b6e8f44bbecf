"""Cadlag paths on a window, extended graphs and the M1 distance.

A :class:`CadlagPath` on ``[alpha, beta]`` is stored as strictly increasing
knots ``t`` with a left limit and a value at every knot. Between two knots
the path is the straight line from ``right[j]`` to ``left[j + 1]``, so a
piecewise-constant path has ``left[j + 1] == right[j]``. ``left[0]`` is the
value just before the window (the extension convention), which lets a jump
at ``alpha`` appear in the extended graph.

The M1 distance is the Frechet distance between extended graphs in the
max-norm on ``(t, x)``. It is bracketed by the discrete Frechet distance of
samples that contain every vertex: that value is an upper bound, and
subtracting the largest gap between consecutive samples gives a lower bound.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numba import njit

__all__ = [
    "CadlagPath", "ExtendedGraph", "ParamRep", "M1Bracket", "extended_graph",
    "uniform_speed_param", "m1_distance", "m1_monotone_bound", "sup_distance",
    "running_max", "running_max_reversed", "simplify", "discrete_frechet",
]


def last_at_each_time(t: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Collapse equal times to their last value (events closer than one ulp)."""
    last = np.concatenate((t[1:] != t[:-1], [True]))
    return t[last], v[last]


@dataclass(frozen=True, eq=False)
class CadlagPath:
    t: np.ndarray
    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.float64)
        left = np.asarray(self.left, dtype=np.float64)
        right = np.asarray(self.right, dtype=np.float64)
        if t.ndim != 1 or len(t) < 1 or left.shape != t.shape or right.shape != t.shape:
            raise ValueError("knots, left limits and values must be 1-d arrays of equal length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("knots must be strictly increasing")
        if not (np.all(np.isfinite(left)) and np.all(np.isfinite(right)) and np.all(np.isfinite(t))):
            raise ValueError("path values must be finite")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    # construction ---------------------------------------------------------

    @classmethod
    def step(cls, times, values, end: float, before: float | None = None) -> "CadlagPath":
        """Piecewise-constant path taking ``values[j]`` on ``[times[j], times[j+1])``.

        The path ends at ``end``; ``before`` is the value left of ``times[0]``
        (defaults to ``values[0]``, i.e. no jump at the left end).
        """
        times = np.asarray(times, dtype=np.float64)
        values = np.asarray(values, dtype=np.float64)
        if end < times[-1]:
            raise ValueError("end precedes the last jump time")
        if end > times[-1]:
            times = np.append(times, end)
            values = np.append(values, values[-1])
        left = np.empty_like(values)
        left[0] = values[0] if before is None else before
        left[1:] = values[:-1]
        return cls(times, left, values)

    @classmethod
    def linear(cls, times, values) -> "CadlagPath":
        """Continuous piecewise-linear path through the given points."""
        v = np.asarray(values, dtype=np.float64)
        return cls(np.asarray(times, dtype=np.float64), v, v.copy())

    # basic queries --------------------------------------------------------

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.t[0]), float(self.t[-1])

    @property
    def is_step(self) -> bool:
        return bool(np.all(self.left[1:] == self.right[:-1]))

    def __len__(self) -> int:
        return len(self.t)

    def _locate(self, s):
        s = np.asarray(s, dtype=np.float64)
        lo, hi = self.domain
        if np.any(s < lo) or np.any(s > hi):
            raise ValueError(f"evaluation outside the domain [{lo}, {hi}]")
        return s

    def __call__(self, s):
        """Value (right-continuous) at ``s``."""
        s = self._locate(s)
        j = np.searchsorted(self.t, s, side="right") - 1
        jn = np.minimum(j + 1, len(self.t) - 1)
        t0, t1 = self.t[j], self.t[jn]
        span = np.where(t1 > t0, t1 - t0, 1.0)
        w = np.where(t1 > t0, (s - t0) / span, 0.0)
        out = self.right[j] + w * (self.left[jn] - self.right[j])
        return np.where(s == t0, self.right[j], out)

    def left_limit(self, s):
        """Left limit at ``s``; at the left end this is the extension value."""
        s = self._locate(s)
        j = np.searchsorted(self.t, s, side="left")
        at_knot = (j < len(self.t)) & (self.t[np.minimum(j, len(self.t) - 1)] == s)
        jp = np.maximum(j - 1, 0)
        jc = np.minimum(j, len(self.t) - 1)
        t0, t1 = self.t[jp], self.t[jc]
        span = np.where(t1 > t0, t1 - t0, 1.0)
        w = (s - t0) / span
        out = self.right[jp] + w * (self.left[jc] - self.right[jp])
        return np.where(at_knot, self.left[jc], out)

    def equals(self, other: "CadlagPath") -> bool:
        return (np.array_equal(self.t, other.t) and np.array_equal(self.left, other.left)
                and np.array_equal(self.right, other.right))

    def jumps(self) -> np.ndarray:
        """Knot indices with ``left != right``."""
        return np.flatnonzero(self.left != self.right)

    def restrict(self, lo: float, hi: float) -> "CadlagPath":
        """Restriction to ``[lo, hi]``; the new left end keeps the true left limit."""
        a, b = self.domain
        if not a <= lo < hi <= b:
            raise ValueError(f"[{lo}, {hi}] is not a sub-window of [{a}, {b}]")
        inner = (self.t > lo) & (self.t < hi)
        t = np.concatenate(([lo], self.t[inner], [hi]))
        left = np.concatenate(([self.left_limit(lo)], self.left[inner], [self.left_limit(hi)]))
        right = np.concatenate(([self(lo)], self.right[inner], [self(hi)]))
        return CadlagPath(t, left, right)

    def monotone_direction(self) -> int:
        """+1 nondecreasing, -1 nonincreasing, 0 constant, None otherwise.

        The extension value ``left[0]`` is ignored.
        """
        seq = np.empty(2 * len(self.t) - 1)
        seq[0] = self.right[0]
        seq[1::2] = self.left[1:]
        seq[2::2] = self.right[1:]
        d = np.diff(seq)
        up, down = np.any(d > 0), np.any(d < 0)
        if up and down:
            return None
        return 1 if up else (-1 if down else 0)

    # serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        return {"t": self.t.tolist(), "left": self.left.tolist(), "right": self.right.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "CadlagPath":
        return cls(np.array(d["t"]), np.array(d["left"]), np.array(d["right"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "CadlagPath":
        return cls.from_dict(json.loads(s))


@dataclass(frozen=True)
class ExtendedGraph:
    """Vertices ``(t, x)`` of the polyline, in the order of the graph."""

    points: np.ndarray

    @property
    def arclength(self) -> np.ndarray:
        """Cumulative Euclidean arclength at every vertex."""
        seg = np.hypot(*np.diff(self.points, axis=0).T)
        return np.concatenate(([0.0], np.cumsum(seg)))

    @property
    def length(self) -> float:
        return float(self.arclength[-1])

    def vertical_segments(self) -> list[tuple[float, float, float]]:
        """``(t, from, to)`` for every jump segment."""
        p = self.points
        same_t = p[1:, 0] == p[:-1, 0]
        return [(float(p[i, 0]), float(p[i, 1]), float(p[i + 1, 1])) for i in np.flatnonzero(same_t)]

    def to_json(self) -> str:
        return json.dumps({"points": self.points.tolist()})

    @classmethod
    def from_json(cls, s: str) -> "ExtendedGraph":
        return cls(np.array(json.loads(s)["points"], dtype=np.float64).reshape(-1, 2))


@dataclass(frozen=True)
class ParamRep:
    """Samples of an extended graph at parameters ``u`` (normalised arclength)."""

    u: np.ndarray
    points: np.ndarray

    def is_monotone(self, graph: ExtendedGraph) -> bool:
        """Samples lie on the graph and advance along it."""
        if np.any(np.diff(self.u) < 0):
            return False
        s = graph.arclength
        L = s[-1]
        if L == 0:
            return bool(np.all(self.points == graph.points[0]))
        pos = self.u * L
        t = np.interp(pos, s, graph.points[:, 0])
        x = np.interp(pos, s, graph.points[:, 1])
        return bool(np.allclose(t, self.points[:, 0], atol=1e-12 * max(1.0, L))
                    and np.allclose(x, self.points[:, 1], atol=1e-12 * max(1.0, L)))


class M1Bracket(NamedTuple):
    lower: float
    upper: float

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float, slack: float = 0.0) -> bool:
        return self.lower - slack <= value <= self.upper + slack

    def to_json(self) -> str:
        return json.dumps({"lower": self.lower, "upper": self.upper})


# --------------------------------------------------------------------------
# extended graphs and parametrizations


def extended_graph(f: CadlagPath) -> ExtendedGraph:
    """Polyline of the graph with a vertical segment at every jump.

    A jump from ``f(t-)`` to ``f(t)`` is traversed starting at ``f(t-)``.
    """
    n = len(f.t)
    jump = f.left != f.right
    count = n + int(jump.sum())
    pts = np.empty((count, 2))
    idx = np.arange(n) + np.concatenate(([0], np.cumsum(jump)[:-1]))
    pts[idx, 0] = f.t
    pts[idx, 1] = f.left
    pts[idx + jump, 0] = f.t
    pts[idx + jump, 1] = f.right
    return ExtendedGraph(pts)


def _positions(graph: ExtendedGraph, s: np.ndarray) -> np.ndarray:
    arc = graph.arclength
    out = np.empty((len(s), 2))
    out[:, 0] = np.interp(s, arc, graph.points[:, 0])
    out[:, 1] = np.interp(s, arc, graph.points[:, 1])
    # interp is exact at vertices; pin them to avoid rounding drift
    hit = np.searchsorted(arc, s)
    exact = (hit < len(arc)) & (arc[np.minimum(hit, len(arc) - 1)] == s)
    out[exact] = graph.points[hit[exact]]
    return out


def uniform_speed_param(graph: ExtendedGraph, n: int) -> ParamRep:
    """``n`` samples equally spaced in arclength, endpoints included."""
    if n < 2:
        raise ValueError("need at least two samples")
    L = graph.length
    if L == 0:
        return ParamRep(np.zeros(1), graph.points[:1].copy())
    s = np.linspace(0.0, L, n)
    return ParamRep(s / L, _positions(graph, s))


def _samples_with_vertices(graph: ExtendedGraph, n: int) -> np.ndarray:
    arc = graph.arclength
    L = arc[-1]
    if L == 0:
        return graph.points[:1].copy()
    s = np.union1d(arc, np.linspace(0.0, L, n))
    return _positions(graph, s)


def _max_spacing(samples: np.ndarray) -> float:
    if len(samples) < 2:
        return 0.0
    return float(np.abs(np.diff(samples, axis=0)).max())


@njit(cache=True, nogil=True)
def discrete_frechet(p, q):
    """Discrete Frechet distance of two point sequences in the max-norm.

    Dynamic program over monotone couplings with two rolling rows.
    """
    n, m = p.shape[0], q.shape[0]
    prev = np.empty(m)
    cur = np.empty(m)
    for i in range(n):
        px, py = p[i, 0], p[i, 1]
        for j in range(m):
            d = max(abs(px - q[j, 0]), abs(py - q[j, 1]))
            if i == 0 and j == 0:
                best = d
            elif i == 0:
                best = max(cur[j - 1], d)
            elif j == 0:
                best = max(prev[0], d)
            else:
                reach = min(prev[j], prev[j - 1], cur[j - 1])
                best = max(reach, d)
            cur[j] = best
        prev, cur = cur, prev
    return prev[m - 1]


@njit(cache=True, nogil=True)
def _point_segment_dist(px, py, ax, ay, bx, by):
    """Max-norm distance from a point to a segment (convex piecewise-linear minimisation)."""
    dx, dy = bx - ax, by - ay
    ux, uy = ax - px, ay - py
    best = max(abs(ux), abs(uy))
    d1 = max(abs(ux + dx), abs(uy + dy))
    if d1 < best:
        best = d1
    cands = np.empty(4)
    k = 0
    if dx != 0.0:
        cands[k] = -ux / dx
        k += 1
    if dy != 0.0:
        cands[k] = -uy / dy
        k += 1
    if dx - dy != 0.0:
        cands[k] = (uy - ux) / (dx - dy)
        k += 1
    if dx + dy != 0.0:
        cands[k] = -(uy + ux) / (dx + dy)
        k += 1
    for i in range(k):
        s = cands[i]
        if 0.0 < s < 1.0:
            d = max(abs(ux + s * dx), abs(uy + s * dy))
            if d < best:
                best = d
    return best


@njit(cache=True, nogil=True)
def _vertex_lower_bound(p, q):
    """max over vertices of p of the distance to the polyline q.

    Every point of one curve is matched to some point of the other, so this
    bounds the Frechet distance from below.
    """
    best = 0.0
    for i in range(p.shape[0]):
        px, py = p[i, 0], p[i, 1]
        if q.shape[0] == 1:
            near = max(abs(px - q[0, 0]), abs(py - q[0, 1]))
        else:
            near = np.inf
            for j in range(q.shape[0] - 1):
                d = _point_segment_dist(px, py, q[j, 0], q[j, 1], q[j + 1, 0], q[j + 1, 1])
                if d < near:
                    near = d
        if near > best:
            best = near
    return best


def _common_window(f: CadlagPath, g: CadlagPath) -> tuple[CadlagPath, CadlagPath]:
    lo = max(f.domain[0], g.domain[0])
    hi = min(f.domain[1], g.domain[1])
    if not lo < hi:
        raise ValueError("paths have no common domain")
    if f.domain != (lo, hi):
        f = f.restrict(lo, hi)
    if g.domain != (lo, hi):
        g = g.restrict(lo, hi)
    return f, g


def m1_distance(f: CadlagPath, g: CadlagPath, tol: float = 1e-3, n_start: int = 64,
                n_max: int = 1 << 16) -> M1Bracket:
    """Certified bracket ``[lower, upper]`` around the M1 distance, width ``<= tol``.

    Both graphs are sampled at their vertices plus ``n`` arclength-equispaced
    points; ``n`` doubles until the bracket is narrow enough. If ``n_max`` is
    reached first, the wider bracket is returned with a warning. The lower
    bound also uses the distance from each vertex to the other graph and the
    endpoint distances, which settles parallel pieces without refinement.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    f, g = _common_window(f, g)
    gf, gg = extended_graph(f), extended_graph(g)
    floor = max(float(np.abs(gf.points[0] - gg.points[0]).max()),
                float(np.abs(gf.points[-1] - gg.points[-1]).max()),
                float(_vertex_lower_bound(gf.points, gg.points)),
                float(_vertex_lower_bound(gg.points, gf.points)))
    n = max(2, int(n_start))
    while True:
        p = _samples_with_vertices(gf, n)
        q = _samples_with_vertices(gg, n)
        upper = float(discrete_frechet(p, q))
        lower = min(upper, max(floor, upper - max(_max_spacing(p), _max_spacing(q))))
        if upper - lower <= tol:
            return M1Bracket(lower, upper)
        if n >= n_max:
            warnings.warn(f"M1 bracket width {upper - lower:.3g} exceeds tol at n={n}",
                          RuntimeWarning, stacklevel=2)
            return M1Bracket(lower, upper)
        n *= 2


# --------------------------------------------------------------------------
# uniform distance and monotone paths


@njit(cache=True, nogil=True)
def _seg_value(t, left, right, j, x):
    # value at x given t[j] <= x (< t[j+1] unless j is last)
    if j == len(t) - 1 or x == t[j]:
        return right[j]
    return right[j] + (x - t[j]) / (t[j + 1] - t[j]) * (left[j + 1] - right[j])


@njit(cache=True, nogil=True)
def _seg_limit(t, left, right, j, x):
    # left limit at x given t[j] < x <= t[j+1]
    if x == t[j + 1]:
        return left[j + 1]
    return right[j] + (x - t[j]) / (t[j + 1] - t[j]) * (left[j + 1] - right[j])


@njit(cache=True, nogil=True)
def _sup_kernel(ft, fl, fr, gt, gl, gr, lo, hi, include_hi):
    """Exact sup |f - g| over [lo, hi] (or [lo, hi)) by merging the knots.

    On each piece between consecutive merged knots both paths are linear,
    so the sup is attained at the value at the start or the limit at the end.
    """
    nf, ng = len(ft), len(gt)
    jf = np.searchsorted(ft, lo, side="right") - 1
    jg = np.searchsorted(gt, lo, side="right") - 1
    x = lo
    best = 0.0
    while x < hi:
        while jf + 1 < nf and ft[jf + 1] <= x:
            jf += 1
        while jg + 1 < ng and gt[jg + 1] <= x:
            jg += 1
        nxt = hi
        if jf + 1 < nf and ft[jf + 1] < nxt:
            nxt = ft[jf + 1]
        if jg + 1 < ng and gt[jg + 1] < nxt:
            nxt = gt[jg + 1]
        d = abs(_seg_value(ft, fl, fr, jf, x) - _seg_value(gt, gl, gr, jg, x))
        if d > best:
            best = d
        d = abs(_seg_limit(ft, fl, fr, jf, nxt) - _seg_limit(gt, gl, gr, jg, nxt))
        if d > best:
            best = d
        x = nxt
    if include_hi:
        while jf + 1 < nf and ft[jf + 1] <= hi:
            jf += 1
        while jg + 1 < ng and gt[jg + 1] <= hi:
            jg += 1
        d = abs(_seg_value(ft, fl, fr, jf, hi) - _seg_value(gt, gl, gr, jg, hi))
        if d > best:
            best = d
    return best


def _elementary_sup(f: CadlagPath, g: CadlagPath, lo: float, hi: float,
                    include_hi: bool) -> float:
    """Exact ``sup |f - g|`` over ``[lo, hi]`` (or ``[lo, hi)``)."""
    return float(_sup_kernel(f.t, f.left, f.right, g.t, g.left, g.right,
                             float(lo), float(hi), bool(include_hi)))


def sup_distance(f: CadlagPath, g: CadlagPath, pieces=None) -> float:
    """Exact uniform distance on the common window.

    ``pieces`` optionally restricts the supremum to a union of intervals,
    given as ``(lo, hi, include_hi)`` triples; each piece is clipped to the
    window and empty pieces are skipped.
    """
    lo, hi = max(f.domain[0], g.domain[0]), min(f.domain[1], g.domain[1])
    if not lo <= hi:
        raise ValueError("paths have no common domain")
    if pieces is None:
        pieces = [(lo, hi, True)]
    best = None
    for a, b, inc in pieces:
        a2, b2 = max(a, lo), min(b, hi)
        inc2 = inc if b2 == b else True
        if a2 < b2 or (a2 == b2 and inc2):
            v = _elementary_sup(f, g, a2, b2, inc2) if a2 < b2 else float(abs(f(a2) - g(a2)))
            best = v if best is None else max(best, v)
    if best is None:
        raise ValueError("restriction set does not meet the window")
    return best


def m1_monotone_bound(f: CadlagPath, g: CadlagPath) -> float:
    """Uniform distance, an upper bound on M1 for two paths monotone the same way."""
    df, dg = f.monotone_direction(), g.monotone_direction()
    if df is None or dg is None or (df * dg < 0):
        raise ValueError("both paths must be monotone in the same direction")
    f, g = _common_window(f, g)
    return sup_distance(f, g)


# --------------------------------------------------------------------------
# running maxima


def running_max(f: CadlagPath) -> CadlagPath:
    """``t -> max of f over [alpha, t]``; no jump at ``alpha``."""
    t_out, l_out, r_out = [], [], []
    M = f.right[0]
    t_out.append(f.t[0])
    l_out.append(M)
    r_out.append(M)
    for j in range(len(f.t) - 1):
        t0, t1 = f.t[j], f.t[j + 1]
        x0, x1 = f.right[j], f.left[j + 1]
        if x1 > M:
            if x0 < M:
                # rising segment overtakes the running max
                tc = t0 + (M - x0) / (x1 - x0) * (t1 - t0)
                if t0 < tc < t1:
                    t_out.append(tc)
                    l_out.append(M)
                    r_out.append(M)
            M = x1
        l_out.append(M)
        M = max(M, f.right[j + 1])
        r_out.append(M)
        t_out.append(t1)
    return CadlagPath(np.array(t_out), np.array(l_out), np.array(r_out))


def reverse_time(f: CadlagPath) -> CadlagPath:
    """``t -> f(alpha + beta - t)``, made right-continuous.

    The value at the right end is ``f(alpha)``; the extension value of ``f``
    is dropped.
    """
    a, b = f.domain
    t = (a + b) - f.t[::-1]
    left = f.right[::-1].copy()
    right = f.left[::-1].copy()
    right[-1] = f.right[0]
    left[-1] = f.right[0] if len(f.t) == 1 else left[-1]
    right[0] = f.right[-1]
    left[0] = f.right[-1]
    return CadlagPath(t, left, right)


def running_max_reversed(f: CadlagPath) -> CadlagPath:
    """``t -> max of f over [alpha + beta - t, beta]`` (right-continuous version)."""
    return running_max(reverse_time(f))


# --------------------------------------------------------------------------
# compression


@njit(cache=True)
def _simplify_kernel(values, delta):
    keep = np.zeros(len(values), dtype=np.bool_)
    keep[0] = True
    last = values[0]
    for i in range(1, len(values)):
        if abs(values[i] - last) >= delta:
            keep[i] = True
            last = values[i]
    return keep


def simplify(f: CadlagPath, delta: float) -> CadlagPath:
    """Step path within uniform distance ``delta`` of ``f`` with fewer jumps.

    A jump is kept only once the value has moved by at least ``delta`` from
    the last kept value, so ``sup |f - simplify(f)| < delta`` and the M1
    distance changes by less than ``delta``.
    """
    if not f.is_step:
        raise ValueError("simplify needs a piecewise-constant path")
    if delta <= 0:
        return f
    kept = _simplify_kernel(f.right, float(delta))
    keep = kept.copy()
    keep[-1] = True
    t = f.t[keep]
    right = f.right[keep].copy()
    if not kept[-1] and len(right) > 1:
        # the closing knot was not a real jump: carry the last kept level
        right[-1] = right[-2]
    left = np.empty_like(right)
    left[0] = f.left[0]
    left[1:] = right[:-1]
    return CadlagPath(t, left, right)
