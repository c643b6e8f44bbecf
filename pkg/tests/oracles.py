"""Reference computations used only by the tests."""
import numpy as np

from housesweep.m1 import discrete_frechet, extended_graph, uniform_speed_param


def _free_interval(a, b, q, eps):
    """Parameters s in [0, 1] with |a + s(b - a) - q|_inf <= eps."""
    lo, hi = 0.0, 1.0
    for k in range(2):
        d = b[k] - a[k]
        if d == 0:
            if abs(a[k] - q[k]) > eps:
                return None
            continue
        s1 = (q[k] - eps - a[k]) / d
        s2 = (q[k] + eps - a[k]) / d
        lo, hi = max(lo, min(s1, s2)), min(hi, max(s1, s2))
    return (lo, hi) if lo <= hi else None


def _frechet_decide(P, Q, eps):
    n, m = len(P), len(Q)
    dist = lambda p, q: max(abs(p[0] - q[0]), abs(p[1] - q[1]))
    if dist(P[0], Q[0]) > eps or dist(P[-1], Q[-1]) > eps:
        return False
    if n == 1:
        return all(dist(P[0], q) <= eps for q in Q)
    if m == 1:
        return all(dist(p, Q[0]) <= eps for p in P)
    # L[i][j]: reachable part of the edge {P[i]} x Q[j..j+1]
    # B[i][j]: reachable part of the edge P[i..i+1] x {Q[j]}
    L = [[None] * (m - 1) for _ in range(n)]
    B = [[None] * m for _ in range(n - 1)]
    ok = True
    for j in range(m - 1):
        f = _free_interval(Q[j], Q[j + 1], P[0], eps)
        ok = ok and f is not None and f[0] == 0.0
        L[0][j] = f if ok else None
        ok = ok and f[1] == 1.0
    ok = True
    for i in range(n - 1):
        f = _free_interval(P[i], P[i + 1], Q[0], eps)
        ok = ok and f is not None and f[0] == 0.0
        B[i][0] = f if ok else None
        ok = ok and f[1] == 1.0
    for i in range(n - 1):
        for j in range(m - 1):
            left, bottom = L[i][j], B[i][j]
            top = _free_interval(P[i], P[i + 1], Q[j + 1], eps)
            right = _free_interval(Q[j], Q[j + 1], P[i + 1], eps)
            if top is not None:
                if left is not None:
                    B[i][j + 1] = top
                elif bottom is not None and max(top[0], bottom[0]) <= top[1]:
                    B[i][j + 1] = (max(top[0], bottom[0]), top[1])
            if right is not None:
                if bottom is not None:
                    L[i + 1][j] = right
                elif left is not None and max(right[0], left[0]) <= right[1]:
                    L[i + 1][j] = (max(right[0], left[0]), right[1])
    end_l, end_b = L[n - 1][m - 2], B[n - 2][m - 1]
    return (end_l is not None and end_l[1] == 1.0) or (end_b is not None and end_b[1] == 1.0)


def frechet_exact(P, Q, tol=1e-9):
    """Continuous Frechet distance (max-norm) of two polylines by bisection."""
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    lo = max(np.abs(P[0] - Q[0]).max(), np.abs(P[-1] - Q[-1]).max())
    hi = max(np.abs(P[:, None, :] - Q[None, :, :]).max(), lo)
    if _frechet_decide(P, Q, lo):
        return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _frechet_decide(P, Q, mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def m1_exact(f, g, tol=1e-9):
    return frechet_exact(extended_graph(f).points, extended_graph(g).points, tol)


def m1_dense_grid(f, g, n=10_000):
    """Discrete Frechet on ``n`` equispaced samples of each extended graph.

    Returns the value and its own resolution (largest sample gap).
    """
    p = uniform_speed_param(extended_graph(f), n).points
    q = uniform_speed_param(extended_graph(g), n).points
    gap = max(np.abs(np.diff(p, axis=0)).max(), np.abs(np.diff(q, axis=0)).max())
    return float(discrete_frechet(p, q)), float(gap)


def random_step_pair(rng, max_breaks=5, window=(0.0, 1.0)):
    a, b = window
    out = []
    for _ in range(2):
        k = rng.integers(0, max_breaks + 1)
        times = np.sort(rng.uniform(a, b, size=k))
        times = np.concatenate(([a], times))
        values = rng.uniform(0.0, 1.0, size=k + 1)
        out.append((times, values))
    from housesweep.m1 import CadlagPath
    return tuple(CadlagPath.step(t, v, b) for t, v in out)


def hit_before_prob(p, start, target, forbidden):
    """P(plain walk from start hits target before forbidden), by a linear solve."""
    lo, hi = min(target, forbidden), max(target, forbidden)
    n = hi - lo + 1
    A = np.eye(n)
    rhs = np.zeros(n)
    for i in range(1, n - 1):
        A[i, i + 1] -= p
        A[i, i - 1] -= 1 - p
    rhs[target - lo] = 1.0
    return float(np.linalg.solve(A, rhs)[start - lo])


def excursion_mass(p, N):
    """P_N(hit 0 before returning to N) for the plain walk with up-probability p."""
    return (1 - p) * hit_before_prob(p, N - 1, 0, N)


def capped_tv(a, b):
    """TV between two laws known on a common enumerated set; leftover mass is one tail atom."""
    return 0.5 * (np.abs(a - b).sum() + abs((1 - a.sum()) - (1 - b.sum())))


def conditioned_fixation_time_mean(N, s, start=1):
    """E[T | fixation] for the mutant count of the Moran chain, via E[T; fix] / P(fix).

    First-step analysis on the plain chain: the mutant count moves up at rate
    (1+s)m(N-m)/N and down at rate m(N-m)/N.
    """
    m = np.arange(N + 1, dtype=np.float64)
    up = (1 + s) / (2 + s)
    A = np.eye(N + 1)
    for i in range(1, N):
        A[i, i + 1] -= up
        A[i, i - 1] -= 1 - up
    e_fix = np.zeros(N + 1)
    e_fix[N] = 1.0
    f = np.linalg.solve(A, e_fix)
    hold = np.zeros(N + 1)
    hold[1:N] = 1.0 / ((2 + s) * m[1:N] * (N - m[1:N]) / N)
    w = np.linalg.solve(A, f * hold)
    return float(w[start] / f[start])
