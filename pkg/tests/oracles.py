"""Independent reference computations used by the tests."""

import math

import numpy as np


def raster_voronoi_areas(points, width, depth, h=0.01):
    """Nearest-site pixel counts on an h-metre grid of pixel centres.

    Along one pixel row the squared distance to site i is
    x^2 - 2 x_i x + (x_i^2 + (y - y_i)^2), so the nearest site is the lower
    envelope of lines in x. The envelope gives exact per-row pixel counts.
    """
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    xs = (np.arange(int(round(width / h))) + 0.5) * h
    ys = (np.arange(int(round(depth / h))) + 0.5) * h
    order = np.lexsort((np.arange(n), pts[:, 0]))
    px = pts[order, 0]
    counts = np.zeros(n, dtype=np.int64)
    for y in ys:
        b = px ** 2 + (y - pts[order, 1]) ** 2
        m = -2.0 * px
        hull = []
        for k in range(n):
            if hull and m[hull[-1]] == m[k]:
                if b[k] < b[hull[-1]]:
                    hull.pop()
                else:
                    continue
            while len(hull) >= 2:
                i, j = hull[-2], hull[-1]
                x_ij = (b[j] - b[i]) / (m[i] - m[j])
                x_ik = (b[k] - b[i]) / (m[i] - m[k])
                if x_ik <= x_ij:
                    hull.pop()
                else:
                    break
            hull.append(k)
        brk = [(b[hull[t + 1]] - b[hull[t]]) / (m[hull[t]] - m[hull[t + 1]]) for t in range(len(hull) - 1)]
        edges = np.searchsorted(xs, brk, side="right")
        seg = np.diff(np.concatenate([[0], edges, [len(xs)]]))
        np.add.at(counts, order[hull], seg)
    return counts * h * h


def transit_time_1d(distance, v0=1.34, tau=0.5, dt=1e-4):
    """Time for dx/dt = v, dv/dt = (v0 - v)/tau from rest to cover ``distance``."""
    # closed form x(t) = v0 (t - tau (1 - exp(-t/tau))); refine by bisection
    lo, hi = 0.0, distance / v0 + 10 * tau
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        x = v0 * (mid - tau * (1 - math.exp(-mid / tau)))
        lo, hi = (mid, hi) if x < distance else (lo, mid)
    return 0.5 * (lo + hi)


def gaussian_sum(a, b, c, dt, steps, tinf):
    total = 0.0
    for k in range(steps):
        t = k * dt
        if t <= tinf:
            total += a * math.exp(-(((t - b) / c) ** 2))
    return total
