# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Same signatures and semantics as ``_fallback``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, fabs
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef void _forces(double[:, ::1] pos, double[:, ::1] vel, double[:, ::1] target,
                  unsigned char[::1] moving, double radius, double mass, double v0,
                  double tau, double A, double B, double k, double kappa,
                  double width, double depth, double cutoff,
                  double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t n = pos.shape[0]
    cdef Py_ssize_t i, j, w
    cdef double fx, fy, tx, ty, dist, ex, ey, dx, dy, d, nx, ny, g, contact, mag
    cdef double dvt, fric, dw, wnx, wny, wtx, wty, vt
    cdef double r2 = 2.0 * radius
    for i in range(n):
        out[i, 0] = 0.0
        out[i, 1] = 0.0
        if not moving[i]:
            continue
        tx = target[i, 0] - pos[i, 0]
        ty = target[i, 1] - pos[i, 1]
        dist = sqrt(tx * tx + ty * ty)
        ex = 0.0
        ey = 0.0
        if dist > 1e-12:
            ex = tx / dist
            ey = ty / dist
        fx = mass * (v0 * ex - vel[i, 0]) / tau
        fy = mass * (v0 * ey - vel[i, 1]) / tau
        for j in range(n):
            if j == i:
                continue
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            d = sqrt(dx * dx + dy * dy)
            if d > cutoff:
                continue
            if d < 1e-12:
                nx = 1.0 if i < j else -1.0
                ny = 0.0
            else:
                nx = dx / d
                ny = dy / d
            g = r2 - d
            contact = g if g > 0.0 else 0.0
            mag = A * exp(g / B) + k * contact
            dvt = (vel[j, 0] - vel[i, 0]) * (-ny) + (vel[j, 1] - vel[i, 1]) * nx
            fric = kappa * contact * dvt
            fx += mag * nx - fric * ny
            fy += mag * ny + fric * nx
        for w in range(4):
            if w == 0:
                dw = pos[i, 0]; wnx = 1.0; wny = 0.0
            elif w == 1:
                dw = width - pos[i, 0]; wnx = -1.0; wny = 0.0
            elif w == 2:
                dw = pos[i, 1]; wnx = 0.0; wny = 1.0
            else:
                dw = depth - pos[i, 1]; wnx = 0.0; wny = -1.0
            if dw > cutoff:
                continue
            g = radius - dw
            contact = g if g > 0.0 else 0.0
            mag = A * exp(g / B) + k * contact
            wtx = -wny
            wty = wnx
            vt = vel[i, 0] * wtx + vel[i, 1] * wty
            fric = kappa * contact * vt
            fx += mag * wnx - fric * wtx
            fy += mag * wny - fric * wty
        out[i, 0] = fx
        out[i, 1] = fy


def social_forces(pos, vel, target, moving, double radius, double mass, double v0,
                  double tau, double A, double B, double k, double kappa,
                  double width, double depth, double cutoff):
    cdef Py_ssize_t n = len(pos)
    out = np.zeros((n, 2))
    if n == 0:
        return out
    _forces(np.ascontiguousarray(pos, dtype=np.float64),
            np.ascontiguousarray(vel, dtype=np.float64),
            np.ascontiguousarray(target, dtype=np.float64),
            np.ascontiguousarray(moving, dtype=np.uint8),
            radius, mass, v0, tau, A, B, k, kappa, width, depth, cutoff, out)
    return out


def advance(double[:, ::1] pos, double[:, ::1] vel, double[:, ::1] target,
            unsigned char[::1] moving, double radius, double mass, double v0,
            double tau, double A, double B, double k, double kappa,
            double width, double depth, double cutoff, double dt, double vmax):
    cdef Py_ssize_t n = pos.shape[0]
    out = np.zeros((n, 2))
    if n == 0:
        return out
    cdef double[:, ::1] f = out
    cdef Py_ssize_t i
    cdef double vx, vy, s, px, py
    cdef double lo_x = radius, hi_x = width - radius
    cdef double lo_y = radius, hi_y = depth - radius
    with nogil:
        _forces(pos, vel, target, moving, radius, mass, v0, tau, A, B, k, kappa,
                width, depth, cutoff, f)
        for i in range(n):
            if not moving[i]:
                vel[i, 0] = 0.0
                vel[i, 1] = 0.0
                continue
            vx = vel[i, 0] + f[i, 0] / mass * dt
            vy = vel[i, 1] + f[i, 1] / mass * dt
            s = sqrt(vx * vx + vy * vy)
            if s > vmax:
                vx = vx * (vmax / s)
                vy = vy * (vmax / s)
            px = pos[i, 0] + vx * dt
            py = pos[i, 1] + vy * dt
            if px < lo_x:
                px = lo_x
                if vx < 0:
                    vx = 0.0
            elif px > hi_x:
                px = hi_x
                if vx > 0:
                    vx = 0.0
            if py < lo_y:
                py = lo_y
                if vy < 0:
                    vy = 0.0
            elif py > hi_y:
                py = hi_y
                if vy > 0:
                    vy = 0.0
            pos[i, 0] = px
            pos[i, 1] = py
            vel[i, 0] = vx
            vel[i, 1] = vy
    return out


def exposure_increment(double[:, ::1] sus_pos, double[:, ::1] origins, double[::1] ages,
                       double[::1] edges, double max_range, double[::1] a,
                       double[::1] b, double[::1] c):
    cdef Py_ssize_t m = sus_pos.shape[0]
    cdef Py_ssize_t nc = origins.shape[0]
    cdef Py_ssize_t ne = edges.shape[0]
    out = np.zeros(m)
    cdef double[::1] res = out
    cdef Py_ssize_t i, q, row
    cdef double dx, dy, d, z, acc
    with nogil:
        for i in range(m):
            acc = 0.0
            for q in range(nc):
                dx = sus_pos[i, 0] - origins[q, 0]
                dy = sus_pos[i, 1] - origins[q, 1]
                d = sqrt(dx * dx + dy * dy)
                if d > max_range:
                    continue
                row = 0
                while row < ne and edges[row] <= d:
                    row += 1
                z = (ages[q] - b[row]) / c[row]
                acc = acc + a[row] * exp(-(z * z))
            res[i] = acc
    return out


cdef Py_ssize_t _clip(double* xs, double* ys, Py_ssize_t n, double nx, double ny,
                      double cval, double* ox, double* oy) noexcept nogil:
    cdef Py_ssize_t idx, m = 0
    cdef double px, py, qx, qy, sp, sq, t
    for idx in range(n):
        px = xs[idx]
        py = ys[idx]
        qx = xs[(idx + 1) % n]
        qy = ys[(idx + 1) % n]
        sp = nx * px + ny * py - cval
        sq = nx * qx + ny * qy - cval
        if sp <= 0:
            ox[m] = px
            oy[m] = py
            m += 1
        if (sp < 0 and sq > 0) or (sq < 0 and sp > 0):
            t = sp / (sp - sq)
            ox[m] = px + t * (qx - px)
            oy[m] = py + t * (qy - py)
            m += 1
    return m


def voronoi_areas(points, double width, double depth):
    cdef double[:, ::1] pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 2)
    cdef Py_ssize_t n = pts.shape[0]
    out = np.zeros(n)
    if n == 0:
        return out
    cdef double[::1] areas = out
    cdef Py_ssize_t cap = 2 * n + 16
    cdef double* xs = <double*> malloc(cap * sizeof(double))
    cdef double* ys = <double*> malloc(cap * sizeof(double))
    cdef double* bx = <double*> malloc(cap * sizeof(double))
    cdef double* by = <double*> malloc(cap * sizeof(double))
    cdef double* tmp
    cdef Py_ssize_t i, jj, j, m, v
    cdef double xi, yi, xj, yj, nx, ny, cval, r2, dd, s
    d2_arr = np.empty(n)
    cdef double[::1] d2 = d2_arr
    cdef Py_ssize_t[::1] order
    try:
        for i in range(n):
            xi = pts[i, 0]
            yi = pts[i, 1]
            for j in range(n):
                d2[j] = (pts[j, 0] - xi) ** 2 + (pts[j, 1] - yi) ** 2
            order = np.argsort(d2_arr, kind="stable").astype(np.intp)
            xs[0] = 0.0; ys[0] = 0.0
            xs[1] = width; ys[1] = 0.0
            xs[2] = width; ys[2] = depth
            xs[3] = 0.0; ys[3] = depth
            m = 4
            with nogil:
                for jj in range(n):
                    j = order[jj]
                    if j == i:
                        continue
                    r2 = 0.0
                    for v in range(m):
                        dd = (xs[v] - xi) ** 2 + (ys[v] - yi) ** 2
                        if dd > r2:
                            r2 = dd
                    if d2[j] > 4.0 * r2:
                        break
                    xj = pts[j, 0]
                    yj = pts[j, 1]
                    nx = xj - xi
                    ny = yj - yi
                    cval = 0.5 * (nx * (xi + xj) + ny * (yi + yj))
                    m = _clip(xs, ys, m, nx, ny, cval, bx, by)
                    tmp = xs; xs = bx; bx = tmp
                    tmp = ys; ys = by; by = tmp
                    if m == 0:
                        break
                s = 0.0
                if m >= 3:
                    for v in range(m):
                        s += xs[v] * ys[(v + 1) % m] - xs[(v + 1) % m] * ys[v]
                areas[i] = 0.5 * fabs(s)
    finally:
        free(xs)
        free(ys)
        free(bx)
        free(by)
    return out
