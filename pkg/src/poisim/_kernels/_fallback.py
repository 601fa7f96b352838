"""Pure numpy implementations of the hot kernels.

Mirrors ``_core.pyx`` function for function. Used when the compiled module
is unavailable or ``POISIM_KERNEL=python`` is set.
"""

import numpy as np


def social_forces(pos, vel, target, moving, radius, mass, v0, tau, A, B, k, kappa,
                  width, depth, cutoff):
    """Total social force on every agent in the compact arrays.

    Forces are returned for all rows; rows with ``moving == 0`` are zero
    because stopped agents are obstacles and do not respond.
    """
    n = len(pos)
    forces = np.zeros((n, 2))
    if n == 0:
        return forces
    mov = moving.astype(bool)

    to_target = target - pos
    dist_t = np.hypot(to_target[:, 0], to_target[:, 1])
    e = np.zeros((n, 2))
    nz = dist_t > 1e-12
    e[nz] = to_target[nz] / dist_t[nz, None]
    forces += mass * (v0 * e - vel) / tau

    # pedestrian terms
    diff = pos[:, None, :] - pos[None, :, :]
    d = np.hypot(diff[..., 0], diff[..., 1])
    np.fill_diagonal(d, np.inf)
    near = d <= cutoff
    coincident = d < 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        nij = diff / d[..., None]
    if coincident.any():
        ii, jj = np.nonzero(coincident)
        nij[ii, jj] = np.where((ii < jj)[:, None], [1.0, 0.0], [-1.0, 0.0])
    g = 2.0 * radius - d
    contact = np.maximum(0.0, g)
    mag = np.where(near, A * np.exp(g / B) + k * contact, 0.0)
    tij = np.stack([-nij[..., 1], nij[..., 0]], axis=-1)
    dv = vel[None, :, :] - vel[:, None, :]
    dvt = np.einsum("ijk,ijk->ij", dv, tij)
    fric = np.where(near, kappa * contact * dvt, 0.0)
    fped = mag[..., None] * nij + fric[..., None] * tij
    fped[~near] = 0.0
    forces += fped.sum(axis=1)

    # walls: left, right, bottom, top
    x, y = pos[:, 0], pos[:, 1]
    vx, vy = vel[:, 0], vel[:, 1]
    for dw, nx, ny in ((x, 1.0, 0.0), (width - x, -1.0, 0.0),
                       (y, 0.0, 1.0), (depth - y, 0.0, -1.0)):
        gw = radius - dw
        cw = np.maximum(0.0, gw)
        m = np.where(dw <= cutoff, A * np.exp(gw / B) + k * cw, 0.0)
        tx, ty = -ny, nx
        vt = vx * tx + vy * ty
        fr = np.where(dw <= cutoff, kappa * cw * vt, 0.0)
        forces[:, 0] += m * nx - fr * tx
        forces[:, 1] += m * ny - fr * ty

    forces[~mov] = 0.0
    return forces


def advance(pos, vel, target, moving, radius, mass, v0, tau, A, B, k, kappa,
            width, depth, cutoff, dt, vmax):
    """One semi-implicit Euler step, in place. Returns the force array."""
    f = social_forces(pos, vel, target, moving, radius, mass, v0, tau, A, B, k, kappa,
                      width, depth, cutoff)
    mov = moving.astype(bool)
    v = vel[mov] + f[mov] / mass * dt
    speed = np.hypot(v[:, 0], v[:, 1])
    over = speed > vmax
    v[over] *= (vmax / speed[over])[:, None]
    p = pos[mov] + v * dt
    lo_x, hi_x, lo_y, hi_y = radius, width - radius, radius, depth - radius
    hit = p[:, 0] < lo_x
    p[hit, 0] = lo_x
    v[hit & (v[:, 0] < 0), 0] = 0.0
    hit = p[:, 0] > hi_x
    p[hit, 0] = hi_x
    v[hit & (v[:, 0] > 0), 0] = 0.0
    hit = p[:, 1] < lo_y
    p[hit, 1] = lo_y
    v[hit & (v[:, 1] < 0), 1] = 0.0
    hit = p[:, 1] > hi_y
    p[hit, 1] = hi_y
    v[hit & (v[:, 1] > 0), 1] = 0.0
    pos[mov] = p
    vel[mov] = v
    vel[~mov] = 0.0
    return f


def exposure_increment(sus_pos, origins, ages, edges, max_range, a, b, c):
    """Summed Gaussian exposure per susceptible from all active coughs."""
    m = len(sus_pos)
    if m == 0 or len(origins) == 0:
        return np.zeros(m)
    diff = sus_pos[:, None, :] - origins[None, :, :]
    d = np.sqrt(diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1])
    inside = d <= max_range
    row = np.searchsorted(edges, d, side="right")
    row = np.minimum(row, len(a) - 1)
    z = (ages[None, :] - b[row]) / c[row]
    e = a[row] * np.exp(-(z * z))
    return np.where(inside, e, 0.0).sum(axis=1)


def _clip(poly, nx, ny, cval):
    """Sutherland-Hodgman clip of ``poly`` against nx*x + ny*y <= cval."""
    out = []
    n = len(poly)
    for idx in range(n):
        px, py = poly[idx]
        qx, qy = poly[(idx + 1) % n]
        sp = nx * px + ny * py - cval
        sq = nx * qx + ny * qy - cval
        if sp <= 0:
            out.append((px, py))
        if (sp < 0 < sq) or (sq < 0 < sp):
            t = sp / (sp - sq)
            out.append((px + t * (qx - px), py + t * (qy - py)))
    return out


def _area(poly):
    s = 0.0
    n = len(poly)
    for idx in range(n):
        x0, y0 = poly[idx]
        x1, y1 = poly[(idx + 1) % n]
        s += x0 * y1 - x1 * y0
    return 0.5 * abs(s)


def voronoi_areas(points, width, depth):
    """Areas of Voronoi cells clipped to the [0, width] x [0, depth] box."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    areas = np.zeros(n)
    for i in range(n):
        xi, yi = pts[i]
        poly = [(0.0, 0.0), (width, 0.0), (width, depth), (0.0, depth)]
        d2 = ((pts - pts[i]) ** 2).sum(axis=1)
        order = np.argsort(d2, kind="stable")
        for j in order:
            if j == i:
                continue
            r2 = max((px - xi) ** 2 + (py - yi) ** 2 for px, py in poly)
            # a site farther than twice the cell radius cannot cut the cell
            if d2[j] > 4.0 * r2:
                break
            xj, yj = pts[j]
            nx, ny = xj - xi, yj - yi
            cval = 0.5 * (nx * (xi + xj) + ny * (yi + yj))
            poly = _clip(poly, nx, ny, cval)
            if not poly:
                break
        areas[i] = _area(poly) if len(poly) >= 3 else 0.0
    return areas
