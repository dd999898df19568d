"""Distance tables phi_k(u) = d(u, a_k) in the sqrt(2 W) path metric.

For m = 1 the distance is a cumulative integral of sqrt(2 W).  For m = 2
it solves the eikonal equation |grad phi| = sqrt(2 W) on a u-plane grid by
first-order fast marching.  Near the source the metric is conformal with
radial geodesics (W is quadratic there), so nodes inside a small disk are
initialized by direct line integrals, which removes the usual O(h) seed
error at the degenerate point.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

Array = np.ndarray


@dataclass(eq=False)
class PhiCache:
    """Interpolation tables for phi_k = d(., a_k), one per well.

    tables: list of (n,) arrays for m=1 or (n, n) arrays for m=2.
    coords: the shared grid axis (m=1) or axes (m=2, square grid).
    sigma:  (N, N) well-to-well distances; exact values returned when a
            query point coincides with a well.
    """

    wells: Array
    coords: tuple
    tables: list
    sigma: Array

    @property
    def m(self) -> int:
        return self.wells.shape[1]

    def eval(self, k: int, u: Array) -> Array:
        """Interpolate phi_k at points u of shape (..., m)."""
        u = np.asarray(u, dtype=float)
        if self.m == 1:
            grid = self.coords[0]
            return np.interp(u[..., 0], grid, self.tables[k])
        xs = self.coords[0]
        h = xs[1] - xs[0]
        n = xs.size
        q = (u - xs[0]) / h
        q = np.clip(q, 0.0, n - 1.0 - 1e-12)
        i0 = np.floor(q).astype(int)
        fr = q - i0
        tab = self.tables[k]
        ix, iy = i0[..., 0], i0[..., 1]
        fx, fy = fr[..., 0], fr[..., 1]
        v00 = tab[iy, ix]
        v10 = tab[iy, ix + 1]
        v01 = tab[iy + 1, ix]
        v11 = tab[iy + 1, ix + 1]
        return ((1 - fy) * ((1 - fx) * v00 + fx * v10)
                + fy * ((1 - fx) * v01 + fx * v11))

    def phi(self, k: int, u: Array) -> float:
        """phi_k at a single point, snapping exact well queries to sigma."""
        u = np.asarray(u, dtype=float).reshape(self.m)
        for j, a in enumerate(self.wells):
            if np.linalg.norm(u - a) < 1e-9:
                return 0.0 if j == k else float(self.sigma[k, j])
        return float(self.eval(k, u))


def _speed(p, pts: Array) -> Array:
    return np.sqrt(np.maximum(2.0 * p.eval(pts), 0.0))


def _line_integral(p, a: Array, b: Array, n: int = 33) -> float:
    """Integral of sqrt(2W) along the straight segment a -> b."""
    t = np.linspace(0.0, 1.0, n)[:, None]
    pts = a + t * (b - a)
    f = _speed(p, pts)
    return float(np.trapezoid(f, dx=1.0 / (n - 1)) * np.linalg.norm(b - a))


def _fmm_table(p, xs: Array, source: Array, seed_cells: int = 10) -> Array:
    """First-order fast-marching solve of |grad phi| = sqrt(2W), phi(src)=0."""
    n = xs.size
    h = xs[1] - xs[0]
    X, Y = np.meshgrid(xs, xs)
    f = _speed(p, np.stack([X, Y], axis=-1))

    phi = np.full((n, n), np.inf)
    accepted = np.zeros((n, n), dtype=bool)
    heap = []

    # exact seed disk around the source
    r_seed = seed_cells * h
    d2 = (X - source[0]) ** 2 + (Y - source[1]) ** 2
    seed_iy, seed_ix = np.nonzero(d2 <= r_seed * r_seed)
    for iy, ix in zip(seed_iy, seed_ix):
        val = _line_integral(p, source, np.array([xs[ix], xs[iy]]))
        phi[iy, ix] = val
        accepted[iy, ix] = True
    for iy, ix in zip(seed_iy, seed_ix):
        heapq.heappush(heap, (phi[iy, ix], int(iy), int(ix)))

    def relax(iy, ix):
        fx = np.inf
        if ix > 0 and accepted[iy, ix - 1]:
            fx = phi[iy, ix - 1]
        if ix < n - 1 and accepted[iy, ix + 1]:
            fx = min(fx, phi[iy, ix + 1])
        fy = np.inf
        if iy > 0 and accepted[iy - 1, ix]:
            fy = phi[iy - 1, ix]
        if iy < n - 1 and accepted[iy + 1, ix]:
            fy = min(fy, phi[iy + 1, ix])
        a, b = (fx, fy) if fx <= fy else (fy, fx)
        hf = h * f[iy, ix]
        if b - a >= hf:
            new = a + hf
        else:
            new = 0.5 * (a + b + np.sqrt(2.0 * hf * hf - (a - b) ** 2))
        if new < phi[iy, ix]:
            phi[iy, ix] = new
            heapq.heappush(heap, (new, iy, ix))

    while heap:
        val, iy, ix = heapq.heappop(heap)
        if accepted[iy, ix] and val > phi[iy, ix]:
            continue
        accepted[iy, ix] = True
        if ix > 0 and not accepted[iy, ix - 1]:
            relax(iy, ix - 1)
        if ix < n - 1 and not accepted[iy, ix + 1]:
            relax(iy, ix + 1)
        if iy > 0 and not accepted[iy - 1, ix]:
            relax(iy - 1, ix)
        if iy < n - 1 and not accepted[iy + 1, ix]:
            relax(iy + 1, ix)
    return phi


def build_tables(p, sigma: Array, grid_n: int = 481, pad: float = 1.05,
                 seed_cells: int = 10) -> PhiCache:
    """Build phi tables for every well over the box |u_i| <= pad * bound_M."""
    B = pad * p.bound_M
    if p.m == 1:
        grid = np.linspace(-B, B, 20001)
        f = _speed(p, grid[:, None])
        I = cumulative_trapezoid(f, grid, initial=0.0)
        tables = []
        for a in p.wells:
            Ia = np.interp(a[0], grid, I)
            tables.append(np.abs(I - Ia))
        return PhiCache(wells=p.wells, coords=(grid,), tables=tables,
                        sigma=sigma)
    if p.m != 2:
        raise ValueError("phi tables support m = 1 or m = 2 only")
    xs = np.linspace(-B, B, grid_n)
    tables = [_fmm_table(p, xs, a, seed_cells) for a in p.wells]
    return PhiCache(wells=p.wells, coords=(xs, xs), tables=tables,
                    sigma=sigma)
