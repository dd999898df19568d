"""Masked-grid discretization of the eps energy and its descent solvers.

The energy of a field u on a node grid is summed over complete cells (all
four corners inside the domain):

    (eps/4) [ (u_E - u_W)^2 pairs along both cell edges ] +
    (h^2 / (4 eps)) [ W at the four corners ]

whose exact derivative at a full-stencil interior node is the 5-point
scheme h^2 (-eps lap u + W_u(u)/eps).  Keeping the gradient the literal
derivative of the sum (rather than a separately discretized PDE) is what
makes the line searches and the monotonicity assertions trustworthy.
"""

from __future__ import annotations

import time
import weakref
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .connect1d import ConnectionProfile
from .potential import Potential

Array = np.ndarray


@dataclass(frozen=True, eq=False)
class Domain2D:
    """Masked Cartesian node grid for a disk or an axis-aligned rectangle.

    mask: 0 exterior, 1 boundary (inside with an outside 4-neighbor or on
    the array edge), 2 interior.  Every interior node therefore has four
    in-domain neighbors.  Boundary nodes are ordered by their boundary
    parameter: angle in [0, 2pi) for disks, counterclockwise arclength for
    rectangles.
    """

    shape: str
    h: float
    xs: Array
    ys: Array
    mask: Array               # (ny, nx) int8
    boundary_iy: Array        # (nb,) ordered by parameter
    boundary_ix: Array
    boundary_param: Array     # (nb,)
    boundary_normal: Array    # (nb, 2)
    param_total: float
    params: dict
    # stencil weights derived from the complete-cell set
    cellmask: Array = dc_field(repr=False, default=None)
    kx: Array = dc_field(repr=False, default=None)
    ky: Array = dc_field(repr=False, default=None)
    ncells: Array = dc_field(repr=False, default=None)

    @property
    def nx(self) -> int:
        return self.xs.size

    @property
    def ny(self) -> int:
        return self.ys.size

    @property
    def n_inside(self) -> int:
        return int(np.count_nonzero(self.mask))

    @property
    def area(self) -> float:
        """Domain area as resolved by the quadrature (complete cells)."""
        return float(np.count_nonzero(self.cellmask)) * self.h * self.h

    def node_xy(self) -> tuple:
        return np.meshgrid(self.xs, self.ys)


def _finish(shape, h, xs, ys, inside, params, boundary_param_fn,
            normal_fn, param_total) -> Domain2D:
    ny, nx = inside.shape
    pad = np.zeros((ny + 2, nx + 2), dtype=bool)
    pad[1:-1, 1:-1] = inside
    has_all = (pad[:-2, 1:-1] & pad[2:, 1:-1]
               & pad[1:-1, :-2] & pad[1:-1, 2:])
    interior = inside & has_all
    boundary = inside & ~has_all
    mask = np.zeros((ny, nx), dtype=np.int8)
    mask[boundary] = 1
    mask[interior] = 2

    cellmask = (inside[:-1, :-1] & inside[:-1, 1:]
                & inside[1:, :-1] & inside[1:, 1:])
    cm = np.zeros((ny + 1, nx + 1), dtype=np.int8)
    cm[1:ny, 1:nx] = cellmask
    # kx[iy, ix]: complete cells sharing the edge (iy,ix)-(iy,ix+1)
    kx = cm[1:ny + 1, 1:nx] + cm[0:ny, 1:nx]
    # ky[iy, ix]: complete cells sharing the edge (iy,ix)-(iy+1,ix)
    ky = cm[1:ny, 1:nx + 1] + cm[1:ny, 0:nx]
    ncells = (cm[0:ny, 0:nx] + cm[0:ny, 1:nx + 1]
              + cm[1:ny + 1, 0:nx] + cm[1:ny + 1, 1:nx + 1])

    by, bx = np.nonzero(boundary)
    t = boundary_param_fn(xs[bx], ys[by])
    order = np.argsort(t, kind="stable")
    by, bx, t = by[order], bx[order], t[order]
    normals = normal_fn(xs[bx], ys[by])

    return Domain2D(shape=shape, h=h, xs=xs, ys=ys, mask=mask,
                    boundary_iy=by, boundary_ix=bx, boundary_param=t,
                    boundary_normal=normals, param_total=param_total,
                    params=params, cellmask=cellmask, kx=kx, ky=ky,
                    ncells=ncells)


def build_disk(radius: float = 1.0, n: int = 256) -> Domain2D:
    """Disk of the given radius centered at the origin, n nodes per axis."""
    if n < 16:
        raise ValueError("grid too coarse")
    xs = np.linspace(-radius, radius, n)
    h = xs[1] - xs[0]
    X, Y = np.meshgrid(xs, xs)
    inside = X * X + Y * Y <= radius * radius

    def param(x, y):
        return np.mod(np.arctan2(y, x), 2.0 * np.pi)

    def normal(x, y):
        r = np.maximum(np.hypot(x, y), 1e-30)
        return np.stack([x / r, y / r], axis=1)

    return _finish("disk", h, xs, xs, inside,
                   {"radius": float(radius)}, param, normal, 2.0 * np.pi)


def build_rectangle(width: float = 1.0, height: float = 1.0,
                    n: int = 128) -> Domain2D:
    """Rectangle [0, width] x [0, height]; n nodes across the width."""
    if n < 16:
        raise ValueError("grid too coarse")
    xs = np.linspace(0.0, width, n)
    h = xs[1] - xs[0]
    ny = int(round(height / h)) + 1
    ys = np.linspace(0.0, height, ny)
    hy = ys[1] - ys[0]
    if abs(hy - h) > 1e-9 * h:
        raise ValueError("height must be a near-multiple of the grid step")
    inside = np.ones((ny, n), dtype=bool)
    W, H = float(width), float(height)
    per = 2.0 * (W + H)

    def param(x, y):
        # counterclockwise arclength from (0, 0): bottom, right, top, left
        t = np.where(y <= 0.0, x,
            np.where(x >= W, W + y,
            np.where(y >= H, W + H + (W - x), 2 * W + H + (H - y))))
        return np.mod(t, per)

    def normal(x, y):
        nvec = np.zeros((x.size, 2))
        nvec[:, 0] = np.where(x >= W, 1.0, np.where(x <= 0.0, -1.0, 0.0))
        nvec[:, 1] = np.where(y >= H, 1.0, np.where(y <= 0.0, -1.0, 0.0))
        nn = np.maximum(np.linalg.norm(nvec, axis=1), 1e-30)
        return nvec / nn[:, None]

    return _finish("rectangle", h, xs, ys, inside,
                   {"width": W, "height": H}, param, normal, per)


# ---------------------------------------------------------------------------
# Dirichlet data

def sharp_phase(arcs, t):
    """Well index of the sharp limit data at boundary parameter t."""
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.full(tt.shape, -1, dtype=int)
    for (t0, t1), k in arcs:
        sel = (tt >= t0) & (tt < t1)
        out[sel] = k
    if np.any(out < 0):
        raise ValueError("boundary parameter not covered by the arc list")
    return out if np.ndim(t) else int(out[0])


@dataclass(frozen=True, eq=False)
class DirichletData:
    """Boundary values g_eps at the domain's ordered boundary nodes.

    spec is the arc list [((t0, t1), well), ...]; transitions of arclength
    half-width width_c * eps are centered at the arc junctions and traverse
    the 1D connection profile between the adjacent wells.
    """

    values: Array            # (nb, m)
    eps: float
    spec: list
    width_c: float


def _validate_arcs(arcs, param_total):
    arcs = sorted(arcs, key=lambda a: a[0][0])
    if abs(arcs[0][0][0]) > 1e-9:
        raise ValueError("arc list must start at parameter 0")
    for (a, b) in zip(arcs[:-1], arcs[1:]):
        if abs(a[0][1] - b[0][0]) > 1e-9:
            raise ValueError(
                f"arcs must tile the boundary; gap between {a} and {b}")
    if abs(arcs[-1][0][1] - param_total) > 1e-9:
        raise ValueError("arc list must end at the full boundary parameter")
    return arcs


def _profile_at(table, i, j, s):
    """Connection value between wells i -> j at fraction s in [0, 1]."""
    if (i, j) in table:
        prof = table[(i, j)]
    elif (j, i) in table:
        prof = table[(j, i)]
        s = 1.0 - s
    else:
        raise KeyError(f"no connection profile for pair ({i},{j})")
    U = prof.samples
    x = s * (U.shape[0] - 1)
    i0 = int(np.clip(np.floor(x), 0, U.shape[0] - 2))
    fr = x - i0
    return (1.0 - fr) * U[i0] + fr * U[i0 + 1]


def make_dirichlet(dom: Domain2D, arcs, eps: float, conn_table: dict,
                   width_c: float = 1.0, wells: Array = None) -> DirichletData:
    """Mollified boundary data: wells on arcs, connection profiles across
    the arc junctions, transition arclength half-width = width_c * eps.

    Rejects transition windows that overlap (eps too large for the arcs).
    """
    if wells is None:
        raise ValueError("wells array required")
    arcs = _validate_arcs(list(arcs), dom.param_total)
    R = dom.params.get("radius", 1.0) if dom.shape == "disk" else 1.0
    w = width_c * eps / R   # half-width in parameter units
    njump = len(arcs)
    jumps = [arc[0][0] for arc in arcs]   # junction at the start of each arc
    for a in range(njump):
        arclen = arcs[a][0][1] - arcs[a][0][0]
        if arclen <= 2.0 * w:
            raise ValueError(
                f"transitions overlap on arc {arcs[a]}: half-width {w:.4g} "
                f"vs arc length {arclen:.4g}")

    t = dom.boundary_param
    m = next(iter(conn_table.values())).samples.shape[1]
    values = np.empty((t.size, m))
    T = dom.param_total
    for idx, tk in enumerate(t):
        k_arc = sharp_phase(arcs, tk)
        val = None
        for a in range(njump):
            before = arcs[a - 1][1]
            after = arcs[a][1]
            if before == after:            # same phase on both sides
                continue
            d = tk - jumps[a]
            d -= T * np.round(d / T)       # circular signed distance
            if abs(d) < w:
                s = 0.5 + 0.5 * d / w
                val = _profile_at(conn_table, before, after, s)
                break
        if val is None:
            val = wells[k_arc]
        values[idx] = val
    return DirichletData(values=values, eps=float(eps), spec=arcs,
                         width_c=float(width_c))


def boundary_weights(dom: Domain2D) -> Array:
    """Arclength weight per boundary node (half of each incident chord)."""
    x = dom.xs[dom.boundary_ix]
    y = dom.ys[dom.boundary_iy]
    pts = np.stack([x, y], axis=1)
    nxt = np.roll(pts, -1, axis=0)
    chord = np.linalg.norm(nxt - pts, axis=1)
    return 0.5 * (chord + np.roll(chord, 1))


def dirichlet_l1_to_sharp(dd: DirichletData, dom: Domain2D,
                          wells: Array) -> float:
    """Boundary L1 distance between g_eps and the sharp arc data g_0."""
    labels = sharp_phase(dd.spec, dom.boundary_param)
    diff = dd.values - wells[labels]
    return float(np.sum(np.linalg.norm(diff, axis=1) * boundary_weights(dom)))


# ---------------------------------------------------------------------------
# Fields and energy

@dataclass(eq=False)
class Field:
    """Node values u (ny, nx, m) on a domain at a given eps.

    Exterior nodes are held at zero; boundary nodes are re-imposed from the
    Dirichlet data after every update (dirichlet may be None for the
    natural-boundary mass-constrained problem).
    """

    u: Array
    eps: float
    domain: Domain2D
    dirichlet: Optional[DirichletData] = None

    def impose(self):
        if self.dirichlet is not None:
            self.u[self.domain.boundary_iy, self.domain.boundary_ix] = \
                self.dirichlet.values
        self.u[self.domain.mask == 0] = 0.0

    def copy(self) -> "Field":
        return Field(u=self.u.copy(), eps=self.eps, domain=self.domain,
                     dirichlet=self.dirichlet)


@dataclass(eq=False)
class SolveReport:
    energy_trace: list
    final_residual: float
    iterations: int
    wall_time: float
    converged: bool
    stop_reason: str = ""
    mass_violation_max: Optional[float] = None
    sup_norm_max: float = 0.0


def energy_of(U: Array, dom: Domain2D, eps: float, p: Potential) -> float:
    cm = dom.cellmask
    P = U[:-1, :-1]
    R = U[:-1, 1:]
    T = U[1:, :-1]
    D = U[1:, 1:]
    grad2 = (np.sum((R - P) ** 2, axis=-1) + np.sum((D - T) ** 2, axis=-1)
             + np.sum((T - P) ** 2, axis=-1) + np.sum((D - R) ** 2, axis=-1))
    Wn = p.eval(U)
    Wc = Wn[:-1, :-1] + Wn[:-1, 1:] + Wn[1:, :-1] + Wn[1:, 1:]
    h2 = dom.h * dom.h
    cell = 0.25 * eps * grad2 + (h2 / (4.0 * eps)) * Wc
    return float(np.sum(cell * cm))


def energy(f: Field, p: Potential) -> float:
    """Discrete J_eps over complete cells; exact zero on constant wells."""
    return energy_of(f.u, f.domain, f.eps, p)


def _raw_gradient(U: Array, dom: Domain2D, eps: float, p: Potential) -> Array:
    """Exact derivative of energy_of with respect to every node value."""
    g = np.zeros_like(U)
    dx = U[:, :-1] - U[:, 1:]
    wx = (0.5 * eps) * dom.kx[..., None]
    g[:, :-1] += wx * dx
    g[:, 1:] -= wx * dx
    dy = U[:-1] - U[1:]
    wy = (0.5 * eps) * dom.ky[..., None]
    g[:-1] += wy * dy
    g[1:] -= wy * dy
    h2 = dom.h * dom.h
    g += (h2 / (4.0 * eps)) * dom.ncells[..., None] * p.grad(U)
    g[dom.mask == 0] = 0.0
    return g


def energy_gradient(f: Field, p: Potential) -> Array:
    """Gradient of the discrete energy; zeroed at boundary/exterior nodes."""
    g = _raw_gradient(f.u, f.domain, f.eps, p)
    g[f.domain.mask != 2] = 0.0
    return g


def residual_sup(g: Array, h: float) -> float:
    """Sup norm of the Euler-Lagrange residual (gradient / cell area)."""
    return float(np.max(np.abs(g))) / (h * h)


def _max_norm(U: Array) -> float:
    return float(np.sqrt(np.sum(U * U, axis=-1).max()))


def _step_size(dom: Domain2D, eps: float, p: Potential) -> float:
    lam = p.well_hessian_max_eig()
    return min(dom.h * dom.h / (8.0 * eps), eps / lam)


def _descend(f: Field, p: Potential, tol, max_iter, free,
             project=None, reproject=None, c1: float = 1e-4,
             plateau_win: int = 100, plateau_rel: float = 1e-10,
             residual_every: int = 25):
    """Plain Armijo gradient descent on the free nodes.

    free is a (ny, nx) bool mask of movable nodes.  project, when given,
    maps a gradient-shaped array onto the constraint tangent space and
    reproject maps an iterate back onto the affine constraint (both used
    by the mass-constrained solver).
    """
    dom = f.domain
    eps = f.eps
    h2 = dom.h * dom.h
    t0 = time.perf_counter()
    if tol is None:
        tol = 1e-6 / eps
    freem = free[..., None]

    def grad_at(U):
        g = _raw_gradient(U, dom, eps, p)
        g = np.where(freem, g, 0.0)
        if project is not None:
            g = project(g)
        return g

    U = f.u
    bound = p.bound_M + 1e-9
    sup_max = _max_norm(U)
    assert sup_max <= bound, "initial field exceeds the well bound"

    E = energy_of(U, dom, eps, p)
    trace = [E]
    g = grad_at(U)
    res = residual_sup(g, dom.h)
    if res < tol:
        return SolveReport(energy_trace=trace, final_residual=res,
                           iterations=0,
                           wall_time=time.perf_counter() - t0,
                           converged=True, stop_reason="residual",
                           sup_norm_max=sup_max)

    dt0 = _step_size(dom, eps, p)
    dt = dt0
    dt_cap = 4.0 * dt0
    scale = 1.0 / h2          # steps apply dt to the residual-scaled gradient
    stop = "max_iter"
    converged = False
    it = 0

    while it < max_iter:
        it += 1
        gsq = float(np.sum(g * g)) * scale
        if gsq == 0.0:
            stop = "stationary"
            converged = True
            break
        taken = False
        for _ in range(60):
            Z = U - (dt * scale) * g
            Ez = energy_of(Z, dom, eps, p)
            if Ez <= E - c1 * dt * gsq:
                taken = True
                break
            dt *= 0.5
        if not taken:
            stop = "line_search_stall"
            converged = True
            break
        U = Z
        E = Ez
        dt = min(dt * 1.1, dt_cap)
        if reproject is not None:
            U = reproject(U)
        g = grad_at(U)
        trace.append(E)
        sup_max = max(sup_max, _max_norm(np.where(freem, U, 0.0)))
        assert sup_max <= bound, \
            f"iterate escaped the well bound: {sup_max} > {p.bound_M}"

        res = residual_sup(g, dom.h)
        if res < tol:
            stop = "residual"
            converged = True
            break
        if len(trace) > plateau_win:
            drop = trace[-plateau_win - 1] - trace[-1]
            if drop <= plateau_rel * max(abs(trace[-1]), 1e-30):
                stop = "energy_plateau"
                converged = True
                break

    f.u = U
    f.impose()
    res = residual_sup(grad_at(f.u), dom.h)
    return SolveReport(energy_trace=trace, final_residual=res,
                       iterations=it, wall_time=time.perf_counter() - t0,
                       converged=converged, stop_reason=stop,
                       sup_norm_max=sup_max)


_L0_cache = weakref.WeakKeyDictionary()


def _edge_L0(dom: Domain2D):
    """Sparse symmetric operator with (L0 u)_P = sum_edges (k_e/2)(u_P - u_Q).

    This is the linear (Dirichlet-energy) part of _raw_gradient divided by
    eps; it depends only on the domain, so it is cached per instance.
    """
    L0 = _L0_cache.get(dom)
    if L0 is not None:
        return L0
    ny, nx = dom.mask.shape
    idx = np.arange(ny * nx).reshape(ny, nx)
    rows, cols, vals = [], [], []
    for w, a, b in ((0.5 * dom.kx, idx[:, :-1], idx[:, 1:]),
                    (0.5 * dom.ky, idx[:-1, :], idx[1:, :])):
        w, a, b = w.ravel(), a.ravel(), b.ravel()
        keep = w > 0
        w, a, b = w[keep], a[keep], b[keep]
        rows.extend((a, b, a, b))
        cols.extend((a, b, b, a))
        vals.extend((w, w, -w, -w))
    L0 = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(ny * nx, ny * nx))
    _L0_cache[dom] = L0
    return L0


def _descend_implicit(f: Field, p: Potential, tol, max_iter, free,
                      mass_target=None, violation=None,
                      plateau_win: int = 100, plateau_rel: float = 1e-10):
    """FISTA on the splitting E = (Dirichlet part) + (reaction part).

    The quadratic part is handled by its exact proximal map, one sparse
    triangular solve per step from a factorization of I + s K; only the
    reaction limits the step, so s ~ eps / |W''| instead of the explicit
    CFL step h^2 / eps.  Momentum is restarted whenever the true energy
    would increase, keeping the reported trace non-increasing.  With
    mass_target the proximal map is solved on the affine slice
    h^2 sum u = m via its KKT system, so iterates stay feasible exactly.
    """
    dom = f.domain
    eps = f.eps
    h2 = dom.h * dom.h
    t0 = time.perf_counter()
    if tol is None:
        tol = 1e-6 / eps
    freem = free[..., None]
    m = p.m
    nn = dom.ny * dom.nx

    U = f.u
    bound = p.bound_M + 1e-9
    sup_max = _max_norm(U)
    assert sup_max <= bound, "initial field exceeds the well bound"

    def project(g):
        if mass_target is None:
            return g
        mean = g[free].sum(axis=0) / max(np.count_nonzero(free), 1)
        return np.where(freem, g - mean, 0.0)

    def grad_at(Uarr):
        g = _raw_gradient(Uarr, dom, eps, p)
        return project(np.where(freem, g, 0.0))

    E = energy_of(U, dom, eps, p)
    trace = [E]
    res = residual_sup(grad_at(U), dom.h)
    if res < tol:
        return SolveReport(energy_trace=trace, final_residual=res,
                           iterations=0,
                           wall_time=time.perf_counter() - t0,
                           converged=True, stop_reason="residual",
                           sup_norm_max=sup_max)

    fidx = np.flatnonzero(free.ravel())
    nf = fidx.size
    K = (eps / h2) * _edge_L0(dom)
    K_f = K[fidx]
    K_ff = K_f[:, fidx].tocsc()
    pin = np.setdiff1d(np.arange(nn), fidx)
    Uflat = U.reshape(nn, m)
    b_pin = K_f[:, pin] @ Uflat[pin]          # boundary coupling, constant

    ncn = dom.ncells.reshape(nn)[fidx].astype(float) / (4.0 * eps)

    def reaction_grad(uf):
        return ncn[:, None] * p.grad(uf)

    def reaction_val(uf):
        return float(np.sum(ncn * p.eval(uf)))

    def full_field(uf):
        V = Uflat.copy()
        V[fidx] = uf
        return V.reshape(U.shape)

    ident = sparse.identity(nf, format="csc")
    lam = p.well_hessian_max_eig()
    s0 = eps / lam
    s = s0
    m_hat = None
    if mass_target is not None:
        m_hat = np.asarray(mass_target, dtype=float) / h2

    lu = None
    ones_sol = None

    def factor(step):
        nonlocal lu, ones_sol
        lu = splu((ident + step * K_ff).tocsc())
        if m_hat is not None:
            ones_sol = lu.solve(np.ones(nf))

    def prox(v):
        x = lu.solve(v)
        if m_hat is not None:
            shift = (x.sum(axis=0) - m_hat) / ones_sol.sum()
            x = x - ones_sol[:, None] * shift
        return x

    factor(s)
    uf = Uflat[fidx].copy()
    uf_prev = uf.copy()
    tk = 1.0
    stop = "max_iter"
    converged = False
    it = 0
    grown = 0

    while it < max_iter:
        it += 1
        tk_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
        beta = (tk - 1.0) / tk_next
        for attempt in range(2):
            yf = uf + beta * (uf - uf_prev) if attempt == 0 and beta > 0 \
                else uf
            ry = reaction_grad(yf)
            Ry = reaction_val(yf)
            while True:
                u1 = prox(yf - s * (ry + b_pin))
                d = u1 - yf
                gap = reaction_val(u1) - Ry - float(np.sum(ry * d)) \
                    - float(np.sum(d * d)) / (2.0 * s)
                if gap <= 1e-12 * max(abs(Ry), 1.0):
                    break
                s *= 0.5
                factor(s)
            E1 = energy_of(full_field(u1), dom, eps, p)
            if E1 <= E or attempt == 1:
                break
            tk, tk_next = 1.0, 1.0       # momentum overshot, restart

        if E1 > E + 1e-12 * max(abs(E), 1.0):
            stop = "line_search_stall"   # plain prox step cannot descend
            converged = True
            break
        uf_prev = uf
        uf = u1
        E = min(E, E1)
        tk = tk_next
        trace.append(E)

        sup_max = max(sup_max, float(np.sqrt((uf * uf).sum(axis=1).max())))
        assert sup_max <= bound, \
            f"iterate escaped the well bound: {sup_max} > {p.bound_M}"
        if violation is not None:
            mass = h2 * uf.sum(axis=0)
            violation[0] = max(violation[0], float(
                np.max(np.abs(mass - np.asarray(mass_target)))))

        res = residual_sup(grad_at(full_field(uf)), dom.h)
        if res < tol:
            stop = "residual"
            converged = True
            break
        if len(trace) > plateau_win:
            drop = trace[-plateau_win - 1] - trace[-1]
            if drop <= plateau_rel * max(abs(trace[-1]), 1e-30):
                stop = "energy_plateau"
                converged = True
                break
        grown += 1
        if grown >= 50 and s < 4.0 * s0:
            grown = 0
            s = min(s * 1.5, 4.0 * s0)
            factor(s)

    f.u = full_field(uf)
    f.impose()
    res = residual_sup(grad_at(f.u), dom.h)
    return SolveReport(energy_trace=trace, final_residual=res,
                       iterations=it, wall_time=time.perf_counter() - t0,
                       converged=converged, stop_reason=stop,
                       sup_norm_max=sup_max)


def minimize(f0: Field, p: Potential, tol: float = None,
             max_iter: int = 200000, accelerate: bool = False):
    """Descend the energy from f0 at fixed Dirichlet boundary values.

    Plain Armijo gradient descent by default.  With accelerate, FISTA on
    the forward-backward splitting whose proximal map (the implicit
    diffusion step) is solved exactly through a sparse factorization; this
    removes the h^2/eps step-size ceiling and is the practical choice on
    fine grids.  Stops on the Euler-Lagrange residual sup-norm (default
    tol 1e-6 / eps) or on an energy plateau (relative change < 1e-10 over
    100 accepted iterations).  The energy trace is non-increasing by
    construction; hitting max_iter returns the field anyway with
    converged = False.
    """
    f = f0.copy()
    f.impose()
    free = f.domain.mask == 2
    if accelerate:
        rep = _descend_implicit(f, p, tol, max_iter, free)
    else:
        rep = _descend(f, p, tol, max_iter, free)
    return f, rep


def _hull_coords(wells: Array, target: Array):
    """Barycentric coordinates of target in the wells (N <= m+1 only)."""
    N, m = wells.shape
    A = np.vstack([wells.T, np.ones(N)])
    b = np.concatenate([target, [1.0]])
    coef, res_, rank, _ = np.linalg.lstsq(A, b, rcond=None)
    if np.linalg.norm(A @ coef - b) > 1e-9:
        return None
    return coef


def minimize_mass_constrained(f0: Field, p: Potential, m_target: Array,
                              tol: float = None, max_iter: int = 200000,
                              accelerate: bool = False):
    """Minimize at natural boundary subject to the node-sum mass constraint
    h^2 sum u = m_target (per component).

    The gradient is projected onto the zero-mean subspace and iterates are
    re-projected onto the affine constraint, so the violation stays at
    rounding level; the largest violation seen is reported and must stay
    below 1e-10.  Raises for targets outside the convex hull of the wells.
    """
    dom = f0.domain
    m_target = np.asarray(m_target, dtype=float).reshape(p.m)
    inside = dom.mask > 0
    n_in = int(np.count_nonzero(inside))
    h2 = dom.h * dom.h
    area_nodes = h2 * n_in

    lam = _hull_coords(p.wells, m_target / area_nodes)
    if lam is None or np.any(lam < -1e-9):
        raise ValueError(
            f"mass target {m_target} is not attainable: mean value "
            f"{m_target / area_nodes} lies outside the hull of the wells")

    f = f0.copy()
    f.dirichlet = None
    f.u[~inside] = 0.0
    insidem = inside[..., None]

    violation = [0.0]

    def project_grad(g):
        mean = g[inside].sum(axis=0) / n_in
        return np.where(insidem, g - mean, 0.0)

    def reproject(U):
        mass = h2 * U[inside].sum(axis=0)
        U = np.where(insidem, U - (mass - m_target) / area_nodes, U)
        mass = h2 * U[inside].sum(axis=0)
        violation[0] = max(violation[0],
                           float(np.max(np.abs(mass - m_target))))
        return U

    f.u = reproject(f.u)
    if accelerate:
        rep = _descend_implicit(f, p, tol, max_iter, inside,
                                mass_target=m_target, violation=violation)
    else:
        rep = _descend(f, p, tol, max_iter, inside,
                       project=project_grad, reproject=reproject)
    rep.mass_violation_max = violation[0]
    return f, rep


# ---------------------------------------------------------------------------
# Initialization and sweeps

def init_radial(dom: Domain2D, arcs, p: Potential, eps: float,
                dd: DirichletData = None) -> Field:
    """Each in-domain node takes the well of its boundary sector.

    For disks this is the radial extension of the sharp data (label by
    angle); for rectangles the label of the nearest boundary side point.
    """
    X, Y = dom.node_xy()
    if dom.shape == "disk":
        t = np.mod(np.arctan2(Y, X), 2.0 * np.pi)
    else:
        W = dom.params["width"]
        H = dom.params["height"]
        d = np.stack([Y, W - X, H - Y, X], axis=0)   # bottom right top left
        side = np.argmin(d, axis=0)
        t = np.where(side == 0, X,
            np.where(side == 1, W + Y,
            np.where(side == 2, W + H + (W - X), 2 * W + H + (H - Y))))
        t = np.mod(t, dom.param_total)
    labels = sharp_phase(arcs, t.ravel()).reshape(t.shape)
    u = p.wells[labels].astype(float)
    u[dom.mask == 0] = 0.0
    f = Field(u=u, eps=eps, domain=dom, dirichlet=dd)
    f.impose()
    return f


def init_random(dom: Domain2D, p: Potential, eps: float, rng,
                dd: DirichletData = None) -> Field:
    """Uniform noise over the (slightly padded) bounding box of the wells."""
    lo = p.wells.min(axis=0) - 0.2
    hi = p.wells.max(axis=0) + 0.2
    u = rng.uniform(lo, hi, size=(dom.ny, dom.nx, p.m))
    u[dom.mask == 0] = 0.0
    f = Field(u=u, eps=eps, domain=dom, dirichlet=dd)
    f.impose()
    return f


def init_constant(dom: Domain2D, p: Potential, k: int, eps: float,
                  dd: DirichletData = None) -> Field:
    u = np.tile(p.wells[k].astype(float), (dom.ny, dom.nx, 1))
    u[dom.mask == 0] = 0.0
    f = Field(u=u, eps=eps, domain=dom, dirichlet=dd)
    f.impose()
    return f


def l1_distance(f1: Field, f2: Field) -> float:
    """L1 distance between two fields on the same domain."""
    inside = f1.domain.mask > 0
    diff = np.linalg.norm(f1.u - f2.u, axis=-1)
    return float(diff[inside].sum()) * f1.domain.h ** 2


@dataclass(eq=False)
class SweepSetup:
    domain: Domain2D
    arcs: Optional[list] = None
    conn_table: Optional[dict] = None
    width_c: float = 1.0
    init: str = "radial"
    seed: int = 0
    tol: Optional[float] = None
    max_iter: int = 200000
    accelerate: bool = True
    mass_target: Optional[Array] = None


@dataclass(eq=False)
class SweepStage:
    eps: float
    field: Field
    report: SolveReport
    l1_prev: Optional[float]


def epsilon_sweep(setup: SweepSetup, eps_list, p: Potential) -> list:
    """Solve for each eps in decreasing order, warm-starting from the last.

    Rebuilds the Dirichlet data per eps (the transition width scales with
    eps), records the L1 distance between successive minimizers, and
    enforces the resolvability floor eps >= 4h.
    """
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list[:-1], eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    dom = setup.domain
    floor = 4.0 * dom.h
    for e in eps_list:
        if e < floor:
            raise ValueError(
                f"eps = {e} under-resolves the grid (floor 4h = {floor:.4g})")

    rng = np.random.default_rng(setup.seed)
    stages = []
    prev_field = None
    for e in eps_list:
        dd = None
        if setup.arcs is not None:
            dd = make_dirichlet(dom, setup.arcs, e, setup.conn_table,
                                width_c=setup.width_c, wells=p.wells)
        if prev_field is None:
            if setup.init == "radial":
                if setup.arcs is not None:
                    f0 = init_radial(dom, setup.arcs, p, e, dd)
                else:
                    # natural-boundary runs: symmetric sector start
                    T = dom.param_total
                    N = p.n_wells
                    virt = [((k * T / N, (k + 1) * T / N), k)
                            for k in range(N)]
                    f0 = init_radial(dom, virt, p, e, dd)
            elif setup.init == "random":
                f0 = init_random(dom, p, e, rng, dd)
            elif setup.init.startswith("constant:"):
                f0 = init_constant(dom, p, int(setup.init.split(":")[1]),
                                   e, dd)
            else:
                raise ValueError(f"unknown init scheme {setup.init!r}")
        else:
            f0 = Field(u=prev_field.u.copy(), eps=e, domain=dom,
                       dirichlet=dd)
            f0.impose()

        if setup.mass_target is not None:
            f, rep = minimize_mass_constrained(
                f0, p, setup.mass_target, tol=setup.tol,
                max_iter=setup.max_iter, accelerate=setup.accelerate)
        else:
            f, rep = minimize(f0, p, tol=setup.tol,
                              max_iter=setup.max_iter,
                              accelerate=setup.accelerate)
        l1 = l1_distance(f, prev_field) if prev_field is not None else None
        stages.append(SweepStage(eps=e, field=f, report=rep, l1_prev=l1))
        prev_field = f
    return stages
