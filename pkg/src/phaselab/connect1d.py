"""1D heteroclinic connections between wells and the degenerate geodesic metric.

The optimal profile U(t) joining wells a_i, a_j minimizes the action
integral of 0.5 |U'|^2 + W(U); its value sigma_ij is the surface tension of
the (i, j) interface.  The same number is the distance between the wells in
the path metric sqrt(2 W) |dx|, computed here independently by a string
method as a consistency check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import minimize as _scipy_minimize
from scipy.sparse.linalg import spsolve

from . import eikonal
from .eikonal import PhiCache
from .potential import Potential

Array = np.ndarray


class ConvergenceFailure(RuntimeError):
    """Raised when an iterative solver exhausts its budget."""

    def __init__(self, message: str, grad_norm: float | None = None):
        super().__init__(message)
        self.grad_norm = grad_norm


@dataclass(frozen=True, eq=False)
class ConnectionProfile:
    """Discrete connection U(t_k) on a uniform grid over [-L, L].

    endpoints are the (i, j) well indices; action is the trapezoid value of
    the discrete functional, recomputable from the samples.
    """

    samples: Array           # (n, m)
    step: float
    endpoints: tuple
    action: float

    @property
    def times(self) -> Array:
        n = self.samples.shape[0]
        L = 0.5 * self.step * (n - 1)
        return np.linspace(-L, L, n)


def discrete_action(samples: Array, step: float, p: Potential) -> float:
    """Trapezoid-rule action: sum 0.5 |dU|^2 / dt + dt * trapz W(U)."""
    dU = np.diff(samples, axis=0)
    kin = 0.5 * float(np.sum(dU * dU)) / step
    pot = float(np.trapezoid(p.eval(samples), dx=step))
    return kin + pot


def solve_connection(p: Potential, i: int, j: int, L: float = 10.0,
                     n: int = 2000, gtol: float = 1e-9,
                     max_iter: int = 60000) -> ConnectionProfile:
    """Minimize the discrete action over profiles clamped at wells i, j.

    Initialization is linear interpolation plus a small transverse bump
    (breaks symmetry when the straight segment passes near a third well).
    The per-iteration action trace is asserted non-increasing.  Raises
    ConvergenceFailure carrying the last gradient norm if the optimizer
    returns with sup |grad| >= 1e-8.
    """
    if i == j:
        raise ValueError("endpoints must be distinct wells")
    if L < 5.0:
        raise ValueError(f"truncation L must be >= 5, got {L}")
    if n < 200:
        raise ValueError(f"need at least 200 nodes, got {n}")
    a = p.wells[i].astype(float)
    b = p.wells[j].astype(float)
    m = p.m
    step = 2.0 * L / (n - 1)

    s01 = np.linspace(0.0, 1.0, n)[:, None]
    U0 = a + s01 * (b - a)
    if m >= 2:
        t = (b - a) / np.linalg.norm(b - a)
        perp = np.array([-t[1], t[0]])
        U0 = U0 + 0.1 * np.linalg.norm(b - a) * np.sin(np.pi * s01) * perp

    def fun(x):
        U = np.empty((n, m))
        U[0] = a
        U[-1] = b
        U[1:-1] = x.reshape(n - 2, m)
        dU = np.diff(U, axis=0)
        S = 0.5 * float(np.sum(dU * dU)) / step \
            + float(np.trapezoid(p.eval(U), dx=step))
        g = (2.0 * U[1:-1] - U[:-2] - U[2:]) / step + step * p.grad(U[1:-1])
        return S, g.ravel()

    trace = []

    def record(xk):
        S = fun(xk)[0]
        if trace:
            assert S <= trace[-1] + 1e-9 * max(1.0, abs(trace[-1])), \
                "action increased during connection solve"
        trace.append(S)

    res = _scipy_minimize(fun, U0[1:-1].ravel(), jac=True, method="L-BFGS-B",
                          callback=record,
                          options=dict(maxiter=max_iter, maxfun=4 * max_iter,
                                       ftol=1e-20, gtol=gtol))
    U = np.empty((n, m))
    U[0] = a
    U[-1] = b
    U[1:-1] = res.x.reshape(n - 2, m)
    # the f-based line search floors out near machine precision of the
    # action while stiff gradient modes are still ~1e-8; Newton on the
    # discrete Euler-Lagrange residual finishes the job
    gnorm = _newton_polish(U, step, p, gtol)
    if gnorm >= 1e-8:
        raise ConvergenceFailure(
            f"connection solve for pair ({i},{j}) stopped with "
            f"sup|grad| = {gnorm:.3e}", grad_norm=gnorm)
    return ConnectionProfile(samples=U, step=step, endpoints=(i, j),
                             action=discrete_action(U, step, p))


def _newton_polish(U: Array, step: float, p: Potential, gtol: float,
                   rounds: int = 12) -> float:
    """Damped Newton on the clamped discrete action gradient, in place.

    The Jacobian is block tridiagonal: (1/step) tridiag(-1,2,-1) kron I_m
    plus step * blockdiag(W_hess).  Returns the final sup |gradient|.
    """
    n, m = U.shape
    k = n - 2
    lap = sparse.diags([-1.0, 2.0, -1.0], [-1, 0, 1],
                       shape=(k, k)) / step
    J_lin = sparse.kron(lap, np.eye(m), format="csc")
    idx = np.arange(k)

    def grad_of(V):
        return (2.0 * V[1:-1] - V[:-2] - V[2:]) / step \
            + step * p.grad(V[1:-1])

    g = grad_of(U)
    gnorm = float(np.max(np.abs(g)))
    for _ in range(rounds):
        if gnorm < gtol:
            break
        H = np.stack([p.hess(v) for v in U[1:-1]])     # hess is pointwise
        rows, cols, vals = [], [], []
        for r in range(m):
            for c in range(m):
                rows.append(idx * m + r)
                cols.append(idx * m + c)
                vals.append(step * H[:, r, c])
        J_blk = sparse.csc_matrix(
            (np.concatenate(vals),
             (np.concatenate(rows), np.concatenate(cols))),
            shape=(k * m, k * m))
        dU = spsolve(J_lin + J_blk, g.ravel()).reshape(k, m)
        t = 1.0
        while t > 1e-4:
            trial = U.copy()
            trial[1:-1] -= t * dU
            g_t = grad_of(trial)
            gn_t = float(np.max(np.abs(g_t)))
            if gn_t < gnorm:
                U[1:-1] = trial[1:-1]
                g, gnorm = g_t, gn_t
                break
            t *= 0.5
        else:
            break
    return gnorm


def equipartition_defect(c: ConnectionProfile, p: Potential) -> float:
    """sup_k |0.5 |U'|^2 - W(U)| over interior nodes, centered differences."""
    U = c.samples
    if U.shape[0] < 3:
        return 0.0
    dU = (U[2:] - U[:-2]) / (2.0 * c.step)
    kin = 0.5 * np.sum(dU * dU, axis=1)
    pot = p.eval(U[1:-1])
    return float(np.max(np.abs(kin - pot)))


@dataclass(frozen=True, eq=False)
class GeodesicPath:
    """Polyline gamma(s_k) with its weighted length in the sqrt(2W) metric."""

    nodes: Array             # (K+1, m)
    length: float


def path_length(nodes: Array, p: Potential) -> float:
    """Discrete weighted length: sum sqrt(2 W(midpoint)) |segment|."""
    seg = np.diff(nodes, axis=0)
    slen = np.sqrt(np.sum(seg * seg, axis=1))
    mids = 0.5 * (nodes[:-1] + nodes[1:])
    f = np.sqrt(np.maximum(2.0 * p.eval(mids), 0.0))
    return float(np.sum(f * slen))


def resample_path(nodes: Array, K: int) -> Array:
    """Resample a polyline to K+1 nodes at equal Euclidean arclength."""
    seg = np.diff(nodes, axis=0)
    slen = np.sqrt(np.sum(seg * seg, axis=1))
    s = np.concatenate([[0.0], np.cumsum(slen)])
    total = s[-1]
    if total <= 1e-300:
        return np.tile(nodes[0], (K + 1, 1))
    target = np.linspace(0.0, total, K + 1)
    out = np.empty((K + 1, nodes.shape[1]))
    for d in range(nodes.shape[1]):
        out[:, d] = np.interp(target, s, nodes[:, d])
    return out


def _length_gradient(nodes: Array, p: Potential) -> Array:
    seg = np.diff(nodes, axis=0)
    slen = np.maximum(np.sqrt(np.sum(seg * seg, axis=1)), 1e-300)
    tan = seg / slen[:, None]
    mids = 0.5 * (nodes[:-1] + nodes[1:])
    f = np.sqrt(np.maximum(2.0 * p.eval(mids), 0.0))
    # d/du sqrt(2W) = W_u / sqrt(2W); bounded near wells since W is quadratic
    fp = p.grad(mids) / np.maximum(f, 1e-30)[:, None]
    G = np.zeros_like(nodes)
    G[:-1] += 0.5 * fp * slen[:, None] - f[:, None] * tan
    G[1:] += 0.5 * fp * slen[:, None] + f[:, None] * tan
    G[0] = 0.0
    G[-1] = 0.0
    return G


def geodesic_distance(p: Potential, z1: Array, z2: Array, K: int = 100,
                      max_iter: int | None = None) -> GeodesicPath:
    """String method for the geodesic distance d(z1, z2).

    Gradient descent on the discrete weighted length with an Armijo line
    search (adaptive step growth) and equal-arclength reparametrization
    after every accepted step.  Stops when the length is flat to 1e-12
    relative over three consecutive 50-iteration windows, or when the line
    search cannot reduce the length at any step size for a sustained
    stretch (the discrete minimum); raises ConvergenceFailure if the
    budget runs out first.

    The transverse relaxation mode is soft, so fixed-step descent stalls
    well away from the minimum; the line search with step growth is load
    bearing here, not an optimization nicety.
    """
    if K < 100:
        raise ValueError(f"need K >= 100 nodes, got {K}")
    z1 = np.asarray(z1, dtype=float).reshape(p.m)
    z2 = np.asarray(z2, dtype=float).reshape(p.m)
    if np.linalg.norm(z2 - z1) < 1e-14:
        return GeodesicPath(nodes=np.tile(z1, (K + 1, 1)), length=0.0)
    if max_iter is None:
        max_iter = max(20000, 150 * K)

    s01 = np.linspace(0.0, 1.0, K + 1)[:, None]
    nodes = z1 + s01 * (z2 - z1)
    L = path_length(nodes, p)
    dt = 0.1
    window = 50
    flat_windows = 0
    stalled = 0
    L_window = L

    for it in range(1, max_iter + 1):
        G = _length_gradient(nodes, p)
        gsq = float(np.sum(G * G))
        moved = False
        if gsq > 0.0:
            for _ in range(60):
                trial = nodes - dt * G
                Lt = path_length(trial, p)
                if Lt <= L - 1e-4 * dt * gsq:
                    nodes = resample_path(trial, K)
                    L = path_length(nodes, p)
                    dt = min(dt * 1.3, 1.0)
                    moved = True
                    break
                dt *= 0.5
        if moved:
            stalled = 0
        else:
            stalled += 1
            if stalled >= 25:         # no dt <= 1 reduces the length
                return GeodesicPath(nodes=nodes, length=L)
            dt = min(dt * 4.0, 1.0)
        if it % window == 0:
            if abs(L_window - L) <= 1e-12 * max(abs(L), 1e-30):
                flat_windows += 1
                if flat_windows >= 3:
                    return GeodesicPath(nodes=nodes, length=L)
            else:
                flat_windows = 0
            L_window = L
    raise ConvergenceFailure(
        f"string method did not flatten within {max_iter} iterations "
        f"(length {L:.8f})")


def sigma_matrix(p: Potential, L: float = 10.0, n: int = 2000) -> Array:
    """Pairwise connection actions sigma_ij (zero diagonal)."""
    N = p.n_wells
    S = np.zeros((N, N))
    for i in range(N):
        for j in range(i + 1, N):
            c = solve_connection(p, i, j, L=L, n=n)
            S[i, j] = S[j, i] = c.action
    return S


def connection_table(p: Potential, L: float = 10.0, n: int = 2000) -> dict:
    """ConnectionProfile for every unordered well pair, keyed (i, j), i<j."""
    table = {}
    for i in range(p.n_wells):
        for j in range(i + 1, p.n_wells):
            table[(i, j)] = solve_connection(p, i, j, L=L, n=n)
    return table


def build_phi_cache(p: Potential, sigma: Array | None = None,
                    grid_n: int = 481) -> PhiCache:
    """Distance tables phi_k = d(., a_k) for coarea estimates.

    Well-to-well entries come from the connection actions (the two agree;
    the table is only used for interpolated interior queries).
    """
    if sigma is None:
        sigma = sigma_matrix(p)
    return eikonal.build_tables(p, sigma, grid_n=grid_n)


def phi_k(p: Potential, u: Array, k: int, cache: PhiCache) -> float:
    """d(u, a_k) via the cache; exact well queries snap to the sigma table."""
    return cache.phi(k, u)
