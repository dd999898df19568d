"""Multi-well potentials with validated well structure.

A Potential bundles the wells a_1..a_N with callables for W, W_u and W_uu.
The value and gradient callables vectorize over leading axes because the
2D solver evaluates them on ~1e5 grid nodes per iteration; the Hessian is
pointwise (only ever needed at isolated points).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

Array = np.ndarray

TWO_THIRDS_PI = 2.0 * np.pi / 3.0


@dataclass(frozen=True, eq=False)
class Potential:
    """Smooth nonnegative potential on R^m vanishing exactly at its wells.

    wells: (N, m) array of global minima.
    eval:  (..., m) -> (...), W(u) >= 0.
    grad:  (..., m) -> (..., m), W_u(u).
    hess:  (m,) -> (m, m), W_uu(u) at a single point.
    bound_M: radius beyond which W_u(u).u > 0 (checked by sampling).
    conv_c: c such that the smallest Hessian eigenvalue at every well
            is >= 2 c^2.
    """

    wells: Array
    eval: Callable[[Array], Array]
    grad: Callable[[Array], Array]
    hess: Callable[[Array], Array]
    bound_M: float
    conv_c: float
    kind: str = "custom"

    @property
    def m(self) -> int:
        return self.wells.shape[1]

    @property
    def n_wells(self) -> int:
        return self.wells.shape[0]

    def well_hessian_max_eig(self) -> float:
        return max(
            float(np.linalg.eigvalsh(self.hess(a)).max()) for a in self.wells
        )


def build_double_well() -> Potential:
    """Scalar two-well potential W(u) = (1 - u^2)^2 / 2, wells -1 and +1.

    The 1D connection is tanh(t) and its action is 4/3; the well Hessian
    W''(+-1) = 4 gives conv_c = sqrt(2).
    """
    wells = np.array([[-1.0], [1.0]])

    def w(u: Array) -> Array:
        s = np.asarray(u)[..., 0]
        q = 1.0 - s * s
        return 0.5 * q * q

    def wu(u: Array) -> Array:
        s = np.asarray(u)[..., 0]
        return (2.0 * s * (s * s - 1.0))[..., None]

    def wuu(u: Array) -> Array:
        s = float(np.asarray(u).reshape(-1)[0])
        return np.array([[6.0 * s * s - 2.0]])

    return Potential(wells=wells, eval=w, grad=wu, hess=wuu,
                     bound_M=2.0, conv_c=float(np.sqrt(2.0)),
                     kind="double-well")


def build_triple_well(radius: float = 1.0) -> Potential:
    """Planar three-well potential with wells on a circle.

    Wells sit at angles 90, 210, 330 degrees on a circle of the given
    radius and W(u) = prod_i |u - a_i|^2 / (2 radius^4).  The normalization
    makes the Hessian at each well equal to 9 I regardless of radius, so
    conv_c = sqrt(9/2).  W is invariant under rotation by 120 degrees, so
    the three pair actions coincide.
    """
    if not radius > 0.0:
        raise ValueError(f"radius must be positive, got {radius}")
    angles = np.deg2rad([90.0, 210.0, 330.0])
    wells = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    r4 = float(radius) ** 4

    def w(u: Array) -> Array:
        d = np.asarray(u, dtype=float)[..., None, :] - wells   # (..., 3, 2)
        s = np.sum(d * d, axis=-1)                             # (..., 3)
        return s[..., 0] * s[..., 1] * s[..., 2] / (2.0 * r4)

    def wu(u: Array) -> Array:
        uu = np.asarray(u, dtype=float)
        d = uu[..., None, :] - wells
        s = np.sum(d * d, axis=-1)
        out = np.zeros_like(uu)
        for i in range(3):
            j, k = [a for a in range(3) if a != i]
            out = out + 2.0 * d[..., i, :] * (s[..., j] * s[..., k])[..., None]
        return out / (2.0 * r4)

    def wuu(u: Array) -> Array:
        uu = np.asarray(u, dtype=float).reshape(2)
        d = uu[None, :] - wells        # (3, 2)
        s = np.sum(d * d, axis=1)      # (3,)
        H = np.zeros((2, 2))
        for i in range(3):
            j, k = [a for a in range(3) if a != i]
            H += 2.0 * np.eye(2) * s[j] * s[k]
            H += 4.0 * np.outer(d[i], d[j]) * s[k]
            H += 4.0 * np.outer(d[i], d[k]) * s[j]
        return H / (2.0 * r4)

    return Potential(wells=wells, eval=w, grad=wu, hess=wuu,
                     bound_M=2.0 * radius, conv_c=float(np.sqrt(4.5)),
                     kind="triple-well")


def eval_all(p: Potential, u: Array):
    """Return (W, W_u, W_uu) at a single point u."""
    u = np.asarray(u, dtype=float).reshape(p.m)
    return float(p.eval(u)), np.asarray(p.grad(u)), np.asarray(p.hess(u))


def validate_potential(p: Potential, rng=None, n_samples: int = 200) -> dict:
    """Measure the well-structure residuals of a Potential by sampling.

    Returns a dict of measured quantities; callers assert against it.
      well_value_max   max_i W(a_i)                     (want 0)
      well_grad_max    max_i |W_u(a_i)|_inf             (want < 1e-12)
      min_eig          min_i lambda_min(W_uu(a_i))      (want >= 2 conv_c^2)
      positivity_min   min W over off-well samples      (want > 0)
      growth_min       min W_u(u).u on |u| = 1.1 M      (want > 0)
      grad_fd_rel_max  gradient vs central differences  (want < 1e-6)
      hess_fd_rel_max  Hessian vs differenced gradient  (want < 1e-6)
    """
    if rng is None:
        rng = np.random.default_rng(0)
    out = {}
    out["well_value_max"] = float(np.max(np.abs(p.eval(p.wells))))
    out["well_grad_max"] = float(np.max(np.abs(p.grad(p.wells))))
    out["min_eig"] = min(
        float(np.linalg.eigvalsh(p.hess(a)).min()) for a in p.wells
    )

    # positivity away from the wells
    box = 1.5 * p.bound_M
    samples = rng.uniform(-box, box, size=(n_samples, p.m))
    dist = np.min(np.linalg.norm(samples[:, None, :] - p.wells, axis=-1), axis=1)
    off = samples[dist > 0.1]
    out["positivity_min"] = float(np.min(p.eval(off))) if len(off) else np.inf

    # coercivity on a sphere of radius 1.1 bound_M
    if p.m == 1:
        sphere = np.array([[-1.0], [1.0]])
    else:
        th = rng.uniform(0.0, 2.0 * np.pi, size=64)
        sphere = np.stack([np.cos(th), np.sin(th)], axis=1)
    sphere = 1.1 * p.bound_M * sphere
    out["growth_min"] = float(np.min(np.sum(p.grad(sphere) * sphere, axis=-1)))

    # finite-difference consistency of grad and hess
    pts = rng.uniform(-0.9 * p.bound_M, 0.9 * p.bound_M, size=(24, p.m))
    h = 1e-6
    gmax = 0.0
    hmax = 0.0
    eye = np.eye(p.m)
    for u in pts:
        g = p.grad(u)
        H = p.hess(u)
        for d in range(p.m):
            fd = (p.eval(u + h * eye[d]) - p.eval(u - h * eye[d])) / (2 * h)
            gmax = max(gmax, abs(fd - g[d]) / max(1.0, abs(g[d])))
            fdg = (p.grad(u + h * eye[d]) - p.grad(u - h * eye[d])) / (2 * h)
            hmax = max(hmax, np.max(np.abs(fdg - H[:, d])) / max(1.0, np.max(np.abs(H))))
    out["grad_fd_rel_max"] = float(gmax)
    out["hess_fd_rel_max"] = float(hmax)
    return out
