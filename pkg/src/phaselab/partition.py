"""Limiting-partition extraction and interface measurement.

Cell labels come from the nearest well at the cell center.  Interfaces are
measured two independent ways: marching-squares contours of the signed
indicator |u - a_i| - |u - a_j| (geometric), and the coarea estimate built
from the well distance functions phi_k (variational).  Agreement of the two
on a converged minimizer is one of the headline checks.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .eikonal import PhiCache
from .field2d import Domain2D, Field, sharp_phase
from .potential import Potential

Array = np.ndarray

TWO_THIRDS_PI = 2.0 * np.pi / 3.0


@dataclass(eq=False)
class PartitionMap:
    """Per-cell phase labels with measured areas and interface polylines.

    labels is (ny-1, nx-1) with -1 outside the resolved cell set.
    interface_segments maps each unordered pair (i, j), i < j, to an
    (nseg, 2, 2) array of little segments [start, end].
    """

    labels: Array
    areas: Array
    interface_segments: dict
    domain: Domain2D
    n_wells: int

    @property
    def pairs(self):
        return sorted(self.interface_segments.keys())


@dataclass(frozen=True)
class JunctionReport:
    """A triple point: location, the three sector angles (radians, summing
    to 2 pi) and the interface pairs of the bounding rays.

    opposite_pairs[k] is the pair whose interface does NOT bound sector k;
    that is the pair entering the sine rule against angle k.
    """

    location: tuple
    angles: tuple
    incident_pairs: tuple
    opposite_pairs: tuple


@dataclass(frozen=True)
class LimitEnergy:
    interior: float
    boundary: float

    @property
    def total(self) -> float:
        return self.interior + self.boundary


def _cell_centers(dom: Domain2D):
    cx = 0.5 * (dom.xs[:-1] + dom.xs[1:])
    cy = 0.5 * (dom.ys[:-1] + dom.ys[1:])
    return np.meshgrid(cx, cy)


def extract(f: Field, p: Potential) -> PartitionMap:
    """Label every complete cell by the nearest well to its average value.

    Ties break to the lowest well index (argmin).  Marching squares runs
    per pair on cells whose corner labels are contained in that pair, so
    every emitted segment borders exactly its two phases.
    """
    dom = f.domain
    U = f.u
    cavg = 0.25 * (U[:-1, :-1] + U[:-1, 1:] + U[1:, :-1] + U[1:, 1:])
    d2 = np.sum((cavg[..., None, :] - p.wells) ** 2, axis=-1)
    labels = np.argmin(d2, axis=-1).astype(np.int16)
    labels[~dom.cellmask] = -1

    h2 = dom.h * dom.h
    areas = np.array([
        float(np.count_nonzero(labels == k)) * h2 for k in range(p.n_wells)
    ])

    nd2 = np.sum((U[..., None, :] - p.wells) ** 2, axis=-1)
    node_labels = np.argmin(nd2, axis=-1)
    ndist = np.sqrt(nd2)

    segments = {}
    for i, j in combinations(range(p.n_wells), 2):
        li = node_labels == i
        lj = node_labels == j
        in_pair = li | lj
        cells_ok = (dom.cellmask
                    & in_pair[:-1, :-1] & in_pair[:-1, 1:]
                    & in_pair[1:, :-1] & in_pair[1:, 1:])
        has_i = li[:-1, :-1] | li[:-1, 1:] | li[1:, :-1] | li[1:, 1:]
        has_j = lj[:-1, :-1] | lj[:-1, 1:] | lj[1:, :-1] | lj[1:, 1:]
        cells_ok &= has_i & has_j
        if not np.any(cells_ok):
            continue
        psi = ndist[..., i] - ndist[..., j]
        segs = _marching_squares(psi, cells_ok, dom.xs, dom.ys)
        if len(segs):
            segments[(i, j)] = np.asarray(segs)
    return PartitionMap(labels=labels, areas=areas,
                        interface_segments=segments, domain=dom,
                        n_wells=p.n_wells)


def _marching_squares(psi: Array, cells: Array, xs: Array, ys: Array):
    """Zero contour of nodal psi over the flagged cells, one cell at a time.

    Nodes with psi <= 0 count as the negative phase (matches the argmin
    tie-break).  The saddle configuration is split by the cell-center
    average.
    """
    segs = []
    cys, cxs = np.nonzero(cells)
    for cy, cx in zip(cys, cxs):
        # counterclockwise corners: BL BR TR TL
        vals = (psi[cy, cx], psi[cy, cx + 1],
                psi[cy + 1, cx + 1], psi[cy + 1, cx])
        pos = ((xs[cx], ys[cy]), (xs[cx + 1], ys[cy]),
               (xs[cx + 1], ys[cy + 1]), (xs[cx], ys[cy + 1]))
        sgn = [v > 0.0 for v in vals]
        crossings = []
        for e in range(4):
            a, b = e, (e + 1) % 4
            if sgn[a] != sgn[b]:
                va, vb = vals[a], vals[b]
                t = va / (va - vb)
                pa, pb = pos[a], pos[b]
                crossings.append((e, (pa[0] + t * (pb[0] - pa[0]),
                                      pa[1] + t * (pb[1] - pa[1]))))
        if len(crossings) == 2:
            segs.append((crossings[0][1], crossings[1][1]))
        elif len(crossings) == 4:
            center_val = sum(vals) / 4.0
            pts = {e: q for e, q in crossings}
            if (center_val > 0.0) == sgn[0]:
                segs.append((pts[0], pts[1]))
                segs.append((pts[2], pts[3]))
            else:
                segs.append((pts[1], pts[2]))
                segs.append((pts[3], pts[0]))
    return segs


def interface_length_contour(pm: PartitionMap, pair) -> float:
    """Summed marching-squares polyline length for one unordered pair."""
    key = tuple(sorted(pair))
    segs = pm.interface_segments.get(key)
    if segs is None or len(segs) == 0:
        return 0.0
    d = segs[:, 1, :] - segs[:, 0, :]
    return float(np.sum(np.sqrt(np.sum(d * d, axis=1))))


def total_interface_length(pm: PartitionMap) -> float:
    return sum(interface_length_contour(pm, k) for k in pm.pairs)


def _cell_grad_norm(psi: Array, dom: Domain2D) -> Array:
    """Isotropic per-cell |grad psi| from edge-averaged differences."""
    h = dom.h
    gx = 0.5 * ((psi[:-1, 1:] - psi[:-1, :-1])
                + (psi[1:, 1:] - psi[1:, :-1])) / h
    gy = 0.5 * ((psi[1:, :-1] - psi[:-1, :-1])
                + (psi[1:, 1:] - psi[:-1, 1:])) / h
    return np.sqrt(gx * gx + gy * gy) * dom.cellmask


def coarea_energy(f: Field, p: Potential, cache: PhiCache) -> float:
    """Interface energy from the well distance functions.

    Integrates the pointwise largest |grad phi_k(u)| over the domain.  Each
    phi_k is 1-Lipschitz in the path metric, so along an (i, j) interface
    the largest slope is attained by the two phi's that actually separate
    the phases and the density integrates to sigma per unit length; taking
    the max rather than the half-sum avoids double charging pairs whose
    phi_k dips below sigma mid-connection (a real effect for three wells,
    about +10 percent if summed; see coarea_energy_halfsum).
    """
    dens = None
    for k in range(p.n_wells):
        psi = cache.eval(k, f.u)
        g = _cell_grad_norm(psi, f.domain)
        dens = g if dens is None else np.maximum(dens, g)
    return float(np.sum(dens)) * f.domain.h ** 2


def coarea_energy_halfsum(f: Field, p: Potential, cache: PhiCache) -> float:
    """Half-sum variant 0.5 sum_k TV(phi_k(u)): kept as a diagnostic.

    For two wells it agrees with coarea_energy; for three it systematically
    overcounts interfaces (the third phi is not constant across a
    connection), so it is reported but never used in acceptance checks.
    """
    tot = 0.0
    for k in range(p.n_wells):
        psi = cache.eval(k, f.u)
        tot += float(np.sum(_cell_grad_norm(psi, f.domain)))
    return 0.5 * tot * f.domain.h ** 2


def limiting_energy(pm: PartitionMap, g0_arcs, sigma: float) -> LimitEnergy:
    """Sharp-interface energy of the extracted partition.

    interior: sigma times the total contour length inside the domain.
    boundary: sigma times the arclength of the boundary where the adjacent
    cell label disagrees with the sharp data g0 (a mismatch costs one full
    transition, i.e. sigma per unit length, since limiting states are pure
    phases).
    """
    dom = pm.domain
    interior = sigma * total_interface_length(pm)

    bx = dom.xs[dom.boundary_ix]
    by = dom.ys[dom.boundary_iy]
    t = dom.boundary_param
    T = dom.param_total
    nb = t.size
    ny_c, nx_c = pm.labels.shape
    boundary = 0.0
    for a in range(nb):
        b = (a + 1) % nb
        dtp = t[b] - t[a]
        if b == 0:
            dtp += T
        tm = np.mod(t[a] + 0.5 * dtp, T)
        chord = float(np.hypot(bx[b] - bx[a], by[b] - by[a]))
        if chord == 0.0:
            continue
        label = _nearest_cell_label(pm, dom.boundary_iy[a],
                                    dom.boundary_ix[a],
                                    dom.boundary_iy[b], dom.boundary_ix[b])
        if label is None:
            continue
        if label != sharp_phase(g0_arcs, float(tm)):
            boundary += sigma * chord
    return LimitEnergy(interior=interior, boundary=boundary)


def _nearest_cell_label(pm: PartitionMap, iy_a, ix_a, iy_b, ix_b):
    """Label of a valid cell adjacent to a boundary edge (a, b)."""
    ny_c, nx_c = pm.labels.shape
    best = None
    cy0 = min(iy_a, iy_b) - 1
    cx0 = min(ix_a, ix_b) - 1
    for cy in range(cy0, cy0 + 3):
        if cy < 0 or cy >= ny_c:
            continue
        for cx in range(cx0, cx0 + 3):
            if cx < 0 or cx >= nx_c:
                continue
            lab = pm.labels[cy, cx]
            if lab < 0:
                continue
            # prefer the cell whose corner set contains both edge nodes
            touches = (abs(cy - iy_a) <= 1 and abs(cx - ix_a) <= 1)
            if best is None or (touches and not best[0]):
                best = (touches, int(lab))
    return None if best is None else best[1]


def find_junctions(pm: PartitionMap, fit_inner: float = 3.0,
                   fit_outer: float = 10.0) -> list:
    """Locate triple points and measure their sector angles.

    Candidates are 2x2 cell blocks holding at least three labels;
    candidate blocks are clustered, then each incident interface is fit by
    a total-least-squares line through its contour points in the annulus
    [fit_inner*h, fit_outer*h] around the cluster, the junction is the
    least-squares intersection of the three lines, and sector angles are
    measured between the fitted rays.
    """
    dom = pm.domain
    h = dom.h
    cl = pm.labels
    ny_c, nx_c = cl.shape
    b00 = cl[:-1, :-1]
    b01 = cl[:-1, 1:]
    b10 = cl[1:, :-1]
    b11 = cl[1:, 1:]
    valid = (b00 >= 0) & (b01 >= 0) & (b10 >= 0) & (b11 >= 0)
    stack = np.stack([b00, b01, b10, b11], axis=0)
    srt = np.sort(stack, axis=0)
    distinct = 1 + np.sum(np.diff(srt, axis=0) > 0, axis=0)
    cand_cy, cand_cx = np.nonzero(valid & (distinct >= 3))
    if cand_cy.size == 0:
        return []

    # cluster candidates within a couple of cells of each other
    cand = list(zip(cand_cy.tolist(), cand_cx.tolist()))
    clusters = []
    used = [False] * len(cand)
    for s in range(len(cand)):
        if used[s]:
            continue
        queue = [s]
        used[s] = True
        members = []
        while queue:
            a = queue.pop()
            members.append(cand[a])
            for bidx in range(len(cand)):
                if not used[bidx] \
                        and abs(cand[bidx][0] - cand[a][0]) <= 2 \
                        and abs(cand[bidx][1] - cand[a][1]) <= 2:
                    used[bidx] = True
                    queue.append(bidx)
        clusters.append(members)

    reports = []
    for members in clusters:
        pts_blocks = np.array([
            (dom.xs[cx + 1], dom.ys[cy + 1]) for cy, cx in members
        ])
        center0 = pts_blocks.mean(axis=0)
        labset = set()
        for cy, cx in members:
            labset.update(int(v) for v in
                          (cl[cy, cx], cl[cy, cx + 1],
                           cl[cy + 1, cx], cl[cy + 1, cx + 1]))
        labset.discard(-1)
        pairs = [pr for pr in combinations(sorted(labset), 2)
                 if pr in pm.interface_segments]

        lines = []
        for pr in pairs:
            segs = pm.interface_segments[pr]
            mids = 0.5 * (segs[:, 0, :] + segs[:, 1, :])
            r = np.linalg.norm(mids - center0, axis=1)
            outer = fit_outer
            sel = (r >= fit_inner * h) & (r <= outer * h)
            while np.count_nonzero(sel) < 2 and outer < 8 * fit_outer:
                outer *= 2.0
                sel = (r >= fit_inner * h) & (r <= outer * h)
            if np.count_nonzero(sel) < 2:
                continue
            q = mids[sel]
            qm = q.mean(axis=0)
            _, _, vt = np.linalg.svd(q - qm)
            v = vt[0]
            lines.append((pr, qm, v, q))
        if len(lines) < 3:
            continue

        A = np.zeros((2, 2))
        rhs = np.zeros(2)
        for _, qm, v, _ in lines:
            P = np.eye(2) - np.outer(v, v)
            A += P
            rhs += P @ qm
        if abs(np.linalg.det(A)) > 1e-12:
            loc = np.linalg.solve(A, rhs)
            if np.linalg.norm(loc - center0) > 10.0 * h:
                loc = center0
        else:
            loc = center0

        rays = []
        for pr, qm, v, q in lines:
            orient = np.sign(np.mean((q - loc) @ v))
            w = v * (orient if orient != 0 else 1.0)
            rays.append((float(np.arctan2(w[1], w[0])), pr))
        rays.sort()
        angles = []
        opposite = []
        incident = []
        nrays = len(rays)
        for k in range(nrays):
            a_ang, a_pr = rays[k]
            b_ang, b_pr = rays[(k + 1) % nrays]
            d = b_ang - a_ang
            if d <= 0:
                d += 2.0 * np.pi
            angles.append(d)
            incident.append(a_pr)
            opposite.append(tuple(sorted(set(a_pr) ^ set(b_pr))))
        reports.append(JunctionReport(location=(float(loc[0]),
                                                float(loc[1])),
                                      angles=tuple(angles),
                                      incident_pairs=tuple(incident),
                                      opposite_pairs=tuple(opposite)))
    return reports


def young_law_residual(jr: JunctionReport, sigma: Array) -> float:
    """Max pairwise spread of sin(pi - theta_k) / sigma(opposite pair)."""
    ratios = []
    for theta, pr in zip(jr.angles, jr.opposite_pairs):
        s = sigma[pr[0], pr[1]] if hasattr(sigma, "shape") else sigma[pr]
        ratios.append(np.sin(np.pi - theta) / s)
    return float(max(ratios) - min(ratios))


def steiner_point(p1, p2, p3):
    """Fermat point of a triangle and the minimal total distance.

    Interior case by Weiszfeld iteration (converged to 1e-13 relative
    moves); a vertex with angle >= 120 degrees is returned directly;
    collinear inputs return the middle point.
    """
    pts = np.array([p1, p2, p3], dtype=float)
    scale = max(np.linalg.norm(pts[a] - pts[b])
                for a, b in ((0, 1), (0, 2), (1, 2)))
    if scale <= 0.0:
        return pts[0].copy(), 0.0

    e1 = pts[1] - pts[0]
    e2 = pts[2] - pts[0]
    if abs(e1[0] * e2[1] - e1[1] * e2[0]) <= 1e-12 * scale * scale:
        a, b = max(((0, 1), (0, 2), (1, 2)),
                   key=lambda ab: np.linalg.norm(pts[ab[0]] - pts[ab[1]]))
        mid = 3 - a - b
        return pts[mid].copy(), float(np.linalg.norm(pts[a] - pts[b]))

    for v in range(3):
        o1, o2 = [k for k in range(3) if k != v]
        w1 = pts[o1] - pts[v]
        w2 = pts[o2] - pts[v]
        c = np.dot(w1, w2) / (np.linalg.norm(w1) * np.linalg.norm(w2))
        if np.arccos(np.clip(c, -1.0, 1.0)) >= TWO_THIRDS_PI - 1e-12:
            tot = np.linalg.norm(w1) + np.linalg.norm(w2)
            return pts[v].copy(), float(tot)

    x = pts.mean(axis=0)
    for _ in range(100000):
        d = np.linalg.norm(x - pts, axis=1)
        d = np.maximum(d, 1e-300)
        wsum = np.sum(1.0 / d)
        x_new = np.sum(pts / d[:, None], axis=0) / wsum
        if np.linalg.norm(x_new - x) < 1e-13 * scale:
            x = x_new
            break
        x = x_new
    return x, float(np.sum(np.linalg.norm(x - pts, axis=1)))


def triod_reference(jump_points, sigma: float):
    """Minimal-cone reference: center, spokes and energy for three boundary
    jump points.

    center is the Fermat point of the jump points (a jump point itself when
    its triangle angle reaches 120 degrees); energy is sigma times the
    total spoke length.  Symmetric jumps give the centered triod with
    energy 3 sigma.
    """
    pts = np.asarray(jump_points, dtype=float).reshape(3, 2)
    for a, b in ((0, 1), (0, 2), (1, 2)):
        if np.linalg.norm(pts[a] - pts[b]) < 1e-9:
            raise ValueError("jump points must be distinct")
    center, tot = steiner_point(pts[0], pts[1], pts[2])
    segments = [(center.copy(), q.copy()) for q in pts]
    return center, segments, float(sigma * tot)
