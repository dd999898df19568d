"""Cross-module invariant battery behind the `verify` CLI subcommand.

Each check returns (name, measured, tolerance, passed); the battery prints
a table and the CLI maps any failure to a nonzero exit status.  The
corrupt_gradient switch deliberately breaks the discrete gradient inside
the finite-difference check; it exists so the pipeline's failure path can
be exercised end to end.
"""

from __future__ import annotations

import numpy as np

from . import connect1d, field2d, partition
from .potential import build_double_well, build_triple_well, validate_potential

FOUR_THIRDS = 4.0 / 3.0


def _row(name, measured, tol, passed):
    return {"name": name, "measured": float(measured),
            "tolerance": float(tol), "passed": bool(passed)}


def _potential_checks(rows, seed):
    for p in (build_double_well(), build_triple_well(1.0)):
        v = validate_potential(p, rng=np.random.default_rng(seed))
        pre = f"potential[{p.kind}]"
        rows.append(_row(f"{pre}.well_grad", v["well_grad_max"], 1e-12,
                         v["well_grad_max"] < 1e-12))
        rows.append(_row(f"{pre}.convexity", v["min_eig"],
                         2 * p.conv_c ** 2,
                         v["min_eig"] >= 2 * p.conv_c ** 2 - 1e-9))
        rows.append(_row(f"{pre}.positivity", v["positivity_min"], 0.0,
                         v["positivity_min"] > 0.0))
        rows.append(_row(f"{pre}.growth", v["growth_min"], 0.0,
                         v["growth_min"] > 0.0))
        rows.append(_row(f"{pre}.grad_fd", v["grad_fd_rel_max"], 1e-6,
                         v["grad_fd_rel_max"] < 1e-6))


def _connection_checks(rows):
    dw = build_double_well()
    c12 = connect1d.solve_connection(dw, 0, 1)
    rows.append(_row("connection.action_4_3", abs(c12.action - FOUR_THIRDS),
                     1e-3, abs(c12.action - FOUR_THIRDS) < 1e-3))
    c21 = connect1d.solve_connection(dw, 1, 0)
    rows.append(_row("connection.swap_symmetry",
                     abs(c12.action - c21.action), 1e-10,
                     abs(c12.action - c21.action) < 1e-10))
    defect = connect1d.equipartition_defect(c12, dw)
    rows.append(_row("connection.equipartition", defect, 5e-3,
                     defect < 5e-3))
    tw = build_triple_well(1.0)
    acts = [connect1d.solve_connection(tw, i, j).action
            for i, j in ((0, 1), (0, 2), (1, 2))]
    spread = (max(acts) - min(acts)) / min(acts)
    rows.append(_row("connection.triple_symmetry", spread, 1e-3,
                     spread < 1e-3))
    return acts


def _gradient_checks(rows, seed, corrupt):
    tw = build_triple_well(1.0)
    dom = field2d.build_disk(radius=1.0, n=48)
    rng = np.random.default_rng(seed)
    eps = 0.3
    worst = 0.0
    for trial in range(20):
        u = rng.uniform(-0.9, 0.9, size=(dom.ny, dom.nx, 2))
        u[dom.mask == 0] = 0.0
        f = field2d.Field(u=u, eps=eps, domain=dom)
        g = field2d.energy_gradient(f, tw)
        if corrupt and trial == 0:
            g = g + 1e-5 * (dom.mask == 2)[..., None]
        v = rng.standard_normal(u.shape)
        v[dom.mask != 2] = 0.0
        hstep = 1e-6
        ep = field2d.energy_of(u + hstep * v, dom, eps, tw)
        em = field2d.energy_of(u - hstep * v, dom, eps, tw)
        fd = (ep - em) / (2 * hstep)
        an = float(np.sum(g * v))
        worst = max(worst, abs(fd - an) / max(1.0, abs(an)))
    rows.append(_row("field.gradient_fd", worst, 1e-6, worst < 1e-6))


def _solve_checks(rows, acts):
    tw = build_triple_well(1.0)
    sigma = float(np.mean(acts))
    dom = field2d.build_disk(radius=1.0, n=96)
    table = connect1d.connection_table(tw)
    arcs = [((0.0, 2 * np.pi / 3), 0),
            ((2 * np.pi / 3, 4 * np.pi / 3), 1),
            ((4 * np.pi / 3, 2 * np.pi), 2)]
    setup = field2d.SweepSetup(domain=dom, arcs=arcs, conn_table=table,
                               accelerate=True)
    stages = field2d.epsilon_sweep(setup, [0.12], tw)
    f, rep = stages[-1].field, stages[-1].report
    mono = all(b <= a + 1e-9 * max(1.0, abs(a)) for a, b in
               zip(rep.energy_trace[:-1], rep.energy_trace[1:]))
    rows.append(_row("solve.energy_monotone", 0.0 if mono else 1.0, 0.5,
                     mono))
    rows.append(_row("solve.max_principle", rep.sup_norm_max, tw.bound_M,
                     rep.sup_norm_max <= tw.bound_M + 1e-9))
    pm = partition.extract(f, tw)
    smat = np.full((3, 3), sigma)
    cache = connect1d.build_phi_cache(tw, sigma=smat, grid_n=361)
    co = partition.coarea_energy(f, tw, cache)
    contour = sigma * partition.total_interface_length(pm)
    agree = abs(co - contour) / co
    rows.append(_row("estimators.agreement", agree, 0.05, agree < 0.05))
    rows.append(_row("partition.junction_count",
                     len(partition.find_junctions(pm)), 1.0,
                     len(partition.find_junctions(pm)) == 1))


def _steiner_checks(rows, seed):
    rng = np.random.default_rng(seed + 17)
    worst = 0.0
    for _ in range(3):
        tri = rng.uniform(-1.0, 1.0, size=(3, 2))
        pt, tot = partition.steiner_point(*tri)
        # brute-force oracle on a grid around the triangle
        lo = tri.min(axis=0) - 0.1
        hi = tri.max(axis=0) + 0.1
        n = 601
        gx = np.linspace(lo[0], hi[0], n)
        gy = np.linspace(lo[1], hi[1], n)
        X, Y = np.meshgrid(gx, gy)
        tot_grid = sum(np.hypot(X - a[0], Y - a[1]) for a in tri)
        k = int(np.argmin(tot_grid))
        best = np.array([X.ravel()[k], Y.ravel()[k]])
        res = max(gx[1] - gx[0], gy[1] - gy[0])
        worst = max(worst, float(np.linalg.norm(pt - best)) / res)
    rows.append(_row("steiner.vs_bruteforce", worst, 2.0, worst <= 2.0))


def run_battery(seed: int = 0, corrupt_gradient: bool = False,
                quick: bool = False) -> list:
    """Run the invariant battery; returns the list of check rows."""
    rows = []
    _potential_checks(rows, seed)
    acts = _connection_checks(rows)
    _gradient_checks(rows, seed, corrupt_gradient)
    _steiner_checks(rows, seed)
    if not quick:
        _solve_checks(rows, acts)
    return rows


def format_rows(rows) -> str:
    width = max(len(r["name"]) for r in rows) + 2
    lines = []
    for r in rows:
        status = "PASS" if r["passed"] else "FAIL"
        lines.append(f"{r['name']:<{width}} measured={r['measured']:< 12.4e} "
                     f"tol={r['tolerance']:< 10.3g} {status}")
    good = sum(1 for r in rows if r["passed"])
    lines.append(f"{good}/{len(rows)} checks passed")
    return "\n".join(lines)
