"""Acceptance runs: one test per criterion, asserted at full tolerance.

Each test prints a single summary line (shown with -rA or on failure) and
checks every stated bound, including the runtime budget.  a5's interior L1
bound does not hold for this discretization at eps = 0.04 (the boundary
layer is still O(eps) wide in measure); the bound is asserted as stated
and that one sub-check fails.  See the limiting-energy check in the same
test for the estimate that does land.
"""

import math
import time

import numpy as np
import pytest

from phaselab import connect1d, field2d, partition
from phaselab.field2d import Field, SweepSetup

THIRD = 2.0 * math.pi / 3.0
TRIOD_ARCS = [((0.0, THIRD), 0), ((THIRD, 2 * THIRD), 1),
              ((2 * THIRD, 3 * THIRD), 2)]
FERMAT_ARCS = [((0.0, 0.5 * math.pi), 0), ((0.5 * math.pi, math.pi), 1),
               ((math.pi, 2.0 * math.pi), 2)]
SQUARE_ARCS = [((0.0, 1.0), 1), ((1.0, 4.0), 0)]


def _line(tag, ok, detail):
    print(f"acceptance {tag}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="module")
def disk256():
    return field2d.build_disk(radius=1.0, n=256)


@pytest.fixture(scope="module")
def triod256(p3, conn3, disk256):
    t0 = time.perf_counter()
    setup = SweepSetup(domain=disk256, arcs=TRIOD_ARCS, conn_table=conn3)
    stages = field2d.epsilon_sweep(setup, [0.16, 0.08, 0.04], p3)
    return stages, time.perf_counter() - t0


def test_a1_double_well_connection_action(p2):
    t0 = time.perf_counter()
    prof = connect1d.solve_connection(p2, 0, 1)
    elapsed = time.perf_counter() - t0
    defect = connect1d.equipartition_defect(prof, p2)
    err = abs(prof.action - 4.0 / 3.0)
    ok = err < 1e-3 and defect < 5e-3 and elapsed < 5.0
    _line("a1 connection", ok,
          f"sigma={prof.action:.7f} err={err:.2e} defect={defect:.2e} "
          f"t={elapsed:.2f}s")
    assert err < 1e-3
    assert defect < 5e-3
    assert elapsed < 5.0


def test_a2_geodesic_agrees_with_action(p2, p3, conn2, conn3):
    t0 = time.perf_counter()
    g2 = connect1d.geodesic_distance(p2, p2.wells[0], p2.wells[1])
    g3 = connect1d.geodesic_distance(p3, p3.wells[0], p3.wells[1])
    elapsed = time.perf_counter() - t0
    rel2 = abs(g2.length - conn2[(0, 1)].action) / conn2[(0, 1)].action
    rel3 = abs(g3.length - conn3[(0, 1)].action) / conn3[(0, 1)].action
    ok = rel2 < 1e-3 and rel3 < 1e-3 and elapsed < 30.0
    _line("a2 geodesic", ok,
          f"rel2={rel2:.2e} rel3={rel3:.2e} t={elapsed:.1f}s")
    assert rel2 < 1e-3
    assert rel3 < 1e-3
    assert elapsed < 30.0


def test_a3_symmetric_triod_on_disk(triod256, p3, sigma3):
    stages, elapsed = triod256
    assert all(s.report.converged for s in stages)
    final = stages[-1].field
    h = final.domain.h
    target = 3.0 * sigma3

    energies = [s.report.energy_trace[-1] for s in stages]
    e_rel = abs(energies[-1] - target) / target
    dists = [abs(e - target) for e in energies]
    monotone = all(b <= a + 1e-12 for a, b in zip(dists[:-1], dists[1:]))

    pm = partition.extract(final, p3)
    contour = sum(partition.interface_length_contour(pm, pair)
                  for pair in pm.pairs)
    c_rel = abs(contour - 3.0) / 3.0
    a_rel = max(abs(a - math.pi / 3.0) / (math.pi / 3.0) for a in pm.areas)

    junctions = partition.find_junctions(pm)
    assert len(junctions) == 1
    jx, jy = junctions[0].location
    j_dist = math.hypot(jx, jy)
    ang_dev = max(abs(a - 2.0 * math.pi / 3.0)
                  for a in junctions[0].angles)

    ok = (e_rel < 0.05 and c_rel < 0.05 and j_dist < 3.0 * h
          and ang_dev < math.radians(5.0) and a_rel < 0.05
          and monotone and elapsed < 600.0)
    _line("a3 triod", ok,
          f"J={energies[-1]:.5f} (rel {e_rel:.3f}) contour={contour:.4f} "
          f"junction=({jx:+.4f},{jy:+.4f}) "
          f"angle_dev={math.degrees(ang_dev):.2f}deg area_rel={a_rel:.3f} "
          f"monotone={monotone} t={elapsed:.0f}s")
    assert e_rel < 0.05
    assert c_rel < 0.05
    assert j_dist < 3.0 * h
    assert ang_dev < math.radians(5.0)
    assert a_rel < 0.05
    assert monotone
    assert elapsed < 600.0


def test_a4_unequal_arcs_fermat_junction(p3, conn3, sigma3, disk256):
    t0 = time.perf_counter()
    setup = SweepSetup(domain=disk256, arcs=FERMAT_ARCS, conn_table=conn3)
    stages = field2d.epsilon_sweep(setup, [0.16, 0.08, 0.04], p3)
    elapsed = time.perf_counter() - t0
    assert all(s.report.converged for s in stages)
    final = stages[-1].field
    h = final.domain.h

    jump_pts = [np.array([math.cos(t), math.sin(t)])
                for t in (0.0, 0.5 * math.pi, math.pi)]
    fermat, _, ref = partition.triod_reference(jump_pts, sigma3)

    pm = partition.extract(final, p3)
    junctions = partition.find_junctions(pm)
    assert len(junctions) == 1
    jx, jy = junctions[0].location
    j_dist = math.hypot(jx - fermat[0], jy - fermat[1])
    lim = partition.limiting_energy(pm, FERMAT_ARCS, sigma3)
    l_rel = abs(lim.total - ref) / ref

    ok = j_dist < 3.0 * h and l_rel < 0.05 and elapsed < 600.0
    _line("a4 fermat", ok,
          f"junction=({jx:+.4f},{jy:+.4f}) fermat=({fermat[0]:+.4f},"
          f"{fermat[1]:+.4f}) dist={j_dist:.4f} "
          f"limiting={lim.total:.5f} ref={ref:.5f} (rel {l_rel:.4f}) "
          f"t={elapsed:.0f}s")
    assert j_dist < 3.0 * h
    assert l_rel < 0.05
    assert elapsed < 600.0


def test_a5_boundary_layer_square(p2, conn2):
    t0 = time.perf_counter()
    dom = field2d.build_rectangle(width=1.0, height=1.0, n=128)
    setup = SweepSetup(domain=dom, arcs=SQUARE_ARCS, conn_table=conn2)
    stages = field2d.epsilon_sweep(setup, [0.16, 0.08, 0.04], p2)
    elapsed = time.perf_counter() - t0
    assert all(s.report.converged for s in stages)
    final = stages[-1].field
    sigma = conn2[(0, 1)].action

    pm = partition.extract(final, p2)
    junctions = partition.find_junctions(pm)
    lim = partition.limiting_energy(pm, SQUARE_ARCS, sigma)
    l_rel = abs(lim.total - sigma * 1.0) / (sigma * 1.0)

    inside = dom.mask > 0
    l1 = float(np.linalg.norm(final.u - p2.wells[0], axis=-1)[inside].sum()
               * dom.h * dom.h)
    l1_bound = 0.05 * dom.area

    ok = (len(junctions) == 0 and l_rel < 0.05 and l1 < l1_bound
          and elapsed < 300.0)
    _line("a5 boundary layer", ok,
          f"junctions={len(junctions)} limiting={lim.total:.5f} "
          f"(rel {l_rel:.4f}) L1={l1:.4f} bound={l1_bound:.4f} "
          f"t={elapsed:.0f}s")
    assert len(junctions) == 0
    assert l_rel < 0.05
    assert elapsed < 300.0
    # known failure: the layer carries O(eps) mass, about 0.14 here
    assert l1 < l1_bound


def test_a6_mass_constrained_equal_areas(p3, conn3):
    t0 = time.perf_counter()
    dom = field2d.build_disk(radius=1.0, n=192)
    setup = SweepSetup(domain=dom, arcs=None, conn_table=conn3,
                       mass_target=np.zeros(2))
    stages = field2d.epsilon_sweep(setup, [0.12, 0.06], p3)
    elapsed = time.perf_counter() - t0
    assert all(s.report.converged for s in stages)
    final = stages[-1].field

    violation = max(s.report.mass_violation_max for s in stages)
    pm = partition.extract(final, p3)
    a_rel = max(abs(a - math.pi / 3.0) / (math.pi / 3.0) for a in pm.areas)
    junctions = partition.find_junctions(pm)
    assert len(junctions) == 1
    ang_dev = max(abs(a - 2.0 * math.pi / 3.0)
                  for a in junctions[0].angles)

    ok = (a_rel < 0.05 and ang_dev < math.radians(5.0)
          and violation < 1e-10 and elapsed < 600.0)
    _line("a6 mass", ok,
          f"area_rel={a_rel:.3f} angle_dev={math.degrees(ang_dev):.2f}deg "
          f"violation={violation:.2e} t={elapsed:.0f}s")
    assert a_rel < 0.05
    assert ang_dev < math.radians(5.0)
    assert violation < 1e-10
    assert elapsed < 600.0


def test_a7_property_suite(p2, p3, conn3, sigma3, cache3, triod96):
    t0 = time.perf_counter()

    # exact gradient vs central differences on 20 random fields
    rng = np.random.default_rng(11)
    doms = [field2d.build_disk(radius=1.0, n=32),
            field2d.build_rectangle(width=1.0, height=1.0, n=24)]
    worst_fd = 0.0
    for k in range(20):
        dom = doms[k % 2]
        p = (p2, p3)[k % 2]
        u = rng.uniform(-1, 1, size=(dom.ny, dom.nx, p.m))
        u[dom.mask == 0] = 0.0
        f = Field(u=u, eps=0.3, domain=dom)
        g = field2d.energy_gradient(f, p)
        v = rng.standard_normal(u.shape)
        v[dom.mask != 2] = 0.0
        t = 1e-6
        fd = (field2d.energy_of(u + t * v, dom, 0.3, p)
              - field2d.energy_of(u - t * v, dom, 0.3, p)) / (2 * t)
        an = float(np.sum(g * v))
        worst_fd = max(worst_fd, abs(fd - an) / max(1.0, abs(an)))
    assert worst_fd < 1e-6

    # descent is monotone and stays inside the invariant ball
    f96, rep96 = triod96
    trace = np.asarray(rep96.energy_trace)
    assert np.all(np.diff(trace) <= 1e-12 * max(1.0, trace[0]))
    assert float(np.linalg.norm(f96.u, axis=-1).max()) <= p3.bound_M + 1e-9

    # the two interface-energy estimators agree
    pm = partition.extract(f96, p3)
    contour_e = sigma3 * partition.total_interface_length(pm)
    coarea_e = partition.coarea_energy(f96, p3, cache3)
    est_rel = abs(coarea_e - contour_e) / contour_e
    assert est_rel < 0.05

    # Steiner point vs brute-force grid search on random triangles
    worst_st = 0.0
    grid_n = 161
    for _ in range(10):
        tri = rng.uniform(-1, 1, size=(3, 2))
        pt, _ = partition.steiner_point(*tri)
        lo = tri.min(axis=0) - 0.1
        hi = tri.max(axis=0) + 0.1
        xs = np.linspace(lo[0], hi[0], grid_n)
        ys = np.linspace(lo[1], hi[1], grid_n)
        X, Y = np.meshgrid(xs, ys)
        tot = sum(np.hypot(X - v[0], Y - v[1]) for v in tri)
        iy, ix = np.unravel_index(np.argmin(tot), tot.shape)
        cell = math.hypot(xs[1] - xs[0], ys[1] - ys[0])
        worst_st = max(worst_st,
                       math.hypot(pt[0] - xs[ix], pt[1] - ys[iy]) / cell)
    assert worst_st <= 1.0

    elapsed = time.perf_counter() - t0
    ok = elapsed < 120.0
    _line("a7 properties", ok,
          f"fd={worst_fd:.2e} estimators_rel={est_rel:.2e} "
          f"steiner={worst_st:.2f}cells t={elapsed:.0f}s")
    assert elapsed < 120.0


def test_a8_minimizer_unique_across_random_inits(p3, conn3, disk256):
    t0 = time.perf_counter()
    h = disk256.h
    energies = []
    locations = []
    for seed in range(5):
        setup = SweepSetup(domain=disk256, arcs=TRIOD_ARCS,
                           conn_table=conn3, init="random", seed=seed)
        stages = field2d.epsilon_sweep(setup, [0.08], p3)
        assert stages[-1].report.converged
        energies.append(stages[-1].report.energy_trace[-1])
        pm = partition.extract(stages[-1].field, p3)
        junctions = partition.find_junctions(pm)
        assert len(junctions) == 1
        locations.append(junctions[0].location)
    elapsed = time.perf_counter() - t0

    spread = (max(energies) - min(energies)) / min(energies)
    max_dist = max(math.hypot(a[0] - b[0], a[1] - b[1])
                   for i, a in enumerate(locations)
                   for b in locations[i + 1:])

    ok = max_dist < 5.0 * h and spread < 0.01 and elapsed < 1200.0
    _line("a8 uniqueness", ok,
          f"junction_spread={max_dist:.4f} (5h={5 * h:.4f}) "
          f"energy_spread={spread:.2e} t={elapsed:.0f}s")
    assert max_dist < 5.0 * h
    assert spread < 0.01
    assert elapsed < 1200.0
