import math

import numpy as np
import pytest

from phaselab import connect1d, field2d
from phaselab.field2d import Field

THIRD = 2.0 * math.pi / 3.0
TRIOD_ARCS = [((0.0, THIRD), 0), ((THIRD, 2 * THIRD), 1),
              ((2 * THIRD, 3 * THIRD), 2)]


# ---------------------------------------------------------------- domains

def test_disk_mask_structure(disk96):
    dom = disk96
    assert dom.mask.shape == (dom.ny, dom.nx)
    # every interior node has four in-domain 4-neighbors
    inside = dom.mask > 0
    interior = dom.mask == 2
    ok = (inside[:-2, 1:-1] & inside[2:, 1:-1]
          & inside[1:-1, :-2] & inside[1:-1, 2:])
    assert np.array_equal(interior[1:-1, 1:-1], ok & inside[1:-1, 1:-1])
    # no interior nodes on the array frame
    assert not interior[0].any() and not interior[-1].any()
    assert not interior[:, 0].any() and not interior[:, -1].any()


def test_disk_area_and_perimeter_converge():
    dom = field2d.build_disk(radius=1.0, n=192)
    assert dom.area == pytest.approx(np.pi, rel=2e-2)
    # the node polyline of a gridded circle is a staircase, so its chord
    # sum sits a few percent above 2 pi and does not converge to it
    total = float(field2d.boundary_weights(dom).sum())
    assert 2 * np.pi <= total <= 1.10 * 2 * np.pi


def test_disk_boundary_params_sorted(disk96):
    t = disk96.boundary_param
    assert np.all(np.diff(t) > 0)
    assert 0.0 <= t[0] and t[-1] < 2 * np.pi


def test_rectangle_geometry():
    dom = field2d.build_rectangle(2.0, 1.0, n=101)
    assert dom.area == pytest.approx(2.0, abs=1e-12)
    assert dom.param_total == pytest.approx(6.0)
    assert float(field2d.boundary_weights(dom).sum()) \
        == pytest.approx(6.0, rel=1e-6)


def test_rectangle_height_must_fit_grid():
    with pytest.raises(ValueError):
        field2d.build_rectangle(1.0, 0.7703, n=33)


def test_cell_edge_counts(disk96):
    dom = disk96
    assert dom.kx.min() >= 0 and dom.kx.max() <= 2
    assert dom.ky.min() >= 0 and dom.ky.max() <= 2
    assert dom.ncells.max() <= 4
    # ncells is the number of complete cells holding each node
    assert int(dom.ncells.sum()) == 4 * int(dom.cellmask.sum())


# --------------------------------------------------------- boundary data

def test_sharp_phase_tiling():
    t = np.array([0.1, 1.5, 3.0, 5.0])
    lab = field2d.sharp_phase(TRIOD_ARCS, t)
    assert lab.tolist() == [0, 0, 1, 2]


def test_dirichlet_examples(p3, conn3, disk96):
    dd = field2d.make_dirichlet(disk96, TRIOD_ARCS, eps=0.12,
                                conn_table=conn3, wells=p3.wells)
    t = disk96.boundary_param
    vals = dd.values
    # away from the jumps the data sits exactly at the wells
    mid0 = np.argmin(np.abs(t - THIRD / 2))
    mid1 = np.argmin(np.abs(t - 1.5 * THIRD))
    assert np.array_equal(vals[mid0], p3.wells[0])
    assert np.array_equal(vals[mid1], p3.wells[1])
    # near a jump the data is strictly between wells
    j = np.argmin(np.abs(t - THIRD))
    d0 = np.linalg.norm(vals[j] - p3.wells[0])
    d1 = np.linalg.norm(vals[j] - p3.wells[1])
    assert d0 > 0.05 and d1 > 0.05


def test_dirichlet_l1_scales_linearly_in_eps(p3, conn3):
    dom = field2d.build_disk(radius=1.0, n=128)
    l1 = {}
    for eps in (0.4, 0.2):
        dd = field2d.make_dirichlet(dom, TRIOD_ARCS, eps=eps,
                                    conn_table=conn3, wells=p3.wells)
        l1[eps] = field2d.dirichlet_l1_to_sharp(dd, dom, p3.wells)
    ratio = l1[0.2] / l1[0.4]
    assert 0.4 < ratio < 0.6


def test_dirichlet_rejects_overlapping_transitions(p3, conn3, disk96):
    narrow = [((0.0, 0.05), 0), ((0.05, 0.1), 1), ((0.1, 2 * np.pi), 2)]
    with pytest.raises(ValueError):
        field2d.make_dirichlet(disk96, narrow, eps=0.3, conn_table=conn3,
                               wells=p3.wells)


def test_dirichlet_arcs_must_tile(p3, conn3, disk96):
    gap = [((0.0, 1.0), 0), ((1.2, 2 * np.pi), 1)]
    with pytest.raises(ValueError):
        field2d.make_dirichlet(disk96, gap, eps=0.1, conn_table=conn3,
                               wells=p3.wells)


# ----------------------------------------------------------------- energy

def test_energy_zero_at_well(p3, disk96):
    f = field2d.init_constant(disk96, p3, 1, eps=0.1)
    f.dirichlet = None
    assert field2d.energy(f, p3) == 0.0


def test_energy_of_tanh_stripe_matches_sigma(p2):
    # u(x, y) = tanh((y - 1/2) / eps) has J_eps = 4/3 per unit width up to
    # O((h/eps)^2) quadrature error and exponentially small truncation
    dom = field2d.build_rectangle(1.0, 1.0, n=129)
    eps = 0.08
    X, Y = dom.node_xy()
    f = Field(u=np.tanh((Y - 0.5) / eps)[..., None], eps=eps, domain=dom)
    assert field2d.energy(f, p2) == pytest.approx(4.0 / 3.0, rel=2e-2)


def test_energy_additive_over_split(p2):
    dom = field2d.build_rectangle(1.0, 1.0, n=65)
    left = field2d.build_rectangle(0.5, 1.0, n=33)
    rng = np.random.default_rng(5)
    u = rng.uniform(-1, 1, size=(dom.ny, dom.nx, 1))
    eps = 0.2
    E_full = field2d.energy_of(u, dom, eps, p2)
    E_l = field2d.energy_of(u[:, :33].copy(), left, eps, p2)
    E_r = field2d.energy_of(u[:, 32:].copy(), left, eps, p2)
    assert E_full == pytest.approx(E_l + E_r, abs=1e-12)


@pytest.mark.parametrize("pot", ["p2", "p3"])
def test_gradient_matches_finite_differences(pot, request):
    p = request.getfixturevalue(pot)
    dom = field2d.build_disk(radius=1.0, n=48)
    rng = np.random.default_rng(11)
    for _ in range(5):
        u = rng.uniform(-1, 1, size=(dom.ny, dom.nx, p.m))
        u[dom.mask == 0] = 0.0
        f = Field(u=u, eps=0.3, domain=dom)
        g = field2d.energy_gradient(f, p)
        v = rng.standard_normal(u.shape)
        v[dom.mask != 2] = 0.0
        t = 1e-6
        Ep = field2d.energy_of(u + t * v, dom, 0.3, p)
        Em = field2d.energy_of(u - t * v, dom, 0.3, p)
        fd = (Ep - Em) / (2 * t)
        an = float(np.sum(g * v))
        assert abs(fd - an) / max(1.0, abs(an)) < 1e-6


def test_gradient_is_local(p3, disk96):
    dom = disk96
    rng = np.random.default_rng(2)
    u = rng.uniform(-1, 1, size=(dom.ny, dom.nx, 2))
    u[dom.mask == 0] = 0.0
    f = Field(u=u, eps=0.2, domain=dom)
    g0 = field2d.energy_gradient(f, p3)
    iy, ix = dom.ny // 2, dom.nx // 2
    f.u[iy, ix] += 0.1
    g1 = field2d.energy_gradient(f, p3)
    changed = np.argwhere(np.any(np.abs(g1 - g0) > 1e-14, axis=-1))
    assert np.all(np.abs(changed[:, 0] - iy) <= 1)
    assert np.all(np.abs(changed[:, 1] - ix) <= 1)


# ---------------------------------------------------------------- solvers

def test_minimize_already_converged_takes_zero_iterations(p3, conn3,
                                                          disk96):
    whole = [((0.0, 2 * np.pi), 1)]
    dd = field2d.make_dirichlet(disk96, whole, eps=0.1, conn_table=conn3,
                                wells=p3.wells)
    f0 = field2d.init_constant(disk96, p3, 1, eps=0.1, dd=dd)
    f, rep = field2d.minimize(f0, p3)
    assert rep.iterations == 0
    assert rep.converged and rep.stop_reason == "residual"


def test_solvers_agree(p3, conn3):
    dom = field2d.build_disk(radius=1.0, n=48)
    eps = 0.2
    dd = field2d.make_dirichlet(dom, TRIOD_ARCS, eps=eps, conn_table=conn3,
                                wells=p3.wells)
    f0 = field2d.init_radial(dom, TRIOD_ARCS, p3, eps, dd)
    fa, ra = field2d.minimize(f0.copy(), p3, accelerate=False)
    fb, rb = field2d.minimize(f0.copy(), p3, accelerate=True)
    assert ra.energy_trace[-1] == pytest.approx(rb.energy_trace[-1],
                                                abs=1e-5)


def test_minimize_monotone_and_bounded(triod96, p3):
    f, rep = triod96
    tr = np.array(rep.energy_trace)
    assert np.all(np.diff(tr) <= 1e-9 * np.maximum(1.0, np.abs(tr[:-1])))
    assert rep.sup_norm_max <= p3.bound_M + 1e-9
    assert rep.converged


def test_stripe_energy_decreases_toward_sigma(p2, conn2):
    # two-phase square, mismatch side of length 1: J_eps > sigma with an
    # O(eps) excess, so halving eps moves J toward sigma from above
    dom = field2d.build_rectangle(1.0, 1.0, n=96)
    arcs = [((0.0, 1.0), 1), ((1.0, 4.0), 0)]
    sigma = 4.0 / 3.0
    E = {}
    for eps in (0.1, 0.05):
        dd = field2d.make_dirichlet(dom, arcs, eps=eps, conn_table=conn2,
                                    wells=p2.wells)
        f0 = field2d.init_radial(dom, arcs, p2, eps, dd)
        f, rep = field2d.minimize(f0, p2, accelerate=True)
        assert rep.converged
        E[eps] = rep.energy_trace[-1]
    assert sigma < E[0.05] < E[0.1] < 1.5 * sigma


def test_mass_constrained_fixed_point(p3):
    dom = field2d.build_disk(radius=1.0, n=64)
    n_in = int(np.count_nonzero(dom.mask > 0))
    area_nodes = dom.h ** 2 * n_in
    # start exactly at a well; its own mass is stationary and feasible
    f0 = field2d.init_constant(dom, p3, 0, eps=0.15)
    f0.dirichlet = None
    target = area_nodes * p3.wells[0]
    f, rep = field2d.minimize_mass_constrained(f0, p3, target,
                                               accelerate=True)
    assert rep.converged
    assert rep.mass_violation_max < 1e-10
    assert rep.energy_trace[-1] == pytest.approx(0.0, abs=1e-12)


def test_mass_violation_stays_tiny(p3):
    dom = field2d.build_disk(radius=1.0, n=64)
    f0 = field2d.init_constant(dom, p3, 0, eps=0.15)
    f0.dirichlet = None
    target = np.zeros(2)
    f, rep = field2d.minimize_mass_constrained(f0, p3, target,
                                               accelerate=True,
                                               max_iter=4000)
    assert rep.mass_violation_max < 1e-10
    inside = dom.mask > 0
    mass = dom.h ** 2 * f.u[inside].sum(axis=0)
    assert np.max(np.abs(mass - target)) < 1e-10


def test_mass_target_outside_hull_rejected(p3):
    dom = field2d.build_disk(radius=1.0, n=64)
    f0 = field2d.init_constant(dom, p3, 0, eps=0.15)
    bad = np.array([100.0, 0.0])
    with pytest.raises(ValueError):
        field2d.minimize_mass_constrained(f0, p3, bad)


# ------------------------------------------------------------------ sweeps

def test_sweep_validations(p3, conn3, disk96):
    setup = field2d.SweepSetup(domain=disk96, arcs=TRIOD_ARCS,
                               conn_table=conn3)
    with pytest.raises(ValueError):
        field2d.epsilon_sweep(setup, [0.1, 0.2], p3)
    with pytest.raises(ValueError):
        field2d.epsilon_sweep(setup, [0.3, 0.01], p3)   # below 4h floor


def test_sweep_records_l1_between_stages(p3, conn3):
    dom = field2d.build_disk(radius=1.0, n=64)
    setup = field2d.SweepSetup(domain=dom, arcs=TRIOD_ARCS,
                               conn_table=conn3, accelerate=True)
    stages = field2d.epsilon_sweep(setup, [0.32, 0.24, 0.16], p3)
    assert stages[0].l1_prev is None
    l1s = [s.l1_prev for s in stages[1:]]
    # successive minimizers differ only in their O(eps) transition layers
    assert all(0.0 < v < 1.0 for v in l1s)
    assert all(s.report.converged for s in stages)
    assert [s.eps for s in stages] == [0.32, 0.24, 0.16]


def test_init_radial_sector_labels(p3, disk96):
    f = field2d.init_radial(disk96, TRIOD_ARCS, p3, 0.1)
    # a point deep inside the first sector carries well 0
    iy = np.searchsorted(disk96.ys, 0.45)
    ix = np.searchsorted(disk96.xs, 0.45)
    assert np.allclose(f.u[iy, ix], p3.wells[0])


def test_init_random_stays_in_well_box(p3, disk96):
    rng = np.random.default_rng(0)
    f = field2d.init_random(disk96, p3, 0.1, rng)
    inside = disk96.mask > 0
    lo = p3.wells.min(axis=0) - 0.2
    hi = p3.wells.max(axis=0) + 0.2
    assert np.all(f.u[inside] >= lo - 1e-12)
    assert np.all(f.u[inside] <= hi + 1e-12)
