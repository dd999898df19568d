import math

import numpy as np
import pytest

from phaselab import connect1d, field2d
from phaselab.potential import build_double_well, build_triple_well

THIRD = 2.0 * math.pi / 3.0
TRIOD_ARCS = [((0.0, THIRD), 0), ((THIRD, 2 * THIRD), 1),
              ((2 * THIRD, 3 * THIRD), 2)]


@pytest.fixture(scope="session")
def p2():
    return build_double_well()


@pytest.fixture(scope="session")
def p3():
    return build_triple_well(1.0)


@pytest.fixture(scope="session")
def conn2(p2):
    return connect1d.connection_table(p2)


@pytest.fixture(scope="session")
def conn3(p3):
    return connect1d.connection_table(p3)


@pytest.fixture(scope="session")
def sigma3(conn3):
    return float(np.mean([c.action for c in conn3.values()]))


@pytest.fixture(scope="session")
def cache3(p3):
    # coarser than production (481) but plenty for 5% agreement checks
    return connect1d.build_phi_cache(p3, grid_n=241)


@pytest.fixture(scope="session")
def cache2(p2):
    return connect1d.build_phi_cache(p2)


@pytest.fixture(scope="session")
def disk96():
    return field2d.build_disk(radius=1.0, n=96)


@pytest.fixture(scope="session")
def triod96(p3, conn3, disk96):
    """Converged symmetric triod at eps = 0.12 on the 96^2 disk."""
    eps = 0.12
    dd = field2d.make_dirichlet(disk96, TRIOD_ARCS, eps=eps,
                                conn_table=conn3, wells=p3.wells)
    f0 = field2d.init_radial(disk96, TRIOD_ARCS, p3, eps, dd)
    f, rep = field2d.minimize(f0, p3, accelerate=True)
    assert rep.converged
    return f, rep
