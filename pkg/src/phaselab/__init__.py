"""Phase-field laboratory for vector Allen-Cahn energies on 2D domains.

Minimizes the eps-scaled Ginzburg-Landau functional with well-valued
Dirichlet data, extracts the limiting phase partition, and measures it
against sharp-interface predictions (surface tensions from 1D connection
problems, junction angles, minimal-cone references).
"""

from .connect1d import (ConnectionProfile, ConvergenceFailure,
                        connection_table, geodesic_distance, sigma_matrix,
                        solve_connection)
from .field2d import (Domain2D, Field, SweepSetup, build_disk,
                      build_rectangle, energy, epsilon_sweep,
                      make_dirichlet, minimize, minimize_mass_constrained)
from .partition import (JunctionReport, PartitionMap, extract,
                        find_junctions, limiting_energy, steiner_point,
                        triod_reference)
from .potential import build_double_well, build_triple_well

__version__ = "0.1.0"

__all__ = [
    "ConnectionProfile", "ConvergenceFailure", "connection_table",
    "geodesic_distance", "sigma_matrix", "solve_connection",
    "Domain2D", "Field", "SweepSetup", "build_disk", "build_rectangle",
    "energy", "epsilon_sweep", "make_dirichlet", "minimize",
    "minimize_mass_constrained",
    "JunctionReport", "PartitionMap", "extract", "find_junctions",
    "limiting_energy", "steiner_point", "triod_reference",
    "build_double_well", "build_triple_well",
    "__version__",
]
