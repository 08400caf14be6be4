"""slabsm: 1D multigroup discrete-ordinates transport with multilevel
second-moment acceleration of the source iterations."""

from .accel import (AAState, DegenerateResidualPair, aa1_alpha, aa_step,
                    flatten_state, unflatten_state)
from .angular import AngularQuadrature, MomentSet, angular_moments, \
    build_double_gauss
from .driver import (METHOD_MLSM, METHOD_MLSM_AA1, METHOD_SI,
                     IterationConfig, RunReport, SpectralEstimate,
                     TransportState, convergence_measure,
                     estimate_spectral_radius, lo_solve_count, run_mlsm,
                     run_mlsm_aa1, run_problem, run_source_iteration,
                     si_infinite_medium_rho)
from .fields import LDField, Mesh, from_nodes, nodal_product, to_nodes
from .losm import (GreyCoefficients, LowOrderSystem, avg_scattering_xs,
                   compute_zeta, grey_xs, losm_residual, solve_grey_losm,
                   solve_group_losm, sum_closures)
from .problem import (BUILTIN_NAMES, ConnectionStrengthMatrix, ProblemError,
                      ProblemSpec, ValidationReport, builtin_problem,
                      builtin_reference_c, connection_strength, load_problem,
                      make_problem, problem_from_dict, validate_scattering)
from .sweep import (ClosureData, GroupSweepInput, LOBoundaryClosure,
                    boundary_closure, build_ho_rhs, closure_from_sweep,
                    group_balance, sweep_directions, sweep_group,
                    upwind_edge_psi)

__version__ = "0.1.0"
