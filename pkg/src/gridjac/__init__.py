"""Ambient-noise estimation of power-grid dynamic state Jacobians.

Simulates stochastic multi-machine swing dynamics in center-of-inertia
coordinates, estimates the dynamic state Jacobian and generator damping
from trajectory covariances, and drives modal analysis, stability
monitoring and eigenvector-based re-dispatch from the estimated state
matrix.
"""

from .errors import (CaseError, ConvergenceError, EstimationError,
                     GridJacError, ModalError, ReductionError, ScenarioError,
                     StabilityError)
from .estimate import (CovarianceBlocks, DampingEstimate, JacobianEstimate,
                       StreamingCovariance, assemble_estimated_state_matrix,
                       estimate_damping, estimate_jacobian,
                       frobenius_relative_error, sample_covariance)
from .linear import (input_matrix, jacobian_coi, model_state_space,
                     pe_jacobian, solve_lyapunov, state_matrix,
                     theoretical_covariances)
from .modal import (MachineRanking, ModalDecomposition, RedispatchPlan,
                    apply_redispatch, critical_eigenvalue, eigen_decompose,
                    mode_table, normal_vector, participation_factors,
                    redispatch_outcome, redispatch_plan,
                    unstable_machine_ranking)
from .network import (Branch, Bus, ContingencyEvent, Generator, Load,
                      RawCase, ReducedNetwork, apply_contingency,
                      build_augmented_ybus, internal_emf, kron_reduce,
                      reduce_case)
from .prony import PronyResult, match_modes, prony_fit, reconstruct
from .scenario import (REPRO_NAMES, Scenario, repro, run_scenario,
                       tune_xdprime_for_lambda)
from .swing import (CoiModel, ContingencySchedule, Equilibrium,
                    ThirdOrderModel, Trajectory, coi_rhs, electrical_power,
                    find_equilibrium, recover_dependent, simulate,
                    simulate_third_order, third_order_rhs)

__version__ = "0.1.0"
