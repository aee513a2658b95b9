"""Run-time-assurance safety filters and timing benchmarks for the
spacecraft inspection task.

Public surface re-exported here: dynamics (Clohessy-Wiltshire model),
safety constraints, the embedded QP/NLP solvers, the three ASIF
filters, MLP controller inference, inspection geometry and the
benchmark harness. Hot kernels run on a compiled backend when the
extension is built, with a pure-numpy fallback selected automatically
(see ``rtabench._backend``).
"""

from ._backend import DEFAULT_BACKEND, available_backends, get_backend
from .bench import (BenchCase, BenchConfig, TimingReport, TimingSample,
                    compute_stats, generate_states, matrix_configs,
                    read_report, report_for_run, run_config, run_matrix,
                    simulate_episode, write_report)
from .dynamics import (CwParams, advance_sun, derivative, integrate_rk4,
                       propagate, sun_vector, transition_matrices, wrap_angle)
from .filters import (BackupTrajectory, DiscreteAsif, ExplicitAsif,
                      FilterConfig, FilterResult, ImplicitAsif, backup_control,
                      check_barrier, compute_backup_trajectory, filter_dasif,
                      filter_easif, filter_iasif, make_filter)
from .inspection import (InspectionSummary, PointSphere, generate_sphere,
                         nearest_uninspected_cluster, point_visible,
                         update_inspection)
from .policy import (ActionDistributionParams, Layer, PolicyNetwork,
                     WeightsError, act, build_observation, evaluate, forward,
                     load_default_network, load_network, random_network,
                     save_network)
from .safety import (AlphaSpec, SafetyParams, grad_h, h_axis_speed,
                     h_collision, h_gradients, h_keepin, h_slowdown, h_values,
                     is_safe)
from .solvers import (NlpProblem, QpProblem, SolveOutcome, solve_nlp,
                      solve_qp)

__version__ = "0.1.0"
