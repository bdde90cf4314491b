"""Numerical toolkit for real phase retrieval landscapes and algorithms.

Theory side: Gaussian-comparison lower bounds on the constrained recovery
objective over the (squared norm, overlap) plane, in plain and
exponentially lifted form, for amplitude and intensity residuals;
parametric manifolds of those bounds, funnel detection by discrete
descent flow, and bisection for critical oversampling ratios.

Practice side: spectral initialization, backtracked gradient descent on
the intensity residual, a log-barrier homotopy, randomized sign
reshuffles, the hybrid alternation of all of the above, and a seeded
Monte-Carlo harness measuring empirical phase transitions.
"""

__version__ = "0.1.0"

from .numerics import (CubicCandidates, DegenerateBracket, GaussianSampler,
                       NonConvergence, QuadratureSpec, cubic_real_nonneg_roots,
                       gauss_weighted_integral, gaussian_sampler,
                       maximize_scalar, power_iteration)
from .rdt_plain import ParamPoint, PlainBoundResult, f_q_closed, phi0_plain
from .rdt_lifted import LiftedBoundResult, LiftParams, f_q_lift, phi0_lifted
from .rdt_squared import (SquaredInnerProblem, f_q_sq, inner_min_sq, phi0_sq,
                          phi0_sq_lifted)
from .manifold import (BadBracket, BoundVariant, FunnelReport, GridSpec,
                       ManifoldGrid, barrier_manifold, build_manifold,
                       critical_alpha, detect_funnels)
from .algorithms import (BarrierSchedule, GradConfig, ProblemInstance,
                         ReshuffleConfig, RunRecord, f_bar, f_plain, grad_f_bar,
                         grad_f_plain, gradback, gradbar, gradplain, hybrid,
                         reshuffle, spectral_init, success_test)
from .experiments import (AlgoConfigs, SweepSpec, TransitionTable,
                          generate_instance, run_sweep, theoretical_overlay)
