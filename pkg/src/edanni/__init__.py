"""Asynchronous communication-efficient distributed composite optimization."""

from .algorithms import (CertificateReport, IterationRecord, RunConfig, RunResult,
                         check_descent_certificates, evaluate_F, run, run_edanni,
                         run_proxgrad_ps)
from .engine import ArrivalModel, split_probs
from .master import (InexactnessSpec, SubproblemSpec, solve_subproblem,
                     solve_subproblem_closed_form, validate_linear_rate_conditions,
                     validate_rho)
from .problems import (LassoGenSpec, Problem, QuadGenSpec, Regularizer, SmoothLossSet,
                       SpcaGenSpec, generate_lasso, generate_spca,
                       generate_strongly_convex_quadratic, objective)
from .prox import prox, prox_gradient_map

__version__ = "0.1.0"
