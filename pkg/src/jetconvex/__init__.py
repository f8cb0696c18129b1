"""Convex C^1 extensions of finite 1-jets."""

from .jet import (JetDataset, JetError, JetPoint, SlackMatrix, Tolerances,
                  ValidationReport, compute_slack, load_dataset, validate)
from .lp import LpProblem, LpSolution, solve_lp
from .modulus import (ModulusModel, PairPiece, build_modulus, envelope_exact,
                      omega0_closed, omega0_oracle, omega_hat, phi_hat)
from .envelope import (EnvelopeResult, ExtensionConfig, ExtensionModel,
                       build_extension, envelope_1d_oracle, envelope_eval,
                       envelope_eval_batch, g_function, gradient_eval,
                       minimal_extension, psi)

__version__ = "0.1.0"
