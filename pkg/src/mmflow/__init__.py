"""Multimarginal stochastic interpolants on the simplex.

Learn conditional-expectation fields ``g_k(alpha, x) = E[x_k | x(alpha) = x]``
from joint samples, transport between any pair of marginals along a simplex
path with the probability-flow ODE or an SDE, and shorten paths by minimising
their kinetic transport cost.
"""

from .couplings import (
    AffineMap,
    Checkerboard,
    Gaussian,
    GaussianMixture,
    IndependentCoupling,
    MongeCoupling,
    Pushforward,
    TwoMoons,
    interpolant,
    sample_coupling,
    sample_marginal,
)
from .fields import FieldModel, TrainConfig, load_checkpoint, loss_batch, save_checkpoint, score, train
from .metrics import energy_distance, null_threshold, sliced_w2
from .oracle import GaussianProblem, MongeProblem, kernel_conditional_expectation
from .pathopt import PathOptConfig, optimize_path, transport_cost
from .simplex import SimplexPath, SimplexPoint, barycenter, eval_path, sample_alpha, vertex
from .transport import EpsilonSchedule, IntegratorConfig, TwoLegPath, flow_ode, flow_sde, transport, velocity

__version__ = "0.1.0"
