"""Multiple-intent inverse reinforcement learning with warm-started EM."""

from .bench import ExperimentConfig, RunRecord, run_experiment, run_sweep
from .elementworld import ElementWorldConfig, generate, make_dataset
from .em import RewardEnsemble, e_step, m_step, run_em, warmstart
from .errors import ConvergenceError, MiIrlError, NumericalError, ValidationError
from .maxent import MaxEntModel, expected_features, fit_weighted_mle, log_likelihood, log_partition
from .mdp import FeatureMap, Policy, TabularMdp, Trajectory, value_iteration
from .metrics import anid, evd, gevd

__version__ = "0.1.0"
