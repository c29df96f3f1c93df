"""Simulation and likelihood tools for jump diffusions observed at high frequency.

Modules:

* :mod:`lanlab.model` - coefficient bundles, jump laws, local alternatives and assumption probes.
* :mod:`lanlab.simulate` - exact and Euler simulation with optional latent data.
* :mod:`lanlab.density` - Poisson-mixture transition densities and Gaussian bound checks.
* :mod:`lanlab.lan` - log-likelihood-ratio statistics, remainders and Fisher information.
* :mod:`lanlab.estimate` - quasi-likelihood drift estimation with jump filtering.
* :mod:`lanlab.harness` - configs, Monte Carlo experiments and reports.
"""

from .density import MixtureDensitySpec, mixture_density, q1_chapman_kolmogorov, q_i_closed_form
from .errors import *  # noqa: F401,F403
from .estimate import drift_qmle, estimator_normality_experiment
from .harness import ExperimentConfig, run_lan_experiment, run_scaling_study, run_tail_checks
from .lan import exact_llr, fisher_closed_form, fisher_ergodic, main_term_sum, quasi_llr, remainder_components
from .model import (
    JumpDiffusionModel,
    LevySpec,
    ParameterContext,
    class_levy,
    gaussian_levy,
    make_builtin_model,
    no_jumps,
    probe_assumptions,
)
from .rng import stream
from .simulate import ObservationRecord, SimulationScheme, simulate_grid

__version__ = "0.1.0"
