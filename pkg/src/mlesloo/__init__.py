"""Multi-level Gaussian-process emulation with cost-aware ES-LOO adaptive sampling."""

from .esloo import (THETA_E, ErrorDistribution, EsLooSurface, build_surface, error_distribution_level1,
                    error_distribution_levell, error_moments, esloo_value, expected_improvement,
                    improvement_from_moments, maximize_pei, pei, pseudo_points, repulsion)
from .experiment import (ExperimentConfig, ExperimentResult, batch_vs_sequential, cost_ratio_sweep,
                         run_experiment, single_vs_multi_comparison)
from .gp import (GaussianProcess, KernelSpec, PosteriorSummary, SingularCovarianceError, fit_gp,
                 kernel_eval, loo_predictions, posterior, zero_mean_error_mean)
from .metrics import nrmse, uniform_grid
from .multilevel import LevelData, MultiLevelEmulator, add_run, level_weights, ml_predict
from .design import initial_designs, maximin_lhc
from .problems import TestProblem, get_problem, two_level_2d
from .sampler import (Proposal, RunLog, SamplerConfig, SimulatorError, StepRecord, batch_mixed,
                      batch_same_level, propose, run, step)
from .serialize import dumps, write_json

__version__ = "0.1.0"
