"""Bootstrap tests for whether a predetermined state predicts the copula of two series.

The pipeline filters each series with an AR(1)-(GJR-)GARCH(1,1) model, turns
the residuals into sequential pseudo-observations, fits a local Gaussian
intercept at each diagonal grid point under the no-predictability restriction,
and evaluates CUSUM and LM detectors of the sequential score, calibrated by a
moving block bootstrap.
"""

from .analysis import ConfigError, RunConfig, bootstrap_only, locate_breaks, run_full_analysis
from .bootstrap import BootstrapConfig, BootstrapError, BootstrapResult, andrews_block_length, bootstrap_test
from .breaks import BreakError, SplitNode, locate_break, sequential_split, sidak_levels
from .data import DataError, DataSet, derive_state, descriptive_report, ingest_csv, write_csv
from .dgp import (
    MCConfig, ScenarioSpec, standard_scenarios, run_mc_experiment, sample_frank_copula,
    sample_gaussian_copula, sample_patchwork, simulate_scenario, simulate_state,
)
from .estimator import RestrictedFit, fit_alpha
from .gauss import (
    DomainError, GridPoint, bvn_cdf, copula_ddrho, copula_drho, copula_value, loglik_hess_alpha,
    norm_quantile, quadrant_probs,
)
from .marginal import ConvergenceError, MarginalFit, MarginalModelSpec, fit_marginal, simulate_marginal
from .pipeline import Evaluation, PipelineConfig, evaluate
from .ranks import RankPanel, quadrant_counts, sequential_quadrant_sums, sequential_rank_u
from .score import (
    DiagonalGrid, RegionStatistics, ScoreProcess, aggregate_omega, cusum_delta1, lm_delta2,
    region_statistics, run_region_test, score_process,
)

__version__ = "0.1.0"
