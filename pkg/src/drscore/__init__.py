"""Score multiple imputations of incomplete data against the observed data alone.

The score trains classifiers that separate fully observed rows from imputed
rows on random column subsets and averages the estimated log density ratio
at held-out imputed rows. Higher scores mean imputations closer in
distribution to the real data.
"""

from .amputer import MarSpec, ampute_mar, ampute_mcar, ampute_spiral, gen_gaussian, gen_spiral, random_mar_spec
from .data import (
    NUMERIC,
    ColumnKind,
    IncompleteMatrix,
    Pattern,
    PatternGroup,
    Projection,
    categorical,
    complete_on,
    load_csv,
    pattern_groups,
    project_rows,
    write_csv,
)
from .errors import ContractError, CouplingError, DegenerateError, DRScoreError, NothingToScoreError, ParseError
from .evaluation import CoverageReport, coverage_width, neg_rmse, normalize_widths, quadrant, rank_methods
from .forest import ForestClassifier, ForestModel, fit_forest, oob_error, predict_prob
from .imputers import IMPUTERS, ImputationSet, impute, impute_donor, impute_mean, impute_regress_mean, impute_sample
from .inference import (
    JackknifeResult,
    ProprietyResult,
    confidence_interval,
    jackknife_variance,
    p_value_bucket,
    propriety_test,
)
from .projection import FULL, UNRESTRICTED, ProjectionMode, default_num_proj, sample_projections
from .score import ScoreParams, ScoreReport, balance_classes, dr_iscore, log_density_ratio, score_true_data, truncate_prob

__version__ = "0.1.0"

__all__ = [
    "MarSpec",
    "ampute_mar",
    "ampute_mcar",
    "ampute_spiral",
    "gen_gaussian",
    "gen_spiral",
    "random_mar_spec",
    "NUMERIC",
    "ColumnKind",
    "IncompleteMatrix",
    "Pattern",
    "PatternGroup",
    "Projection",
    "categorical",
    "complete_on",
    "load_csv",
    "pattern_groups",
    "project_rows",
    "write_csv",
    "ContractError",
    "CouplingError",
    "DegenerateError",
    "DRScoreError",
    "NothingToScoreError",
    "ParseError",
    "CoverageReport",
    "coverage_width",
    "neg_rmse",
    "normalize_widths",
    "quadrant",
    "rank_methods",
    "ForestClassifier",
    "ForestModel",
    "fit_forest",
    "oob_error",
    "predict_prob",
    "IMPUTERS",
    "ImputationSet",
    "impute",
    "impute_donor",
    "impute_mean",
    "impute_regress_mean",
    "impute_sample",
    "JackknifeResult",
    "ProprietyResult",
    "confidence_interval",
    "jackknife_variance",
    "p_value_bucket",
    "propriety_test",
    "FULL",
    "UNRESTRICTED",
    "ProjectionMode",
    "default_num_proj",
    "sample_projections",
    "ScoreParams",
    "ScoreReport",
    "balance_classes",
    "dr_iscore",
    "log_density_ratio",
    "score_true_data",
    "truncate_prob",
]
