"""Neighborhood-level spatial risk modeling toolkit.

Census indicator derivation, PCA, OLS and Huber robust regression with
diagnostics, random-forest regression with cross-validated grid search,
and validated neighborhood risk rankings with GeoJSON choropleth export.
"""

from .diagnostics import DiagnosticsReport, breusch_pagan, diagnose, durbin_watson, shapiro_wilk, vif
from .forest import (
    CvResult,
    ForestConfig,
    ForestModel,
    GridSearchResult,
    fit_forest,
    fit_tree,
    grid_search,
    kfold_cv,
    predict_forest,
    r2_score,
    rmse,
)
from .ingest import (
    CaseDensity,
    CensusTractRaw,
    IndicatorTable,
    aggregate_cases,
    derive_indicators,
    parse_census,
    standardize,
)
from .pca import PcaModel, ScoreTable, fit_pca, select_components, top_k_neighborhoods, transform
from .ranking import AgreementReport, RiskRanking, build_ranking, rank_agreement
from .regression import HuberConfig, RegressionFit, fit_huber, fit_ols, predict, pseudo_r2
from .runconfig import RunConfig, load_run_config
from .pipeline import PipelineReport, build_report, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "AgreementReport",
    "CaseDensity",
    "CensusTractRaw",
    "CvResult",
    "DiagnosticsReport",
    "ForestConfig",
    "ForestModel",
    "GridSearchResult",
    "HuberConfig",
    "IndicatorTable",
    "PcaModel",
    "PipelineReport",
    "RegressionFit",
    "RiskRanking",
    "RunConfig",
    "ScoreTable",
    "aggregate_cases",
    "breusch_pagan",
    "build_ranking",
    "build_report",
    "derive_indicators",
    "diagnose",
    "durbin_watson",
    "fit_forest",
    "fit_huber",
    "fit_ols",
    "fit_pca",
    "fit_tree",
    "grid_search",
    "kfold_cv",
    "load_run_config",
    "parse_census",
    "predict",
    "predict_forest",
    "pseudo_r2",
    "r2_score",
    "rank_agreement",
    "rmse",
    "run_pipeline",
    "select_components",
    "shapiro_wilk",
    "standardize",
    "top_k_neighborhoods",
    "transform",
    "vif",
]
