"""Root cause analysis for outliers in linear, possibly cyclic, structural equation models."""

__version__ = "0.1.0"

from .kernels import BACKEND
from .sem_model import (
    DirectedGraph,
    LinearSem,
    NoiseSpec,
    PerturbationSpec,
    ProjectedSem,
    marginalize_latents,
    path_matrix,
    path_matrix_oracle,
    population_covariance,
    population_precision,
    relatives,
    zigzag_reachable,
)
from .datagen import (
    AnomalousSample,
    Dataset,
    GraphGenConfig,
    generate_graph,
    sample_anomalous,
    sample_normal,
    semisynthetic_scenario,
)
from .precision_est import (
    EstimatorConfig,
    PrecisionEstimate,
    estimate_with_escalation,
    graphical_lasso,
    invert_covariance,
    sample_covariance,
)
from .rca import RcaReport, bh_evalue_select, e_values, propagation_route, run_algorithm1, transform, z_score_sq
from .baselines import BaselineResult, cholesky_rca, direct_solve_baseline, zscore_baseline
from .ingest import PreprocessConfig, PreprocessReport, load_csv, map_back, preprocess
from .bench import ExperimentConfig, ExperimentResult, emit_report, run_grid
