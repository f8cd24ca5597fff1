"""AutoML toolkit for yield analysis on imbalanced tabular sensor data.

Stages: ingestion/profiling, imputation, large-scale feature extraction,
weighted multi-ranker feature selection with recursive elimination, vote-
ensemble anomaly detection, gradient-boosted classification with a focal
loss option, and multi-fidelity hyperparameter search — all deterministic
under a single root seed and driven by a JSON-configured CLI.
"""

__version__ = "0.1.0"

from .data_model import (  # noqa: F401
    DataProfile,
    Dataset,
    ProcessDefinition,
    infer_process_definition,
    load_csv,
    load_secom,
    profile,
    stratified_split,
)
from .feature_factory import (  # noqa: F401
    FeatureConfig,
    FeatureMatrix,
    expected_feature_count,
    extract_all,
)
from .imputation import ImputationResult, ImputerSpec, fit_impute  # noqa: F401
