"""Run configuration: a single JSON document mapped onto nested frozen
dataclasses, with recursive unknown-key rejection and stage-prerequisite
validation before anything executes.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields

from ..anomaly import FAMILIES
from ..cast import RANKERS
from ..errors import ConfigError
from ..hpo.study import OPTIMIZERS
from ..imputation import METHODS

STAGES = ("ingest", "impute", "extract", "select", "anomaly", "classify", "report")

# every enabled stage needs these stages enabled too
_PREREQUISITES = {
    "ingest": (),
    "impute": ("ingest",),
    "extract": ("impute",),
    "select": ("extract",),
    "anomaly": ("extract",),
    "classify": ("extract",),
    "report": ("ingest",),
}

DATA_KINDS = ("mini", "csv", "secom")
ARM_NAMES = ("gam", "gbt_ce", "gbt_fl")


@dataclass(frozen=True)
class DataConfig:
    kind: str = "mini"
    values_path: str | None = None
    labels_path: str | None = None      # secom format only

    def __post_init__(self):
        if self.kind not in DATA_KINDS:
            raise ConfigError(f"data.kind must be one of {DATA_KINDS}")
        if self.kind == "csv" and not self.values_path:
            raise ConfigError("data.kind 'csv' requires data.values_path")
        if self.kind == "secom" and not (self.values_path and self.labels_path):
            raise ConfigError("data.kind 'secom' requires values_path and labels_path")


@dataclass(frozen=True)
class ImputerConfig:
    method: str = "knn"
    k_neighbors: int = 5

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"imputer.method must be one of {METHODS}")


@dataclass(frozen=True)
class FeatureSettings:
    window: int = 5
    filter_width: int = 5
    llt_s_values: tuple[float, ...] = (0.5, 1.0, 2.0)
    llt_dt: float = 1.0
    pca_threshold: float = 0.9
    include_raw_series: bool = True
    include_function_series: bool = True
    include_raw_summaries: bool = True


@dataclass(frozen=True)
class CastSettings:
    rankers: tuple[str, ...] = RANKERS
    m: int = 200
    iterations: int = 30
    fs_range: tuple[int, int] = (5, 50)
    cv_folds: int = 5
    metric: str = "accuracy"
    select_k: int | None = None
    inner_rounds: int = 100
    inner_depth: int = 4
    run_rfe: bool = True

    def __post_init__(self):
        for r in self.rankers:
            if r not in RANKERS:
                raise ConfigError(f"cast.rankers: unknown ranker {r!r}")


@dataclass(frozen=True)
class AnomalySettings:
    portfolio: tuple[tuple, ...] | str = "default"   # "default" or [[family, ...params]]
    t_normal: float = -5.0
    t_failure: float = 0.1
    adaptive: bool = False
    target_quantile: float = 0.1
    exclude: bool = True
    grades: bool = False

    def __post_init__(self):
        if isinstance(self.portfolio, str):
            if self.portfolio != "default":
                raise ConfigError("anomaly.portfolio must be 'default' or a list")
        else:
            for entry in self.portfolio:
                if not entry or entry[0] not in FAMILIES:
                    raise ConfigError(f"anomaly.portfolio: bad entry {entry!r}")


@dataclass(frozen=True)
class ClassifySettings:
    arms: tuple[str, ...] = ARM_NAMES
    optimizer: str = "bohb"
    n_trials: int = 30          # random/tpe budget
    R: float = 27.0             # multi-fidelity: max boosting rounds
    eta: int = 3
    n_passes: int = 1
    cv_folds: int = 3
    metric: str = "f1"
    rounds_range: tuple[int, int] = (30, 120)

    def __post_init__(self):
        if len(self.arms) < 2:
            raise ConfigError("classify.arms needs at least 2 arms")
        for a in self.arms:
            if a not in ARM_NAMES:
                raise ConfigError(f"classify.arms: unknown arm {a!r}")
        if len(set(self.arms)) != len(self.arms):
            raise ConfigError("classify.arms must be unique")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"classify.optimizer must be one of {OPTIMIZERS}")
        if self.metric not in ("f1", "accuracy"):
            raise ConfigError("classify.metric must be 'f1' or 'accuracy'")


@dataclass(frozen=True)
class PipelineConfig:
    stages: tuple[str, ...] = STAGES
    data: DataConfig = field(default_factory=DataConfig)
    imputer: ImputerConfig = field(default_factory=ImputerConfig)
    features: FeatureSettings = field(default_factory=FeatureSettings)
    cast: CastSettings = field(default_factory=CastSettings)
    anomaly: AnomalySettings = field(default_factory=AnomalySettings)
    classify: ClassifySettings = field(default_factory=ClassifySettings)
    out: str = "runs/latest"
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        for s in self.stages:
            if s not in STAGES:
                raise ConfigError(f"unknown stage {s!r}; choose from {STAGES}")
        if len(set(self.stages)) != len(self.stages):
            raise ConfigError("stages must be unique")
        enabled = set(self.stages)
        for s in self.stages:
            missing = [p for p in _PREREQUISITES[s] if p not in enabled]
            if missing:
                raise ConfigError(
                    f"stage {s!r} requires {missing} to be enabled")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    def enabled(self, stage: str) -> bool:
        return stage in self.stages


_SECTION_TYPES = {
    "data": DataConfig,
    "imputer": ImputerConfig,
    "features": FeatureSettings,
    "cast": CastSettings,
    "anomaly": AnomalySettings,
    "classify": ClassifySettings,
}


def _coerce(value, annotation):
    """JSON lists arrive as lists; tuple-typed fields store tuples."""
    if isinstance(value, list):
        return tuple(_coerce(v, None) for v in value)
    return value


def _build_section(cls, payload: dict, path: str):
    if not isinstance(payload, dict):
        raise ConfigError(f"{path} must be an object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(payload) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} under {path!r}")
    kwargs = {k: _coerce(v, known[k].type) for k, v in payload.items()}
    return cls(**kwargs)


def config_from_dict(payload: dict) -> PipelineConfig:
    """Build a validated PipelineConfig; unknown keys anywhere are errors."""
    if not isinstance(payload, dict):
        raise ConfigError("config root must be an object")
    top_fields = {f.name for f in fields(PipelineConfig)}
    unknown = sorted(set(payload) - top_fields)
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {unknown}")
    kwargs = {}
    for key, value in payload.items():
        if key in _SECTION_TYPES:
            kwargs[key] = _build_section(_SECTION_TYPES[key], value, key)
        else:
            kwargs[key] = _coerce(value, None)
    return PipelineConfig(**kwargs)


def load_config(path) -> PipelineConfig:
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    return config_from_dict(payload)


def config_to_dict(cfg: PipelineConfig) -> dict:
    return dataclasses.asdict(cfg)
