from .ablation import AblationPlan, ArmResult, arm_space, build_spec, fit_arm, run_ablation
from .config import (AnomalySettings, CastSettings, ClassifySettings,
                     DataConfig, FeatureSettings, ImputerConfig,
                     PipelineConfig, STAGES, config_from_dict, config_to_dict,
                     load_config)
from .reports import RunReport, write_manifest
from .runner import run_pipeline

__all__ = [
    "AblationPlan", "ArmResult", "arm_space", "build_spec", "fit_arm",
    "run_ablation", "AnomalySettings", "CastSettings", "ClassifySettings",
    "DataConfig", "FeatureSettings", "ImputerConfig", "PipelineConfig",
    "STAGES", "config_from_dict", "config_to_dict", "load_config",
    "RunReport", "write_manifest", "run_pipeline",
]
