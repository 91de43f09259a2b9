"""State-relabeling adversarial active learning on feature-vector datasets."""

from .active import (
    LearningCurve,
    PoolState,
    Schedule,
    STRATEGIES,
    init_pools,
    oracle_label,
    run_experiment,
    select,
    train_sraal,
    train_target,
)
from .config import ExperimentConfig, config_from_dict, load_config
from .datasets import Dataset, SyntheticSpec, generate, load_csv
from .indicators import entropy_indicator, min_var, oui_score, sd_indicator, variance
from .kcenter import EmbeddingSet, covering_radius, greedy_kcenter
from .losses import LossWeights, disc_loss, gen_adv_loss, gen_total_loss, kl_gaussian
from .networks import Architecture, SraalParams, TargetParams

__version__ = "0.1.0"

__all__ = [
    "Architecture",
    "Dataset",
    "EmbeddingSet",
    "ExperimentConfig",
    "LearningCurve",
    "LossWeights",
    "PoolState",
    "STRATEGIES",
    "Schedule",
    "SraalParams",
    "SyntheticSpec",
    "TargetParams",
    "config_from_dict",
    "covering_radius",
    "disc_loss",
    "entropy_indicator",
    "gen_adv_loss",
    "gen_total_loss",
    "generate",
    "greedy_kcenter",
    "init_pools",
    "kl_gaussian",
    "load_config",
    "load_csv",
    "min_var",
    "oracle_label",
    "oui_score",
    "run_experiment",
    "sd_indicator",
    "select",
    "train_sraal",
    "train_target",
    "variance",
]
