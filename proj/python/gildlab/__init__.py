"""Python access to the GILD library: configs, training runs, environments and analysis."""

from ._core import (
    Actor,
    ConfigError,
    Env,
    NumericError,
    ParseError,
    RunConfig,
    ShapeError,
    config_keys,
    evaluate,
    kl_to_behavior,
    load_actor,
    normalized_score,
    pca_path,
    save_actor,
    train,
)

__all__ = [
    "Actor",
    "ConfigError",
    "Env",
    "NumericError",
    "ParseError",
    "RunConfig",
    "ShapeError",
    "config_keys",
    "evaluate",
    "kl_to_behavior",
    "load_actor",
    "normalized_score",
    "pca_path",
    "save_actor",
    "train",
]
