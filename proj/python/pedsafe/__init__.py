"""Pedestrian collision risk toolkit.

The heavy lifting lives in the compiled ``_core`` module; this package
re-exports it.
"""

from ._core import (
    Model,
    PedsafeError,
    fit_boosted,
    fit_forest,
    load_model,
    point_in_polygon,
    report,
    roc_auc,
    run_command,
    smote,
    stratified_split,
)

__all__ = [
    "Model",
    "PedsafeError",
    "fit_boosted",
    "fit_forest",
    "load_model",
    "point_in_polygon",
    "report",
    "roc_auc",
    "run_command",
    "smote",
    "stratified_split",
]
