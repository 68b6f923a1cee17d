from .model import (
    BONES,
    NUM_LANDMARKS,
    Expression,
    HeadModel,
    Personalization,
    evaluate_expression,
    evaluate_head,
    head_landmarks,
    load_head_model,
    save_head_model,
)
from .fitting import (
    FitConfig,
    RefineSchedule,
    chamfer_to_scan,
    default_schedule,
    fit_displacements,
    fit_head_pipeline,
    fit_rigid,
    fit_shape,
)
from .toy import toy_head_model

__all__ = [
    "BONES",
    "NUM_LANDMARKS",
    "Expression",
    "HeadModel",
    "Personalization",
    "evaluate_head",
    "evaluate_expression",
    "head_landmarks",
    "save_head_model",
    "load_head_model",
    "FitConfig",
    "RefineSchedule",
    "default_schedule",
    "fit_rigid",
    "fit_shape",
    "fit_displacements",
    "fit_head_pipeline",
    "chamfer_to_scan",
    "toy_head_model",
]
