"""Timing-advance validation and prediction for preconfigured uplink resources.

The public API is re-exported here; the ``smartpur`` command wraps it for
batch experiments.
"""
from .channel import (
    D_MIN, PRESETS, MeasurementConfig, PathLossModel, RadioConfig, RsrpObservation, delta_rsrp,
    mean_rsrp_dbm, measure_rsrp, path_loss_preset, sample_rsrp_chain, scale_delta_rsrp,
)
from .datagen import DatasetSpec, LabeledRow, TransitionDataset, derive_seed, generate_dataset, movement_exceedance_rate
from .exceptions import (
    ConfigError, DataError, ModelEvaluationError, SmartPurError, TrainingError, UndefinedRateError,
)
from .geometry import CellConfig, TransitionSample, dequantize_ta, label_validity, quantize_ta
from .learners import (
    AdaBoostStumpClassifier, CostSensitiveLinearSVC, L2BoostRegressor, LinearSvmModel, StumpEnsemble,
    TrainOptions, train_adaboost, train_l2boost, train_linear_svm,
)
from .metrics import (
    ConfusionCounts, FallbackReport, confusion_metrics, fallback_stap, fallback_stav_closed_form, table3_check,
)
from .prediction import (
    PredictedTa, PredictorInput, PredictorModel, UeTaState, predict_equation, predict_ml, prediction_accuracy,
    record_failure, run_trace, train_predictor, update_on_success,
)
from .validation import (
    ENHANCED, LEGACY, ThresholdParams, ThresholdValidator, ValidationOutcome, ValidatorModel, margin_bounds,
    threshold_decisions, validate_ml, validate_threshold,
)

__all__ = [
    "AdaBoostStumpClassifier", "CellConfig", "ConfigError", "confusion_metrics", "ConfusionCounts",
    "CostSensitiveLinearSVC", "D_MIN", "DataError", "DatasetSpec", "delta_rsrp", "dequantize_ta",
    "derive_seed", "ENHANCED", "fallback_stap", "fallback_stav_closed_form", "FallbackReport",
    "generate_dataset", "L2BoostRegressor", "label_validity", "LabeledRow", "LEGACY", "LinearSvmModel",
    "margin_bounds", "mean_rsrp_dbm", "measure_rsrp", "MeasurementConfig", "ModelEvaluationError",
    "movement_exceedance_rate", "path_loss_preset", "PathLossModel", "predict_equation", "predict_ml",
    "PredictedTa", "prediction_accuracy", "PredictorInput", "PredictorModel", "PRESETS", "quantize_ta",
    "RadioConfig", "record_failure", "RsrpObservation", "run_trace", "sample_rsrp_chain", "scale_delta_rsrp",
    "SmartPurError", "StumpEnsemble", "table3_check", "threshold_decisions", "ThresholdParams",
    "ThresholdValidator", "train_adaboost", "train_l2boost", "train_linear_svm", "train_predictor",
    "TrainingError", "TrainOptions", "TransitionDataset", "TransitionSample", "UeTaState",
    "UndefinedRateError", "update_on_success", "validate_ml", "validate_threshold", "ValidationOutcome",
    "ValidatorModel",
]

__version__ = "0.1.0"
