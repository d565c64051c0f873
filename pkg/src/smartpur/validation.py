"""TA validation: legacy and enhanced RSRP thresholds, and ML-aided validation.

Sign convention: ``delta_p`` is ``rsrp_prev - rsrp_curr`` in dB, positive when
the UE moved away from the BS. Thresholds use the dB slope ``10 k`` per
decade of distance.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array

from .channel import D_MIN, RsrpObservation, scale_delta_rsrp
from .exceptions import DataError, ModelEvaluationError
from .geometry import CellConfig, dequantize_ta
from .learners import MODEL_FORMAT_VERSION, LinearSvmModel, StumpEnsemble, model_from_json

LEGACY = "legacy"
ENHANCED = "enhanced"
INVALID_TA = math.inf


def margin_bounds(mode: str, k: float, cfg: CellConfig) -> tuple[float, float]:
    """Upper limits ``(eps_pos_max, eps_neg_max)`` on the error margins, in dB."""
    slope = 10.0 * k
    ratio = cfg.delta_d_per / cfg.r_cell
    if mode == LEGACY:
        if not cfg.r_cell > cfg.delta_d_per:
            raise ValueError("legacy margin bounds need r_cell > delta_d_per")
        return slope * math.log10(1.0 + ratio), -slope * math.log10(1.0 - ratio)
    if mode == ENHANCED:
        if not cfg.r_cell > 2.0 * cfg.delta_d_per:
            raise ValueError("enhanced margin bounds need r_cell > 2 * delta_d_per")
        inner = cfg.delta_d_per / (cfg.r_cell - cfg.delta_d_per)
        return -slope * math.log10(1.0 - ratio), -slope * math.log10(1.0 - inner)
    raise ValueError(f"unknown threshold mode {mode!r}")


@dataclass(frozen=True)
class ThresholdParams:
    k: float
    eps_pos: float = 0.0
    eps_neg: float = 0.0
    mode: str = ENHANCED
    cfg: CellConfig = field(default_factory=CellConfig)

    def __post_init__(self):
        if self.mode not in (LEGACY, ENHANCED):
            raise ValueError(f"unknown threshold mode {self.mode!r}")
        if not self.k > 0:
            raise ValueError("k must be positive")
        if self.eps_pos < 0 or self.eps_neg < 0:
            raise ValueError("error margins must be non-negative")
        try:
            pos_max, neg_max = margin_bounds(self.mode, self.k, self.cfg)
        except ValueError:
            # bounds undefined for this cell size; margins are left unchecked
            return
        if self.eps_pos > 0 and not self.eps_pos < pos_max:
            raise ValueError(f"eps_pos={self.eps_pos} must be below {pos_max:.4f} dB in {self.mode} mode")
        if self.eps_neg > 0 and not self.eps_neg < neg_max:
            raise ValueError(f"eps_neg={self.eps_neg} must be below {neg_max:.4f} dB in {self.mode} mode")

    @classmethod
    def with_default_margins(cls, k: float, mode: str, cfg: CellConfig, fraction: float = 0.5) -> "ThresholdParams":
        """Margins set to ``fraction`` of the mode's upper bounds."""
        pos_max, neg_max = margin_bounds(mode, k, cfg)
        return cls(k, fraction * pos_max, fraction * neg_max, mode, cfg)

    def to_json(self) -> dict:
        return {"model_type": "threshold", "version": MODEL_FORMAT_VERSION, "mode": self.mode, "k": self.k,
                "eps_pos_db": self.eps_pos, "eps_neg_db": self.eps_neg, "cell": self.cfg.to_json()}

    @classmethod
    def from_json(cls, doc: dict) -> "ThresholdParams":
        return cls(float(doc["k"]), float(doc["eps_pos_db"]), float(doc["eps_neg_db"]), doc["mode"],
                   CellConfig.from_json(doc.get("cell", {})))


@dataclass(frozen=True)
class ValidationOutcome:
    ta_out: float  # the held TA when valid, INVALID_TA otherwise
    proactive_fallback: bool

    @property
    def valid(self) -> bool:
        return not self.proactive_fallback


def _outcome(valid: bool, tau_q_prev: int) -> ValidationOutcome:
    return ValidationOutcome(int(tau_q_prev), False) if valid else ValidationOutcome(INVALID_TA, True)


def thresholds(d_prev: float, params: ThresholdParams, need_neg: bool = True) -> tuple[float, float]:
    """Positive and negative RSRP-difference thresholds for a UE at ``d_prev``.

    The negative threshold only exists for ``d_prev > delta_d_per``; with
    ``need_neg=False`` it is reported as ``-inf`` there instead of raising.
    """
    cfg = params.cfg
    if not 0 < d_prev <= cfg.r_cell:
        raise ValueError(f"d_prev={d_prev} outside (0, r_cell]")
    slope = 10.0 * params.k
    ratio = cfg.delta_d_per / d_prev
    pos = slope * math.log10(1.0 + ratio) - params.eps_pos
    if ratio < 1.0:
        neg = slope * math.log10(1.0 - ratio) + params.eps_neg
    elif need_neg:
        raise ValueError("negative threshold undefined for d_prev <= delta_d_per")
    else:
        neg = -math.inf
    return pos, neg


def threshold_decisions(d_prev, delta_p, params: ThresholdParams) -> np.ndarray:
    """Vectorized validity decisions for UE distances ``d_prev`` (meters) and RSRP differences."""
    cfg = params.cfg
    d = np.clip(np.asarray(d_prev, dtype=float), D_MIN, cfg.r_cell)
    dp = np.asarray(delta_p, dtype=float)
    slope = 10.0 * params.k
    ratio = cfg.delta_d_per / d
    pos = slope * np.log10(1.0 + ratio) - params.eps_pos
    with np.errstate(divide="ignore", invalid="ignore"):
        neg = np.where(ratio < 1.0, slope * np.log10(np.maximum(1.0 - ratio, 0.0)) + params.eps_neg, -np.inf)
    two_sided = (dp > neg) & (dp < pos)
    if params.mode == LEGACY:
        return two_sided
    near_bs = d < cfg.delta_d_per
    near_edge = d > cfg.r_cell - cfg.delta_d_per
    return np.where(near_bs, dp < pos, np.where(near_edge, dp > neg, two_sided))


def _d_prev_from_ta(tau_q_prev, cfg: CellConfig):
    d = dequantize_ta(tau_q_prev, cfg)
    if np.any(np.asarray(d) > cfg.r_cell):
        warnings.warn("TA implies a distance beyond the cell radius; clamping to r_cell", RuntimeWarning, stacklevel=3)
    return d


def validate_threshold(obs: RsrpObservation, tau_q_prev: int, params: ThresholdParams) -> ValidationOutcome:
    """Threshold validation of the held TA, using only what the UE knows."""
    if tau_q_prev < 0:
        raise ValueError("tau_q_prev must be non-negative")
    d_prev = _d_prev_from_ta(tau_q_prev, params.cfg)
    valid = bool(threshold_decisions(d_prev, obs.delta_p_db, params))
    return _outcome(valid, tau_q_prev)


@dataclass(frozen=True)
class ValidatorModel:
    """Trained classifier plus the context needed to feed it."""

    method: str  # "svm" or "adaboost"
    classifier: object  # LinearSvmModel or StumpEnsemble
    k_train: float
    cfg: CellConfig = field(default_factory=CellConfig)

    def features(self, tau_q_prev, delta_p, k_system: float) -> np.ndarray:
        d_prev = dequantize_ta(np.atleast_1d(tau_q_prev), self.cfg)
        return np.column_stack([d_prev, scale_delta_rsrp(np.atleast_1d(np.asarray(delta_p, float)), self.k_train, k_system)])

    def decide(self, X) -> np.ndarray:
        """Validity per row of feature matrix ``X``; a zero score counts as invalid."""
        return np.asarray(self.classifier.decision_function(X)) > 0

    def to_json(self) -> dict:
        return {"model_type": "validator", "version": MODEL_FORMAT_VERSION, "method": self.method,
                "k_train": self.k_train, "cell": self.cfg.to_json(), "classifier": self.classifier.to_json()}

    @classmethod
    def from_json(cls, doc: dict) -> "ValidatorModel":
        if doc.get("model_type") != "validator":
            raise DataError("not a validator model file")
        return cls(doc["method"], model_from_json(doc["classifier"]), float(doc["k_train"]),
                   CellConfig.from_json(doc.get("cell", {})))


def validate_ml(obs: RsrpObservation, tau_q_prev: int, model: ValidatorModel, k_train: float, k_system: float) -> ValidationOutcome:
    """Classifier-based validation; the RSRP difference is rescaled to the training exponent first."""
    if model is None or not isinstance(model.classifier, (LinearSvmModel, StumpEnsemble)):
        raise ModelEvaluationError("validator model is missing or untrained")
    if tau_q_prev < 0:
        raise ValueError("tau_q_prev must be non-negative")
    X = np.array([[dequantize_ta(tau_q_prev, model.cfg), scale_delta_rsrp(obs.delta_p_db, k_train, k_system)]])
    return _outcome(bool(model.decide(X)[0]), tau_q_prev)


def load_validator(path):
    """Read a validator parameter or model file (threshold JSON or trained classifier JSON)."""
    with open(path) as fh:
        doc = json.load(fh)
    kind = doc.get("model_type")
    if kind == "threshold":
        return ThresholdParams.from_json(doc)
    if kind == "validator":
        return ValidatorModel.from_json(doc)
    raise DataError(f"{path}: not a validator file (model_type={kind!r})")


class ThresholdValidator(ClassifierMixin, BaseEstimator):
    """Estimator wrapper around the threshold rules.

    ``X`` has two columns, ``(d_prev, delta_p)``. ``fit`` only resolves the
    default margins; no data is needed.
    """

    def __init__(self, k=3.9, mode=ENHANCED, eps_pos=None, eps_neg=None, r_cell=1500.0, delta_d_per=702.0):
        self.k = k
        self.mode = mode
        self.eps_pos = eps_pos
        self.eps_neg = eps_neg
        self.r_cell = r_cell
        self.delta_d_per = delta_d_per

    def fit(self, X=None, y=None):
        cfg = CellConfig(r_cell=self.r_cell, delta_d_per=self.delta_d_per)
        defaults = ThresholdParams.with_default_margins(self.k, self.mode, cfg)
        self.params_ = ThresholdParams(
            self.k,
            defaults.eps_pos if self.eps_pos is None else self.eps_pos,
            defaults.eps_neg if self.eps_neg is None else self.eps_neg,
            self.mode, cfg,
        )
        self.classes_ = np.array([-1, 1])
        return self

    def predict(self, X):
        X = check_array(X, dtype=float)
        if X.shape[1] != 2:
            raise ModelEvaluationError("expected columns (d_prev, delta_p)")
        return np.where(threshold_decisions(X[:, 0], X[:, 1], self.params_), 1, -1)
