"""TA prediction: closed-form path-loss inversion and L2Boost regression.

The ML predictor regresses the current UE-BS distance in meters; the TA is
obtained by quantizing that estimate, so the floor is applied exactly once.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import D_MIN
from .exceptions import DataError, ModelEvaluationError, UndefinedRateError
from .geometry import CellConfig, dequantize_ta, quantize_ta
from .learners import MODEL_FORMAT_VERSION, StumpEnsemble, TrainOptions, model_from_json, train_l2boost


@dataclass(frozen=True)
class PredictorInput:
    tau_q_prev: int
    delta_p_db: float
    # (tau_q, rsrp_dbm) pairs, oldest first; the last pair is the (i-1)th instant
    history: tuple = ()
    k_train: float = float("nan")
    k_system: float = float("nan")

    def __post_init__(self):
        if self.tau_q_prev < 0 or any(t < 0 for t, _ in self.history):
            raise ValueError("TA values must be non-negative")

    @property
    def rsrp_curr_dbm(self) -> float:
        if not self.history:
            raise ModelEvaluationError("current RSRP needs the previous RSRP in the history")
        return self.history[-1][1] - self.delta_p_db


@dataclass(frozen=True)
class PredictedTa:
    tau_q_hat: int
    d_hat: float
    low_confidence: bool = False


def equation_distance(tau_q_prev, delta_p, k: float, cfg: CellConfig):
    """Vectorized ``d_hat = 10 ** (delta_p / (10 k)) * d_prev`` clamped to ``[0, r_cell]``.

    Returns ``(d_hat, low_confidence)``; ``low_confidence`` marks rows where
    the held TA was zero and ``d_prev`` was replaced by the clamp floor.
    """
    d_prev = dequantize_ta(np.asarray(tau_q_prev), cfg)
    return equation_distance_from(d_prev, delta_p, k, cfg)


def equation_distance_from(d_prev, delta_p, k: float, cfg: CellConfig):
    d_prev = np.asarray(d_prev, dtype=float)
    low = d_prev <= 0
    d_prev = np.where(low, D_MIN, d_prev)
    d_hat = np.power(10.0, np.asarray(delta_p, dtype=float) / (10.0 * k)) * d_prev
    return np.clip(d_hat, 0.0, cfg.r_cell), low


def predict_equation(inp: PredictorInput, k: float, cfg: CellConfig) -> PredictedTa:
    if not k > 0:
        raise ValueError("k must be positive")
    d_hat, low = equation_distance(inp.tau_q_prev, inp.delta_p_db, k, cfg)
    d_hat = float(d_hat)
    return PredictedTa(quantize_ta(d_hat, cfg), d_hat, bool(low))


@dataclass(frozen=True)
class PredictorModel:
    regressor: StumpEnsemble
    k_train: float
    history_len: int = 1
    cfg: CellConfig = field(default_factory=CellConfig)

    def predict_distance(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != 2 * self.history_len:
            raise ModelEvaluationError(f"expected {2 * self.history_len} features for history length {self.history_len}")
        return np.clip(self.regressor.decision_function(X), 0.0, self.cfg.r_cell)

    def to_json(self) -> dict:
        return {"model_type": "predictor", "version": MODEL_FORMAT_VERSION, "method": "l2boost",
                "k_train": self.k_train, "history_len": self.history_len, "cell": self.cfg.to_json(),
                "regressor": self.regressor.to_json()}

    @classmethod
    def from_json(cls, doc: dict) -> "PredictorModel":
        if doc.get("model_type") != "predictor":
            raise DataError("not a predictor model file")
        return cls(model_from_json(doc["regressor"]), float(doc["k_train"]), int(doc["history_len"]),
                   CellConfig.from_json(doc.get("cell", {})))

    @classmethod
    def load(cls, path) -> "PredictorModel":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def train_predictor(X, d_target, k_train: float, history_len: int, cfg: CellConfig, opts: TrainOptions = TrainOptions()):
    regressor, mse = train_l2boost(X, d_target, opts)
    return PredictorModel(regressor, k_train, history_len, cfg), mse


def ml_features(inp: PredictorInput, history_len: int) -> np.ndarray:
    """``(tau_q[i-j], rsrp[i-j+1])`` for ``j = 1..K`` with RSRP rescaled to the training exponent."""
    if len(inp.history) != history_len:
        raise ModelEvaluationError(f"history has {len(inp.history)} entries, model expects {history_len}")
    ratio = inp.k_train / inp.k_system
    rsrp_newer = [inp.rsrp_curr_dbm] + [p for _, p in reversed(inp.history)][:-1]
    taus = [t for t, _ in reversed(inp.history)]
    row = []
    for tau, rsrp in zip(taus, rsrp_newer):
        row += [float(tau), rsrp * ratio]
    return np.array([row])


def predict_ml(inp: PredictorInput, model: PredictorModel, cfg: CellConfig | None = None) -> PredictedTa:
    cfg = model.cfg if cfg is None else cfg
    d_hat = float(np.clip(model.predict_distance(ml_features(inp, model.history_len))[0], 0.0, cfg.r_cell))
    return PredictedTa(quantize_ta(d_hat, cfg), d_hat)


def prediction_accuracy(predictions, cfg: CellConfig) -> float:
    """Fraction of ``(d_hat, d_true)`` pairs within the permissible movement (boundary counts as accurate)."""
    pairs = np.asarray(predictions, dtype=float).reshape(-1, 2) if len(predictions) else np.zeros((0, 2))
    if pairs.shape[0] == 0:
        raise UndefinedRateError("prediction accuracy of an empty set")
    err = np.abs(pairs[:, 1] - pairs[:, 0])
    x = cfg.delta_d_per - err
    sgn = np.where(x == 0, 1.0, np.sign(x))
    return float(np.sum(1.0 + sgn) / (2.0 * pairs.shape[0]))


@dataclass(frozen=True)
class UeTaState:
    """What one UE holds between PUR occasions.

    ``history`` keeps ``(tau_q, rsrp_dbm)`` pairs for the last ``history_len``
    instants at which the BS confirmed the TA; the held TA is always the most
    recent BS-provided value, never a prediction.
    """

    held_tau: int
    history: tuple
    history_len: int = 1
    successes: int = 0
    reactive_fallbacks: int = 0

    @classmethod
    def initial(cls, bs_tau: int, rsrp_dbm: float, history_len: int = 1) -> "UeTaState":
        return cls(int(bs_tau), ((int(bs_tau), float(rsrp_dbm)),), history_len)


def update_on_success(state: UeTaState, bs_provided_tau: int, rsrp_dbm: float) -> UeTaState:
    """Replace the held TA with the BS value and push it onto the history."""
    if bs_provided_tau < 0:
        raise ValueError("bs_provided_tau must be non-negative")
    history = (state.history + ((int(bs_provided_tau), float(rsrp_dbm)),))[-state.history_len:]
    return replace(state, held_tau=int(bs_provided_tau), history=history, successes=state.successes + 1)


def record_failure(state: UeTaState) -> UeTaState:
    """A PUR attempt failed: no TA comes back, so only the fallback counter moves."""
    return replace(state, reactive_fallbacks=state.reactive_fallbacks + 1)


@dataclass(frozen=True)
class TraceStep:
    d_true: float
    d_hat: float
    tau_q_hat: int
    input_tau: int
    success: bool


def run_trace(state: UeTaState, positions, rsrp_values, predict_fn, cfg: CellConfig):
    """Walk one UE through successive PUR occasions.

    ``predict_fn(state, rsrp_dbm) -> PredictedTa`` makes the prediction from
    the held state and the new RSRP. A transmission succeeds when the implied
    distance error is within the permissible movement; the BS then returns the
    true quantized TA. Returns ``(final_state, steps)``.
    """
    steps = []
    for d_true, rsrp in zip(positions, rsrp_values):
        pred = predict_fn(state, float(rsrp))
        ok = abs(float(d_true) - pred.d_hat) <= cfg.delta_d_per
        steps.append(TraceStep(float(d_true), pred.d_hat, pred.tau_q_hat, state.held_tau, ok))
        state = update_on_success(state, quantize_ta(float(d_true), cfg), float(rsrp)) if ok else record_failure(state)
    return state, steps
