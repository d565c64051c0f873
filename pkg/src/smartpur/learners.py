"""Small supervised learners: decision stumps, cost-weighted AdaBoost,
cost-weighted linear SVM and L2Boost regression.

Class labels follow one convention throughout: ``+1`` means the held TA is
valid, ``-1`` means it is invalid. The false-positive cost multiplies the
weight of the invalid (``-1``) class.

Each learner is exposed twice: as a plain function returning an immutable
model record (``train_adaboost`` and friends) and as a scikit-learn
compatible estimator wrapping that function.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import DataError, ModelEvaluationError, TrainingError

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainOptions:
    fp_cost_ratio: float = 5.0
    adaboost_rounds: int = 100
    l2boost_rounds: int = 200
    shrinkage: float = 0.1
    svm_c: float = 100.0
    svm_epochs: int = 200
    svm_degree: int = 3
    svm_lr: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.fp_cost_ratio > 0:
            raise ValueError("fp_cost_ratio must be positive")
        if not 0 < self.shrinkage <= 1:
            raise ValueError("shrinkage must lie in (0, 1]")
        for name in ("adaboost_rounds", "l2boost_rounds", "svm_epochs", "svm_degree"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not (self.svm_c > 0 and self.svm_lr > 0):
            raise ValueError("svm_c and svm_lr must be positive")


# ---------------------------------------------------------------------------
# model records


@dataclass(frozen=True)
class StumpEnsemble:
    """``bias + sum_m weight_m * (left_m if x[f_m] <= threshold_m else right_m)``."""

    feature_index: tuple = ()
    threshold: tuple = ()
    left_value: tuple = ()
    right_value: tuple = ()
    weights: tuple = ()
    bias: float = 0.0
    n_features: int = 0
    kind: str = "l2boost"

    @property
    def n_stumps(self) -> int:
        return len(self.weights)

    def decision_function(self, X) -> np.ndarray:
        X = _check_features(X, self.n_features)
        out = np.full(X.shape[0], float(self.bias))
        if not self.weights:
            return out
        f = np.asarray(self.feature_index, dtype=np.intp)
        t, lv, rv = np.asarray(self.threshold), np.asarray(self.left_value), np.asarray(self.right_value)
        w = np.asarray(self.weights)
        chunk = max(1, (1 << 21) // len(w))  # bound the (rows, stumps) leaf matrix
        for start in range(0, X.shape[0], chunk):
            rows = X[start:start + chunk]
            out[start:start + chunk] += np.where(rows[:, f] <= t, lv, rv) @ w
        return out

    def staged_decision_function(self, X):
        X = _check_features(X, self.n_features)
        out = np.full(X.shape[0], float(self.bias))
        yield out.copy()
        for f, t, lv, rv, w in zip(self.feature_index, self.threshold, self.left_value, self.right_value, self.weights):
            out += w * np.where(X[:, f] <= t, lv, rv)
            yield out.copy()

    def to_json(self) -> dict:
        return {
            "model_type": f"stump_ensemble/{self.kind}",
            "version": MODEL_FORMAT_VERSION,
            "n_features": self.n_features,
            "bias": self.bias,
            "stumps": [
                {"feature": int(f), "threshold": float(t), "left": float(lv), "right": float(rv), "weight": float(w)}
                for f, t, lv, rv, w in zip(self.feature_index, self.threshold, self.left_value, self.right_value, self.weights)
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "StumpEnsemble":
        stumps = doc["stumps"]
        return cls(
            tuple(int(s["feature"]) for s in stumps),
            tuple(float(s["threshold"]) for s in stumps),
            tuple(float(s["left"]) for s in stumps),
            tuple(float(s["right"]) for s in stumps),
            tuple(float(s["weight"]) for s in stumps),
            float(doc["bias"]),
            int(doc["n_features"]),
            doc["model_type"].split("/", 1)[1],
        )


@dataclass(frozen=True)
class LinearSvmModel:
    """Linear decision function over a fixed polynomial map of standardized features.

    ``degree=1`` is the plain linear SVM; higher degrees add all monomials of
    the standardized inputs up to that total degree.
    """

    w: tuple
    b: float
    feature_means: tuple
    feature_scales: tuple
    degree: int = 1

    def __post_init__(self):
        if len(self.feature_scales) != len(self.feature_means) or not all(s > 0 for s in self.feature_scales):
            raise ValueError("feature_scales must be positive, one per feature")

    @property
    def n_features(self) -> int:
        return len(self.feature_means)

    def expand(self, X) -> np.ndarray:
        X = _check_features(X, self.n_features)
        Z = (X - np.asarray(self.feature_means)) / np.asarray(self.feature_scales)
        return polynomial_features(Z, self.degree)

    def decision_function(self, X) -> np.ndarray:
        return self.expand(X) @ np.asarray(self.w) + self.b

    def to_json(self) -> dict:
        return {
            "model_type": "linear_svm",
            "version": MODEL_FORMAT_VERSION,
            "degree": self.degree,
            "w": list(self.w),
            "b": self.b,
            "feature_means": list(self.feature_means),
            "feature_scales": list(self.feature_scales),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "LinearSvmModel":
        return cls(
            tuple(float(v) for v in doc["w"]), float(doc["b"]),
            tuple(float(v) for v in doc["feature_means"]), tuple(float(v) for v in doc["feature_scales"]),
            int(doc["degree"]),
        )


def polynomial_features(Z: np.ndarray, degree: int) -> np.ndarray:
    cols = [
        np.prod(Z[:, combo], axis=1)
        for d in range(1, degree + 1)
        for combo in itertools.combinations_with_replacement(range(Z.shape[1]), d)
    ]
    return np.column_stack(cols) if cols else np.zeros((Z.shape[0], 0))


def _check_features(X, n_features: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != n_features:
        raise ModelEvaluationError(f"expected {n_features} features, got shape {X.shape}")
    return X


def predict(model, features) -> np.ndarray:
    """Raw score (classifiers) or regression value for each row of ``features``."""
    return model.decision_function(features)


# ---------------------------------------------------------------------------
# serialization


def model_to_json(model) -> str:
    return json.dumps(model.to_json(), indent=2, sort_keys=True)


def model_from_json(text_or_doc):
    doc = json.loads(text_or_doc) if isinstance(text_or_doc, str) else text_or_doc
    kind = doc.get("model_type", "")
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise DataError(f"unsupported model version {doc.get('version')!r}")
    if kind.startswith("stump_ensemble/"):
        return StumpEnsemble.from_json(doc)
    if kind == "linear_svm":
        return LinearSvmModel.from_json(doc)
    raise DataError(f"unknown model_type {kind!r}")


# ---------------------------------------------------------------------------
# training


class _SortedFeatures:
    """Per-feature sort orders and candidate split positions, computed once."""

    def __init__(self, X: np.ndarray):
        self.X = X
        self.order = [np.argsort(X[:, f], kind="stable") for f in range(X.shape[1])]
        self.sorted_x = [X[o, f] for f, o in enumerate(self.order)]
        # split after sorted position i is possible where x[i] < x[i+1]
        self.split_pos = [np.flatnonzero(np.diff(xs) > 0) for xs in self.sorted_x]

    def threshold(self, f: int, i: int) -> float:
        xs = self.sorted_x[f]
        return 0.5 * (xs[i] + xs[i + 1])


def _ensemble(stumps, bias, n_features, kind) -> StumpEnsemble:
    columns = [tuple(col) for col in zip(*stumps)] if stumps else [()] * 5
    return StumpEnsemble(*columns, bias=float(bias), n_features=n_features, kind=kind)


def _check_binary(y) -> np.ndarray:
    y = np.asarray(y)
    if y.dtype == bool:
        y = np.where(y, 1.0, -1.0)
    y = y.astype(float)
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise TrainingError("labels must be +1 (valid) / -1 (invalid) or boolean")
    if np.unique(y).size < 2:
        raise TrainingError("training data contains a single class")
    return y


def _class_costs(y: np.ndarray, fp_cost_ratio: float) -> np.ndarray:
    return np.where(y < 0, fp_cost_ratio, 1.0)


def _best_classification_stump(sf: _SortedFeatures, y: np.ndarray, w: np.ndarray):
    """Weighted-error-minimizing stump; ties go to the lowest feature, then lowest threshold."""
    best = None
    w_pos_total = w[y > 0].sum()
    w_neg_total = w[y < 0].sum()
    for f, order in enumerate(sf.order):
        pos = sf.split_pos[f]
        if pos.size == 0:
            continue
        ws, ys = w[order], y[order]
        pos_left = np.cumsum(np.where(ys > 0, ws, 0.0))[pos]
        neg_left = np.cumsum(np.where(ys < 0, ws, 0.0))[pos]
        err_a = neg_left + (w_pos_total - pos_left)  # left=+1, right=-1
        err_b = pos_left + (w_neg_total - neg_left)  # left=-1, right=+1
        ia, ib = int(np.argmin(err_a)), int(np.argmin(err_b))
        if (err_a[ia], ia) <= (err_b[ib], ib):
            i, err, lv = ia, err_a[ia], 1.0
        else:
            i, err, lv = ib, err_b[ib], -1.0
        if best is None or err < best[0]:
            best = (err, f, sf.threshold(f, pos[i]), lv)
    return best


def train_adaboost(X, y, opts: TrainOptions = TrainOptions()):
    """Discrete AdaBoost over decision stumps with cost-weighted initial sample weights.

    Returns ``(ensemble, round_errors)``; boosting stops early when no stump
    reaches weighted error below 0.5 or a stump classifies perfectly.
    """
    X = np.asarray(X, dtype=float)
    y = _check_binary(y)
    if not np.all(np.isfinite(X)):
        raise TrainingError("features must be finite")
    sf = _SortedFeatures(X)
    w = _class_costs(y, opts.fp_cost_ratio)
    w = w / w.sum()

    stumps, errors = [], []
    for _ in range(opts.adaboost_rounds):
        best = _best_classification_stump(sf, y, w)
        if best is None:
            break
        err, f, thr, lv = best
        eps = err / w.sum()
        if eps >= 0.5:
            break
        alpha = 0.5 * math.log((1.0 - max(eps, 1e-12)) / max(eps, 1e-12))
        stumps.append((f, thr, lv, -lv, alpha))
        errors.append(float(eps))
        h = np.where(X[:, f] <= thr, lv, -lv)
        w = w * np.exp(-alpha * y * h)
        w = w / w.sum()
        if eps <= 1e-12:
            break

    return _ensemble(stumps, 0.0, X.shape[1], "adaboost"), errors


def _svm_objective(P, y, c, lam, w, b) -> float:
    margin = 1.0 - y * (P @ w + b)
    return float(np.mean(c * np.maximum(0.0, margin)) + lam * (w @ w))


def train_linear_svm(X, y, opts: TrainOptions = TrainOptions()):
    """Cost-weighted soft-margin SVM by full-batch subgradient descent.

    Minimizes ``mean(c_i * hinge_i) + ||w||^2 / (2 C)`` where ``c_i`` is the
    false-positive cost on the invalid class, normalized to mean one. Epoch
    ``t`` tries the step ``svm_lr / sqrt(t + 1)`` and halves it until the
    objective does not increase. Returns ``(model, objective_history)``.
    """
    X = np.asarray(X, dtype=float)
    y = _check_binary(y)
    if not np.all(np.isfinite(X)):
        raise TrainingError("features must be finite")
    means = X.mean(axis=0)
    scales = X.std(axis=0)
    scales = np.where(scales > 0, scales, 1.0)
    P = polynomial_features((X - means) / scales, opts.svm_degree)
    n, m = P.shape
    c = _class_costs(y, opts.fp_cost_ratio)
    c = c / c.mean()
    lam = 1.0 / (2.0 * opts.svm_c)

    w, b = np.zeros(m), 0.0
    J = _svm_objective(P, y, c, lam, w, b)
    history = [J]
    for t in range(opts.svm_epochs):
        active = (1.0 - y * (P @ w + b)) > 0
        coef = c * active * y
        gw = -(coef @ P) / n + 2.0 * lam * w
        gb = -coef.mean()
        step = opts.svm_lr / math.sqrt(t + 1)
        for _ in range(40):
            w_new, b_new = w - step * gw, b - step * gb
            J_new = _svm_objective(P, y, c, lam, w_new, b_new)
            if J_new <= J:
                w, b, J = w_new, b_new, J_new
                break
            step *= 0.5
        history.append(J)

    model = LinearSvmModel(tuple(w.tolist()), float(b), tuple(means.tolist()), tuple(scales.tolist()), opts.svm_degree)
    return model, history


def _best_regression_stump(sf: _SortedFeatures, r: np.ndarray):
    """Least-squares stump on residuals ``r``: returns ``(gain, f, threshold, left_mean, right_mean)``."""
    best = None
    n = r.size
    total = r.sum()
    for f, order in enumerate(sf.order):
        pos = sf.split_pos[f]
        if pos.size == 0:
            continue
        s_left = np.cumsum(r[order])[pos]
        n_left = pos + 1.0
        n_right = n - n_left
        s_right = total - s_left
        gain = s_left**2 / n_left + s_right**2 / n_right
        i = int(np.argmax(gain))
        if best is None or gain[i] > best[0]:
            best = (gain[i], f, sf.threshold(f, pos[i]), s_left[i] / n_left[i], s_right[i] / n_right[i])
    return best


def train_l2boost(X, y, opts: TrainOptions = TrainOptions()):
    """Stagewise least-squares boosting of regression stumps.

    Starts from the target mean and adds ``shrinkage`` times the best
    residual-fitting stump each round. Returns ``(ensemble, mse_history)``
    where ``mse_history[m]`` is the training MSE after ``m`` stumps.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[0] != y.size:
        raise TrainingError("L2Boost needs a non-empty 2-D feature matrix matching the targets")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise TrainingError("features and targets must be finite")
    sf = _SortedFeatures(X)
    bias = float(y.mean())
    fitted = np.full(y.size, bias)
    history = [float(np.mean((y - fitted) ** 2))]
    stumps = []
    for _ in range(opts.l2boost_rounds):
        best = _best_regression_stump(sf, y - fitted)
        if best is None:
            break
        _, f, thr, lv, rv = best
        stumps.append((f, thr, lv, rv, opts.shrinkage))
        fitted = fitted + opts.shrinkage * np.where(X[:, f] <= thr, lv, rv)
        history.append(float(np.mean((y - fitted) ** 2)))
    return _ensemble(stumps, bias, X.shape[1], "l2boost"), history


# ---------------------------------------------------------------------------
# scikit-learn estimators


class _BinaryClassifier(ClassifierMixin, BaseEstimator):
    def _fit_labels(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        y = _check_binary(y)
        self.classes_ = np.array([-1, 1])
        self.n_features_in_ = X.shape[1]
        return X, y

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        return self.model_.decision_function(check_array(X, dtype=float))

    def predict(self, X):
        # ties go to "invalid": a false positive is the costlier error
        return np.where(self.decision_function(X) > 0, 1, -1)

    def _options(self) -> TrainOptions:
        raise NotImplementedError


class AdaBoostStumpClassifier(_BinaryClassifier):
    def __init__(self, n_rounds=100, fp_cost_ratio=5.0, random_state=0):
        self.n_rounds = n_rounds
        self.fp_cost_ratio = fp_cost_ratio
        self.random_state = random_state

    def fit(self, X, y):
        X, y = self._fit_labels(X, y)
        opts = TrainOptions(fp_cost_ratio=self.fp_cost_ratio, adaboost_rounds=self.n_rounds, seed=self.random_state)
        self.model_, self.round_errors_ = train_adaboost(X, y, opts)
        return self


class CostSensitiveLinearSVC(_BinaryClassifier):
    def __init__(self, C=100.0, fp_cost_ratio=5.0, epochs=200, degree=3, learning_rate=1.0, random_state=0):
        self.C = C
        self.fp_cost_ratio = fp_cost_ratio
        self.epochs = epochs
        self.degree = degree
        self.learning_rate = learning_rate
        self.random_state = random_state

    def fit(self, X, y):
        X, y = self._fit_labels(X, y)
        opts = TrainOptions(fp_cost_ratio=self.fp_cost_ratio, svm_c=self.C, svm_epochs=self.epochs,
                            svm_degree=self.degree, svm_lr=self.learning_rate, seed=self.random_state)
        self.model_, self.objective_history_ = train_linear_svm(X, y, opts)
        return self


class L2BoostRegressor(RegressorMixin, BaseEstimator):
    def __init__(self, n_rounds=200, shrinkage=0.1):
        self.n_rounds = n_rounds
        self.shrinkage = shrinkage

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        self.n_features_in_ = X.shape[1]
        opts = TrainOptions(l2boost_rounds=self.n_rounds, shrinkage=self.shrinkage)
        self.model_, self.mse_history_ = train_l2boost(X, y, opts)
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        return self.model_.decision_function(check_array(X, dtype=float))
