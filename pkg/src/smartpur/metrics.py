"""Confusion rates and fallback-rate algebra for TA validation and prediction."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import UndefinedRateError

STAV = "sTAV"
STAP = "sTAP"


@dataclass(frozen=True)
class ConfusionCounts:
    """Outcome counts with "TA valid" as the positive class."""

    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("counts must be non-negative")

    @property
    def n(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @property
    def p_tp(self) -> float:
        if self.tp + self.fn == 0:
            raise UndefinedRateError("no valid-TA samples")
        return self.tp / (self.tp + self.fn)

    @property
    def p_tn(self) -> float:
        if self.tn + self.fp == 0:
            raise UndefinedRateError("no invalid-TA samples")
        return self.tn / (self.tn + self.fp)

    @property
    def p_fp(self) -> float:
        return 1.0 - self.p_tn

    @property
    def p_fn(self) -> float:
        return 1.0 - self.p_tp

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.tn + other.tn, self.fp + other.fp, self.fn + other.fn)

    def to_json(self) -> dict:
        doc = asdict(self)
        for name in ("p_tp", "p_tn", "p_fp", "p_fn"):
            try:
                doc[name] = getattr(self, name)
            except UndefinedRateError:
                doc[name] = None
        return doc


def confusion_metrics(decisions, labels) -> ConfusionCounts:
    """Count outcomes of validity ``decisions`` against ground-truth ``labels`` (both boolean)."""
    d = np.asarray(decisions, dtype=bool)
    y = np.asarray(labels, dtype=bool)
    if d.shape != y.shape:
        raise ValueError(f"decisions and labels differ in length ({d.size} vs {y.size})")
    if d.size == 0:
        raise UndefinedRateError("no samples")
    return ConfusionCounts(
        tp=int(np.sum(d & y)), tn=int(np.sum(~d & ~y)), fp=int(np.sum(d & ~y)), fn=int(np.sum(~d & y))
    )


@dataclass(frozen=True)
class FallbackReport:
    p_exceed: float
    p_f_pro: float
    p_f_re: float
    p_f_total: float
    method: str

    def to_json(self) -> dict:
        return asdict(self)


def _check_prob(name, value):
    v = np.asarray(value, dtype=float)
    if not np.all((v >= 0.0) & (v <= 1.0)):
        raise ValueError(f"{name}={value} is not a probability")


def fallback_stav_closed_form(p_exceed: float, p_tn: float, p_fn: float) -> FallbackReport:
    """Proactive, reactive and total fallback of a validator.

    The total is computed both as the sum of the two parts and in the
    simplified form ``p_exceed + (1 - p_exceed) p_fn``; the two must agree.
    Array inputs broadcast and give array fields.
    """
    for name, v in (("p_exceed", p_exceed), ("p_tn", p_tn), ("p_fn", p_fn)):
        _check_prob(name, v)
    pro = p_exceed * p_tn + (1.0 - p_exceed) * p_fn
    re = p_exceed * (1.0 - p_tn)
    total = p_exceed + (1.0 - p_exceed) * p_fn
    if np.max(np.abs((pro + re) - total)) > 1e-12:
        raise ArithmeticError("fallback decomposition does not sum to the total")
    return FallbackReport(p_exceed, pro, re, total, STAV)


def fallback_stap(eta: float, p_exceed: float = float("nan")) -> FallbackReport:
    """A predictor never falls back proactively; every inaccurate prediction is a reactive fallback."""
    _check_prob("eta", eta)
    return FallbackReport(p_exceed, 0.0, 1.0 - eta, 1.0 - eta, STAP)


# Published fallback table: (cell radius km, rate column q, p_exceed, p_f sTAV, p_f sTAP), in percent.
TABLE_III = (
    (1.5, 29, 25, 47, 1.9),
    (1.5, 29, 50, 65, 1.9),
    (1.5, 29, 75, 82, 1.9),
    (2.5, 35, 25, 51, 11),
    (2.5, 35, 50, 68, 11),
    (2.5, 35, 75, 84, 11),
    (5.0, 46, 25, 60, 37),
    (5.0, 46, 50, 73, 37),
    (5.0, 46, 75, 87, 37),
)


@dataclass(frozen=True)
class TableCheckRow:
    radius_km: float
    rate_q: float
    p_exceed: float
    listed_stav: float
    computed_stav: float
    listed_stap: float
    computed_stap: float
    passed: bool


def table3_check(tolerance_pp: float = 1.0) -> list[TableCheckRow]:
    """Recompute every published row from its inputs.

    The rate column is substituted for ``p_fn`` in the simplified total; the
    prediction column goes through ``fallback_stap`` with ``eta = 1 - p_f``.
    """
    rows = []
    for radius, q, p, listed, stap in TABLE_III:
        computed = 100.0 * fallback_stav_closed_form(p / 100.0, 1.0, q / 100.0).p_f_total
        computed_stap = 100.0 * fallback_stap(1.0 - stap / 100.0).p_f_total
        ok = abs(computed - listed) <= tolerance_pp + 1e-9 and abs(computed_stap - stap) <= 1e-9
        rows.append(TableCheckRow(radius, q, p, listed, computed, stap, computed_stap, ok))
    return rows
