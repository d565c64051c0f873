"""Cell geometry, timing-advance quantization and ground-truth labels."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

SPEED_OF_LIGHT = 299792458.0


@dataclass(frozen=True)
class CellConfig:
    """Geometry of a single serving cell.

    All distances are radial UE-to-BS distances in meters.
    """

    r_cell: float = 1500.0
    delta_d_per: float = 702.0
    tau_step: float = 0.52e-6
    c: float = SPEED_OF_LIGHT
    scs_hz: float = 15000.0

    def __post_init__(self):
        if not self.r_cell > 0:
            raise ValueError(f"r_cell must be positive, got {self.r_cell}")
        # r_cell == delta_d_per is allowed: every in-cell move is then valid
        if not 0 < self.delta_d_per <= self.r_cell:
            raise ValueError(f"delta_d_per must lie in (0, r_cell], got {self.delta_d_per}")
        if not self.tau_step > 0:
            raise ValueError(f"tau_step must be positive, got {self.tau_step}")
        if not self.c > 0:
            raise ValueError("c must be positive")

    @property
    def q_dist(self) -> float:
        """Distance covered by one TA step, ``2 * c * tau_step`` (about 311.78 m)."""
        return 2.0 * self.c * self.tau_step

    def to_json(self) -> dict:
        return {
            "r_cell_m": self.r_cell,
            "delta_d_per_m": self.delta_d_per,
            "tau_step_s": self.tau_step,
            "scs_hz": self.scs_hz,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "CellConfig":
        return cls(
            r_cell=float(doc.get("r_cell_m", cls.r_cell)),
            delta_d_per=float(doc.get("delta_d_per_m", cls.delta_d_per)),
            tau_step=float(doc.get("tau_step_s", cls.tau_step)),
            scs_hz=float(doc.get("scs_hz", cls.scs_hz)),
        )

    def replace(self, **changes) -> "CellConfig":
        fields = asdict(self)
        fields.update(changes)
        return CellConfig(**fields)


@dataclass(frozen=True)
class TransitionSample:
    """One UE movement between two consecutive PUR instants."""

    d_prev: float
    d_curr: float
    velocity: float
    tau_q_prev: int
    tau_q_curr: int
    label_valid: bool


def quantize_ta(d, cfg: CellConfig):
    """Quantized TA, ``floor(d / (2 c tau_step))``.

    Accepts a scalar or an array; scalars come back as ``int``.
    """
    arr = np.asarray(d, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ValueError("distance must be non-negative")
    q = cfg.q_dist
    tau = np.floor(arr / q).astype(np.int64)
    # the division can round across a step boundary; settle it against tau * q
    tau = np.where(tau * q > arr, tau - 1, tau)
    tau = np.where((tau + 1) * q <= arr, tau + 1, tau)
    if tau.ndim == 0:
        return int(tau)
    return tau


def dequantize_ta(tau_q, cfg: CellConfig):
    """Distance implied by a quantized TA, ``tau_q * 2 c tau_step``."""
    arr = np.asarray(tau_q)
    if np.any(arr < 0):
        raise ValueError("tau_q must be non-negative")
    out = arr.astype(float) * cfg.q_dist
    if out.ndim == 0:
        return float(out)
    return out


def label_validity(d_prev, d_curr, cfg: CellConfig):
    """True where the previously held TA is still usable (``|d_curr - d_prev| <= delta_d_per``)."""
    a = np.asarray(d_prev, dtype=float)
    b = np.asarray(d_curr, dtype=float)
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("distances must be non-negative")
    out = np.abs(b - a) <= cfg.delta_d_per
    if out.ndim == 0:
        return bool(out)
    return out
