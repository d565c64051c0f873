"""Log-distance path loss, shadowing and the RSRP measurement model.

RSRP is modeled directly in dB::

    rsrp = tx_power - beta - 10 k log10(d) + shadowing + measurement_error

The measurement error of a single CRS subframe has standard deviation
``base_noise_sigma_db + doppler_coeff_db_per_kmh * velocity``; the UE
averages ``n_crs_subframes`` subframes, so the combined error shrinks as
``1 / sqrt(n_crs_subframes)``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

D_MIN = 10.0  # clamp floor in meters, keeps log10(d) finite


@dataclass(frozen=True)
class PathLossModel:
    name: str
    k: float
    beta_db: float = 0.0
    shadow_sigma_db: float = 0.0
    # None disables spatial correlation of shadowing between the two PUR instants
    decorrelation_m: float | None = None

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError(f"path-loss exponent must be positive, got {self.k}")
        if self.shadow_sigma_db < 0:
            raise ValueError("shadow_sigma_db must be non-negative")
        if self.decorrelation_m is not None and not self.decorrelation_m > 0:
            raise ValueError("decorrelation_m must be positive")

    def with_overrides(self, **changes) -> "PathLossModel":
        return replace(self, **changes)

    def to_json(self) -> dict:
        return asdict(self)


# beta_db matches the TR 38.901 NLOS path loss at 1 km and 0.9 GHz
PRESETS = {
    "UMi": PathLossModel("UMi", k=3.6, beta_db=19.33, shadow_sigma_db=7.8),
    "UMa": PathLossModel("UMa", k=3.9, beta_db=12.86, shadow_sigma_db=6.0),
    "RMa": PathLossModel("RMa", k=3.0, beta_db=28.6, shadow_sigma_db=8.0),
}


def path_loss_preset(name: str, **overrides) -> PathLossModel:
    """Return a named preset (``UMi``, ``UMa``, ``RMa``), optionally overriding fields.

    ``Custom`` builds a model entirely from ``overrides``.
    """
    if name == "Custom":
        return PathLossModel("Custom", **overrides)
    try:
        base = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown path-loss model {name!r}; expected one of {sorted(PRESETS)} or 'Custom'") from None
    return base.with_overrides(**overrides) if overrides else base


@dataclass(frozen=True)
class RadioConfig:
    tx_power_dbm: float = 46.0
    carrier_hz: float = 0.9e9
    bandwidth_hz: float = 1.4e6
    noise_figure_db: float = 9.0
    thermal_noise_dbm_hz: float = -174.0

    def __post_init__(self):
        if not self.bandwidth_hz > 0:
            raise ValueError("bandwidth_hz must be positive")

    @property
    def noise_floor_dbm(self) -> float:
        return self.thermal_noise_dbm_hz + 10.0 * math.log10(self.bandwidth_hz) + self.noise_figure_db


@dataclass(frozen=True)
class MeasurementConfig:
    n_crs_subframes: int = 4
    subframe_spacing_ms: float = 10.0
    base_noise_sigma_db: float = 1.0
    doppler_coeff_db_per_kmh: float = 0.01

    def __post_init__(self):
        if self.n_crs_subframes < 1:
            raise ValueError("n_crs_subframes must be >= 1")
        if self.base_noise_sigma_db < 0 or self.doppler_coeff_db_per_kmh < 0:
            raise ValueError("noise parameters must be non-negative")
        if self.subframe_spacing_ms < 0:
            raise ValueError("subframe_spacing_ms must be non-negative")

    def subframe_sigma_db(self, velocity_kmh):
        return self.base_noise_sigma_db + self.doppler_coeff_db_per_kmh * np.asarray(velocity_kmh, dtype=float)

    def combined_sigma_db(self, velocity_kmh):
        return self.subframe_sigma_db(velocity_kmh) / math.sqrt(self.n_crs_subframes)


NOISELESS = MeasurementConfig(base_noise_sigma_db=0.0, doppler_coeff_db_per_kmh=0.0)


@dataclass(frozen=True)
class RsrpObservation:
    rsrp_prev_dbm: float
    rsrp_curr_dbm: float
    delta_p_db: float
    k_system: float = float("nan")


def mean_rsrp_dbm(d, pl: PathLossModel, radio: RadioConfig = RadioConfig()):
    """Noiseless RSRP at distance ``d``; distances below ``D_MIN`` are clamped."""
    dist = np.maximum(np.asarray(d, dtype=float), D_MIN)
    out = radio.tx_power_dbm - pl.beta_db - 10.0 * pl.k * np.log10(dist)
    if out.ndim == 0:
        return float(out)
    return out


def measure_rsrp(d, velocity, pl: PathLossModel, radio: RadioConfig, meas: MeasurementConfig, rng_seed) -> float:
    """One measured RSRP value at distance ``d`` for a UE moving at ``velocity`` km/h."""
    rng = np.random.default_rng(rng_seed)
    shadow = pl.shadow_sigma_db * rng.standard_normal()
    err = meas.subframe_sigma_db(velocity) * rng.standard_normal(meas.n_crs_subframes)
    return float(mean_rsrp_dbm(d, pl, radio) + shadow + err.mean())


def sample_rsrp_chain(distances, velocity, pl: PathLossModel, radio: RadioConfig, meas: MeasurementConfig, rng):
    """Measured RSRP along chains of positions.

    ``distances`` has shape ``(n, m)``: ``n`` independent UEs each visiting
    ``m`` positions in order. ``velocity`` has shape ``(n,)``. Shadowing is
    independent per position unless ``pl.decorrelation_m`` is set, in which
    case consecutive draws follow an exponential correlation in the radial
    separation.
    """
    d = np.atleast_2d(np.asarray(distances, dtype=float))
    n, m = d.shape
    v = np.broadcast_to(np.asarray(velocity, dtype=float), (n,))

    z = rng.standard_normal((n, m))
    if pl.decorrelation_m is not None and m > 1:
        for j in range(1, m):
            rho = np.exp(-np.abs(d[:, j] - d[:, j - 1]) / pl.decorrelation_m)
            z[:, j] = rho * z[:, j - 1] + np.sqrt(1.0 - rho**2) * z[:, j]
    shadow = pl.shadow_sigma_db * z

    sigma = meas.subframe_sigma_db(v)[:, None, None]
    err = (sigma * rng.standard_normal((n, m, meas.n_crs_subframes))).mean(axis=2)
    return mean_rsrp_dbm(d, pl, radio) + shadow + err


def delta_rsrp(prev, curr, k_system: float = float("nan")) -> RsrpObservation:
    """Difference ``prev - curr`` in dB: positive when path loss grew (UE moved away)."""
    prev = float(prev)
    curr = float(curr)
    if not (math.isfinite(prev) and math.isfinite(curr)):
        raise ValueError("RSRP values must be finite")
    return RsrpObservation(prev, curr, prev - curr, k_system)


def scale_delta_rsrp(delta_p_db, k_train: float, k_system: float):
    """Map an RSRP difference measured under ``k_system`` onto the ``k_train`` scale."""
    if not (k_train > 0 and k_system > 0):
        raise ValueError("path-loss exponents must be positive")
    return np.multiply(delta_p_db, k_train / k_system) if np.ndim(delta_p_db) else float(delta_p_db) * k_train / k_system
