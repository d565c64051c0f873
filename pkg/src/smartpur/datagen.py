"""Synthetic labeled transition datasets.

UE positions are drawn uniformly in radial distance on ``[0, r_cell]`` and
successive positions are independent, so no trajectory is baked into the
data. Velocity only affects the RSRP measurement error.

Rows are generated in fixed-size blocks; block ``b`` draws from
``numpy.random.default_rng(seed ^ b)``. The result therefore does not depend
on how many worker processes produced the blocks.
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import D_MIN, MeasurementConfig, PathLossModel, RadioConfig, RsrpObservation, sample_rsrp_chain, scale_delta_rsrp
from .exceptions import DataError, UndefinedRateError
from .geometry import CellConfig, TransitionSample, dequantize_ta, label_validity, quantize_ta

BLOCK_SIZE = 4096

BASE_COLUMNS = [
    "d_prev_m",
    "d_curr_m",
    "velocity_kmh",
    "tau_q_prev",
    "tau_q_curr",
    "rsrp_prev_dbm",
    "rsrp_curr_dbm",
    "delta_p_db",
    "label_valid",
]


def derive_seed(master: int, *keys: int) -> int:
    """Independent 63-bit seed for a named sub-stream of ``master``."""
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class DatasetSpec:
    n_samples: int
    cfg: CellConfig = field(default_factory=CellConfig)
    pl: PathLossModel = None
    radio: RadioConfig = field(default_factory=RadioConfig)
    meas: MeasurementConfig = field(default_factory=MeasurementConfig)
    velocity_max_kmh: float = 120.0
    seed: int = 0
    history_len: int = 1

    def __post_init__(self):
        if self.n_samples < 0:
            raise ValueError("n_samples must be non-negative")
        if self.pl is None:
            raise ValueError("a path-loss model is required")
        if self.velocity_max_kmh < 0:
            raise ValueError("velocity_max_kmh must be non-negative")
        if self.history_len < 1:
            raise ValueError("history_len must be >= 1")


@dataclass(frozen=True)
class LabeledRow:
    sample: TransitionSample
    obs: RsrpObservation
    # oldest first; the last entry is the (i-1)th instant
    history: tuple


def sample_position(cfg: CellConfig, rng, size=None, d_min: float = D_MIN):
    """Radial distance drawn uniformly on ``[d_min, r_cell]``.

    Nothing is placed inside the path-loss clamp floor, so every generated
    RSRP follows the log-distance law exactly.
    """
    return rng.uniform(d_min, cfg.r_cell, size=size)


def _history_block(values, n, dtype):
    if values is None:
        return np.zeros((n, 0), dtype)
    arr = np.asarray(values, dtype)
    width = arr.shape[1] if arr.ndim == 2 else (arr.size // n if n else 0)
    return arr.reshape(n, width)


class TransitionDataset:
    """Columnar store of labeled transitions.

    Behaves as a sequence of :class:`LabeledRow`; the numpy columns are what
    the learners and evaluators consume.
    """

    def __init__(self, d_prev, d_curr, velocity, tau_q_prev, tau_q_curr, rsrp_prev, rsrp_curr,
                 label_valid, hist_tau=None, hist_rsrp=None, k_system=float("nan")):
        self.d_prev = np.asarray(d_prev, dtype=float)
        self.d_curr = np.asarray(d_curr, dtype=float)
        self.velocity = np.asarray(velocity, dtype=float)
        self.tau_q_prev = np.asarray(tau_q_prev, dtype=np.int64)
        self.tau_q_curr = np.asarray(tau_q_curr, dtype=np.int64)
        self.rsrp_prev = np.asarray(rsrp_prev, dtype=float)
        self.rsrp_curr = np.asarray(rsrp_curr, dtype=float)
        self.delta_p = self.rsrp_prev - self.rsrp_curr
        self.label_valid = np.asarray(label_valid, dtype=bool)
        n = len(self.d_prev)
        # older history, column j-1 holds instant i-1-j
        self.hist_tau = _history_block(hist_tau, n, np.int64)
        self.hist_rsrp = _history_block(hist_rsrp, n, float)
        self.k_system = float(k_system)

    @property
    def history_len(self) -> int:
        return self.hist_tau.shape[1] + 1

    def __len__(self):
        return len(self.d_prev)

    def __getitem__(self, i) -> LabeledRow:
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        sample = TransitionSample(
            float(self.d_prev[i]), float(self.d_curr[i]), float(self.velocity[i]),
            int(self.tau_q_prev[i]), int(self.tau_q_curr[i]), bool(self.label_valid[i]),
        )
        obs = RsrpObservation(float(self.rsrp_prev[i]), float(self.rsrp_curr[i]), float(self.delta_p[i]), self.k_system)
        older = [(int(t), float(p)) for t, p in zip(self.hist_tau[i][::-1], self.hist_rsrp[i][::-1])]
        return LabeledRow(sample, obs, tuple(older + [(int(self.tau_q_prev[i]), float(self.rsrp_prev[i]))]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def subset(self, mask) -> "TransitionDataset":
        return TransitionDataset(
            self.d_prev[mask], self.d_curr[mask], self.velocity[mask], self.tau_q_prev[mask],
            self.tau_q_curr[mask], self.rsrp_prev[mask], self.rsrp_curr[mask], self.label_valid[mask],
            self.hist_tau[mask], self.hist_rsrp[mask], self.k_system,
        )

    @classmethod
    def concat(cls, parts, history_len=1, k_system=float("nan")) -> "TransitionDataset":
        parts = list(parts)
        if not parts:
            return cls([], [], [], [], [], [], [], [], np.zeros((0, history_len - 1)), np.zeros((0, history_len - 1)), k_system)
        cat = lambda name: np.concatenate([getattr(p, name) for p in parts])
        return cls(
            cat("d_prev"), cat("d_curr"), cat("velocity"), cat("tau_q_prev"), cat("tau_q_curr"),
            cat("rsrp_prev"), cat("rsrp_curr"), cat("label_valid"),
            np.concatenate([p.hist_tau for p in parts]), np.concatenate([p.hist_rsrp for p in parts]),
            parts[0].k_system,
        )

    # -- feature views -------------------------------------------------

    def validator_features(self, cfg: CellConfig, k_train: float, k_system: float | None = None) -> np.ndarray:
        """``(dequantized d_prev, scaled delta P)`` per row, as the UE would see them."""
        k_sys = self.k_system if k_system is None else k_system
        return np.column_stack([dequantize_ta(self.tau_q_prev, cfg), scale_delta_rsrp(self.delta_p, k_train, k_sys)])

    def predictor_features(self, k_train: float, k_system: float | None = None) -> np.ndarray:
        """Pairs ``(tau_q[i-j], rsrp[i-j+1])`` for ``j = 1..K``, RSRP scaled to ``k_train``."""
        k_sys = self.k_system if k_system is None else k_system
        ratio = k_train / k_sys
        cols = [self.tau_q_prev.astype(float), self.rsrp_curr * ratio]
        if self.hist_tau.shape[1]:
            rsrp_newer = np.column_stack([self.rsrp_prev, self.hist_rsrp[:, :-1]])
            for j in range(self.hist_tau.shape[1]):
                cols += [self.hist_tau[:, j].astype(float), rsrp_newer[:, j] * ratio]
        return np.column_stack(cols)

    # -- CSV -----------------------------------------------------------

    def columns(self) -> list[str]:
        cols = list(BASE_COLUMNS)
        for j in range(1, self.history_len):
            cols += [f"tau_q_h{j}", f"rsrp_h{j}_dbm"]
        return cols

    def to_csv(self, path_or_buf=None) -> str | None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns())
        for i in range(len(self)):
            row = [
                repr(float(self.d_prev[i])), repr(float(self.d_curr[i])), repr(float(self.velocity[i])),
                int(self.tau_q_prev[i]), int(self.tau_q_curr[i]),
                repr(float(self.rsrp_prev[i])), repr(float(self.rsrp_curr[i])), repr(float(self.delta_p[i])),
                int(self.label_valid[i]),
            ]
            for j in range(self.hist_tau.shape[1]):
                row += [int(self.hist_tau[i, j]), repr(float(self.hist_rsrp[i, j]))]
            w.writerow(row)
        text = buf.getvalue()
        if path_or_buf is None:
            return text
        if hasattr(path_or_buf, "write"):
            path_or_buf.write(text)
        else:
            with open(path_or_buf, "w", newline="") as fh:
                fh.write(text)
        return None

    @classmethod
    def from_csv(cls, path, k_system=float("nan")) -> "TransitionDataset":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path}: empty file") from None
            if header[: len(BASE_COLUMNS)] != BASE_COLUMNS:
                raise DataError(f"{path}: header does not match dataset schema")
            extra = header[len(BASE_COLUMNS):]
            k_hist = len(extra) // 2
            expected = [c for j in range(1, k_hist + 1) for c in (f"tau_q_h{j}", f"rsrp_h{j}_dbm")]
            if extra != expected:
                raise DataError(f"{path}: unexpected history columns {extra}")
            rows = list(reader)
        try:
            arr = np.array(rows, dtype=float).reshape(len(rows), len(header))
        except ValueError as exc:
            raise DataError(f"{path}: non-numeric value ({exc})") from None
        ds = cls(
            arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3].astype(np.int64), arr[:, 4].astype(np.int64),
            arr[:, 5], arr[:, 6], arr[:, 8].astype(bool),
            arr[:, 9::2].astype(np.int64), arr[:, 10::2], k_system,
        )
        if not np.array_equal(ds.delta_p, arr[:, 7]):
            raise DataError(f"{path}: delta_p_db column inconsistent with RSRP columns")
        return ds


def _generate_block(spec: DatasetSpec, block: int, n: int) -> TransitionDataset:
    rng = np.random.default_rng(spec.seed ^ block)
    K = spec.history_len
    # columns are positions i-K, ..., i-1, i
    chain = sample_position(spec.cfg, rng, size=(n, K + 1))
    velocity = rng.uniform(0.0, spec.velocity_max_kmh, size=n)
    rsrp = sample_rsrp_chain(chain, velocity, spec.pl, spec.radio, spec.meas, rng)
    tau = quantize_ta(chain, spec.cfg).reshape(n, K + 1)
    d_prev, d_curr = chain[:, K - 1], chain[:, K]
    older = slice(K - 2, None, -1) if K > 1 else slice(0, 0)
    return TransitionDataset(
        d_prev, d_curr, velocity, tau[:, K - 1], tau[:, K], rsrp[:, K - 1], rsrp[:, K],
        label_validity(d_prev, d_curr, spec.cfg),
        tau[:, older], rsrp[:, older], spec.pl.k,
    )


def _block_job(args):
    return _generate_block(*args)


def generate_dataset(spec: DatasetSpec, jobs: int = 1) -> TransitionDataset:
    """Labeled transitions for ``spec``; identical output for any ``jobs``."""
    n_blocks = -(-spec.n_samples // BLOCK_SIZE)
    tasks = [(spec, b, min(BLOCK_SIZE, spec.n_samples - b * BLOCK_SIZE)) for b in range(n_blocks)]
    if jobs > 1 and n_blocks > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_block_job, tasks))
    else:
        parts = [_generate_block(*t) for t in tasks]
    return TransitionDataset.concat(parts, spec.history_len, spec.pl.k)


def movement_exceedance_rate(dataset) -> float:
    """Fraction of rows whose movement exceeds the permissible distance."""
    labels = dataset.label_valid if isinstance(dataset, TransitionDataset) else np.array([r.sample.label_valid for r in dataset], bool)
    if len(labels) == 0:
        raise UndefinedRateError("movement exceedance rate of an empty dataset")
    return float(np.mean(~labels))
