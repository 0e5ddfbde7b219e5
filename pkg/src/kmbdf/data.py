"""Series generation, CSV ingestion, standardization, windowing and splits."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, DataError, ShapeError

AR_BURN_IN = 200


class WindowPair(NamedTuple):
    history: np.ndarray  # (H, D)
    label: np.ndarray  # (T, D)


@dataclass(frozen=True)
class SyntheticSpec:
    """Seeded synthetic series: AR(p) or seasonal trend, per channel."""

    kind: str = "ar"  # "ar" | "seasonal_trend"
    length: int = 1000
    channels: int = 1
    seed: int = 0
    coeffs: tuple = (0.8,)  # AR only
    noise_std: float = 1.0
    period: int = 24  # seasonal_trend only
    amplitude: float = 1.0
    slope: float = 0.0

    def __post_init__(self):
        if self.kind not in ("ar", "seasonal_trend"):
            raise ConfigError(f"unknown synthetic kind {self.kind!r}")
        if self.length < 1 or self.channels < 1:
            raise ConfigError("length and channels must be positive")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")
        if self.kind == "ar" and len(self.coeffs) > 0:
            _check_stationary(self.coeffs)
        if self.kind == "seasonal_trend" and self.period < 1:
            raise ConfigError("period must be >= 1")


def _check_stationary(coeffs) -> None:
    # Roots of 1 - sum_i phi_i z^i must lie outside the unit circle.
    phi = np.asarray(coeffs, dtype=float)
    poly = np.concatenate([[-c for c in phi[::-1]], [1.0]])
    roots = np.roots(poly)
    if roots.size and np.min(np.abs(roots)) <= 1.0 + 1e-9:
        raise ConfigError(f"AR coefficients {list(phi)} define a nonstationary process")


def generate(spec: SyntheticSpec) -> np.ndarray:
    """Deterministic (length, channels) series for the given spec + seed."""
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "seasonal_trend":
        t = np.arange(spec.length)
        base = spec.amplitude * np.sin(2.0 * np.pi * t / spec.period) + spec.slope * t
        noise = rng.normal(0.0, spec.noise_std, size=(spec.length, spec.channels))
        return base[:, None] + noise
    phi = np.asarray(spec.coeffs, dtype=float)
    p = phi.size
    total = spec.length + AR_BURN_IN
    noise = rng.normal(0.0, spec.noise_std, size=(total, spec.channels))
    if p == 0:
        return noise[AR_BURN_IN:]
    out = np.zeros((total, spec.channels))
    for t in range(total):
        acc = noise[t].copy()
        for i in range(min(p, t)):
            acc += phi[i] * out[t - 1 - i]
        out[t] = acc
    return out[AR_BURN_IN:]


def load_csv(path, date_column: bool = True) -> np.ndarray:
    """Read an ETT-style CSV into an (M, D) float matrix.

    Header row required; an optional leading date column is skipped.  Any
    unparseable or non-finite cell raises with its 1-based row/column.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        start = 1 if date_column else 0
        width = len(header) - start
        if width < 1:
            raise DataError(f"{path}: no value columns")
        rows = []
        for r, rec in enumerate(reader, start=2):
            if len(rec) != len(header):
                raise DataError(
                    f"{path}: row {r} has {len(rec)} fields, expected {len(header)}"
                )
            vals = []
            for c, cell in enumerate(rec[start:], start=start + 1):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: unparseable value {cell!r} at row {r}, column {c}"
                    ) from None
                if not np.isfinite(v):
                    raise DataError(
                        f"{path}: non-finite value {cell!r} at row {r}, column {c}"
                    )
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return np.array(rows, dtype=float)


@dataclass
class Standardization:
    mean: np.ndarray
    std: np.ndarray
    constant_channels: list = field(default_factory=list)

    def apply(self, series: np.ndarray) -> np.ndarray:
        return (np.asarray(series, dtype=float) - self.mean) / self.std

    def invert(self, series: np.ndarray) -> np.ndarray:
        return np.asarray(series, dtype=float) * self.std + self.mean


def standardize(series: np.ndarray, train_rows: int):
    """Per-channel (x - mean) / std using the first `train_rows` rows only.

    Channels with zero training std are passed through mean-shifted (std
    forced to 1) and flagged in the returned Standardization.
    """
    series = np.asarray(series, dtype=float)
    if train_rows < 2:
        raise ConfigError(f"need >= 2 training rows, got {train_rows}")
    train = series[:train_rows]
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    constant = [int(d) for d in np.nonzero(std == 0.0)[0]]
    std = np.where(std == 0.0, 1.0, std)
    stats = Standardization(mean=mean, std=std, constant_channels=constant)
    return stats.apply(series), stats


def window(series: np.ndarray, history_len: int, horizon: int, rows_range=None):
    """Stride-1 (history, label) pairs from `rows_range` = (start, stop)."""
    series = np.asarray(series, dtype=float)
    start, stop = (0, series.shape[0]) if rows_range is None else rows_range
    length = stop - start
    if length < history_len + horizon:
        raise ShapeError(
            f"range of {length} rows too short for H={history_len}, T={horizon}"
        )
    pairs = []
    for s in range(start, stop - history_len - horizon + 1):
        pairs.append(
            WindowPair(
                history=series[s : s + history_len],
                label=series[s + history_len : s + history_len + horizon],
            )
        )
    return pairs


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.7
    val: float = 0.1
    test: float = 0.2
    convention: str = "extended"  # "extended" | "strict"
    standardize: bool = True

    def __post_init__(self):
        if abs(self.train + self.val + self.test - 1.0) > 1e-9:
            raise ConfigError("split fractions must sum to 1")
        if min(self.train, self.val, self.test) <= 0:
            raise ConfigError("split fractions must be positive")
        if self.convention not in ("extended", "strict"):
            raise ConfigError(f"unknown split convention {self.convention!r}")


def split_ranges(n_rows: int, spec: SplitSpec, history_len: int, horizon: int):
    """Chronological (start, stop) row ranges for train / val / test.

    Under the extended convention the val and test ranges reach back
    `history_len` rows so their first windows have a full history while
    labels stay inside the split.
    """
    n_train = int(n_rows * spec.train)
    n_val = int(n_rows * spec.val)
    back = history_len if spec.convention == "extended" else 0
    ranges = {
        "train": (0, n_train),
        "val": (n_train - back, n_train + n_val),
        "test": (n_train + n_val - back, n_rows),
    }
    for name, (start, stop) in ranges.items():
        if stop - start < history_len + horizon:
            raise ConfigError(
                f"{name} split of {stop - start} rows yields no window "
                f"(H={history_len}, T={horizon})"
            )
    return ranges
