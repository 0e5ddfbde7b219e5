"""Baseline training objectives sharing one loss/gradient contract.

Every objective maps (histories, labels, forecasts) -> scalar loss and
exposes the analytic gradient of that loss with respect to each forecast.
`mse` ignores the histories; `freq_l1` mixes an L1 penalty on DFT
coefficients of the forecast error with the MSE; `kmb_df` delegates to the
balancing module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .balancing import BalanceConfig, kmb_df_loss_and_grad
from .errors import ConfigError, ShapeError


def _check_batch(labels, forecasts):
    if len(labels) != len(forecasts):
        raise ShapeError("labels and forecasts must have equal length")
    if len(labels) == 0:
        raise ShapeError("empty batch")
    out = []
    for y, yhat in zip(labels, forecasts):
        y = np.asarray(y, dtype=float)
        yhat = np.asarray(yhat, dtype=float)
        if y.shape != yhat.shape:
            raise ShapeError(f"label/forecast shapes differ: {y.shape} vs {yhat.shape}")
        out.append((y, yhat))
    return out


def mse_loss(labels, forecasts) -> float:
    """Sum over the batch of squared Frobenius norms of the forecast error."""
    total = 0.0
    for y, yhat in _check_batch(labels, forecasts):
        d = yhat - y
        total += float(np.sum(d * d))
    return total


def mse_grad(labels, forecasts) -> list[np.ndarray]:
    return [2.0 * (yhat - y) for y, yhat in _check_batch(labels, forecasts)]


def _dft_matrices(t: int) -> tuple[np.ndarray, np.ndarray]:
    # Direct O(T^2) DFT along the time axis; T stays small at desk scale.
    idx = np.arange(t)
    ang = -2.0 * np.pi * np.outer(idx, idx) / t
    return np.cos(ang), np.sin(ang)


def frequency_l1_loss(labels, forecasts, beta: float = 0.5) -> float:
    """beta * L1 distance of per-channel DFT coefficients + (1-beta) * MSE."""
    if not 0.0 <= beta <= 1.0:
        raise ConfigError(f"beta must be in [0, 1], got {beta}")
    pairs = _check_batch(labels, forecasts)
    t = pairs[0][0].shape[0]
    fr, fi = _dft_matrices(t)
    freq_term = 0.0
    for y, yhat in pairs:
        d = y - yhat
        freq_term += float(np.sum(np.abs(fr @ d)) + np.sum(np.abs(fi @ d)))
    return beta * freq_term + (1.0 - beta) * mse_loss(labels, forecasts)


def frequency_l1_grad(labels, forecasts, beta: float = 0.5) -> list[np.ndarray]:
    """Subgradient of frequency_l1_loss w.r.t. each forecast; sign(0) := 0."""
    if not 0.0 <= beta <= 1.0:
        raise ConfigError(f"beta must be in [0, 1], got {beta}")
    pairs = _check_batch(labels, forecasts)
    t = pairs[0][0].shape[0]
    fr, fi = _dft_matrices(t)
    grads = []
    for y, yhat in pairs:
        d = y - yhat
        # d/d yhat |F (y - yhat)| = -F^T sign(F (y - yhat)), per part.
        gf = -(fr.T @ np.sign(fr @ d) + fi.T @ np.sign(fi @ d))
        grads.append(beta * gf + (1.0 - beta) * 2.0 * (yhat - y))
    return grads


@dataclass(frozen=True)
class MseObjective:
    kind: str = "mse"

    def loss(self, histories, labels, forecasts) -> float:
        return mse_loss(labels, forecasts)

    def grad(self, histories, labels, forecasts):
        return mse_grad(labels, forecasts)

    def loss_and_grad(self, histories, labels, forecasts):
        return self.loss(histories, labels, forecasts), self.grad(
            histories, labels, forecasts
        ), None


@dataclass(frozen=True)
class FrequencyL1Objective:
    beta: float = 0.5
    kind: str = "freq_l1"

    def loss(self, histories, labels, forecasts) -> float:
        return frequency_l1_loss(labels, forecasts, self.beta)

    def grad(self, histories, labels, forecasts):
        return frequency_l1_grad(labels, forecasts, self.beta)

    def loss_and_grad(self, histories, labels, forecasts):
        return self.loss(histories, labels, forecasts), self.grad(
            histories, labels, forecasts
        ), None


@dataclass(frozen=True)
class KmbDfObjective:
    config: BalanceConfig
    kind: str = "kmb_df"

    def _effective(self, n: int) -> BalanceConfig:
        # Trailing partial batches may be smaller than top_k; clamp rather
        # than reject so the final windows still contribute.
        cfg = self.config
        if cfg.top_k > n:
            return BalanceConfig(
                alpha=cfg.alpha,
                top_k=n,
                margin_c=cfg.margin_c,
                kernel=cfg.kernel,
                anchor_mode=cfg.anchor_mode,
                hinge_mode=cfg.hinge_mode,
            )
        return cfg

    def loss(self, histories, labels, forecasts) -> float:
        total, _, _ = self.loss_and_grad(histories, labels, forecasts)
        return total

    def grad(self, histories, labels, forecasts):
        _, grads, _ = self.loss_and_grad(histories, labels, forecasts)
        return grads

    def loss_and_grad(self, histories, labels, forecasts):
        cfg = self._effective(len(histories))
        return kmb_df_loss_and_grad(cfg, histories, labels, forecasts)


def make_objective(kind: str, **params):
    """Factory keyed by the config value of `objective.kind`."""
    if kind == "mse":
        return MseObjective()
    if kind == "freq_l1":
        return FrequencyL1Objective(beta=float(params.get("beta", 0.5)))
    if kind == "kmb_df":
        cfg = params.get("balance")
        if not isinstance(cfg, BalanceConfig):
            raise ConfigError("kmb_df objective requires a BalanceConfig")
        return KmbDfObjective(config=cfg)
    raise ConfigError(f"unknown objective kind {kind!r}")
