"""Finite-difference gradient checks exposed through the CLI."""

from __future__ import annotations

import numpy as np

from .balancing import (
    ANCHOR_MODES,
    HINGE_MODES,
    BalanceConfig,
    kmb_df_grad,
    kmb_df_loss,
    kmb_df_loss_with_selection,
)
from .kernels import KernelSpec


def fd_forecast_grads(loss_fn, forecasts, eps: float = 1e-5):
    """Central finite differences of loss_fn w.r.t. each forecast entry."""
    grads = []
    for i, f in enumerate(forecasts):
        g = np.zeros_like(f, dtype=float)
        it = np.nditer(f, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            bumped = [np.array(x, dtype=float) for x in forecasts]
            bumped[i][idx] += eps
            hi = loss_fn(bumped)
            bumped[i][idx] -= 2 * eps
            lo = loss_fn(bumped)
            g[idx] = (hi - lo) / (2 * eps)
            it.iternext()
        grads.append(g)
    return grads


def relative_error(analytic, numeric) -> float:
    a = np.concatenate([np.asarray(g).ravel() for g in analytic])
    b = np.concatenate([np.asarray(g).ravel() for g in numeric])
    denom = max(np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def _kernel_cases():
    return [
        KernelSpec(family="exponential", sigma=1.3),
        KernelSpec(family="gaussian", sigma=0.9),
        KernelSpec(family="linear"),
        KernelSpec(family="polynomial", degree=3),
        KernelSpec(family="sigmoid"),
    ]


def run_gradcheck(trials: int = 3, tol: float = 1e-5, seed: int = 0):
    """FD-check the balancing gradient across kernels and modes.

    Returns a list of dicts with the worst relative error per case.
    """
    rng = np.random.default_rng(seed)
    results = []
    for kernel in _kernel_cases():
        for anchor in ANCHOR_MODES:
            for hinge in HINGE_MODES:
                worst = 0.0
                for _ in range(trials):
                    n, h, t, d = 4, 3, 2, 2
                    cfg = BalanceConfig(
                        alpha=0.6,
                        top_k=2,
                        margin_c=0.01,
                        kernel=kernel,
                        anchor_mode=anchor,
                        hinge_mode=hinge,
                    )
                    hist = list(rng.normal(size=(n, h, d)))
                    labels = list(rng.normal(size=(n, t, d)))
                    fcs = list(rng.normal(size=(n, t, d)))
                    grads, diag = kmb_df_grad(cfg, hist, labels, fcs)

                    def loss_fn(bumped, _sel=diag.selected):
                        total, _ = kmb_df_loss_with_selection(
                            cfg, hist, labels, bumped, _sel
                        )
                        return total

                    fd = fd_forecast_grads(loss_fn, fcs)
                    worst = max(worst, relative_error(grads, fd))
                results.append(
                    {
                        "kernel": kernel.family.value,
                        "anchor_mode": anchor,
                        "hinge_mode": hinge,
                        "max_rel_error": worst,
                        "pass": worst < tol,
                    }
                )
    return results
