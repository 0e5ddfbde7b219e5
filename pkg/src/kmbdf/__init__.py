"""Kernelized moment balancing for direct time-series forecasting."""

from .balancing import (
    BalanceConfig,
    BalanceDiagnostics,
    MmdResult,
    hinge_slack,
    informativeness_scores,
    kmb_df_grad,
    kmb_df_loss,
    mmd_squared,
    select_top_k,
)
from .data import SplitSpec, SyntheticSpec, WindowPair, generate, load_csv, standardize, window
from .errors import ConfigError, DataError, DomainError, KmbdfError, ShapeError
from .harness import ExperimentConfig, TrainReport, evaluate, run_sweep, timing_probe, train
from .kernels import (
    KernelFamily,
    KernelSpec,
    eval_kernel,
    gram_matrix,
    kernel_grad_b,
    median_bandwidth,
)
from .models import (
    AdamState,
    LinearForecaster,
    adam_init,
    adam_step,
    backward,
    forward,
    init_forecaster,
    load_forecaster,
    save_forecaster,
)
from .objectives import frequency_l1_loss, make_objective, mse_grad, mse_loss

__version__ = "0.1.0"
