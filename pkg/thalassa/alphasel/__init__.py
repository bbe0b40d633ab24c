# thalassa/alphasel/__init__.py
"""
Regularisation-weight selection.

- features: normalised per-alpha sweep features and operative windows
- network: the MLP regressor (numpy inference, JSON persistence)
- training: synthetic example generation and torch training
- selection: network argmin, discrepancy principle, grid oracle
"""

from thalassa.alphasel.features import (
    SweepFeatures,
    extract_features,
    input_dim,
    observation_scalar,
    window_input,
    window_matrix,
)
from thalassa.alphasel.network import AlphaNet, mlp_forward
from thalassa.alphasel.selection import (
    argmin_prefer_larger,
    baseline_select_alpha,
    oracle_select_alpha,
    predict_errors,
    select_alpha,
    true_errors,
)
from thalassa.alphasel.training import AlphaTrainingConfig, train_alpha_net

__all__ = [
    "SweepFeatures",
    "extract_features",
    "input_dim",
    "observation_scalar",
    "window_input",
    "window_matrix",
    "AlphaNet",
    "mlp_forward",
    "argmin_prefer_larger",
    "baseline_select_alpha",
    "oracle_select_alpha",
    "predict_errors",
    "select_alpha",
    "true_errors",
    "AlphaTrainingConfig",
    "train_alpha_net",
]
