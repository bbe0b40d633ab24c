# thalassa/alphasel/training.py - Synthetic example generation and MLP training for alpha selection

"""
Training pipeline
=================
1. Draw synthetic truths x ~ N(0, diag(sigma²)) from the EOF basis
2. Simulate a survey per truth with a random beam count, swath and noise level
3. Sweep the alpha grid and extract windowed features
4. Label every (case, alpha) window with the true RMS error of the profile
   inverted at that alpha
5. Fit a small torch MLP on squared error with a held-out split by case;
   the best-validation epoch is kept

Cases are generated in parallel (joblib), each with its own random stream, so
the example set does not depend on the worker count.
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import torch
from joblib import Parallel, delayed
from loguru import logger
from pydantic import BaseModel, Field, field_validator
from sklearn.model_selection import GroupShuffleSplit
from sklearn.preprocessing import StandardScaler
from torch import nn

from thalassa.alphasel.features import extract_features, window_matrix
from thalassa.alphasel.network import AlphaNet
from thalassa.alphasel.selection import true_errors
from thalassa.eof import EofBasis, reconstruct, sample_coefficients
from thalassa.errors import (
    InsufficientExamplesError,
    MeasurementError,
    NoConvergedInversionError,
    TrainingDivergedError,
)
from thalassa.forward import Geometry
from thalassa.invert import InversionConfig, sweep
from thalassa.synth import make_geometry, sigma_t_from_spatial, simulate_measurements

TORCH_ACTIVATIONS = {"tanh": nn.Tanh, "relu": nn.ReLU, "identity": nn.Identity}


class AlphaTrainingConfig(BaseModel):
    """Example generation and optimiser settings"""

    n_cases: int = 300
    min_cases: int = 10
    beam_counts: List[int] = Field(default_factory=lambda: [100, 300, 500, 700, 900])
    swath_widths_deg: List[float] = Field(default_factory=lambda: [100.0, 110.0, 120.0, 130.0, 140.0])
    sigma_x_cm: List[float] = Field(default_factory=lambda: [0.25, 0.5, 1.0, 2.0, 4.0, 10.0])
    n_ping: int = 1
    c_ref: float = 1500.0
    k: int = 2
    hidden_sizes: List[int] = Field(default_factory=lambda: [32, 32])
    activation: str = "tanh"
    epochs: int = 150
    batch_size: int = 64
    learning_rate: float = 1e-3
    validation_fraction: float = 0.2

    @field_validator("n_cases", "min_cases", "n_ping", "epochs", "batch_size")
    @classmethod
    def _positive_int(cls, v: int) -> int:
        if v < 1:
            raise ValueError("must be positive")
        return v

    @field_validator("beam_counts", "swath_widths_deg", "sigma_x_cm")
    @classmethod
    def _nonempty(cls, v: list) -> list:
        if not v:
            raise ValueError("needs at least one value")
        return v

    @field_validator("k")
    @classmethod
    def _window(cls, v: int) -> int:
        if v < 0:
            raise ValueError("window half-width must be nonnegative")
        return v

    @field_validator("activation")
    @classmethod
    def _activation(cls, v: str) -> str:
        if v not in TORCH_ACTIVATIONS:
            raise ValueError(f"activation must be one of {sorted(TORCH_ACTIVATIONS)}")
        return v

    @field_validator("learning_rate")
    @classmethod
    def _lr(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("learning rate must be positive")
        return v

    @field_validator("validation_fraction")
    @classmethod
    def _fraction(cls, v: float) -> float:
        if not 0.0 < v < 1.0:
            raise ValueError("validation fraction must lie in (0, 1)")
        return v


@dataclass
class CaseExamples:
    case: int
    inputs: np.ndarray      # (n, input_dim)
    labels: np.ndarray      # (n,) true RMS error, m/s


def generate_case(
    case: int,
    basis: EofBasis,
    template: Geometry,
    config: AlphaTrainingConfig,
    inversion: InversionConfig,
    rng: np.random.Generator,
) -> Optional[CaseExamples]:
    """One synthetic survey worth of (window, true error) pairs; None if unusable"""
    x_true = sample_coefficients(basis, rng)
    truth = reconstruct(basis, x_true, profile_id=f"train-{case:05d}")
    n_beam = int(rng.choice(config.beam_counts))
    swath = float(rng.choice(config.swath_widths_deg))
    sigma_x = float(rng.choice(config.sigma_x_cm)) / 100.0
    geometry = make_geometry(swath, n_beam, template.bottom_depth, template.source_depth)
    sigma_t = sigma_t_from_spatial(sigma_x, config.c_ref)
    try:
        m = simulate_measurements(truth, geometry, sigma_t, config.n_ping, rng)
        result = sweep(m, basis, geometry, inversion)
        features = extract_features(result, basis)
    except (MeasurementError, NoConvergedInversionError) as e:
        logger.debug(f"training case {case} skipped: {e}")
        return None

    labels = true_errors(result, truth)
    keep = np.isfinite(labels) & ~features.flagged
    if not keep.any():
        return None
    inputs = window_matrix(features, config.k)
    return CaseExamples(case, inputs[keep], labels[keep])


def generate_examples(
    basis: EofBasis,
    template: Geometry,
    config: AlphaTrainingConfig,
    inversion: InversionConfig,
    rng: np.random.Generator,
    n_jobs: int = 1,
) -> List[CaseExamples]:
    streams = rng.spawn(config.n_cases)
    results = Parallel(n_jobs=n_jobs)(
        delayed(generate_case)(n, basis, template, config, inversion, streams[n])
        for n in range(config.n_cases)
    )
    return [r for r in results if r is not None]


class _Diverged(Exception):
    pass


def _build_model(sizes: List[int], activation: str, init_rng: np.random.Generator) -> nn.Sequential:
    """float64 MLP, Glorot-uniform weights drawn from numpy, zero biases"""
    layers: List[nn.Module] = []
    last = len(sizes) - 2
    for n, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        linear = nn.Linear(n_in, n_out, dtype=torch.float64)
        bound = np.sqrt(6.0 / (n_in + n_out))
        with torch.no_grad():
            linear.weight.copy_(torch.from_numpy(init_rng.uniform(-bound, bound, size=(n_out, n_in))))
            linear.bias.zero_()
        layers.append(linear)
        if n < last:
            layers.append(TORCH_ACTIVATIONS[activation]())
    return nn.Sequential(*layers)


def _fit(
    sizes: List[int],
    config: AlphaTrainingConfig,
    learning_rate: float,
    train: Tuple[np.ndarray, np.ndarray],
    val: Tuple[np.ndarray, np.ndarray],
    init_seed: int,
    shuffle_seed: int,
) -> Tuple[nn.Sequential, Dict[str, Any]]:
    init_rng = np.random.default_rng(init_seed)
    shuffle_rng = np.random.default_rng(shuffle_seed)
    model = _build_model(sizes, config.activation, init_rng)
    optimizer = torch.optim.Adam(model.parameters(), lr=learning_rate)
    criterion = nn.MSELoss()

    x_tr, y_tr = (torch.from_numpy(a) for a in train)
    x_va, y_va = (torch.from_numpy(a) for a in val)

    def evaluate(x: torch.Tensor, y: torch.Tensor) -> float:
        model.eval()
        with torch.no_grad():
            return float(criterion(model(x).squeeze(-1), y))

    initial = evaluate(x_tr, y_tr)
    history_train: List[float] = []
    history_val: List[float] = []
    best = {"val_loss": np.inf, "epoch": -1, "train_loss": np.inf, "state": None}

    n = x_tr.shape[0]
    for epoch in range(config.epochs):
        model.train()
        order = shuffle_rng.permutation(n)
        for start in range(0, n, config.batch_size):
            part = torch.from_numpy(order[start:start + config.batch_size])
            optimizer.zero_grad()
            loss = criterion(model(x_tr[part]).squeeze(-1), y_tr[part])
            if not torch.isfinite(loss):
                raise _Diverged(f"non-finite batch loss in epoch {epoch + 1}")
            loss.backward()
            optimizer.step()

        train_loss = evaluate(x_tr, y_tr)
        val_loss = evaluate(x_va, y_va)
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise _Diverged(f"non-finite loss after epoch {epoch + 1}")
        history_train.append(train_loss)
        history_val.append(val_loss)
        if val_loss < best["val_loss"]:
            best.update(val_loss=val_loss, epoch=epoch + 1, train_loss=train_loss,
                        state={k: v.detach().clone() for k, v in model.state_dict().items()})
        logger.debug(f"epoch {epoch + 1}: train={train_loss:.5f} val={val_loss:.5f}")

    model.load_state_dict(best["state"])
    report = {
        "initial_train_loss": initial,
        "train_loss": best["train_loss"],
        "val_loss": best["val_loss"],
        "best_epoch": best["epoch"],
        "train_loss_history": history_train,
        "val_loss_history": history_val,
    }
    return model, report


def train_alpha_net(
    basis: EofBasis,
    geometry: Geometry,
    config: Optional[AlphaTrainingConfig] = None,
    rng: Optional[np.random.Generator] = None,
    inversion: Optional[InversionConfig] = None,
    n_jobs: int = 1,
    seed: Optional[int] = None,
) -> AlphaNet:
    """
    Train the alpha-selection network on synthetic inversions.

    Args:
        basis: EOF basis the net will be used with
        geometry: Template providing bottom and transducer depth
        config: Example generation and optimiser settings
        rng: Random stream (spawned into per-case streams)
        inversion: Alpha grid and Gauss-Newton controls used for the sweeps
        n_jobs: joblib workers for example generation
        seed: Recorded in the net for provenance

    Returns:
        AlphaNet at the epoch with the lowest validation loss
    """
    config = config or AlphaTrainingConfig()
    inversion = inversion or InversionConfig()
    rng = rng if rng is not None else np.random.default_rng(seed)

    cases = generate_examples(basis, geometry, config, inversion, rng, n_jobs)
    if len(cases) < max(2, config.min_cases):
        raise InsufficientExamplesError(
            f"only {len(cases)} of {config.n_cases} synthetic cases produced examples (need {config.min_cases})"
        )
    inputs = np.vstack([c.inputs for c in cases])
    labels = np.concatenate([c.labels for c in cases])
    groups = np.concatenate([np.full(c.labels.size, c.case) for c in cases])
    logger.info(f"🧪 Generated {labels.size} training examples from {len(cases)} synthetic cases")

    split_seed, init_seed, shuffle_seed = (int(s) for s in rng.integers(0, 2**31 - 1, size=3))
    splitter = GroupShuffleSplit(n_splits=1, test_size=config.validation_fraction, random_state=split_seed)
    train_idx, val_idx = next(splitter.split(inputs, labels, groups))

    scaler = StandardScaler().fit(inputs[train_idx])
    scaled = scaler.transform(inputs)
    train = (scaled[train_idx], labels[train_idx])
    val = (scaled[val_idx], labels[val_idx])
    sizes = [inputs.shape[1], *config.hidden_sizes, 1]

    learning_rate = config.learning_rate
    retried = False
    try:
        model, fit_report = _fit(sizes, config, learning_rate, train, val, init_seed, shuffle_seed)
    except _Diverged as e:
        logger.warning(f"⚠️ Training diverged ({e}); retrying with learning rate {learning_rate / 10:g}")
        learning_rate /= 10.0
        retried = True
        try:
            model, fit_report = _fit(sizes, config, learning_rate, train, val, init_seed, shuffle_seed)
        except _Diverged as e2:
            raise TrainingDivergedError(f"training diverged twice: {e2}") from e2

    linears = [m for m in model if isinstance(m, nn.Linear)]
    report = {
        "n_cases_requested": config.n_cases,
        "n_cases": len(cases),
        "n_examples": int(labels.size),
        "n_train": int(train_idx.size),
        "n_val": int(val_idx.size),
        "val_label_variance": float(np.var(labels[val_idx])),
        "learning_rate": learning_rate,
        "retried": retried,
        "epochs": config.epochs,
        **fit_report,
    }
    net = AlphaNet(
        weights=[lin.weight.detach().numpy().copy() for lin in linears],
        biases=[lin.bias.detach().numpy().copy() for lin in linears],
        input_mean=scaler.mean_,
        input_scale=scaler.scale_,
        k=config.k,
        n_eof=basis.n_eof,
        activation=config.activation,
        seed=seed,
        report=report,
    )
    logger.info(
        f"✅ Alpha net trained: val MSE {report['val_loss']:.4f} vs label variance "
        f"{report['val_label_variance']:.4f} (best epoch {report['best_epoch']})"
    )
    return net
