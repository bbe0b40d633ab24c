# thalassa/alphasel/network.py - Alpha-selection MLP: inference and persistence

"""
Small multilayer perceptron mapping an operative window of sweep features
to the predicted RMS error (m/s) of the profile inverted at that alpha.

Weights are stored as (out, in) matrices, the layout of ``torch.nn.Linear``,
so a trained torch model converts without transposes. Inference is plain
numpy.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from loguru import logger

from thalassa.alphasel.features import input_dim
from thalassa.errors import AlphaNetError, PersistenceError

ALPHA_NET_FORMAT_VERSION = 1

ACTIVATIONS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "tanh": np.tanh,
    "relu": lambda z: np.maximum(z, 0.0),
    "identity": lambda z: z,
}


@dataclass
class AlphaNet:
    weights: List[np.ndarray]           # per layer, (out, in)
    biases: List[np.ndarray]            # per layer, (out,)
    input_mean: np.ndarray
    input_scale: np.ndarray
    k: int
    n_eof: int
    activation: str = "tanh"
    seed: Optional[int] = None
    report: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float).reshape(-1) for b in self.biases]
        self.input_mean = np.asarray(self.input_mean, dtype=float).reshape(-1)
        self.input_scale = np.asarray(self.input_scale, dtype=float).reshape(-1)

        if self.activation not in ACTIVATIONS:
            raise AlphaNetError(f"unknown activation '{self.activation}'")
        if not self.weights or len(self.weights) != len(self.biases):
            raise AlphaNetError("need one bias vector per weight matrix")
        for n, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise AlphaNetError(f"layer {n}: weight {w.shape} and bias {b.shape} disagree")
            if n > 0 and w.shape[1] != self.weights[n - 1].shape[0]:
                raise AlphaNetError(f"layer {n} expects {w.shape[1]} inputs, previous layer gives "
                                    f"{self.weights[n - 1].shape[0]}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise AlphaNetError(f"layer {n} has non-finite parameters")
        if self.weights[-1].shape[0] != 1:
            raise AlphaNetError("output layer must have a single unit")
        expected = input_dim(self.n_eof, self.k)
        if self.input_size != expected:
            raise AlphaNetError(
                f"input size {self.input_size} != (2k+1)(1+n_eof)+1 = {expected} (k={self.k}, n_eof={self.n_eof})"
            )
        if self.input_mean.shape != (expected,) or self.input_scale.shape != (expected,):
            raise AlphaNetError("normalisation constants do not match the input size")
        if np.any(self.input_scale <= 0) or not np.all(np.isfinite(self.input_mean)):
            raise AlphaNetError("normalisation scale must be positive and constants finite")

    @property
    def input_size(self) -> int:
        return int(self.weights[0].shape[1])

    @property
    def layer_sizes(self) -> List[int]:
        return [self.input_size] + [int(w.shape[0]) for w in self.weights]

    def predict(self, inputs: np.ndarray) -> np.ndarray:
        """Predicted error per row of a (n, input_size) matrix, clamped to >= 0"""
        z = np.atleast_2d(np.asarray(inputs, dtype=float))
        if z.shape[1] != self.input_size:
            raise AlphaNetError(f"input has {z.shape[1]} features, net expects {self.input_size}")
        act = ACTIVATIONS[self.activation]
        h = (z - self.input_mean) / self.input_scale
        last = len(self.weights) - 1
        for n, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.T + b
            if n < last:
                h = act(h)
        return np.maximum(h[:, 0], 0.0)

    # --- persistence ---

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format_version": ALPHA_NET_FORMAT_VERSION,
            "layer_sizes": self.layer_sizes,
            "activation": self.activation,
            "k": self.k,
            "n_eof": self.n_eof,
            "seed": self.seed,
            "input_mean": self.input_mean.tolist(),
            "input_scale": self.input_scale.tolist(),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "report": self.report,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "AlphaNet":
        version = data.get("format_version")
        if version != ALPHA_NET_FORMAT_VERSION:
            raise PersistenceError(f"unsupported alpha-net format version {version}")
        net = cls(
            weights=[np.array(w, dtype=float) for w in data["weights"]],
            biases=[np.array(b, dtype=float) for b in data["biases"]],
            input_mean=np.array(data["input_mean"], dtype=float),
            input_scale=np.array(data["input_scale"], dtype=float),
            k=int(data["k"]),
            n_eof=int(data["n_eof"]),
            activation=data.get("activation", "tanh"),
            seed=data.get("seed"),
            report=data.get("report", {}),
        )
        if net.layer_sizes != list(data.get("layer_sizes", net.layer_sizes)):
            raise PersistenceError("stored layer sizes disagree with the stored weights")
        return net

    def save(self, path: Union[str, Path], provenance: Optional[Dict[str, Any]] = None) -> None:
        """JSON with repr-precision floats, so loading is bit-exact"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {**(provenance or {}), **self.to_dict()}
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        logger.debug(f"Saved alpha net {self.layer_sizes} to {path}")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "AlphaNet":
        path = Path(path)
        if not path.exists():
            raise PersistenceError(f"alpha-net file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
            return cls.from_dict(data)
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise PersistenceError(f"cannot read alpha-net file {path}: {e}") from e


def mlp_forward(net: AlphaNet, inputs: Sequence[float]) -> float:
    """Predicted RMS error (m/s) for one window input"""
    x = np.asarray(inputs, dtype=float)
    if x.ndim != 1:
        raise AlphaNetError("mlp_forward takes a single input vector")
    return float(net.predict(x[None, :])[0])
