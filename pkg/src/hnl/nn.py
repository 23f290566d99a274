"""Dense feed-forward networks with exact reverse-mode gradients and Adam."""
from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "DenseNet",
    "GradientSet",
    "AdamState",
    "TrainingAborted",
    "net_init",
    "net_forward",
    "net_backward",
    "optimizer_step",
    "finite_difference_gradient",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_VERSION = 1


class TrainingAborted(FloatingPointError):
    """Raised when a gradient or loss stops being finite."""


_ACTIVATIONS = {
    "tanh": (np.tanh, lambda a: 1.0 - a * a),
    "identity": (lambda z: z, lambda a: np.ones_like(a)),
}


@dataclass
class GradientSet:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    inputs: np.ndarray | None = None

    def arrays(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(g)) for g in self.arrays())

    def __add__(self, other: "GradientSet") -> "GradientSet":
        return GradientSet([a + b for a, b in zip(self.weights, other.weights)],
                           [a + b for a, b in zip(self.biases, other.biases)])


@dataclass
class DenseNet:
    """Affine layers with a smooth hidden nonlinearity and identity output.

    ``weights[l]`` has shape ``(sizes[l+1], sizes[l])``.  Inputs are row
    batches ``(batch, sizes[0])``; a 1-d input is treated as one row.
    """

    sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "tanh"
    seed: int | None = None
    _cache: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def params(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def copy(self) -> "DenseNet":
        return DenseNet(self.sizes, [w.copy() for w in self.weights],
                        [b.copy() for b in self.biases], self.activation, self.seed)

    def forward(self, x: np.ndarray, cache: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        X = x[None, :] if single else x
        if X.ndim != 2 or X.shape[1] != self.sizes[0]:
            raise ValueError(f"expected input width {self.sizes[0]}, got shape {x.shape}")
        act = _ACTIVATIONS[self.activation][0]
        outs = [X]
        a = X
        last = len(self.weights) - 1
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ W.T + b
            a = z if l == last else act(z)
            outs.append(a)
        if cache:
            self._cache = (X, outs)
        return a[0] if single else a

    def backward(self, x: np.ndarray, grad_out: np.ndarray) -> GradientSet:
        """Gradients of ``sum(grad_out * forward(x))`` for the cached batch.

        The loss is a sum over batch rows, so a batch of identical rows gives
        ``batch`` times the single-row gradient.
        """
        if self._cache is None:
            raise RuntimeError("backward called without a preceding forward pass")
        X, outs = self._cache
        x = np.asarray(x, dtype=np.float64)
        if (x[None, :] if x.ndim == 1 else x).shape != X.shape or not np.array_equal(
                x.reshape(X.shape), X):
            raise RuntimeError("backward input does not match the cached forward batch")
        G = np.asarray(grad_out, dtype=np.float64).reshape(outs[-1].shape)
        dact = _ACTIVATIONS[self.activation][1]
        gw = [None] * len(self.weights)
        gb = [None] * len(self.weights)
        delta = G
        for l in range(len(self.weights) - 1, -1, -1):
            gw[l] = delta.T @ outs[l]
            gb[l] = delta.sum(axis=0)
            delta = delta @ self.weights[l]
            if l > 0:
                delta = delta * dact(outs[l])
        return GradientSet(gw, gb, delta)


def net_init(layer_sizes, activation: str = "tanh", seed: int = 0) -> DenseNet:
    """Uniform weights in ``+-1/sqrt(fan_in)``, zero biases."""
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2 or any(s <= 0 for s in sizes):
        raise ValueError(f"need >= 2 positive layer sizes, got {layer_sizes}")
    if activation not in _ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        scale = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-scale, scale, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return DenseNet(sizes, weights, biases, activation, seed)


def net_forward(net: DenseNet, x) -> np.ndarray:
    return net.forward(x)


def net_backward(net: DenseNet, x, grad_out) -> GradientSet:
    return net.backward(x, grad_out)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] | None = None
    v: list[np.ndarray] | None = None

    def step_params(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        """In-place bias-corrected adaptive-moment update of ``params``."""
        if len(params) != len(grads):
            raise ValueError("parameter and gradient lists differ in length")
        for p, g in zip(params, grads):
            if p.shape != g.shape:
                raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
            if not np.all(np.isfinite(g)):
                raise TrainingAborted(f"non-finite gradient at optimizer step {self.step + 1}")
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.step += 1
        c1 = 1.0 - self.beta1 ** self.step
        c2 = 1.0 - self.beta2 ** self.step
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            if self.lr:
                p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def optimizer_step(state: AdamState, net: DenseNet, grads: GradientSet) -> tuple[DenseNet, AdamState]:
    state.step_params(net.params(), grads.arrays())
    return net, state


def finite_difference_gradient(net: DenseNet, x, loss, eps: float = 1e-5) -> GradientSet:
    """Central differences of ``loss(net.forward(x))`` for every parameter."""
    probe = net.copy()
    out = []
    for p in probe.params():
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            up = loss(probe.forward(x, cache=False))
            flat[i] = old - eps
            down = loss(probe.forward(x, cache=False))
            flat[i] = old
            gflat[i] = (up - down) / (2 * eps)
        out.append(g)
    n = len(net.weights)
    return GradientSet(out[:n], out[n:])


def _encode(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode(d: dict) -> np.ndarray:
    return np.frombuffer(base64.b64decode(d["data"]), dtype="<f8").reshape(d["shape"]).copy()


def net_to_dict(net: DenseNet) -> dict:
    return {
        "sizes": list(net.sizes),
        "activation": net.activation,
        "seed": net.seed,
        "weights": [_encode(w) for w in net.weights],
        "biases": [_encode(b) for b in net.biases],
    }


def net_from_dict(d: dict) -> DenseNet:
    return DenseNet(tuple(d["sizes"]), [_decode(w) for w in d["weights"]],
                    [_decode(b) for b in d["biases"]], d["activation"], d["seed"])


def save_checkpoint(path, nets: dict[str, DenseNet], meta: dict | None = None,
                    arrays: dict[str, np.ndarray] | None = None) -> Path:
    """Write networks plus metadata as versioned JSON.

    Float arrays are stored as base64 little-endian float64, so reloading is
    bit-exact and the file bytes depend only on the content.
    """
    path = Path(path)
    doc = {
        "format": "hnl-checkpoint",
        "version": CHECKPOINT_VERSION,
        "meta": meta or {},
        "nets": {k: net_to_dict(v) for k, v in nets.items()},
        "arrays": {k: _encode(np.asarray(v, dtype=float)) for k, v in (arrays or {}).items()},
    }
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(doc, sort_keys=True, indent=1))
    tmp.replace(path)
    return path


def load_checkpoint(path) -> tuple[dict[str, DenseNet], dict, dict[str, np.ndarray]]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "hnl-checkpoint":
        raise ValueError(f"{path} is not an hnl checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    nets = {k: net_from_dict(v) for k, v in doc["nets"].items()}
    arrays = {k: _decode(v) for k, v in doc["arrays"].items()}
    return nets, doc["meta"], arrays
