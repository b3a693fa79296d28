"""Residual tanh MLP: forward, exact reverse-mode gradients, checkpoints.

Layer graph (row-vector convention, weights of shape (fan_in, fan_out)):

    h1 = tanh(x W1 + b1)
    h2 = tanh(h1 W2 + b2) + h1
    h3 = tanh(h2 W3 + b3) + 0.7 h2 + 0.3 h1
    h4 = tanh(h3 W4 + b4) + h3
    h5 = tanh(h4 W5 + b5) + 0.6 h4 + 0.4 h1
    y  = h5 W_out + b_out + 0.5 h5[:, :out] + 0.3 h3[:, :out] + 0.2 h1[:, :out]

The skip terms feeding the (narrower) output take the first ``out`` components
of the corresponding hidden vectors. The input is the normalized 12-dim state
concatenated with a 3-entry one-hot class vector.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import NormStats
from .errors import (
    MalformedCheckpointError,
    ShapeMismatchError,
    VersionMismatchError,
)

CHECKPOINT_FORMAT = "uavclass-checkpoint"
CHECKPOINT_VERSION = 1

N_HIDDEN_LAYERS = 5

# (source hidden layer, coefficient) mixed into the output on top of the
# linear read-out.
OUTPUT_SKIPS = ((5, 0.5), (3, 0.3), (1, 0.2))


@dataclass(frozen=True)
class Architecture:
    input_dim: int = 15
    hidden_dim: int = 128
    output_dim: int = 12

    def tensor_shapes(self) -> list[tuple[str, tuple[int, int] | tuple[int]]]:
        shapes: list = []
        fan_in = self.input_dim
        for i in range(1, N_HIDDEN_LAYERS + 1):
            shapes.append((f"W{i}", (fan_in, self.hidden_dim)))
            shapes.append((f"b{i}", (self.hidden_dim,)))
            fan_in = self.hidden_dim
        shapes.append(("W_out", (self.hidden_dim, self.output_dim)))
        shapes.append(("b_out", (self.output_dim,)))
        return shapes


@dataclass
class NetworkParams:
    """Weights [W1..W5, W_out] and biases [b1..b5, b_out]."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def architecture(self) -> Architecture:
        return Architecture(
            input_dim=self.weights[0].shape[0],
            hidden_dim=self.weights[0].shape[1],
            output_dim=self.weights[-1].shape[1],
        )

    def tensors(self):
        """(name, array) pairs in the canonical serialization order."""
        for i in range(N_HIDDEN_LAYERS):
            yield f"W{i + 1}", self.weights[i]
            yield f"b{i + 1}", self.biases[i]
        yield "W_out", self.weights[-1]
        yield "b_out", self.biases[-1]

    def copy(self) -> "NetworkParams":
        return NetworkParams([w.copy() for w in self.weights],
                             [b.copy() for b in self.biases])

    def zeros_like(self) -> "NetworkParams":
        return NetworkParams([np.zeros_like(w) for w in self.weights],
                             [np.zeros_like(b) for b in self.biases])


def init_params(seed: int, arch: Architecture = Architecture()) -> NetworkParams:
    """Glorot-uniform weights, zero biases; deterministic in seed."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    dims = [arch.input_dim] + [arch.hidden_dim] * N_HIDDEN_LAYERS
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, (fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    limit = np.sqrt(6.0 / (arch.hidden_dim + arch.output_dim))
    weights.append(rng.uniform(-limit, limit, (arch.hidden_dim, arch.output_dim)))
    biases.append(np.zeros(arch.output_dim))
    return NetworkParams(weights, biases)


def class_onehot(class_id: int, n_classes: int = 3) -> np.ndarray:
    onehot = np.zeros(n_classes)
    onehot[class_id] = 1.0
    return onehot


@dataclass
class ForwardCache:
    x: np.ndarray                               # (N, input_dim)
    a: list[np.ndarray] = field(default_factory=list)   # tanh outputs
    h: list[np.ndarray] = field(default_factory=list)   # post-skip hiddens


def forward(params: NetworkParams, x: np.ndarray):
    """Evaluate the network; returns (output, cache).

    Accepts a single input vector or a batch (N, input_dim); batched
    evaluation equals row-wise evaluation.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    arch = params.architecture
    if x.shape[1] != arch.input_dim:
        raise ShapeMismatchError(
            f"input dim {x.shape[1]}, network expects {arch.input_dim}"
        )
    w, b = params.weights, params.biases
    out = arch.output_dim

    a1 = np.tanh(x @ w[0] + b[0])
    h1 = a1
    a2 = np.tanh(h1 @ w[1] + b[1])
    h2 = a2 + h1
    a3 = np.tanh(h2 @ w[2] + b[2])
    h3 = a3 + 0.7 * h2 + 0.3 * h1
    a4 = np.tanh(h3 @ w[3] + b[3])
    h4 = a4 + h3
    a5 = np.tanh(h4 @ w[4] + b[4])
    h5 = a5 + 0.6 * h4 + 0.4 * h1
    y = h5 @ w[5] + b[5] + 0.5 * h5[:, :out] + 0.3 * h3[:, :out] + 0.2 * h1[:, :out]

    cache = ForwardCache(x=x, a=[a1, a2, a3, a4, a5], h=[h1, h2, h3, h4, h5])
    return (y[0] if single else y), cache


def backward(params: NetworkParams, cache: ForwardCache,
             grad_out: np.ndarray) -> NetworkParams:
    """Exact gradients of sum(grad_out * output) w.r.t. every parameter.

    grad_out has the output's batch shape; all skip paths (hidden-to-hidden
    and hidden-to-output) are accounted for.
    """
    g = np.asarray(grad_out, dtype=float)
    if g.ndim == 1:
        g = g[None, :]
    arch = params.architecture
    out = arch.output_dim
    if g.shape != (cache.x.shape[0], out):
        raise ShapeMismatchError(
            f"upstream gradient shape {g.shape} does not match cached batch"
        )
    w = params.weights
    a1, a2, a3, a4, a5 = cache.a
    h1, h2, h3, h4, h5 = cache.h

    def pad(grad):
        wide = np.zeros((grad.shape[0], arch.hidden_dim))
        wide[:, :out] = grad
        return wide

    dw_out = h5.T @ g
    db_out = g.sum(axis=0)

    g5 = g @ w[5].T + 0.5 * pad(g)
    t5 = g5 * (1.0 - a5 ** 2)
    dw5 = h4.T @ t5
    db5 = t5.sum(axis=0)

    g4 = t5 @ w[4].T + 0.6 * g5
    t4 = g4 * (1.0 - a4 ** 2)
    dw4 = h3.T @ t4
    db4 = t4.sum(axis=0)

    g3 = t4 @ w[3].T + g4 + 0.3 * pad(g)
    t3 = g3 * (1.0 - a3 ** 2)
    dw3 = h2.T @ t3
    db3 = t3.sum(axis=0)

    g2 = t3 @ w[2].T + 0.7 * g3
    t2 = g2 * (1.0 - a2 ** 2)
    dw2 = h1.T @ t2
    db2 = t2.sum(axis=0)

    g1 = t2 @ w[1].T + g2 + 0.3 * g3 + 0.4 * g5 + 0.2 * pad(g)
    t1 = g1 * (1.0 - a1 ** 2)
    dw1 = cache.x.T @ t1
    db1 = t1.sum(axis=0)

    return NetworkParams(
        weights=[dw1, dw2, dw3, dw4, dw5, dw_out],
        biases=[db1, db2, db3, db4, db5, db_out],
    )


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(params: NetworkParams, norm_stats: NormStats, path) -> None:
    """Write a checkpoint directory: header.json + params.bin.

    params.bin is every tensor raveled C-order as little-endian float64,
    concatenated in the order given by NetworkParams.tensors().
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    blob = b"".join(
        np.ascontiguousarray(arr, dtype="<f8").tobytes()
        for _, arr in params.tensors()
    )
    arch = params.architecture
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "architecture": {
            "input_dim": arch.input_dim,
            "hidden_dim": arch.hidden_dim,
            "output_dim": arch.output_dim,
            "hidden_layers": N_HIDDEN_LAYERS,
        },
        "tensors": [{"name": n, "shape": list(a.shape)} for n, a in params.tensors()],
        "norm_stats": norm_stats.to_dict(),
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
    }
    (path / "params.bin").write_bytes(blob)
    (path / "header.json").write_text(json.dumps(header, indent=1))


def load_checkpoint(path, arch: Architecture | None = Architecture()):
    """Read a checkpoint; returns (params, norm_stats).

    When ``arch`` is given (the default standard architecture), stored shapes
    must match it exactly; pass arch=None to accept whatever is stored.
    """
    path = Path(path)
    header_path = path / "header.json"
    if not header_path.exists():
        raise MalformedCheckpointError(f"no header.json under {path}")
    try:
        header = json.loads(header_path.read_text())
    except json.JSONDecodeError as exc:
        raise MalformedCheckpointError(f"unreadable header: {exc}") from exc
    if header.get("format") != CHECKPOINT_FORMAT:
        raise MalformedCheckpointError("not a checkpoint header")
    if header.get("version") != CHECKPOINT_VERSION:
        raise VersionMismatchError(
            f"checkpoint version {header.get('version')}, expected {CHECKPOINT_VERSION}"
        )
    for key in ("architecture", "tensors", "norm_stats", "blob_sha256"):
        if key not in header:
            raise MalformedCheckpointError(f"header missing {key!r}")
    if header["norm_stats"] is None:
        raise MalformedCheckpointError("checkpoint has no normalization stats")

    stored = Architecture(
        input_dim=header["architecture"]["input_dim"],
        hidden_dim=header["architecture"]["hidden_dim"],
        output_dim=header["architecture"]["output_dim"],
    )
    if arch is not None and stored != arch:
        raise ShapeMismatchError(f"checkpoint architecture {stored}, expected {arch}")
    expected = stored.tensor_shapes()
    described = [(t["name"], tuple(t["shape"])) for t in header["tensors"]]
    if described != expected:
        raise ShapeMismatchError("checkpoint tensor list does not match architecture")

    blob = (path / "params.bin").read_bytes()
    n_values = sum(int(np.prod(shape)) for _, shape in expected)
    if len(blob) != n_values * 8:
        raise MalformedCheckpointError(
            f"params.bin: expected {n_values * 8} bytes, found {len(blob)}"
        )
    if hashlib.sha256(blob).hexdigest() != header["blob_sha256"]:
        raise MalformedCheckpointError("params.bin checksum mismatch")

    flat = np.frombuffer(blob, dtype="<f8")
    weights, biases, offset = [], [], 0
    for name, shape in expected:
        size = int(np.prod(shape))
        arr = flat[offset:offset + size].reshape(shape).copy()
        offset += size
        (weights if name.startswith("W") else biases).append(arr)
    params = NetworkParams(weights, biases)
    try:
        stats = NormStats.from_dict(header["norm_stats"])
    except KeyError as exc:
        raise MalformedCheckpointError(f"norm_stats missing field {exc}") from exc
    return params, stats
