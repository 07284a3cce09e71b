"""Small fully-connected network with hand-written backprop.

Inputs may be a single vector ``(D,)`` or a batch ``(B, D)``.  Weight
matrices are stored as ``(fan_in, fan_out)`` so a layer computes
``x @ W + b``.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

ACTIVATIONS = ("relu", "identity")

CHECKPOINT_MAGIC = "viewpose-network"
CHECKPOINT_VERSION = 1


class InputShapeError(ValueError):
    pass


class StaleActivationError(RuntimeError):
    pass


class DivergedError(FloatingPointError):
    """Raised when an update would write non-finite values into the network."""

    def __init__(self, message: str, index=None, trace=None):
        super().__init__(message)
        self.index = index
        self.trace = trace


class CheckpointError(ValueError):
    pass


@dataclass
class Layer:
    W: np.ndarray
    b: np.ndarray
    activation: str = "relu"

    @property
    def fan_in(self) -> int:
        return self.W.shape[0]

    @property
    def fan_out(self) -> int:
        return self.W.shape[1]


@dataclass
class Network:
    layers: list[Layer]
    _cache: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.layers:
            raise ValueError("network needs at least one layer")
        for i, layer in enumerate(self.layers):
            if layer.activation not in ACTIVATIONS:
                raise ValueError(f"layer {i}: unknown activation {layer.activation!r}")
            if layer.b.shape != (layer.fan_out,):
                raise ValueError(f"layer {i}: bias shape {layer.b.shape} != ({layer.fan_out},)")
        for i in range(len(self.layers) - 1):
            if self.layers[i].fan_out != self.layers[i + 1].fan_in:
                raise ValueError(
                    f"layer {i} outputs {self.layers[i].fan_out} but layer {i + 1} "
                    f"expects {self.layers[i + 1].fan_in}"
                )

    @property
    def input_dim(self) -> int:
        return self.layers[0].fan_in

    @property
    def output_dim(self) -> int:
        return self.layers[-1].fan_out

    def params(self) -> list[np.ndarray]:
        """Parameter arrays in a fixed order: W0, b0, W1, b1, ..."""
        out = []
        for layer in self.layers:
            out.extend((layer.W, layer.b))
        return out

    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def copy(self) -> "Network":
        return Network([copy.deepcopy(layer) for layer in self.layers])


def build_network(
    input_dim: int,
    hidden: Sequence[int],
    output_dim: int,
    rng: np.random.Generator,
    activation: str = "relu",
) -> Network:
    """Glorot-uniform weights, zero biases; the output layer is linear."""
    dims = [input_dim, *hidden, output_dim]
    layers = []
    for i, (fi, fo) in enumerate(zip(dims[:-1], dims[1:])):
        s = np.sqrt(6.0 / (fi + fo))
        W = rng.uniform(-s, s, size=(fi, fo))
        act = "identity" if i == len(dims) - 2 else activation
        layers.append(Layer(W, np.zeros(fo), act))
    return Network(layers)


def forward(net: Network, x, keep: bool = True) -> np.ndarray:
    """Network output for ``x``; caches activations for ``backward`` when ``keep``."""
    x = np.asarray(x, dtype=float)
    if x.ndim not in (1, 2) or x.shape[-1] != net.input_dim:
        raise InputShapeError(
            f"expected input with last dimension {net.input_dim}, got shape {x.shape}"
        )
    acts = [x]
    h = x
    for layer in net.layers:
        h = h @ layer.W + layer.b
        if layer.activation == "relu":
            h = np.maximum(h, 0.0)
        acts.append(h)
    if keep:
        net._cache = (x.copy(), acts)
    return h


@dataclass
class Gradients:
    """Per-layer ``(dW, db)`` plus the gradient with respect to the input."""

    layers: list[tuple[np.ndarray, np.ndarray]]
    input: np.ndarray

    def flat(self) -> list[np.ndarray]:
        out = []
        for dW, db in self.layers:
            out.extend((dW, db))
        return out


def backward(net: Network, x, upstream_grad) -> Gradients:
    """Gradients of ``sum(upstream_grad * forward(net, x))``.

    For a batch the parameter gradients are summed over rows.  Requires that
    the most recent cached ``forward`` was on this same ``x``.
    """
    x = np.asarray(x, dtype=float)
    if net._cache is None:
        raise StaleActivationError("backward called before forward")
    cached_x, acts = net._cache
    if cached_x.shape != x.shape or not np.array_equal(cached_x, x):
        raise StaleActivationError("backward input differs from the last forward input")
    g = np.asarray(upstream_grad, dtype=float)
    if g.shape != acts[-1].shape:
        raise InputShapeError(f"upstream gradient shape {g.shape} != output shape {acts[-1].shape}")

    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(net.layers)  # type: ignore[list-item]
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if layer.activation == "relu":
            g = g * (acts[i + 1] > 0.0)
        inp = acts[i]
        if g.ndim == 1:
            dW = np.outer(inp, g)
            db = g.copy()
        else:
            dW = inp.T @ g
            db = g.sum(axis=0)
        grads[i] = (dW, db)
        g = g @ layer.W.T
    return Gradients(grads, g)


@dataclass
class OptimizerState:
    learning_rate: float
    momentum: float = 0.9
    weight_decay: float = 0.0005
    velocity: list[np.ndarray] | None = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight decay must be nonnegative")


def sgd_step(net: Network, state: OptimizerState, grads: Gradients | Sequence[np.ndarray]):
    """Momentum SGD with coupled weight decay, applied in place.

    ``v <- momentum * v - lr * (g + weight_decay * w)``, then ``w <- w + v``.
    Returns ``(net, state)``.
    """
    params = net.params()
    flat = grads.flat() if isinstance(grads, Gradients) else list(grads)
    if len(flat) != len(params) or any(g.shape != p.shape for g, p in zip(flat, params)):
        raise InputShapeError("gradient shapes do not match network parameters")
    for k, g in enumerate(flat):
        if not np.all(np.isfinite(g)):
            bad = int(np.flatnonzero(~np.isfinite(g.ravel()))[0])
            raise DivergedError(f"non-finite gradient in parameter {k} at flat index {bad}", index=(k, bad))
    if state.velocity is None:
        state.velocity = [np.zeros_like(p) for p in params]

    new_values = []
    for k, (p, g, v) in enumerate(zip(params, flat, state.velocity)):
        v_new = state.momentum * v - state.learning_rate * (g + state.weight_decay * p)
        w_new = p + v_new
        if not np.all(np.isfinite(w_new)):
            bad = int(np.flatnonzero(~np.isfinite(w_new.ravel()))[0])
            raise DivergedError(f"update produced non-finite weight in parameter {k}", index=(k, bad))
        new_values.append((v_new, w_new))
    for (p, v), (v_new, w_new) in zip(zip(params, state.velocity), new_values):
        v[...] = v_new
        p[...] = w_new
    return net, state


@dataclass
class GradCheckReport:
    max_relative_error: float
    worst_parameter_index: tuple[int, int]
    analytic: float
    numeric: float


LossClosure = Callable[[np.ndarray, object], tuple[float, np.ndarray]]


def grad_check(
    net: Network,
    loss: LossClosure,
    x,
    target,
    step: float = 1e-6,
    max_coords: int | None = 400,
    rng: np.random.Generator | None = None,
    eps: float | None = None,
    analytic_override: Sequence[np.ndarray] | None = None,
) -> GradCheckReport:
    """Compare backprop gradients with central differences.

    ``loss(output, target)`` returns ``(value, d value / d output)``.  When the
    network has more than ``max_coords`` parameters a random subset of that
    size is checked.  ``analytic_override`` replaces the backprop gradients
    (used to confirm the checker catches corrupted gradients).

    ``eps`` floors the relative-error denominator.  By default it is
    ``1e-4 * max(1, |loss|)``: rounding noise in a central difference is about
    ``|loss| * machine_eps / step``, so gradients far below that floor cannot be
    resolved and are compared in absolute terms instead.
    """
    x = np.asarray(x, dtype=float)
    out = forward(net, x)
    value, g_out = loss(out, target)
    if eps is None:
        eps = 1e-4 * max(1.0, abs(float(value)))
    analytic = analytic_override if analytic_override is not None else backward(net, x, g_out).flat()

    params = net.params()
    coords = [(k, i) for k, p in enumerate(params) for i in range(p.size)]
    if max_coords is not None and len(coords) > max_coords:
        rng = rng if rng is not None else np.random.default_rng(0)
        pick = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[j] for j in sorted(pick)]

    worst = None
    for k, i in coords:
        flat = params[k].reshape(-1)
        orig = flat[i]
        flat[i] = orig + step
        lp, _ = loss(forward(net, x, keep=False), target)
        flat[i] = orig - step
        lm, _ = loss(forward(net, x, keep=False), target)
        flat[i] = orig
        num = (lp - lm) / (2 * step)
        ana = float(np.asarray(analytic[k]).reshape(-1)[i])
        rel = abs(ana - num) / max(abs(ana), abs(num), eps)
        if worst is None or rel > worst.max_relative_error:
            worst = GradCheckReport(rel, (k, i), ana, num)
    return worst


def save_checkpoint(net: Network, path) -> None:
    """Write the network as a versioned text file.

    Layout::

        viewpose-network 1
        layers <L>
        layer <i> <fan_in> <fan_out> <activation>
        W <fan_in*fan_out values, row-major>
        b <fan_out values>
        ... (repeated per layer)

    Reals use 17 significant digits, so loading is bit-exact.
    """
    lines = [f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}", f"layers {len(net.layers)}"]
    for i, layer in enumerate(net.layers):
        lines.append(f"layer {i} {layer.fan_in} {layer.fan_out} {layer.activation}")
        lines.append("W " + " ".join(format(v, ".17g") for v in layer.W.ravel()))
        lines.append("b " + " ".join(format(v, ".17g") for v in layer.b))
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path) -> Network:
    lines = Path(path).read_text().splitlines()
    try:
        magic, version = lines[0].split()
        if magic != CHECKPOINT_MAGIC or int(version) != CHECKPOINT_VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint header {lines[0]!r}")
        n_layers = int(lines[1].split()[1])
        layers = []
        for i in range(n_layers):
            head = lines[2 + 3 * i].split()
            if head[0] != "layer" or int(head[1]) != i:
                raise CheckpointError(f"{path}: line {3 + 3 * i}: expected 'layer {i}'")
            fi, fo, act = int(head[2]), int(head[3]), head[4]
            w_tok = lines[3 + 3 * i].split()
            b_tok = lines[4 + 3 * i].split()
            if w_tok[0] != "W" or b_tok[0] != "b":
                raise CheckpointError(f"{path}: malformed weights for layer {i}")
            W = np.array([float(v) for v in w_tok[1:]]).reshape(fi, fo)
            b = np.array([float(v) for v in b_tok[1:]])
            layers.append(Layer(W, b, act))
    except CheckpointError:
        raise
    except (IndexError, ValueError) as exc:
        raise CheckpointError(f"{path}: malformed checkpoint ({exc})") from exc
    return Network(layers)
