"""Simulation-free drift regression with a small numpy MLP.

Training pairs ``(x0, x1)`` come from the static coupling.  Each step draws
``t`` uniformly on ``[eps, 1 - eps]``, samples ``x_t`` from the pinned bridge
and regresses the network onto ``sigma(t)^2 * grad_x log q(t, x_t, 1, x1)``.
The minimiser of that squared loss is the conditional mean of the target
given ``(x_t, t)``, which is the bridge drift.

Backpropagation is written out by hand; :func:`network_gradient_check`
compares it with central differences.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, FormatError, TrainingError, ValidationError
from .fields import DriftField
from .reference import ReferenceProcess
from .static_ot import Coupling

__all__ = [
    "DriftNet",
    "TrainConfig",
    "TrainResult",
    "init_net",
    "sample_training_batch",
    "batch_loss",
    "train",
    "network_gradient_check",
    "save_model",
    "load_model",
]

ACTIVATIONS = ("silu", "relu", "tanh")
MAGIC = b"SFSB"
VERSION = 1
_HEADER = struct.Struct("<4sII")


def _silu(z):
    s = 1.0 / (1.0 + np.exp(-z))
    return z * s, s


def _act_forward(name, z):
    """Activation value and whatever its derivative needs."""
    if name == "silu":
        a, s = _silu(z)
        return a, s
    if name == "relu":
        return np.maximum(z, 0.0), None
    return np.tanh(z), None


def _act_grad(name, z, a, aux):
    if name == "silu":
        return aux * (1.0 + z * (1.0 - aux))
    if name == "relu":
        return (z > 0).astype(z.dtype)
    return 1.0 - a * a


def time_embedding(t, dim):
    """Sinusoidal features with geometric frequencies from 1 to 1e4."""
    t = np.asarray(t, dtype=float).reshape(-1, 1)
    if dim == 0:
        return np.empty((t.shape[0], 0))
    freqs = np.geomspace(1.0, 1e4, dim // 2)
    ang = t * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


class DriftNet(DriftField):
    """Feed-forward network ``u(x, t)``.

    ``layer_dims`` runs from the input width ``d + time_embed_dim`` to the
    output width ``d``; hidden layers use ``activation``, the last is linear.
    ``weights[l]`` has shape ``(layer_dims[l], layer_dims[l + 1])``.
    """

    kind = "sfsb"

    def __init__(self, layer_dims, weights, biases, activation="silu", time_embed_dim=16):
        layer_dims = [int(v) for v in layer_dims]
        activation = activation.lower()
        if activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {activation!r}; valid: {', '.join(ACTIVATIONS)}")
        if time_embed_dim % 2:
            raise ValidationError("time_embed_dim must be even")
        if len(layer_dims) < 2 or len(weights) != len(layer_dims) - 1 or len(biases) != len(weights):
            raise DimensionError("layer_dims, weights and biases are inconsistent")
        d = layer_dims[-1]
        if layer_dims[0] != d + time_embed_dim:
            raise DimensionError(f"input width {layer_dims[0]} != d + time_embed_dim = {d + time_embed_dim}")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.shape != (layer_dims[i], layer_dims[i + 1]) or b.shape != (layer_dims[i + 1],):
                raise DimensionError(f"layer {i} has shapes {w.shape}, {b.shape}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValidationError(f"layer {i} has non-finite parameters")
        self.layer_dims = layer_dims
        self.weights = [np.array(w, dtype=float) for w in weights]
        self.biases = [np.array(b, dtype=float) for b in biases]
        self.activation = activation
        self.time_embed_dim = time_embed_dim
        self.dim = d

    def __repr__(self):
        return f"DriftNet(dims={self.layer_dims}, activation={self.activation}, time_embed_dim={self.time_embed_dim})"

    @property
    def params(self):
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def copy(self):
        return DriftNet(self.layer_dims, self.weights, self.biases, self.activation, self.time_embed_dim)

    def inputs(self, x, t):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        t = np.broadcast_to(np.asarray(t, dtype=float), (x.shape[0],))
        return np.concatenate([x, time_embedding(t, self.time_embed_dim)], axis=1)

    def forward(self, h, keep=False):
        cache = []
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            if i < last:
                a, aux = _act_forward(self.activation, z)
            else:
                a, aux = z, None
            if keep:
                cache.append((h, z, a, aux))
            h = a
        return h, cache

    def backward(self, cache, grad_out):
        """Parameter gradients in the order of :attr:`params`."""
        grads = []
        g = grad_out
        last = len(self.weights) - 1
        for i in range(last, -1, -1):
            h, z, a, aux = cache[i]
            if i < last:
                g = g * _act_grad(self.activation, z, a, aux)
            grads.append(g.sum(axis=0))
            grads.append(h.T @ g)
            if i > 0:
                g = g @ self.weights[i].T
        return grads[::-1]

    def predict(self, x, t):
        return self.forward(self.inputs(x, t))[0]

    def _evaluate(self, x, t):
        return self.predict(x, t)


def init_net(dim, hidden=(128, 128), activation="silu", time_embed_dim=16, seed=0):
    """Glorot-normal weights and zero biases."""
    rng = np.random.default_rng(seed)
    dims = [dim + time_embed_dim, *hidden, dim]
    weights = [rng.standard_normal((a, b)) * np.sqrt(2.0 / (a + b)) for a, b in zip(dims[:-1], dims[1:])]
    biases = [np.zeros(b) for b in dims[1:]]
    return DriftNet(dims, weights, biases, activation, time_embed_dim)


@dataclass(frozen=True)
class TrainConfig:
    iters: int = 20_000
    batch_size: int = 256
    times_per_pair: int = 1
    lr: float = 1e-3
    epsilon_t: float = 1e-3
    seed: int = 0
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    hidden: tuple = (128, 128)
    activation: str = "silu"
    time_embed_dim: int = 16
    log_every: int = 100

    def __post_init__(self):
        if self.iters < 0:
            raise ValidationError("iters must be non-negative")
        if not 0.0 < self.epsilon_t < 0.5:
            raise ValidationError("epsilon_t must lie in (0, 0.5)")
        if not self.lr > 0:
            raise ValidationError("learning rate must be positive")
        if self.batch_size < 1 or self.times_per_pair < 1:
            raise ValidationError("batch sizes must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValidationError(f"unknown optimizer {self.optimizer!r}; use 'adam' or 'sgd'")


@dataclass
class TrainResult:
    net: DriftNet
    smoothed_loss: float
    history: list = field(default_factory=list)  # (iteration, smoothed loss)


def _pair_arrays(pairs):
    if isinstance(pairs, Coupling):
        return pairs.pairs
    x0, x1 = pairs
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    x1 = np.atleast_2d(np.asarray(x1, dtype=float))
    if x0.shape != x1.shape:
        raise DimensionError(f"pair arrays differ in shape: {x0.shape} vs {x1.shape}")
    if x0.shape[0] < 1:
        raise ValidationError("need at least one pair")
    return x0, x1


def sample_training_batch(pairs, ref: ReferenceProcess, cfg: TrainConfig, rng):
    """Bridge samples and regression targets.

    Returns ``(x_t, t, target)`` with ``batch_size * times_per_pair`` rows.
    """
    x0, x1 = _pair_arrays(pairs)
    idx = np.repeat(rng.integers(0, x0.shape[0], cfg.batch_size), cfg.times_per_pair)
    a, b = x0[idx], x1[idx]
    t = rng.uniform(cfg.epsilon_t, 1.0 - cfg.epsilon_t, idx.size)
    tau_t = ref.tau(t)
    k_t = ref.kappa(t)
    k1_t = ref.kappa1(t)
    k11 = ref.kappa_one
    w0 = tau_t * k1_t / k11
    w1 = ref.tau_one * k_t / (tau_t * k11)
    var = k_t * k1_t / k11
    offset = ref.zeta(t) - w1[:, None] * ref.zeta_one if ref.has_offset else 0.0
    mean = w0[:, None] * a + w1[:, None] * b + offset
    xt = mean + np.sqrt(var)[:, None] * rng.standard_normal(a.shape)
    tau1 = ref.tau1(t)
    target = (ref.sigma(t) ** 2 * tau1 / k1_t)[:, None] * (b - tau1[:, None] * xt - ref.zeta1(t))
    return xt, t, target


def batch_loss(net: DriftNet, batch):
    xt, t, target = batch
    pred = net.predict(xt, t)
    return float(np.mean(np.sum((pred - target) ** 2, axis=1)))


def _loss_and_grads(net, inputs, target):
    pred, cache = net.forward(inputs, keep=True)
    resid = pred - target
    n = inputs.shape[0]
    loss = float(np.sum(resid * resid) / n)
    return loss, net.backward(cache, 2.0 * resid / n)


def train(pairs, ref: ReferenceProcess, cfg: TrainConfig, net: DriftNet | None = None) -> TrainResult:
    """Fit a :class:`DriftNet` by stochastic gradient steps on bridge samples.

    Deterministic given ``cfg.seed``.  With ``iters=0`` the initial network
    is returned untouched.
    """
    x0, x1 = _pair_arrays(pairs)
    if net is None:
        net = init_net(x0.shape[1], cfg.hidden, cfg.activation, cfg.time_embed_dim, seed=cfg.seed)
    else:
        net = net.copy()
    if net.dim != x0.shape[1]:
        raise DimensionError(f"network dimension {net.dim} does not match pairs of dimension {x0.shape[1]}")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(1,)))
    params = net.params
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    smoothed = np.nan
    last_finite = np.nan
    history = []
    for it in range(1, cfg.iters + 1):
        xt, t, target = sample_training_batch((x0, x1), ref, cfg, rng)
        loss, grads = _loss_and_grads(net, net.inputs(xt, t), target)
        if not np.isfinite(loss):
            raise TrainingError(
                f"loss became non-finite at iteration {it}; last finite loss {last_finite:.6g}",
                iteration=it, last_finite_loss=last_finite)
        last_finite = loss
        smoothed = loss if np.isnan(smoothed) else 0.99 * smoothed + 0.01 * loss
        if cfg.optimizer == "adam":
            c1 = 1.0 - cfg.beta1**it
            c2 = 1.0 - cfg.beta2**it
            for p, g, mi, vi in zip(params, grads, m, v):
                mi *= cfg.beta1
                mi += (1.0 - cfg.beta1) * g
                vi *= cfg.beta2
                vi += (1.0 - cfg.beta2) * g * g
                p -= cfg.lr * (mi / c1) / (np.sqrt(vi / c2) + 1e-8)
        else:
            for p, g in zip(params, grads):
                p -= cfg.lr * g
        if it % cfg.log_every == 0:
            history.append((it, smoothed))
    return TrainResult(net, float(smoothed), history)


def _loss_extended(weights, biases, activation, inputs, target):
    """Batch loss evaluated in long double, used as the finite-difference oracle."""
    h = inputs
    last = len(weights) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        z = h @ w + b
        h = _act_forward(activation, z)[0] if i < last else z
    resid = h - target
    return np.sum(resid * resid) / inputs.shape[0]


def network_gradient_check(net: DriftNet, batch, step=1e-6):
    """Largest relative gap between backprop and central-difference gradients.

    Differences are taken in long double so that their rounding error stays
    well below the backprop error being measured.  Each entry's relative
    error is ``|g - f| / max(|g|, |f|, 1e-6)``; the floor only matters for
    gradients that vanish (dead ReLU units).
    """
    if len(net.weights) > 3 or max(net.layer_dims[1:-1], default=0) > 64:
        raise ValidationError("gradient check is meant for nets with at most 3 layers of 64 units")
    xt, t, target = batch
    inputs = net.inputs(xt, t)
    _, grads = _loss_and_grads(net, inputs, target)
    ext = np.longdouble
    ws = [w.astype(ext) for w in net.weights]
    bs = [b.astype(ext) for b in net.biases]
    params = [p for pair in zip(ws, bs) for p in pair]
    x_ext, y_ext = inputs.astype(ext), np.asarray(target).astype(ext)
    h = ext(step)
    worst = 0.0
    for p, g in zip(params, grads):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            keep = flat[j]
            flat[j] = keep + h
            up = _loss_extended(ws, bs, net.activation, x_ext, y_ext)
            flat[j] = keep - h
            down = _loss_extended(ws, bs, net.activation, x_ext, y_ext)
            flat[j] = keep
            fd = float((up - down) / (2 * h))
            worst = max(worst, abs(gflat[j] - fd) / max(abs(gflat[j]), abs(fd), 1e-6))
    return worst


_ACT_CODE = {name: i for i, name in enumerate(ACTIVATIONS)}


def save_model(net: DriftNet, path):
    """Write the binary model file (all fields little-endian)."""
    dims = net.layer_dims
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, len(dims)))
        fh.write(struct.pack(f"<{len(dims)}I", *dims))
        fh.write(struct.pack("<II", _ACT_CODE[net.activation], net.time_embed_dim))
        for w, b in zip(net.weights, net.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_model(path) -> DriftNet:
    with open(path, "rb") as fh:
        raw = fh.read()

    def take(fmt, pos):
        size = struct.calcsize(fmt)
        if pos + size > len(raw):
            raise FormatError(f"model file {path} is truncated")
        return struct.unpack_from(fmt, raw, pos), pos + size

    (magic, version, count), pos = take(_HEADER.format, 0)
    if magic != MAGIC:
        raise FormatError(f"{path} is not a model file (magic {magic!r})")
    if version != VERSION:
        raise FormatError(f"unsupported model file version {version}; expected {VERSION}")
    if not 2 <= count <= 64:
        raise FormatError(f"implausible layer count {count}")
    dims, pos = take(f"<{count}I", pos)
    (code, embed), pos = take("<II", pos)
    if code >= len(ACTIVATIONS):
        raise FormatError(f"unknown activation code {code}")
    weights, biases = [], []
    for a, b in zip(dims[:-1], dims[1:]):
        for shape in ((a, b), (b,)):
            nbytes = 8 * int(np.prod(shape))
            if pos + nbytes > len(raw):
                raise FormatError(f"model file {path} is truncated")
            arr = np.frombuffer(raw, dtype="<f8", count=int(np.prod(shape)), offset=pos).reshape(shape)
            (weights if len(shape) == 2 else biases).append(arr.astype(float))
            pos += nbytes
    if pos != len(raw):
        raise FormatError(f"model file {path} has {len(raw) - pos} trailing bytes")
    return DriftNet(list(dims), weights, biases, ACTIVATIONS[code], embed)

