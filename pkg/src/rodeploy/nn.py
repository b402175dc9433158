"""Feed-forward regression network mapping the three dimensionless inputs to
the six-component optimal grasp, trained from scratch in numpy.

Architecture: 3 -> 392 x 4 hidden (ReLU) -> 6 linear. Inputs are
standardized with dataset statistics; outputs are raw normalized pose
components. Training minimizes mean absolute error and alternates between
plain stochastic gradient descent and adaptive-moment updates whenever the
validation error stalls, doubling the batch size at each switch.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidStatsError, TrainingError

log = logging.getLogger(__name__)

HIDDEN = (392, 392, 392, 392)
IN_DIM, OUT_DIM = 3, 6


@dataclass
class MLP:
    weights: list                 # per layer, (fan_in, fan_out)
    biases: list                  # per layer, (fan_out,)
    input_mean: np.ndarray        # standardization stats over the training set
    input_std: np.ndarray
    input_low: np.ndarray = None  # training hull, for extrapolation flagging
    input_high: np.ndarray = None
    metadata: dict = field(default_factory=dict)

    @property
    def dims(self):
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def forward(self, x):
        """Batch forward pass; x is (n, 3) raw (unstandardized) inputs."""
        a = standardize(x, self.input_mean, self.input_std)
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.maximum(a @ w + b, 0.0)
        return a @ self.weights[-1] + self.biases[-1]

    def extrapolation_flags(self, x):
        if self.input_low is None or self.input_high is None:
            return np.zeros(len(x), dtype=bool)
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.any((x < self.input_low) | (x > self.input_high), axis=1)


def standardize(x, mean, std):
    std = np.asarray(std, dtype=float)
    if np.any(std <= 0):
        raise InvalidStatsError("standardization spread must be positive")
    return (np.atleast_2d(np.asarray(x, dtype=float)) - mean) / std


def init_mlp(rng, dims=None, stats=None):
    dims = [IN_DIM, *HIDDEN, OUT_DIM] if dims is None else list(dims)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    mean = np.zeros(dims[0]) if stats is None else stats[0]
    std = np.ones(dims[0]) if stats is None else stats[1]
    return MLP(weights=weights, biases=biases, input_mean=mean, input_std=std)


def _forward_cached(model, x_std):
    acts = [x_std]
    a = x_std
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        a = np.maximum(a @ w + b, 0.0)
        acts.append(a)
    out = a @ model.weights[-1] + model.biases[-1]
    return out, acts


def mae_loss_and_grads(model, x_std, y):
    """Mean absolute error and its parameter gradients (backprop)."""
    out, acts = _forward_cached(model, x_std)
    err = out - y
    n = err.size
    loss = float(np.abs(err).sum() / n)
    delta = np.sign(err) / n
    grads_w, grads_b = [None] * len(model.weights), [None] * len(model.biases)
    for layer in range(len(model.weights) - 1, -1, -1):
        grads_w[layer] = acts[layer].T @ delta
        grads_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ model.weights[layer].T) * (acts[layer] > 0)
    return loss, grads_w, grads_b


def batch_mae(model, x, y, chunk=8192):
    total = 0.0
    for i in range(0, len(x), chunk):
        out = model.forward(x[i : i + chunk])
        total += np.abs(out - y[i : i + chunk]).sum()
    return float(total / y.size)


@dataclass
class TrainConfig:
    initial_batch: int = 128
    max_batch: int = 2048
    sgd_lr: float = 1e-3
    adam_lr: float = 1e-4
    val_fraction: float = 0.2
    stall_patience: int = 25
    stall_eps: float = 1e-5
    full_data_mae: float = 0.003   # merge train/val below this validation MAE
    target_mae: float = 0.005
    max_epochs: int = 4000
    seed: int = 0

    def __post_init__(self):
        for b in (self.initial_batch, self.max_batch):
            if b < 1 or (b & (b - 1)) != 0:
                raise ValueError("batch sizes must be powers of two")
        if not 128 <= self.initial_batch <= self.max_batch <= 2048:
            raise ValueError("batch sizes must lie in [128, 2048]")


@dataclass
class TrainReport:
    epochs: int
    final_val_mae: float
    val_history: list
    phase_switches: list          # (epoch, new_phase, batch_size)
    used_full_dataset: bool


class _Adam:
    def __init__(self, shapes, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class _SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


def train(inputs, outputs, config=None):
    """Fit the controller network; returns (MLP, TrainReport).

    Raises TrainingError on too little data or on divergence (validation MAE
    above ten times its starting value for three consecutive epochs).
    """
    config = config or TrainConfig()
    x = np.asarray(inputs, dtype=float)
    y = np.asarray(outputs, dtype=float)
    if len(x) < 500:
        raise TrainingError(f"dataset too small ({len(x)} rows; need >= 500)")

    rng = np.random.default_rng(config.seed)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    if np.any(std <= 0):
        raise InvalidStatsError("degenerate input column (zero spread)")

    model = init_mlp(rng, dims=[x.shape[1], *HIDDEN, y.shape[1]], stats=(mean, std))
    model.input_low = x.min(axis=0)
    model.input_high = x.max(axis=0)
    x_std = standardize(x, mean, std)

    n_val = max(1, int(round(config.val_fraction * len(x))))
    perm = rng.permutation(len(x))
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    xt, yt = x_std[train_idx], y[train_idx]
    xv, yv = x_std[val_idx], y[val_idx]

    params = model.weights + model.biases

    def make_opt(phase, lr_scale):
        if phase == "sgd":
            return _SGD(config.sgd_lr * lr_scale)
        return _Adam([p.shape for p in params], config.adam_lr * lr_scale)

    phase = "adam"
    lr_scale = 1.0
    batch = config.initial_batch
    opt = make_opt(phase, lr_scale)

    def val_mae(m):
        out = np.empty(0)
        total = 0.0
        for i in range(0, len(xv), 8192):
            o = xv[i : i + 8192]
            for w, b in zip(m.weights[:-1], m.biases[:-1]):
                o = np.maximum(o @ w + b, 0.0)
            o = o @ m.weights[-1] + m.biases[-1]
            total += np.abs(o - yv[i : i + 8192]).sum()
        return float(total / yv.size)

    best = np.inf
    stall = 0
    diverged_streak = 0
    history = []
    switches = []
    used_full = False
    initial_val = None

    for epoch in range(config.max_epochs):
        order = rng.permutation(len(xt))
        for i in range(0, len(xt), batch):
            sel = order[i : i + batch]
            _, gw, gb = mae_loss_and_grads(model, xt[sel], yt[sel])
            opt.step(params, gw + gb)

        v = val_mae(model)
        history.append(v)
        if initial_val is None:
            initial_val = v
        if v > 10.0 * initial_val:
            diverged_streak += 1
            if diverged_streak >= 3:
                raise TrainingError(
                    f"training diverged at epoch {epoch} (val MAE {v:.4g})"
                )
        else:
            diverged_streak = 0

        if v < best - config.stall_eps:
            best = v
            stall = 0
        else:
            stall += 1

        if not used_full and v < config.full_data_mae:
            # fold the validation rows back in for the final phase
            xt = np.concatenate([xt, xv])
            yt = np.concatenate([yt, yv])
            used_full = True
            switches.append((epoch, "full-dataset", batch))
            log.info("epoch %d: full dataset engaged (val MAE %.5f)", epoch, v)

        if v < config.target_mae and epoch > 10:
            break

        if stall >= config.stall_patience:
            phase = "adam" if phase == "sgd" else "sgd"
            lr_scale *= 0.5
            batch = min(batch * 2, config.max_batch)
            opt = make_opt(phase, lr_scale)
            stall = 0
            switches.append((epoch, phase, batch))
            log.info(
                "epoch %d: stall -> switch to %s, batch %d, lr scale %.3g",
                epoch, phase, batch, lr_scale,
            )

    report = TrainReport(
        epochs=len(history),
        final_val_mae=history[-1] if history else np.inf,
        val_history=history,
        phase_switches=switches,
        used_full_dataset=used_full,
    )
    model.metadata["final_mae"] = report.final_val_mae
    model.metadata["epochs"] = report.epochs
    return model, report


def infer(model, inputs):
    """Batch inference: raw (ls, kappa, ks) rows -> (positions, rotation
    vectors, extrapolation flags).

    Negative-curvature inputs are evaluated via their mirror image and the
    resulting pose mirrored back (the controller is trained on kappa >= 0).
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    if x.shape[1] != len(model.input_mean):
        raise TrainingError("input width does not match the trained model")
    neg = x[:, 1] < 0
    xq = x.copy()
    xq[neg, 1] = -xq[neg, 1]
    out = model.forward(xq)
    positions = out[:, 0:3].copy()
    rotations = out[:, 3:6].copy()
    positions[neg, 1] = -positions[neg, 1]
    rotations[neg, 0] = -rotations[neg, 0]
    rotations[neg, 2] = -rotations[neg, 2]
    return positions, rotations, model.extrapolation_flags(xq)


def dataset_hash(inputs, outputs):
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(inputs, dtype=float).tobytes())
    h.update(np.ascontiguousarray(outputs, dtype=float).tobytes())
    return h.hexdigest()
