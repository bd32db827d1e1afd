"""Fully connected denoising autoencoder learned from navigator profiles.

The network is ``n -> h -> b -> h -> n`` with ReLU on the three hidden layers
and a linear output. It is trained on real vectors (real and imaginary parts
of the navigator rows, scaled to unit peak) to undo additive Gaussian noise
drawn from a ladder of noise levels, then applied to the voxel time profiles
of the image series.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
import logging
import math
import warnings

import numpy as np

from .errors import ConfigError, DegenerateInputError, DimensionError, NumericalError
from .numerics import make_rng

log = logging.getLogger(__name__)

DEFAULT_NOISE_LEVELS = (0.10, 0.05, 0.03, 0.01, 0.007, 0.005, 0.003, 0.001)
DEFAULT_REALIZATIONS = (1, 1, 2, 2, 4, 4, 8, 8)


def default_dims(n: int, bottleneck: int | None = None) -> list[int]:
    """Layer widths ``[n, h, b, h, n]``; ``b = round(n / 8)`` (50 for n = 400)."""
    b = bottleneck if bottleneck is not None else max(1, int(round(n / 8)))
    h = math.ceil((n + b) / 2)
    return [n, h, b, h, n]


@dataclass
class DaeParameters:
    weights: list          # weights[l] has shape (dims[l+1], dims[l])
    biases: list
    gamma: float = 1.0     # scale that maps training data to unit peak
    meta: dict = field(default_factory=dict)

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def copy(self) -> "DaeParameters":
        return DaeParameters([w.copy() for w in self.weights],
                             [b.copy() for b in self.biases], self.gamma, dict(self.meta))

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for pair in zip(self.weights, self.biases)
                               for p in pair])

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.weights + self.biases)


def init_params(dims, seed=0) -> DaeParameters:
    """He-uniform weights, zero biases."""
    if len(dims) != 5:
        raise DimensionError("the autoencoder has exactly four weight layers")
    rng = make_rng(seed)
    ws, bs = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        lim = np.sqrt(6.0 / fan_in)
        ws.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
        bs.append(np.zeros(fan_out))
    return DaeParameters(ws, bs)


@dataclass
class TrainConfig:
    noise_levels: tuple = DEFAULT_NOISE_LEVELS
    realizations_per_level: tuple = DEFAULT_REALIZATIONS
    epochs: int = 500
    batch_size: int = 64
    learning_rate: float = 1e-3
    val_fraction: float = 0.1
    seed: int = 0
    bottleneck: int | None = None

    def validate(self):
        lv = np.asarray(self.noise_levels, dtype=float)
        cnt = np.asarray(self.realizations_per_level)
        if lv.size == 0 or lv.size != cnt.size:
            raise ConfigError("noise_levels and realizations_per_level must pair up")
        if np.any(lv <= 0) or np.any(lv >= 1):
            raise ConfigError("noise levels must lie in (0, 1)")
        if np.any(cnt < 1):
            raise ConfigError("realization counts must be >= 1")
        order = np.argsort(-lv, kind="stable")
        if np.any(np.diff(cnt[order]) < 0):
            raise ConfigError("realization counts must not decrease as sigma decreases")
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ConfigError("epochs, batch_size and learning_rate must be positive")
        return self

    def to_dict(self):
        d = asdict(self)
        d["noise_levels"] = list(self.noise_levels)
        d["realizations_per_level"] = list(self.realizations_per_level)
        return d


@dataclass
class TrainingSet:
    vectors: np.ndarray     # (count, n) real
    gamma: float


def prepare_training_vectors(z) -> TrainingSet:
    """Realify navigator rows and scale them to unit peak.

    Each complex row contributes its real part and its imaginary part as two
    consecutive vectors. ``gamma`` is the largest absolute real or imaginary
    entry, so after division the largest entry is exactly 1.
    """
    z = np.asarray(getattr(z, "data", z))
    if z.ndim != 2 or z.size == 0:
        raise DegenerateInputError("navigator matrix is empty")
    v = np.empty((2 * z.shape[0], z.shape[1]))
    v[0::2] = z.real
    v[1::2] = z.imag
    gamma = float(np.max(np.abs(v)))
    if gamma == 0.0:
        raise DegenerateInputError("navigator matrix is all zeros")
    return TrainingSet(v / gamma, gamma)


# --------------------------------------------------------------------------
# network evaluation

def _forward(theta: DaeParameters, v):
    """Returns the output and the per-layer activations needed by backprop."""
    acts = [v]
    a = v
    last = len(theta.weights) - 1
    for l, (w, b) in enumerate(zip(theta.weights, theta.biases)):
        z = a @ w.T + b
        a = z if l == last else np.maximum(z, 0.0)
        acts.append(a)
    return a, acts


def dae_apply(theta: DaeParameters, v) -> np.ndarray:
    """Evaluate the network on one vector (n,) or a batch (B, n)."""
    v = np.asarray(v, dtype=np.float64)
    n = theta.dims[0]
    if v.shape[-1] != n:
        raise DimensionError(f"network expects length {n}, got {v.shape[-1]}")
    out, _ = _forward(theta, v.reshape(-1, n))
    return out.reshape(v.shape)


def dae_apply_casorati(theta: DaeParameters, x, gamma=None, chunk=8192) -> np.ndarray:
    """Denoise every voxel time profile (row) of a Casorati matrix.

    Real and imaginary parts go through the network separately after
    division by ``gamma`` and are rescaled afterwards.
    """
    x = np.asarray(x)
    if gamma is None:
        gamma = theta.gamma
    n = theta.dims[0]
    if x.ndim != 2 or x.shape[1] != n:
        raise DimensionError(f"profiles of length {n} expected, got {x.shape}")
    out = np.empty(x.shape, dtype=np.complex128)
    for r0 in range(0, x.shape[0], chunk):
        blk = x[r0:r0 + chunk]
        v = np.concatenate([blk.real, blk.imag]) / gamma
        d, _ = _forward(theta, v)
        k = blk.shape[0]
        out[r0:r0 + chunk] = gamma * (d[:k] + 1j * d[k:])
    return out


# --------------------------------------------------------------------------
# training

def loss_and_grad(theta: DaeParameters, noisy, clean):
    """Mean over samples of ``||D(noisy) - clean||^2`` and its gradient."""
    out, acts = _forward(theta, noisy)
    diff = out - clean
    bsz = noisy.shape[0]
    loss = float(np.sum(diff * diff)) / bsz
    delta = 2.0 * diff / bsz
    gw = [None] * len(theta.weights)
    gb = [None] * len(theta.weights)
    for l in range(len(theta.weights) - 1, -1, -1):
        gw[l] = delta.T @ acts[l]
        gb[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ theta.weights[l]) * (acts[l] > 0)
    return loss, gw, gb


def loss_only(theta, noisy, clean) -> float:
    out, _ = _forward(theta, noisy)
    d = out - clean
    return float(np.sum(d * d)) / noisy.shape[0]


class Adam:
    def __init__(self, params: DaeParameters, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.t = 0
        shapes = [p.shape for p in params.weights + params.biases]
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]

    def step(self, params: DaeParameters, grads):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for p, g, m, v in zip(params.weights + params.biases, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def dae_train(ts: TrainingSet, cfg: TrainConfig | None = None,
              theta0: DaeParameters | None = None, log_every: int = 0) -> DaeParameters:
    """Fit the autoencoder to denoise the training vectors.

    Every epoch visits each training vector once. Its noise level is drawn
    from ``noise_levels`` with probability proportional to
    ``realizations_per_level`` and a fresh Gaussian realization is added, so
    the expected per-epoch loss is the realization-weighted average over the
    noise ladder. A held-out split (``val_fraction``) with noise frozen at
    the start scores every epoch; the parameters with the lowest validation
    loss are returned. With fewer than 10 vectors the training vectors double
    as the validation set.

    ``meta`` of the result carries the loss traces and the split indices.
    """
    cfg = (cfg or TrainConfig()).validate()
    vecs = np.asarray(ts.vectors, dtype=np.float64)
    count, n = vecs.shape
    rng = make_rng(cfg.seed)
    theta = theta0.copy() if theta0 is not None else init_params(
        default_dims(n, cfg.bottleneck), seed=cfg.seed)
    if theta.dims[0] != n:
        raise DimensionError(f"network width {theta.dims[0]} does not match data {n}")
    if count < theta.dims[2]:
        warnings.warn(f"only {count} training vectors for a bottleneck of {theta.dims[2]}")

    perm = rng.permutation(count)
    n_val = int(count * cfg.val_fraction) if count >= 10 else 0
    val_idx, train_idx = np.sort(perm[:n_val]), np.sort(perm[n_val:])
    if n_val == 0:
        val_idx = train_idx
    train, val = vecs[train_idx], vecs[val_idx]

    levels = np.asarray(cfg.noise_levels, dtype=float)
    weights = np.asarray(cfg.realizations_per_level, dtype=float)
    prob = weights / weights.sum()
    # validation: one frozen realization per level, losses averaged with the same weights
    val_noisy = [val + s * rng.standard_normal(val.shape) for s in levels]

    def val_loss(th):
        return float(sum(p * loss_only(th, vn, val) for p, vn in zip(prob, val_noisy)))

    opt = Adam(theta, lr=cfg.learning_rate)
    best = theta.copy()
    best_val = val_loss(theta)
    best_epoch = 0
    train_hist, val_hist = [], []
    ntr = train.shape[0]
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(ntr)
        lvl = rng.choice(levels.size, size=ntr, p=prob)
        noise = levels[lvl][:, None] * rng.standard_normal((ntr, n))
        total = 0.0
        for b0 in range(0, ntr, cfg.batch_size):
            idx = order[b0:b0 + cfg.batch_size]
            clean = train[idx]
            loss, gw, gb = loss_and_grad(theta, clean + noise[idx], clean)
            if not np.isfinite(loss):
                raise NumericalError(f"training loss diverged at epoch {epoch}", partial=best)
            opt.step(theta, gw + gb)
            total += loss * idx.size
        train_hist.append(total / ntr)
        vl = val_loss(theta)
        val_hist.append(vl)
        if not np.isfinite(vl) or not theta.all_finite():
            raise NumericalError(f"non-finite parameters at epoch {epoch}", partial=best)
        if vl < best_val:
            best_val, best_epoch = vl, epoch
            best = theta.copy()
        if log_every and epoch % log_every == 0:
            log.info("epoch %d train %.3e val %.3e", epoch, train_hist[-1], vl)

    best.gamma = ts.gamma
    best.meta = {"train_loss": train_hist, "val_loss": val_hist, "best_epoch": best_epoch,
                 "best_val_loss": best_val, "val_index": val_idx.tolist(),
                 "config": cfg.to_dict()}
    return best


def relative_residual(theta, v) -> np.ndarray:
    """Per-vector ``||D(v) - v|| / ||v||``."""
    v = np.atleast_2d(v)
    d = dae_apply(theta, v)
    return np.linalg.norm(d - v, axis=1) / np.linalg.norm(v, axis=1)
