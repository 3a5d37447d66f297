"""
Small feed-forward networks with a fixed Fourier feature layer, written with
explicit reverse-mode gradients and trained by Adam.

Batches are row-major: inputs ``(batch, p)``, outputs ``(batch, out)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

logger = logging.getLogger(__name__)

LEAKY_SLOPE = 0.1
HIDDEN = 30


class TrainingDivergence(RuntimeError):
    def __init__(self, msg: str, history: list[float]):
        super().__init__(msg)
        self.history = history


@dataclass(frozen=True)
class FourierConfig:
    p: int
    k: int

    @property
    def out_dim(self) -> int:
        return 2 * self.p * self.k + self.p


def fourier_features(mu: np.ndarray, cfg: FourierConfig) -> np.ndarray:
    """Per coordinate x: [x, cos x, sin x, ..., cos kx, sin kx], concatenated."""
    mu = np.asarray(mu, dtype=float)
    single = mu.ndim == 1
    X = np.atleast_2d(mu)
    if X.shape[1] != cfg.p:
        raise ValueError(f"expected {cfg.p} parameters, got {X.shape[1]}")
    freqs = np.arange(1, cfg.k + 1)
    arg = X[:, :, None] * freqs  # (batch, p, k)
    trig = np.stack([np.cos(arg), np.sin(arg)], axis=-1).reshape(X.shape[0], cfg.p, 2 * cfg.k)
    out = np.concatenate([X[:, :, None], trig], axis=-1).reshape(X.shape[0], cfg.out_dim)
    return out[0] if single else out


def leaky_relu(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, x, LEAKY_SLOPE * x)


def leaky_relu_grad(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, 1.0, LEAKY_SLOPE)


@dataclass
class Layer:
    W: np.ndarray  # (out, in)
    b: Optional[np.ndarray] = None
    activation: bool = False
    trainable: bool = True

    @property
    def shape(self) -> tuple[int, int]:
        return self.W.shape


@dataclass
class MlpParams:
    """
    A stack of dense layers behind an optional input normalization and
    Fourier layer.

    Attributes:
        layers (list[Layer]): applied in order.
        fourier (FourierConfig or None): fixed feature map.
        input_lo, input_hi (np.ndarray or None): per-coordinate training box,
            mapped affinely onto [-1, 1] before the Fourier layer.
        output_scale (float or np.ndarray): with ``output_shift``, the trainable
            stack predicts ``(y - output_shift) / output_scale``.
        output_shift (float or np.ndarray): per-output offset.
    """

    layers: list[Layer]
    fourier: Optional[FourierConfig] = None
    input_lo: Optional[np.ndarray] = None
    input_hi: Optional[np.ndarray] = None
    output_scale: float | np.ndarray = 1.0
    output_shift: float | np.ndarray = 0.0

    def trainable_layers(self) -> list[Layer]:
        return [L for L in self.layers if L.trainable]

    def latent(self) -> "MlpParams":
        """The network without its trailing fixed layers (shares arrays)."""
        k = len(self.layers)
        while k > 0 and not self.layers[k - 1].trainable:
            k -= 1
        return MlpParams(
            self.layers[:k], self.fourier, self.input_lo, self.input_hi,
            self.output_scale, self.output_shift,
        )

    def head(self) -> list[Layer]:
        return self.layers[len(self.latent().layers):]

    def copy(self) -> "MlpParams":
        return MlpParams(
            [
                Layer(L.W.copy(), None if L.b is None else L.b.copy(), L.activation, L.trainable)
                for L in self.layers
            ],
            self.fourier,
            None if self.input_lo is None else self.input_lo.copy(),
            None if self.input_hi is None else self.input_hi.copy(),
            np.copy(self.output_scale),
            np.copy(self.output_shift),
        )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 5000
    batch_size: Optional[int] = None  # None: full batch
    seed: int = 0
    divergence_factor: float = 1e3

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs <= 0:
            raise ValueError("learning rate and epoch count must be positive")
        if self.batch_size is not None and self.batch_size <= 0:
            raise ValueError("batch size must be positive")


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=(fan_out, fan_in))


def build_network(
    p: int,
    k: int,
    n: int,
    seed: int,
    output_dim: Optional[int] = None,
    pod_matrix: Optional[np.ndarray] = None,
    input_lo=None,
    input_hi=None,
) -> MlpParams:
    """
    F -> dense(2pk+p, 30) -> leaky dense(30, 30) -> dense(30, n) -> head.

    Black-box (``output_dim``): the n-layer is leaky and the head is a trainable
    bias-free dense(n, N_h). POD-type (``pod_matrix``): the n-layer is affine
    and the head is the fixed basis matrix.
    """
    if (output_dim is None) == (pod_matrix is None):
        raise ValueError("give exactly one of output_dim and pod_matrix")
    rng = np.random.default_rng(seed)
    fc = FourierConfig(p, k)
    dims = [fc.out_dim, HIDDEN, HIDDEN, n]
    acts = [False, True, output_dim is not None]
    layers = [
        Layer(_glorot(rng, a, b), np.zeros(b), act)
        for a, b, act in zip(dims[:-1], dims[1:], acts)
    ]
    if output_dim is not None:
        layers.append(Layer(_glorot(rng, n, output_dim), None, False, True))
    else:
        V = np.asarray(pod_matrix, dtype=float)
        if V.shape[1] != n:
            raise ValueError("POD matrix width must equal n")
        layers.append(Layer(V, None, False, False))
    lo = None if input_lo is None else np.asarray(input_lo, dtype=float)
    hi = None if input_hi is None else np.asarray(input_hi, dtype=float)
    return MlpParams(layers, fc, lo, hi)


def _features(params: MlpParams, mu: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(mu, dtype=float))
    if params.input_lo is not None:
        span = np.where(params.input_hi > params.input_lo, params.input_hi - params.input_lo, 1.0)
        X = 2.0 * (X - params.input_lo) / span - 1.0
    if params.fourier is not None:
        X = fourier_features(X, params.fourier)
    return X


def _forward_cache(layers: list[Layer], X: np.ndarray):
    acts, pre = [X], []
    for L in layers:
        Z = acts[-1] @ L.W.T
        if L.b is not None:
            Z = Z + L.b
        pre.append(Z)
        acts.append(leaky_relu(Z) if L.activation else Z)
    return acts, pre


def forward(params: MlpParams, mu: np.ndarray, scaled: bool = True) -> np.ndarray:
    """
    Evaluate the network. With ``scaled`` the output shift and scale are
    undone before any fixed head, so the result is in target units.
    """
    single = np.asarray(mu).ndim == 1
    X = _features(params, mu)
    latent = params.latent()
    out, _ = _forward_cache(latent.layers, X)
    Y = out[-1]
    if scaled:
        Y = Y * params.output_scale + params.output_shift
    for L in params.head():
        Y = Y @ L.W.T
        if L.b is not None:
            Y = Y + L.b
    return Y[0] if single else Y


def loss_and_grad(
    layers: list[Layer],
    X: np.ndarray,
    Y: np.ndarray,
    weight: Optional[np.ndarray] = None,
):
    """
    Mean weighted squared error ``1/N sum (y - phi)^T W (y - phi)`` and its
    gradients with respect to every layer's (W, b), in layer order. A 1D
    ``weight`` is read as a diagonal.
    """
    acts, pre = _forward_cache(layers, X)
    R = acts[-1] - Y
    N = X.shape[0]
    if weight is None:
        WR = R
    elif weight.ndim == 1:
        WR = R * weight
    else:
        WR = R @ weight
    loss = float(np.sum(R * WR) / N)
    delta = 2.0 * WR / N
    grads: list[tuple[np.ndarray, Optional[np.ndarray]]] = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        L = layers[i]
        if L.activation:
            delta = delta * leaky_relu_grad(pre[i])
        gW = delta.T @ acts[i]
        gb = delta.sum(axis=0) if L.b is not None else None
        grads[i] = (gW, gb)
        if i > 0:
            delta = delta @ L.W
    return loss, grads


def train(
    X_params: np.ndarray,
    targets: np.ndarray,
    params: MlpParams,
    cfg: TrainConfig,
    weight: Optional[np.ndarray] = None,
    standardize: bool = False,
) -> tuple[MlpParams, list[float]]:
    """
    Fit the trainable stack of ``params`` to ``targets`` with Adam.

    ``targets`` are the outputs of the trainable stack: full coefficient
    vectors for a black-box network, latent coefficients when the head is a
    fixed basis. ``weight`` is the Gramian of the loss norm (identity if None).
    By default all outputs share one RMS scale and no shift; with
    ``standardize`` every output is centered and scaled on its own.

    Returns:
        (trained parameters, per-epoch loss history in scaled units)
    """
    X_params = np.atleast_2d(np.asarray(X_params, dtype=float))
    T = np.atleast_2d(np.asarray(targets, dtype=float))
    if X_params.shape[0] == 0 or X_params.shape[0] != T.shape[0]:
        raise ValueError("need a non-empty dataset with one target per sample")

    params = params.copy()
    latent = params.latent()
    layers = latent.layers
    if any(not L.trainable for L in layers):
        raise ValueError("fixed layers are only allowed at the end of the network")

    # standardize each output; the weight is rescaled so the loss still
    # measures the same norm, up to a constant
    if standardize:
        shift = T.mean(axis=0)
        scale = T.std(axis=0)
        ref = scale.max()
        scale = np.where(scale > 1e-12 * ref, scale, 1.0) if ref > 0 else np.ones_like(scale)
    else:
        rms = float(np.sqrt(np.mean(T**2)))
        shift = np.zeros(T.shape[1])
        scale = np.full(T.shape[1], rms if rms > 0 else 1.0)
    params.output_shift, params.output_scale = shift, scale
    Ts = (T - shift) / scale
    if weight is None:
        W = scale**2
        W = W / W.mean()
    else:
        W = np.asarray(weight, dtype=float) * np.outer(scale, scale)
        W = W / (np.trace(W) / W.shape[0])
    X = _features(params, X_params)

    rng = np.random.default_rng(cfg.seed)
    b1, b2, eps = 0.9, 0.999, 1e-8
    slots = []
    for L in layers:
        slots.append([np.zeros_like(L.W), np.zeros_like(L.W),
                      None if L.b is None else np.zeros_like(L.b),
                      None if L.b is None else np.zeros_like(L.b)])
    history: list[float] = []
    N = X.shape[0]
    bs = N if cfg.batch_size is None else min(cfg.batch_size, N)
    step = 0
    initial = None
    for epoch in range(cfg.epochs):
        perm = np.arange(N) if bs == N else rng.permutation(N)
        epoch_loss = 0.0
        for start in range(0, N, bs):
            idx = perm[start:start + bs]
            loss, grads = loss_and_grad(layers, X[idx], Ts[idx], W)
            epoch_loss += loss * idx.size / N
            step += 1
            c1, c2 = 1 - b1**step, 1 - b2**step
            for L, (gW, gb), s in zip(layers, grads, slots):
                s[0] *= b1
                s[0] += (1 - b1) * gW
                s[1] *= b2
                s[1] += (1 - b2) * gW**2
                L.W -= cfg.learning_rate * (s[0] / c1) / (np.sqrt(s[1] / c2) + eps)
                if gb is not None:
                    s[2] *= b1
                    s[2] += (1 - b1) * gb
                    s[3] *= b2
                    s[3] += (1 - b2) * gb**2
                    L.b -= cfg.learning_rate * (s[2] / c1) / (np.sqrt(s[3] / c2) + eps)
        history.append(epoch_loss)
        if initial is None:
            initial = epoch_loss
        if not np.isfinite(epoch_loss) or epoch_loss > cfg.divergence_factor * max(initial, 1e-300):
            raise TrainingDivergence(f"training diverged at epoch {epoch}", history)
    final, _ = loss_and_grad(layers, X, Ts, W)
    history.append(final)
    logger.debug("trained %d epochs: loss %.3e -> %.3e", cfg.epochs, history[0], final)
    return params, history
