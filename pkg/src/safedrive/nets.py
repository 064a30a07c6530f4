"""Minimal dense-network stack: tanh MLPs with exact reverse-mode gradients
and an adaptive-moment optimizer.

Parameters live in float32 (the checkpoint format's precision); gradient
checks run the same code in float64 via :meth:`DenseNet.astype`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HEADS = ("linear", "softmax", "gaussian")

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0


def orthogonal(rng: np.random.Generator, shape: tuple[int, int], gain: float = 1.0) -> np.ndarray:
    """Orthogonal-style init: orthonormal rows/columns scaled by ``gain``."""
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return (gain * q[:rows, :cols]).astype(np.float32)


@dataclass
class DenseNet:
    """MLP with tanh hidden activations and a configurable output head.

    ``params`` holds [W0, b0, W1, b1, ...] with W of shape (in, out); a
    gaussian head appends one log-std vector (state independent, clamped to
    [LOG_STD_MIN, LOG_STD_MAX]).
    """

    layer_sizes: list[int]
    head: str
    params: list[np.ndarray]

    def __post_init__(self):
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}")
        expected = 2 * (len(self.layer_sizes) - 1) + (1 if self.head == "gaussian" else 0)
        if len(self.params) != expected:
            raise ValueError("parameter count inconsistent with layer_sizes/head")

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def log_std(self) -> np.ndarray:
        if self.head != "gaussian":
            raise AttributeError("log_std only exists on gaussian heads")
        return np.clip(self.params[-1], LOG_STD_MIN, LOG_STD_MAX)

    def copy(self) -> "DenseNet":
        return DenseNet(list(self.layer_sizes), self.head, [p.copy() for p in self.params])

    def astype(self, dtype) -> "DenseNet":
        return DenseNet(list(self.layer_sizes), self.head, [p.astype(dtype) for p in self.params])

    def n_params(self) -> int:
        return int(sum(p.size for p in self.params))


def init_dense(
    layer_sizes: list[int],
    head: str,
    rng: np.random.Generator,
    final_scale: float = 1.0,
    log_std_init: float = -0.5,
) -> DenseNet:
    if len(layer_sizes) < 2:
        raise ValueError("need at least input and output sizes")
    params: list[np.ndarray] = []
    n_layers = len(layer_sizes) - 1
    for i in range(n_layers):
        gain = final_scale if i == n_layers - 1 else 1.0
        params.append(orthogonal(rng, (layer_sizes[i], layer_sizes[i + 1]), gain=gain))
        params.append(np.zeros(layer_sizes[i + 1], dtype=np.float32))
    if head == "gaussian":
        params.append(np.full(layer_sizes[-1], log_std_init, dtype=np.float32))
    return DenseNet(list(layer_sizes), head, params)


def forward(net: DenseNet, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Run the net on a (B, in_dim) batch or a single (in_dim,) vector.

    Returns (output, cache). Softmax heads return probabilities; gaussian
    heads return the mean (log-std is read off ``net.log_std``). The cache
    feeds :func:`backward`.
    """
    squeeze = x.ndim == 1
    h = np.atleast_2d(np.asarray(x, dtype=net.params[0].dtype))
    if h.shape[1] != net.in_dim:
        raise ValueError(f"input dim {h.shape[1]} != expected {net.in_dim}")
    cache = [h]
    n_layers = len(net.layer_sizes) - 1
    for i in range(n_layers):
        w, b = net.params[2 * i], net.params[2 * i + 1]
        h = h @ w + b
        if i < n_layers - 1:
            h = np.tanh(h)
        cache.append(h)
    z = h  # pre-head linear output
    if net.head == "softmax":
        out = _softmax(z)
    else:
        out = z
    return (out[0] if squeeze else out), cache


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def backward(
    net: DenseNet,
    cache: list[np.ndarray],
    grad_z: np.ndarray,
    grad_log_std: np.ndarray | None = None,
) -> list[np.ndarray]:
    """Exact gradients for all parameters given dLoss/dz at the pre-head
    linear output (plus dLoss/dlog_std for gaussian heads).

    For softmax heads compose the head derivative yourself (for NLL use
    :func:`softmax_nll_grad`, which yields dL/dz directly).
    """
    if not cache:
        raise ValueError("forward cache required")
    g = np.atleast_2d(np.asarray(grad_z, dtype=cache[0].dtype))
    n_layers = len(net.layer_sizes) - 1
    grads: list[np.ndarray] = [np.zeros_like(p) for p in net.params]
    if net.head == "gaussian":
        if grad_log_std is None:
            grad_log_std = np.zeros(net.out_dim, dtype=cache[0].dtype)
        # clamp passes gradient only inside the active range
        mask = (net.params[-1] > LOG_STD_MIN) & (net.params[-1] < LOG_STD_MAX)
        grads[-1] = (grad_log_std * mask).astype(net.params[-1].dtype)

    for i in reversed(range(n_layers)):
        a_in = cache[i]
        grads[2 * i] = a_in.T @ g
        grads[2 * i + 1] = g.sum(axis=0)
        if i > 0:
            g = (g @ net.params[2 * i].T) * (1.0 - cache[i] ** 2)
    return grads


def softmax_nll_grad(probs: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood of ``labels`` and its gradient dL/dz.

    ``probs`` are softmax outputs (B, K); ``labels`` integer classes (B,).
    Probabilities are floored at 1e-12 inside the log.
    """
    probs = np.atleast_2d(probs)
    labels = np.asarray(labels, dtype=np.int64)
    b = probs.shape[0]
    picked = probs[np.arange(b), labels]
    loss = float(-np.mean(np.log(np.maximum(picked, 1e-12))))
    grad_z = probs.copy()
    grad_z[np.arange(b), labels] -= 1.0
    return loss, grad_z / b


# ---------------------------------------------------------------------------
# Adaptive-moment optimizer
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_net(cls, net: DenseNet, lr: float = 3e-4) -> "AdamState":
        return cls(
            lr=lr,
            m=[np.zeros_like(p) for p in net.params],
            v=[np.zeros_like(p) for p in net.params],
        )


def adam_step(state: AdamState, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
    """In-place adaptive-moment update of ``params``."""
    if len(params) != len(state.m) or len(params) != len(grads):
        raise ValueError("parameter/gradient/moment shapes do not line up")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1**t
    bias2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError("gradient shape mismatch")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = (state.lr / bias1) * m / (np.sqrt(v / bias2) + state.eps)
        p -= update.astype(p.dtype)
