"""Differentiable-numerics core: layer primitives with explicit forward/backward
passes, Adam, a warmup/decay learning-rate schedule, and a finite-difference
gradient oracle.

All tensors are dense 2-D float64 numpy arrays.  Every forward returns
``(out, cache)``; the matching backward consumes the cache and the upstream
gradient and returns exact analytic gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import BatchTooSmallError, ShapeError

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={m.ndim}")
    return m


def check_finite(m: np.ndarray, what: str = "matrix") -> np.ndarray:
    if not np.all(np.isfinite(m)):
        raise ShapeError(f"{what} contains non-finite entries")
    return m


# ---------------------------------------------------------------------------
# parameters


@dataclass
class Param:
    """One named parameter with a paired gradient buffer.

    Non-trainable entries (e.g. batch-norm running stats) keep the same
    storage so checkpoints and aggregation treat them uniformly, but the
    optimizer skips them.
    """

    value: np.ndarray
    grad: np.ndarray = None
    trainable: bool = True

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        if self.grad.shape != self.value.shape:
            raise ShapeError("grad shape does not match value shape")


class ParamSet:
    """Ordered name -> Param map; insertion order is the serialization order."""

    def __init__(self):
        self._entries: dict[str, Param] = {}

    def add(self, name: str, value: np.ndarray, trainable: bool = True) -> Param:
        if name in self._entries:
            raise ValueError(f"duplicate parameter name {name!r}")
        p = Param(value=np.array(value, dtype=np.float64), trainable=trainable)
        self._entries[name] = p
        return p

    def __getitem__(self, name: str) -> Param:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __iter__(self):
        return iter(self._entries.items())

    def names(self) -> list[str]:
        return list(self._entries)

    def zero_grad(self):
        for p in self._entries.values():
            p.grad[...] = 0.0

    def copy(self) -> "ParamSet":
        out = ParamSet()
        for name, p in self._entries.items():
            out.add(name, p.value.copy(), trainable=p.trainable)
        return out

    def copy_values_from(self, other: "ParamSet"):
        if self.names() != other.names():
            raise ShapeError("parameter sets have different entries")
        for name, p in self._entries.items():
            p.value[...] = other[name].value

    def flat_values(self) -> np.ndarray:
        return np.concatenate([p.value.ravel() for p in self._entries.values()]) \
            if self._entries else np.zeros(0)


# ---------------------------------------------------------------------------
# layer primitives


def matmul_bias(x, W, b):
    """out = x @ W + b (b broadcast per row).  Returns (out, cache)."""
    x, W = as_matrix(x), as_matrix(W)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if x.shape[1] != W.shape[0]:
        raise ShapeError(f"inner dims disagree: {x.shape} @ {W.shape}")
    if b.shape[0] != W.shape[1]:
        raise ShapeError(f"bias length {b.shape[0]} != output dim {W.shape[1]}")
    out = x @ W + b
    return out, (x, W)


def matmul_bias_backward(cache, d_out):
    x, W = cache
    d_out = np.asarray(d_out, dtype=np.float64)
    d_x = d_out @ W.T
    d_W = x.T @ d_out
    d_b = d_out.sum(axis=0)
    return d_x, d_W, d_b


def relu(x):
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0), x


def relu_backward(cache, d_out):
    # gradient at exactly 0 is 0
    return np.where(cache > 0.0, d_out, 0.0)


def row_maxpool(x):
    """Column-wise max over rows: (W, D) -> (D,).  Ties break to lowest row."""
    x = as_matrix(x)
    if x.shape[0] == 0:
        raise ShapeError("row_maxpool on empty input")
    idx = np.argmax(x, axis=0)  # argmax returns the first (lowest) index on ties
    out = x[idx, np.arange(x.shape[1])]
    return out, idx, x.shape


def row_maxpool_backward(idx, shape, d_out):
    d_x = np.zeros(shape)
    d_x[idx, np.arange(shape[1])] = d_out
    return d_x


def batchnorm1d(x, gamma, beta, running_mean, running_var, train: bool):
    """Batch normalization over the batch axis.

    Train mode normalizes by batch statistics and updates running stats in
    place (momentum 0.1); eval mode normalizes by the running stats.
    """
    x = as_matrix(x)
    gamma = np.asarray(gamma, dtype=np.float64).reshape(-1)
    beta = np.asarray(beta, dtype=np.float64).reshape(-1)
    if train:
        if x.shape[0] < 2:
            raise BatchTooSmallError(
                f"batch norm in train mode needs B >= 2, got B={x.shape[0]}")
        mean = x.mean(axis=0)
        var = x.var(axis=0)
        running_mean[...] = (1 - BN_MOMENTUM) * running_mean + BN_MOMENTUM * mean
        running_var[...] = (1 - BN_MOMENTUM) * running_var + BN_MOMENTUM * var
    else:
        mean = np.asarray(running_mean, dtype=np.float64).reshape(-1)
        var = np.asarray(running_var, dtype=np.float64).reshape(-1)
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    x_hat = (x - mean) * inv_std
    out = gamma * x_hat + beta
    return out, (x_hat, inv_std, gamma, train, x.shape[0])


def batchnorm1d_backward(cache, d_out):
    x_hat, inv_std, gamma, train, B = cache
    d_out = np.asarray(d_out, dtype=np.float64)
    d_gamma = (d_out * x_hat).sum(axis=0)
    d_beta = d_out.sum(axis=0)
    d_xhat = d_out * gamma
    if train:
        d_x = (inv_std / B) * (
            B * d_xhat
            - d_xhat.sum(axis=0)
            - x_hat * (d_xhat * x_hat).sum(axis=0)
        )
    else:
        d_x = d_xhat * inv_std
    return d_x, d_gamma, d_beta


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    """Per-parameter Adam moments and step counter."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_shape(cls, shape, beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        return cls(m=np.zeros(shape), v=np.zeros(shape),
                   beta1=beta1, beta2=beta2, eps=eps)


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState, lr: float):
    """Standard bias-corrected Adam; updates param and state in place."""
    if param.shape != grad.shape:
        raise ShapeError("param/grad shape mismatch in adam_step")
    state.t += 1
    state.m = state.beta1 * state.m + (1 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1 - state.beta2) * grad * grad
    m_hat = state.m / (1 - state.beta1 ** state.t)
    v_hat = state.v / (1 - state.beta2 ** state.t)
    param -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return param


class ParamSetOptimizer:
    """Adam over every trainable entry of a ParamSet, one state per entry."""

    def __init__(self, params: ParamSet, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.states = {
            name: AdamState.for_shape(p.value.shape, beta1, beta2, eps)
            for name, p in params if p.trainable
        }

    def step(self, lr: float):
        for name, p in self.params:
            if p.trainable:
                adam_step(p.value, p.grad, self.states[name], lr)


# ---------------------------------------------------------------------------
# learning-rate schedule


@dataclass
class LrSchedule:
    """Linear warmup then step decay at fixed epoch boundaries."""

    base_lr: float
    warmup_steps: int = 0
    decay_rate: float = 1.0
    decay_epochs: list = field(default_factory=list)
    steps_per_epoch: int = 1


def lr_at(schedule: LrSchedule, global_step: int) -> float:
    if global_step < 0:
        raise ValueError("global_step must be >= 0")
    if schedule.warmup_steps > 0 and global_step < schedule.warmup_steps:
        return schedule.base_lr * (global_step + 1) / schedule.warmup_steps
    epoch = global_step // max(schedule.steps_per_epoch, 1)
    n_decays = sum(1 for e in schedule.decay_epochs if epoch >= e)
    return schedule.base_lr * schedule.decay_rate ** n_decays


# ---------------------------------------------------------------------------
# gradient oracle


def finite_difference_gradient(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central differences of a scalar function entry by entry."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        xp = x.copy()
        xp[i] += h
        xm = x.copy()
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    num = np.abs(a - b).max(initial=0.0)
    den = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1e-8)
    return num / den
