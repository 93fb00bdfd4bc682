"""Contrastive and classification losses with analytic gradients.

The contrastive loss scores each matched pair of head/tail representations
against the in-batch negatives via temperature-scaled dot products.  Two
denominator conventions ship:

* ``exclude_positive`` excludes the positive term from the denominator
  (so per-row losses can be negative),
* ``standard`` includes it (the usual softmax cross-entropy form, >= 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import BatchTooSmallError, ConfigError, ShapeError


@dataclass
class InfoNceConfig:
    temperature: float = 0.07
    variant: str = "exclude_positive"      # exclude_positive | standard
    reduction: str = "sum"            # sum | mean
    l2_normalize: bool = False
    symmetric: bool = False           # add the tail->head direction as well

    def __post_init__(self):
        if self.temperature <= 0:
            raise ConfigError("temperature must be > 0")
        if self.variant not in ("exclude_positive", "standard"):
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.reduction not in ("sum", "mean"):
            raise ConfigError(f"unknown reduction {self.reduction!r}")


def _l2_rows(v):
    norms = np.sqrt((v * v).sum(axis=1, keepdims=True))
    norms = np.maximum(norms, 1e-12)
    return v / norms, norms


def _nce_direction(logits: np.ndarray, variant: str):
    """Loss and gradient w.r.t. logits for anchors along rows."""
    B = logits.shape[0]
    eye = np.eye(B, dtype=bool)
    if variant == "exclude_positive":
        neg = np.where(eye, -np.inf, logits)
        m = neg.max(axis=1, keepdims=True)
        lse = m[:, 0] + np.log(np.exp(neg - m).sum(axis=1))
        loss = float((-logits[eye] + lse).sum())
        p = np.exp(neg - m)
        p /= p.sum(axis=1, keepdims=True)
        d_logits = p - np.eye(B)
    else:
        m = logits.max(axis=1, keepdims=True)
        lse = m[:, 0] + np.log(np.exp(logits - m).sum(axis=1))
        loss = float((-logits[eye] + lse).sum())
        p = np.exp(logits - m)
        p /= p.sum(axis=1, keepdims=True)
        d_logits = p - np.eye(B)
    return loss, d_logits


def info_nce(v_head: np.ndarray, v_tail: np.ndarray, cfg: InfoNceConfig):
    """Returns (loss, d_v_head, d_v_tail)."""
    v_head = np.asarray(v_head, dtype=np.float64)
    v_tail = np.asarray(v_tail, dtype=np.float64)
    if v_head.shape != v_tail.shape or v_head.ndim != 2:
        raise ShapeError(f"mismatched shapes {v_head.shape} vs {v_tail.shape}")
    B = v_head.shape[0]
    if B < 2:
        raise BatchTooSmallError("contrastive loss needs B >= 2")

    h, t = v_head, v_tail
    if cfg.l2_normalize:
        h, h_norms = _l2_rows(v_head)
        t, t_norms = _l2_rows(v_tail)

    logits = h @ t.T / cfg.temperature
    loss, d_logits = _nce_direction(logits, cfg.variant)
    if cfg.symmetric:
        loss_t, d_logits_t = _nce_direction(logits.T, cfg.variant)
        loss += loss_t
        d_logits = d_logits + d_logits_t.T

    d_h = d_logits @ t / cfg.temperature
    d_t = d_logits.T @ h / cfg.temperature

    if cfg.l2_normalize:
        # back through row normalization: d_v = (d_u - (d_u . u) u) / ||v||
        d_h = (d_h - (d_h * h).sum(axis=1, keepdims=True) * h) / h_norms
        d_t = (d_t - (d_t * t).sum(axis=1, keepdims=True) * t) / t_norms

    if cfg.reduction == "mean":
        loss /= B
        d_h /= B
        d_t /= B
    return loss, d_h, d_t


def softmax_nll(logits: np.ndarray, targets: np.ndarray):
    """Mean negative log likelihood over the batch; returns (loss, d_logits)."""
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    B, C = logits.shape
    if targets.shape != (B,):
        raise ShapeError(f"targets must have shape ({B},), got {targets.shape}")
    if targets.min(initial=0) < 0 or targets.max(initial=0) >= C:
        raise IndexError("target class index out of range")
    m = logits.max(axis=1, keepdims=True)
    z = np.exp(logits - m)
    p = z / z.sum(axis=1, keepdims=True)
    loss = float(-np.log(p[np.arange(B), targets]).mean())
    d_logits = p.copy()
    d_logits[np.arange(B), targets] -= 1.0
    d_logits /= B
    return loss, d_logits
