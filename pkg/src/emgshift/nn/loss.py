"""Class-rate weighted focal loss."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import softmax

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class FocalConfig:
    gamma: float = 2.0
    alpha: tuple | None = None  # None: per-batch label rate

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if self.alpha is not None and min(self.alpha) < 0:
            raise ValueError("alpha must be non-negative")


def label_rate(labels, n_classes: int) -> np.ndarray:
    """Fraction of the batch carrying each label."""
    labels = np.asarray(labels).ravel()
    return np.bincount(labels, minlength=n_classes) / max(labels.size, 1)


def focal_loss(probs, labels, cfg: FocalConfig = FocalConfig()):
    """Summed focal loss and its gradient with respect to ``probs``.

    ``sum_n alpha[y_n] * (1 - p_n)**gamma * CE_n`` with ``CE_n = -log p_n``
    and ``p_n`` the probability of the true class, floored at 1e-12.
    """
    probs = np.asarray(probs)
    labels = np.asarray(labels).ravel()
    P = probs.reshape(-1, probs.shape[-1])
    K = P.shape[1]
    alpha = label_rate(labels, K) if cfg.alpha is None else np.asarray(cfg.alpha, dtype=P.dtype)
    rows = np.arange(labels.size)
    p_raw = P[rows, labels]
    p = np.maximum(p_raw, PROB_FLOOR)
    ce = -np.log(p)
    a = alpha[labels]
    q = 1.0 - p
    loss = float(np.sum(a * q**cfg.gamma * ce))
    if cfg.gamma == 0:
        dldp = -a / p
    else:
        dldp = a * (cfg.gamma * q ** (cfg.gamma - 1) * np.log(p) - q**cfg.gamma / p)
    dldp = np.where(p_raw > PROB_FLOOR, dldp, 0.0)
    dP = np.zeros_like(P)
    dP[rows, labels] = dldp
    return loss, dP.reshape(probs.shape)


def softmax_focal(logits, labels, cfg: FocalConfig = FocalConfig()):
    """Softmax followed by :func:`focal_loss`; returns ``(loss, probs, dlogits)``."""
    probs = softmax(logits)
    loss, dP = focal_loss(probs, labels, cfg)
    # softmax Jacobian-vector product
    dz = probs * (dP - (dP * probs).sum(axis=-1, keepdims=True))
    return loss, probs, dz
