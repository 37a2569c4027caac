"""Reverse-mode versus central finite-difference gradient comparison."""
from __future__ import annotations

import numpy as np

from . import layers as nl
from .loss import FocalConfig, softmax_focal
from .model import CnnLstm, ModelConfig, param_group

FD_STEP = 1e-5


def rel_error(a, n) -> float:
    """``max|a - n| / max(max|a|, max|n|, 1e-12)``."""
    a, n = np.asarray(a), np.asarray(n)
    return float(np.abs(a - n).max() / max(np.abs(a).max(), np.abs(n).max(), 1e-12))


def numeric_grad(f, x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central differences of scalar ``f()`` with respect to ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def _tiny_batch(cfg: ModelConfig, rng, B=2, T=3, L=8):
    X = rng.normal(size=(B, T, L, cfg.n_channels))
    y = rng.integers(0, cfg.n_classes, size=(B, T))
    d = rng.integers(0, cfg.n_domains, size=(B, T))
    return X, y, d


def check_model(cfg: ModelConfig, seed: int = 0, B: int = 2, T: int = 3, L: int = 8,
                training: bool = True, corrupt: float = 0.0) -> dict[str, float]:
    """Per-parameter-tensor relative error for the whole network.

    Dropout masks are frozen by reseeding.  With the domain head enabled the
    two losses are differenced separately: parameters feeding the gradient
    reversal see ``-lambda`` times the domain-loss slope.  ``corrupt`` scales
    the analytic gradients by ``1 + corrupt`` (fault injection).
    """
    rng = np.random.default_rng(seed)
    model = CnnLstm(cfg, seed=seed)
    X, y, d = _tiny_batch(cfg, rng, B, T, L)
    mask_seed = seed + 1

    def parts():
        r = np.random.default_rng(mask_seed)
        f, _ = model.cnn_forward(X.reshape(B * T, L, -1), training, r)
        logits, dlog, _ = model.heads_forward(f.reshape(B, T, -1), training, r)
        lm = softmax_focal(logits, y, cfg.focal)[0]
        ld = softmax_focal(dlog, d, cfg.focal)[0] if cfg.ada else 0.0
        return lm, ld

    _, grads, _ = model.loss_and_grads(X, y, d, training, np.random.default_rng(mask_seed))
    report = {}
    for name, w in model.params.items():
        nm = numeric_grad(lambda: parts()[0], w)
        if cfg.ada:
            nd = numeric_grad(lambda: parts()[1], w)
            grp = param_group(name)
            s = 1.0 if grp == "ada" else (0.0 if grp == "out" else -cfg.grl_lambda)
            nm = nm + s * cfg.domain_weight * nd
        report[name] = rel_error(grads[name] * (1 + corrupt), nm)
    return report


def check_linear(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    x, W, b = rng.normal(size=(5, 4)), rng.normal(size=(4, 3)), rng.normal(size=3)
    g = rng.normal(size=(5, 3))
    f = lambda: float((nl.linear_forward(x, W, b)[0] * g).sum())
    dx, gr = nl.linear_backward(g, x, W)
    return max(rel_error(dx, numeric_grad(f, x)), rel_error(gr["W"], numeric_grad(f, W)),
               rel_error(gr["b"], numeric_grad(f, b)))


def check_lstm(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    C = 4
    x = rng.normal(size=(2, 5, C))
    Wx, Wh = rng.normal(scale=0.5, size=(C, 4 * C)), rng.normal(scale=0.5, size=(C, 4 * C))
    b = rng.normal(scale=0.5, size=4 * C)
    g = rng.normal(size=(2, 5, C))
    f = lambda: float((nl.lstm_forward(x, Wx, Wh, b)[0] * g).sum())
    _, cache = nl.lstm_forward(x, Wx, Wh, b)
    dx, gr = nl.lstm_backward(g, cache)
    return max(rel_error(dx, numeric_grad(f, x)), rel_error(gr["Wx"], numeric_grad(f, Wx)),
               rel_error(gr["Wh"], numeric_grad(f, Wh)), rel_error(gr["b"], numeric_grad(f, b)))


def check_focal(seed: int = 0, gamma: float = 2.0) -> float:
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(7, 3))
    y = rng.integers(0, 3, size=7)
    cfg = FocalConfig(gamma=gamma)
    f = lambda: softmax_focal(z, y, cfg)[0]
    return rel_error(softmax_focal(z, y, cfg)[2], numeric_grad(f, z))


def grad_check(n_channels: int = 4, n_frames: int = 3, seed: int = 0,
               corrupt: float = 0.0) -> dict[str, float]:
    """Report of max relative errors: layer-level checks plus every tensor of
    the tiny network with and without the domain head."""
    report = {
        "layer:linear": check_linear(seed),
        "layer:lstm": check_lstm(seed),
        "loss:focal_logits": check_focal(seed),
    }
    for ada in (False, True):
        cfg = ModelConfig(n_channels=n_channels, ada=ada)
        for k, v in check_model(cfg, seed, T=n_frames, corrupt=corrupt).items():
            report[f"model{'+ada' if ada else ''}:{k}"] = v
    return report
