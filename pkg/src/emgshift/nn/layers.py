"""Forward/backward pairs for the network layers.

Activations are channels-last: frames are ``[N, L, C]`` (batch, time,
channel), vectors ``[N, C]``.  Every ``*_forward`` returns ``(y, cache)`` and
the matching ``*_backward`` takes ``(dy, cache)`` and returns ``dx`` plus a
dict of parameter gradients where the layer has parameters.
"""
from __future__ import annotations

import numpy as np

LN_EPS = 1e-5
BLUR_KERNEL = np.array([0.25, 0.5, 0.25])


# ---------------------------------------------------------------------------
# layer normalization


def layer_norm_forward(x, gamma, beta, axes, eps: float = LN_EPS):
    """Normalize over ``axes`` then apply a per-channel (last axis) affine."""
    mu = x.mean(axis=axes, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    return xhat * gamma + beta, (xhat, inv, gamma, axes)


def layer_norm_backward(dy, cache):
    xhat, inv, gamma, axes = cache
    red = tuple(range(dy.ndim - 1))
    dgamma = (dy * xhat).sum(axis=red)
    dbeta = dy.sum(axis=red)
    g = dy * gamma
    m = int(np.prod([dy.shape[a] for a in axes]))
    dx = inv * (g - g.sum(axis=axes, keepdims=True) / m
                - xhat * (g * xhat).sum(axis=axes, keepdims=True) / m)
    return dx, {"gamma": dgamma, "beta": dbeta}


# ---------------------------------------------------------------------------
# elementwise


def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(dy, mask):
    return dy * mask


def dropout_mask(shape, rate: float, rng: np.random.Generator, dtype=np.float64):
    """Inverted-dropout mask: zeros with probability ``rate``, else ``1/(1-rate)``."""
    if rate <= 0:
        return None
    dtype = np.dtype(dtype)
    draw = rng.random(shape, dtype=dtype if dtype in (np.float32, np.float64) else np.float64)
    return (draw >= rate).astype(dtype) * dtype.type(1.0 / (1.0 - rate))


def dropout_forward(x, rate: float, training: bool, rng: np.random.Generator | None):
    if not training or rate <= 0:
        return x, None
    if rng is None:
        raise ValueError("training-mode dropout needs a random generator")
    mask = dropout_mask(x.shape, rate, rng, x.dtype)
    return x * mask, mask


def dropout_backward(dy, mask):
    return dy if mask is None else dy * mask


# ---------------------------------------------------------------------------
# convolution and pooling


def conv1d_forward(x, W, b, padding: int = 2):
    """Same-channel 1-D convolution, stride 1.

    ``x`` is ``[N, L, Cin]``, ``W`` is ``[K, Cin, Cout]``; output length is
    ``L + 2*padding - K + 1``.
    """
    K = W.shape[0]
    N, L, C = x.shape
    xp = np.pad(x, ((0, 0), (padding, padding), (0, 0)))
    Lout = L + 2 * padding - K + 1
    cols = np.concatenate([xp[:, k:k + Lout] for k in range(K)], axis=2)
    y = cols.reshape(N * Lout, K * C) @ W.reshape(K * C, -1)
    return (y + b).reshape(N, Lout, -1), (cols, W, padding, L)


def conv1d_backward(dy, cache):
    cols, W, padding, L = cache
    K, C, Cout = W.shape
    N, Lout, _ = dy.shape
    d2 = dy.reshape(N * Lout, Cout)
    dW = (cols.reshape(N * Lout, K * C).T @ d2).reshape(W.shape)
    db = d2.sum(axis=0)
    dcols = (d2 @ W.reshape(K * C, Cout).T).reshape(N, Lout, K, C)
    dxp = np.zeros((N, L + 2 * padding, C), dtype=dy.dtype)
    for k in range(K):
        dxp[:, k:k + Lout] += dcols[:, :, k]
    return dxp[:, padding:padding + L], {"W": dW, "b": db}


def blur_pool_forward(x, stride: int = 2, padding: int = 1):
    """Fixed ``[1, 2, 1]/4`` low-pass per channel, then stride-2 subsampling."""
    N, L, C = x.shape
    xp = np.pad(x, ((0, 0), (padding, padding), (0, 0)))
    Lout = (L + 2 * padding - 3) // stride + 1
    k = BLUR_KERNEL.astype(x.dtype)
    idx = np.arange(Lout) * stride
    y = k[0] * xp[:, idx] + k[1] * xp[:, idx + 1] + k[2] * xp[:, idx + 2]
    return y, (L, stride, padding)


def blur_pool_backward(dy, cache):
    L, stride, padding = cache
    N, Lout, C = dy.shape
    dxp = np.zeros((N, L + 2 * padding, C), dtype=dy.dtype)
    span = stride * (Lout - 1) + 1
    for j, kj in enumerate(BLUR_KERNEL):
        dxp[:, j:j + span:stride] += float(kj) * dy
    return dxp[:, padding:padding + L]


def gap_forward(x):
    return x.mean(axis=1), x.shape[1]


def gap_backward(dy, L):
    return np.repeat(dy[:, None, :] / L, L, axis=1)


# ---------------------------------------------------------------------------
# dense, softmax, gradient reversal


def linear_forward(x, W, b):
    return x @ W + b, x


def linear_backward(dy, x, W):
    x2 = x.reshape(-1, x.shape[-1])
    d2 = dy.reshape(-1, dy.shape[-1])
    return dy @ W.T, {"W": x2.T @ d2, "b": d2.sum(axis=0)}


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def grl_forward(x):
    return x


def grl_backward(dy, lam: float):
    return -lam * dy


# ---------------------------------------------------------------------------
# LSTM


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def lstm_step(x_t, h, c, Wx, Wh, b):
    """One cell update.  Gate order in the 4C axis: input, forget, cell, output."""
    z = x_t @ Wx + h @ Wh + b
    H = h.shape[-1]
    i = _sigmoid(z[..., :H])
    f = _sigmoid(z[..., H:2 * H])
    g = np.tanh(z[..., 2 * H:3 * H])
    o = _sigmoid(z[..., 3 * H:])
    c_new = f * c + i * g
    h_new = o * np.tanh(c_new)
    return h_new, c_new, (i, f, g, o)


def lstm_forward(x, Wx, Wh, b):
    """Run over ``x`` of shape ``[B, T, C]`` from a zero state."""
    B, T, _ = x.shape
    H = Wh.shape[0]
    xz = x @ Wx + b
    h = np.zeros((B, H), dtype=x.dtype)
    c = np.zeros((B, H), dtype=x.dtype)
    hs = np.empty((B, T, H), dtype=x.dtype)
    cs = np.empty((B, T, H), dtype=x.dtype)
    gates = np.empty((B, T, 4 * H), dtype=x.dtype)
    for t in range(T):
        z = xz[:, t] + h @ Wh
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = _sigmoid(z[:, 3 * H:])
        c = f * c + i * g
        h = o * np.tanh(c)
        hs[:, t], cs[:, t] = h, c
        gates[:, t] = np.concatenate([i, f, g, o], axis=1)
    return hs, (x, hs, cs, gates, Wx, Wh)


def lstm_backward(dhs, cache):
    x, hs, cs, gates, Wx, Wh = cache
    B, T, H = hs.shape
    dz = np.empty_like(gates)
    dh_next = np.zeros((B, H), dtype=hs.dtype)
    dc_next = np.zeros((B, H), dtype=hs.dtype)
    for t in range(T - 1, -1, -1):
        i, f, g, o = (gates[:, t, k * H:(k + 1) * H] for k in range(4))
        c = cs[:, t]
        c_prev = cs[:, t - 1] if t > 0 else np.zeros_like(c)
        tc = np.tanh(c)
        dh = dhs[:, t] + dh_next
        dc = dc_next + dh * o * (1 - tc * tc)
        dz[:, t, :H] = dc * g * i * (1 - i)
        dz[:, t, H:2 * H] = dc * c_prev * f * (1 - f)
        dz[:, t, 2 * H:3 * H] = dc * i * (1 - g * g)
        dz[:, t, 3 * H:] = dh * tc * o * (1 - o)
        dc_next = dc * f
        dh_next = dz[:, t] @ Wh.T
    h_prev = np.concatenate([np.zeros((B, 1, H), dtype=hs.dtype), hs[:, :-1]], axis=1)
    dz2 = dz.reshape(B * T, 4 * H)
    grads = {
        "Wx": x.reshape(B * T, -1).T @ dz2,
        "Wh": h_prev.reshape(B * T, H).T @ dz2,
        "b": dz2.sum(axis=0),
    }
    return dz @ Wx.T, grads
