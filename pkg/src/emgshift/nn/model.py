"""CNN-LSTM motion classifier with an optional adversarial domain head.

Input is a batch of frame sequences ``X[B, T, L, C]``: ``B`` sequences of
``T`` feature frames, each ``L`` samples by ``C`` channels.  The CNN maps
every frame to a ``C``-vector, two stacked LSTMs run along ``T`` and the
heads emit per-frame class (and domain) probabilities.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layers as nl
from .loss import FocalConfig, softmax_focal

LN_AXES = {"frame": (1, 2), "time": (1,)}


@dataclass(frozen=True)
class ModelConfig:
    n_channels: int
    n_classes: int = 3
    n_domains: int = 3
    ada: bool = False
    grl_lambda: float = 1.0
    domain_weight: float = 1.0
    block_dropout: tuple = (0.1, 0.2, 0.3, 0.4)
    lstm_dropout: float = 0.1
    conv_padding: int = 2
    blur_after_block: int = 2
    ln_axes: str = "frame"
    focal: FocalConfig = field(default_factory=FocalConfig)
    dtype: str = "float64"

    def __post_init__(self):
        if self.n_channels < 1:
            raise ValueError("n_channels must be positive")
        if self.ln_axes not in LN_AXES:
            raise ValueError(f"ln_axes must be one of {sorted(LN_AXES)}")
        if not np.isfinite(self.grl_lambda):
            raise ValueError("grl_lambda must be finite")

    def frame_lengths(self, L: int) -> list[int]:
        """Frame length after each CNN stage."""
        out = []
        for k in range(1, len(self.block_dropout) + 1):
            L = L + 2 * self.conv_padding - 2
            if k == self.blur_after_block:
                L = (L - 1) // 2 + 1
            out.append(L)
        return out


def init_params(cfg: ModelConfig, seed=0) -> dict[str, np.ndarray]:
    """Uniform(+-1/sqrt(fan_in)) weights and biases, layer norms at (1, 0)."""
    rng = np.random.default_rng(seed)
    C, dt = cfg.n_channels, np.dtype(cfg.dtype)
    p: dict[str, np.ndarray] = {}

    def uni(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, shape).astype(dt)

    def ln(name, n):
        p[f"{name}.gamma"] = np.ones(n, dtype=dt)
        p[f"{name}.beta"] = np.zeros(n, dtype=dt)

    for k in range(1, len(cfg.block_dropout) + 1):
        ln(f"cnn.b{k}.ln", C)
        p[f"cnn.b{k}.conv.W"] = uni((3, C, C), 3 * C)
        p[f"cnn.b{k}.conv.b"] = uni((C,), 3 * C)
    ln("lstm.ln", C)
    for j in (1, 2):
        p[f"lstm.l{j}.Wx"] = uni((C, 4 * C), C)
        p[f"lstm.l{j}.Wh"] = uni((C, 4 * C), C)
        p[f"lstm.l{j}.b"] = uni((4 * C,), C)
    ln("out.ln", C)
    p["out.fc.W"] = uni((C, cfg.n_classes), C)
    p["out.fc.b"] = uni((cfg.n_classes,), C)
    if cfg.ada:
        ln("ada.ln1", C)
        p["ada.fc1.W"] = uni((C, C), C)
        p["ada.fc1.b"] = uni((C,), C)
        ln("ada.ln2", C)
        p["ada.fc2.W"] = uni((C, cfg.n_domains), C)
        p["ada.fc2.b"] = uni((cfg.n_domains,), C)
    return p


def param_group(name: str) -> str:
    return name.split(".", 1)[0]


class CnnLstm:
    def __init__(self, cfg: ModelConfig, params: dict | None = None, seed=0):
        self.cfg = cfg
        self.params = init_params(cfg, seed) if params is None else params
        self._check_params()

    def _check_params(self):
        ref = init_params(self.cfg, 0)
        if set(ref) != set(self.params):
            raise ValueError("parameter names do not match the configuration")
        for k, v in ref.items():
            if self.params[k].shape != v.shape:
                raise ValueError(f"{k}: shape {self.params[k].shape} != {v.shape}")

    @property
    def dtype(self):
        return np.dtype(self.cfg.dtype)

    def names(self, group: str | None = None) -> list[str]:
        return [k for k in self.params if group is None or param_group(k) == group]

    # -- CNN ---------------------------------------------------------------

    def cnn_forward(self, X, training: bool, rng=None):
        """``X[N, L, C]`` -> ``([N, C], cache)``."""
        p, cfg = self.params, self.cfg
        x = np.asarray(X, dtype=self.dtype)
        if x.ndim != 3 or x.shape[2] != cfg.n_channels:
            raise ValueError(f"expected [N, L, {cfg.n_channels}] frames, got {x.shape}")
        axes = LN_AXES[cfg.ln_axes]
        caches = []
        for k, rate in enumerate(cfg.block_dropout, start=1):
            x, c_ln = nl.layer_norm_forward(x, p[f"cnn.b{k}.ln.gamma"], p[f"cnn.b{k}.ln.beta"], axes)
            x, c_relu = nl.relu_forward(x)
            x, c_conv = nl.conv1d_forward(x, p[f"cnn.b{k}.conv.W"], p[f"cnn.b{k}.conv.b"], cfg.conv_padding)
            x, c_drop = nl.dropout_forward(x, rate, training, rng)
            c_blur = None
            if k == cfg.blur_after_block:
                x, c_blur = nl.blur_pool_forward(x)
            caches.append((c_ln, c_relu, c_conv, c_drop, c_blur))
        f, L = nl.gap_forward(x)
        return f, (caches, L)

    def cnn_backward(self, df, cache, grads: dict):
        caches, L = cache
        dx = nl.gap_backward(df, L)
        for k in range(len(caches), 0, -1):
            c_ln, c_relu, c_conv, c_drop, c_blur = caches[k - 1]
            if c_blur is not None:
                dx = nl.blur_pool_backward(dx, c_blur)
            dx = nl.dropout_backward(dx, c_drop)
            dx, g = nl.conv1d_backward(dx, c_conv)
            grads[f"cnn.b{k}.conv.W"], grads[f"cnn.b{k}.conv.b"] = g["W"], g["b"]
            dx = nl.relu_backward(dx, c_relu)
            dx, g = nl.layer_norm_backward(dx, c_ln)
            grads[f"cnn.b{k}.ln.gamma"], grads[f"cnn.b{k}.ln.beta"] = g["gamma"], g["beta"]
        return dx

    def features(self, X, batch_frames: int = 512) -> np.ndarray:
        """Eval-mode CNN features for ``X[B, T, L, C]`` -> ``[B, T, C]``."""
        X = np.asarray(X)
        B, T = X.shape[:2]
        flat = X.reshape((B * T,) + X.shape[2:])
        out = [self.cnn_forward(flat[i:i + batch_frames], False)[0]
               for i in range(0, flat.shape[0], batch_frames)]
        return np.concatenate(out).reshape(B, T, -1)

    # -- sequence heads ----------------------------------------------------

    def heads_forward(self, F, training: bool, rng=None):
        """``F[B, T, C]`` -> (class logits, domain logits or None, cache)."""
        p, cfg = self.params, self.cfg
        h, c_ln = nl.layer_norm_forward(F, p["lstm.ln.gamma"], p["lstm.ln.beta"], (2,))
        h, c_l1 = nl.lstm_forward(h, p["lstm.l1.Wx"], p["lstm.l1.Wh"], p["lstm.l1.b"])
        h, c_l2 = nl.lstm_forward(h, p["lstm.l2.Wx"], p["lstm.l2.Wh"], p["lstm.l2.b"])
        H, c_drop = nl.dropout_forward(h, cfg.lstm_dropout, training, rng)
        o, c_oln = nl.layer_norm_forward(H, p["out.ln.gamma"], p["out.ln.beta"], (2,))
        logits, c_ofc = nl.linear_forward(o, p["out.fc.W"], p["out.fc.b"])
        cache = {"ln": c_ln, "l1": c_l1, "l2": c_l2, "drop": c_drop, "oln": c_oln, "ofc": c_ofc}
        dlogits = None
        if cfg.ada:
            a = nl.grl_forward(H)
            a, cache["aln1"] = nl.layer_norm_forward(a, p["ada.ln1.gamma"], p["ada.ln1.beta"], (2,))
            a, cache["afc1"] = nl.linear_forward(a, p["ada.fc1.W"], p["ada.fc1.b"])
            a, cache["arelu"] = nl.relu_forward(a)
            a, cache["aln2"] = nl.layer_norm_forward(a, p["ada.ln2.gamma"], p["ada.ln2.beta"], (2,))
            dlogits, cache["afc2"] = nl.linear_forward(a, p["ada.fc2.W"], p["ada.fc2.b"])
        return logits, dlogits, cache

    def heads_backward(self, dlogits, ddom, cache, grads: dict):
        p, cfg = self.params, self.cfg

        def put(prefix, g):
            for k, v in g.items():
                grads[f"{prefix}.{k}"] = v

        do, g = nl.linear_backward(dlogits, cache["ofc"], p["out.fc.W"])
        put("out.fc", g)
        dH, g = nl.layer_norm_backward(do, cache["oln"])
        put("out.ln", g)
        if cfg.ada:
            da, g = nl.linear_backward(ddom, cache["afc2"], p["ada.fc2.W"])
            put("ada.fc2", g)
            da, g = nl.layer_norm_backward(da, cache["aln2"])
            put("ada.ln2", g)
            da = nl.relu_backward(da, cache["arelu"])
            da, g = nl.linear_backward(da, cache["afc1"], p["ada.fc1.W"])
            put("ada.fc1", g)
            da, g = nl.layer_norm_backward(da, cache["aln1"])
            put("ada.ln1", g)
            dH = dH + nl.grl_backward(da, cfg.grl_lambda)
        dh = nl.dropout_backward(dH, cache["drop"])
        dh, g = nl.lstm_backward(dh, cache["l2"])
        put("lstm.l2", g)
        dh, g = nl.lstm_backward(dh, cache["l1"])
        put("lstm.l1", g)
        dF, g = nl.layer_norm_backward(dh, cache["ln"])
        put("lstm.ln", g)
        return dF

    # -- whole model -------------------------------------------------------

    def forward(self, X, training: bool = False, rng=None):
        """Per-frame class probabilities ``[B, T, K]`` (and domain
        probabilities when the domain head is enabled)."""
        X = np.asarray(X)
        B, T = X.shape[:2]
        f, _ = self.cnn_forward(X.reshape((B * T,) + X.shape[2:]), training, rng)
        logits, dlogits, _ = self.heads_forward(f.reshape(B, T, -1), training, rng)
        probs = nl.softmax(logits)
        return (probs, nl.softmax(dlogits)) if self.cfg.ada else probs

    def predict(self, X) -> np.ndarray:
        probs = self.forward(X, training=False)
        if self.cfg.ada:
            probs = probs[0]
        return probs.argmax(axis=-1)

    def loss_and_grads(self, X, y, d=None, training: bool = True, rng=None,
                       from_features: bool = False):
        """Focal loss (motion plus weighted domain term) and its gradients.

        With ``from_features`` ``X`` holds precomputed CNN features
        ``[B, T, C]`` and only head gradients are returned.
        """
        cfg = self.cfg
        X = np.asarray(X)
        B, T = X.shape[:2]
        if from_features:
            F, c_cnn = X.astype(self.dtype), None
        else:
            f, c_cnn = self.cnn_forward(X.reshape((B * T,) + X.shape[2:]), training, rng)
            F = f.reshape(B, T, -1)
        logits, dlog, cache = self.heads_forward(F, training, rng)
        loss_m, probs, dz = softmax_focal(logits, y, cfg.focal)
        dz = dz.astype(self.dtype, copy=False)
        loss, ddz = loss_m, None
        stats = {"loss_m": loss_m, "probs": probs}
        if cfg.ada:
            if d is None:
                raise ValueError("domain labels required when the domain head is enabled")
            loss_d, dprobs, ddz = softmax_focal(dlog, d, cfg.focal)
            loss = loss_m + cfg.domain_weight * loss_d
            ddz = (cfg.domain_weight * ddz).astype(self.dtype, copy=False)
            stats.update(loss_d=loss_d, domain_probs=dprobs)
        grads: dict[str, np.ndarray] = {}
        dF = self.heads_backward(dz, ddz, cache, grads)
        if c_cnn is not None:
            self.cnn_backward(dF.reshape(B * T, -1), c_cnn, grads)
        return loss, grads, stats
