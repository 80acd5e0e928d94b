"""Factorized space-time transformer denoiser in plain numpy.

Forward and backward passes are written out analytically so gradients can be
checked against finite differences. Blocks alternate spatial attention
(tokens within a frame) and temporal attention (same pixel across frames).
The sinusoidal timestep embedding is added to every token and additionally
drives a zero-initialized scale/shift modulation of each sublayer's
normalized input; the output head is zero-initialized so the untrained net
predicts zero noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class DenoiserConfig:
    in_channels: int
    out_channels: int
    width: int = 128
    blocks: int = 4
    heads: int = 4
    temb_dim: int = 64

    def __post_init__(self):
        if self.width % 4 != 0:
            raise ValueError("width must be divisible by 4 (2-D position encoding)")
        if self.width % self.heads != 0:
            raise ValueError("width must be divisible by the head count")
        if self.temb_dim % 2 != 0:
            raise ValueError("temb_dim must be even")
        if self.blocks < 1:
            raise ValueError("need at least one block")

    def to_dict(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "width": self.width,
            "blocks": self.blocks,
            "heads": self.heads,
            "temb_dim": self.temb_dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DenoiserConfig":
        return cls(**{k: int(v) for k, v in d.items()})


# ---------------------------------------------------------------------------
# primitive layers: forward returns (out, cache), backward consumes it


def _linear_fwd(x, w, b):
    return x @ w + b, (x, w)


def _linear_bwd(dout, cache):
    x, w = cache
    dx = dout @ w.T
    x2 = x.reshape(-1, x.shape[-1])
    d2 = dout.reshape(-1, dout.shape[-1])
    return dx, x2.T @ d2, d2.sum(axis=0)


def _layernorm_fwd(x, g, b, eps=1e-6):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    return g * xhat + b, (xhat, inv, g)


def _layernorm_bwd(dout, cache):
    xhat, inv, g = cache
    n = xhat.shape[-1]
    dg = (dout * xhat).reshape(-1, n).sum(axis=0)
    db = dout.reshape(-1, n).sum(axis=0)
    dxhat = dout * g
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dg, db


def _gelu_fwd(x):
    cdf = 0.5 * (1.0 + erf(x / _SQRT2))
    return x * cdf, (x, cdf)


def _gelu_bwd(dout, cache):
    x, cdf = cache
    return dout * (cdf + x * np.exp(-0.5 * x * x) * _INV_SQRT_2PI)


def _attention_fwd(y, wq, bq, wk, bk, wv, bv, wo, bo, heads):
    n, l, w = y.shape
    dh = w // heads
    q = y @ wq + bq
    k = y @ wk + bk
    v = y @ wv + bv
    qh = q.reshape(n, l, heads, dh).transpose(0, 2, 1, 3)
    kh = k.reshape(n, l, heads, dh).transpose(0, 2, 1, 3)
    vh = v.reshape(n, l, heads, dh).transpose(0, 2, 1, 3)
    scale = 1.0 / np.sqrt(dh)
    scores = (qh @ kh.transpose(0, 1, 3, 2)) * scale
    scores -= scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    attn = e / e.sum(axis=-1, keepdims=True)
    ctx = attn @ vh
    merged = ctx.transpose(0, 2, 1, 3).reshape(n, l, w)
    out = merged @ wo + bo
    return out, (y, qh, kh, vh, attn, merged, wq, wk, wv, wo, scale, heads)


def _attention_bwd(dout, cache):
    y, qh, kh, vh, attn, merged, wq, wk, wv, wo, scale, heads = cache
    n, l, w = y.shape
    dh = w // heads
    d2 = dout.reshape(-1, w)
    dwo = merged.reshape(-1, w).T @ d2
    dbo = d2.sum(axis=0)
    dctx = (dout @ wo.T).reshape(n, l, heads, dh).transpose(0, 2, 1, 3)
    dattn = dctx @ vh.transpose(0, 1, 3, 2)
    dvh = attn.transpose(0, 1, 3, 2) @ dctx
    dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
    dscores *= scale
    dqh = dscores @ kh
    dkh = dscores.transpose(0, 1, 3, 2) @ qh
    dq = dqh.transpose(0, 2, 1, 3).reshape(n, l, w)
    dk = dkh.transpose(0, 2, 1, 3).reshape(n, l, w)
    dv = dvh.transpose(0, 2, 1, 3).reshape(n, l, w)
    y2 = y.reshape(-1, w)
    grads = {
        "wq": y2.T @ dq.reshape(-1, w), "bq": dq.reshape(-1, w).sum(axis=0),
        "wk": y2.T @ dk.reshape(-1, w), "bk": dk.reshape(-1, w).sum(axis=0),
        "wv": y2.T @ dv.reshape(-1, w), "bv": dv.reshape(-1, w).sum(axis=0),
        "wo": dwo, "bo": dbo,
    }
    dy = dq @ wq.T + dk @ wk.T + dv @ wv.T
    return dy, grads


def _sincos_1d(n, dim):
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    ang = np.arange(n, dtype=np.float64)[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


def timestep_features(ts, dim):
    """Sinusoidal features of integer timesteps, shape [B, dim]."""
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    ang = np.asarray(ts, dtype=np.float64)[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


class DenoiserNet:
    """Noise-prediction network over [B, T, H', W', C] latent stacks."""

    def __init__(self, config: DenoiserConfig, params: dict | None = None,
                 seed: int = 0):
        self.config = config
        self.params = params if params is not None else self._init_params(seed)
        self._pos_cache: dict = {}

    def _init_params(self, seed: int) -> dict:
        cfg = self.config
        rng = np.random.default_rng(seed)
        p: dict[str, np.ndarray] = {}

        def dense(name, fan_in, fan_out, zero=False):
            if zero:
                p[f"{name}.w"] = np.zeros((fan_in, fan_out))
            else:
                p[f"{name}.w"] = rng.normal(0.0, fan_in ** -0.5, (fan_in, fan_out))
            p[f"{name}.b"] = np.zeros(fan_out)

        dense("embed", cfg.in_channels, cfg.width)
        dense("temb1", cfg.temb_dim, cfg.width)
        dense("temb2", cfg.width, cfg.width)
        for i in range(cfg.blocks):
            # zero-init timestep modulation (scale+shift per sublayer): the
            # noise target's amplitude swings by ~25x across timesteps, which
            # an additive embedding alone cannot express
            dense(f"b{i}.film1", cfg.width, 2 * cfg.width, zero=True)
            dense(f"b{i}.film2", cfg.width, 2 * cfg.width, zero=True)
            p[f"b{i}.ln1.g"] = np.ones(cfg.width)
            p[f"b{i}.ln1.b"] = np.zeros(cfg.width)
            for nm in ("wq", "wk", "wv", "wo"):
                p[f"b{i}.attn.{nm}"] = rng.normal(0.0, cfg.width ** -0.5,
                                                  (cfg.width, cfg.width))
            for nm in ("bq", "bk", "bv", "bo"):
                p[f"b{i}.attn.{nm}"] = np.zeros(cfg.width)
            p[f"b{i}.ln2.g"] = np.ones(cfg.width)
            p[f"b{i}.ln2.b"] = np.zeros(cfg.width)
            dense(f"b{i}.mlp1", cfg.width, 4 * cfg.width)
            dense(f"b{i}.mlp2", 4 * cfg.width, cfg.width)
        dense("head", cfg.width, cfg.out_channels, zero=True)
        return p

    def num_params(self) -> int:
        return sum(v.size for v in self.params.values())

    def _pos(self, t, h, w):
        key = (t, h, w)
        if key not in self._pos_cache:
            width = self.config.width
            py = _sincos_1d(h, width // 2)
            px = _sincos_1d(w, width // 2)
            spatial = np.concatenate(
                [np.repeat(py[:, None, :], w, axis=1),
                 np.repeat(px[None, :, :], h, axis=0)],
                axis=-1,
            ).reshape(h * w, width)
            temporal = _sincos_1d(t, width)
            self._pos_cache[key] = (spatial, temporal)
        return self._pos_cache[key]

    @staticmethod
    def _axis_of(i):
        return "spatial" if i % 2 == 0 else "temporal"

    def _forward(self, x, ts, keep_cache):
        cfg = self.config
        p = self.params
        b, t, h, w_sp, cin = x.shape
        if cin != cfg.in_channels:
            raise ValueError(f"input has {cin} channels, net expects {cfg.in_channels}")
        s = h * w_sp
        tok = x.reshape(b, t, s, cin)
        hcur, c_embed = _linear_fwd(tok, p["embed.w"], p["embed.b"])
        spatial, temporal = self._pos(t, h, w_sp)
        hcur = hcur + spatial[None, None] + temporal[None, :, None]

        tf = timestep_features(ts, cfg.temb_dim)
        e1, c_t1 = _linear_fwd(tf, p["temb1.w"], p["temb1.b"])
        e1g, c_tg = _gelu_fwd(e1)
        temb, c_t2 = _linear_fwd(e1g, p["temb2.w"], p["temb2.b"])
        hcur = hcur + temb[:, None, None, :]

        blocks = []
        for i in range(cfg.blocks):
            axis = self._axis_of(i)
            f1, c_f1 = _linear_fwd(temb, p[f"b{i}.film1.w"], p[f"b{i}.film1.b"])
            g1 = f1[:, None, None, : cfg.width]
            s1 = f1[:, None, None, cfg.width:]
            ln1, c_ln1 = _layernorm_fwd(hcur, p[f"b{i}.ln1.g"], p[f"b{i}.ln1.b"])
            mod1 = ln1 * (1.0 + g1) + s1
            if axis == "spatial":
                y = mod1.reshape(b * t, s, cfg.width)
            else:
                y = mod1.transpose(0, 2, 1, 3).reshape(b * s, t, cfg.width)
            a_out, c_attn = _attention_fwd(
                y,
                p[f"b{i}.attn.wq"], p[f"b{i}.attn.bq"],
                p[f"b{i}.attn.wk"], p[f"b{i}.attn.bk"],
                p[f"b{i}.attn.wv"], p[f"b{i}.attn.bv"],
                p[f"b{i}.attn.wo"], p[f"b{i}.attn.bo"],
                cfg.heads,
            )
            if axis == "spatial":
                a_full = a_out.reshape(b, t, s, cfg.width)
            else:
                a_full = a_out.reshape(b, s, t, cfg.width).transpose(0, 2, 1, 3)
            hcur = hcur + a_full

            f2, c_f2 = _linear_fwd(temb, p[f"b{i}.film2.w"], p[f"b{i}.film2.b"])
            g2 = f2[:, None, None, : cfg.width]
            s2 = f2[:, None, None, cfg.width:]
            ln2, c_ln2 = _layernorm_fwd(hcur, p[f"b{i}.ln2.g"], p[f"b{i}.ln2.b"])
            mod2 = ln2 * (1.0 + g2) + s2
            m1, c_m1 = _linear_fwd(mod2, p[f"b{i}.mlp1.w"], p[f"b{i}.mlp1.b"])
            mg, c_mg = _gelu_fwd(m1)
            m2, c_m2 = _linear_fwd(mg, p[f"b{i}.mlp2.w"], p[f"b{i}.mlp2.b"])
            hcur = hcur + m2
            if keep_cache:
                blocks.append((axis, c_f1, g1, ln1, c_ln1, c_attn,
                               c_f2, g2, ln2, c_ln2, c_m1, c_mg, c_m2))

        # no final norm: the head reads the raw residual stream so predicted
        # noise amplitude can vary freely with the timestep
        out, c_head = _linear_fwd(hcur, p["head.w"], p["head.b"])
        out = out.reshape(b, t, h, w_sp, cfg.out_channels)
        cache = None
        if keep_cache:
            cache = {
                "shape": (b, t, h, w_sp, s),
                "embed": c_embed, "t1": c_t1, "tg": c_tg, "t2": c_t2,
                "blocks": blocks, "head": c_head,
            }
        return out, cache

    def predict(self, x: np.ndarray, ts) -> np.ndarray:
        """Predict the injected noise for a conditioned latent stack."""
        out, _ = self._forward(np.asarray(x, dtype=np.float64),
                               np.atleast_1d(ts), keep_cache=False)
        return out

    def _backward(self, cache, dout):
        cfg = self.config
        p = self.params
        b, t, h, w_sp, s = cache["shape"]
        grads: dict[str, np.ndarray] = {}

        d = dout.reshape(b, t, s, cfg.out_channels)
        d, grads["head.w"], grads["head.b"] = _linear_bwd(d, cache["head"])

        dtemb = 0.0
        for i in reversed(range(cfg.blocks)):
            (axis, c_f1, g1, ln1, c_ln1, c_attn,
             c_f2, g2, ln2, c_ln2, c_m1, c_mg, c_m2) = cache["blocks"][i]
            dm2, grads[f"b{i}.mlp2.w"], grads[f"b{i}.mlp2.b"] = _linear_bwd(d, c_m2)
            dmg = _gelu_bwd(dm2, c_mg)
            dmod2, grads[f"b{i}.mlp1.w"], grads[f"b{i}.mlp1.b"] = _linear_bwd(dmg, c_m1)
            dg2 = (dmod2 * ln2).sum(axis=(1, 2))
            ds2 = dmod2.sum(axis=(1, 2))
            dfilm2, grads[f"b{i}.film2.w"], grads[f"b{i}.film2.b"] = _linear_bwd(
                np.concatenate([dg2, ds2], axis=-1), c_f2)
            dtemb = dtemb + dfilm2
            dln2_out = dmod2 * (1.0 + g2)
            dln2, grads[f"b{i}.ln2.g"], grads[f"b{i}.ln2.b"] = _layernorm_bwd(
                dln2_out, c_ln2)
            d = d + dln2

            if axis == "spatial":
                da = d.reshape(b * t, s, cfg.width)
            else:
                da = d.transpose(0, 2, 1, 3).reshape(b * s, t, cfg.width)
            dy, attn_grads = _attention_bwd(da, c_attn)
            for nm, g in attn_grads.items():
                grads[f"b{i}.attn.{nm}"] = g
            if axis == "spatial":
                dmod1 = dy.reshape(b, t, s, cfg.width)
            else:
                dmod1 = dy.reshape(b, s, t, cfg.width).transpose(0, 2, 1, 3)
            dg1 = (dmod1 * ln1).sum(axis=(1, 2))
            ds1 = dmod1.sum(axis=(1, 2))
            dfilm1, grads[f"b{i}.film1.w"], grads[f"b{i}.film1.b"] = _linear_bwd(
                np.concatenate([dg1, ds1], axis=-1), c_f1)
            dtemb = dtemb + dfilm1
            dln1_out = dmod1 * (1.0 + g1)
            dln1, grads[f"b{i}.ln1.g"], grads[f"b{i}.ln1.b"] = _layernorm_bwd(
                dln1_out, c_ln1)
            d = d + dln1

        # timestep embedding branch (input addition plus per-block modulation)
        dtemb = dtemb + d.sum(axis=(1, 2))
        dg, grads["temb2.w"], grads["temb2.b"] = _linear_bwd(dtemb, cache["t2"])
        de1 = _gelu_bwd(dg, cache["tg"])
        _, grads["temb1.w"], grads["temb1.b"] = _linear_bwd(de1, cache["t1"])

        # input projection (position encodings are constants)
        _, grads["embed.w"], grads["embed.b"] = _linear_bwd(d, cache["embed"])
        return grads

    def mse_and_grad(self, x, ts, target):
        """MSE between predicted and true noise plus analytic parameter grads.

        Returns (loss, grads, per_item) where per_item holds each batch
        element's own mean squared error.
        """
        x = np.asarray(x, dtype=np.float64)
        target = np.asarray(target, dtype=np.float64)
        out, cache = self._forward(x, np.atleast_1d(ts), keep_cache=True)
        diff = out - target
        loss = float(np.mean(diff * diff))
        per_item = (diff * diff).reshape(diff.shape[0], -1).mean(axis=1)
        dout = (2.0 / diff.size) * diff
        grads = self._backward(cache, dout)
        return loss, grads, per_item


class Adam:
    """Plain Adam over a named parameter dict; updates in place."""

    def __init__(self, lr=2e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            m = self.m.get(k)
            if m is None:
                m = self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[k] = params[k] - self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
