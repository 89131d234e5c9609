"""Textual enhancement: dual perspective learning plus enhancing fusion.

Dual perspective learning pools the text and the two relation views,
maps the 3d concatenation to two logits, and uses the softmax as a
learned convex combination of generated vs retrieved relation features.
Enhancing fusion adds the (linearly transformed) fused relation feature
to the text feature per token position and blends the two relation
types with the fixed hyper-parameter gamma.
"""
from __future__ import annotations

from dataclasses import dataclass

from .autodiff import Parameter, Tensor, concat, linear, mean_pool, softmax
from .errors import ConfigError, ShapeError
from .rng import Rng


@dataclass
class TextEnhancedFeature:
    z_t: Tensor
    alpha_xr: float
    alpha_xw: float


def init_tem_params(d: int, rng: Rng, scale: float, share_enhance_weight: bool,
                    no_dual: bool, dtype) -> dict:
    params = {}
    if not no_dual:
        for rel in ("xR", "xW"):
            params[f"tem.{rel}.fuse.weight"] = Parameter(
                rng.normal((3 * d, 2), scale=scale), f"tem.{rel}.fuse.weight",
                dtype=dtype)
            params[f"tem.{rel}.fuse.bias"] = Parameter(
                rng.normal((2,), scale=0.0), f"tem.{rel}.fuse.bias", dtype=dtype)
    branches = ("shared",) if share_enhance_weight else ("xR", "xW")
    for br in branches:
        params[f"tem.enhance.{br}.weight"] = Parameter(
            rng.normal((d, d), scale=scale), f"tem.enhance.{br}.weight",
            dtype=dtype)
    return params


def _masked_pool(x: Tensor, mask: Tensor | None) -> Tensor:
    if mask is None:
        return mean_pool(x, axis=0)
    m = mask.reshape(-1, 1)
    return (x * m).sum(axis=0) / m.sum()


def dual_fuse(h_t: Tensor, c: Tensor, s: Tensor, weight: Tensor, bias: Tensor,
              mask_t: Tensor | None = None, mask_rel: Tensor | None = None,
              alpha_override: float | None = None):
    """Learned convex combination of the generated (c) and retrieved (s)
    relation features, weighted by a 2-logit head over pooled features.

    Returns (fused relation feature, alpha as a scalar Tensor).
    """
    if c.shape != s.shape:
        raise ShapeError(f"relation shapes differ: {c.shape} vs {s.shape}")
    if h_t.shape[1] != c.shape[1]:
        raise ShapeError(
            f"feature dims differ: text {h_t.shape} vs relation {c.shape}")
    if alpha_override is not None:
        alpha = Tensor(float(alpha_override), dtype=h_t.dtype)
    else:
        pooled = concat([_masked_pool(h_t, mask_t),
                         _masked_pool(c, mask_rel),
                         _masked_pool(s, mask_rel)], axis=0).reshape(1, -1)
        logits = linear(pooled, weight, bias)
        alpha = softmax(logits, axis=1).slice((0, 0))
    h_rel = alpha * c + (1.0 - alpha) * s
    return h_rel, alpha


def enhance(h_t: Tensor, h_rel: Tensor, enhance_weight: Tensor) -> Tensor:
    """Per-token linear transform of the relation feature added to the text."""
    return h_t + h_rel.matmul(enhance_weight)


def textual_enhance(h_t: Tensor, h_xr: Tensor, h_xw: Tensor,
                    w_xr: Tensor, w_xw: Tensor, gamma: float,
                    alpha_xr, alpha_xw) -> TextEnhancedFeature:
    if not 0.0 <= gamma <= 1.0:
        raise ConfigError(f"gamma must be in [0, 1], got {gamma}")
    z_xr = enhance(h_t, h_xr, w_xr)
    z_xw = enhance(h_t, h_xw, w_xw)
    z_t = gamma * z_xr + (1.0 - gamma) * z_xw
    return TextEnhancedFeature(z_t=z_t,
                               alpha_xr=float(alpha_xr.data),
                               alpha_xw=float(alpha_xw.data))


def run_tem(h_t: Tensor, quad: dict, params: dict, gamma: float,
            share_enhance_weight: bool, no_dual: bool,
            mask_t: Tensor | None = None,
            mask_rel: Tensor | None = None) -> TextEnhancedFeature:
    """Full module: dual fusion per relation type, then enhancing fusion.

    quad maps the four relation slots to (l_r, d) tensors.  With no_dual
    the retrieved branch is detached structurally: alpha is fixed to 1
    and the 2-logit heads do not exist.
    """
    fused = {}
    alphas = {}
    for rel, gen_key, ret_key in (("xR", "gen_xreact", "ret_xreact"),
                                  ("xW", "gen_xwant", "ret_xwant")):
        if no_dual:
            h_rel, alpha = dual_fuse(h_t, quad[gen_key], quad[ret_key],
                                     None, None, alpha_override=1.0)
        else:
            h_rel, alpha = dual_fuse(
                h_t, quad[gen_key], quad[ret_key],
                params[f"tem.{rel}.fuse.weight"],
                params[f"tem.{rel}.fuse.bias"],
                mask_t=mask_t, mask_rel=mask_rel)
        fused[rel] = h_rel
        alphas[rel] = alpha
    if share_enhance_weight:
        w_xr = w_xw = params["tem.enhance.shared.weight"]
    else:
        w_xr = params["tem.enhance.xR.weight"]
        w_xw = params["tem.enhance.xW.weight"]
    return textual_enhance(h_t, fused["xR"], fused["xW"], w_xr, w_xw,
                           gamma, alphas["xR"], alphas["xW"])
