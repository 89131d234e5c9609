"""Multimodal alignment fusion.

Each non-verbal stream runs through its own LSTM; a per-timestep logit
head scores the text positions and a softmax over timesteps yields a
stochastic alignment matrix whose rows (one per text position) sum to 1.
Aligned features are filtered by text-conditioned ReLU gates, combined
into a non-verbal feature, and added to the text-enhanced feature with
a norm-ratio-capped weight beta before layer norm and dropout.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (Parameter, Tensor, concat, dropout, l2_norm,
                       layer_norm, linear, lstm_step, softmax)
from .errors import ShapeError
from .rng import Rng


@dataclass
class FusedRepresentation:
    z_bar: Tensor
    beta: float
    gate_v: Tensor | None
    gate_a: Tensor | None


def init_lstm_params(prefix: str, d_in: int, d_h: int, rng: Rng, scale: float,
                     dtype) -> dict:
    params = {}
    for gate in ("i", "f", "o", "g"):
        params[f"{prefix}.w_{gate}"] = Parameter(
            rng.normal((d_in, d_h), scale=scale), f"{prefix}.w_{gate}", dtype=dtype)
        params[f"{prefix}.u_{gate}"] = Parameter(
            rng.normal((d_h, d_h), scale=scale), f"{prefix}.u_{gate}", dtype=dtype)
        params[f"{prefix}.b_{gate}"] = Parameter(
            np.zeros(d_h), f"{prefix}.b_{gate}", dtype=dtype)
    return params


def init_maf_params(d: int, d_v: int, d_a: int, l_s: int, rng: Rng,
                    scale: float, modalities: str, no_maf: bool,
                    dtype) -> dict:
    """Final layer-norm params always exist (the normalized block applies
    even without MAF); alignment/gate/value params only for the present
    non-verbal modalities."""
    params = {
        "maf.norm.gain": Parameter(np.ones(d), "maf.norm.gain", dtype=dtype),
        "maf.norm.bias": Parameter(np.zeros(d), "maf.norm.bias", dtype=dtype),
    }
    if no_maf:
        return params
    streams = []
    if "V" in modalities:
        streams.append(("v", d_v))
    if "A" in modalities:
        streams.append(("a", d_a))
    for name, d_in in streams:
        params.update(init_lstm_params(f"maf.align_{name}.lstm", d_in, d, rng,
                                       scale, dtype))
        params[f"maf.align_{name}.logit.weight"] = Parameter(
            rng.normal((d, l_s), scale=scale), f"maf.align_{name}.logit.weight",
            dtype=dtype)
        params[f"maf.align_{name}.logit.bias"] = Parameter(
            np.zeros(l_s), f"maf.align_{name}.logit.bias", dtype=dtype)
        params[f"maf.gate_{name}.weight"] = Parameter(
            rng.normal((2 * d, d), scale=scale), f"maf.gate_{name}.weight",
            dtype=dtype)
        params[f"maf.gate_{name}.bias"] = Parameter(
            np.zeros(d), f"maf.gate_{name}.bias", dtype=dtype)
        params[f"maf.value_{name}.weight"] = Parameter(
            rng.normal((d, d), scale=scale), f"maf.value_{name}.weight",
            dtype=dtype)
        params[f"maf.value_{name}.bias"] = Parameter(
            np.zeros(d), f"maf.value_{name}.bias", dtype=dtype)
    return params


def run_lstm(seq: Tensor, params: dict, prefix: str, d_h: int) -> Tensor:
    """Run the cell over the rows of seq; returns stacked hidden states."""
    dtype = seq.dtype
    gate_params = {k.rsplit(".", 1)[1]: v for k, v in params.items()
                   if k.startswith(prefix + ".")}
    h = Tensor(np.zeros((1, d_h)), dtype=dtype)
    c = Tensor(np.zeros((1, d_h)), dtype=dtype)
    states = []
    for t in range(seq.shape[0]):
        x = seq.slice((t,)).reshape(1, -1)
        h, c = lstm_step(x, (h, c), gate_params)
        states.append(h)
    return concat(states, axis=0)


def align_stream(seq: Tensor, params: dict, name: str, d: int,
                 mask: Tensor | None = None) -> Tensor:
    """LSTM states + softmax alignment onto the l_s text positions.

    The alignment matrix has one row per text position; softmax runs
    over the stream's timesteps so rows sum to 1.  With a mask, padded
    timesteps are excluded from the softmax.
    """
    states = run_lstm(seq, params, f"maf.align_{name}.lstm", d)
    logits = linear(states, params[f"maf.align_{name}.logit.weight"],
                    params[f"maf.align_{name}.logit.bias"])  # (l_stream, l_s)
    if mask is not None:
        # -inf on padded timesteps drops them from the alignment
        neg = np.where(mask.data > 0, 0.0, -1e30).astype(logits.data.dtype)
        logits = logits + Tensor(neg.reshape(-1, 1))
    attn = softmax(logits, axis=0)
    return attn.transpose().matmul(states)


def ctc_align(z_t: Tensor, h_v: Tensor | None, h_a: Tensor | None,
              params: dict, d: int, l_v: int, l_a: int,
              mask_v: Tensor | None = None, mask_a: Tensor | None = None):
    """Align each present non-verbal stream onto the text positions.
    Text features pass through unchanged."""
    z_v = z_a = None
    if h_v is not None:
        if h_v.shape[0] != l_v:
            raise ShapeError(f"vision length {h_v.shape[0]} != configured {l_v}")
        z_v = align_stream(h_v, params, "v", d, mask=mask_v)
    if h_a is not None:
        if h_a.shape[0] != l_a:
            raise ShapeError(f"audio length {h_a.shape[0]} != configured {l_a}")
        z_a = align_stream(h_a, params, "a", d, mask=mask_a)
    return z_t, z_v, z_a


def gated_fuse(z_t: Tensor, z_v: Tensor | None, z_a: Tensor | None,
               params: dict):
    """Text-conditioned ReLU gates over each aligned stream, summed into
    the non-verbal feature.  Returns (h_nv, gate_v, gate_a)."""
    terms = []
    gates = {"v": None, "a": None}
    for name, z in (("v", z_v), ("a", z_a)):
        if z is None:
            continue
        if z.shape != z_t.shape:
            raise ShapeError(f"aligned {name} shape {z.shape} != text {z_t.shape}")
        gate = linear(concat([z, z_t], axis=1),
                      params[f"maf.gate_{name}.weight"],
                      params[f"maf.gate_{name}.bias"]).relu()
        value = linear(z, params[f"maf.value_{name}.weight"],
                       params[f"maf.value_{name}.bias"])
        gates[name] = gate
        terms.append(gate * value)
    if not terms:
        return None, None, None
    h_nv = terms[0]
    for t in terms[1:]:
        h_nv = h_nv + t
    return h_nv, gates["v"], gates["a"]


def beta_weight(z_t: Tensor, h_nv: Tensor, epsilon: float) -> Tensor:
    """beta = min(||z_t|| / ||h_nv|| * epsilon, 1), differentiable away
    from the cap; a zero-norm non-verbal feature gives beta = 0."""
    if float(l2_norm(h_nv).data) == 0.0:
        return Tensor(0.0, dtype=z_t.dtype)
    ratio = l2_norm(z_t) / l2_norm(h_nv) * epsilon
    if float(ratio.data) >= 1.0:
        return Tensor(1.0, dtype=z_t.dtype)
    return ratio


def normalized_block(x: Tensor, params: dict, drop_rate: float, mode: str,
                     rng: Rng | None, ln_eps: float) -> Tensor:
    return layer_norm(dropout(x, drop_rate, mode, rng),
                      params["maf.norm.gain"], params["maf.norm.bias"],
                      eps=ln_eps)


def beta_combine(z_t: Tensor, h_nv: Tensor | None, params: dict,
                 epsilon: float, drop_rate: float, mode: str,
                 rng: Rng | None, ln_eps: float,
                 gate_v: Tensor | None = None,
                 gate_a: Tensor | None = None) -> FusedRepresentation:
    if h_nv is None:
        z = z_t
        beta = 0.0
    else:
        b = beta_weight(z_t, h_nv, epsilon)
        z = z_t + b * h_nv
        beta = float(b.data)
    z_bar = normalized_block(z, params, drop_rate, mode, rng, ln_eps)
    return FusedRepresentation(z_bar=z_bar, beta=beta,
                               gate_v=gate_v, gate_a=gate_a)
