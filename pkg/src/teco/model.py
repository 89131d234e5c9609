"""Full fusion model: parameter registry, forward pass, ablation wiring.

Ablations are structural: a disabled sub-module's parameters are never
created, so parameter-count comparisons are meaningful and absent
branches trivially receive no gradient.
"""
from __future__ import annotations

import numpy as np

from .autodiff import Parameter, Tensor, concat, dropout, linear, mean_pool
from .bundle import UtteranceRecord
from .config import ModelConfig, AblationConfig
from .errors import ShapeError
from .maf import beta_combine, ctc_align, gated_fuse, init_maf_params
from .rng import Rng
from .tem import init_tem_params, run_tem


def init_head_params(d: int, n_classes: int, rng: Rng, scale: float,
                     dtype) -> dict:
    return {
        "head.pool.weight": Parameter(rng.normal((d, d), scale=scale),
                                      "head.pool.weight", dtype=dtype),
        "head.pool.bias": Parameter(np.zeros(d), "head.pool.bias", dtype=dtype),
        "head.out.weight": Parameter(rng.normal((d, n_classes), scale=scale),
                                     "head.out.weight", dtype=dtype),
        "head.out.bias": Parameter(np.zeros(n_classes), "head.out.bias",
                                   dtype=dtype),
    }


class TecoModel:
    def __init__(self, config: ModelConfig, n_classes: int, rng: Rng,
                 ablation: AblationConfig | None = None, dtype=np.float32):
        self.config = config
        self.ablation = ablation if ablation is not None else AblationConfig()
        self.n_classes = n_classes
        self.dtype = dtype
        self.params: dict[str, Parameter] = {}

        ab = self.ablation
        self.has_text = "T" in ab.modalities
        self.has_vision = "V" in ab.modalities and not ab.no_maf
        self.has_audio = "A" in ab.modalities and not ab.no_maf
        self.use_tem = self.has_text and not ab.no_tem

        cfg = config
        if self.use_tem:
            self.params.update(init_tem_params(
                cfg.d, rng.split(), cfg.init_scale, cfg.share_enhance_weight,
                ab.no_dual, dtype))
        maf_modalities = "".join(m for m in "VA" if (m == "V" and self.has_vision)
                                 or (m == "A" and self.has_audio))
        self.params.update(init_maf_params(
            cfg.d, cfg.d_v, cfg.d_a, cfg.l_s, rng.split(), cfg.init_scale,
            maf_modalities, ab.no_maf or not maf_modalities, dtype))
        self.params.update(init_head_params(
            cfg.d, n_classes, rng.split(), cfg.init_scale, dtype))

    # -- parameter registry -------------------------------------------------

    def parameters(self) -> list[Parameter]:
        return [self.params[k] for k in sorted(self.params)]

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.params.items()}

    def load_state_arrays(self, state: dict[str, np.ndarray]):
        if set(state) != set(self.params):
            missing = set(self.params) ^ set(state)
            raise ShapeError(f"checkpoint parameter names differ: {sorted(missing)}")
        for k, arr in state.items():
            if arr.shape != self.params[k].shape:
                raise ShapeError(
                    f"checkpoint {k}: shape {arr.shape} != {self.params[k].shape}")
            self.params[k].data = arr.astype(self.dtype)

    # -- forward ------------------------------------------------------------

    def _tensor(self, arr) -> Tensor:
        return Tensor(np.asarray(arr), dtype=self.dtype)

    def forward_record(self, record: UtteranceRecord, mode: str = "eval",
                       rng: Rng | None = None):
        """Logits (1, N) for one record; returns (logits, FusedRepresentation)."""
        cfg = self.config
        ab = self.ablation
        use_mask = cfg.use_mask

        if self.has_text:
            h_t = self._tensor(record.text_feat)
            if h_t.shape != (cfg.l_s, cfg.d):
                raise ShapeError(
                    f"record {record.id}: text shape {h_t.shape} != "
                    f"({cfg.l_s}, {cfg.d})")
        else:
            # text stream removed: a zero, non-trainable placeholder keeps
            # the downstream graph shape-consistent
            h_t = self._tensor(np.zeros((cfg.l_s, cfg.d)))

        mask_t = Tensor(record.mask("text"), dtype=self.dtype) \
            if (use_mask and self.has_text) else None

        if self.use_tem:
            quad = {k: self._tensor(v)
                    for k, v in record.relations.as_dict().items()}
            mask_rel = Tensor(record.mask("gen_xreact"), dtype=self.dtype) \
                if use_mask else None
            enhanced = run_tem(h_t, quad, self.params, cfg.gamma,
                               cfg.share_enhance_weight, ab.no_dual,
                               mask_t=mask_t, mask_rel=mask_rel)
            z_t = enhanced.z_t
        else:
            enhanced = None
            z_t = h_t

        h_v = self._tensor(record.vision_feat) if self.has_vision else None
        h_a = self._tensor(record.audio_feat) if self.has_audio else None
        mask_v = Tensor(record.mask("vision"), dtype=self.dtype) \
            if (use_mask and h_v is not None) else None
        mask_a = Tensor(record.mask("audio"), dtype=self.dtype) \
            if (use_mask and h_a is not None) else None

        if h_v is not None or h_a is not None:
            z_t, z_v, z_a = ctc_align(z_t, h_v, h_a, self.params, cfg.d,
                                      cfg.l_v, cfg.l_a,
                                      mask_v=mask_v, mask_a=mask_a)
            h_nv, gate_v, gate_a = gated_fuse(z_t, z_v, z_a, self.params)
        else:
            h_nv, gate_v, gate_a = None, None, None

        fused = beta_combine(z_t, h_nv, self.params, cfg.epsilon,
                             cfg.maf_dropout, mode,
                             rng.split() if rng is not None else None,
                             cfg.ln_eps, gate_v=gate_v, gate_a=gate_a)
        logits = self.classify(fused.z_bar, mode, rng, mask_t=mask_t)
        return logits, fused

    def classify(self, z_bar: Tensor, mode: str, rng: Rng | None,
                 mask_t: Tensor | None = None) -> Tensor:
        cfg = self.config
        if cfg.pooler == "mean":
            if mask_t is not None:
                m = mask_t.reshape(-1, 1)
                pooled = ((z_bar * m).sum(axis=0) / m.sum()).reshape(1, -1)
            else:
                pooled = mean_pool(z_bar, axis=0).reshape(1, -1)
        else:
            pooled = z_bar.slice((0,)).reshape(1, -1)
        hidden = linear(pooled, self.params["head.pool.weight"],
                        self.params["head.pool.bias"]).tanh()
        hidden = dropout(hidden, cfg.head_dropout, mode,
                         rng.split() if rng is not None else None)
        return linear(hidden, self.params["head.out.weight"],
                      self.params["head.out.bias"])

    def forward_batch(self, records, mode: str = "eval",
                      rng: Rng | None = None) -> Tensor:
        rows = [self.forward_record(r, mode, rng)[0] for r in records]
        return concat(rows, axis=0)
