import numpy as np
import pytest

from teco.bundle import SyntheticConfig, generate_synthetic, load_bundle
from teco.config import AblationConfig, ModelConfig
from teco.model import TecoModel
from teco.rng import Rng

GRAD_STEP = 1e-5
GRAD_TOL = 1e-4


def rel_err(a, b):
    return abs(a - b) / max(abs(a) + abs(b), 1e-4)


def finite_diff_check(loss_fn, params, h=GRAD_STEP, tol=GRAD_TOL,
                      samples=6, seed=0):
    """Central finite differences vs backward() grads at float64.

    loss_fn rebuilds the graph from the (mutated in place) parameter
    data and returns a scalar Tensor.  Checks a random sample of entries
    per parameter.
    """
    for p in params:
        p.zero_grad()
    loss = loss_fn()
    loss.backward()
    grads = {id(p): (None if p.grad is None else p.grad.copy()) for p in params}
    pick = np.random.default_rng(seed)
    worst = 0.0
    for p in params:
        g = grads[id(p)]
        assert g is not None, f"no gradient for {getattr(p, 'name', p)}"
        flat = p.data.ravel()
        idxs = pick.choice(flat.size, size=min(samples, flat.size),
                           replace=False)
        for i in idxs:
            old = flat[i]
            flat[i] = old + h
            up = float(loss_fn().data)
            flat[i] = old - h
            down = float(loss_fn().data)
            flat[i] = old
            fd = (up - down) / (2 * h)
            err = rel_err(fd, float(g.ravel()[i]))
            worst = max(worst, err)
            assert err < tol, (
                f"{getattr(p, 'name', 'tensor')}[{i}]: "
                f"analytic {g.ravel()[i]:.3e} vs fd {fd:.3e} (err {err:.2e})")
    return worst


TOY_MODEL_CFG = dict(d=8, d_v=8, d_a=8, l_s=4, l_v=6, l_a=6, l_r=4,
                     maf_dropout=0.0, head_dropout=0.0)


def toy_model(n_classes=3, seed=11, dtype=np.float64, ablation=None,
              **overrides):
    cfg = ModelConfig(**{**TOY_MODEL_CFG, **overrides})
    ab = AblationConfig(**ablation) if isinstance(ablation, dict) else ablation
    return TecoModel(cfg, n_classes, Rng(seed), ablation=ab, dtype=dtype)


def toy_synthetic(tmp_path, name="bundle", seed=3, **overrides):
    defaults = dict(n_classes=3, per_class_train=2, per_class_valid=1,
                    per_class_test=1, d=8, d_v=8, d_a=8,
                    l_s=4, l_v=6, l_a=6, l_r=4)
    cfg = SyntheticConfig(**{**defaults, **overrides})
    out = str(tmp_path / name)
    generate_synthetic(cfg, seed, out)
    return out


@pytest.fixture
def toy_bundle(tmp_path):
    out = toy_synthetic(tmp_path)
    manifest, by_split = load_bundle(out)
    return out, manifest, by_split
