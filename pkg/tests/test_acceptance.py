"""Acceptance suite: one test per release criterion, each printing a
single PASS line with the measured figure when it holds.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines inline.
"""
import itertools
import os
import time

import numpy as np

from teco.autodiff import (Parameter, Tensor, dropout, layer_norm, linear,
                           lstm_step, softmax)
from teco.bundle import SyntheticConfig, generate_synthetic
from teco.cli import main as cli_main
from teco.config import ExperimentConfig
from teco.experiment import run_ablate, run_gamma_sweep
from teco.knowledge import cosine_similarity
from teco.maf import beta_weight, init_maf_params, run_lstm
from teco.metrics import compute_metrics
from teco.tem import dual_fuse, textual_enhance
from teco.train import cross_entropy_loss

from conftest import finite_diff_check, toy_model, toy_synthetic
from teco.bundle import load_bundle


def report(name, detail):
    print(f"PASS {name}: {detail}")


def randt(shape, seed=0, requires_grad=True):
    return Tensor(np.random.default_rng(seed).normal(size=shape),
                  requires_grad=requires_grad, dtype=np.float64)


# -- criterion 1: gradient suite ---------------------------------------------

def test_gradient_suite(tmp_path):
    """Every parameter of the full graph (d=8, l_s=l_r=4, l_v=l_a=6, 3
    classes) passes a 64-bit central finite-difference check at rel err
    < 1e-4, within 60 seconds."""
    start = time.monotonic()
    out = toy_synthetic(tmp_path)
    _, by_split = load_bundle(out)
    recs = by_split["train"][:3]
    model = toy_model()  # float64, dropouts 0

    def loss_fn():
        logits = model.forward_batch(recs, mode="eval")
        return cross_entropy_loss(logits, [r.label for r in recs])

    worst = finite_diff_check(loss_fn, model.parameters(), samples=3)
    elapsed = time.monotonic() - start
    assert elapsed < 60.0, f"gradient suite took {elapsed:.1f}s"
    report("gradient-suite",
           f"{len(model.parameters())} parameters, worst rel err "
           f"{worst:.2e} (tol 1e-4), {elapsed:.1f}s")


# -- criterion 2: numeric oracles --------------------------------------------

def test_oracle_suite():
    """softmax, layer norm, LSTM cell, cosine similarity, and the metrics
    report all match independent straight-line reimplementations; metrics
    additionally match exhaustive enumeration for n <= 6, 3 classes."""
    rng = np.random.default_rng(0)

    x = rng.normal(size=(4, 6))
    got = softmax(Tensor(x, dtype=np.float64), axis=1).data
    e = np.exp(x - x.max(axis=1, keepdims=True))
    assert np.allclose(got, e / e.sum(axis=1, keepdims=True), atol=1e-9)

    g, b = rng.normal(size=6), rng.normal(size=6)
    got = layer_norm(Tensor(x, dtype=np.float64),
                     Tensor(g, dtype=np.float64),
                     Tensor(b, dtype=np.float64), eps=1e-5).data
    mu = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    assert np.allclose(got, (x - mu) / np.sqrt(var + 1e-5) * g + b, atol=1e-9)

    d_in, d_h = 3, 4
    p = {}
    for gate in ("i", "f", "o", "g"):
        p[f"w_{gate}"] = Parameter(rng.normal(size=(d_in, d_h)), "w",
                                   dtype=np.float64)
        p[f"u_{gate}"] = Parameter(rng.normal(size=(d_h, d_h)), "u",
                                   dtype=np.float64)
        p[f"b_{gate}"] = Parameter(rng.normal(size=d_h), "b",
                                   dtype=np.float64)
    xt = rng.normal(size=(1, d_in))
    h0, c0 = rng.normal(size=(1, d_h)), rng.normal(size=(1, d_h))
    h1, c1 = lstm_step(Tensor(xt, dtype=np.float64),
                       (Tensor(h0, dtype=np.float64),
                        Tensor(c0, dtype=np.float64)), p)
    sig = lambda v: 1.0 / (1.0 + np.exp(-v))
    pre = {gate: xt @ p[f"w_{gate}"].data + h0 @ p[f"u_{gate}"].data
           + p[f"b_{gate}"].data for gate in ("i", "f", "o", "g")}
    c_exp = sig(pre["f"]) * c0 + sig(pre["i"]) * np.tanh(pre["g"])
    h_exp = sig(pre["o"]) * np.tanh(c_exp)
    assert np.allclose(c1.data, c_exp, atol=1e-9)
    assert np.allclose(h1.data, h_exp, atol=1e-9)

    a, v = rng.normal(size=8), rng.normal(size=8)
    expected = float(a @ v / (np.linalg.norm(a) * np.linalg.norm(v)))
    assert abs(cosine_similarity(a, v) - expected) < 1e-12

    def oracle_metrics(preds, labels, n):
        acc = sum(p_ == y for p_, y in zip(preds, labels)) / len(labels)
        precs, recs, f1s = [], [], []
        for k in range(n):
            tp = sum(1 for p_, y in zip(preds, labels) if p_ == k and y == k)
            pk = sum(1 for p_ in preds if p_ == k)
            tk = sum(1 for y in labels if y == k)
            pr = tp / pk if pk else 0.0
            rc = tp / tk if tk else 0.0
            precs.append(pr)
            recs.append(rc)
            f1s.append(2 * pr * rc / (pr + rc) if pr + rc else 0.0)
        return acc, sum(precs) / n, sum(recs) / n, sum(f1s) / n

    n_classes, checked = 3, set()
    for n in range(1, 7):
        for labels in itertools.product(range(n_classes), repeat=n):
            for preds in itertools.product(range(n_classes), repeat=n):
                key = tuple(sorted(zip(labels, preds)))
                if key in checked:
                    continue
                checked.add(key)
                rep = compute_metrics(list(preds), list(labels), n_classes)
                acc, mp, mr, mf = oracle_metrics(preds, labels, n_classes)
                assert abs(rep.acc - acc) < 1e-12
                assert abs(rep.macro_prec - mp) < 1e-12
                assert abs(rep.macro_rec - mr) < 1e-12
                assert abs(rep.macro_f1 - mf) < 1e-12
    report("oracle-suite",
           f"softmax/layer-norm/LSTM/cosine oracles ok; metrics match "
           f"{len(checked)} distinct confusion signatures (n<=6, 3 classes)")


# -- criterion 3: closed-form endpoints --------------------------------------

def test_endpoint_identities():
    """Analytic endpoints: alpha in {0,1} selects a single relation view;
    the enhanced feature is affine in gamma; beta stays in [0,1] and
    epsilon=0 forces beta=0; alignment weights column-normalize to 1;
    dropout at eval time is the identity."""
    h_t, c, s = randt((3, 4), 1), randt((3, 4), 2), randt((3, 4), 3)
    h_rel, _ = dual_fuse(h_t, c, s, None, None, alpha_override=1.0)
    assert np.allclose(h_rel.data, c.data)
    h_rel, _ = dual_fuse(h_t, c, s, None, None, alpha_override=0.0)
    assert np.allclose(h_rel.data, s.data)

    d = 4
    h_xr, h_xw = randt((3, d), 4), randt((3, d), 5)
    w = randt((d, d), 6)
    a = Tensor(0.5, dtype=np.float64)

    def z(g):
        return textual_enhance(h_t, h_xr, h_xw, w, w, g, a, a).z_t.data

    z0, z1 = z(0.0), z(1.0)
    for gamma in (0.15, 0.5, 0.85):
        assert np.allclose(z(gamma), gamma * z1 + (1 - gamma) * z0, atol=1e-9)

    for seed in range(50):
        z_t, h_nv = randt((2, 3), seed), randt((2, 3), seed + 100)
        for eps in (0.1, 0.5, 1.0, 3.0):
            bval = float(beta_weight(z_t, h_nv, eps).data)
            assert 0.0 <= bval <= 1.0
        assert float(beta_weight(z_t, h_nv, 0.0).data) == 0.0

    from teco.rng import Rng
    params = init_maf_params(4, 3, 3, 3, Rng(0), 0.2, "V", False, np.float64)
    seq = randt((5, 3), 7)
    states = run_lstm(seq, params, "maf.align_v.lstm", 4)
    attn = softmax(linear(states, params["maf.align_v.logit.weight"],
                          params["maf.align_v.logit.bias"]), axis=0).data
    assert (attn >= 0).all()
    assert np.allclose(attn.sum(axis=0), 1.0, atol=1e-9)

    x = randt((6, 5), 8)
    assert np.array_equal(dropout(x, 0.7, "eval", None).data, x.data)

    report("endpoint-identities",
           "alpha/gamma/beta endpoints, alignment normalization, and eval "
           "dropout identity all hold")


# -- criterion 4: end-to-end separable run -----------------------------------

def _train_cli(bundle, out):
    return cli_main([
        "train", "--bundle", bundle, "--out", out, "--seed", "11",
        "--set", "train.max_epochs=15", "--set", "train.patience=15",
        "--set", "train.lr=5e-3", "--set", "train.batch_size=8"])


def test_end_to_end_synthetic(tmp_path):
    """On a well-separated 4-class synthetic bundle (80/20/20 split,
    center margin 5x the noise scale, d=16) the train command reaches
    test macro-F1 >= 0.95 in under 5 minutes, and a same-seed rerun
    writes byte-identical CSV outputs."""
    start = time.monotonic()
    bundle = str(tmp_path / "bundle")
    cfg = SyntheticConfig(n_classes=4, per_class_train=16, per_class_valid=4,
                          per_class_test=4, d=16, d_v=16, d_a=16,
                          l_s=4, l_v=6, l_a=6, l_r=4, margin=5.0, noise=1.0)
    generate_synthetic(cfg, 29, bundle)

    out_a, out_b = str(tmp_path / "a"), str(tmp_path / "b")
    assert _train_cli(bundle, out_a) == 0
    elapsed = time.monotonic() - start
    assert elapsed < 300.0, f"training took {elapsed:.1f}s"

    with open(os.path.join(out_a, "result.csv")) as fh:
        rows = dict(line.split(",") for line in fh.read().strip().splitlines()[1:])
    f1 = float(rows["macro_f1"])
    assert f1 >= 0.95, f"macro-F1 {f1:.4f} below 0.95"

    assert _train_cli(bundle, out_b) == 0
    for fname in ("result.csv", "history.csv", "config.snapshot"):
        with open(os.path.join(out_a, fname), "rb") as fa, \
                open(os.path.join(out_b, fname), "rb") as fb:
            assert fa.read() == fb.read(), f"{fname} differs across reruns"

    report("end-to-end",
           f"macro-F1 {f1:.4f} >= 0.95 in {elapsed:.1f}s; rerun outputs "
           f"byte-identical")


# -- criterion 5: ablation direction -----------------------------------------

def test_ablation_direction(tmp_path):
    """When the class signal lives only in the text channel, dropping the
    text modality (w_VA) costs at least 30 accuracy points versus the
    full model, and the no_TEM / no_dual variants instantiate strictly
    fewer parameters."""
    bundle = str(tmp_path / "bundle")
    cfg = SyntheticConfig(n_classes=4, per_class_train=10, per_class_valid=2,
                          per_class_test=5, d=16, d_v=6, d_a=6,
                          l_s=4, l_v=5, l_a=5, l_r=4, margin=5.0, noise=1.0,
                          signal_channels=("text",))
    generate_synthetic(cfg, 5, bundle)
    ec = ExperimentConfig()
    ec.bundle = bundle
    ec.seed = 2
    ec.train.max_epochs = 10
    ec.train.patience = 10
    ec.train.lr = 5e-3
    ec.train.batch_size = 8
    results, _ = run_ablate(ec, ["full", "w_VA", "no_TEM", "no_dual"])

    gap = results["full"].report.acc - results["w_VA"].report.acc
    assert gap >= 0.30, f"full-vs-w_VA accuracy gap only {gap:.3f}"
    n_full = results["full"].n_parameters
    assert results["no_TEM"].n_parameters < n_full
    assert results["no_dual"].n_parameters < n_full
    report("ablation-direction",
           f"accuracy gap full-w_VA {gap:.2f} >= 0.30; params full "
           f"{n_full} > no_TEM {results['no_TEM'].n_parameters} / "
           f"no_dual {results['no_dual'].n_parameters}")


# -- criterion 6: gamma sweep ------------------------------------------------

def test_gamma_sweep(tmp_path):
    """The default sweep emits 19 rows, and when the class signal is
    carried only by the xReact relation channels the macro-F1 curve peaks
    at the largest gamma value."""
    bundle = str(tmp_path / "bundle")
    cfg = SyntheticConfig(n_classes=3, per_class_train=10, per_class_valid=2,
                          per_class_test=4, d=12, d_v=6, d_a=6,
                          l_s=4, l_v=5, l_a=5, l_r=4, margin=6.0, noise=1.0,
                          signal_channels=("gen_xreact", "ret_xreact"))
    generate_synthetic(cfg, 7, bundle)
    ec = ExperimentConfig()
    ec.bundle = bundle
    ec.seed = 3
    ec.train.max_epochs = 6
    ec.train.patience = 6
    ec.train.lr = 5e-3
    ec.train.batch_size = 8
    results, csv_text = run_gamma_sweep(ec)

    lines = csv_text.strip().splitlines()
    assert len(lines) == 20, f"expected header + 19 rows, got {len(lines) - 1}"
    f1 = {g: res.report.macro_f1 for g, res in results}
    top = f1[0.95]
    assert all(top >= v for v in f1.values()), \
        f"f1 at gamma=0.95 ({top:.4f}) not maximal: {f1}"
    assert top > f1[0.05], \
        f"no rise across the grid: f1(0.95)={top:.4f} f1(0.05)={f1[0.05]:.4f}"
    report("gamma-sweep",
           f"19 rows; macro-F1 peaks at gamma=0.95 ({top:.4f} vs "
           f"{f1[0.05]:.4f} at 0.05)")
