"""Experiment harness: train/evaluate runs, ablation table, gamma sweep.

Every run is fully determined by its ExperimentConfig (including seed);
emitted CSVs are byte-identical across re-runs.  Wall-clock goes to
run.log, never into result CSVs.
"""
from __future__ import annotations

import copy
import os
import time
from dataclasses import dataclass

from .bundle import load_bundle
from .config import ExperimentConfig, dump_config
from .errors import ConfigError
from .metrics import MetricsReport
from .model import TecoModel
from .rng import Rng
from .train import evaluate, fit, history_csv, save_checkpoint

ABLATION_VARIANTS = ("full", "w_TV", "w_TA", "w_VA", "no_TEM", "no_MAF",
                     "no_dual")

DEFAULT_GAMMA_GRID = [round(0.05 * i, 2) for i in range(1, 20)]


@dataclass
class RunResult:
    config_snapshot: str
    report: MetricsReport
    history_path: str | None
    wall_clock: float
    n_parameters: int = 0
    best_epoch: int = -1


def apply_variant(config: ExperimentConfig, variant: str) -> ExperimentConfig:
    """Return a copy of config with exactly the named ablation switch set."""
    cfg = copy.deepcopy(config)
    ab = cfg.ablation
    if variant == "full":
        pass
    elif variant == "w_TV":
        ab.modalities = "TV"
    elif variant == "w_TA":
        ab.modalities = "TA"
    elif variant == "w_VA":
        ab.modalities = "VA"
        ab.no_tem = True  # no text stream to enhance
    elif variant == "no_TEM":
        ab.no_tem = True
    elif variant == "no_MAF":
        ab.no_maf = True
    elif variant == "no_dual":
        ab.no_dual = True
    else:
        raise ConfigError(
            f"unknown ablation variant {variant!r}; "
            f"expected one of {ABLATION_VARIANTS}")
    return cfg


def _prepare(config: ExperimentConfig):
    """Load the bundle, adopt its dims/lengths, map labels for the task."""
    manifest, by_split = load_bundle(config.bundle)
    m = config.model
    m.d, m.d_v, m.d_a = (manifest.dims[k] for k in ("d", "d_v", "d_a"))
    m.l_s, m.l_v, m.l_a, m.l_r = (manifest.lengths[k]
                                  for k in ("l_s", "l_v", "l_a", "l_r"))
    config.validate()
    if config.task == "binary":
        if manifest.binary_map is None:
            raise ConfigError(
                "task=binary requires a binary_map in the bundle manifest")
        n_classes = 2
        by_split = {
            split: [_relabel(r, manifest.binary_map) for r in records]
            for split, records in by_split.items()
        }
    else:
        n_classes = manifest.n_classes
    return manifest, by_split, n_classes


def _relabel(record, binary_map):
    rec = copy.copy(record)
    rec.label = int(binary_map[record.label])
    return rec


def _metrics_csv(report: MetricsReport) -> str:
    lines = ["metric,value"]
    for name, value in (("acc", report.acc), ("macro_f1", report.macro_f1),
                        ("macro_prec", report.macro_prec),
                        ("macro_rec", report.macro_rec)):
        lines.append(f"{name},{value:.6f}")
    return "\n".join(lines) + "\n"


def run_train(config: ExperimentConfig, out_dir=None) -> RunResult:
    start = time.monotonic()
    config = copy.deepcopy(config)
    manifest, by_split, n_classes = _prepare(config)
    model = TecoModel(config.model, n_classes, Rng(config.seed),
                      ablation=config.ablation)
    result = fit(model, by_split["train"], by_split["valid"], config.train,
                 seed=config.seed)
    report = evaluate(model, by_split["test"], config.train.eval_batch_size)
    wall = time.monotonic() - start
    # the snapshot describes the run, not where its files landed
    config.out = ""
    snapshot = dump_config(config)
    history_path = None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "result.csv"), "w") as fh:
            fh.write(_metrics_csv(report))
        history_path = os.path.join(out_dir, "history.csv")
        with open(history_path, "w") as fh:
            fh.write(history_csv(result.history))
        with open(os.path.join(out_dir, "config.snapshot"), "w") as fh:
            fh.write(snapshot)
        save_checkpoint(model.state_arrays(), out_dir)
        with open(os.path.join(out_dir, "run.log"), "w") as fh:
            fh.write(f"wall_clock_s={wall:.3f}\n"
                     f"best_epoch={result.best_epoch}\n"
                     f"best_val_f1={result.best_val_f1:.6f}\n"
                     f"n_parameters={model.n_parameters()}\n")
    return RunResult(config_snapshot=snapshot, report=report,
                     history_path=history_path, wall_clock=wall,
                     n_parameters=model.n_parameters(),
                     best_epoch=result.best_epoch)


def run_ablate(config: ExperimentConfig, variants, out_dir=None):
    """One training run per variant; rows ordered by the requested list."""
    if not variants:
        raise ConfigError("ablate needs at least one variant")
    results = {}
    for variant in variants:
        vcfg = apply_variant(config, variant)
        vdir = os.path.join(out_dir, variant) if out_dir else None
        results[variant] = run_train(vcfg, vdir)
    lines = ["variant,acc,f1,prec,rec,n_parameters"]
    for variant in variants:
        r = results[variant].report
        lines.append(f"{variant},{r.acc:.6f},{r.macro_f1:.6f},"
                     f"{r.macro_prec:.6f},{r.macro_rec:.6f},"
                     f"{results[variant].n_parameters}")
    csv_text = "\n".join(lines) + "\n"
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "ablation.csv"), "w") as fh:
            fh.write(csv_text)
    return results, csv_text


def run_gamma_sweep(config: ExperimentConfig, grid=None, out_dir=None):
    """One training run per gamma value; rows ordered by gamma."""
    grid = list(DEFAULT_GAMMA_GRID) if grid is None else list(grid)
    if not grid:
        raise ConfigError("gamma sweep needs a non-empty grid")
    for g in grid:
        if not 0.0 <= g <= 1.0:
            raise ConfigError(f"gamma grid value {g} outside [0, 1]")
    results = []
    for g in grid:
        gcfg = copy.deepcopy(config)
        gcfg.model.gamma = float(g)
        results.append((g, run_train(gcfg)))
    lines = ["gamma,acc,f1,prec,rec"]
    for g, res in results:
        r = res.report
        lines.append(f"{g:.2f},{r.acc:.6f},{r.macro_f1:.6f},"
                     f"{r.macro_prec:.6f},{r.macro_rec:.6f}")
    csv_text = "\n".join(lines) + "\n"
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "gamma_sweep.csv"), "w") as fh:
            fh.write(csv_text)
    return results, csv_text
