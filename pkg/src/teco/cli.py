"""Command-line experiment harness.

Subcommands: train, evaluate, ablate, gamma-sweep, make-synthetic,
export-report.  Exit codes: 0 success, 2 config error, 3 data error,
4 numerical divergence.
"""
from __future__ import annotations

import argparse
import os
import sys

from . import experiment
from .bundle import SyntheticConfig, generate_synthetic
from .config import ExperimentConfig, apply_key, load_config
from .errors import ConfigError, DataError, DivergenceError
from .experiment import ABLATION_VARIANTS, run_ablate, run_gamma_sweep, run_train
from .model import TecoModel
from .rng import Rng
from .train import evaluate as evaluate_model
from .train import load_checkpoint


def _add_common(parser):
    parser.add_argument("--config", action="append", default=[],
                        help="config file(s), flat key=value lines")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VAL",
                        help="override a single config key")
    parser.add_argument("--bundle", help="feature bundle directory")
    parser.add_argument("--knowledge", help="knowledge store file")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--task", choices=("twenty_class", "binary"))


def _build_config(args) -> ExperimentConfig:
    config = ExperimentConfig()
    for path in args.config:
        config = load_config(path, config)
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, val = item.partition("=")
        apply_key(config, key.strip(), val)
    # dedicated flags win over files and --set
    if args.bundle:
        config.bundle = args.bundle
    if args.knowledge:
        config.knowledge = args.knowledge
    if args.out:
        config.out = args.out
    if args.seed is not None:
        config.seed = args.seed
    if args.task:
        config.task = args.task
    return config


def cmd_train(args):
    config = _build_config(args)
    out = config.out or None
    result = run_train(config, out)
    r = result.report
    print(f"test acc={r.acc:.4f} macro_f1={r.macro_f1:.4f} "
          f"macro_prec={r.macro_prec:.4f} macro_rec={r.macro_rec:.4f}")
    if out:
        print(f"outputs written to {out}")


def cmd_evaluate(args):
    config = _build_config(args)
    run_dir = args.run_dir
    snapshot = os.path.join(run_dir, "config.snapshot")
    if os.path.exists(snapshot):
        config = load_config(snapshot, ExperimentConfig())
        if args.bundle:
            config.bundle = args.bundle
        if args.task:
            config.task = args.task
        if args.out:
            config.out = args.out
    manifest, by_split, n_classes = experiment._prepare(config)
    model = TecoModel(config.model, n_classes, Rng(config.seed),
                      ablation=config.ablation)
    model.load_state_arrays(load_checkpoint(run_dir))
    report = evaluate_model(model, by_split["test"],
                            config.train.eval_batch_size)
    print(f"test acc={report.acc:.4f} macro_f1={report.macro_f1:.4f} "
          f"macro_prec={report.macro_prec:.4f} macro_rec={report.macro_rec:.4f}")
    if config.out:
        os.makedirs(config.out, exist_ok=True)
        with open(os.path.join(config.out, "eval_result.csv"), "w") as fh:
            fh.write(experiment._metrics_csv(report))


def cmd_ablate(args):
    config = _build_config(args)
    variants = args.variants.split(",") if args.variants \
        else list(ABLATION_VARIANTS)
    _, csv_text = run_ablate(config, variants, config.out or None)
    print(csv_text, end="")


def cmd_gamma_sweep(args):
    config = _build_config(args)
    grid = None
    if args.grid:
        try:
            grid = [float(v) for v in args.grid.split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad --grid value: {exc}") from exc
    _, csv_text = run_gamma_sweep(config, grid, config.out or None)
    print(csv_text, end="")


def cmd_make_synthetic(args):
    if not args.out:
        raise ConfigError("make-synthetic requires --out")
    channels = tuple(c.strip() for c in args.signal_channels.split(",")
                     if c.strip())
    cfg = SyntheticConfig(
        n_classes=args.classes,
        per_class_train=args.per_class,
        per_class_valid=args.per_class_eval,
        per_class_test=args.per_class_eval,
        d=args.dim, d_v=args.dim_v, d_a=args.dim_a,
        l_s=args.len_text, l_v=args.len_vision, l_a=args.len_audio,
        l_r=args.len_text,
        margin=args.margin, noise=args.noise,
        signal_channels=channels,
    )
    generate_synthetic(cfg, args.seed or 0, args.out)
    print(f"synthetic bundle written to {args.out}")


def cmd_export_report(args):
    out = args.out
    if not out or not os.path.isdir(out):
        raise DataError(f"no such run directory: {out}")
    sections = []
    for fname in ("result.csv", "eval_result.csv", "ablation.csv",
                  "gamma_sweep.csv", "history.csv", "run.log"):
        path = os.path.join(out, fname)
        if os.path.exists(path):
            with open(path) as fh:
                sections.append(f"== {fname} ==\n{fh.read()}")
    if not sections:
        raise DataError(f"no result files found under {out}")
    report = "\n".join(sections)
    report_path = os.path.join(out, "report.txt")
    with open(report_path, "w") as fh:
        fh.write(report)
    print(report, end="")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="teco",
        description="Multimodal intent-recognition experiment harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train and evaluate on the test split")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a saved checkpoint")
    _add_common(p)
    p.add_argument("--run-dir", required=True,
                   help="directory holding checkpoint + config.snapshot")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="run the ablation table")
    _add_common(p)
    p.add_argument("--variants",
                   help=f"comma list from {','.join(ABLATION_VARIANTS)}")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gamma-sweep", help="sweep the relation-blend gamma")
    _add_common(p)
    p.add_argument("--grid", help="comma list of gamma values "
                                  "(default 0.05..0.95 step 0.05)")
    p.set_defaults(func=cmd_gamma_sweep)

    p = sub.add_parser("make-synthetic", help="generate a synthetic bundle")
    _add_common(p)
    p.add_argument("--classes", type=int, default=20)
    p.add_argument("--per-class", type=int, default=20,
                   help="train samples per class")
    p.add_argument("--per-class-eval", type=int, default=5,
                   help="valid/test samples per class")
    p.add_argument("--margin", type=float, default=5.0)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--dim-v", type=int, default=16)
    p.add_argument("--dim-a", type=int, default=16)
    p.add_argument("--len-text", type=int, default=4)
    p.add_argument("--len-vision", type=int, default=6)
    p.add_argument("--len-audio", type=int, default=6)
    p.add_argument("--signal-channels",
                   default="text,vision,audio,gen_xreact,gen_xwant,"
                           "ret_xreact,ret_xwant")
    p.set_defaults(func=cmd_make_synthetic)

    p = sub.add_parser("export-report",
                       help="collect run CSVs into a single report.txt")
    _add_common(p)
    p.set_defaults(func=cmd_export_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except DivergenceError as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
