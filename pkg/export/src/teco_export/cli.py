"""teco-export command line entry point.

    teco-export export --raw <manifest.json> --corpus <tuples.tsv>
        --out <bundle-dir> --knowledge-out <store-file> [dim/length flags]

Exit codes: 0 success, 2 bad input, 3 export failure.
"""
from __future__ import annotations

import argparse
import sys

from .errors import ExportError, InputError
from .export import ExportJob, run_export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="teco-export",
        description="Export raw utterances into training feature bundles")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="run a full export job")
    p.add_argument("--raw", required=True, help="raw utterance manifest JSON")
    p.add_argument("--corpus", required=True,
                   help="event/xReact/xWant tuples, tab-separated")
    p.add_argument("--out", required=True, help="output bundle directory")
    p.add_argument("--knowledge-out", required=True,
                   help="output knowledge store file")
    p.add_argument("--backend", default="hashed", choices=("hashed",))
    p.add_argument("--dim", type=int, default=768)
    p.add_argument("--dim-v", type=int, default=256)
    p.add_argument("--dim-a", type=int, default=768)
    p.add_argument("--len-text", type=int, default=30)
    p.add_argument("--len-vision", type=int, default=230)
    p.add_argument("--len-audio", type=int, default=480)
    p.add_argument("--len-relation", type=int, default=30)
    p.add_argument("--salt", type=int, default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    job = ExportJob(
        raw_manifest=args.raw, out_dir=args.out,
        knowledge_out=args.knowledge_out, corpus=args.corpus,
        backend=args.backend,
        d=args.dim, d_v=args.dim_v, d_a=args.dim_a,
        l_s=args.len_text, l_v=args.len_vision, l_a=args.len_audio,
        l_r=args.len_relation, salt=args.salt)
    try:
        result = run_export(job)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except ExportError as exc:
        print(f"export error: {exc}", file=sys.stderr)
        return 3
    print(f"exported {result.n_exported} records "
          f"({result.n_skipped} skipped) to {result.bundle_dir}")
    print(f"log: {result.log_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
