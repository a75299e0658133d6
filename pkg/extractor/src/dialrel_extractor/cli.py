"""Command line for the extractor: extract / export-head / make-pairs.

Exit codes: 0 success, 1 usage error, 2 data or model error.
"""
from __future__ import annotations

import argparse
import sys

from . import wire
from .extract import ExtractionPolicy, export_nsp_head, extract
from .nsp_pairs import make_nsp_pairs

USAGE_ERROR = 1
DATA_ERROR = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def _policy(args) -> ExtractionPolicy:
    return ExtractionPolicy(
        lm_model=getattr(args, "lm_model", None),
        turn_separator=getattr(args, "separator", None),
        max_length=getattr(args, "max_length", None),
        device=args.device,
    )


def cmd_extract(args) -> int:
    requests = wire.read_manifest(args.manifest)
    records, errors = extract(requests, args.model, _policy(args), collect_errors=True)
    wire.write_records(records, args.out)
    for err in errors:
        print(f"error: {err}", file=sys.stderr)
    print(f"wrote {len(records)} records ({len(errors)} failed requests)")
    return DATA_ERROR if errors else 0


def cmd_export_head(args) -> int:
    d = export_nsp_head(args.model, args.out, _policy(args))
    print(f"exported 2x{d} NSP head -> {args.out}")
    return 0


def cmd_make_pairs(args) -> int:
    n = make_nsp_pairs(args.corpus, args.n, args.seed, args.model,
                       args.features_out, args.labels_out, _policy(args))
    print(f"wrote {n} sentence pairs -> {args.features_out}, labels -> {args.labels_out}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="dialrel-extract")
    sub = parser.add_subparsers(dest="command", metavar="subcommand")

    p = sub.add_parser("extract", help="run a manifest through pretrained models")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True, help="encoder model id or local path")
    p.add_argument("--lm-model", help="causal LM for log-probability kinds")
    p.add_argument("--separator", help="turn separator (default: tokenizer's own)")
    p.add_argument("--max-length", type=int)
    p.add_argument("--device", default="cpu")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("export-head", help="export the pretrained NSP classifier")
    p.add_argument("--model", required=True)
    p.add_argument("--device", default="cpu")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_head)

    p = sub.add_parser("make-pairs", help="build NSP evaluation pairs from plain text")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--device", default="cpu")
    p.add_argument("--features-out", required=True)
    p.add_argument("--labels-out", required=True)
    p.set_defaults(func=cmd_make_pairs)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(sys.argv[1:] if argv is None else argv)
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return USAGE_ERROR
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as err:
        print(f"dialrel-extract {args.command}: {err}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
