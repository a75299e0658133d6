"""Command-line entry point and experiment orchestration.

Subcommands map onto the library modules: ``ingest`` normalizes raw dataset
files, ``manifest`` emits extraction requests, ``train``/``score`` handle the
relevance head, ``baseline`` computes the prior metrics, ``eval``/
``aggregate``/``sensitivity``/``report`` run the correlation protocol, and
``ablate`` expands the full regularizer x negative-scheme grid over multiple
seeds.  ``mask-nsp`` runs the feature-dimensionality probe.

Exit codes: 0 success, 1 usage error, 2 data error.  Every artifact-writing
run also writes ``<out>.run.json`` recording inputs (paths and SHA-256
hashes), the resolved configuration, and all seeds, which is enough to
reproduce the outputs byte for byte.

All randomness flows from the ``--seed``/``--seeds`` flags; component seeds
are derived as the first 8 bytes (little-endian, top bit cleared) of
SHA-256("<seed>:<label>").
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, baselines, corpus as corpusmod, featurestore, nspprobe, relhead, stats

USAGE_ERROR = 1
DATA_ERROR = 2

CLI_LOSSES = {"bce": "bce_sigmoid", "bce-softmax2": "bce_softmax2", "triplet": "triplet_mod"}
BASELINE_VARIANTS = ("cos-ft", "cos-max", "cos-nsp", "norm-prob", "fed")

GRIDS = {"table4": "bce", "triplet": "triplet"}


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the CLI contract reserves 2 for data
    # errors, so remap.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def derive_seed(master: int, label: str) -> int:
    digest = hashlib.sha256(f"{master}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)


def _sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_run_manifest(out: str | Path, command: str, args: argparse.Namespace,
                        inputs: list[str | Path], seeds: list[int]) -> None:
    payload = {
        "tool": f"dialrel {__version__}",
        "command": command,
        "config": {k: v for k, v in vars(args).items() if k != "func" and v is not None},
        "inputs": {str(p): _sha256(p) for p in inputs},
        "seeds": seeds,
    }
    with open(str(out) + ".run.json", "w", encoding="utf-8") as f:
        json.dump(payload, f, ensure_ascii=False, indent=2, default=str)
        f.write("\n")


def _load_corpus(path: str, dataset: str | None, split: str | None) -> corpusmod.Corpus:
    c = corpusmod.read_corpus(path)
    if dataset:
        c = corpusmod.Corpus(c.dataset, [ex for ex in c.examples if ex.dataset == dataset], c.provenance)
    if split:
        c = c.subset(split=split)
    if not c.examples:
        raise ValueError(f"{path}: no examples left after filtering")
    return c


def _parse_negatives(spec_strs: list[str]) -> tuple[str, list[str]]:
    """--negatives accepts 'fixed:<text>' (repeatable) or 'shuffled'."""
    if not spec_strs:
        return "fixed", [relhead.DEFAULT_NEGATIVE_TEXT]
    if spec_strs == ["shuffled"]:
        return "shuffled", []
    texts = []
    for s in spec_strs:
        if s == "shuffled":
            raise ValueError("cannot mix shuffled with fixed negatives")
        if not s.startswith("fixed:"):
            raise ValueError(f"bad --negatives value {s!r}; use fixed:<text> or shuffled")
        texts.append(s[len("fixed:"):])
    return "fixed", texts


def _name_path(value: str) -> tuple[str, str]:
    if "=" not in value:
        raise argparse.ArgumentTypeError(f"expected NAME=PATH, got {value!r}")
    name, path = value.split("=", 1)
    return name, path


# ---------------------------------------------------------------------------
# Subcommand handlers

def cmd_ingest(args) -> int:
    with open(args.adapter, "r", encoding="utf-8") as f:
        adapter = json.load(f)
    c = corpusmod.ingest(args.dataset, args.raw, adapter)
    if not args.no_splits:
        c = corpusmod.make_splits(c)
    corpusmod.write_corpus(c, args.out)
    _write_run_manifest(args.out, "ingest", args, [args.raw, args.adapter], [])
    print(f"wrote {len(c.examples)} examples ({c.provenance})")
    return 0


def cmd_manifest(args) -> int:
    c = _load_corpus(args.corpus, args.dataset, args.split)
    if args.source:
        c = c.subset(source=args.source)
    kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
    followups = []
    if args.followups:
        with open(args.followups, "r", encoding="utf-8") as f:
            followups = [line.strip() for line in f if line.strip()]
    shuffled = None
    seeds = []
    if args.shuffle_window:
        shuf_seed = derive_seed(args.seed, "shuffle-negatives")
        seeds.append(shuf_seed)
        full = corpusmod.read_corpus(args.corpus)
        shuffled = corpusmod.shuffle_negatives(full, args.shuffle_window, shuf_seed)
    requests = featurestore.emit_manifest(
        c, kinds, negative_texts=args.negatives or [], followups=followups,
        shuffled_negatives=shuffled,
    )
    featurestore.write_manifest(requests, args.out)
    _write_run_manifest(args.out, "manifest", args, [args.corpus], seeds)
    print(f"wrote {len(requests)} extraction requests")
    return 0


def _train_config(args) -> relhead.TrainConfig:
    scheme, texts = _parse_negatives(args.negatives or [])
    cfg = relhead.TrainConfig(
        feature_kind=args.feature_kind,
        loss=CLI_LOSSES[args.loss],
        regularizer=args.reg,
        lam=getattr(args, "lambda"),
        negatives=scheme,
        negative_texts=texts or [relhead.DEFAULT_NEGATIVE_TEXT],
        epochs=args.epochs,
        batch_size=args.batch,
        learning_rate=args.lr,
        seed=args.seed,
        margin=args.margin,
    )
    cfg.validate()
    return cfg


def cmd_train(args) -> int:
    cfg = _train_config(args)
    c = _load_corpus(args.corpus, args.dataset, None)
    store = featurestore.read_store(args.features)
    pairs = relhead.build_training_pairs(c, store, cfg)
    model = relhead.train(pairs, cfg)
    relhead.save_model(model, args.out)
    _write_run_manifest(args.out, "train", args, [args.corpus, args.features], [cfg.seed])
    print(f"trained on {len(pairs)} pairs (D={model.dim}); model -> {args.out}")
    return 0


def cmd_score(args) -> int:
    model = relhead.load_model(args.model)
    c = _load_corpus(args.corpus, args.dataset, args.split)
    store = featurestore.read_store(args.features)
    scores, missing = relhead.score(model, c, store, metric=args.metric, strict=args.strict)
    baselines.write_scores(scores, args.out)
    _write_run_manifest(args.out, "score", args, [args.model, args.corpus, args.features], [])
    print(f"wrote {len(scores)} scores" + (f"; {len(missing)} missing features" if missing else ""))
    return 0


def cmd_baseline(args) -> int:
    c = _load_corpus(args.corpus, args.dataset, args.split)
    store = featurestore.read_store(args.features)
    metric = args.metric or args.variant.replace("-", "_")
    if args.variant in ("cos-ft", "cos-max", "cos-nsp"):
        scores, missing = baselines.cosine_metric(c, store, args.variant.replace("-", "_"),
                                                  strict=args.strict)
    elif args.variant == "norm-prob":
        scores, batch_stats, missing = baselines.norm_prob_metric(c, store, metric=metric,
                                                                  strict=args.strict)
        if batch_stats.degenerate:
            print("warning: degenerate batch (all per-token log-probs equal)", file=sys.stderr)
    else:
        scores, missing = baselines.fed_metric(c, store, metric=metric, strict=args.strict)
    for s in scores:
        s.metric = metric
    baselines.write_scores(scores, args.out)
    _write_run_manifest(args.out, "baseline", args, [args.corpus, args.features], [])
    print(f"wrote {len(scores)} scores" + (f"; {len(missing)} missing features" if missing else ""))
    return 0


def cmd_eval(args) -> int:
    scored = baselines.read_scores(args.scores)
    c = _load_corpus(args.corpus, args.dataset, args.split)
    rating = {ex.id: ex.response.mean_rating for ex in c.examples}
    xs, ys = [], []
    for s in scored:
        if s.example_id in rating:
            xs.append(s.score)
            ys.append(rating[s.example_id])
    if not xs:
        raise ValueError("no overlap between scores and corpus examples")
    metric = args.metric or (scored[0].metric if scored else "metric")
    report = stats.evaluate_scores(
        xs, ys, metric=metric, dataset=c.examples[0].dataset,
        split=args.split or c.examples[0].split, n_perm=args.n_perm,
        seed=derive_seed(args.seed, f"pvalue:{metric}"),
    )
    stats.write_report(report, args.out)
    _write_run_manifest(args.out, "eval", args, [args.scores, args.corpus], [args.seed])
    print(f"{metric}: S={report.spearman:.3f} (p={report.p_spearman:.4g}) "
          f"P={report.pearson:.3f} (p={report.p_pearson:.4g}) n={report.n}")
    return 0


def cmd_aggregate(args) -> int:
    reports = [stats.read_report(p) for p in args.reports]
    agg = stats.aggregate_runs(reports)
    stats.write_report(agg, args.out)
    _write_run_manifest(args.out, "aggregate", args, list(args.reports), [])
    print(f"{agg.metric}/{agg.dataset}/{agg.split}: S={agg.spearman:.3f} ({agg.spearman_std:.3f}) "
          f"P={agg.pearson:.3f} ({agg.pearson_std:.3f}) over {agg.runs} runs")
    return 0


def cmd_sensitivity(args) -> int:
    reports = [stats.read_report(p) for p in args.reports]
    by_metric: dict[str, dict[str, float]] = {}
    for r in reports:
        by_metric.setdefault(r.metric, {})[r.dataset] = r.spearman
    out = {}
    for metric, per_dataset in by_metric.items():
        rep = stats.sensitivity_ratio(per_dataset, metric=metric)
        out[metric] = asdict(rep)
        ratio = "inf" if rep.ratio == float("inf") else f"{rep.ratio:.2f}"
        print(f"{metric}: best {rep.best:.3f} ({rep.best_dataset}) / "
              f"worst {rep.worst:.3f} ({rep.worst_dataset}) = {ratio}")
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump(out, f, ensure_ascii=False, indent=2)
        f.write("\n")
    _write_run_manifest(args.out, "sensitivity", args, list(args.reports), [])
    return 0


def cmd_report(args) -> int:
    reports = [stats.read_report(p) for p in args.reports]
    text = stats.render_reports(reports, fmt=args.format)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        _write_run_manifest(args.out, "report", args, list(args.reports), [])
    else:
        print(text, end="")
    return 0


def cmd_mask_nsp(args) -> int:
    model = relhead.load_model(args.model)
    head = featurestore.read_nsp_head(args.head)
    store = featurestore.read_store(args.features)
    labels = nspprobe.read_labels(args.labels)
    pairs = nspprobe.labelled_pairs(store, labels)
    mask = nspprobe.top_k_mask(model, args.k)
    unmasked = nspprobe.nsp_accuracy(head, pairs)
    masked = nspprobe.nsp_accuracy(head, pairs, mask)
    payload = {
        "k": args.k,
        "n_pairs": len(pairs),
        "accuracy_unmasked": unmasked,
        "accuracy_masked": masked,
        "kept_dims": [int(i) for i in np.flatnonzero(mask)],
    }
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")
    _write_run_manifest(args.out, "mask-nsp", args,
                        [args.model, args.head, args.features, args.labels], [])
    print(f"NSP accuracy on {len(pairs)} pairs: unmasked {unmasked:.3f}, "
          f"top-{args.k} masked {masked:.3f}")
    return 0


def cmd_ablate(args) -> int:
    """Expand the regularizer x negative-scheme grid over datasets and seeds."""
    loss = GRIDS[args.grid]
    train_corpora = dict(args.train_corpus)
    train_features = dict(args.train_features)
    eval_sets = dict(args.eval_corpus)
    eval_features = dict(args.eval_features)
    if set(train_corpora) != set(train_features):
        raise ValueError("--train-corpus and --train-features names must match")
    if set(eval_sets) != set(eval_features):
        raise ValueError("--eval-corpus and --eval-features names must match")
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    if not seeds:
        raise ValueError("no seeds given")

    out_dir = Path(args.out)
    (out_dir / "models").mkdir(parents=True, exist_ok=True)
    (out_dir / "reports").mkdir(exist_ok=True)
    (out_dir / "aggregated").mkdir(exist_ok=True)

    loaded_train = {
        name: (corpusmod.read_corpus(cpath), featurestore.read_store(train_features[name]))
        for name, cpath in train_corpora.items()
    }
    loaded_eval = {
        name: (corpusmod.read_corpus(cpath), featurestore.read_store(eval_features[name]))
        for name, cpath in eval_sets.items()
    }

    aggregated = []
    n_models = 0
    for data_name, (train_c, train_store) in loaded_train.items():
        for reg in ("l1", "none"):
            for neg in ("fixed", "shuffled"):
                cell = f"{data_name}-{reg}-{neg}-{loss}"
                per_eval_runs: dict[str, list[stats.CorrelationReport]] = {n: [] for n in loaded_eval}
                for seed in seeds:
                    cfg = relhead.TrainConfig(
                        loss=CLI_LOSSES[loss], regularizer=reg, lam=getattr(args, "lambda"),
                        negatives=neg,
                        negative_texts=[args.negative_text],
                        epochs=args.epochs, batch_size=args.batch,
                        learning_rate=args.lr, seed=seed, margin=args.margin,
                    )
                    pairs = relhead.build_training_pairs(train_c, train_store, cfg)
                    model = relhead.train(pairs, cfg)
                    relhead.save_model(model, out_dir / "models" / f"{cell}-seed{seed}.json")
                    n_models += 1
                    for eval_name, (eval_c, eval_store) in loaded_eval.items():
                        subset = eval_c.subset(split=args.split) if args.split else eval_c
                        scores, _missing = relhead.score(model, subset, eval_store, metric=cell)
                        rating = {ex.id: ex.response.mean_rating for ex in subset.examples}
                        xs = [s.score for s in scores if s.example_id in rating]
                        ys = [rating[s.example_id] for s in scores if s.example_id in rating]
                        rep = stats.evaluate_scores(
                            xs, ys, metric=cell, dataset=subset.examples[0].dataset,
                            split=args.split or subset.examples[0].split,
                            n_perm=args.n_perm,
                            seed=derive_seed(seed, f"pvalue:{cell}:{eval_name}"),
                        )
                        stats.write_report(rep, out_dir / "reports" / f"{cell}-{eval_name}-seed{seed}.json")
                        per_eval_runs[eval_name].append(rep)
                for eval_name, runs in per_eval_runs.items():
                    agg = stats.aggregate_runs(runs)
                    stats.write_report(agg, out_dir / "aggregated" / f"{cell}-{eval_name}.json")
                    aggregated.append(agg)
                print(f"cell {cell}: {len(seeds)} seeds done")

    summary = stats.render_reports(aggregated, fmt="markdown")
    (out_dir / "summary.md").write_text(summary, encoding="utf-8")
    inputs = list(train_corpora.values()) + list(train_features.values()) \
        + list(eval_sets.values()) + list(eval_features.values())
    _write_run_manifest(out_dir / "summary.md", "ablate", args, inputs, seeds)
    print(f"ablation grid complete: {n_models} models, {len(aggregated)} aggregated reports")
    return 0


# ---------------------------------------------------------------------------
# Parser assembly

# Flags whose config-file values need casting before use as defaults.
_CASTS = {
    "epochs": int, "batch": int, "seed": int, "n_perm": int, "k": int,
    "shuffle_window": int, "lr": float, "lambda": float, "margin": float,
    "strict": lambda s: s.lower() in ("1", "true", "yes"),
    "no_splits": lambda s: s.lower() in ("1", "true", "yes"),
}


def _read_config_defaults(argv: list[str]) -> dict:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return {}
    text = Path(known.config).read_text(encoding="utf-8")
    if not text.lstrip().startswith("["):
        text = "[dialrel]\n" + text  # sectionless key=value files are fine
    parser = configparser.ConfigParser()
    parser.read_string(text)
    out = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            dest = key.replace("-", "_")
            out[dest] = _CASTS.get(dest, str)(value)
    return out


def _add_common_train_flags(p):
    p.add_argument("--loss", choices=sorted(CLI_LOSSES), default="bce")
    p.add_argument("--reg", choices=list(relhead.REGULARIZERS), default="l1")
    p.add_argument("--lambda", dest="lambda", type=float, default=1.0)
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--batch", type=int, default=6)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--margin", type=float, default=0.4)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> tuple[_Parser, dict[str, argparse.ArgumentParser]]:
    parser = _Parser(prog="dialrel", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"dialrel {__version__}")
    parser.add_argument("--config", help="INI file of flag defaults (flags still win)")
    sub = parser.add_subparsers(dest="command", metavar="subcommand")
    subparsers: dict[str, argparse.ArgumentParser] = {}

    p = sub.add_parser("ingest", help="normalize a raw annotated dataset file")
    p.add_argument("--dataset", required=True, choices=list(corpusmod.DATASETS))
    p.add_argument("--raw", required=True)
    p.add_argument("--adapter", required=True, help="JSON field-map for the raw layout")
    p.add_argument("--out", required=True)
    p.add_argument("--no-splits", action="store_true", help="skip positional split assignment")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("manifest", help="emit feature-extraction requests")
    p.add_argument("--corpus", required=True)
    p.add_argument("--kinds", required=True, help="comma-separated feature kinds")
    p.add_argument("--negatives", action="append", help="fixed negative text (repeatable)")
    p.add_argument("--followups", help="file of follow-up utterances, one per line")
    p.add_argument("--shuffle-window", type=int, default=0,
                   help="also emit shuffled negatives drawn from this many following contexts")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dataset")
    p.add_argument("--split")
    p.add_argument("--source")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_manifest)

    p = sub.add_parser("train", help="train the relevance head on stored pair features")
    p.add_argument("--corpus", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--negatives", action="append",
                   help="'fixed:<text>' (repeatable) or 'shuffled'")
    p.add_argument("--feature-kind", default="PAIR_NSP",
                   choices=list(featurestore.VECTOR_KINDS))
    p.add_argument("--dataset")
    p.add_argument("--out", required=True)
    _add_common_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score examples with a trained head")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--metric", default="relhead")
    p.add_argument("--dataset")
    p.add_argument("--split")
    p.add_argument("--strict", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("baseline", help="compute a closed-form baseline metric")
    p.add_argument("--variant", required=True, choices=list(BASELINE_VARIANTS))
    p.add_argument("--corpus", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--metric")
    p.add_argument("--dataset")
    p.add_argument("--split")
    p.add_argument("--strict", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("eval", help="correlate scores with human ratings")
    p.add_argument("--scores", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--metric")
    p.add_argument("--dataset")
    p.add_argument("--split")
    p.add_argument("--n-perm", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("aggregate", help="aggregate repeat-run reports")
    p.add_argument("--reports", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("ablate", help="run the regularizer x negatives grid over seeds")
    p.add_argument("--grid", choices=sorted(GRIDS), default="table4")
    p.add_argument("--train-corpus", type=_name_path, action="append", required=True,
                   metavar="NAME=PATH")
    p.add_argument("--train-features", type=_name_path, action="append", required=True,
                   metavar="NAME=PATH")
    p.add_argument("--eval-corpus", type=_name_path, action="append", required=True,
                   metavar="NAME=PATH")
    p.add_argument("--eval-features", type=_name_path, action="append", required=True,
                   metavar="NAME=PATH")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--split", default="test")
    p.add_argument("--n-perm", type=int, default=1_000)
    p.add_argument("--negative-text", default=relhead.DEFAULT_NEGATIVE_TEXT)
    p.add_argument("--lambda", dest="lambda", type=float, default=1.0)
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--batch", type=int, default=6)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--margin", type=float, default=0.4)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sensitivity", help="best-to-worst Spearman ratio per metric")
    p.add_argument("--reports", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("mask-nsp", help="top-k weight mask probe on NSP accuracy")
    p.add_argument("--model", required=True)
    p.add_argument("--head", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mask_nsp)

    p = sub.add_parser("report", help="render reports as markdown/csv/json")
    p.add_argument("--reports", nargs="+", required=True)
    p.add_argument("--format", choices=("markdown", "csv", "json"), default="markdown")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    for name, action in sub.choices.items():
        subparsers[name] = action
    return parser, subparsers


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subparsers = build_parser()
    try:
        file_defaults = _read_config_defaults(argv)
    except (OSError, configparser.Error, ValueError) as err:
        print(f"dialrel: bad config file: {err}", file=sys.stderr)
        return USAGE_ERROR
    if file_defaults:
        for sp in subparsers.values():
            known = {a.dest for a in sp._actions}
            sp.set_defaults(**{k: v for k, v in file_defaults.items() if k in known})
    args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return USAGE_ERROR
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, FloatingPointError) as err:
        print(f"dialrel {args.command}: {err}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
