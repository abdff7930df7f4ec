"""Command line entry point: ``stnn-ddi {train,evaluate,predict,explain,gen-synth}``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import data, explain, metrics, seeding
from .model import TrainConfig, load_model, save_model, score, score_triples, train

log = logging.getLogger("stnn_ddi")

_UMASK = os.umask(0)
os.umask(_UMASK)


class CLIError(Exception):
    pass


class _Outputs:
    """Atomic file writes; everything written is removed if the command fails."""

    def __init__(self):
        self.written = []

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            for path in self.written:
                Path(path).unlink(missing_ok=True)
        return False

    def write(self, path, payload):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
        os.close(fd)
        os.chmod(tmp, 0o666 & ~_UMASK)
        try:
            if callable(payload):
                payload(tmp)
            else:
                Path(tmp).write_bytes(payload.encode("utf-8") if isinstance(payload, str) else payload)
            os.replace(tmp, path)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
        self.written.append(path)


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _non_negative_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _require(args, *names):
    missing = [n for n in names if getattr(args, n.replace("-", "_")) is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise CLIError(f"missing required flag(s): {flags}")
    for n in names:
        value = getattr(args, n.replace("-", "_"))
        if n in ("fingerprints", "triples", "types", "labels") and not Path(value).is_file():
            raise CLIError(f"cannot read {n} file: {value}")


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        rank=args.rank,
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        init_scale=args.init_scale,
        optimizer=args.optimizer,
        seed=args.seed,
        negative_ratio=args.neg_ratio,
    )


def _load_dataset(args) -> data.Dataset:
    return data.load_dataset(args.fingerprints, args.triples, args.types, args.n_bits)


def _json(doc) -> str:
    return json.dumps(doc, indent=2) + "\n"


# --------------------------------------------------------------------------- #
# Subcommands
# --------------------------------------------------------------------------- #
def cmd_train(args) -> int:
    _require(args, "fingerprints", "triples", "types", "checkpoint")
    cfg = _train_config(args)
    ds = _load_dataset(args)
    if len(ds.positives) == 0:
        raise CLIError(f"no positive triples in {args.triples}")
    negatives = data.sample_negatives(
        ds, ds.positives, cfg.negative_ratio, seeding.stream(cfg.seed, seeding.NEG_TRAIN)
    )
    triples = np.concatenate([data.labelled(ds.positives, 1), negatives])
    model, report = train(ds, triples, cfg)
    report_path = args.out or f"{args.checkpoint}.json"
    doc = {"config": asdict(cfg), "n": ds.n, "m": ds.m, "f": ds.f,
           "train_size": len(triples), **report.to_dict()}
    with _Outputs() as out:
        out.write(args.checkpoint, lambda tmp: save_model(model, tmp))
        out.write(report_path, _json(doc))
    log.info("trained on %d triples, final loss %.6f", len(triples), report.final_loss)
    return 0


def _run_fold(ds, split, cfg):
    if split.skipped:
        return metrics.FoldMetrics(split.fold_index, skipped=True)
    model, _ = train(ds, split.train, cfg)
    scores = score_triples(model, ds.fingerprints, split.test)
    try:
        return metrics.evaluate_scores(split.fold_index, scores, split.test[:, 3])
    except metrics.UndefinedMetricError as exc:
        log.warning("fold %d: %s; excluded from aggregation", split.fold_index, exc)
        return metrics.FoldMetrics(split.fold_index, test_size=len(scores), skipped=True)


def _workers() -> int:
    env = os.environ.get("STNN_THREADS")
    if env:
        try:
            value = int(env)
        except ValueError:
            raise CLIError(f"STNN_THREADS must be an integer, got {env!r}") from None
        return max(1, value)
    return os.cpu_count() or 1


def run_evaluation(ds, task, folds, cfg, workers=1) -> metrics.EvalReport:
    splits = data.split(ds, task, folds, cfg.seed, cfg.negative_ratio)
    if workers > 1 and len(splits) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(splits))) as pool:
            results = list(pool.map(_run_fold, [ds] * len(splits), splits, [cfg] * len(splits)))
    else:
        results = [_run_fold(ds, s, cfg) for s in splits]
    results.sort(key=lambda r: r.fold_index)
    report = metrics.aggregate(results, task.upper())
    report.config = {"task": task.upper(), "folds": folds, "threshold": 0.5, **asdict(cfg)}
    return report


def cmd_evaluate(args) -> int:
    _require(args, "fingerprints", "triples", "types", "out")
    cfg = _train_config(args)
    ds = _load_dataset(args)
    report = run_evaluation(ds, args.task, args.folds, cfg, _workers())
    with _Outputs() as out:
        out.write(args.out, _json(report.to_dict()))
    for key in metrics.METRIC_KEYS:
        log.info("%s mean %.4f std %.4f", key, report.mean[key], report.std[key])
    return 0


def _resolve(name, ident, ids):
    try:
        return ids.index(ident)
    except ValueError:
        raise CLIError(f"unknown {name} {ident!r}") from None


def _type_ids(args, model):
    if args.types:
        ids = data.load_types(args.types)
        if len(ids) != model.f:
            raise CLIError(f"{args.types} lists {len(ids)} types, checkpoint has f={model.f}")
        return ids
    return [str(k) for k in range(model.f)]


def cmd_predict(args) -> int:
    _require(args, "checkpoint", "fingerprints", "drug_a", "drug_b")
    if (args.type is None) == (not args.all_types):
        raise CLIError("give exactly one of --type or --all-types")
    model = load_model(args.checkpoint)
    drug_ids, fps = data.load_fingerprints(args.fingerprints, model.n)
    type_ids = _type_ids(args, model)
    fp_a = fps[_resolve("drug", args.drug_a, drug_ids)]
    fp_b = fps[_resolve("drug", args.drug_b, drug_ids)]
    ks = range(model.f) if args.all_types else [_resolve("type", args.type, type_ids)]
    rows = [(type_ids[k], score(model, fp_a, fp_b, k)) for k in ks]
    if args.all_types:
        rows.sort(key=lambda r: -r[1])
    text = "".join(f"{args.drug_a}\t{args.drug_b}\t{t}\t{s!r}\n" for t, s in rows)
    if args.out:
        with _Outputs() as out:
            out.write(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_explain(args) -> int:
    _require(args, "checkpoint", "type", "top_k")
    model = load_model(args.checkpoint)
    type_ids = _type_ids(args, model)
    k = _resolve("type", args.type, type_ids)
    labels = None
    if args.labels:
        _require(args, "labels")
        labels = explain.load_labels(args.labels)
    if (args.drug_a is None) != (args.drug_b is None):
        raise CLIError("drug-pair mode needs both --drug-a and --drug-b")
    if args.drug_a is not None:
        _require(args, "fingerprints")
        drug_ids, fps = data.load_fingerprints(args.fingerprints, model.n)
        fp_a = fps[_resolve("drug", args.drug_a, drug_ids)]
        fp_b = fps[_resolve("drug", args.drug_b, drug_ids)]
        result = explain.explain_pair(
            model, fp_a, fp_b, k, args.top_k, args.bottom_k,
            context={"drug_a": args.drug_a, "drug_b": args.drug_b, "type": type_ids[k]},
        )
    else:
        result = explain.top_pairs_for_type(model, k, args.top_k, bottom_k=args.bottom_k)
        result.context["type"] = type_ids[k]
    result.context["bias"] = model.bias
    text = result.to_json(labels) + "\n"
    if args.out:
        with _Outputs() as out:
            out.write(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


SYNTH_FILES = {
    "fingerprints": "fingerprints.tsv",
    "triples": "triples.tsv",
    "types": "types.txt",
    "checkpoint": "planted.ckpt",
}


def cmd_gensynth(args) -> int:
    _require(args, "out")
    if not 0 < args.density < 1:
        raise CLIError(f"--density must lie in (0, 1), got {args.density}")
    ds, planted = data.generate_planted(args.n, args.m, args.f, args.rank, args.density, args.seed)
    root = Path(args.out)
    root.mkdir(parents=True, exist_ok=True)
    with _Outputs() as out:
        out.write(root / SYNTH_FILES["fingerprints"], lambda t: data.write_fingerprints(t, ds))
        out.write(root / SYNTH_FILES["triples"], lambda t: data.write_triples(t, ds))
        out.write(root / SYNTH_FILES["types"], lambda t: data.write_types(t, ds))
        out.write(root / SYNTH_FILES["checkpoint"], lambda t: save_model(planted, t))
    log.info("wrote %d drugs, %d types, %d positives to %s", ds.m, ds.f, len(ds.positives), root)
    return 0


# --------------------------------------------------------------------------- #
# Argument parsing
# --------------------------------------------------------------------------- #
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stnn-ddi",
        description="Substructure-aware tensor model for multi-type drug-drug interactions.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")

    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--fingerprints", metavar="PATH")
    shared.add_argument("--triples", metavar="PATH")
    shared.add_argument("--types", metavar="PATH")
    shared.add_argument("--checkpoint", metavar="PATH")
    shared.add_argument("--out", metavar="PATH")
    shared.add_argument("--seed", type=_non_negative_int, default=0)
    shared.add_argument("--n-bits", type=_positive_int, default=None,
                        help="substructure universe size (default: file header, else 881)")

    training = argparse.ArgumentParser(add_help=False)
    training.add_argument("--rank", type=_positive_int, default=400)
    training.add_argument("--lr", type=_positive_float, default=0.01)
    training.add_argument("--epochs", type=_non_negative_int, default=100)
    training.add_argument("--batch-size", type=_positive_int, default=1024)
    training.add_argument("--optimizer", choices=("sgd", "adam"), default="adam")
    training.add_argument("--neg-ratio", type=_positive_float, default=1.0)
    training.add_argument("--init-scale", type=float, default=1.0)

    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("train", parents=[shared, training], help="fit a model on all positives")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[shared, training], help="cross-validated evaluation")
    p.add_argument("--task", type=str.upper, choices=("C1", "C2", "C3"), default="C1")
    p.add_argument("--folds", type=_positive_int, default=10)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", parents=[shared], help="score drug pairs")
    p.add_argument("--drug-a")
    p.add_argument("--drug-b")
    p.add_argument("--type")
    p.add_argument("--all-types", action="store_true")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("explain", parents=[shared], help="rank substructure pairs")
    p.add_argument("--type")
    p.add_argument("--drug-a")
    p.add_argument("--drug-b")
    p.add_argument("--top-k", type=_positive_int, default=10)
    p.add_argument("--bottom-k", type=_non_negative_int, default=0)
    p.add_argument("--labels", metavar="PATH")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("gen-synth", parents=[shared], help="write a planted synthetic dataset")
    p.add_argument("--n", type=_positive_int, default=50)
    p.add_argument("--m", type=_positive_int, default=120)
    p.add_argument("--f", type=_positive_int, default=8)
    p.add_argument("--rank", type=_positive_int, default=6)
    p.add_argument("--density", type=float, default=0.08)
    p.set_defaults(func=cmd_gensynth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (CLIError, OSError, ValueError, IndexError, RuntimeError) as exc:
        print(f"stnn-ddi {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
