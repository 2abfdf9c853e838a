"""``mertk`` command line: extract, train, eval, tsne, report, cache.

Exit codes: 0 success, 1 user error (bad config, paths or data), 2 internal failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import container
from .classifiers import CLASSIFIER_KINDS, make_classifier
from .config import FEATURE_KINDS, ExperimentConfig, load_config
from .datasets import DATASET_KINDS, LabeledDataset, load_dataset
from .dsp import load_audio
from .errors import MertkError, MissingFeatures
from .evaluation import (
    SplitSpec,
    confusion,
    precision_recall_f1,
    render_table,
    run_experiment,
    run_regression_experiment,
    split,
)
from .features import FeatureCache, FeatureExtractor
from .tsne import TsneConfig, tsne

log = logging.getLogger("mertk")


# --------------------------------------------------------------------------
# deterministic JSON (floats round-trip exactly)


def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    return repr(x)


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with insertion-ordered keys and shortest round-trip float text."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = obj.tolist() if isinstance(obj, np.ndarray) else obj
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in seq) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj) + "\n")
    return path


# --------------------------------------------------------------------------
# shared steps


def _dataset(cfg: ExperimentConfig) -> LabeledDataset:
    if not cfg.manifest:
        raise MertkError("no manifest given (--dataset / [experiment] manifest)")
    if not Path(cfg.manifest).exists():
        raise MertkError(f"manifest {cfg.manifest} not found")
    kw = {"validate_durations": cfg.validate_durations}
    if cfg.dataset == "emomusic":
        kw["mode"] = cfg.mode
    return load_dataset(cfg.dataset, cfg.manifest, **kw)


def _with_features(cfg: ExperimentConfig, ds: LabeledDataset) -> LabeledDataset:
    extractor = FeatureExtractor(cfg.features, cfg.weights, cfg.hop_s)
    cache = FeatureCache(cfg.cache_dir)
    found, X, missing = cache.gather(cfg.features, extractor.config_hash(), ds.clip_ids,
                                     sequences=cfg.model == "rnn")
    if missing:
        log.warning("%d clip(s) have no cached %s features and are left out", len(missing), cfg.features)
    keep = [ds.clip_ids.index(c) for c in found]
    ds = ds.subset(keep).with_features(X)
    ds.info["missing_features"] = len(missing)
    return ds


def _stem(cfg: ExperimentConfig) -> str:
    return f"{cfg.dataset}_{cfg.features}_{cfg.model}"


def _schedule(cfg: ExperimentConfig) -> dict | None:
    return dict(cfg.schedule) or None


# --------------------------------------------------------------------------
# commands


def cmd_extract(cfg: ExperimentConfig) -> dict:
    ds = _dataset(cfg)
    extractor = FeatureExtractor(cfg.features, cfg.weights, cfg.hop_s)
    h = extractor.config_hash()
    cache = FeatureCache(cfg.cache_dir)
    entries = cache.load(cfg.features)
    extracted, skipped, failed = [], [], {}
    for cid, path in zip(ds.clip_ids, ds.paths):
        key = cache.key(cid, h)
        if key in entries:
            skipped.append(cid)
            continue
        try:
            entries[key] = extractor(load_audio(path))
            extracted.append(cid)
        except (MertkError, OSError, ValueError) as exc:
            failed[cid] = f"{type(exc).__name__}: {exc}"
            log.warning("extract %s failed: %s", cid, failed[cid])
    if extracted:
        cache.save(cfg.features, entries)
    summary = {"feature_kind": cfg.features, "config_hash": h, "extracted": len(extracted),
               "skipped": len(skipped), "failed": failed}
    print(f"{cfg.features}: extracted {len(extracted)}, skipped {len(skipped)}, failed {len(failed)}")
    return summary


def model_paths(cfg: ExperimentConfig) -> tuple[Path, Path]:
    base = Path(cfg.out) / "models" / _stem(cfg)
    return base.with_suffix(".mert"), base.with_suffix(".json")


def cmd_train(cfg: ExperimentConfig) -> dict:
    ds = _with_features(cfg, _dataset(cfg))
    train, test, val = split(ds, SplitSpec(seed=cfg.seed))
    clf = make_classifier(cfg.model, len(ds.classes), seed=cfg.seed, schedule=_schedule(cfg))
    clf.fit(train.features, train.labels, val.features, val.labels)
    meta, tensors = clf.to_state()
    m = precision_recall_f1(confusion(test.labels, clf.predict(test.features), ds.classes))
    model_file, log_file = model_paths(cfg)
    container.write_container(model_file, tensors)
    info = {"model": cfg.model, "dataset": cfg.dataset, "feature_kind": cfg.features, "seed": cfg.seed,
            "classes": list(ds.classes), "meta": meta, "test_accuracy": m["accuracy"],
            "history": clf.history, "container_crc32": container.container_crc(model_file)}
    write_json(log_file, info)
    print(f"trained {cfg.model} on {len(train)} clips; held-out accuracy {m['accuracy']:.4f} -> {model_file}")
    return info


def cmd_eval(cfg: ExperimentConfig) -> dict:
    ds = _with_features(cfg, _dataset(cfg))
    report = run_experiment(ds, cfg.model, cfg.reps, cfg.seed, feature_kind=cfg.features,
                            schedule=_schedule(cfg)).to_dict()
    if ds.targets is not None:
        a, v = run_regression_experiment(ds, cfg.reps, cfg.seed)
        report["r2"] = {"arousal": a, "valence": v}
    out = Path(cfg.out)
    write_json(out / f"report_{_stem(cfg)}.json", report)
    table = render_table(report)
    (out / f"report_{_stem(cfg)}.txt").write_text(table + "\n")
    print(table)
    return report


def cmd_tsne(cfg: ExperimentConfig) -> dict:
    ds = _with_features(cfg, _dataset(cfg))
    X = ds.features.mean(axis=1) if ds.features.ndim == 3 else ds.features
    result = tsne(X, TsneConfig(perplexity=cfg.perplexity, iters=cfg.tsne_iters, seed=cfg.seed))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"tsne_{cfg.dataset}_{cfg.features}"
    with (out / f"{stem}.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["clip_id", "x", "y", "label", "actor", "gender"])
        names = ds.label_names()
        for i, cid in enumerate(ds.clip_ids):
            meta = ds.metadata[i] if ds.metadata else {}
            w.writerow([cid, repr(float(result.coords[i, 0])), repr(float(result.coords[i, 1])),
                        names[i], meta.get("actor", ""), meta.get("gender", "")])
    sidecar = {"final_kl": result.final_kl, "initial_kl": result.initial_kl, "n": len(X),
               "config": {k: getattr(result.config, k) for k in result.config.__dataclass_fields__}}
    write_json(out / f"{stem}.json", sidecar)
    print(f"t-SNE of {len(X)} clips: KL {result.initial_kl:.4f} -> {result.final_kl:.4f}")
    return sidecar


def cmd_report(path) -> str:
    report = json.loads(Path(path).read_text())
    table = render_table(report)
    print(table)
    return table


def cmd_cache(cfg: ExperimentConfig, action: str, all_kinds: bool = False) -> list:
    cache = FeatureCache(cfg.cache_dir)
    if action == "ls":
        rows = cache.index()
        for kind, cid, h, shape in rows:
            print(f"{kind}\t{cid}\t{h}\t{'x'.join(map(str, shape))}")
        return rows
    removed = cache.remove(None if all_kinds else cfg.features)
    for p in removed:
        print(f"removed {p}")
    return removed


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with [experiment], [schedule] and [tsne] sections")
    common.add_argument("--dataset", help="manifest CSV (or RAVDESS directory)")
    common.add_argument("--kind", choices=DATASET_KINDS, help="dataset kind")
    common.add_argument("--features", choices=FEATURE_KINDS)
    common.add_argument("--model", choices=CLASSIFIER_KINDS)
    common.add_argument("--reps", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--cache-dir")
    common.add_argument("--out")
    common.add_argument("--weights", help="MERT weight container or random:<seed>")
    common.add_argument("--hop", type=float, dest="hop_s", help="embedding window hop in seconds")
    common.add_argument("--perplexity", type=float)
    common.add_argument("--tsne-iters", type=int)
    common.add_argument("--max-epochs", type=int)
    common.add_argument("--patience", type=int)
    common.add_argument("--batch-size", type=int)
    common.add_argument("--no-duration-check", action="store_true")
    common.add_argument("--mode", choices=("static_quadrant", "dynamic_av"))
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="mertk", description="Music emotion recognition with deep audio embeddings")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [("extract", "extract and cache features"), ("train", "train one classifier"),
                        ("eval", "repeated-split evaluation report"), ("tsne", "t-SNE coordinates CSV")]:
        sub.add_parser(name, parents=[common], help=help_)
    rp = sub.add_parser("report", help="re-render a JSON report as a table")
    rp.add_argument("report_json")
    cp = sub.add_parser("cache", parents=[common], help="inspect or clear the feature cache")
    cp.add_argument("action", choices=("ls", "rm"))
    cp.add_argument("--all", action="store_true", help="with rm: every feature kind")
    return p


def _config_from_args(args) -> ExperimentConfig:
    overrides = {
        "manifest": args.dataset, "dataset": args.kind, "features": args.features, "model": args.model,
        "reps": args.reps, "seed": args.seed, "cache_dir": args.cache_dir, "out": args.out,
        "weights": args.weights, "hop_s": args.hop_s, "perplexity": args.perplexity,
        "tsne_iters": args.tsne_iters, "max_epochs": args.max_epochs, "patience": args.patience,
        "batch_size": args.batch_size, "mode": args.mode,
        "validate_durations": False if args.no_duration_check else None,
    }
    return load_config(args.config, overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            cmd_report(args.report_json)
            return 0
        cfg = _config_from_args(args)
        if args.command == "extract":
            summary = cmd_extract(cfg)
            attempted = summary["extracted"] + len(summary["failed"])
            return 1 if attempted and not summary["extracted"] else 0
        if args.command == "train":
            cmd_train(cfg)
        elif args.command == "eval":
            cmd_eval(cfg)
        elif args.command == "tsne":
            cmd_tsne(cfg)
        elif args.command == "cache":
            cmd_cache(cfg, args.action, args.all)
        return 0
    except (MertkError, MissingFeatures, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        log.exception("internal failure")
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
