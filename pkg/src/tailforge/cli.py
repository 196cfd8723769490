"""``tailforge`` command line. Exit codes: 0 success, 1 validation error, 2 runtime failure."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .data import (
    ClassDistribution,
    FrequencyTable,
    frequency_match_counts,
    imbalance_ratio,
    make_pareto_longtail,
    read_manifest,
    split_head_tail,
    subsample_to_counts,
    synth_gaussian_dataset,
    synth_image_dataset,
    write_manifest,
)
from .errors import InvalidArgument, MissingPayload, TailforgeError
from .evaluate import emit_report, read_results_csv
from .herding import read_selection_csv, undersample_heads, write_selection_csv
from .mix import oversample_tail
from .pipeline import BenchSetting, StageError, evaluate_model, run_matrix, run_pipeline
from .tensor import read_ltt1, write_ltt1
from .train import STRATEGIES, Model, TrainConfig, forward

log = logging.getLogger("tailforge")


def _parse_seeds(text):
    try:
        if "-" in text and "," not in text:
            lo, hi = text.split("-")
            return list(range(int(lo), int(hi) + 1))
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None


def _config(args) -> TrainConfig:
    cfg = TrainConfig.from_file(args.config) if args.config else TrainConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _out(args, default=None) -> Path:
    out = args.out or default
    if out is None:
        raise InvalidArgument("--out is required for this command")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _distribution_summary(dist: ClassDistribution) -> dict:
    split = split_head_tail(dist)
    return {
        "name": dist.name,
        "classes": dist.n_classes,
        "total": dist.total,
        "max": max(dist.counts),
        "min": min(dist.counts),
        "imbalance_ratio": imbalance_ratio(dist),
        "m": split.m,
        "head": len(split.head),
        "tail": len(split.tail),
        "boundary": len(split.boundary),
        "counts": list(dist.counts),
    }


def cmd_make_longtail(args):
    if args.frequencies:
        freqs = FrequencyTable.read_csv(args.frequencies)
        base = [int(v) for v in args.original_counts.split(",")] if args.original_counts else None
        if base is None:
            raise InvalidArgument("--frequencies needs --original-counts (one value or one per class)")
        if len(base) == 1:
            base = base * len(freqs.freqs)
        counts = frequency_match_counts(base, freqs)
        dist = ClassDistribution(tuple(counts), args.test_per_class, "frequency-lt")
    else:
        if args.n_classes is None or args.n_max is None or args.n_min is None:
            raise InvalidArgument("make-longtail needs N N_MAX N_MIN or --frequencies")
        dist = make_pareto_longtail(
            args.n_classes, args.n_max, args.n_min, args.alpha, args.seed or 0, args.test_per_class
        )
    summary = _distribution_summary(dist)
    if args.out:
        out = _out(args)
        if args.manifest:
            source = read_manifest(args.manifest)
            counts = [0] * source.n_classes
            for rank, label in enumerate(dist.source_labels):
                counts[label] = dist.counts[rank]
            write_manifest(subsample_to_counts(source, counts, args.seed or 0, dist.name), out)
        with open(out / "distribution.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["class_id", "count", "source_label"])
            for c, (n, lab) in enumerate(zip(dist.counts, dist.source_labels)):
                w.writerow([c, n, lab])
    print(json.dumps(summary))


def cmd_synth(args):
    dist = make_pareto_longtail(
        args.classes, args.n_max, args.n_min, args.alpha, args.seed or 0, args.test_per_class, "synthetic-lt"
    )
    if args.kind == "image":
        ds = synth_image_dataset(dist, args.size, seed=args.seed or 0)
    else:
        ds = synth_gaussian_dataset(dist, args.dim, args.sep, seed=args.seed or 0)
    write_manifest(ds, _out(args))
    print(json.dumps(_distribution_summary(dist) | {"samples": len(ds.sample_ids)}))


def _write_log(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "phase", "loss_ce", "loss_kd", "lr"])
        for r in rows:
            w.writerow([r.epoch, r.phase, f"{r.loss_ce:.6f}", f"{r.loss_kd:.6f}", f"{r.lr:.6g}"])


def cmd_train(args):
    cfg = _config(args)
    ds = read_manifest(args.manifest)
    out = _out(args)
    run = run_pipeline(cfg, ds, [cfg.strategy], keep_models=True)
    teacher = run.teachers[cfg.seed]
    teacher.save(out / "teacher.ltt1")
    run.students[cfg.strategy].save(out / "student.ltt1")
    write_ltt1(out / "embeddings.ltt1", forward(teacher, ds.flat())[1])
    _write_log(run.logs["phase1"] + run.logs[cfg.strategy], out / "log.csv")
    (out / "config.txt").write_text(cfg.to_text(), encoding="utf-8")
    emit_report(run.reports, out)
    r = run.reports[0]
    print(f"{cfg.strategy}: head {r.head_acc:.1f} tail {r.tail_acc:.1f} overall {r.overall_acc:.1f}")


def _embeddings(path, ds):
    emb = read_ltt1(path, expected_rank=2).astype(np.float64)
    if emb.shape[0] != len(ds.sample_ids):
        raise InvalidArgument(f"{path}: {emb.shape[0]} rows for {len(ds.sample_ids)} manifest samples")
    return emb


def cmd_select(args):
    ds = read_manifest(args.manifest)
    split = split_head_tail(ds.distribution)
    emb = _embeddings(args.embeddings, ds) if args.embeddings else None
    if emb is None and args.method == "herding":
        raise InvalidArgument("herding selection needs --embeddings")
    sel = undersample_heads(
        ds, emb, split, normalize=args.normalize, method=args.method, rng=np.random.default_rng(args.seed or 0)
    )
    out = Path(args.out or "selection.csv")
    if out.suffix != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "selection.csv"
    write_selection_csv(sel, out)
    kept = sum(len(r.selected_ids) for r in sel.values())
    removed = sum(len(r.removed_ids) for r in sel.values())
    print(json.dumps({"head_classes": len(sel), "kept": kept, "removed": removed, "budget": split.budget}))


def cmd_augment(args):
    ds = read_manifest(args.manifest)
    split = split_head_tail(ds.distribution)
    selection = read_selection_csv(args.selection)
    pool = sorted(s for res in selection.values() for s in res.removed_ids)
    if args.embeddings:
        emb = _embeddings(args.embeddings, ds)
    elif args.teacher:
        emb = forward(Model.load(args.teacher), ds.flat())[1]
    else:
        emb = ds.flat()  # raw payloads as features
    recipes = oversample_tail(
        ds, split, emb, k=args.k, batch_size=args.batch_size, seed=args.seed or 0,
        pool_ids=pool, visual=not args.random_source, s_range=(args.s_lo, args.s_hi),
    )
    out = _out(args)
    with open(out / "recipes.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["base_id", "source_ids", "mask_rects", "label_weights"])
        for r in recipes:
            w.writerow([
                r.base_id,
                ";".join(str(sid) for sid, _ in r.sources),
                ";".join(f"{m.x0}:{m.y0}:{m.w}:{m.h}" for _, m in r.sources),
                ";".join(f"{c}:{r.soft_label[c]:.6f}" for c in np.flatnonzero(r.soft_label)),
            ])
    n_preview = min(args.preview, len(recipes))
    if n_preview:
        (out / "preview").mkdir(exist_ok=True)
        rendered = recipes.render(ds.payloads)
        for i in range(n_preview):
            write_ltt1(out / "preview" / f"{i:05d}.ltt1", rendered[i])
    print(json.dumps({"recipes": len(recipes), "preview": n_preview, "fallback": recipes.fallback}))


def cmd_eval(args):
    ds = read_manifest(args.manifest)
    model = Model.load(args.model)
    report = evaluate_model(model, ds, args.strategy, args.seed)
    if args.out:
        emit_report([report], _out(args))
    print(f"head {report.head_acc:.1f} tail {report.tail_acc:.1f} overall {report.overall_acc:.1f}")


def cmd_bench(args):
    cfg = _config(args)
    seeds = args.seeds or ([args.seed] if args.seed is not None else [0, 1, 2, 3, 4])
    strategies = args.strategies.split(",") if args.strategies else list(STRATEGIES)
    for s in strategies:
        if s not in STRATEGIES:
            raise InvalidArgument(f"unknown strategy {s!r}")
    bench = BenchSetting(args.classes, args.n_max, args.n_min, args.alpha, args.dim, args.sep, args.test_per_class)
    started = time.perf_counter()
    dataset = read_manifest(args.manifest) if args.manifest else None
    reports = run_matrix(cfg, strategies, seeds, bench, dataset)
    out = _out(args, "bench-out")
    emit_report(reports, out)
    print(_table(read_results_csv(out / "results.csv"), args.reference))
    log.info("bench finished in %.1f s", time.perf_counter() - started)


def _table(rows, reference=None):
    means = [r for r in rows if r["seed"] == "mean"]
    ref = next((r for r in means if r["strategy"] == reference), None)
    lines = [f"{'strategy':<12}{'head':>8}{'tail':>8}{'overall':>9}"]
    for r in means:
        if ref is not None and r is not ref:
            vals = [r[c] - ref[c] for c in ("head", "tail", "overall")]
            lines.append(f"{r['strategy']:<12}" + "".join(f"{v:>+8.1f}" for v in vals[:2]) + f"{vals[2]:>+9.1f}")
        else:
            lines.append(f"{r['strategy']:<12}{r['head']:>8.1f}{r['tail']:>8.1f}{r['overall']:>9.1f}")
    return "\n".join(lines)


def cmd_report(args):
    path = Path(args.results)
    if path.is_dir():
        path = path / "results.csv"
    if not path.is_file():
        raise InvalidArgument(f"no results file at {path}")
    print(_table(read_results_csv(path), args.reference))


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--seeds", type=_parse_seeds, default=None, help="e.g. 0,1,2 or 0-4")
    common.add_argument("--out", default=None)
    common.add_argument("--config", default=None, help="flat key = value training config")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="tailforge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-longtail", parents=[common], help="build a long-tailed class distribution")
    p.add_argument("n_classes", type=int, nargs="?")
    p.add_argument("n_max", type=int, nargs="?")
    p.add_argument("n_min", type=int, nargs="?")
    p.add_argument("--alpha", type=float, default=6.0)
    p.add_argument("--test-per-class", type=int, default=0)
    p.add_argument("--frequencies", help="class_id,frequency CSV")
    p.add_argument("--original-counts", help="per-class source counts for --frequencies")
    p.add_argument("--manifest", help="balanced source manifest to subsample (needs --out)")
    p.set_defaults(func=cmd_make_longtail)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic long-tailed dataset")
    p.add_argument("--classes", type=int, default=20)
    p.add_argument("--n-max", type=int, default=200)
    p.add_argument("--n-min", type=int, default=2)
    p.add_argument("--alpha", type=float, default=6.0)
    p.add_argument("--test-per-class", type=int, default=50)
    p.add_argument("--kind", choices=["vector", "image"], default="vector")
    p.add_argument("--dim", type=int, default=10)
    p.add_argument("--sep", type=float, default=3.0)
    p.add_argument("--size", type=int, default=16)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="Phase I + Phase II on a manifest")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("select", parents=[common], help="herding selection of head classes")
    p.add_argument("--manifest", required=True)
    p.add_argument("--embeddings", help="LTT1 (N, dim) matrix in manifest row order")
    p.add_argument("--method", choices=["herding", "random"], default="herding")
    p.add_argument("--normalize", action="store_true")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("augment", parents=[common], help="plan and preview tail CutMix recipes")
    p.add_argument("--manifest", required=True)
    p.add_argument("--selection", required=True)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--preview", type=int, default=0)
    p.add_argument("--embeddings")
    p.add_argument("--teacher", help="teacher.ltt1 bundle used to embed samples")
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--s-lo", type=float, default=0.1)
    p.add_argument("--s-hi", type=float, default=0.5)
    p.add_argument("--random-source", action="store_true", help="CMO-style random sources")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("eval", parents=[common], help="evaluate a saved model bundle")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--strategy", default="model")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", parents=[common], help="strategy x seed ablation matrix")
    p.add_argument("--strategies", help=f"comma list from {','.join(STRATEGIES)}")
    p.add_argument("--manifest", help="use this dataset for every seed instead of synthesizing")
    p.add_argument("--classes", type=int, default=20)
    p.add_argument("--n-max", type=int, default=200)
    p.add_argument("--n-min", type=int, default=2)
    p.add_argument("--alpha", type=float, default=6.0)
    p.add_argument("--dim", type=int, default=10)
    p.add_argument("--sep", type=float, default=3.0)
    p.add_argument("--test-per-class", type=int, default=50)
    p.add_argument("--reference", default=None, help="print other strategies as deltas to this one")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", parents=[common], help="print a results.csv as a table")
    p.add_argument("results")
    p.add_argument("--reference", default=None)
    p.set_defaults(func=cmd_report)
    return parser


def _exit_code(exc):
    cause = exc.cause if isinstance(exc, StageError) else exc
    return 1 if isinstance(cause, (InvalidArgument, MissingPayload)) else 2


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except TailforgeError as exc:
        print(f"tailforge: error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except FileNotFoundError as exc:
        print(f"tailforge: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"tailforge: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
