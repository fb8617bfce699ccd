"""``videossl`` command line: dataset generation, teacher pretraining,
single runs, method sweeps and per-class reports.

Exit codes: 0 success, 2 usage or config error, 3 data I/O error,
4 numeric abort (non-finite loss).
"""

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .config import RunConfig, load_config, save_config
from .data import build_dataset, class_names, read_dataset, split_labels, write_dataset
from .errors import ConfigError, FormatError, NonFiniteLossError
from .evaluation import center_clip_probs, confident_counts, confident_ratio, evaluate, write_per_class_report
from .models import load_teacher, save_teacher
from .trainer import Method, TrainConfig, pretrain_teacher, train, write_metrics

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
SWEEP_HEADER = ["method", "label_fraction", "seed", "clip_top1", "video_top1", "runtime_seconds"]


class DataError(Exception):
    """Input file missing or unreadable."""


def _load_dataset(path):
    try:
        return read_dataset(path)
    except (OSError, FormatError) as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc


def _load_teacher(path):
    try:
        return load_teacher(path)
    except (OSError, FormatError, ValueError, KeyError) as exc:
        raise DataError(f"cannot read teacher {path}: {exc}") from exc


def _run_config(path: Optional[str]) -> RunConfig:
    return load_config(path) if path else RunConfig()


# --- commands -------------------------------------------------------------


def cmd_gen_data(args) -> int:
    cfg = _run_config(args.spec)
    n = args.n_per_class if args.n_per_class is not None else cfg.n_per_class
    n_test = args.n_test if args.n_test is not None else cfg.n_test_per_class
    try:
        ds = build_dataset(cfg.data, n, n_test)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    write_dataset(args.out, ds)
    m = ds.manifest
    print(f"wrote {args.out}: {len(m.train_ids)} train / {len(m.test_ids)} test videos, "
          f"{ds.spec.num_classes} classes, {n} train per class")
    print("channel mean " + " ".join(f"{v:.6f}" for v in m.channel_mean))
    print("channel std  " + " ".join(f"{v:.6f}" for v in m.channel_std))
    return EXIT_OK


def cmd_train_teacher(args) -> int:
    geom = _run_config(args.config).train.geometry
    ds = _load_dataset(args.data)
    report = pretrain_teacher(ds, epochs=args.epochs, seed=args.seed, geom=geom)
    save_teacher(args.out, report.teacher, {"heldout_accuracy": report.heldout_accuracy,
                                            "epochs": args.epochs, "seed": args.seed})
    print(f"teacher held-out frame shape accuracy: {report.heldout_accuracy:.2f}%")
    print(f"teacher training-pool accuracy: {report.train_accuracy:.2f}%")
    print(f"checksum {report.teacher.checksum()}")
    return EXIT_OK


def _split_for(dataset, train_cfg: TrainConfig):
    return dataset.with_manifest(split_labels(dataset.manifest, train_cfg.label_fraction,
                                              train_cfg.data_seed))


def run_one(train_cfg: TrainConfig, dataset, teacher, out_dir: Path, run_cfg: RunConfig,
            progress: bool = False) -> dict:
    """Train one configuration into ``out_dir`` and return its summary."""
    out_dir.mkdir(parents=True, exist_ok=True)
    train_cfg = replace(train_cfg, checkpoint_path=str(out_dir / "checkpoint.vsslc"))
    save_config(out_dir / "config.txt", replace(run_cfg, train=replace(train_cfg, checkpoint_path=None)))
    ds = _split_for(dataset, train_cfg)
    result = train(train_cfg, ds, teacher if train_cfg.method.uses_distillation else None,
                   progress=progress)
    write_metrics(out_dir / "metrics.csv", result.history)

    m = ds.manifest
    model = result.state.model
    geom = train_cfg.geometry
    rec = evaluate(model, ds.subset(m.test_ids), m, geom, model.config.num_classes,
                   train_cfg.confident_threshold)
    unl = ds.subset(m.unlabeled_ids)
    count = correct = 0
    if unl:
        probs = center_clip_probs(model, unl, m, geom)
        count, correct = confident_counts(probs, [s.class_label for s in unl], train_cfg.confident_threshold)
    summary = {
        "method": train_cfg.method.value,
        "label_fraction": train_cfg.label_fraction,
        "seeds": {"data": train_cfg.data_seed, "init": train_cfg.init_seed, "train": train_cfg.train_seed},
        "iterations": result.state.iteration,
        "clip_top1": rec.clip_top1,
        "video_top1": rec.video_top1,
        "per_class_top1": {str(k): v for k, v in rec.per_class_top1.items()},
        "class_names": {str(k): v for k, v in class_names(ds.spec).items()},
        "confident_threshold": train_cfg.confident_threshold,
        "confident_count": count,
        "confident_correct": correct,
        "confident_accuracy": confident_ratio(count, correct),
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def cmd_train(args) -> int:
    run_cfg = _run_config(args.config)
    method = run_cfg.train.method
    if method.uses_distillation and not args.teacher:
        raise ConfigError(f"method {method.value} needs --teacher")
    dataset = _load_dataset(args.data)
    teacher = _load_teacher(args.teacher) if args.teacher and method.uses_distillation else None
    summary = run_one(run_cfg.train, dataset, teacher, Path(args.out), run_cfg, progress=args.verbose)
    print(f"{method.value}: clip top-1 {summary['clip_top1']:.2f}%  video top-1 {summary['video_top1']:.2f}%")
    return EXIT_OK


def _csv_list(text: str, kind) -> list:
    try:
        return [kind(x.strip()) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad list {text!r}: {exc}") from exc


def _sweep_job(job):
    train_cfg, data_path, teacher_path, out_dir, run_cfg = job
    dataset = _load_dataset(data_path)
    teacher = _load_teacher(teacher_path) if teacher_path and train_cfg.method.uses_distillation else None
    start = time.perf_counter()
    summary = run_one(train_cfg, dataset, teacher, Path(out_dir), run_cfg)
    return summary, time.perf_counter() - start


def sweep_jobs(run_cfg: RunConfig, methods, fractions, seeds, data, teacher, out: Path):
    jobs = []
    for method in methods:
        for p in fractions:
            for seed in seeds:
                cfg = replace(run_cfg.train, method=method, label_fraction=p,
                              data_seed=seed, init_seed=seed, train_seed=seed)
                jobs.append((cfg, data, teacher, str(out / "runs" / f"{method.value}_P{p:g}_seed{seed}"),
                             run_cfg))
    return jobs


def write_svg_chart(path, rows: List[dict], methods: Sequence[str]) -> None:
    """Mean video Top-1 against label fraction, one polyline per method."""
    fractions = sorted({r["label_fraction"] for r in rows})
    w, h, pad = 480, 320, 50
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]

    def x_of(p):
        if len(fractions) == 1:
            return w / 2
        return pad + (p - fractions[0]) / (fractions[-1] - fractions[0]) * (w - 2 * pad)

    def y_of(acc):
        return h - pad - acc / 100.0 * (h - 2 * pad)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
             f'<rect width="{w}" height="{h}" fill="white"/>',
             f'<line x1="{pad}" y1="{h - pad}" x2="{w - pad}" y2="{h - pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{h - pad}" stroke="black"/>',
             f'<text x="{w / 2}" y="{h - 12}" text-anchor="middle" font-size="13">label fraction P</text>',
             f'<text x="14" y="{h / 2}" text-anchor="middle" font-size="13" '
             f'transform="rotate(-90 14 {h / 2})">mean video top-1 (%)</text>']
    for acc in (0, 25, 50, 75, 100):
        parts.append(f'<text x="{pad - 6}" y="{y_of(acc) + 4:.1f}" text-anchor="end" font-size="10">{acc}</text>')
    for p in fractions:
        parts.append(f'<text x="{x_of(p):.1f}" y="{h - pad + 14}" text-anchor="middle" font-size="10">{p:g}</text>')
    for i, method in enumerate(methods):
        pts = []
        for p in fractions:
            vals = [r["video_top1"] for r in rows if r["method"] == method and r["label_fraction"] == p]
            if vals:
                pts.append(f"{x_of(p):.1f},{y_of(float(np.mean(vals))):.1f}")
        color = colors[i % len(colors)]
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{" ".join(pts)}">'
                     f'<title>{method}</title></polyline>')
        parts.append(f'<text x="{w - pad + 4}" y="{pad + 14 * i}" font-size="11" fill="{color}">{method}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


def cmd_compare(args) -> int:
    run_cfg = _run_config(args.config)
    methods = [Method(m.upper()) for m in _csv_list(args.methods, str)]
    fractions = _csv_list(args.fractions, float)
    seeds = _csv_list(args.seeds, int)
    if not (methods and fractions and seeds):
        raise ConfigError("methods, fractions and seeds must all be non-empty")
    if any(m.uses_distillation for m in methods) and not args.teacher:
        raise ConfigError("SD and VIDEOSSL need --teacher")
    _load_dataset(args.data)  # fail early on a bad path
    if args.teacher:
        _load_teacher(args.teacher)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = sweep_jobs(run_cfg, methods, fractions, seeds, args.data, args.teacher, out)

    workers = max(1, int(os.environ.get("VSSL_THREADS", "1") or 1))
    if workers == 1:
        results = [_sweep_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_job, jobs))  # map keeps request order

    rows = []
    for (cfg, *_), (summary, seconds) in zip(jobs, results):
        rows.append({"method": cfg.method.value, "label_fraction": cfg.label_fraction,
                     "seed": cfg.train_seed, "clip_top1": summary["clip_top1"],
                     "video_top1": summary["video_top1"], "runtime_seconds": seconds})
    with open(out / "sweep.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for r in rows:
            w.writerow([r["method"], repr(r["label_fraction"]), r["seed"], repr(r["clip_top1"]),
                        repr(r["video_top1"]), f"{r['runtime_seconds']:.3f}"])
    write_svg_chart(out / "video_top1.svg", rows, [m.value for m in methods])
    for m in methods:
        for p in fractions:
            vals = [r["video_top1"] for r in rows if r["method"] == m.value and r["label_fraction"] == p]
            print(f"{m.value:<10} P={p:g}  mean video top-1 {np.mean(vals):6.2f}%  over {len(vals)} seeds")
    return EXIT_OK


def _read_summary(run_dir) -> dict:
    path = Path(run_dir) / "summary.json"
    try:
        return json.loads(path.read_text())
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read run summary {path}: {exc}") from exc


def cmd_report(args) -> int:
    a, b = _read_summary(args.run_a), _read_summary(args.run_b)
    per_a = {int(k): v for k, v in a["per_class_top1"].items()}
    per_b = {int(k): v for k, v in b["per_class_top1"].items()}
    names = {int(k): v for k, v in b.get("class_names", {}).items()}
    write_per_class_report(args.out, per_a, per_b, names)
    print(f"wrote per-class deltas to {args.out}")
    print(f"{'run':<6}{'method':<12}{'confident (> ' + str(a['confident_threshold']) + ')':>18}"
          f"{'correct':>10}{'accuracy %':>12}")
    for tag, s in (("a", a), ("b", b)):
        print(f"{tag:<6}{s['method']:<12}{s['confident_count']:>18}{s['confident_correct']:>10}"
              f"{confident_ratio(s['confident_count'], s['confident_correct']):>12}")
    return EXIT_OK


# --- entry point ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="videossl", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="render the synthetic dataset")
    g.add_argument("--spec", help="config file; only data.* keys are used")
    g.add_argument("--out", required=True)
    g.add_argument("--n-per-class", type=int)
    g.add_argument("--n-test", type=int)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train-teacher", help="pretrain and freeze the frame teacher")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--epochs", type=int, default=15)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--config", help="config file; model.clip_h/clip_w set the frame crop")
    t.set_defaults(func=cmd_train_teacher)

    r = sub.add_parser("train", help="train one student run")
    r.add_argument("--config")
    r.add_argument("--data", required=True)
    r.add_argument("--teacher")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_train)

    c = sub.add_parser("compare", help="method x label-fraction x seed sweep")
    c.add_argument("--config")
    c.add_argument("--data", required=True)
    c.add_argument("--teacher")
    c.add_argument("--methods", default="SUPERVISED,PL,SD,VIDEOSSL")
    c.add_argument("--fractions", default="0.1")
    c.add_argument("--seeds", default="1,2,3")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_compare)

    rep = sub.add_parser("report", help="per-class deltas and confident-prediction table")
    rep.add_argument("--run-a", required=True)
    rep.add_argument("--run-b", required=True)
    rep.add_argument("--out", required=True)
    rep.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (DataError, FormatError, OSError) as exc:  # FormatError is also a ValueError
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonFiniteLossError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
