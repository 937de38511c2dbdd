"""Command-line interface: fuse, eval, tune and bench subcommands.

Exit codes: 0 on success, 1 on data errors (unreadable or inconsistent
files), 2 on usage errors (bad flags).  Results go to stdout, diagnostics
to stderr.  The ``BOXFUSION_WORKERS`` environment variable supplies the
worker count when ``--workers`` is not given.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np

from .errors import BoxFusionError, DataError, ParameterError
from .evaluation import DEFAULT_THRESHOLDS, mean_ap
from .fusion import (
    METHODS,
    RESCALE_VARIANTS,
    FusionParams,
    PredictionSet,
    ScoredBox,
    default_params,
    fuse,
)
from .geometry import Box2D
from .ingestion import (
    FORMATS,
    assemble,
    load_detections,
    load_dims,
    load_ground_truth,
    records_to_boxes,
    save_detections,
)
from .tuning import DEFAULT_GRID_CAP, grid_search, load_grid

BENCH_METHODS = ("nms", "soft-nms-gaussian", "nmw", "wbf")


def parse_thresholds(text: str) -> tuple[float, ...]:
    """Parse ``start:stop:step`` (inclusive ends) or a comma list."""
    try:
        if ":" in text:
            parts = text.split(":")
            if len(parts) != 3:
                raise ValueError("range form is start:stop:step")
            start, stop, step = (float(p) for p in parts)
            if step <= 0:
                raise ValueError("step must be positive")
            values = []
            k = 0
            while True:
                v = round(start + k * step, 10)
                if v > stop + 1e-9:
                    break
                values.append(v)
                k += 1
            if not values:
                raise ValueError("empty threshold range")
            return tuple(values)
        return tuple(float(p) for p in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad threshold list {text!r}: {exc}") from exc


def parse_weights(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(p) for p in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad weight list {text!r}: {exc}") from exc


def _worker_count(args: argparse.Namespace) -> int:
    if args.workers is not None:
        return max(1, args.workers)
    env = os.environ.get("BOXFUSION_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            print(f"warning: ignoring BOXFUSION_WORKERS={env!r}", file=sys.stderr)
    return 1


def _build_params(args: argparse.Namespace, parser: argparse.ArgumentParser) -> FusionParams:
    method = args.method
    iou = args.iou_thr if args.iou_thr is not None else default_params(method).iou_threshold
    try:
        return FusionParams(
            method=method,
            iou_threshold=iou,
            skip_threshold=args.skip_thr,
            rescale_variant=args.rescale,
            score_power=args.score_power,
            soft_sigma=args.sigma,
            soft_score_threshold=args.soft_thr,
        )
    except ParameterError as exc:
        parser.error(str(exc))
        raise AssertionError("unreachable")


def _add_param_flags(sub: argparse.ArgumentParser, with_method: bool = True) -> None:
    if with_method:
        sub.add_argument("--method", choices=METHODS, default="wbf", help="fusion method")
    sub.add_argument(
        "--iou-thr",
        type=float,
        default=None,
        help="IoU threshold (default 0.55 for wbf, 0.5 otherwise)",
    )
    sub.add_argument(
        "--skip-thr", type=float, default=0.0, help="minimum effective score (WBF)"
    )
    sub.add_argument(
        "--rescale",
        choices=RESCALE_VARIANTS,
        default="clamped",
        help="cluster-size rescaling variant",
    )
    sub.add_argument(
        "--score-power", type=float, default=1.0, help="confidence exponent for coordinates"
    )
    sub.add_argument("--sigma", type=float, default=0.5, help="soft-NMS Gaussian sigma")
    sub.add_argument(
        "--soft-thr", type=float, default=0.001, help="soft-NMS final score cutoff"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="boxfusion",
        description="Fuse, evaluate, tune and benchmark object-detection box ensembles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fuse = sub.add_parser("fuse", help="combine prediction files into one")
    p_fuse.add_argument("--in", dest="inputs", nargs="+", required=True, metavar="FILE")
    p_fuse.add_argument("--out", required=True, help="output path")
    p_fuse.add_argument("--weights", type=parse_weights, default=None, help="e.g. 1,1")
    p_fuse.add_argument("--format", choices=FORMATS, default="csv", help="input format")
    p_fuse.add_argument("--out-format", choices=FORMATS, default=None)
    p_fuse.add_argument("--dims", default=None, help="image,width,height sidecar CSV")
    p_fuse.add_argument("--workers", type=int, default=None)
    _add_param_flags(p_fuse)
    p_fuse.set_defaults(func=cmd_fuse)

    p_eval = sub.add_parser("eval", help="score predictions against ground truth")
    p_eval.add_argument("--pred", required=True, help="prediction file")
    p_eval.add_argument("--gt", required=True, help="ground-truth CSV")
    p_eval.add_argument(
        "--thresholds",
        type=parse_thresholds,
        default=DEFAULT_THRESHOLDS,
        help="IoU sweep, e.g. 0.5:0.95:0.05 or 0.5",
    )
    p_eval.add_argument("--format", choices=FORMATS, default="csv")
    p_eval.add_argument("--dims", default=None)
    p_eval.add_argument("--report", default=None, help="write a JSON report here")
    p_eval.set_defaults(func=cmd_eval)

    p_tune = sub.add_parser("tune", help="grid search fusion parameters")
    p_tune.add_argument("--grid", required=True, help="JSON grid file")
    p_tune.add_argument("--in", dest="inputs", nargs="+", required=True, metavar="FILE")
    p_tune.add_argument("--gt", required=True)
    p_tune.add_argument("--method", choices=METHODS, default="wbf")
    p_tune.add_argument("--thresholds", type=parse_thresholds, default=DEFAULT_THRESHOLDS)
    p_tune.add_argument("--format", choices=FORMATS, default="csv")
    p_tune.add_argument("--dims", default=None)
    p_tune.add_argument("--cap", type=int, default=DEFAULT_GRID_CAP)
    p_tune.add_argument("--report", default=None)
    p_tune.add_argument("--workers", type=int, default=None)
    p_tune.set_defaults(func=cmd_tune)

    p_bench = sub.add_parser("bench", help="time the methods on a synthetic workload")
    p_bench.add_argument("--images", type=int, default=100)
    p_bench.add_argument("--boxes", type=int, default=1000, help="boxes per image per model")
    p_bench.add_argument("--classes", type=int, default=10)
    p_bench.add_argument("--models", type=int, default=3)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.set_defaults(func=cmd_bench)

    return parser


def cmd_fuse(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    if args.weights is not None:
        if len(args.weights) != len(args.inputs):
            parser.error(
                f"--weights has {len(args.weights)} entries for {len(args.inputs)} input files"
            )
        if any(w < 0 for w in args.weights) or sum(args.weights) <= 0:
            parser.error("--weights must be non-negative and sum to > 0")
    params = _build_params(args, parser)
    dims = load_dims(args.dims) if args.dims else None
    groups = [load_detections(path, args.format, dims) for path in args.inputs]
    total_in = sum(len(recs) for group in groups for recs in group.values())
    sets = assemble(groups, args.weights)
    workers = _worker_count(args)
    images = sorted(sets)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            fused_lists = list(pool.map(lambda img: fuse(sets[img], params), images))
    else:
        fused_lists = [fuse(sets[img], params) for img in images]
    fused = dict(zip(images, fused_lists))
    out_fmt = args.out_format or args.format
    save_detections(fused, args.out, out_fmt, dims)
    total_out = sum(len(v) for v in fused.values())
    print(
        f"fused {total_in} boxes from {len(args.inputs)} files into "
        f"{total_out} boxes ({args.method}) -> {args.out}"
    )
    return 0


def cmd_eval(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    dims = load_dims(args.dims) if args.dims else None
    pred_groups = load_detections(args.pred, args.format, dims)
    predictions = {img: records_to_boxes(recs) for img, recs in pred_groups.items()}
    gts = load_ground_truth(args.gt, args.format if args.format != "coco" else "csv", dims)
    report = mean_ap(predictions, gts, args.thresholds)
    print(
        f"thresholds ({len(report.thresholds)}): "
        + " ".join(f"{t:g}" for t in report.thresholds)
    )
    for label in sorted(report.classes):
        rep = report.classes[label]
        note = "" if rep.in_ground_truth else "  (no ground truth; excluded from mAP)"
        print(f"class {label}: AP {rep.average_precision:.6f}{note}")
    print(f"mAP {report.mean_ap:.6f}")
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2)
            fh.write("\n")
    return 0


def cmd_tune(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    dims = load_dims(args.dims) if args.dims else None
    grid = load_grid(args.grid)
    groups = [load_detections(path, args.format, dims) for path in args.inputs]
    if grid.weights is not None:
        for vector in grid.weights:
            if len(vector) != len(args.inputs):
                raise DataError(
                    f"{args.grid}: weight vector {list(vector)} does not match "
                    f"{len(args.inputs)} input files"
                )
    sets = assemble(groups)
    gts = load_ground_truth(args.gt, args.format if args.format != "coco" else "csv", dims)
    result = grid_search(
        sets,
        gts,
        args.method,
        grid,
        args.thresholds,
        cap=args.cap,
        workers=_worker_count(args),
    )
    for point, score in result.table:
        print(f"{_describe_point(point)}  mAP {score:.6f}")
    print(f"best: {_describe_point(result.best)}  mAP {result.best_map:.6f}")
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(result.to_dict(), fh, indent=2)
            fh.write("\n")
    return 0


def _describe_point(point) -> str:
    d = point.describe()
    bits = [f"iou={d['iou_threshold']}", f"skip={d['skip_threshold']}"]
    if d["method"] == "wbf":
        bits += [f"rescale={d['rescale_variant']}", f"power={d['score_power']}"]
    if d["method"].startswith("soft-nms"):
        bits += [f"sigma={d['soft_sigma']}", f"soft_thr={d['soft_score_threshold']}"]
    if "weights" in d:
        bits.append(f"weights={d['weights']}")
    return " ".join(bits)


def generate_workload(
    images: int, boxes_per_image: int, classes: int, models: int, seed: int
) -> dict[str, PredictionSet]:
    """Seeded synthetic detector output for benchmarking.

    Each model emits ``boxes_per_image`` boxes per image.  Around 70% of
    them scatter around shared per-class object locations (what a real
    ensemble produces); the rest are uniform background noise.
    """
    rng = np.random.default_rng(seed)
    workload: dict[str, PredictionSet] = {}
    for image_index in range(images):
        centers = rng.uniform(0.1, 0.9, size=(classes, 8, 2))
        sizes = rng.uniform(0.05, 0.3, size=(classes, 8))
        per_model: list[list[ScoredBox]] = []
        for _model in range(models):
            labels = rng.integers(0, classes, size=boxes_per_image)
            clustered = rng.random(boxes_per_image) < 0.7
            which = rng.integers(0, 8, size=boxes_per_image)
            cx = np.where(
                clustered,
                centers[labels, which, 0] + rng.normal(0.0, 0.02, boxes_per_image),
                rng.uniform(0.0, 1.0, boxes_per_image),
            )
            cy = np.where(
                clustered,
                centers[labels, which, 1] + rng.normal(0.0, 0.02, boxes_per_image),
                rng.uniform(0.0, 1.0, boxes_per_image),
            )
            half = np.where(
                clustered,
                sizes[labels, which] * rng.uniform(0.9, 1.1, boxes_per_image),
                rng.uniform(0.02, 0.2, boxes_per_image),
            )
            x1 = np.clip(cx - half, 0.0, 1.0)
            x2 = np.clip(cx + half, 0.0, 1.0)
            y1 = np.clip(cy - half, 0.0, 1.0)
            y2 = np.clip(cy + half, 0.0, 1.0)
            scores = rng.uniform(0.01, 1.0, boxes_per_image)
            boxes = [
                ScoredBox(
                    geometry=Box2D(float(x1[i]), float(y1[i]), float(x2[i]), float(y2[i])),
                    label=int(labels[i]),
                    score=float(scores[i]),
                )
                for i in range(boxes_per_image)
            ]
            per_model.append(boxes)
        workload[f"img{image_index:05d}"] = PredictionSet(boxes_per_model=per_model)
    return workload


def run_benchmark(
    workload: dict[str, PredictionSet], methods: Sequence[str] = BENCH_METHODS
) -> dict[str, float]:
    """Wall time per method over the whole workload, identical inputs."""
    timings: dict[str, float] = {}
    for method in methods:
        params = default_params(method)
        start = time.perf_counter()
        for image in workload:
            fuse(workload[image], params)
        timings[method] = time.perf_counter() - start
    return timings


def cmd_bench(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    for name in ("images", "boxes", "classes", "models"):
        if getattr(args, name) <= 0:
            parser.error(f"--{name} must be positive")
    print(
        f"generating workload: {args.images} images x {args.models} models x "
        f"{args.boxes} boxes ({args.classes} classes, seed {args.seed})",
        file=sys.stderr,
    )
    workload = generate_workload(args.images, args.boxes, args.classes, args.models, args.seed)
    timings = run_benchmark(workload)
    base = timings["nms"]
    print(f"{'method':<20}{'seconds':>10}{'vs nms':>9}")
    for method in BENCH_METHODS:
        ratio = timings[method] / base if base > 0 else float("inf")
        print(f"{method:<20}{timings[method]:>10.3f}{ratio:>8.2f}x")
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except BoxFusionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
