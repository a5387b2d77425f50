"""``netsel`` command line: eval, oracle, pareto, simulate, features, train, predict.

Settings resolve as: command-line flag, then the ``--config`` JSON file (top
level or a section named after the command), then built-in defaults.

Exit codes: 0 success, 1 internal error, 2 bad input, 3 infeasible constraints
under the reject policy.
"""
from __future__ import annotations

import argparse
import csv
import glob
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import plotting
from .core import Backend, MalformedFile, NetselError, PerImageScore, SizeBucket, check_metric_name
from .evaluation import evaluate_dataset, evaluate_per_image, report_row
from .features import FEATURE_NAMES, FeatureConfig, RasterImage, extract_all
from .frontier import best_per_network, pareto_frontier
from .ingest import PROFILE_HEADER, load_detections, load_ground_truth, load_profiles
from .oracle import (
    ORACLE_HEADER,
    build_oracle_with_exclusions,
    oracle_distribution,
    oracle_row,
    restrict_to_pareto,
)
from .predictor import KINDS, LabeledCorpus, Pipeline, permuted_features, run_training
from .reactive import InfeasiblePolicy, load_scenario, simulate_stream, trace_columns, trace_row

log = logging.getLogger("netsel")

NO_GT_TOKEN = "NoGroundTruth"
IMAGE_SUFFIXES = {".png", ".bmp"}

DEFAULTS = {
    "out": "out",
    "seed": 42,
    "threads": None,
    # eval
    "dataset": None,
    "detections": None,
    "profiles": None,
    "per_image": False,
    "bucket": None,
    # oracle
    "scores": None,
    "pareto_metric": None,
    # pareto
    "metric": "overall",
    # simulate
    "scenario": None,
    "frames": None,
    "latency_trace": None,
    "track": [],
    "policy": "fastest",
    "switch_cost": 0.0,
    # features
    "images": None,
    "edge_fraction": 0.25,
    "peak_fraction": 0.5,
    "harris_k": 0.04,
    "harris_fraction": 0.01,
    "timings": False,
    # train / predict
    "features": None,
    "labels": None,
    "kind": None,
    "k": 5,
    "max_depth": 10,
    "min_leaf": 2,
    "variance": 0.95,
    "train_fraction": 0.9,
    "no_balance": False,
    "control": "none",
    "model": None,
}


class BadInput(NetselError):
    pass


class Outputs:
    """Tracks files written by a command so a failed run leaves nothing behind."""

    def __init__(self, directory):
        self.dir = Path(directory)
        self.written: list[Path] = []

    def path(self, name: str) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        p = self.dir / name
        self.written.append(p)
        return p

    def csv(self, name: str, header, rows) -> Path:
        p = self.path(name)
        with open(p, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        return p

    def discard(self) -> None:
        for p in self.written:
            p.unlink(missing_ok=True)


# -- helpers -----------------------------------------------------------------


def _existing(path, what: str) -> Path:
    if path is None:
        raise BadInput(f"missing required input: {what}")
    p = Path(path)
    if not p.exists():
        raise BadInput(f"{what} not found: {p}")
    return p


def _expand(patterns, what: str) -> list[Path]:
    if not patterns:
        raise BadInput(f"missing required input: {what}")
    if isinstance(patterns, str):
        patterns = [patterns]
    found = []
    for pat in patterns:
        matches = sorted(glob.glob(str(pat)))
        if not matches:
            raise BadInput(f"{what} not found: {pat}")
        found.extend(Path(m) for m in matches)
    return found


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _split_network_id(network_id: str) -> tuple[str, str, str]:
    parts = network_id.split(":")
    if len(parts) == 3:
        try:
            Backend(parts[1])
            int(parts[2])
            return parts[0], parts[1], parts[2]
        except ValueError:
            pass
    return network_id, "", ""


def read_scores(path: Path) -> list[PerImageScore]:
    scores = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {"image_id", "network_id", "score"} <= set(reader.fieldnames):
            raise MalformedFile(f"{path}: header must contain image_id,network_id,score[,latency_ms]")
        for lineno, row in enumerate(reader, start=2):
            try:
                raw = row["score"].strip()
                score = None if raw in ("", NO_GT_TOKEN) else float(raw)
                lat = (row.get("latency_ms") or "").strip()
                scores.append(PerImageScore(row["image_id"], row["network_id"], score, float(lat) if lat else None))
            except ValueError as exc:
                raise MalformedFile(f"{path}:{lineno}: {exc}") from exc
    return scores


def read_feature_table(path: Path) -> tuple[list[str], np.ndarray, list[str]]:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedFile(f"{path}: empty feature table") from None
        if not header or header[0] != "image_id" or len(header) < 2:
            raise MalformedFile(f"{path}: first column must be image_id")
        ids, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise MalformedFile(f"{path}:{lineno}: expected {len(header)} fields")
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise MalformedFile(f"{path}:{lineno}: {exc}") from exc
            ids.append(row[0])
    x = np.array(rows, dtype=np.float64).reshape(len(rows), len(header) - 1)
    if not np.isfinite(x).all():
        raise MalformedFile(f"{path}: non-finite feature values")
    return ids, x, header[1:]


def read_labels(path: Path) -> dict[str, str]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {"image_id", "network_id"} <= set(reader.fieldnames):
            raise MalformedFile(f"{path}: header must contain image_id,network_id")
        return {row["image_id"]: row["network_id"] for row in reader}


def _threads(settings) -> int:
    value = settings.get("threads") or os.environ.get("NETSEL_THREADS") or 1
    try:
        n = int(value)
    except ValueError:
        raise BadInput(f"thread count must be an integer, got {value!r}") from None
    if n < 1:
        raise BadInput("thread count must be at least 1")
    return n


# -- commands ----------------------------------------------------------------


def cmd_eval(s, out: Outputs) -> None:
    dataset = load_ground_truth(_existing(s["dataset"], "dataset"))
    det_paths = _expand(s["detections"], "detections")
    latency = {}
    if s["profiles"]:
        latency = {p.network_id: p.latency_ms for p in load_profiles(_existing(s["profiles"], "profiles"))}
    bucket = SizeBucket(s["bucket"]) if s["bucket"] else None

    rows, per_image = [], []
    for path in det_paths:
        detset = load_detections(path, dataset)
        report = evaluate_dataset(dataset, detset)
        model, backend, batch = _split_network_id(detset.network_id)
        row = {"model": model, "backend": backend, "batch": batch,
               "latency_ms": _fmt(latency.get(detset.network_id)), **report_row(report)}
        rows.append(row)
        log.info("%s: mAP %s", detset.network_id, row["map_overall"] or NO_GT_TOKEN)
        if s["per_image"]:
            per_image.extend(evaluate_per_image(dataset, detset, bucket=bucket,
                                                latency_ms=latency.get(detset.network_id)))

    class_cols = sorted({k for r in rows for k in r if k.startswith("class:")})
    header = PROFILE_HEADER + class_cols
    out.csv("eval.csv", header, [[r.get(c, "") for c in header] for r in rows])
    if s["per_image"]:
        out.csv(
            "per_image.csv",
            ["image_id", "network_id", "score", "latency_ms"],
            [[str(p.image_id), p.network_id, NO_GT_TOKEN if p.score is None else repr(p.score), _fmt(p.latency_ms)]
             for p in per_image],
        )


def cmd_oracle(s, out: Outputs) -> None:
    scores = read_scores(_existing(s["scores"], "scores"))
    profiles = load_profiles(_existing(s["profiles"], "profiles"))
    labels, excluded = build_oracle_with_exclusions(scores, profiles)
    if s["pareto_metric"]:
        check_metric_name(s["pareto_metric"])
        labels = restrict_to_pareto(labels, scores, pareto_frontier(profiles, s["pareto_metric"]))
    out.csv("oracle.csv", ORACLE_HEADER, [oracle_row(l) for l in labels])
    dist = oracle_distribution(labels)
    rows = [[net, share.count, repr(share.fraction)] for net, share in dist.items()]
    rows.append(["(excluded: no ground truth)", len(excluded), ""])
    out.csv("oracle_distribution.csv", ["network_id", "count", "fraction"], rows)
    plotting.distribution_pie(dist, out.path("oracle_pie.svg"))


def cmd_pareto(s, out: Outputs) -> None:
    profiles = load_profiles(_existing(s["profiles"], "profiles"))
    metric = s["metric"]
    frontier = pareto_frontier(profiles, metric)
    header = ["model", "backend", "batch", "latency_ms", "accuracy"]

    def row(fp):
        p = fp.profile
        return [p.model_name, p.backend.value, p.batch_size, repr(fp.latency_ms), repr(fp.accuracy)]

    out.csv("frontier.csv", header, [row(fp) for fp in frontier])
    out.csv("best_per_network.csv", header, [row(fp) for fp in best_per_network(profiles, metric).values()])
    plotting.frontier_scatter(profiles, frontier, metric, out.path("frontier.svg"))


def _read_latency_trace(path: Path) -> dict[int, float]:
    trace = {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {"frame", "latency_ms"} <= set(reader.fieldnames):
            raise MalformedFile(f"{path}: header must contain frame,latency_ms")
        for lineno, row in enumerate(reader, start=2):
            try:
                trace[int(row["frame"])] = float(row["latency_ms"])
            except ValueError as exc:
                raise MalformedFile(f"{path}:{lineno}: {exc}") from exc
    return trace


def cmd_simulate(s, out: Outputs) -> None:
    profiles = load_profiles(_existing(s["profiles"], "profiles"))
    policy = InfeasiblePolicy(s["policy"])
    events = load_scenario(_existing(s["scenario"], "scenario"), policy)
    n_frames = s["frames"]
    if n_frames is None:
        n_frames = 2 * events[-1].frame_index if events[-1].frame_index else 100
    latency = _read_latency_trace(_existing(s["latency_trace"], "latency trace")) if s["latency_trace"] else None
    trace = simulate_stream(profiles, events, int(n_frames), latency, track=s["track"],
                            switch_cost_ms=float(s["switch_cost"]))
    out.csv("trace.csv", trace_columns(trace), [trace_row(e) for e in trace])
    plotting.stream_trace(trace, out.path("trace.svg"))


def _image_paths(patterns) -> list[Path]:
    paths = []
    for p in _expand(patterns, "images"):
        if p.is_dir():
            paths.extend(sorted(c for c in p.iterdir() if c.suffix.lower() in IMAGE_SUFFIXES))
        else:
            paths.append(p)
    if not paths:
        raise BadInput("no PNG/BMP images found")
    stems = [p.stem for p in paths]
    if len(set(stems)) != len(stems):
        raise BadInput("image file names must be unique (the stem is the image id)")
    return paths


def cmd_features(s, out: Outputs) -> None:
    config = FeatureConfig(
        edge_fraction=float(s["edge_fraction"]),
        peak_fraction=float(s["peak_fraction"]),
        harris_k=float(s["harris_k"]),
        harris_fraction=float(s["harris_fraction"]),
    )
    paths = _image_paths(s["images"])

    def work(path):
        timings = {}
        try:
            vec = extract_all(RasterImage.open(path), config, timings)
        except (OSError, ValueError) as exc:
            raise MalformedFile(f"{path}: {exc}") from exc
        return vec, timings

    with ThreadPoolExecutor(max_workers=_threads(s)) as pool:
        results = list(pool.map(work, paths))
    out.csv(
        "features.csv",
        ["image_id"] + FEATURE_NAMES,
        [[p.stem] + [repr(float(v)) for v in vec] for p, (vec, _) in zip(paths, results)],
    )
    if s["timings"]:
        groups = list(results[0][1])
        totals = {g: math.fsum(t[g] for _, t in results) for g in groups}
        out.csv("feature_timings.csv", ["group", "total_s", "mean_ms_per_image"],
                [[g, f"{totals[g]:.6f}", f"{1000 * totals[g] / len(results):.4f}"] for g in groups])


def _corpus(s) -> tuple[LabeledCorpus, list[str]]:
    ids, x, names = read_feature_table(_existing(s["features"], "features"))
    labels = read_labels(_existing(s["labels"], "labels"))
    keep = [i for i, image_id in enumerate(ids) if image_id in labels]
    if len(keep) < len(ids):
        log.info("%d feature rows have no oracle label and are skipped", len(ids) - len(keep))
    try:
        corpus = LabeledCorpus([ids[i] for i in keep], x[keep], [labels[ids[i]] for i in keep])
    except ValueError as exc:
        raise BadInput(str(exc)) from exc
    return corpus, names


def cmd_train(s, out: Outputs) -> None:
    corpus, names = _corpus(s)
    if len(corpus) < 4:
        raise BadInput(f"need at least 4 labelled rows, got {len(corpus)}")
    seed = int(s["seed"])
    if s["control"] == "shuffled":
        corpus = permuted_features(corpus, seed)
    elif s["control"] != "none":
        raise BadInput(f"unknown control {s['control']!r}")

    kinds = list(dict.fromkeys(s["kind"] or KINDS))
    hyper = {"k": int(s["k"]), "max_depth": int(s["max_depth"]), "min_leaf": int(s["min_leaf"])}
    run = run_training(corpus, kinds, hyper, seed, float(s["train_fraction"]), float(s["variance"]),
                       rebalance=not s["no_balance"])
    pca, reports = run.pca, run.reports
    confusion = []
    for kind, report in zip(kinds, reports):
        Pipeline(pca, run.models[kind], names).save(out.path(f"model_{kind}.json"))
        confusion.extend([kind, t, p, n] for (t, p), n in report.confusion.items())
        log.info("%s: accuracy %.3f (majority %.3f)", kind, report.accuracy, report.baseline_accuracy)

    out.csv(
        "train_report.csv",
        ["kind", "accuracy", "baseline_accuracy", "delta", "n_test", "n_train", "pca_components"],
        [[r.kind, repr(r.accuracy), repr(r.baseline_accuracy), repr(r.delta), r.n, run.n_train, pca.n_components]
         for r in reports],
    )
    out.csv("confusion.csv", ["kind", "true", "predicted", "count"], confusion)
    plotting.accuracy_bars(reports, out.path("train_accuracy.svg"))


def cmd_predict(s, out: Outputs) -> None:
    pipeline = Pipeline.load(_existing(s["model"], "model"))
    ids, x, names = read_feature_table(_existing(s["features"], "features"))
    if names != pipeline.feature_names:
        raise BadInput("feature table columns do not match the model's training features")
    predicted = pipeline.predict(x) if len(ids) else []
    out.csv("predictions.csv", ["image_id", "network_id"], zip(ids, predicted))


COMMANDS = {
    "eval": cmd_eval,
    "oracle": cmd_oracle,
    "pareto": cmd_pareto,
    "simulate": cmd_simulate,
    "features": cmd_features,
    "train": cmd_train,
    "predict": cmd_predict,
}


# -- argument parsing ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON settings file; flags override it")
    common.add_argument("--out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, help="random seed (default: 42)")
    common.add_argument("--threads", type=int, help="worker cap (env NETSEL_THREADS)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")

    parser = argparse.ArgumentParser(prog="netsel", description="Object-detection network selection toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("eval", parents=[common], help="score detection files against COCO ground truth")
    p.add_argument("--dataset", help="COCO annotation JSON")
    p.add_argument("--detections", nargs="+", help="COCO result JSON files or globs (stem = network id)")
    p.add_argument("--profiles", help="profile table supplying latencies")
    p.add_argument("--per-image", action="store_true", default=None, help="also write per_image.csv")
    p.add_argument("--bucket", choices=[b.value for b in SizeBucket], help="per-image scores on one size bucket")

    p = sub.add_parser("oracle", parents=[common], help="label images with their best network")
    p.add_argument("--scores", help="per_image.csv from eval")
    p.add_argument("--profiles", help="profile table (registry and fallback latencies)")
    p.add_argument("--pareto-metric", help="restrict candidates to the frontier on this metric")

    p = sub.add_parser("pareto", parents=[common], help="Pareto frontier and best configuration per model")
    p.add_argument("--profiles", help="profile table")
    p.add_argument("--metric", help="overall, small, medium, large or class:<id>")

    p = sub.add_parser("simulate", parents=[common], help="replay a context scenario")
    p.add_argument("--profiles", help="profile table")
    p.add_argument("--scenario", help="scenario CSV: frame,label,max_latency_ms,min_accuracy,objective")
    p.add_argument("--frames", type=int, help="number of frames (default: twice the last event frame)")
    p.add_argument("--latency-trace", help="CSV frame,latency_ms overriding measured latencies")
    p.add_argument("--track", action="append", help="extra accuracy metric to record (repeatable)")
    p.add_argument("--policy", choices=[x.value for x in InfeasiblePolicy], help="when nothing is feasible")
    p.add_argument("--switch-cost", type=float, help="ms charged on network switches (reported only)")

    p = sub.add_parser("features", parents=[common], help="extract image descriptors")
    p.add_argument("--images", nargs="+", help="PNG/BMP files, directories or globs")
    p.add_argument("--edge-fraction", type=float)
    p.add_argument("--peak-fraction", type=float)
    p.add_argument("--harris-k", type=float)
    p.add_argument("--harris-fraction", type=float)
    p.add_argument("--timings", action="store_true", default=None, help="write per-group extraction times")

    p = sub.add_parser("train", parents=[common], help="train and evaluate predictors")
    p.add_argument("--features", help="feature table CSV")
    p.add_argument("--labels", help="oracle.csv")
    p.add_argument("--kind", action="append", choices=KINDS, help="classifier kind (repeatable; default all)")
    p.add_argument("--k", type=int, help="neighbours for knn (default 5)")
    p.add_argument("--max-depth", type=int, help="tree depth limit (default 10)")
    p.add_argument("--min-leaf", type=int, help="minimum rows per tree leaf (default 2)")
    p.add_argument("--variance", type=float, help="PCA explained-variance target (default 0.95)")
    p.add_argument("--train-fraction", type=float, help="training share of the corpus (default 0.9)")
    p.add_argument("--no-balance", action="store_true", default=None, help="skip undersampling")
    p.add_argument("--control", choices=["none", "shuffled"], help="shuffled: pair labels with permuted features")

    p = sub.add_parser("predict", parents=[common], help="predict the network for each image")
    p.add_argument("--model", help="model_<kind>.json from train")
    p.add_argument("--features", help="feature table CSV")
    return parser


def resolve_settings(args: argparse.Namespace) -> dict:
    settings = dict(DEFAULTS)
    if args.config:
        path = _existing(args.config, "config file")
        try:
            with open(path) as f:
                doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise MalformedFile(f"{path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise MalformedFile(f"{path}: expected a JSON object")
        merged = {k: v for k, v in doc.items() if k not in COMMANDS}
        merged.update(doc.get(args.command, {}))
        unknown = set(merged) - set(DEFAULTS)
        if unknown:
            raise BadInput(f"{path}: unknown settings {sorted(unknown)}")
        settings.update(merged)
    for key, value in vars(args).items():
        if key in DEFAULTS and value is not None:
            settings[key] = value
    return settings


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    out = None
    try:
        settings = resolve_settings(args)
        out = Outputs(settings["out"])
        COMMANDS[args.command](settings, out)
    except NetselError as exc:
        if out is not None:
            out.discard()
        print(f"netsel {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, OSError) as exc:
        if out is not None:
            out.discard()
        print(f"netsel {args.command}: {exc}", file=sys.stderr)
        return 2
    except Exception:
        if out is not None:
            out.discard()
        log.exception("internal error")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
