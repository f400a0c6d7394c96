"""Command-line entry point.

One executable, eight subcommands covering the whole pipeline:

  gen-data     render a synthetic panorama dataset (and optional pairs)
  splits       build the train/val/test manifest for a dataset
  train        run a training configuration from a JSON config file
  eval         score a checkpoint or a predictions file on a split
  heatmap      export a task's attention map as a graymap image
  score-graph  turn model predictions into per-edge safety factors
  route        answer one routing query on the command line
  serve        run the HTTP routing service (optionally with a UI bundle)

Exit codes: 0 success, 1 domain error (one line on stderr), 2 usage.
All paths are resolved relative to --workdir. Flags win over config-file
values, with a notice printed so nothing is overridden silently.
"""

import argparse
import json
import os
import sys

import numpy as np

from .data import (
    GeneratorConfig,
    PROFILES,
    generate_dataset,
    load_dataset,
    load_pairs,
    load_split,
    make_roads,
    make_splits,
    sample_pairs,
    save_dataset,
    save_pairs,
    save_split,
)
from .data.attributes import attribute_specs
from .evaluation import (
    attention_heatmap,
    confusion,
    macro_accuracy,
    predict_all_labels,
    predict_probabilities,
    task_report,
    write_task_reports,
)
from .model import NetworkConfig, load_checkpoint
from .routing import (
    PanoramaPrediction,
    SafetyFactorMap,
    factors_from_predictions,
    handle_route_query,
    load_factors,
    load_graph,
    load_predictions,
    save_factors,
    serve as run_service,
    SNAP_RADIUS_M,
)
from .routing.service import QueryError
from .trainer import ABLATIONS, train
from .trainer.loop import write_log


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roadscore",
        description="Synthetic road-safety scoring pipeline and router")
    parser.add_argument("--workdir", default=".",
                        help="directory all relative paths resolve against")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="render a synthetic dataset")
    p.add_argument("--n", type=int, default=1000, help="number of panoramas")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--profile", default="separable", choices=sorted(PROFILES))
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=192)
    p.add_argument("--pairs", type=int, default=0,
                   help="also sample this many same-road image pairs")
    p.add_argument("--roads", type=int, default=8,
                   help="distinct roads behind the pair pool")

    p = sub.add_parser("splits", help="write a train/val/test manifest")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="manifest path (json)")
    p.add_argument("--test-fraction", type=float, default=0.1)
    p.add_argument("--val-fraction", type=float, default=0.02)
    p.add_argument("--min-separation", type=float, default=300.0,
                   help="test records must sit this many meters from train")

    p = sub.add_parser("train", help="train one configuration")
    p.add_argument("--config", required=True, help="JSON training config file")
    p.add_argument("--config-name", choices=sorted(ABLATIONS),
                   help="override the config file's configuration name")
    p.add_argument("--seed", type=int, help="override the config file's seed")
    p.add_argument("--iterations", type=int)
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--splits", help="manifest path")
    p.add_argument("--pairs", help="pairs directory")
    p.add_argument("--out", help="checkpoint output directory")
    p.add_argument("--log", help="training log path")

    p = sub.add_parser("eval", help="evaluate on a split")
    p.add_argument("--data", required=True)
    p.add_argument("--splits", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--checkpoint", help="model checkpoint directory")
    p.add_argument("--predictions", help="TSV of id and predicted star")
    p.add_argument("--report", help="directory for confusion/task reports")
    p.add_argument("--trials", type=int, default=10000,
                   help="Monte-Carlo trials for the random baseline")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("heatmap", help="export an attention map")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--task", default="star")
    p.add_argument("--out", required=True, help="output .pgm path")
    p.add_argument("--upsample", type=int, default=1,
                   help="nearest-neighbor upsample factor")

    p = sub.add_parser("score-graph", help="compute per-edge safety factors")
    p.add_argument("--graph", required=True,
                   help="directory holding nodes.tsv and edges.tsv")
    p.add_argument("--out", required=True, help="factor file to write")
    p.add_argument("--checkpoint", help="model to run over the dataset")
    p.add_argument("--data", help="dataset directory with panoramas")
    p.add_argument("--predictions", help="precomputed prediction file")
    p.add_argument("--radius", type=float, default=SNAP_RADIUS_M,
                   help="snap radius in meters")

    p = sub.add_parser("route", help="answer one routing query")
    p.add_argument("--graph", required=True)
    p.add_argument("--factors", help="factor file (defaults to all ones)")
    p.add_argument("--from", dest="origin", required=True,
                   help="node id or lat,lon")
    p.add_argument("--to", dest="destination", required=True)
    p.add_argument("--alpha", type=float, default=1.0)

    p = sub.add_parser("serve", help="run the routing HTTP service")
    p.add_argument("--graph", required=True)
    p.add_argument("--factors")
    p.add_argument("--bind", default="127.0.0.1:8000", help="HOST:PORT")
    p.add_argument("--ui-dir", help="static frontend bundle to serve at /")

    return parser


# -- subcommand bodies --------------------------------------------------------


def cmd_gen_data(args) -> int:
    config = GeneratorConfig(profile=args.profile, num_records=args.n,
                             height=args.height, width=args.width,
                             seed=args.seed)
    records = generate_dataset(config)
    save_dataset(records, args.out)
    print(f"generated\t{len(records)}\trecords\t{args.out}")
    if args.pairs > 0:
        roads = make_roads(args.roads, config)
        pairs = sample_pairs(roads, args.pairs, seed=args.seed,
                             height=args.height, width=args.width)
        save_pairs(pairs, args.out)
        print(f"generated\t{len(pairs)}\tpairs")
    return 0


def cmd_splits(args) -> int:
    records = load_dataset(args.data, load_images=False)
    manifest = make_splits(records, seed=args.seed,
                           test_fraction=args.test_fraction,
                           val_fraction=args.val_fraction,
                           min_separation_m=args.min_separation)
    save_split(manifest, args.out)
    print(f"splits\ttrain={len(manifest.train_ids)}"
          f"\tval={len(manifest.val_ids)}\ttest={len(manifest.test_ids)}")
    return 0


def _merge_config(args) -> dict:
    with open(args.config) as fh:
        config = json.load(fh)
    overrides = {"config": args.config_name, "seed": args.seed,
                 "iterations": args.iterations, "data": args.data,
                 "splits": args.splits, "pairs": args.pairs,
                 "out": args.out, "log": args.log}
    for key, value in overrides.items():
        if value is None:
            continue
        if key in config and config[key] != value:
            print(f"notice: flag --{key} = {value!r} overrides "
                  f"config value {config[key]!r}")
        config[key] = value
    return config


def cmd_train(args) -> int:
    config = _merge_config(args)
    for key in ("config", "data", "splits"):
        if key not in config:
            raise ValueError(f"training config is missing {key!r}")
    name = config["config"]
    if name not in ABLATIONS:
        raise ValueError(f"unknown configuration {name!r}; "
                         f"expected one of {sorted(ABLATIONS)}")
    preset = ABLATIONS[name]
    records = load_dataset(config["data"])
    manifest = load_split(config["splits"])
    pairs = ()
    if preset.weights.consistency > 0:
        if not config.get("pairs"):
            raise ValueError(f"configuration {name!r} needs a pairs directory")
        pairs = load_pairs(config["pairs"])

    for dim, axis in (("height", 1), ("width", 2)):
        want = config.get(dim)
        got = records[0].image.shape[axis - 1]
        if want is not None and want != got:
            raise ValueError(f"config {dim} {want} does not match dataset {got}")

    net_config = None
    if "block_channels" in config or "mid_channels" in config:
        h, w = records[0].image.shape[:2]
        net_config = NetworkConfig(
            input_height=h, input_width=w, input_channels=3,
            block_channels=tuple(config.get("block_channels",
                                            (8, 16, 32, 32, 64))),
            mid_channels=config.get("mid_channels", 128))

    seed = config.get("seed", 0)
    out = config.get("out", os.path.join("runs", f"{name}-s{seed}"))
    log_path = config.get("log", os.path.join(out, "log.tsv"))
    os.makedirs(out, exist_ok=True)
    result = train(preset, records, manifest, pairs=pairs,
                   net_config=net_config,
                   iterations=config.get("iterations", 1000), seed=seed,
                   batch_size=config.get("batch_size", 16),
                   val_every=config.get("val_every", 250),
                   lr_backbone=config.get("lr_backbone", 1e-4),
                   lr_head=config.get("lr_head", 1e-3),
                   log_path=log_path,
                   checkpoint_dir=os.path.join(out, "checkpoint"))
    status = "aborted" if result.aborted else "finished"
    print(f"train\t{name}\tseed={seed}\t{status}"
          f"\titerations={result.iterations_run}"
          f"\tbest_val_macro={result.best_val_macro:.2f}")
    print(f"checkpoint\t{os.path.join(out, 'checkpoint')}")
    return 0


def _load_prediction_labels(path, ids):
    with open(path) as fh:
        lines = [l.rstrip("\n") for l in fh if l.strip()]
    if not lines or lines[0].split("\t") != ["id", "star"]:
        raise ValueError(f"{path}: expected header 'id<TAB>star'")
    table = {}
    for line in lines[1:]:
        rec_id, star = line.split("\t")
        table[rec_id] = int(star)
    missing = [i for i in ids if i not in table]
    if missing:
        raise ValueError(f"{path}: no prediction for {missing[0]!r} "
                         f"(+{len(missing) - 1} more)")
    return np.array([table[i] for i in ids])


def cmd_eval(args) -> int:
    if bool(args.checkpoint) == bool(args.predictions):
        raise ValueError("pass exactly one of --checkpoint or --predictions")
    need_images = args.checkpoint is not None
    records = load_dataset(args.data, load_images=need_images)
    manifest = load_split(args.splits)
    ids = {"train": manifest.train_ids, "val": manifest.val_ids,
           "test": manifest.test_ids}[args.split]
    by_id = {r.id: r for r in records}
    chosen = [by_id[i] for i in ids]
    if not chosen:
        raise ValueError(f"split {args.split!r} is empty")
    labels = np.array([r.star for r in chosen])

    all_preds = None
    net = None
    if args.checkpoint:
        net, _ = load_checkpoint(args.checkpoint)
        all_preds = predict_all_labels(net, [r.image for r in chosen])
        predictions = all_preds["star"]
    else:
        predictions = _load_prediction_labels(args.predictions, ids)

    macro = macro_accuracy(predictions, labels, 5)
    cm = confusion(predictions, labels, 5)
    print(f"split\t{args.split}\tn={len(chosen)}")
    print(f"macro_accuracy\t{macro:.2f}")

    reports = []
    if net is not None:
        train_records = [by_id[i] for i in manifest.train_ids]
        for spec in attribute_specs():
            if spec.name == "star" or spec.name not in all_preds:
                continue
            if spec.name not in chosen[0].aux:
                continue
            task_labels = np.array([r.aux[spec.name] for r in chosen])
            hist = np.bincount([r.aux[spec.name] for r in train_records],
                               minlength=spec.num_classes + 1)[1:]
            try:
                reports.append(task_report(spec.name, all_preds[spec.name],
                                           task_labels, spec.num_classes, hist,
                                           trials=args.trials, seed=args.seed))
            except ValueError as exc:
                print(f"task\t{spec.name}\tskipped\t{exc}")
        for r in reports:
            print(f"task\t{r.task}\t{r.top1_macro:.2f}\t{r.random_macro:.2f}"
                  f"\t{r.pct_increase:.2f}")

    if args.report:
        os.makedirs(args.report, exist_ok=True)
        norm = cm.normalized()
        lines = ["\t".join(str(v) for v in row) for row in cm.counts]
        _write_text(os.path.join(args.report, "confusion.tsv"),
                    "\n".join(lines) + "\n")
        lines = ["\t".join(f"{v:.4f}" for v in row) for row in norm]
        _write_text(os.path.join(args.report, "confusion_normalized.tsv"),
                    "\n".join(lines) + "\n")
        if reports:
            write_task_reports(reports,
                               os.path.join(args.report, "tasks.tsv"))
        summary = {"split": args.split, "n": len(chosen),
                   "macro_accuracy": macro,
                   "tasks": [{"task": r.task, "top1_macro": r.top1_macro,
                              "random_macro": r.random_macro,
                              "pct_increase": r.pct_increase}
                             for r in reports]}
        _write_text(os.path.join(args.report, "summary.json"),
                    json.dumps(summary, indent=2) + "\n")
    return 0


def cmd_heatmap(args) -> int:
    net, _ = load_checkpoint(args.checkpoint)
    attention_heatmap(net, args.task, path=args.out, upsample=args.upsample)
    print(f"wrote\t{args.out}")
    return 0


def _graph_from_dir(path):
    return load_graph(os.path.join(path, "nodes.tsv"),
                      os.path.join(path, "edges.tsv"))


def cmd_score_graph(args) -> int:
    graph = _graph_from_dir(args.graph)
    if args.predictions:
        predictions = load_predictions(args.predictions)
    elif args.checkpoint and args.data:
        net, _ = load_checkpoint(args.checkpoint)
        records = load_dataset(args.data)
        probs = predict_probabilities(net, [r.image for r in records])
        predictions = [
            PanoramaPrediction(r.id, r.lat, r.lon, probs[i])
            for i, r in enumerate(records)
        ]
    else:
        raise ValueError("pass --predictions, or --checkpoint with --data")
    factors = factors_from_predictions(graph, predictions, radius_m=args.radius)
    save_factors(factors, args.out)
    print(f"scored\t{len(factors)}\tof\t{len(graph.edges)}\tedges\t{args.out}")
    return 0


def cmd_route(args) -> int:
    graph = _graph_from_dir(args.graph)
    factors = load_factors(args.factors) if args.factors else SafetyFactorMap({})
    query = {"from": [args.origin], "to": [args.destination],
             "alpha": [str(args.alpha)]}
    try:
        payload = handle_route_query(graph, factors, query)
    except QueryError as exc:
        raise ValueError(exc.reason)
    print(json.dumps(payload))
    return 0


def cmd_serve(args) -> int:
    graph = _graph_from_dir(args.graph)
    factors = load_factors(args.factors) if args.factors else SafetyFactorMap({})
    host, _, port = args.bind.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"--bind must look like HOST:PORT, got {args.bind!r}")
    print(f"serving on http://{host}:{port}")
    run_service(graph, factors, host=host, port=int(port), ui_dir=args.ui_dir)
    return 0


def _write_text(path: str, text: str):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


HANDLERS = {
    "gen-data": cmd_gen_data,
    "splits": cmd_splits,
    "train": cmd_train,
    "eval": cmd_eval,
    "heatmap": cmd_heatmap,
    "score-graph": cmd_score_graph,
    "route": cmd_route,
    "serve": cmd_serve,
}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    previous = os.getcwd()
    try:
        os.chdir(args.workdir)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return HANDLERS[args.command](args)
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 0
    finally:
        os.chdir(previous)


def main():
    sys.exit(run())
