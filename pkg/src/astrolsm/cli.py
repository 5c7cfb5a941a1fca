"""Command-line entry points.

Verbs mirror the pipeline stages: ``build`` a liquid, ``init`` its weights,
``counts`` to collect spike counts, ``train-readout``, ``analyze`` a saved
run, plus ``sweep`` and ``report`` for whole experiments.  Experiment
configuration comes from a YAML file or a named preset; the dataset root can
also be supplied via the ASTROLSM_DATA environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .analysis import (BranchingConfig, branching_factor, ei_rate_balance,
                       ei_weight_balance, spike_autocorrelation)
from .astrocyte import AstrocyteState
from .data import SAMPLE_MS
from .dynamics import LifParams
from .harness import (ExperimentConfig, aggregate, execute_run, load_bundle,
                      load_records, make_variant, preset, run_experiment,
                      write_summary, _liquid_for, _sample_stream,
                      _snapshot_stream)
from .pipeline import collect_counts, init_lsm, init_with_stdp
from .readout import TrainSchedule, evaluate, train
from .topology import TopologyConfig, build_liquid, load_graph, save_graph


def _config_from(args) -> ExperimentConfig:
    if args.preset:
        cfg = preset(args.preset)
    elif args.config:
        cfg = ExperimentConfig.load(args.config)
    else:
        cfg = ExperimentConfig()
    if args.data_root or os.environ.get("ASTROLSM_DATA"):
        cfg.data_root = args.data_root or os.environ.get("ASTROLSM_DATA")
    if getattr(args, "dataset", None):
        cfg.dataset = args.dataset
    if getattr(args, "variant", None):
        cfg.variant = args.variant
    return cfg


def cmd_build(args):
    cfg = _config_from(args)
    bundle = load_bundle(cfg)
    graph = _liquid_for(cfg, bundle, args.network)
    save_graph(graph, args.out)
    print(f"liquid: {graph.n_liquid} neurons, {len(graph.il_pre)} IL + "
          f"{len(graph.ll_pre)} LL edges -> {args.out}")


def cmd_init(args):
    cfg = _config_from(args)
    bundle = load_bundle(cfg)
    graph, _ = load_graph(args.graph)
    variant = make_variant(cfg)
    if variant.tag == "LSM":
        weights = init_lsm(graph, variant.w if variant.w is not None else args.weight)
    else:
        astro_state = None
        if variant.astro is not None:
            astro_state = AstrocyteState.create(
                graph, variant.astro, np.random.default_rng([args.seed, 2]))
        trace = init_with_stdp(graph, _snapshot_stream(cfg, bundle, args.seed),
                               variant, LifParams(), astro_state)
        weights = trace.weights
    save_graph(graph, args.out, weights=weights)
    print(f"initialized {variant.tag} weights -> {args.out}")


def cmd_counts(args):
    cfg = _config_from(args)
    bundle = load_bundle(cfg)
    graph, weights = load_graph(args.graph)
    if weights is None:
        sys.exit("graph file carries no weight snapshot; run `init` first")
    variant = make_variant(cfg)
    astro_state = None
    if variant.astro is not None:
        astro_state = AstrocyteState.create(
            graph, variant.astro, np.random.default_rng([args.seed, 2]))
    matrix, _ = collect_counts(graph, weights, variant,
                               _sample_stream(cfg, bundle, args.split, args.seed),
                               LifParams(), astro_state)
    np.savez_compressed(args.out, counts=matrix.counts, labels=matrix.labels)
    csv_path = os.path.splitext(args.out)[0] + ".csv"
    np.savetxt(csv_path, np.column_stack([matrix.labels, matrix.counts]),
               fmt="%d", delimiter=",")
    print(f"{matrix.counts.shape[0]} samples x {matrix.counts.shape[1]} neurons "
          f"-> {args.out} (+ CSV)")


def cmd_train_readout(args):
    with np.load(args.train) as z:
        xt, yt = z["counts"], z["labels"]
    with np.load(args.val) as z:
        xv, yv = z["counts"], z["labels"]
    sched = TrainSchedule(max_epochs=args.max_epochs, patience=args.patience)
    result = train(xt, yt, xv, yv, sched, np.random.default_rng([args.seed, 3]))
    np.savez_compressed(args.out, W=result.model.W, b=result.model.b)
    curve_path = os.path.splitext(args.out)[0] + "-curve.csv"
    with open(curve_path, "w") as f:
        f.write("epoch,train_loss,val_accuracy\n")
        for e, l, a in result.curve:
            f.write(f"{e},{l:.6f},{a:.6f}\n")
    print(f"best val accuracy {result.best_val_accuracy:.4f} "
          f"at epoch {result.best_epoch} -> {args.out}")
    if args.test:
        with np.load(args.test) as z:
            acc = evaluate(result.model, z["counts"], z["labels"])
        print(f"test accuracy {acc:.4f}")


def cmd_analyze(args):
    graph, weights = load_graph(args.graph)
    out = {}
    if weights is not None:
        out["ei_weight_balance"] = ei_weight_balance(weights)
    if args.raster:
        raster = np.loadtxt(args.raster, delimiter=",", dtype=np.uint8)
        out["sigma_bf"] = branching_factor(raster, graph, BranchingConfig())
        rb = ei_rate_balance(raster, graph.is_excitatory)
        out["f_ei"] = None if rb is None else rb.f_ei
        out["autocorrelation"] = spike_autocorrelation(raster, 20).tolist()
    print(json.dumps(out, indent=2))


def cmd_sweep(args):
    cfg = _config_from(args)
    records = run_experiment(cfg, out_dir=args.out,
                             progress=lambda r: print(
                                 f"[{r.variant} v={r.sweep_value} net={r.network} "
                                 f"seed={r.seed}] acc={r.test_accuracy} "
                                 f"sigma={r.sigma_bf} "
                                 + (f"FAILED@{r.failed_stage}" if r.failed_stage else "")))
    ok = sum(1 for r in records if not r.failed_stage)
    print(f"{ok}/{len(records)} runs completed")


def cmd_report(args):
    records = load_records(args.records)
    rows = aggregate(records)
    write_summary(rows, args.out)
    for row in rows:
        print(f"{row['variant']:>11} {str(row['sweep_value']):>8}: {row['summary']}"
              f"  (sigma_bf {row['sigma_bf_mean']})")


def main(argv=None):
    ap = argparse.ArgumentParser(prog="astrolsm",
                                 description="liquid state machine experiments")
    ap.add_argument("--config", help="experiment YAML")
    ap.add_argument("--preset", help="named preset configuration")
    ap.add_argument("--data-root", help="dataset root (or env ASTROLSM_DATA)")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("build", help="sample a liquid graph")
    p.add_argument("--network", type=int, default=0)
    p.add_argument("--dataset")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_build)

    p = sub.add_parser("init", help="initialize liquid weights")
    p.add_argument("--graph", required=True)
    p.add_argument("--variant")
    p.add_argument("--dataset")
    p.add_argument("--weight", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_init)

    p = sub.add_parser("counts", help="collect spike counts")
    p.add_argument("--graph", required=True)
    p.add_argument("--variant")
    p.add_argument("--dataset")
    p.add_argument("--split", choices=("train", "val", "test"), default="train")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_counts)

    p = sub.add_parser("train-readout", help="train the linear output layer")
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--test")
    p.add_argument("--max-epochs", type=int, default=1500)
    p.add_argument("--patience", type=int, default=150)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train_readout)

    p = sub.add_parser("analyze", help="diagnostics for a saved liquid")
    p.add_argument("--graph", required=True)
    p.add_argument("--raster", help="CSV spike raster (T x n_liquid)")
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("sweep", help="run a configured experiment grid")
    p.add_argument("--dataset")
    p.add_argument("--variant")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("report", help="aggregate a records file")
    p.add_argument("--records", required=True)
    p.add_argument("--out", default="summary.csv")
    p.set_defaults(fn=cmd_report)

    args = ap.parse_args(argv)
    args.fn(args)


if __name__ == "__main__":
    main()
