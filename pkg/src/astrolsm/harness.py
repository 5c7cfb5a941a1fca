"""Experiment orchestration: configs, runs, sweeps, and aggregation.

Every run is fully determined by (config, network id, seed): the network id
seeds the topology build, the seed drives encoding, initialization order,
astrocyte sampling and readout shuffling.  Records are appended as JSON
lines as runs complete; a failed stage produces a record carrying the stage
tag and error instead of silently dropping the grid point.

Datasets resolve from ``data_root`` when the standard files are present and
otherwise fall back to the deterministic synthetic corpus, so sweeps and the
acceptance suite run on machines without the real archives.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import yaml

from . import synthetic
from .analysis import BranchingConfig, branching_factor, kernel_quality
from .astrocyte import AstrocyteParams, AstrocyteState, bf_proxy
from .data import (SAMPLE_MS, SNAPSHOT_MS, events_to_raster, load_idx_images,
                   load_idx_labels, perturb, split_train_val)
from .dynamics import LifParams
from .errors import AstrolsmError, ConfigError
from .pipeline import (ModelVariant, collect_counts, event_sample_stream,
                       event_snapshot_stream, image_sample_stream,
                       image_snapshot_stream, init_lsm, init_with_stdp)
from .plasticity import ApStdpParams, StdpParams
from .readout import TrainSchedule, evaluate, train
from .topology import TopologyConfig, build_liquid

SYNTHETIC_SEED = 1_234_567  # the synthetic corpus is a fixed dataset


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    dataset: str = "synthetic_images"   # synthetic_images | synthetic_events | mnist | fashion | nmnist
    data_root: str | None = None
    variant: str = "NALSM"
    liquid_size: int = 250
    n_input: int | None = None          # inferred from dataset when None
    weight: float | None = None         # uniform liquid weight (LSM)
    w_astro: float = 0.01
    tau_astro: float = 100.0
    density: float = 1.0
    ap_c_theta: float = 6.0
    ap_delta_c: float = 6.0
    n_train: int = 10_000
    n_val: int = 2_000
    n_test: int = 2_000
    n_snapshots: int = 10_000
    r_max_hz: float = 250.0
    networks: tuple = (0,)
    seeds: tuple = (0,)
    sweep_axis: str | None = None       # weight | w_astro | density | size
    sweep_values: tuple = ()
    max_epochs: int = 1500
    patience: int | None = 150
    batch_size: int = 250
    lr: float = 0.1
    lambda_reg: float = 5e-10
    kernel_quality_k: int | None = None # None: min(500, n_test // 2)
    kernel_quality_shuffles: int = 100
    compute_kernel_quality: bool = False
    sigma_bf_samples: int = 20
    out_dir: str = "runs"

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["networks"] = list(self.networks)
        d["seeds"] = list(self.seeds)
        d["sweep_values"] = list(self.sweep_values)
        return d

    def fingerprint(self, network: int, seed: int, sweep_value=None) -> str:
        d = self.to_dict()
        d.pop("out_dir")
        d.update(network=network, seed=seed, sweep_value=sweep_value)
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def save(self, path) -> None:
        with open(path, "w") as f:
            yaml.safe_dump(self.to_dict(), f, sort_keys=False)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as f:
            d = yaml.safe_load(f)
        for k in ("networks", "seeds", "sweep_values"):
            if k in d and d[k] is not None:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass
class RunRecord:
    fingerprint: str
    config_name: str
    variant: str
    dataset: str
    network: int
    seed: int
    sweep_axis: str | None = None
    sweep_value: float | None = None
    test_accuracy: float | None = None
    val_accuracy: float | None = None
    best_epoch: int | None = None
    sigma_bf: float | None = None
    bf_proxy_mean: float | None = None
    bf_proxy_last: float | None = None
    mean_rate_hz: float | None = None
    kernel_cell: dict | None = None
    wall_clock_s: float | None = None
    failed_stage: str | None = None
    error: str | None = None

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------

@dataclass
class DataBundle:
    kind: str                     # "images" | "events"
    n_input: int
    train_x: object               # images array or list of EventSample
    train_y: np.ndarray
    val_x: object
    val_y: np.ndarray
    test_x: object
    test_y: np.ndarray


_IDX_FILES = {
    "mnist": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
              "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
    "fashion": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


@lru_cache(maxsize=4)
def _load_bundle(dataset: str, data_root: str | None,
                 n_train: int, n_val: int, n_test: int) -> DataBundle:
    if dataset in ("mnist", "fashion"):
        if data_root is None:
            raise ConfigError(f"dataset {dataset!r} needs --data-root")
        sub = os.path.join(data_root, dataset)
        ti, tl, vi, vl = _IDX_FILES[dataset]
        images = load_idx_images(os.path.join(sub, ti))
        labels = load_idx_labels(os.path.join(sub, tl))
        tr_idx, va_idx = split_train_val(len(images))
        test_images = load_idx_images(os.path.join(sub, vi))
        test_labels = load_idx_labels(os.path.join(sub, vl))
        return DataBundle(
            "images", 28 * 28,
            images[tr_idx][:n_train], labels[tr_idx][:n_train],
            images[va_idx][:n_val], labels[va_idx][:n_val],
            test_images[:n_test], test_labels[:n_test])
    if dataset == "synthetic_images":
        total = n_train + n_val + n_test
        images, labels = synthetic.make_image_set(total, SYNTHETIC_SEED)
        return DataBundle(
            "images", 28 * 28,
            images[:n_train], labels[:n_train],
            images[n_train:n_train + n_val], labels[n_train:n_train + n_val],
            images[n_train + n_val:], labels[n_train + n_val:])
    if dataset == "synthetic_events":
        total = n_train + n_val + n_test
        samples = synthetic.make_event_set(total, SYNTHETIC_SEED)
        labels = np.array([s.label for s in samples], dtype=np.int64)
        return DataBundle(
            "events", 2 * 34 * 34,
            samples[:n_train], labels[:n_train],
            samples[n_train:n_train + n_val], labels[n_train:n_train + n_val],
            samples[n_train + n_val:], labels[n_train + n_val:])
    if dataset == "nmnist":
        raise ConfigError(
            "event-file dataset loading is wired through load_nmnist(); point "
            "data_root at Train/Test directories and pre-split, or use "
            "synthetic_events")
    raise ConfigError(f"unknown dataset {dataset!r}")


def load_bundle(config: ExperimentConfig) -> DataBundle:
    return _load_bundle(config.dataset, config.data_root,
                        config.n_train, config.n_val, config.n_test)


def _event_rasters(samples, T_total=300):
    return [events_to_raster(s, T=T_total) for s in samples]


# ---------------------------------------------------------------------------
# Single run
# ---------------------------------------------------------------------------

def make_variant(config: ExperimentConfig, sweep_value=None) -> ModelVariant:
    weight = config.weight
    w_astro = config.w_astro
    density = config.density
    if config.sweep_axis == "weight" and sweep_value is not None:
        weight = sweep_value
    if config.sweep_axis == "w_astro" and sweep_value is not None:
        w_astro = sweep_value
    if config.sweep_axis == "density" and sweep_value is not None:
        density = sweep_value
    stdp = StdpParams()
    if config.variant == "LSM":
        return ModelVariant("LSM", w=weight, stdp=stdp)
    if config.variant == "LSM_STDP":
        return ModelVariant("LSM_STDP", stdp=stdp)
    if config.variant == "LSM_APSTDP":
        return ModelVariant("LSM_APSTDP", stdp=stdp,
                            ap=ApStdpParams(c_theta=config.ap_c_theta,
                                            delta_c=config.ap_delta_c))
    if config.variant == "NALSM":
        return ModelVariant("NALSM", stdp=stdp,
                            astro=AstrocyteParams(tau_astro=config.tau_astro,
                                                  w_astro=w_astro,
                                                  density=density))
    raise ConfigError(f"unknown variant {config.variant!r}")


def _liquid_for(config: ExperimentConfig, bundle: DataBundle, network: int,
                size: int | None = None):
    topo = TopologyConfig(n_liquid=size or config.liquid_size,
                          n_input=config.n_input or bundle.n_input)
    return build_liquid(topo, rng_seed=int(np.random.default_rng(
        [0x70_70, network]).integers(2 ** 31)))


def _snapshot_stream(config, bundle, seed, sweep_size=None):
    if bundle.kind == "images":
        return image_snapshot_stream(bundle.train_x, config.n_snapshots, seed,
                                     config.r_max_hz)
    rasters = _event_rasters(bundle.train_x)
    return event_snapshot_stream(rasters, config.n_snapshots, seed)


def _sample_stream(config, bundle, split, seed):
    x, y = {"train": (bundle.train_x, bundle.train_y),
            "val": (bundle.val_x, bundle.val_y),
            "test": (bundle.test_x, bundle.test_y)}[split]
    if bundle.kind == "images":
        return image_sample_stream(x, y, seed, config.r_max_hz)
    return event_sample_stream(_event_rasters(x), y)


def execute_run(config: ExperimentConfig, network: int, seed: int,
                sweep_value=None) -> RunRecord:
    """build -> init -> counts -> readout -> diagnostics for one grid point."""
    t0 = time.time()
    record = RunRecord(
        fingerprint=config.fingerprint(network, seed, sweep_value),
        config_name=config.name, variant=config.variant, dataset=config.dataset,
        network=network, seed=seed, sweep_axis=config.sweep_axis,
        sweep_value=sweep_value,
    )
    stage = "load-data"
    try:
        bundle = load_bundle(config)
        size = int(sweep_value) if config.sweep_axis == "size" and sweep_value else None

        stage = "build"
        graph = _liquid_for(config, bundle, network, size)
        variant = make_variant(config, sweep_value)
        lif = LifParams()
        astro_state = None
        if variant.astro is not None:
            astro_state = AstrocyteState.create(
                graph, variant.astro, np.random.default_rng([seed, 2]))

        stage = "init"
        if variant.tag == "LSM":
            weights = init_lsm(graph, variant.w)
            record.bf_proxy_mean = None
        else:
            trace = init_with_stdp(graph, _snapshot_stream(config, bundle, seed),
                                   variant, lif, astro_state)
            weights = trace.weights
            valid = trace.bf[~np.isnan(trace.bf)]
            record.bf_proxy_mean = float(valid.mean()) if len(valid) else None
            tail = trace.bf[-max(1, len(trace.bf) // 5):]
            tail = tail[~np.isnan(tail)]
            record.bf_proxy_last = float(tail.mean()) if len(tail) else None

        stage = "counts"
        splits = {}
        for split in ("train", "val", "test"):
            matrix, _ = collect_counts(graph, weights, variant,
                                       _sample_stream(config, bundle, split, seed),
                                       lif, astro_state)
            matrix.validate()
            splits[split] = matrix

        stage = "train-readout"
        sched = TrainSchedule(batch_size=config.batch_size, lr=config.lr,
                              lambda_reg=config.lambda_reg,
                              max_epochs=config.max_epochs,
                              patience=config.patience)
        result = train(splits["train"].counts, splits["train"].labels,
                       splits["val"].counts, splits["val"].labels,
                       sched, np.random.default_rng([seed, 3]))
        record.val_accuracy = result.best_val_accuracy
        record.best_epoch = result.best_epoch
        record.test_accuracy = evaluate(result.model, splits["test"].counts,
                                        splits["test"].labels)

        stage = "analyze"
        record.sigma_bf = probe_sigma_bf(config, bundle, graph, weights, variant,
                                         lif, astro_state, seed)
        total_ms = splits["test"].counts.shape[0] * SAMPLE_MS
        record.mean_rate_hz = float(splits["test"].counts.sum()
                                    / graph.n_liquid / total_ms * 1000.0)
        if config.compute_kernel_quality:
            record.kernel_cell = kernel_cell(config, bundle, graph, weights,
                                             variant, lif, astro_state, seed,
                                             splits["test"])
    except AstrolsmError as e:
        record.failed_stage = stage
        record.error = f"{type(e).__name__}: {e}"
    record.wall_clock_s = time.time() - t0
    return record


def probe_sigma_bf(config, bundle, graph, weights, variant, lif, astro_state,
                   seed, n_probe: int | None = None) -> float | None:
    """Branching factor averaged over rasters of randomly sampled inputs."""
    n_probe = n_probe or config.sigma_bf_samples
    rng = np.random.default_rng([seed, 4])
    pick = rng.choice(len(bundle.test_y), size=min(n_probe, len(bundle.test_y)),
                      replace=False)
    if bundle.kind == "images":
        x = bundle.test_x[pick]
        stream = image_sample_stream(x, bundle.test_y[pick], seed + 9, config.r_max_hz)
    else:
        x = [bundle.test_x[i] for i in pick]
        stream = event_sample_stream(_event_rasters(x), bundle.test_y[pick])
    _, rasters = collect_counts(graph, weights, variant, stream, lif, astro_state,
                                record_raster_for=set(range(len(pick))))
    values = [branching_factor(r, graph, BranchingConfig()) for r in rasters.values()]
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def windowed_bf_proxy(config, bundle, graph, weights, variant, lif, astro_state,
                      seed, n_probe: int = 20,
                      window_ms: int = SNAPSHOT_MS) -> float | None:
    """Mean liquid/input ratio over window-length chunks of probe samples."""
    rng = np.random.default_rng([seed, 5])
    pick = rng.choice(len(bundle.test_y), size=min(n_probe, len(bundle.test_y)),
                      replace=False)
    if bundle.kind == "images":
        stream = image_sample_stream(bundle.test_x[pick], bundle.test_y[pick],
                                     seed + 9, config.r_max_hz)
    else:
        stream = event_sample_stream(_event_rasters([bundle.test_x[i] for i in pick]),
                                     bundle.test_y[pick])
    from .pipeline import build_engine
    eng = build_engine(graph, variant, lif, astro_state)
    from .pipeline import _mode_flags
    flags = _mode_flags(variant, counting=True)
    nalsm = variant.tag == "NALSM"
    if not nalsm:
        eng.set_weights(weights)
    ratios = []
    for ptr, ids, T, _ in stream:
        eng.reset_sample_state()
        if nalsm:
            eng.set_weights(weights)
        res = eng.run(ptr, ids, T, **flags)
        for w0 in range(0, T, window_ms):
            r = bf_proxy(int(res.liq_total[w0:w0 + window_ms].sum()),
                         int(res.inp_total[w0:w0 + window_ms].sum()))
            if r is not None:
                ratios.append(r)
    return float(np.mean(ratios)) if ratios else None


def kernel_cell(config, bundle, graph, weights, variant, lif, astro_state, seed,
                clean_matrix) -> dict:
    """Separation/generalization rank statistics for one (model, dataset) cell."""
    rng = np.random.default_rng([seed, 6])
    if bundle.kind == "images":
        noisy = np.stack([
            np.clip(img + rng.normal(0, 125.0 / 255.0, img.shape), 0, 1)
            for img in bundle.test_x])
        stream = image_sample_stream(noisy, bundle.test_y, seed + 11, config.r_max_hz)
    else:
        shifted = []
        for s in bundle.test_x:
            shifted.append(perturb(s, "time_shift", rng))
        stream = event_sample_stream(_event_rasters(shifted), bundle.test_y)
    noisy_matrix, _ = collect_counts(graph, weights, variant, stream, lif, astro_state)
    k = config.kernel_quality_k or min(500, len(bundle.test_y) // 2)
    return kernel_quality(clean_matrix.counts, noisy_matrix.counts, k=k,
                          shuffles=config.kernel_quality_shuffles, seed=seed)


# ---------------------------------------------------------------------------
# Sweeps and aggregation
# ---------------------------------------------------------------------------

def run_experiment(config: ExperimentConfig, out_dir=None,
                   progress=None) -> list[RunRecord]:
    """Execute the full (sweep value x network x seed) grid and persist records."""
    out = out_dir or os.path.join(config.out_dir,
                                  f"{config.name}-{time.strftime('%Y%m%d-%H%M%S')}")
    os.makedirs(out, exist_ok=True)
    config.save(os.path.join(out, "config.yaml"))
    values = list(config.sweep_values) if config.sweep_axis else [None]
    records = []
    with open(os.path.join(out, "records.jsonl"), "a") as sink:
        for value in values:
            for network in config.networks:
                for seed in config.seeds:
                    rec = execute_run(config, network, seed, value)
                    records.append(rec)
                    sink.write(rec.to_json() + "\n")
                    sink.flush()
                    if progress:
                        progress(rec)
    rows = aggregate(records)
    write_summary(rows, os.path.join(out, "summary.csv"))
    return records


def aggregate(records: list[RunRecord]) -> list[dict]:
    """Mean/std/top accuracy per (variant, sweep value) group."""
    groups: dict = {}
    for r in records:
        if r.failed_stage:
            continue
        groups.setdefault((r.variant, r.sweep_value), []).append(r)
    rows = []
    for (variant, value), recs in sorted(groups.items(),
                                         key=lambda kv: (kv[0][0], str(kv[0][1]))):
        acc = np.array([r.test_accuracy for r in recs], dtype=np.float64)
        sbf = np.array([r.sigma_bf for r in recs if r.sigma_bf is not None],
                       dtype=np.float64)
        rows.append({
            "variant": variant,
            "sweep_value": value,
            "n_runs": len(recs),
            "accuracy_top": float(acc.max()),
            "accuracy_mean": float(acc.mean()),
            "accuracy_std": float(acc.std()),
            "sigma_bf_mean": float(sbf.mean()) if len(sbf) else None,
            "summary": format_accuracy(acc),
        })
    return rows


def format_accuracy(acc: np.ndarray) -> str:
    """Reporting style: top percent, then mean +/- std in parentheses."""
    a = np.asarray(acc, dtype=np.float64) * 100.0
    return f"{a.max():.2f}% ({a.mean():.2f} ± {a.std():.2f}%)"


def write_summary(rows: list[dict], path) -> None:
    if not rows:
        return
    keys = list(rows[0].keys())
    with open(path, "w") as f:
        f.write(",".join(keys) + "\n")
        for row in rows:
            f.write(",".join("" if row[k] is None else str(row[k]) for k in keys) + "\n")


def load_records(path) -> list[RunRecord]:
    records = []
    with open(path) as f:
        for line in f:
            records.append(RunRecord(**json.loads(line)))
    return records


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

def preset(name: str) -> ExperimentConfig:
    """Named experiment configurations at desk and full scale."""
    presets = {
        # desk scale: CI-speed validation, not full-scale settings
        "desk_selforg": ExperimentConfig(
            name="desk_selforg", variant="NALSM", liquid_size=250,
            n_train=2000, n_val=200, n_test=200, n_snapshots=10_000,
            seeds=tuple(range(10))),
        "desk_sweep": ExperimentConfig(
            name="desk_sweep", variant="LSM", liquid_size=250,
            sweep_axis="weight",
            sweep_values=(0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2),
            n_train=2000, n_val=500, n_test=500),
        "desk_bench": ExperimentConfig(
            name="desk_bench", liquid_size=500,
            n_train=10_000, n_val=2_000, n_test=2_000, seeds=tuple(range(5))),
        "desk_density": ExperimentConfig(
            name="desk_density", variant="NALSM", liquid_size=250,
            sweep_axis="density", sweep_values=(0.1, 0.2, 0.4, 0.6, 0.8, 1.0),
            networks=(0, 1, 2), seeds=(0, 1, 2),
            n_train=10_000, n_val=2_000, n_test=2_000),
        # full scale (hours on CPU); real datasets required for paper numbers
        "full_sweep": ExperimentConfig(
            name="full_sweep", dataset="mnist", variant="LSM", liquid_size=1000,
            sweep_axis="weight",
            sweep_values=(0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2),
            n_train=50_000, n_val=10_000, n_test=10_000, n_snapshots=50_000,
            networks=tuple(range(10)), max_epochs=5000, patience=None),
        "full_bench": ExperimentConfig(
            name="full_bench", dataset="mnist", liquid_size=1000,
            n_train=50_000, n_val=10_000, n_test=10_000, n_snapshots=50_000,
            networks=tuple(range(10)), max_epochs=5000, patience=None,
            compute_kernel_quality=True),
        "full_density": ExperimentConfig(
            name="full_density", dataset="mnist", variant="NALSM", liquid_size=1000,
            sweep_axis="density", sweep_values=(0.1, 0.2, 0.4, 0.6, 0.8, 1.0),
            networks=(0, 1, 2), seeds=(0, 1, 2),
            n_train=50_000, n_val=10_000, n_test=10_000, n_snapshots=50_000),
        "full_size": ExperimentConfig(
            name="full_size", dataset="mnist", variant="NALSM",
            sweep_axis="size", sweep_values=(1000, 2000, 4000, 8000),
            networks=(0, 1, 2), n_train=50_000, n_val=10_000, n_test=10_000,
            n_snapshots=50_000, w_astro=0.0075),
    }
    if name not in presets:
        raise ConfigError(f"unknown preset {name!r}; options: {sorted(presets)}")
    return presets[name]
