"""Training protocol: liquid initialization, then spike-count collection.

Four model variants share one machinery:

* ``LSM`` - every connection set to one signed weight, frozen throughout.
* ``LSM_STDP`` - weights start at the clamp extremes and self-organize under
  unregulated STDP over a stream of 20 ms snapshots; frozen afterwards.
* ``LSM_APSTDP`` - like LSM_STDP but updates pass an activity band gate and
  weights start at +/-1.
* ``NALSM`` - the astrocyte drives the depression rate during the snapshot
  stream; during spike counting every sample restarts from the initialized
  weights and keeps the modulated plasticity running while the potentiation
  rate and astrocyte bias decay per millisecond.

The snapshot stream carries neuron/trace/astrocyte state continuously;
spike counting resets all per-sample state so that sample order cannot
influence any sample's count vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .astrocyte import AstrocyteParams, AstrocyteState
from .data import SAMPLE_MS, SNAPSHOT_MS, poisson_encode, raster_to_csr, snapshot_window
from .dynamics import LifParams
from .engine import LiquidEngine
from .errors import ConfigError
from .plasticity import ApStdpParams, StdpParams
from .topology import LiquidGraph, validate_weights

VARIANT_TAGS = ("LSM", "LSM_STDP", "LSM_APSTDP", "NALSM")

# spike-count ceiling per neuron: presentation length over the refractory period
def count_ceiling(T: int = SAMPLE_MS, refractory: int = 2) -> int:
    return T // refractory


@dataclass
class ModelVariant:
    tag: str
    w: float | None = None                      # uniform weight (LSM only)
    stdp: StdpParams = field(default_factory=StdpParams)
    ap: ApStdpParams | None = None
    astro: AstrocyteParams | None = None

    def __post_init__(self):
        if self.tag not in VARIANT_TAGS:
            raise ConfigError(f"unknown variant tag {self.tag!r}")
        if self.tag == "LSM" and self.w is None:
            raise ConfigError("LSM variant needs a liquid weight")
        if self.tag == "LSM_APSTDP" and self.ap is None:
            raise ConfigError("LSM_APSTDP variant needs gate parameters")
        if self.tag == "NALSM" and self.astro is None:
            self.astro = AstrocyteParams()


@dataclass
class SpikeCountMatrix:
    counts: np.ndarray  # (samples, n_liquid) int64
    labels: np.ndarray  # (samples,) int

    def validate(self, T: int = SAMPLE_MS, refractory: int = 2) -> None:
        cap = count_ceiling(T, refractory)
        if self.counts.min() < 0 or self.counts.max() > cap:
            raise ConfigError(
                f"spike counts outside [0, {cap}]: "
                f"min {self.counts.min()}, max {self.counts.max()}")


@dataclass
class InitTrace:
    """Per-snapshot log of the initialization stream."""

    bf: np.ndarray        # liquid/input spike ratio per snapshot (nan if undefined)
    a_minus: np.ndarray   # astrocyte output at each snapshot end
    weights: np.ndarray   # final weights


def init_lsm(graph: LiquidGraph, w: float) -> np.ndarray:
    """Uniform-magnitude weights, signs from the connection table."""
    _, _, sign, _, _, _ = graph.edge_arrays()
    weights = sign.astype(np.float64) * w
    try:
        validate_weights(graph, weights)
    except ConfigError as e:
        raise ConfigError(f"liquid weight {w} violates clamp bounds: {e}") from e
    return weights


def initial_stdp_weights(graph: LiquidGraph, variant: ModelVariant) -> np.ndarray:
    """Starting weights for the snapshot stream: clamp extremes, except the
    gated variant which starts at unit magnitude."""
    _, _, sign, _, _, _ = graph.edge_arrays()
    mag = 1.0 if variant.tag == "LSM_APSTDP" else 3.0
    return sign.astype(np.float64) * mag


def build_engine(graph: LiquidGraph, variant: ModelVariant,
                 lif: LifParams | None = None,
                 astro_state: AstrocyteState | None = None) -> LiquidEngine:
    return LiquidEngine(graph, lif=lif, stdp=variant.stdp, ap=variant.ap,
                        astro=variant.astro, astro_state=astro_state)


def _mode_flags(variant: ModelVariant, counting: bool) -> dict:
    if variant.tag == "LSM":
        return dict(plastic=False, astro_on=False, ap_on=False, decay_mod=False)
    if variant.tag == "LSM_STDP":
        plastic = not counting
        return dict(plastic=plastic, astro_on=False, ap_on=False, decay_mod=False)
    if variant.tag == "LSM_APSTDP":
        plastic = not counting
        return dict(plastic=plastic, astro_on=False, ap_on=plastic, decay_mod=False)
    # NALSM: plasticity stays on while counting, with per-ms modulation decay
    return dict(plastic=True, astro_on=True, ap_on=False, decay_mod=counting)


def init_with_stdp(graph: LiquidGraph, snapshots, variant: ModelVariant,
                   lif: LifParams | None = None,
                   astro_state: AstrocyteState | None = None,
                   engine: LiquidEngine | None = None) -> InitTrace:
    """Run the continuous snapshot stream and return the organized weights.

    ``snapshots`` yields (ptr, ids, T) raster segments.  State carries
    across snapshots; nothing is reset mid-stream.
    """
    if variant.tag == "LSM":
        raise ConfigError("the uniform-weight variant is not STDP-initialized")
    eng = engine or build_engine(graph, variant, lif, astro_state)
    eng.set_weights(initial_stdp_weights(graph, variant))
    eng.reset_sample_state()
    flags = _mode_flags(variant, counting=False)
    bf, a_trace = [], []
    for ptr, ids, T in snapshots:
        res = eng.run(ptr, ids, T, **flags)
        n_inp = int(res.inp_total.sum())
        n_liq = int(res.liq_total.sum())
        bf.append(n_liq / n_inp if n_inp > 0 else np.nan)
        a_trace.append(eng.astro_value[0])
    return InitTrace(bf=np.array(bf), a_minus=np.array(a_trace),
                     weights=eng.weights_copy())


def collect_counts(graph: LiquidGraph, weights: np.ndarray,
                   variant: ModelVariant, rasters, lif: LifParams | None = None,
                   astro_state: AstrocyteState | None = None,
                   record_raster_for: set[int] | None = None,
                   engine: LiquidEngine | None = None) -> tuple[SpikeCountMatrix, dict]:
    """Present each sample for its full duration and count liquid spikes.

    ``rasters`` yields (ptr, ids, T, label).  All per-sample state is reset
    between samples; for the astrocyte variant the weights are re-copied
    from ``weights`` per sample, for every other variant they stay frozen
    (bitwise identical before and after).

    Returns the count matrix and a dict of recorded rasters (sample index ->
    (T, n_liquid) uint8 array) for the indices in ``record_raster_for``.
    """
    eng = engine or build_engine(graph, variant, lif, astro_state)
    flags = _mode_flags(variant, counting=True)
    nalsm = variant.tag == "NALSM"
    if not nalsm:
        eng.set_weights(weights)
    record = record_raster_for or set()
    rows, labels, kept = [], [], {}
    for i, (ptr, ids, T, label) in enumerate(rasters):
        eng.reset_sample_state()
        if nalsm:
            eng.set_weights(weights)
        res = eng.run(ptr, ids, T, record_raster=i in record, **flags)
        rows.append(res.counts)
        labels.append(label)
        if i in record:
            kept[i] = res.raster
    matrix = SpikeCountMatrix(counts=np.array(rows, dtype=np.int64),
                              labels=np.array(labels))
    return matrix, kept


# ---------------------------------------------------------------------------
# Input streams
# ---------------------------------------------------------------------------

def image_snapshot_stream(images: np.ndarray, n_snapshots: int, seed: int,
                          r_max: float, T: int = SNAPSHOT_MS):
    """Randomly ordered snapshot series, one fresh rate-coded encode each.

    Each pass visits every image once in shuffled order; streams longer than
    the image set start additional shuffled passes.
    """
    rng = np.random.default_rng([seed, 0x5eed])
    n = len(images)
    order = rng.permutation(n)
    pos = 0
    for _ in range(n_snapshots):
        if pos == n:
            order = rng.permutation(n)
            pos = 0
        raster = poisson_encode(images[order[pos]], T, rng, r_max)
        ptr, ids = raster_to_csr(raster)
        yield ptr, ids, T
        pos += 1


def event_snapshot_stream(rasters: list[np.ndarray], n_snapshots: int, seed: int,
                          T: int = SNAPSHOT_MS):
    """Snapshot series over event rasters: random sample, random 20 ms window."""
    rng = np.random.default_rng([seed, 0x5eed])
    n = len(rasters)
    order = rng.permutation(n)
    pos = 0
    for _ in range(n_snapshots):
        if pos == n:
            order = rng.permutation(n)
            pos = 0
        full = rasters[order[pos]]
        start = snapshot_window(rng, total_ms=full.shape[0], width_ms=T)
        ptr, ids = raster_to_csr(full[start:start + T])
        yield ptr, ids, T
        pos += 1


def image_sample_stream(images: np.ndarray, labels: np.ndarray, seed: int,
                        r_max: float, T: int = SAMPLE_MS):
    """Full-length rate-coded presentation per sample, seeded per index."""
    for i in range(len(images)):
        rng = np.random.default_rng([seed, 1, i])
        raster = poisson_encode(images[i], T, rng, r_max)
        ptr, ids = raster_to_csr(raster)
        yield ptr, ids, T, int(labels[i])


def event_sample_stream(rasters: list[np.ndarray], labels: np.ndarray,
                        T: int = SAMPLE_MS):
    """Event rasters truncated to the first T milliseconds."""
    for i, full in enumerate(rasters):
        ptr, ids = raster_to_csr(full[:T])
        yield ptr, ids, T, int(labels[i])
