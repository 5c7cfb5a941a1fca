"""Liquid architecture: 3D neuron placement and random connectivity.

Builds the immutable network structure: neurons on an integer lattice with
excitatory/inhibitory identities, distance-dependent recurrent (liquid to
liquid, "LL") connections, and uniformly random input-to-liquid ("IL")
connections with random signs.  Unit indexing convention used throughout the
package: input units occupy global ids ``[0, n_input)`` and liquid neurons
``[n_input, n_input + n_liquid)``; edge arrays store IL edges first, then LL.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FormatError, StructureError

# Weight bounds per edge class.
IL_BOUNDS = (-3.0, 3.0)
LL_EXC_BOUNDS = (0.0, 3.0)
LL_INH_BOUNDS = (-3.0, 0.0)

# Edge class codes stored per edge.
EDGE_IL = 0
EDGE_LL_EXC = 1
EDGE_LL_INH = 2

CLASS_BOUNDS = {
    EDGE_IL: IL_BOUNDS,
    EDGE_LL_EXC: LL_EXC_BOUNDS,
    EDGE_LL_INH: LL_INH_BOUNDS,
}

# Connection probability amplitude per (pre E/I, post E/I) class.
DEFAULT_C_TABLE = {"EE": 0.2, "EI": 0.1, "II": 0.3, "IE": 0.05}
DEFAULT_LAMBDA = 3.0
DEFAULT_IL_DENSITY = 0.15
DEFAULT_EXC_FRACTION = 0.8

_SERIAL_VERSION = 1
_SAMPLE_BLOCK = 256


@dataclass(frozen=True)
class NeuronMeta:
    index: int
    coord: tuple[int, int, int]
    is_excitatory: bool


@dataclass
class TopologyConfig:
    """Parameters that fully determine a liquid build (given a seed)."""

    n_liquid: int
    n_input: int
    dims: tuple[int, int, int] | None = None
    il_density: float = DEFAULT_IL_DENSITY
    c_table: dict = field(default_factory=lambda: dict(DEFAULT_C_TABLE))
    lambda_: float = DEFAULT_LAMBDA
    exc_fraction: float = DEFAULT_EXC_FRACTION
    il_exc_prob: float = 0.5

    def resolved_dims(self) -> tuple[int, int, int]:
        return self.dims if self.dims is not None else cubic_dims(self.n_liquid)


@dataclass
class LiquidGraph:
    """Immutable liquid structure: neurons plus signed IL/LL edge lists.

    ``ll_pre``/``ll_post`` index liquid neurons; ``il_pre`` indexes input
    units.  Signs are +1/-1.  All arrays are read-only once built.
    """

    n_input: int
    n_liquid: int
    dims: tuple[int, int, int]
    coords: np.ndarray           # (n_liquid, 3) int
    is_excitatory: np.ndarray    # (n_liquid,) bool
    il_pre: np.ndarray
    il_post: np.ndarray
    il_sign: np.ndarray
    ll_pre: np.ndarray
    ll_post: np.ndarray
    ll_sign: np.ndarray

    def __post_init__(self):
        for a in (self.coords, self.is_excitatory, self.il_pre, self.il_post,
                  self.il_sign, self.ll_pre, self.ll_post, self.ll_sign):
            a.flags.writeable = False
        self._edge_cache = None
        self._csr_cache = None

    # -- spec-level views ------------------------------------------------

    @property
    def neurons(self) -> list[NeuronMeta]:
        return [
            NeuronMeta(i, tuple(int(c) for c in self.coords[i]), bool(self.is_excitatory[i]))
            for i in range(self.n_liquid)
        ]

    @property
    def ll_edges(self) -> list[tuple[int, int, int]]:
        return list(zip(self.ll_pre.tolist(), self.ll_post.tolist(), self.ll_sign.tolist()))

    @property
    def il_edges(self) -> list[tuple[int, int, int]]:
        return list(zip(self.il_pre.tolist(), self.il_post.tolist(), self.il_sign.tolist()))

    @property
    def clamp_table(self) -> dict:
        return dict(CLASS_BOUNDS)

    @property
    def n_units(self) -> int:
        return self.n_input + self.n_liquid

    @property
    def n_edges(self) -> int:
        return len(self.il_pre) + len(self.ll_pre)

    # -- fused edge arrays (IL first, then LL) ---------------------------

    def edge_arrays(self):
        """(pre_unit, post, sign, lo, hi, class) arrays over all edges.

        ``pre_unit`` uses global unit ids (inputs first), ``post`` liquid ids.
        """
        if self._edge_cache is None:
            pre = np.concatenate([self.il_pre, self.ll_pre + self.n_input]).astype(np.int64)
            post = np.concatenate([self.il_post, self.ll_post]).astype(np.int64)
            sign = np.concatenate([self.il_sign, self.ll_sign]).astype(np.int64)
            cls = np.concatenate([
                np.full(len(self.il_pre), EDGE_IL, dtype=np.int64),
                np.where(self.ll_sign > 0, EDGE_LL_EXC, EDGE_LL_INH).astype(np.int64),
            ])
            lo = np.array([CLASS_BOUNDS[c][0] for c in (EDGE_IL, EDGE_LL_EXC, EDGE_LL_INH)])[cls]
            hi = np.array([CLASS_BOUNDS[c][1] for c in (EDGE_IL, EDGE_LL_EXC, EDGE_LL_INH)])[cls]
            for a in (pre, post, sign, cls, lo, hi):
                a.flags.writeable = False
            self._edge_cache = (pre, post, sign, lo, hi, cls)
        return self._edge_cache

    def edge_csr(self):
        """CSR indexes over the fused edge list, grouped by pre unit and by post neuron.

        Returns (pre_ptr, pre_order, post_ptr, post_order) where e.g.
        ``pre_order[pre_ptr[s]:pre_ptr[s+1]]`` are the edge indices whose
        presynaptic unit is ``s``; within a group, edges keep ascending order.
        """
        if self._csr_cache is None:
            pre, post, *_ = self.edge_arrays()
            pre_order = np.argsort(pre, kind="stable").astype(np.int64)
            pre_ptr = np.zeros(self.n_units + 1, dtype=np.int64)
            np.cumsum(np.bincount(pre, minlength=self.n_units), out=pre_ptr[1:])
            post_order = np.argsort(post, kind="stable").astype(np.int64)
            post_ptr = np.zeros(self.n_liquid + 1, dtype=np.int64)
            np.cumsum(np.bincount(post, minlength=self.n_liquid), out=post_ptr[1:])
            for a in (pre_ptr, pre_order, post_ptr, post_order):
                a.flags.writeable = False
            self._csr_cache = (pre_ptr, pre_order, post_ptr, post_order)
        return self._csr_cache

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.int64([self.n_input, self.n_liquid, *self.dims]).tobytes())
        for a in (self.is_excitatory, self.il_pre, self.il_post, self.il_sign,
                  self.ll_pre, self.ll_post, self.ll_sign):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()[:16]


def cubic_dims(n: int) -> tuple[int, int, int]:
    """Smallest near-cubic lattice with at least ``n`` sites."""
    if n < 1:
        raise StructureError(f"need at least one neuron, got {n}")
    side = int(round(n ** (1.0 / 3.0)))
    best = None
    for a in range(max(1, side - 2), side + 3):
        for b in range(max(1, a - 2), a + 3):
            for c in range(max(1, b - 2), b + 3):
                if a * b * c >= n:
                    key = (a * b * c, a - c)
                    if best is None or key < best[0]:
                        best = (key, (a, b, c))
    if best is None:  # tiny n fallback
        return (n, 1, 1)
    return best[1]


def place_neurons(n_liquid: int, dims: tuple[int, int, int],
                  rng: np.random.Generator,
                  exc_fraction: float = DEFAULT_EXC_FRACTION) -> list[NeuronMeta]:
    """Fill lattice sites in row-major order and assign E/I labels by shuffle.

    Exactly round(exc_fraction * n) neurons are excitatory (round half up).
    """
    coords, is_exc = _place_arrays(n_liquid, dims, rng, exc_fraction)
    return [NeuronMeta(i, tuple(int(c) for c in coords[i]), bool(is_exc[i]))
            for i in range(n_liquid)]


def _place_arrays(n_liquid, dims, rng, exc_fraction):
    if int(np.prod(dims)) < n_liquid:
        raise StructureError(
            f"lattice {dims} has {int(np.prod(dims))} sites < {n_liquid} neurons")
    idx = np.unravel_index(np.arange(n_liquid), dims)
    coords = np.stack(idx, axis=1).astype(np.int64)
    n_exc = int(np.floor(exc_fraction * n_liquid + 0.5))
    is_exc = np.zeros(n_liquid, dtype=bool)
    perm = rng.permutation(n_liquid)
    is_exc[perm[:n_exc]] = True
    return coords, is_exc


def connection_probability(pre: NeuronMeta, post: NeuronMeta,
                           c: float, lambda_: float) -> float:
    """Distance-dependent connection probability C * exp(-(D/lambda)^2)."""
    if lambda_ <= 0:
        raise ConfigError(f"lambda must be positive, got {lambda_}")
    if not 0.0 <= c <= 1.0:
        raise ConfigError(f"amplitude C must be in [0,1], got {c}")
    d2 = sum((a - b) ** 2 for a, b in zip(pre.coord, post.coord))
    return c * float(np.exp(-d2 / (lambda_ * lambda_)))


def _c_lookup(c_table: dict) -> np.ndarray:
    """2x2 amplitude matrix indexed by [pre_is_exc, post_is_exc]."""
    m = np.empty((2, 2))
    m[1, 1] = c_table["EE"]
    m[1, 0] = c_table["EI"]
    m[0, 0] = c_table["II"]
    m[0, 1] = c_table["IE"]
    return m


def build_liquid(config: TopologyConfig, rng_seed: int) -> LiquidGraph:
    """Sample a liquid graph. Deterministic given (config, seed).

    LL edges are directed: each ordered pair (i, j), i != j, is sampled
    independently with the class amplitude of the presynaptic neuron's
    identity.  IL edges are sampled per (input, liquid) pair at the
    configured density, each with an independent random sign.
    """
    rng = np.random.default_rng(rng_seed)
    dims = config.resolved_dims()
    n = config.n_liquid
    coords, is_exc = _place_arrays(n, dims, rng, config.exc_fraction)

    c_mat = _c_lookup(config.c_table)
    if np.any(c_mat < 0) or np.any(c_mat > 1):
        raise ConfigError("all C amplitudes must lie in [0,1]")
    if config.lambda_ <= 0:
        raise ConfigError("lambda must be positive")

    inv_l2 = 1.0 / (config.lambda_ * config.lambda_)
    cf = coords.astype(np.float64)
    ll_pre_parts, ll_post_parts = [], []
    for i0 in range(0, n, _SAMPLE_BLOCK):
        i1 = min(i0 + _SAMPLE_BLOCK, n)
        d2 = ((cf[i0:i1, None, :] - cf[None, :, :]) ** 2).sum(axis=2)
        p = c_mat[is_exc[i0:i1].astype(int)[:, None], is_exc.astype(int)[None, :]]
        p = p * np.exp(-d2 * inv_l2)
        rows = np.arange(i0, i1)
        p[rows - i0, rows] = 0.0  # no self-edges
        hit = rng.random(p.shape) < p
        pre_loc, post_loc = np.nonzero(hit)
        ll_pre_parts.append(pre_loc + i0)
        ll_post_parts.append(post_loc)
    ll_pre = np.concatenate(ll_pre_parts).astype(np.int64)
    ll_post = np.concatenate(ll_post_parts).astype(np.int64)
    ll_sign = np.where(is_exc[ll_pre], 1, -1).astype(np.int64)

    il_pre_parts, il_post_parts = [], []
    for s0 in range(0, config.n_input, _SAMPLE_BLOCK):
        s1 = min(s0 + _SAMPLE_BLOCK, config.n_input)
        hit = rng.random((s1 - s0, n)) < config.il_density
        pre_loc, post_loc = np.nonzero(hit)
        il_pre_parts.append(pre_loc + s0)
        il_post_parts.append(post_loc)
    il_pre = np.concatenate(il_pre_parts).astype(np.int64)
    il_post = np.concatenate(il_post_parts).astype(np.int64)
    il_sign = np.where(rng.random(len(il_pre)) < config.il_exc_prob, 1, -1).astype(np.int64)

    return LiquidGraph(
        n_input=config.n_input, n_liquid=n, dims=dims,
        coords=coords, is_excitatory=is_exc,
        il_pre=il_pre, il_post=il_post, il_sign=il_sign,
        ll_pre=ll_pre, ll_post=ll_post, ll_sign=ll_sign,
    )


def validate_weights(graph: LiquidGraph, weights: np.ndarray) -> None:
    """Reject any weight outside its edge-class clamp bounds."""
    _, _, _, lo, hi, _ = graph.edge_arrays()
    if weights.shape != lo.shape:
        raise StructureError(
            f"weight vector length {weights.shape} != edge count {lo.shape}")
    bad = (weights < lo) | (weights > hi)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise ConfigError(
            f"weight {weights[i]:.6g} at edge {i} outside clamp "
            f"[{lo[i]:g}, {hi[i]:g}]")


def clamp_weights(graph: LiquidGraph, weights: np.ndarray) -> np.ndarray:
    _, _, _, lo, hi, _ = graph.edge_arrays()
    return np.clip(weights, lo, hi)


def save_graph(graph: LiquidGraph, path, weights: np.ndarray | None = None) -> None:
    """Persist a graph (optionally with a weight snapshot) to a .npz archive."""
    meta = {
        "version": _SERIAL_VERSION,
        "n_input": graph.n_input,
        "n_liquid": graph.n_liquid,
        "dims": list(graph.dims),
        "fingerprint": graph.fingerprint(),
    }
    arrays = dict(
        meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
        coords=graph.coords, is_excitatory=graph.is_excitatory,
        il_pre=graph.il_pre, il_post=graph.il_post, il_sign=graph.il_sign,
        ll_pre=graph.ll_pre, ll_post=graph.ll_post, ll_sign=graph.ll_sign,
    )
    if weights is not None:
        validate_weights(graph, weights)
        arrays["weights"] = weights
    np.savez_compressed(path, **arrays)


def load_graph(path):
    """Load a graph saved by :func:`save_graph`.

    Returns (graph, weights) where weights is None if no snapshot was stored.
    """
    with np.load(path) as z:
        meta = json.loads(bytes(z["meta"]).decode())
        if meta.get("version") != _SERIAL_VERSION:
            raise FormatError(f"unsupported graph file version: {meta.get('version')}")
        graph = LiquidGraph(
            n_input=int(meta["n_input"]), n_liquid=int(meta["n_liquid"]),
            dims=tuple(meta["dims"]),
            coords=z["coords"].copy(), is_excitatory=z["is_excitatory"].copy(),
            il_pre=z["il_pre"].copy(), il_post=z["il_post"].copy(), il_sign=z["il_sign"].copy(),
            ll_pre=z["ll_pre"].copy(), ll_post=z["ll_post"].copy(), ll_sign=z["ll_sign"].copy(),
        )
        if graph.fingerprint() != meta["fingerprint"]:
            raise FormatError("corrupt graph file: fingerprint mismatch")
        weights = z["weights"].copy() if "weights" in z else None
    return graph, weights
