"""Dynamical and representational diagnostics.

Branching factor: every spike of a neuron with outgoing connections is an
ancestor; spikes of its targets inside the window [t+offset, t+offset+width)
are its descendants.  A descendant shared by several eligible ancestor
spikes is split fractionally among them, so the estimator totals the number
of attributed descendant spikes over the number of eligible ancestor spikes.
Ancestor spikes whose window would run past the end of the raster are
excluded from both sides.

Kernel quality combines two rank measures over spike-count matrices:
linear separation on clean inputs (higher is better) and rank inflation
under input noise (lower is better).  Scores are comparable only across a
pool: both measures are min-max rescaled over the pool, generalization is
subtracted from separation, and the differences are rescaled to [0, 1]
again.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ConfigError, FitError

RANK_TOL_FACTOR = 1e-8
DEFAULT_K = 500
DEFAULT_SHUFFLES = 1000


@dataclass
class BranchingConfig:
    window: int = 4   # ms
    offset: int = 0   # ms

    def __post_init__(self):
        if self.window <= 0 or self.offset < 0:
            raise ConfigError("window must be positive and offset non-negative")


@dataclass
class SimpleDiGraph:
    """Minimal adjacency holder so diagnostics run on hand-built toy graphs."""

    n_liquid: int
    ll_pre: np.ndarray
    ll_post: np.ndarray


@njit(cache=True)
def _branching_counts(raster, rev_ptr, rev_ids, out_deg, width, offset):
    T, n = raster.shape
    last_anc = T - offset - width  # latest step with a complete window
    total_anc = 0
    for t in range(min(last_anc + 1, T)):
        for i in range(n):
            if raster[t, i] and out_deg[i] > 0:
                total_anc += 1
    attributed = 0
    for s in range(T):
        lo = s - offset - width + 1
        hi = s - offset
        if lo < 0:
            lo = 0
        if hi > last_anc:
            hi = last_anc
        if hi < lo:
            continue
        for j in range(n):
            if not raster[s, j]:
                continue
            found = False
            for k in range(rev_ptr[j], rev_ptr[j + 1]):
                i = rev_ids[k]
                for tau in range(lo, hi + 1):
                    if raster[tau, i]:
                        found = True
                        break
                if found:
                    break
            if found:
                attributed += 1
    return attributed, total_anc


def branching_factor(raster: np.ndarray, graph, cfg: BranchingConfig | None = None):
    """Mean descendants per ancestor spike; None for silent/too-short rasters."""
    cfg = cfg or BranchingConfig()
    r = np.ascontiguousarray(raster, dtype=np.uint8)
    n = graph.n_liquid
    pre = np.asarray(graph.ll_pre, dtype=np.int64)
    post = np.asarray(graph.ll_post, dtype=np.int64)
    out_deg = np.bincount(pre, minlength=n).astype(np.int64)
    order = np.argsort(post, kind="stable")
    rev_ids = pre[order]
    rev_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(post, minlength=n), out=rev_ptr[1:])
    attributed, total = _branching_counts(r, rev_ptr, rev_ids, out_deg,
                                          cfg.window, cfg.offset)
    if total == 0:
        return None
    return attributed / total


def spike_autocorrelation(raster: np.ndarray, max_lag: int) -> np.ndarray:
    """A(tau) = (1/NT) sum_i sum_t r_i(t+tau) r_i(t), zero-padded past the end."""
    r = np.asarray(raster, dtype=np.float64)
    T, n = r.shape
    out = np.zeros(max_lag + 1)
    for tau in range(min(max_lag, T - 1) + 1):
        out[tau] = (r[tau:, :] * r[: T - tau, :]).sum() / (n * T)
    return out


def ei_weight_balance(weights: np.ndarray):
    """(n_positive - n_negative) / n_nonzero over all weights; None if all zero."""
    w = np.asarray(weights)
    nonzero = np.count_nonzero(w)
    if nonzero == 0:
        return None
    return (int((w > 0).sum()) - int((w < 0).sum())) / nonzero


@dataclass
class RateBalanceReport:
    f_ei: float                 # |mean exc rate - mean inh rate| / mean rate
    rate_exc: float             # spikes per neuron per ms
    rate_inh: float
    rate_all: float


def ei_rate_balance(raster: np.ndarray, is_excitatory: np.ndarray):
    """Excitatory/inhibitory rate asymmetry over a raster; None if silent."""
    r = np.asarray(raster, dtype=np.float64)
    exc = np.asarray(is_excitatory, dtype=bool)
    f_all = r.mean()
    if f_all == 0:
        return None
    f_e = r[:, exc].mean()
    f_i = r[:, ~exc].mean() if (~exc).any() else 0.0
    return RateBalanceReport(f_ei=abs(f_e - f_i) / f_all,
                             rate_exc=f_e, rate_inh=f_i, rate_all=f_all)


def net_current_stats(drive: np.ndarray) -> tuple[float, float]:
    """Mean and std of per-neuron per-step injected current."""
    d = np.asarray(drive, dtype=np.float64)
    return float(d.mean()), float(d.std())


def numeric_rank(m: np.ndarray, tol_factor: float = RANK_TOL_FACTOR) -> int:
    """Singular values above tol_factor * s_max count toward the rank."""
    s = np.linalg.svd(m, compute_uv=False)
    if len(s) == 0 or s[0] == 0.0:
        return 0
    return int((s > tol_factor * s[0]).sum())


def rank_samples(counts: np.ndarray, k: int, shuffles: int,
                 rng: np.random.Generator,
                 tol_factor: float = RANK_TOL_FACTOR) -> np.ndarray:
    """Ranks of (n_liquid x k) matrices built from k random count vectors."""
    c = np.asarray(counts, dtype=np.float64)
    n_samples = c.shape[0]
    if k > n_samples:
        raise ConfigError(f"k={k} exceeds available samples ({n_samples})")
    ranks = np.empty(shuffles, dtype=np.int64)
    for i in range(shuffles):
        cols = rng.choice(n_samples, size=k, replace=False)
        ranks[i] = numeric_rank(c[cols].T, tol_factor)
    return ranks


@dataclass
class KernelQualityReport:
    separation_mean: float
    separation_std: float
    generalization_mean: float
    generalization_std: float
    score: float          # in [0,1] after pool rescaling
    k: int
    shuffles: int


def kernel_quality(clean_counts: np.ndarray, noisy_counts: np.ndarray,
                   k: int = DEFAULT_K, shuffles: int = DEFAULT_SHUFFLES,
                   seed: int = 0) -> dict:
    """Raw separation/generalization rank statistics for one model/dataset cell."""
    rng = np.random.default_rng([seed, 0x6b])
    sep = rank_samples(clean_counts, k, shuffles, rng)
    gen = rank_samples(noisy_counts, k, shuffles, rng)
    return {
        "separation_mean": float(sep.mean()), "separation_std": float(sep.std()),
        "generalization_mean": float(gen.mean()), "generalization_std": float(gen.std()),
        "k": k, "shuffles": shuffles,
    }


def _rescale(values: np.ndarray) -> np.ndarray:
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.full_like(values, 0.5, dtype=np.float64)
    return (values - lo) / (hi - lo)


def combine_kernel_quality(cells: list[dict]) -> list[KernelQualityReport]:
    """Pool-level combination: rescale measures, subtract, rescale differences."""
    sep = _rescale(np.array([c["separation_mean"] for c in cells]))
    gen = _rescale(np.array([c["generalization_mean"] for c in cells]))
    score = _rescale(sep - gen)
    return [
        KernelQualityReport(
            separation_mean=c["separation_mean"], separation_std=c["separation_std"],
            generalization_mean=c["generalization_mean"],
            generalization_std=c["generalization_std"],
            score=float(s), k=c["k"], shuffles=c["shuffles"],
        )
        for c, s in zip(cells, score)
    ]


def fit_polynomial(x: np.ndarray, y: np.ndarray, degree: int):
    """Least-squares polynomial fit; returns (coefficients, residual_sum).

    Coefficients are highest power first.  Raises :class:`FitError` when the
    design matrix is rank-deficient.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) < degree + 1:
        raise ConfigError(
            f"need at least {degree + 1} points for degree {degree}, got {len(x)}")
    design = np.vander(x, degree + 1)
    if np.linalg.matrix_rank(design) < degree + 1:
        raise FitError(f"design matrix is rank-deficient for degree {degree}")
    coeffs, res, _, _ = np.linalg.lstsq(design, y, rcond=None)
    residual = float(res[0]) if len(res) else float(((design @ coeffs - y) ** 2).sum())
    return coeffs, residual
