"""Trace-based STDP with per-class weight clamping, plus activity gating.

Every spiking unit (input or liquid) carries a presynaptic trace; every
liquid neuron carries a postsynaptic trace.  Traces decay exponentially and
jump by a fixed increment on each spike of their unit.  Weight updates pair
this step's spikes against the *decayed* traces, i.e. traces that include
the decay for this step but not this step's bumps, so simultaneous pre/post
spikes contribute nothing.  Within a step both the potentiation and
depression deltas are applied before clamping.

The activity-gated variant keeps a leaky per-neuron rate estimate and only
lets STDP touch an edge while the postsynaptic estimate sits inside a
configured band.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import DT_MS, _gather_csr
from .errors import ConfigError


@dataclass
class StdpParams:
    a_plus: float = 0.1       # trace increment per presynaptic spike
    a_minus: float = 0.1      # trace increment per postsynaptic spike
    tau_plus: float = 10.0    # ms
    tau_minus: float = 10.0   # ms
    lr_plus: float = 0.15     # potentiation learning rate
    lr_minus: float = 0.15    # depression learning rate (fixed-rate variants)

    def __post_init__(self):
        if min(self.a_plus, self.a_minus, self.tau_plus, self.tau_minus,
               self.lr_plus, self.lr_minus) <= 0:
            raise ConfigError("all STDP parameters must be positive")


@dataclass
class ApStdpParams:
    """Band-pass activity gate for STDP updates."""

    c_theta: float            # activity set-point (spikes per tau_c window)
    delta_c: float            # half-width of the permitted band
    p: float = 1.0            # application probability when inside the band
    tau_c: float = 1000.0     # ms, rate-estimate time constant

    def __post_init__(self):
        if self.delta_c < 0:
            raise ConfigError("delta_c cannot be negative")
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError("p must lie in [0,1]")
        if self.tau_c <= 0:
            raise ConfigError("tau_c must be positive")


@dataclass
class PlasticityState:
    """Traces, mutable weights and (optionally used) rate estimates."""

    t_pre: np.ndarray    # one per spiking unit (inputs first, then liquid)
    t_post: np.ndarray   # one per liquid neuron
    weights: np.ndarray  # per edge, IL edges first
    rate_est: np.ndarray # per liquid neuron, leaky spike-rate estimate

    @classmethod
    def create(cls, graph, weights: np.ndarray) -> "PlasticityState":
        return cls(
            t_pre=np.zeros(graph.n_units),
            t_post=np.zeros(graph.n_liquid),
            weights=np.array(weights, dtype=np.float64),
            rate_est=np.zeros(graph.n_liquid),
        )

    def reset_traces(self) -> None:
        self.t_pre[:] = 0.0
        self.t_post[:] = 0.0
        self.rate_est[:] = 0.0


def decay_traces(state: PlasticityState, params: StdpParams, dt: float = DT_MS) -> None:
    state.t_pre *= np.exp(-dt / params.tau_plus)
    state.t_post *= np.exp(-dt / params.tau_minus)


def bump_traces(state: PlasticityState, spiking_units: np.ndarray,
                spiking_liquid: np.ndarray, params: StdpParams) -> None:
    """Increment traces for this step's spikes (unit ids for pre, liquid ids for post)."""
    state.t_pre[spiking_units] += params.a_plus
    state.t_post[spiking_liquid] += params.a_minus


def decay_and_bump_traces(state: PlasticityState, spiking_units, spiking_liquid,
                          params: StdpParams, dt: float = DT_MS) -> None:
    """One whole-step trace update: exponential decay, then per-spike bumps."""
    decay_traces(state, params, dt)
    bump_traces(state, spiking_units, spiking_liquid, params)


def apply_stdp(state: PlasticityState, graph, pre_spike_units: np.ndarray,
               post_spike_neurons: np.ndarray, lr_plus: float, lr_minus: float,
               gate_mask: np.ndarray | None = None) -> None:
    """Apply one step of pair-based weight changes, then clamp touched edges.

    Potentiation: every edge whose postsynaptic neuron spiked gains
    ``lr_plus * t_pre(pre)``.  Depression: every edge whose presynaptic unit
    spiked loses ``lr_minus * t_post(post)``.  ``gate_mask``, when given, is
    a per-liquid-neuron bool vector; edges onto gated-out neurons are
    skipped entirely.
    """
    pre_arr, post_arr, _, lo, hi, _ = graph.edge_arrays()
    pre_ptr, pre_order, post_ptr, post_order = graph.edge_csr()
    w = state.weights

    e_pot = _gather_csr(post_ptr, post_order, np.asarray(post_spike_neurons, dtype=np.int64))
    e_dep = _gather_csr(pre_ptr, pre_order, np.asarray(pre_spike_units, dtype=np.int64))
    if gate_mask is not None:
        e_pot = e_pot[gate_mask[post_arr[e_pot]]]
        e_dep = e_dep[gate_mask[post_arr[e_dep]]]

    w[e_pot] += lr_plus * state.t_pre[pre_arr[e_pot]]
    w[e_dep] -= lr_minus * state.t_post[post_arr[e_dep]]

    touched = np.concatenate([e_pot, e_dep])
    w[touched] = np.clip(w[touched], lo[touched], hi[touched])


def update_rate_estimates(state: PlasticityState, spiking_liquid: np.ndarray,
                          params: ApStdpParams, dt: float = DT_MS) -> None:
    """Leaky rate estimator: decay by exp(-dt/tau_c), +1 per spike."""
    state.rate_est *= np.exp(-dt / params.tau_c)
    state.rate_est[spiking_liquid] += 1.0


def apstdp_gate(state: PlasticityState, post_neuron: int, params: ApStdpParams,
                rng: np.random.Generator | None = None) -> bool:
    """True iff the postsynaptic rate estimate is in band and the coin allows it."""
    c = state.rate_est[post_neuron]
    if abs(c - params.c_theta) > params.delta_c:
        return False
    if params.p >= 1.0:
        return True
    if params.p <= 0.0:
        return False
    if rng is None:
        raise ConfigError("probabilistic gating (0 < p < 1) needs an rng")
    return bool(rng.random() < params.p)


def apstdp_gate_mask(state: PlasticityState, params: ApStdpParams,
                     rng: np.random.Generator | None = None) -> np.ndarray:
    """Vectorized gate over all liquid neurons (postsynaptic side)."""
    mask = np.abs(state.rate_est - params.c_theta) <= params.delta_c
    if params.p >= 1.0:
        return mask
    if params.p <= 0.0:
        return np.zeros_like(mask)
    if rng is None:
        raise ConfigError("probabilistic gating (0 < p < 1) needs an rng")
    return mask & (rng.random(mask.shape) < params.p)
