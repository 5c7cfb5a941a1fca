"""Discrete-time leaky-integrate-and-fire simulation on a 1 ms grid.

Membrane potential follows forward Euler with decay factor (1 - dt/tau_v);
synaptic current follows the exact exponential kernel: an incoming spike on a
weight-w edge adds w/tau_u to the target's current, which then decays by
exp(-dt/tau_u) per step.  Spikes reset the potential to zero and start an
absolute refractory countdown; a refractory period of r ms permits a minimum
inter-spike interval of r steps.  Input units carry no LIF state here; their
spikes come from the encoders and enter only through :func:`inject_spikes`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError, StructureError

DT_MS = 1.0


@dataclass
class LifParams:
    theta: float = 20.0
    tau_v: float = 64.0
    tau_u: float = 1.0
    bias: float = 0.0
    refractory: int = 2

    def __post_init__(self):
        if self.theta <= 0 or self.tau_v <= 0 or self.tau_u <= 0:
            raise ConfigError("theta, tau_v and tau_u must be positive")
        if self.refractory < 0:
            raise ConfigError("refractory period cannot be negative")


@dataclass
class SimState:
    """Mutable per-step liquid state. One instance per simulation thread."""

    v: np.ndarray            # membrane potential
    u: np.ndarray            # filtered synaptic current
    refrac_left: np.ndarray  # ms remaining in refractory countdown
    spiked: np.ndarray       # bool flags for the current step

    @classmethod
    def zeros(cls, n_liquid: int) -> "SimState":
        return cls(
            v=np.zeros(n_liquid),
            u=np.zeros(n_liquid),
            refrac_left=np.zeros(n_liquid, dtype=np.int64),
            spiked=np.zeros(n_liquid, dtype=bool),
        )

    def reset(self) -> None:
        self.v[:] = 0.0
        self.u[:] = 0.0
        self.refrac_left[:] = 0
        self.spiked[:] = False


def inject_spikes(state: SimState, graph, weights: np.ndarray,
                  presynaptic_spikes: np.ndarray, tau_u: float = 1.0) -> None:
    """Add w/tau_u to each target's synaptic current for every incoming spike.

    ``presynaptic_spikes`` holds global unit ids (inputs first, liquid offset
    by n_input).  Injection order follows ascending spiker order and, within
    a spiker, the graph's edge order, so results are reproducible bitwise.
    """
    if len(presynaptic_spikes) == 0:
        return
    spikes = np.asarray(presynaptic_spikes, dtype=np.int64)
    if spikes.min() < 0 or spikes.max() >= graph.n_units:
        raise StructureError(
            f"presynaptic unit id out of range [0, {graph.n_units})")
    pre_ptr, pre_order, _, _ = graph.edge_csr()
    _, post, _, _, _, _ = graph.edge_arrays()
    edges = _gather_csr(pre_ptr, pre_order, spikes)
    np.add.at(state.u, post[edges], weights[edges] / tau_u)


def _gather_csr(ptr: np.ndarray, order: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """Concatenate CSR slices order[ptr[k]:ptr[k+1]] for each key, in key order."""
    starts = ptr[keys]
    counts = ptr[keys + 1] - starts
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    offsets = np.repeat(np.cumsum(counts) - counts, counts)
    flat = np.repeat(starts, counts) + (np.arange(total) - offsets)
    return order[flat]


def step(state: SimState, params: LifParams, dt: float = DT_MS) -> np.ndarray:
    """Advance the liquid one step; returns indices of neurons spiking now.

    Order within the step: refractory countdown, Euler update of v using the
    current u (refractory neurons hold at reset), exact exponential decay of
    u, threshold detection with reset.
    """
    if dt != DT_MS:
        raise ConfigError("the simulation grid is fixed at dt = 1 ms")

    counting = state.refrac_left > 0
    state.refrac_left[counting] -= 1
    blocked = state.refrac_left > 0

    decay_v = 1.0 - dt / params.tau_v
    state.v *= decay_v
    state.v += (state.u + params.bias) * dt
    state.v[blocked] = 0.0

    state.u *= np.exp(-dt / params.tau_u)

    fire = (state.v >= params.theta) & ~blocked
    state.v[fire] = 0.0
    state.refrac_left[fire] = params.refractory
    state.spiked[:] = fire

    if not np.isfinite(state.v).all() or not np.isfinite(state.u).all():
        raise NumericalError("membrane state diverged to non-finite values")
    return np.nonzero(fire)[0]
