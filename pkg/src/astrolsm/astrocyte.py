"""Leaky-integrate-and-modulate unit steering STDP depression.

A single integrator watches spike counts from (a sampled subset of) the
input and liquid populations and continuously outputs the STDP depression
learning rate.  Liquid spikes push the output up, input spikes pull it
down, and the leak relaxes it toward a bias tracking the potentiation rate.
With dt = 1 ms the update is

    a <- a + (dt/tau) * (b - a) + (w/tau) * (n_liquid - n_input)

which makes the zero-drive fixed point exactly ``b`` and the steady output
under a sustained mean excess r spikes/ms equal ``b + w * r``.  Because the
weight-drift balance of symmetric-trace STDP vanishes when depression equals
potentiation, the closed loop settles where liquid output roughly matches
input drive, i.e. near a liquid/input spike ratio of one.

The ratio itself (liquid count over input count per window) doubles as a
cheap network-level criticality estimate, computable online.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import DT_MS
from .errors import ConfigError

MODULATION_INIT = 0.15   # potentiation rate and astrocyte bias at sample onset
MODULATION_DECAY = 0.99  # per-ms decay applied during sample presentation


@dataclass
class AstrocyteParams:
    tau_astro: float = 100.0   # ms; integrator time constant
    w_astro: float = 0.01      # neuron-astrocyte coupling weight
    b_astro: float = MODULATION_INIT
    density: float = 1.0       # fraction of input and liquid neurons sampled
    decay_rate: float = MODULATION_DECAY

    def __post_init__(self):
        if self.tau_astro <= 0:
            raise ConfigError("tau_astro must be positive")
        if self.w_astro < 0:
            raise ConfigError("w_astro cannot be negative")
        if not 0.0 < self.density <= 1.0:
            raise ConfigError("density must lie in (0, 1]")


@dataclass
class AstrocyteState:
    a_minus: float                 # current modulation output
    sampled_liquid: np.ndarray     # liquid indices watched by the astrocyte
    sampled_input: np.ndarray      # input indices watched

    @classmethod
    def create(cls, graph, params: AstrocyteParams,
               rng: np.random.Generator) -> "AstrocyteState":
        """Draw the watched subsets once per liquid per seeded run."""
        n_l = max(1, int(round(params.density * graph.n_liquid)))
        n_i = max(1, int(round(params.density * graph.n_input)))
        sl = np.sort(rng.choice(graph.n_liquid, size=n_l, replace=False))
        si = np.sort(rng.choice(graph.n_input, size=n_i, replace=False))
        return cls(a_minus=params.b_astro, sampled_liquid=sl, sampled_input=si)

    def liquid_mask(self, n_liquid: int) -> np.ndarray:
        m = np.zeros(n_liquid, dtype=bool)
        m[self.sampled_liquid] = True
        return m

    def input_mask(self, n_input: int) -> np.ndarray:
        m = np.zeros(n_input, dtype=bool)
        m[self.sampled_input] = True
        return m


def astro_step(state: AstrocyteState, params: AstrocyteParams,
               n_liquid_spikes: int, n_input_spikes: int,
               dt: float = DT_MS, b_astro: float | None = None) -> float:
    """Advance the integrator one step and return the depression rate.

    Spike counts must come from the astrocyte's sampled subsets.  The output
    is clamped at zero: a negative depression rate would invert the
    plasticity rule.  ``b_astro`` overrides the parameter bias when the bias
    itself is being decayed during a sample presentation.
    """
    b = params.b_astro if b_astro is None else b_astro
    drive = params.w_astro * (n_liquid_spikes - n_input_spikes)
    a = state.a_minus + (dt / params.tau_astro) * (b - state.a_minus) \
        + drive / params.tau_astro
    state.a_minus = max(0.0, a)
    return state.a_minus


def bf_proxy(n_liquid_spikes: int, n_input_spikes: int) -> float | None:
    """Liquid/input spike-count ratio over a window; None when undefined.

    A window with zero input spikes has no defined ratio (callers skip it).
    """
    if n_input_spikes == 0:
        return None
    return n_liquid_spikes / n_input_spikes


def decay_modulation(a_plus: float, b_astro: float,
                     rate: float = MODULATION_DECAY) -> tuple[float, float]:
    """Per-ms multiplicative decay of the potentiation rate and astrocyte bias.

    Applied once per millisecond while a sample is being presented; both
    values are reset to :data:`MODULATION_INIT` at each new sample.
    """
    return a_plus * rate, b_astro * rate
