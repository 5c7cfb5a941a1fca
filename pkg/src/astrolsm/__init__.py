"""Astrocyte-modulated liquid state machines.

A spiking-reservoir simulator with an astrocyte feedback loop that
self-organizes the liquid near the critical branching regime, a linear
readout trained on spike counts, and diagnostics for branching dynamics,
excitation/inhibition balance and kernel quality.
"""

from .astrocyte import AstrocyteParams, AstrocyteState, astro_step, bf_proxy
from .dynamics import LifParams, SimState
from .pipeline import ModelVariant, SpikeCountMatrix, collect_counts, init_lsm, init_with_stdp
from .plasticity import ApStdpParams, PlasticityState, StdpParams
from .readout import ReadoutModel, TrainSchedule, evaluate, train
from .topology import LiquidGraph, TopologyConfig, build_liquid

__version__ = "0.1.0"

__all__ = [
    "AstrocyteParams", "AstrocyteState", "astro_step", "bf_proxy",
    "LifParams", "SimState",
    "ModelVariant", "SpikeCountMatrix", "collect_counts", "init_lsm", "init_with_stdp",
    "ApStdpParams", "PlasticityState", "StdpParams",
    "ReadoutModel", "TrainSchedule", "evaluate", "train",
    "LiquidGraph", "TopologyConfig", "build_liquid",
    "__version__",
]
