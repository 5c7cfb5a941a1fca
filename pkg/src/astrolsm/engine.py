"""Compiled simulation core fusing LIF, STDP, gating and modulation.

The module-level operations in :mod:`dynamics`, :mod:`plasticity` and
:mod:`astrocyte` define the per-step semantics; this kernel replays them in
the exact same order and arithmetic so that long runs (snapshot streams,
spike-count collection) execute at compiled speed.  ``tests/test_engine.py``
checks bit-for-bit agreement against the composed reference operations.

Per-step order, with t the current millisecond:

1. inject input spikes at t, then liquid spikes from t-1 (current += w/tau_u)
2. LIF update and threshold detection (see :func:`dynamics.step`)
3. astrocyte integration on this step's sampled counts (when enabled)
4. rate-estimate update and gate evaluation (when gating is enabled)
5. trace decay, weight deltas from this step's spikes, clamp, trace bumps
6. per-ms decay of the potentiation rate and astrocyte bias (when enabled)

Recurrent spikes therefore reach their targets on the following step, while
STDP pairs spikes at emission time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .astrocyte import AstrocyteParams, AstrocyteState
from .dynamics import LifParams
from .errors import NumericalError
from .plasticity import ApStdpParams, StdpParams


@njit(cache=True)
def _run_steps(
    T, n_in, n_liq,
    in_ptr, in_ids,
    pre_ptr, pre_order, post_ptr, post_order,
    edge_pre, edge_post, edge_lo, edge_hi, w,
    theta, decay_v, decay_u, inv_tau_u, bias, dt, refractory,
    v, u, refrac, prev_spiked, spiked,
    plastic, t_pre, t_post, decay_tp, decay_tm, bump_pre, bump_post,
    lr_minus_fixed,
    astro_on, astro_state, tau_astro, w_astro, liq_mask, inp_mask,
    decay_mod, mod_rate, mod_state,
    ap_on, rate_est, decay_c, c_theta, delta_c, p_apply, gate_seed,
    counts, liq_tot, inp_tot,
    record_raster, raster,
    record_drive, drive,
    record_astro, astro_trace,
    touched,
):
    if ap_on and p_apply < 1.0:
        np.random.seed(gate_seed)
    for t in range(T):
        # 1. synaptic injection: input spikes at t, then liquid spikes from t-1
        s0, s1 = in_ptr[t], in_ptr[t + 1]
        for k in range(s0, s1):
            s = in_ids[k]
            for j in range(pre_ptr[s], pre_ptr[s + 1]):
                e = pre_order[j]
                u[edge_post[e]] += w[e] * inv_tau_u
                if record_drive:
                    drive[t, edge_post[e]] += w[e] * inv_tau_u
        for q in range(n_liq):
            if prev_spiked[q]:
                unit = n_in + q
                for j in range(pre_ptr[unit], pre_ptr[unit + 1]):
                    e = pre_order[j]
                    u[edge_post[e]] += w[e] * inv_tau_u
                    if record_drive:
                        drive[t, edge_post[e]] += w[e] * inv_tau_u

        # 2. LIF update and spike detection
        n_spikes = 0
        for q in range(n_liq):
            if refrac[q] > 0:
                refrac[q] -= 1
            a = v[q] * decay_v
            b = (u[q] + bias) * dt
            nv = a + b
            if refrac[q] > 0:
                nv = 0.0
            u[q] *= decay_u
            if refrac[q] == 0 and nv >= theta:
                nv = 0.0
                refrac[q] = refractory
                spiked[q] = True
                n_spikes += 1
                counts[q] += 1
                if record_raster:
                    raster[t, q] = 1
            else:
                spiked[q] = False
            v[q] = nv
        liq_tot[t] = n_spikes
        inp_tot[t] = s1 - s0

        # 3. astrocyte integration on sampled counts
        if astro_on:
            nl = 0
            for q in range(n_liq):
                if spiked[q] and liq_mask[q]:
                    nl += 1
            ni = 0
            for k in range(s0, s1):
                if inp_mask[in_ids[k]]:
                    ni += 1
            a_val = astro_state[0] + (dt / tau_astro) * (mod_state[1] - astro_state[0]) \
                + (w_astro * (nl - ni)) / tau_astro
            astro_state[0] = max(0.0, a_val)
        if record_astro:
            astro_trace[t] = astro_state[0]

        if plastic:
            lr_plus = mod_state[0]
            lr_minus = astro_state[0] if astro_on else lr_minus_fixed

            # 4. rate estimates and gate state
            if ap_on:
                for q in range(n_liq):
                    rate_est[q] *= decay_c
                    if spiked[q]:
                        rate_est[q] += 1.0

            # 5a. trace decay (before weight deltas; this step's bumps come after)
            for s in range(n_in + n_liq):
                t_pre[s] *= decay_tp
            for q in range(n_liq):
                t_post[q] *= decay_tm

            # 5b. weight deltas, then clamp every touched edge
            n_touch = 0
            for q in range(n_liq):
                if spiked[q]:
                    for j in range(post_ptr[q], post_ptr[q + 1]):
                        e = post_order[j]
                        if ap_on and not _gate(rate_est[edge_post[e]], c_theta,
                                               delta_c, p_apply):
                            continue
                        w[e] += lr_plus * t_pre[edge_pre[e]]
                        touched[n_touch] = e
                        n_touch += 1
            for k in range(s0, s1):
                s = in_ids[k]
                for j in range(pre_ptr[s], pre_ptr[s + 1]):
                    e = pre_order[j]
                    if ap_on and not _gate(rate_est[edge_post[e]], c_theta,
                                           delta_c, p_apply):
                        continue
                    w[e] -= lr_minus * t_post[edge_post[e]]
                    touched[n_touch] = e
                    n_touch += 1
            for q in range(n_liq):
                if spiked[q]:
                    unit = n_in + q
                    for j in range(pre_ptr[unit], pre_ptr[unit + 1]):
                        e = pre_order[j]
                        if ap_on and not _gate(rate_est[edge_post[e]], c_theta,
                                               delta_c, p_apply):
                            continue
                        w[e] -= lr_minus * t_post[edge_post[e]]
                        touched[n_touch] = e
                        n_touch += 1
            for k in range(n_touch):
                e = touched[k]
                if w[e] < edge_lo[e]:
                    w[e] = edge_lo[e]
                elif w[e] > edge_hi[e]:
                    w[e] = edge_hi[e]

            # 5c. trace bumps for this step's spikes
            for k in range(s0, s1):
                t_pre[in_ids[k]] += bump_pre
            for q in range(n_liq):
                if spiked[q]:
                    t_pre[n_in + q] += bump_pre
                    t_post[q] += bump_post

            # 6. per-ms modulation decay during sample presentation
            if decay_mod:
                mod_state[0] *= mod_rate
                mod_state[1] *= mod_rate

        for q in range(n_liq):
            prev_spiked[q] = spiked[q]

    ok = True
    for q in range(n_liq):
        if not (np.isfinite(v[q]) and np.isfinite(u[q])):
            ok = False
    return ok


@njit(cache=True, inline="always")
def _gate(c, c_theta, delta_c, p_apply):
    if abs(c - c_theta) > delta_c:
        return False
    if p_apply >= 1.0:
        return True
    if p_apply <= 0.0:
        return False
    return np.random.random() < p_apply


@dataclass
class RunResult:
    counts: np.ndarray       # spikes per liquid neuron over the run
    liq_total: np.ndarray    # liquid spikes per step (full population)
    inp_total: np.ndarray    # input spikes per step (full population)
    raster: np.ndarray | None = None
    drive: np.ndarray | None = None       # injected current per step/neuron
    astro_trace: np.ndarray | None = None


class LiquidEngine:
    """Stateful wrapper binding a graph and parameter set to the kernel.

    The engine owns all mutable simulation state (potentials, traces,
    weights, modulation scalars) so that a snapshot stream can carry state
    across calls while spike-count collection resets per sample.
    """

    def __init__(self, graph, lif: LifParams | None = None,
                 stdp: StdpParams | None = None,
                 ap: ApStdpParams | None = None,
                 astro: AstrocyteParams | None = None,
                 astro_state: AstrocyteState | None = None):
        self.graph = graph
        self.lif = lif or LifParams()
        self.stdp = stdp or StdpParams()
        self.ap = ap
        self.astro = astro
        pre, post, sign, lo, hi, cls = graph.edge_arrays()
        self._edge_pre, self._edge_post = pre, post
        self._edge_lo, self._edge_hi = lo, hi
        p_ptr, p_ord, q_ptr, q_ord = graph.edge_csr()
        self._pre_ptr, self._pre_order = p_ptr, p_ord
        self._post_ptr, self._post_order = q_ptr, q_ord

        n_liq, n_units = graph.n_liquid, graph.n_units
        self.w = np.zeros(graph.n_edges)
        self.v = np.zeros(n_liq)
        self.u = np.zeros(n_liq)
        self.refrac = np.zeros(n_liq, dtype=np.int64)
        self.prev_spiked = np.zeros(n_liq, dtype=np.bool_)
        self.spiked = np.zeros(n_liq, dtype=np.bool_)
        self.t_pre = np.zeros(n_units)
        self.t_post = np.zeros(n_liq)
        self.rate_est = np.zeros(n_liq)
        # an edge can be touched by both the potentiation and depression pass
        self._touched = np.zeros(max(1, 2 * graph.n_edges), dtype=np.int64)

        b0 = self.astro.b_astro if self.astro else 0.15
        self.astro_value = np.array([b0])
        self.modulation = np.array([self.stdp.lr_plus, b0])
        if astro_state is not None:
            self._liq_mask = astro_state.liquid_mask(n_liq)
            self._inp_mask = astro_state.input_mask(graph.n_input)
        else:
            self._liq_mask = np.ones(n_liq, dtype=np.bool_)
            self._inp_mask = np.ones(graph.n_input, dtype=np.bool_)

    def set_weights(self, weights: np.ndarray) -> None:
        self.w[:] = weights

    def weights_copy(self) -> np.ndarray:
        return self.w.copy()

    def reset_sample_state(self) -> None:
        """Fresh per-sample state: potentials, traces, refractoriness,
        carried spikes, astrocyte output and modulation scalars."""
        self.v[:] = 0.0
        self.u[:] = 0.0
        self.refrac[:] = 0
        self.prev_spiked[:] = False
        self.spiked[:] = False
        self.t_pre[:] = 0.0
        self.t_post[:] = 0.0
        self.rate_est[:] = 0.0
        b0 = self.astro.b_astro if self.astro else 0.15
        self.astro_value[0] = b0
        self.modulation[0] = self.stdp.lr_plus
        self.modulation[1] = b0

    def run(self, in_ptr: np.ndarray, in_ids: np.ndarray, T: int, *,
            plastic: bool = False, astro_on: bool = False,
            decay_mod: bool = False, ap_on: bool = False,
            record_raster: bool = False, record_drive: bool = False,
            record_astro: bool = False, gate_seed: int = 0) -> RunResult:
        """Simulate T steps of one input segment; state carries across calls."""
        lif, stdp = self.lif, self.stdp
        counts = np.zeros(self.graph.n_liquid, dtype=np.int64)
        liq_tot = np.zeros(T, dtype=np.int64)
        inp_tot = np.zeros(T, dtype=np.int64)
        raster = np.zeros((T, self.graph.n_liquid), dtype=np.uint8) if record_raster \
            else np.zeros((1, 1), dtype=np.uint8)
        drive = np.zeros((T, self.graph.n_liquid)) if record_drive \
            else np.zeros((1, 1))
        astro_trace = np.zeros(T) if record_astro else np.zeros(1)
        ap = self.ap
        astro = self.astro
        ok = _run_steps(
            T, self.graph.n_input, self.graph.n_liquid,
            in_ptr, in_ids,
            self._pre_ptr, self._pre_order, self._post_ptr, self._post_order,
            self._edge_pre, self._edge_post, self._edge_lo, self._edge_hi, self.w,
            lif.theta, 1.0 - 1.0 / lif.tau_v, np.exp(-1.0 / lif.tau_u),
            1.0 / lif.tau_u, lif.bias, 1.0, lif.refractory,
            self.v, self.u, self.refrac, self.prev_spiked, self.spiked,
            plastic, self.t_pre, self.t_post,
            np.exp(-1.0 / stdp.tau_plus), np.exp(-1.0 / stdp.tau_minus),
            stdp.a_plus, stdp.a_minus,
            stdp.lr_minus,
            astro_on, self.astro_value,
            astro.tau_astro if astro else 1.0,
            astro.w_astro if astro else 0.0,
            self._liq_mask, self._inp_mask,
            decay_mod, astro.decay_rate if astro else 0.99, self.modulation,
            ap_on, self.rate_est,
            np.exp(-1.0 / ap.tau_c) if ap else 1.0,
            ap.c_theta if ap else 0.0, ap.delta_c if ap else 0.0,
            ap.p if ap else 1.0, gate_seed,
            counts, liq_tot, inp_tot,
            record_raster, raster,
            record_drive, drive,
            record_astro, astro_trace,
            self._touched,
        )
        if not ok:
            raise NumericalError("liquid state diverged to non-finite values")
        return RunResult(
            counts=counts, liq_total=liq_tot, inp_total=inp_tot,
            raster=raster if record_raster else None,
            drive=drive if record_drive else None,
            astro_trace=astro_trace if record_astro else None,
        )
