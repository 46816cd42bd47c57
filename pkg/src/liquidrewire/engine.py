"""Clock-driven simulation of the liquid.

LIF membranes integrate with an exact exponential update per fixed ``dt``
step, holding the synaptic drive constant over the step; synaptic currents
decay exponentially per class time constant and jump when a delayed spike
arrives. Threshold crossings are detected at step boundaries and processed in
neuron-index order, so a run is a pure function of (liquid, input, scale).
"""

from dataclasses import dataclass, field
import io
import math

import numpy as np

from . import _kernels
from .liquid import Liquid


class SimulationError(ValueError):
    """Raised for invalid simulation inputs."""


class CalibrationError(RuntimeError):
    """Raised when the weight-scale search cannot reach the target rate band."""


@dataclass
class SpikeRecord:
    """Spikes of one run: per-neuron sorted times plus a time-ordered view."""

    duration_ms: float
    dt_ms: float
    n_neurons: int
    neuron_ptr: np.ndarray       # (L+1,) int64 offsets into neuron_times
    neuron_times: np.ndarray     # flat float64, ascending within each neuron
    spike_ids: np.ndarray        # time-ordered neuron ids
    spike_times: np.ndarray      # time-ordered times (ms)
    input_trains: list = field(default_factory=list)

    @property
    def total_spikes(self) -> int:
        return int(self.spike_ids.shape[0])

    def times_of(self, neuron: int) -> np.ndarray:
        return self.neuron_times[self.neuron_ptr[neuron]:self.neuron_ptr[neuron + 1]]

    def counts(self) -> np.ndarray:
        return np.diff(self.neuron_ptr)

    def mean_rate_hz(self) -> float:
        return self.total_spikes / (self.n_neurons * self.duration_ms * 1e-3)

    def last_spike_ms(self):
        """Time of the last liquid spike, or None if the record is empty."""
        if self.total_spikes == 0:
            return None
        return float(self.spike_times[-1])

    def fired_ids(self) -> np.ndarray:
        return np.flatnonzero(np.diff(self.neuron_ptr) > 0)

    def to_text(self) -> str:
        out = io.StringIO()
        for i in range(self.total_spikes):
            out.write(f"{self.spike_ids[i]} {self.spike_times[i]:.4f}\n")
        return out.getvalue()

    def equals(self, other: "SpikeRecord") -> bool:
        return (
            self.duration_ms == other.duration_ms
            and self.dt_ms == other.dt_ms
            and self.n_neurons == other.n_neurons
            and np.array_equal(self.spike_ids, other.spike_ids)
            and np.array_equal(self.spike_times, other.spike_times)
        )


def _bin_steps(times_ms: np.ndarray, dt_ms: float) -> np.ndarray:
    return np.rint(np.asarray(times_ms, dtype=np.float64) / dt_ms).astype(np.int64)


def run(liquid: Liquid, input_trains, duration_ms: float, weight_scale: float = 1.0,
        record_membrane: bool = False, use_jit: bool = True):
    """Simulate the liquid for ``duration_ms`` and return a SpikeRecord
    (and the membrane trace when ``record_membrane``)."""
    cfg = liquid.config
    if duration_ms <= 0.0:
        raise SimulationError("duration must be > 0")
    input_trains = [np.asarray(t, dtype=np.float64) for t in input_trains]
    if len(input_trains) != cfg.n_input_lines:
        raise SimulationError(
            f"expected {cfg.n_input_lines} input trains, got {len(input_trains)}")
    for li, train in enumerate(input_trains):
        if train.size and (train.min() < 0.0 or train.max() > duration_ms):
            raise SimulationError(f"input line {li} has spikes outside [0, {duration_ms}] ms")

    dt = cfg.dt_ms
    n_steps = int(round(duration_ms / dt))
    if n_steps < 1:
        raise SimulationError("duration shorter than one time step")
    L = liquid.n_neurons

    order = np.lexsort((liquid.syn_post, liquid.syn_pre))
    s_pre = liquid.syn_pre[order]
    s_post = liquid.syn_post[order].astype(np.int64)
    s_amp = liquid.syn_w[order] * weight_scale
    s_delay_steps = np.maximum(_bin_steps(liquid.syn_delay_ms[order], dt), 1)
    s_tau = liquid.syn_tau_ms[order]
    s_u = liquid.syn_u_base[order]
    s_d = liquid.syn_d_ms[order]
    s_f = liquid.syn_f_ms[order]
    pre_ptr = np.zeros(L + 1, np.int64)
    np.cumsum(np.bincount(s_pre, minlength=L), out=pre_ptr[1:])

    in_order = np.lexsort((liquid.in_post, liquid.in_line))
    i_post = liquid.in_post[in_order].astype(np.int64)
    i_amp = liquid.in_w[in_order] * weight_scale
    i_delay_steps = np.maximum(_bin_steps(liquid.in_delay_ms[in_order], dt), 1)
    i_tau = liquid.in_tau_ms[in_order]
    n_lines = cfg.n_input_lines
    line_ptr = np.zeros(n_lines + 1, np.int64)
    if i_post.size:
        np.cumsum(np.bincount(liquid.in_line[in_order], minlength=n_lines), out=line_ptr[1:])

    taus = np.unique(np.concatenate([s_tau, i_tau])) if (s_tau.size or i_tau.size) \
        else np.array([cfg.tau_syn_exc_ms])
    group_decay = np.exp(-dt / taus)
    s_group = np.searchsorted(taus, s_tau).astype(np.int64)
    i_group = np.searchsorted(taus, i_tau).astype(np.int64)

    ev = [(int(s), li) for li, train in enumerate(input_trains) for s in _bin_steps(train, dt)]
    if ev:
        ev_arr = np.array(sorted(ev), dtype=np.int64)
        ev_step, ev_line = ev_arr[:, 0].copy(), ev_arr[:, 1].copy()
    else:
        ev_step = np.zeros(0, np.int64)
        ev_line = np.zeros(0, np.int64)

    refr_steps = np.where(liquid.is_exc,
                          _bin_steps(np.array([cfg.refractory_exc_ms]), dt)[0],
                          _bin_steps(np.array([cfg.refractory_inh_ms]), dt)[0]).astype(np.int64)
    cap = int(np.sum(n_steps // (refr_steps + 1) + 2))
    out_ids = np.zeros(cap, np.int64)
    out_steps = np.zeros(cap, np.int64)

    decay_m = math.exp(-dt / cfg.tau_membrane_ms)
    drive_gain = cfg.input_resistance_mohm * (1.0 - decay_m)
    v_trace = np.zeros((n_steps + 1, L)) if record_membrane else np.zeros((1, 1))

    kernel = _kernels.simulate if use_jit else _kernels.simulate_py
    count = kernel(
        n_steps, dt, refr_steps,
        cfg.v_reset_mv, cfg.v_threshold_mv, cfg.v_reset_mv,
        decay_m, drive_gain, cfg.i_background_na,
        group_decay,
        pre_ptr, s_post, s_group, s_amp, s_delay_steps, s_u, s_d, s_f,
        line_ptr, i_post, i_group, i_amp, i_delay_steps,
        ev_step, ev_line,
        out_ids, out_steps, record_membrane, v_trace,
    )
    if count < 0:
        raise SimulationError("spike buffer overflow; refractory accounting is broken")

    ids = out_ids[:count]
    steps = out_steps[:count]
    by_neuron = np.lexsort((steps, ids))
    neuron_ptr = np.zeros(L + 1, np.int64)
    np.cumsum(np.bincount(ids, minlength=L), out=neuron_ptr[1:])
    record = SpikeRecord(
        duration_ms=float(n_steps * dt), dt_ms=dt, n_neurons=L,
        neuron_ptr=neuron_ptr,
        neuron_times=steps[by_neuron] * dt,
        spike_ids=ids.copy(), spike_times=steps * dt,
        input_trains=[t.copy() for t in input_trains],
    )
    if record_membrane:
        return record, v_trace
    return record


@dataclass
class SynapseState:
    """Mutable release state of one dynamic synapse."""

    u_base: float
    d_ms: float
    f_ms: float
    u: float = None
    r: float = 1.0
    t_last_ms: float = -math.inf

    def __post_init__(self):
        if self.u is None:
            self.u = self.u_base


def dynamic_synapse_event(state: SynapseState, t_spike_ms: float) -> float:
    """Process one pre-synaptic spike; returns the released efficacy u*r."""
    if t_spike_ms < state.t_last_ms:
        raise ValueError("spike times must be non-decreasing")
    delta = t_spike_ms - state.t_last_ms
    u_new, r_new = _kernels.tm_step_py(state.u_base, state.d_ms, state.f_ms,
                                       state.u, state.r, delta)
    state.u, state.r, state.t_last_ms = u_new, r_new, t_spike_ms
    return u_new * r_new


def calibrate_input_scale(liquid: Liquid, input_trains, duration_ms: float,
                          rate_band=(5.0, 20.0), max_evals: int = 40) -> float:
    """Binary-search the global weight scale until the mean firing rate over
    the reference pattern falls inside ``rate_band`` (Hz per neuron)."""
    trains = [np.asarray(t, dtype=np.float64) for t in input_trains]
    if not any(t.size for t in trains):
        raise CalibrationError("reference pattern is empty")
    lo_rate, hi_rate = rate_band

    evals = 0

    def rate_at(scale: float) -> float:
        nonlocal evals
        evals += 1
        rec = run(liquid, trains, duration_ms, weight_scale=scale)
        return rec.mean_rate_hz()

    lo, hi = 0.0, 1.0
    r = rate_at(hi)
    while r < lo_rate and evals < max_evals:
        if r > 0.0:
            lo = hi
        hi *= 2.0
        if hi > 2.0 ** 24:
            raise CalibrationError("liquid stays below the rate band at any scale")
        r = rate_at(hi)
    if lo_rate <= r <= hi_rate:
        return hi
    if r < lo_rate:
        raise CalibrationError(f"rate band not reached after {max_evals} evaluations")
    # r > hi_rate: bisect between a known-low lo and known-high hi
    while evals < max_evals:
        mid = 0.5 * (lo + hi)
        r = rate_at(mid)
        if lo_rate <= r <= hi_rate:
            return mid
        if r < lo_rate:
            lo = mid
        else:
            hi = mid
    raise CalibrationError(
        f"rate band {rate_band} not reached after {max_evals} evaluations "
        "(liquid saturates or stays silent)")
