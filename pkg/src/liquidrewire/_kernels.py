"""Hot numeric kernels.

Each kernel is a plain numpy function compiled with numba's ``@njit`` unless
``LIQUIDREWIRE_NUMBA=0`` (see :mod:`liquidrewire._accel`). The uncompiled
originals stay importable under a ``*_py`` alias so the two execution paths
can be benchmarked and cross-checked against each other. Kernels use only
elementwise array expressions and scalar ``math.exp`` so that the compiled
and interpreted paths produce bit-identical results.

Time is handled in integer steps of ``dt_ms`` inside the simulation kernel;
spike step ``s`` means a spike at time ``s * dt_ms``.
"""

import math

import numpy as np

from ._accel import maybe_njit


# ---------------------------------------------------------------------------
# dynamic synapse (release recursion)
# ---------------------------------------------------------------------------

def _tm_step_impl(u_base, d_ms, f_ms, u, r, delta_ms):
    """One release event after ``delta_ms`` of silence.

    ``u``/``r`` are the utilization/resource values used at the previous
    release. Facilitation decays toward the baseline ``u_base``; resources
    recover from the post-release level ``r * (1 - u)``.
    Returns the new (u, r); the released efficacy is their product.
    """
    e_f = math.exp(-delta_ms / f_ms)
    e_d = math.exp(-delta_ms / d_ms)
    u_new = u_base + u * (1.0 - u_base) * e_f
    r_new = 1.0 + (r - u * r - 1.0) * e_d
    return u_new, r_new


tm_step = maybe_njit(_tm_step_impl)
tm_step_py = _tm_step_impl


# ---------------------------------------------------------------------------
# clock-driven LIF simulation
# ---------------------------------------------------------------------------

def _simulate_impl(
    n_steps, dt_ms,
    refr_steps,                      # int32[L]
    v_init, v_th, v_reset,
    decay_m, drive_gain,             # e^{-dt/tau_m}, R*(1-decay_m)
    i_bg,
    group_decay,                     # float64[G] per-step synaptic decay
    pre_ptr, s_post, s_group, s_amp, s_delay_steps, s_u_base, s_d_ms, s_f_ms,
    line_ptr, i_post, i_group, i_amp, i_delay_steps,
    ev_step, ev_line,                # input spikes sorted by (step, line)
    out_ids, out_steps,              # pre-sized output buffers
    record_v, v_trace,
):
    L = refr_steps.shape[0]
    G = group_decay.shape[0]
    S = s_post.shape[0]
    M = ev_step.shape[0]
    cap = out_ids.shape[0]

    max_d = 1
    for k in range(S):
        if s_delay_steps[k] > max_d:
            max_d = s_delay_steps[k]
    for k in range(i_delay_steps.shape[0]):
        if i_delay_steps[k] > max_d:
            max_d = i_delay_steps[k]
    ring_len = max_d + 2

    v = np.full(L, v_init)
    refr = np.zeros(L, np.int64)
    cur = np.zeros((G, L))
    ring = np.zeros((ring_len, G, L))

    tm_u = s_u_base.copy()
    tm_r = np.ones(S)
    tm_last = np.full(S, -1, np.int64)

    count = 0
    ptr = 0
    # input spikes at step 0 only schedule future arrivals
    while ptr < M and ev_step[ptr] == 0:
        line = ev_line[ptr]
        for k in range(line_ptr[line], line_ptr[line + 1]):
            a = i_delay_steps[k]
            ring[a % ring_len, i_group[k], i_post[k]] += i_amp[k]
        ptr += 1
    if record_v:
        v_trace[0] = v

    for n in range(n_steps):
        step = n + 1
        # total drive over the interval [n, n+1)*dt, held constant
        acc = cur[0].copy()
        for g in range(1, G):
            acc = acc + cur[g]
        drive = acc + i_bg
        active = refr == 0
        v = np.where(active, v * decay_m + drive_gain * drive, v)
        spiking = active & (v >= v_th)
        # advance synaptic currents to the end of the interval
        for g in range(G):
            cur[g] = cur[g] * group_decay[g]
        refr = np.maximum(refr - 1, 0)

        spk_ids = np.where(spiking)[0]
        for si in range(spk_ids.shape[0]):
            i = spk_ids[si]
            v[i] = v_reset
            refr[i] = refr_steps[i]
            if count >= cap:
                return -1
            out_ids[count] = i
            out_steps[count] = step
            count += 1
            for k in range(pre_ptr[i], pre_ptr[i + 1]):
                if tm_last[k] >= 0:
                    delta_ms = (step - tm_last[k]) * dt_ms
                    u_new, r_new = tm_step(
                        s_u_base[k], s_d_ms[k], s_f_ms[k], tm_u[k], tm_r[k], delta_ms)
                else:
                    u_new = s_u_base[k]
                    r_new = 1.0
                tm_u[k] = u_new
                tm_r[k] = r_new
                tm_last[k] = step
                a = step + s_delay_steps[k]
                ring[a % ring_len, s_group[k], s_post[k]] += s_amp[k] * u_new * r_new

        while ptr < M and ev_step[ptr] == step:
            line = ev_line[ptr]
            for k in range(line_ptr[line], line_ptr[line + 1]):
                a = step + i_delay_steps[k]
                ring[a % ring_len, i_group[k], i_post[k]] += i_amp[k]
            ptr += 1

        row = step % ring_len
        for g in range(G):
            cur[g] = cur[g] + ring[row, g]
            ring[row, g] = 0.0
        if record_v:
            v_trace[step] = v

    return count


simulate = maybe_njit(_simulate_impl)
simulate_py = _simulate_impl


# ---------------------------------------------------------------------------
# trace-based fitness, single online pass over the event stream
# ---------------------------------------------------------------------------

def _fitness_stream_impl(
    ev_t, ev_kind, ev_neuron, ev_group,   # kind 0 = arrival, 1 = spike
    n_groups, i0, tau_s, tau_f,
    in_ptr, in_syn, in_pre, in_group,     # plastic synapses CSR by post
    out_ptr, out_syn, out_post, out_group,  # same synapses CSR by pre
    c,                                    # float64[S_plastic], zeroed
):
    L = in_ptr.shape[0] - 1
    pre_a = np.zeros((L, n_groups))
    pre_b = np.zeros((L, n_groups))
    pre_t = np.zeros((L, n_groups))
    post_a = np.zeros(L)
    post_b = np.zeros(L)
    post_t = np.zeros(L)

    for e in range(ev_t.shape[0]):
        t = ev_t[e]
        i = ev_neuron[e]
        if ev_kind[e] == 0:
            # pre-synaptic arrival: depress every plastic synapse out of i
            g = ev_group[e]
            for p in range(out_ptr[i], out_ptr[i + 1]):
                if out_group[p] != g:
                    continue
                tgt = out_post[p]
                dt_ = t - post_t[tgt]
                trace = post_a[tgt] * math.exp(-dt_ / tau_s) - post_b[tgt] * math.exp(-dt_ / tau_f)
                c[out_syn[p]] -= i0 * trace
            dt_ = t - pre_t[i, g]
            pre_a[i, g] = pre_a[i, g] * math.exp(-dt_ / tau_s) + 1.0
            pre_b[i, g] = pre_b[i, g] * math.exp(-dt_ / tau_f) + 1.0
            pre_t[i, g] = t
        else:
            # post-synaptic spike: potentiate every plastic synapse into i
            for p in range(in_ptr[i], in_ptr[i + 1]):
                j = in_pre[p]
                g = in_group[p]
                dt_ = t - pre_t[j, g]
                trace = pre_a[j, g] * math.exp(-dt_ / tau_s) - pre_b[j, g] * math.exp(-dt_ / tau_f)
                c[in_syn[p]] += i0 * trace
            dt_ = t - post_t[i]
            post_a[i] = post_a[i] * math.exp(-dt_ / tau_s) + 1.0
            post_b[i] = post_b[i] * math.exp(-dt_ / tau_f) + 1.0
            post_t[i] = t


fitness_stream = maybe_njit(_fitness_stream_impl)
fitness_stream_py = _fitness_stream_impl


# ---------------------------------------------------------------------------
# direct double-sum fitness for one (pre, post) pair
# ---------------------------------------------------------------------------

def _pair_fitness_impl(pre_times, post_times, delay_ms, i0, tau_s, tau_f):
    """Potentiation minus depression from two sorted spike-time lists."""
    c = 0.0
    # potentiation: at every post spike, the kernel-filtered pre arrivals
    for a in range(post_times.shape[0]):
        t = post_times[a]
        for b in range(pre_times.shape[0]):
            lag = t - pre_times[b] - delay_ms
            if lag > 0.0:
                c += i0 * (math.exp(-lag / tau_s) - math.exp(-lag / tau_f))
    # depression: at every pre arrival, the kernel-filtered post history
    for b in range(pre_times.shape[0]):
        t = pre_times[b] + delay_ms
        for a in range(post_times.shape[0]):
            lag = t - post_times[a]
            if lag > 0.0:
                c -= i0 * (math.exp(-lag / tau_s) - math.exp(-lag / tau_f))
    return c


pair_fitness = maybe_njit(_pair_fitness_impl)
pair_fitness_py = _pair_fitness_impl


def _pair_fitness_batch_impl(times_flat, nrn_ptr, post_id, pre_ids, delay_ms,
                             i0, tau_s, tau_f, out):
    post_times = times_flat[nrn_ptr[post_id]:nrn_ptr[post_id + 1]]
    for n in range(pre_ids.shape[0]):
        j = pre_ids[n]
        pre_times = times_flat[nrn_ptr[j]:nrn_ptr[j + 1]]
        out[n] = pair_fitness(pre_times, post_times, delay_ms, i0, tau_s, tau_f)


pair_fitness_batch = maybe_njit(_pair_fitness_batch_impl)
pair_fitness_batch_py = _pair_fitness_batch_impl


# ---------------------------------------------------------------------------
# exponential state filter sampled on a time grid
# ---------------------------------------------------------------------------

def _filter_states_impl(times_flat, nrn_ptr, sample_times, tau_ms, out):
    """out[s, i] = sum over spikes of neuron i at or before sample s of
    exp(-(t_s - t_spike)/tau)."""
    L = nrn_ptr.shape[0] - 1
    n_samples = sample_times.shape[0]
    for i in range(L):
        acc = 0.0
        last_t = 0.0
        p = nrn_ptr[i]
        end = nrn_ptr[i + 1]
        for s in range(n_samples):
            t = sample_times[s]
            while p < end and times_flat[p] <= t:
                ts = times_flat[p]
                acc = acc * math.exp(-(ts - last_t) / tau_ms) + 1.0
                last_t = ts
                p += 1
            out[s, i] = acc * math.exp(-(t - last_t) / tau_ms)


filter_states_kernel = maybe_njit(_filter_states_impl)
filter_states_kernel_py = _filter_states_impl


# ---------------------------------------------------------------------------
# one-vs-all perceptron epochs
# ---------------------------------------------------------------------------

def _perceptron_epochs_impl(x, labels, weights, rate, order):
    """In-place perceptron updates; ``x`` already carries the bias column.

    ``order`` is (epochs, n_samples) of presentation indices.
    """
    n_classes = weights.shape[0]
    d = weights.shape[1]
    for ep in range(order.shape[0]):
        for oi in range(order.shape[1]):
            s = order[ep, oi]
            for k in range(n_classes):
                act = 0.0
                for f in range(d):
                    act += weights[k, f] * x[s, f]
                predicted = 1.0 if act > 0.0 else 0.0
                target = 1.0 if labels[s] == k else 0.0
                err = target - predicted
                if err != 0.0:
                    for f in range(d):
                        weights[k, f] += rate * err * x[s, f]


perceptron_epochs = maybe_njit(_perceptron_epochs_impl)
perceptron_epochs_py = _perceptron_epochs_impl
