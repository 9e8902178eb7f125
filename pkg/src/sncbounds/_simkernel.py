"""Jitted inner loops of the tandem simulator.

The per-slot dynamics live here; emission sampling stays in numpy on the
python side.  All kernels are nopython and release the GIL so whole
replications can run on worker threads.

Status codes returned by the slot loops:
    0  ok
    1  pending-delay ring full
    2  fifo batch ring full
    3  cumulative counter overflow
"""

import numba
import numpy as np
from numba import njit

COUNTER_LIMIT = np.int64(1) << np.int64(62)


@njit(cache=True, nogil=True)
def chain_states(p_cum, uniforms, state0):
    """Markov state per slot from pre-drawn uniforms (inverse-CDF rows)."""
    L = uniforms.shape[0]
    n = p_cum.shape[0]
    states = np.empty(L, dtype=np.int64)
    s = state0
    for t in range(L):
        u = uniforms[t]
        row = p_cum[s]
        nxt = n - 1
        for x in range(n - 1):
            if u < row[x]:
                nxt = x
                break
        s = nxt
        states[t] = s
    return states


@njit(cache=True, nogil=True)
def run_cross_priority(
    arr,          # (m, L) int64 per-flow arrivals
    srv,          # (n, L) int64 per-server capacities
    first,        # (m,) int64 1-based entry server
    last,         # (m,) int64 1-based exit server
    q,            # (n, m) int64 per-server per-flow queue content
    pend_t,       # (PCAP,) int64 pending measurement slots
    pend_thr,     # (PCAP,) int64 pending arrival counters
    pend_state,   # (2,) int64 [head, size]
    cum,          # (2,) int64 [A1(0,t), D1(0,t)]
    delay_hist,   # (DCAP+1,) int64
    backlog_hist, # (BCAP+1,) int64
    t0,           # global slot index of the chunk start
    warmup,
    steps,
):
    """Cross traffic strictly before flow 1 at every server."""
    m, L = arr.shape
    n = srv.shape[0]
    pcap = pend_t.shape[0]
    dcap = delay_hist.shape[0] - 1
    bcap = backlog_hist.shape[0] - 1
    head, size = pend_state[0], pend_state[1]
    cum_a1, cum_d1 = cum[0], cum[1]
    for i in range(L):
        t = t0 + i
        measure = (t >= warmup) and (t < steps)
        if measure:
            if size >= pcap:
                return 1
            slot = (head + size) % pcap
            pend_t[slot] = t
            pend_thr[slot] = cum_a1
            size += 1
        while size > 0 and pend_thr[head] <= cum_d1:
            d = t - pend_t[head]
            if d > dcap:
                d = dcap
            delay_hist[d] += 1
            head = (head + 1) % pcap
            size -= 1
        for fl in range(m):
            a = arr[fl, i]
            if a > 0:
                q[first[fl] - 1, fl] += a
                if fl == 0:
                    cum_a1 += a
        if cum_a1 > COUNTER_LIMIT:
            return 3
        for j in range(n):
            s = srv[j, i]
            for fl in range(1, m):
                if s <= 0:
                    break
                have = q[j, fl]
                if have <= 0:
                    continue
                take = have if have < s else s
                q[j, fl] = have - take
                s -= take
                if j < last[fl] - 1:
                    q[j + 1, fl] += take
            if s > 0:
                have = q[j, 0]
                if have > 0:
                    take = have if have < s else s
                    q[j, 0] = have - take
                    if j < last[0] - 1:
                        q[j + 1, 0] += take
                    else:
                        cum_d1 += take
        if measure:
            bl = cum_a1 - cum_d1
            if bl > bcap:
                bl = bcap
            backlog_hist[bl] += 1
    pend_state[0], pend_state[1] = head, size
    cum[0], cum[1] = cum_a1, cum_d1
    return 0


@njit(cache=True, nogil=True)
def run_fifo_aggregate(
    arr,
    srv,
    first,
    last,
    bq_flow,      # (n, QCAP) int64 batch flow ids
    bq_units,     # (n, QCAP) int64 batch sizes
    bq_state,     # (n, 2) int64 [head, size] per server
    pend_t,
    pend_thr,
    pend_state,
    cum,
    delay_hist,
    backlog_hist,
    t0,
    warmup,
    steps,
):
    """Aggregate FIFO: batches served in enqueue order across flows.

    Within one slot a server enqueues external arrivals (flow order, so
    flow 1 first) before units forwarded from upstream.
    """
    m, L = arr.shape
    n = srv.shape[0]
    qcap = bq_flow.shape[1]
    pcap = pend_t.shape[0]
    dcap = delay_hist.shape[0] - 1
    bcap = backlog_hist.shape[0] - 1
    head, size = pend_state[0], pend_state[1]
    cum_a1, cum_d1 = cum[0], cum[1]
    for i in range(L):
        t = t0 + i
        measure = (t >= warmup) and (t < steps)
        if measure:
            if size >= pcap:
                return 1
            slot = (head + size) % pcap
            pend_t[slot] = t
            pend_thr[slot] = cum_a1
            size += 1
        while size > 0 and pend_thr[head] <= cum_d1:
            d = t - pend_t[head]
            if d > dcap:
                d = dcap
            delay_hist[d] += 1
            head = (head + 1) % pcap
            size -= 1
        for fl in range(m):
            a = arr[fl, i]
            if a > 0:
                j = first[fl] - 1
                if bq_state[j, 1] >= qcap:
                    return 2
                slot = (bq_state[j, 0] + bq_state[j, 1]) % qcap
                bq_flow[j, slot] = fl
                bq_units[j, slot] = a
                bq_state[j, 1] += 1
                if fl == 0:
                    cum_a1 += a
        if cum_a1 > COUNTER_LIMIT:
            return 3
        for j in range(n):
            s = srv[j, i]
            while s > 0 and bq_state[j, 1] > 0:
                bhead = bq_state[j, 0]
                fl = bq_flow[j, bhead]
                u = bq_units[j, bhead]
                take = u if u < s else s
                s -= take
                if take == u:
                    bq_state[j, 0] = (bhead + 1) % qcap
                    bq_state[j, 1] -= 1
                else:
                    bq_units[j, bhead] = u - take
                if j < last[fl] - 1:
                    if bq_state[j + 1, 1] >= qcap:
                        return 2
                    slot = (bq_state[j + 1, 0] + bq_state[j + 1, 1]) % qcap
                    bq_flow[j + 1, slot] = fl
                    bq_units[j + 1, slot] = take
                    bq_state[j + 1, 1] += 1
                elif fl == 0:
                    cum_d1 += take
        if measure:
            bl = cum_a1 - cum_d1
            if bl > bcap:
                bl = bcap
            backlog_hist[bl] += 1
    pend_state[0], pend_state[1] = head, size
    cum[0], cum[1] = cum_a1, cum_d1
    return 0
