"""Discrete-time Monte-Carlo simulation of the tandem network.

Every replication runs the slotted dynamics with its own counter-based
random streams: stream (seed, replication, process) is a Philox generator
keyed by exactly those three numbers, so results are bit-reproducible and
replications are independent by construction.  Per process and chunk the
draw order is fixed: one uniform for the initial stationary state of a
multi-state chain, then per chunk the state-transition uniforms followed
by per-state emission draws in state order.

Within a slot: arrivals enqueue, then servers 1..n serve in order, each
forwarding its departures downstream within the same slot.  The virtual
delay of the flow of interest is measured every slot by cumulative
counter crossing, and its backlog is the data it has in flight across the
tandem at the slot end.  Data units are integers (fractional emission
parameters are rounded half-up).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _simkernel
from .errors import CounterOverflowError, ModelError, SncError
from .mmp import Constant, Mmp, Poisson, ScaledBernoulli
from .network import ConstantRate, TandemNetwork

CHUNK = 1 << 16
DELAY_HIST_CAP = 1 << 12
BACKLOG_HIST_CAP = 1 << 14
PENDING_CAP = 1 << 17
FIFO_BATCH_CAP = 1 << 15
DRAIN_SLOTS_CAP = 100_000_000

POLICIES = ("cross_priority", "fifo_aggregate")


def _round_units(x: float) -> int:
    return int(math.floor(x + 0.5))


def thread_count() -> int:
    env = os.environ.get("SNC_THREADS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


@dataclass(frozen=True)
class SimConfig:
    steps: int
    seed: int
    policy: str = "cross_priority"
    replications: int = 1
    warmup: int = 0

    def __post_init__(self):
        if self.steps <= 0:
            raise ModelError(f"steps must be > 0, got {self.steps}")
        if self.replications < 1:
            raise ModelError(f"replications must be >= 1, got {self.replications}")
        if not 0 <= self.warmup <= self.steps:
            raise ModelError("warmup must lie in [0, steps]")
        if self.policy not in POLICIES:
            raise ModelError(f"policy must be one of {POLICIES}, got {self.policy!r}")


@dataclass(frozen=True)
class ReplicationResult:
    delay_hist: np.ndarray
    backlog_hist: np.ndarray
    samples: int


@dataclass(frozen=True)
class SimResult:
    """Tail counts of the measured delay and backlog of flow 1.

    Entry T of delay_tail counts measured slots whose virtual delay was
    >= T (entry 0 equals the sample count); backlog_tail likewise.
    """

    delay_tail: np.ndarray
    backlog_tail: np.ndarray
    samples: int
    replications: tuple[ReplicationResult, ...]

    @staticmethod
    def _merge(reps) -> "SimResult":
        delay = sum(r.delay_hist for r in reps)
        backlog = sum(r.backlog_hist for r in reps)
        return SimResult(
            delay_tail=np.cumsum(delay[::-1])[::-1],
            backlog_tail=np.cumsum(backlog[::-1])[::-1],
            samples=int(sum(r.samples for r in reps)),
            replications=tuple(reps),
        )


# ---------------------------------------------------------------------------
# Random streams and emission sampling
# ---------------------------------------------------------------------------

def _stream(seed: int, replication: int, process: int) -> np.random.Generator:
    key = np.array(
        [np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64((replication << 32) | process)],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))


class _ProcessSampler:
    """Per-replication emission stream of one MMP."""

    def __init__(self, mmp: Mmp, gen: np.random.Generator):
        self._gen = gen
        self._dists = mmp.emissions
        self._multi = mmp.n_states > 1
        if self._multi:
            self._p_cum = np.cumsum(mmp.transition, axis=1)
            self._state = int(np.searchsorted(np.cumsum(mmp.stationary), gen.random()))
        else:
            self._state = 0

    def draw(self, length: int) -> np.ndarray:
        if self._multi:
            u = self._gen.random(length)
            states = _simkernel.chain_states(self._p_cum, u, self._state)
            self._state = int(states[-1])
        else:
            states = None
        out = np.zeros(length, dtype=np.int64)
        for x, dist in enumerate(self._dists):
            mask = slice(None) if states is None else states == x
            count = length if states is None else int(mask.sum())
            if count == 0:
                continue
            if isinstance(dist, Constant):
                out[mask] = _round_units(dist.value)
            elif isinstance(dist, ScaledBernoulli):
                v = _round_units(dist.value)
                out[mask] = np.where(self._gen.random(count) < dist.prob, v, 0)
            elif isinstance(dist, Poisson):
                out[mask] = self._gen.poisson(dist.mean_rate, count)
        return out


class _ConstantSampler:
    def __init__(self, rate: float):
        self._units = _round_units(rate)

    def draw(self, length: int) -> np.ndarray:
        return np.full(length, self._units, dtype=np.int64)


# ---------------------------------------------------------------------------
# One replication
# ---------------------------------------------------------------------------

def _run_replication(net: TandemNetwork, cfg: SimConfig, rep: int) -> ReplicationResult:
    m = len(net.flows)
    n = net.n_servers
    first = np.array([f.first for f in net.flows], dtype=np.int64)
    last = np.array([f.last for f in net.flows], dtype=np.int64)

    samplers = []
    for idx, f in enumerate(net.flows):
        samplers.append(_ProcessSampler(f.arrival, _stream(cfg.seed, rep, idx)))
    for j, srv in enumerate(net.servers):
        if isinstance(srv, ConstantRate):
            samplers.append(_ConstantSampler(srv.rate))
        else:
            samplers.append(_ProcessSampler(srv.mmp, _stream(cfg.seed, rep, m + j)))

    q = np.zeros((n, m), dtype=np.int64)
    bq_flow = np.zeros((n, FIFO_BATCH_CAP), dtype=np.int64)
    bq_units = np.zeros((n, FIFO_BATCH_CAP), dtype=np.int64)
    bq_state = np.zeros((n, 2), dtype=np.int64)
    pend_t = np.zeros(PENDING_CAP, dtype=np.int64)
    pend_thr = np.zeros(PENDING_CAP, dtype=np.int64)
    pend_state = np.zeros(2, dtype=np.int64)
    cum = np.zeros(2, dtype=np.int64)
    delay_hist = np.zeros(DELAY_HIST_CAP + 1, dtype=np.int64)
    backlog_hist = np.zeros(BACKLOG_HIST_CAP + 1, dtype=np.int64)

    fifo = cfg.policy == "fifo_aggregate"
    t0 = 0
    while t0 < cfg.steps or pend_state[1] > 0:
        if t0 >= cfg.steps + DRAIN_SLOTS_CAP:
            raise SncError("drain phase did not finish; system looks unstable")
        arr = np.empty((m, CHUNK), dtype=np.int64)
        srv = np.empty((n, CHUNK), dtype=np.int64)
        for idx in range(m):
            arr[idx] = samplers[idx].draw(CHUNK)
        for j in range(n):
            srv[j] = samplers[m + j].draw(CHUNK)
        if fifo:
            status = _simkernel.run_fifo_aggregate(
                arr, srv, first, last, bq_flow, bq_units, bq_state,
                pend_t, pend_thr, pend_state, cum, delay_hist, backlog_hist,
                t0, cfg.warmup, cfg.steps,
            )
        else:
            status = _simkernel.run_cross_priority(
                arr, srv, first, last, q,
                pend_t, pend_thr, pend_state, cum, delay_hist, backlog_hist,
                t0, cfg.warmup, cfg.steps,
            )
        if status == 1:
            raise CounterOverflowError("pending delay ring overflow")
        if status == 2:
            raise CounterOverflowError("fifo batch ring overflow")
        if status == 3:
            raise CounterOverflowError("cumulative arrival counter overflow")
        t0 += CHUNK
    samples = cfg.steps - cfg.warmup
    assert int(delay_hist.sum()) == samples
    return ReplicationResult(delay_hist, backlog_hist, samples)


def simulate(net: TandemNetwork, cfg: SimConfig) -> SimResult:
    """Monte-Carlo tails for flow 1 over all replications."""
    workers = min(thread_count(), cfg.replications)
    if workers <= 1:
        reps = [_run_replication(net, cfg, r) for r in range(cfg.replications)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reps = list(
                pool.map(
                    lambda r: _run_replication(net, cfg, r), range(cfg.replications)
                )
            )
    return SimResult._merge(reps)


# ---------------------------------------------------------------------------
# Empirical curves
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EmpiricalCurve:
    """Frequencies with binomial standard errors and replication spread."""

    metric: str
    values: np.ndarray
    probability: np.ndarray
    stderr: np.ndarray
    repl_min: np.ndarray
    repl_max: np.ndarray
    samples: int
    rule_of_three: float  # one-sided upper rate for levels never observed


def tail_quantile(curve: "EmpiricalCurve", epsilon: float) -> int:
    """Smallest v with P(X > v) <= epsilon, the empirical (1-eps)-quantile."""
    exceed = np.concatenate([curve.probability[1:], [0.0]])
    return int(np.argmax(exceed <= epsilon))


def empirical_tail(result: SimResult, metric: str = "delay") -> EmpiricalCurve:
    if result.samples <= 0:
        raise ModelError("no samples in simulation result")
    if metric == "delay":
        tail = result.delay_tail
        rep_tails = [
            np.cumsum(r.delay_hist[::-1])[::-1] for r in result.replications
        ]
    elif metric == "backlog":
        tail = result.backlog_tail
        rep_tails = [
            np.cumsum(r.backlog_hist[::-1])[::-1] for r in result.replications
        ]
    else:
        raise ModelError(f"unknown metric {metric!r}")
    p = tail / result.samples
    stderr = np.sqrt(np.maximum(p * (1.0 - p), 0.0) / result.samples)
    rep_freq = np.array(
        [t / r.samples for t, r in zip(rep_tails, result.replications)]
    )
    return EmpiricalCurve(
        metric=metric,
        values=np.arange(tail.shape[0]),
        probability=p,
        stderr=stderr,
        repl_min=rep_freq.min(axis=0),
        repl_max=rep_freq.max(axis=0),
        samples=result.samples,
        rule_of_three=3.0 / result.samples,
    )


# ---------------------------------------------------------------------------
# Statistical diagnostics used by the property suites
# ---------------------------------------------------------------------------

def martingale_empirical_check(
    mmp: Mmp, theta: float, tau_max: int, trials: int, seed: int
):
    """Per-tau mean and standard error of the compensated product.

    Walks the reversed chain backwards from a stationary endpoint and
    evaluates  exp(theta A(v-tau, v) - theta rho tau) nu[X(v-tau)]  on the
    same trajectory for every tau; each mean estimates 1.
    """
    from .mmp import characterize_arrival

    char = characterize_arrival(mmp, theta)
    nu = char.nu
    rho = char.rho
    p_rev_cum = np.cumsum(mmp.reversed, axis=1)
    pi_cum = np.cumsum(mmp.stationary)
    gen = _stream(seed, 0, 0)
    sums = np.zeros(tau_max + 1)
    sq_sums = np.zeros(tau_max + 1)
    done = 0
    while done < trials:
        c = min(100_000, trials - done)
        states = np.searchsorted(pi_cum, gen.random(c)).astype(np.int64)
        m_val = nu[states].copy()
        sums[0] += m_val.sum()
        sq_sums[0] += (m_val**2).sum()
        log_a = np.zeros(c)
        for tau in range(1, tau_max + 1):
            u = gen.random(c)
            rows = p_rev_cum[states]
            states = (u[:, None] >= rows).sum(axis=1).astype(np.int64)
            emit = _emissions_for_states(mmp, states, gen)
            log_a += theta * emit
            m_val = np.exp(log_a - theta * rho * tau) * nu[states]
            sums[tau] += m_val.sum()
            sq_sums[tau] += (m_val**2).sum()
        done += c
    means = sums / trials
    var = np.maximum(sq_sums / trials - means**2, 0.0)
    stderr = np.sqrt(var / trials)
    return means, stderr


def _emissions_for_states(mmp: Mmp, states: np.ndarray, gen: np.random.Generator):
    out = np.zeros(states.shape[0])
    for x, dist in enumerate(mmp.emissions):
        mask = states == x
        count = int(mask.sum())
        if count == 0:
            continue
        if isinstance(dist, Constant):
            out[mask] = dist.value
        elif isinstance(dist, ScaledBernoulli):
            out[mask] = np.where(gen.random(count) < dist.prob, dist.value, 0.0)
        elif isinstance(dist, Poisson):
            out[mask] = gen.poisson(dist.mean_rate, count)
    return out


def empirical_interval_mgf(
    mmp: Mmp, theta: float, k_max: int, trials: int, seed: int, sign: int = +1
):
    """Mean and stderr of exp(sign * theta * A(t, t+k)) for k = 1..k_max.

    Forward stationary simulation; used to confirm the exponential
    envelopes from the spectral characterization.
    """
    p_cum = np.cumsum(mmp.transition, axis=1)
    pi_cum = np.cumsum(mmp.stationary)
    gen = _stream(seed, 0, 1)
    sums = np.zeros(k_max + 1)
    sq_sums = np.zeros(k_max + 1)
    done = 0
    while done < trials:
        c = min(100_000, trials - done)
        states = np.searchsorted(pi_cum, gen.random(c)).astype(np.int64)
        log_w = np.zeros(c)
        for k in range(1, k_max + 1):
            emit = _emissions_for_states(mmp, states, gen)
            log_w += sign * theta * emit
            w = np.exp(log_w)
            sums[k] += w.sum()
            sq_sums[k] += (w**2).sum()
            u = gen.random(c)
            rows = p_cum[states]
            states = (u[:, None] >= rows).sum(axis=1).astype(np.int64)
        done += c
    means = sums / trials
    var = np.maximum(sq_sums / trials - means**2, 0.0)
    stderr = np.sqrt(var / trials)
    return means[1:], stderr[1:]
