"""Violation-probability bounds for the flow of interest.

Two families are provided.  The classical route multiplies per-server
residual factors into one bounding series for the end-to-end service and
pays a union bound at every server.  The sharper route spends Doob's
maximal inequality at exactly one server h (admissible per H6/H7) and
keeps the union bound only for the remaining servers; its prefactor is
the inverse least eigenvector entry over the joint states where the
queue at h can actually grow.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import genfunc
from .errors import (
    DivergenceError,
    ModelError,
    QuantileUnreachableError,
    SiteViolationError,
    SncError,
    StateSpaceCapError,
)
from .genfunc import RationalGf
from .mmp import characterize_arrival
from .network import (
    THETA_CAP,
    ConstantRate,
    TandemNetwork,
    ThetaDomain,
    characterize_service,
    check_martingale_site,
    flows_at,
    h_only_flows,
    theta_star,
)

XI_STATE_CAP = 1_000_000
QUANTILE_VALUE_CAP = 1_000_000
GRID_POINTS = 200
GOLDEN_ITERS = 80


# ---------------------------------------------------------------------------
# Per-theta characterization of a whole network
# ---------------------------------------------------------------------------

class _NetChars:
    """sigma/rho of every process of a network at one theta."""

    def __init__(self, net: TandemNetwork, theta: float):
        self.theta = theta
        self.sigma_S = {}
        self.rho_S = {}
        for j, srv in enumerate(net.servers, start=1):
            c = characterize_service(srv, theta)
            self.sigma_S[j], self.rho_S[j] = c.sigma, c.rho
        self.sigma_A = {}
        self.rho_A = {}
        for f in net.flows:
            c = characterize_arrival(f.arrival, theta)
            self.sigma_A[f.id], self.rho_A[f.id] = c.sigma, c.rho
        self._net = net

    def residual_rate(self, j: int, include_flow1: bool) -> float:
        """rho_S_j minus the cross (or all) arrival rates at server j."""
        rho = self.rho_S[j]
        for f in self._net.flows:
            if f.crosses(j) and (include_flow1 or f.id != 1):
                rho -= self.rho_A[f.id]
        return rho


# ---------------------------------------------------------------------------
# End-to-end service series and the classical bounds
# ---------------------------------------------------------------------------

def pmoo_service_bgf(net: TandemNetwork, theta: float) -> RationalGf:
    """Bounding series of the end-to-end service left to flow 1.

    One geometric factor per server at the residual rate (cross traffic
    subtracted once over its shared sub-path), with the cross-flow and
    server burstiness collected in the prefactor.
    """
    ch = _NetChars(net, theta)
    log_c = theta * (
        sum(s for fid, s in ch.sigma_A.items() if fid != 1)
        + sum(ch.sigma_S.values())
    )
    rates = tuple(
        math.exp(-theta * ch.residual_rate(j, include_flow1=False))
        for j in range(1, net.n_servers + 1)
    )
    return RationalGf(log_c, rates)


def pmoo_backlog(net: TandemNetwork, theta: float, b: float) -> float:
    """Backlog violation bound at level b (raw, not capped at 1)."""
    ch = _NetChars(net, theta)
    gf = pmoo_service_bgf(net, theta)
    z = math.exp(theta * ch.rho_A[1])
    return math.exp(theta * (ch.sigma_A[1] - b)) * genfunc.eval_gf(gf, z)


def pmoo_delay(net: TandemNetwork, theta: float, T: int) -> float:
    """Delay violation bound at horizon T (raw, not capped at 1)."""
    ch = _NetChars(net, theta)
    gf = pmoo_service_bgf(net, theta)
    r = math.exp(theta * ch.rho_A[1])
    return math.exp(theta * (ch.sigma_A[1] + ch.rho_A[1])) * genfunc.tail_sum(gf, r, T)


# ---------------------------------------------------------------------------
# The Doob prefactor
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class XiConstant:
    """Doob prefactor for the flows through one server at one theta."""

    theta: float
    value: float
    flow_ids: tuple[int, ...]
    server: int
    always_served: bool = False


def xi_constant(net: TandemNetwork, h: int, theta: float) -> XiConstant:
    """Inverse least joint-eigenvector entry over growth-capable states.

    A joint state can grow the queue when the largest possible total
    arrival strictly exceeds the smallest possible service.  With no such
    state the queue never grows and the prefactor is 1.
    """
    flow_ids = tuple(sorted(flows_at(net, h)))
    nu_parts = []
    arr_max = []
    for fid in flow_ids:
        f = net.flow(fid)
        nu_parts.append(characterize_arrival(f.arrival, theta).nu)
        arr_max.append(
            np.array([d.support()[1] for d in f.arrival.emissions])
        )
    server = net.servers[h - 1]
    srv_char = characterize_service(server, theta)
    nu_parts.append(srv_char.nu)
    if isinstance(server, ConstantRate):
        srv_min = np.array([server.rate])
    else:
        srv_min = np.array([d.support()[0] for d in server.mmp.emissions])

    size = math.prod(len(v) for v in nu_parts)
    if size > XI_STATE_CAP:
        raise StateSpaceCapError(size, XI_STATE_CAP)

    grids = np.meshgrid(*arr_max, srv_min, indexing="ij")
    growth = sum(grids[:-1]) > grids[-1] if grids else np.zeros((), dtype=bool)
    if not np.any(growth):
        return XiConstant(theta, 1.0, flow_ids, h, always_served=True)
    nu_grids = np.meshgrid(*nu_parts, indexing="ij")
    nu_joint = math.prod(nu_grids) if nu_grids else np.ones(())
    min_nu = float(nu_joint[growth].min())
    return XiConstant(theta, 1.0 / min_nu, flow_ids, h)


# ---------------------------------------------------------------------------
# Martingale-localized bounds
# ---------------------------------------------------------------------------

def _require_site(net: TandemNetwork, h: int) -> None:
    report = check_martingale_site(net, h)
    if not report.ok:
        raise SiteViolationError(report)


def _reduced_parts(net: TandemNetwork, h: int, theta: float):
    """Rates/burstiness shared by the martingale bounds at server h."""
    ch = _NetChars(net, theta)
    rho_h = ch.residual_rate(h, include_flow1=True)
    if rho_h < 0:
        raise DivergenceError(
            f"theta={theta:g} is beyond theta* of the martingale server {h}"
        )
    others = [j for j in range(1, net.n_servers + 1) if j != h]
    rho_others = {j: ch.residual_rate(j, include_flow1=True) for j in others}
    for j, rho_j in rho_others.items():
        if rho_j <= 0:
            raise DivergenceError(
                f"theta={theta:g} is at or beyond theta* of server {j}"
            )
    return ch, rho_h, others, rho_others


def mart_backlog(
    net: TandemNetwork,
    h: int,
    theta: float,
    b: float,
    statement_form: bool = False,
) -> float:
    """Backlog violation bound with the maximal inequality spent at h.

    The default evaluates the expression the derivation actually ends
    with; `statement_form` switches to the published closed form (which
    subtracts the flow-of-interest burstiness twice) for auditing.
    """
    _require_site(net, h)
    ch, rho_h, others, rho_others = _reduced_parts(net, h, theta)
    xi = xi_constant(net, h, theta).value
    if statement_form:
        from .network import remove_server

        in_h = flows_at(net, h)
        only_h = h_only_flows(net, h)
        gf = pmoo_service_bgf(remove_server(net, h), theta)
        log_val = (
            math.log(xi)
            - theta * ch.sigma_A[1]
            - theta * sum(ch.sigma_A[i] for i in in_h - only_h)
            - theta * b
            + math.log(genfunc.eval_gf(gf, math.exp(theta * ch.rho_A[1])))
        )
        return math.exp(log_val)
    in_h = flows_at(net, h)
    log_val = math.log(xi) - theta * b
    log_val += theta * sum(ch.sigma_S[j] for j in others if j > h)
    log_val += theta * sum(ch.sigma_A[f.id] for f in net.flows if f.id not in in_h)
    for j in others:
        log_val -= math.log1p(-math.exp(-theta * rho_others[j]))
    return math.exp(log_val)


def mart_delay(
    net: TandemNetwork,
    h: int,
    theta1: float,
    theta2: float,
    T: int,
) -> float:
    """Delay violation bound at horizon T, maximal inequality spent at h.

    Sum of two parts: the long-window part (theta1), a delay-series
    coefficient of the tandem with server h removed, and the short-window
    part (theta2), a coefficient of the full end-to-end series.  The two
    tilts are independent.
    """
    return mart_delay_parts(net, h, theta1, theta2, T)[0]


def mart_delay_p1(net: TandemNetwork, h: int, theta1: float, T: int) -> float:
    """Long-window part of the delay bound (depends on theta1 only)."""
    from .network import remove_server

    _require_site(net, h)
    ch, _, _, _ = _reduced_parts(net, h, theta1)
    xi1 = xi_constant(net, h, theta1).value
    in_h = flows_at(net, h)
    only_h = h_only_flows(net, h)
    gf = pmoo_service_bgf(remove_server(net, h), theta1)
    r = math.exp(theta1 * ch.rho_A[1])
    tail = genfunc.tail_sum(gf, r, T)
    log_pref = (
        math.log(xi1)
        - theta1 * sum(ch.sigma_A[i] for i in in_h - only_h)
        + theta1 * (ch.sigma_A[1] + ch.rho_A[1])
    )
    return math.exp(log_pref) * tail


def mart_delay_p2(net: TandemNetwork, h: int, theta2: float, T: int) -> float:
    """Short-window part of the delay bound (depends on theta2 only)."""
    _require_site(net, h)
    if T <= 0:
        return 0.0
    ch = _NetChars(net, theta2)
    rho_h = ch.residual_rate(h, include_flow1=True)
    if rho_h < 0:
        raise DivergenceError(
            f"theta={theta2:g} is beyond theta* of the martingale server {h}"
        )
    xi2 = xi_constant(net, h, theta2).value
    in_h = flows_at(net, h)
    gf = pmoo_service_bgf(net, theta2)
    log_pref = (
        math.log(xi2)
        - theta2 * rho_h
        - theta2 * (ch.sigma_S[h] + sum(ch.sigma_A[i] for i in in_h if i != 1))
    )
    c = genfunc.coeff(gf, T - 1)
    if c == 0.0:
        return 0.0
    return math.exp(log_pref + math.log(c))


def mart_delay_parts(
    net: TandemNetwork, h: int, theta1: float, theta2: float, T: int
) -> tuple[float, float, float]:
    p1 = mart_delay_p1(net, h, theta1, T)
    p2 = mart_delay_p2(net, h, theta2, T)
    return p1 + p2, p1, p2


# ---------------------------------------------------------------------------
# Theta domains
# ---------------------------------------------------------------------------

def pmoo_domain(net: TandemNetwork) -> ThetaDomain:
    hi = min(theta_star(net, j) for j in range(1, net.n_servers + 1))
    return ThetaDomain(min(hi, THETA_CAP), hi_inclusive=False)


def mart_domain_theta1(net: TandemNetwork, h: int) -> ThetaDomain:
    """Domain of the union-bound tilt: closed at theta*_h when it is the
    strict minimum, open at the smallest other threshold otherwise."""
    t_h = theta_star(net, h)
    others = [theta_star(net, j) for j in range(1, net.n_servers + 1) if j != h]
    t_other = min(others) if others else math.inf
    if t_h < t_other:
        return ThetaDomain(min(t_h, THETA_CAP), hi_inclusive=True)
    return ThetaDomain(min(t_other, THETA_CAP), hi_inclusive=False)


def mart_domain_theta2(net: TandemNetwork, h: int) -> ThetaDomain:
    return ThetaDomain(min(theta_star(net, h), THETA_CAP), hi_inclusive=True)


# ---------------------------------------------------------------------------
# Optimization over theta
# ---------------------------------------------------------------------------

def _theta_grid(domain: ThetaDomain, points: int) -> np.ndarray:
    hi = domain.effective_hi()
    n_coarse = (7 * points) // 10
    coarse = np.geomspace(hi * 1e-5, hi, n_coarse)
    # extra resolution where the bounds blow up, just below the endpoint
    fine = hi * (1.0 - np.logspace(-9, -1, points - n_coarse))
    grid = np.unique(np.concatenate([coarse, fine]))
    return grid[grid > 0.0]


def optimize_theta(
    objective: Callable[[float], float],
    domain: ThetaDomain,
    points: int = GRID_POINTS,
) -> tuple[float, float]:
    """Best tilt found by a coarse grid plus golden-section refinement.

    The objective is evaluated where finite; domain violations and
    overflow count as +inf.  No global-optimality claim is made.
    """

    def safe(theta: float) -> float:
        if theta <= 0.0:
            return math.inf
        try:
            v = objective(theta)
        except (DivergenceError, OverflowError):
            return math.inf
        return v if math.isfinite(v) or v == 0.0 else math.inf

    grid = _theta_grid(domain, points)
    vals = np.array([safe(t) for t in grid])
    if not np.isfinite(vals).any():
        raise SncError("objective is infinite on the whole theta domain")
    k = int(np.argmin(vals))
    best_t, best_v = float(grid[k]), float(vals[k])

    lo = grid[k - 1] if k > 0 else grid[k] * 0.5
    hi = grid[k + 1] if k + 1 < len(grid) else domain.effective_hi()
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = float(lo), float(hi)
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = safe(c), safe(d)
    for _ in range(GOLDEN_ITERS):
        if b - a <= 1e-12 * max(1.0, b):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = safe(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = safe(d)
    for t, v in ((c, fc), (d, fd)):
        if v < best_v:
            best_t, best_v = float(t), float(v)
    return best_t, best_v


# ---------------------------------------------------------------------------
# Optimized bounds and quantiles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OptimizedBound:
    """One optimized point of a curve: raw value and tilt(s) used."""

    raw: float
    theta: float
    theta2: Optional[float] = None

    @property
    def probability(self) -> float:
        return min(self.raw, 1.0)


def optimized_pmoo_backlog(net: TandemNetwork, b: float) -> OptimizedBound:
    t, v = optimize_theta(lambda th: pmoo_backlog(net, th, b), pmoo_domain(net))
    return OptimizedBound(v, t)


def optimized_pmoo_delay(net: TandemNetwork, T: int) -> OptimizedBound:
    t, v = optimize_theta(lambda th: pmoo_delay(net, th, T), pmoo_domain(net))
    return OptimizedBound(v, t)


def optimized_mart_backlog(net: TandemNetwork, h: int, b: float) -> OptimizedBound:
    _require_site(net, h)
    t, v = optimize_theta(
        lambda th: mart_backlog(net, h, th, b), mart_domain_theta1(net, h)
    )
    return OptimizedBound(v, t)


def optimized_mart_delay(net: TandemNetwork, h: int, T: int) -> OptimizedBound:
    _require_site(net, h)
    t1, v1 = optimize_theta(
        lambda th: mart_delay_p1(net, h, th, T), mart_domain_theta1(net, h)
    )
    if T <= 0:
        return OptimizedBound(v1, t1, None)
    t2, v2 = optimize_theta(
        lambda th: mart_delay_p2(net, h, th, T), mart_domain_theta2(net, h)
    )
    return OptimizedBound(v1 + v2, t1, t2)


def delay_quantile(
    bound: Callable[[int], float],
    epsilon: float,
    value_cap: int = QUANTILE_VALUE_CAP,
) -> int:
    """Least T with capped bound(T) <= epsilon (exponential + binary search)."""

    def capped(T: int) -> float:
        return min(bound(T), 1.0)

    if capped(0) <= epsilon:
        return 0
    lo, hi = 0, 1
    while capped(hi) > epsilon:
        lo = hi
        hi *= 2
        if hi > value_cap:
            raise QuantileUnreachableError(epsilon, value_cap)
    # invariant: bound(lo) > eps >= bound(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if capped(mid) <= epsilon:
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------------
# Curves
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CurveEntry:
    value: float
    probability: float
    raw: float
    theta: float
    theta2: Optional[float] = None


@dataclass(frozen=True)
class BoundCurve:
    metric: str  # "delay" | "backlog"
    method: str
    entries: tuple[CurveEntry, ...] = ()
    site: Optional[int] = None


def analyze_curve(
    net: TandemNetwork,
    metric: str,
    values,
    method: str,
    h: Optional[int] = None,
) -> BoundCurve:
    """Optimized bound curve over the requested values."""
    entries = []
    for v in values:
        if method == "pmoo":
            ob = (
                optimized_pmoo_delay(net, int(v))
                if metric == "delay"
                else optimized_pmoo_backlog(net, v)
            )
        elif method == "martingale":
            if h is None:
                raise ModelError("martingale method needs a site h")
            ob = (
                optimized_mart_delay(net, h, int(v))
                if metric == "delay"
                else optimized_mart_backlog(net, h, v)
            )
        else:
            raise ModelError(f"unknown method {method!r}")
        entries.append(CurveEntry(v, ob.probability, ob.raw, ob.theta, ob.theta2))
    label = method if h is None else f"{method}(h={h})"
    return BoundCurve(metric=metric, method=label, entries=tuple(entries), site=h)
