import copy
import math

import numpy as np
import pytest

from sncbounds import genfunc
from sncbounds.corpora import corpus_document, corpus_network
from sncbounds.engine import (
    delay_quantile,
    mart_backlog,
    mart_delay,
    mart_delay_parts,
    mart_domain_theta1,
    mart_domain_theta2,
    optimize_theta,
    optimized_mart_delay,
    optimized_pmoo_backlog,
    optimized_pmoo_delay,
    pmoo_backlog,
    pmoo_delay,
    pmoo_domain,
    pmoo_service_bgf,
    xi_constant,
)
from sncbounds.errors import DivergenceError, QuantileUnreachableError, SncError
from sncbounds.mmp import characterize_arrival
from sncbounds.network import (
    ThetaDomain,
    characterize_service,
    parse_network,
    theta_star,
)

from oracles import (
    random_mmp_spec,
    single_server_backlog_bound,
    single_server_delay_bound,
)


def onoff_arrival_doc():
    return {
        "transition": [[0.3, 0.7], [0.1, 0.9]],
        "emissions": [
            {"type": "constant", "value": 0},
            {"type": "poisson", "mean": 2.0},
        ],
    }


def single_server_net(service=None):
    return parse_network(
        {
            "servers": [
                service
                or {
                    "id": 1,
                    "service": {
                        "type": "mmp",
                        "transition": [[1.0]],
                        "emissions": [
                            {"type": "bernoulli_scaled", "value": 5, "prob": 0.5}
                        ],
                    },
                }
            ],
            "flows": [{"id": 1, "first": 1, "last": 1, "arrival": onoff_arrival_doc()}],
        }
    )


def chars(net, theta):
    ca = characterize_arrival(net.flow(1).arrival, theta)
    cs = [characterize_service(s, theta) for s in net.servers]
    return ca, cs


# ---------------------------------------------------------------------------
# end-to-end service series
# ---------------------------------------------------------------------------

def test_bgf_two_servers_no_cross_traffic():
    net = corpus_network("fig1a")
    theta = 0.12
    ca, (c1, c2) = chars(net, theta)
    gf = pmoo_service_bgf(net, theta)
    assert gf.log_prefactor == pytest.approx(theta * (c1.sigma + c2.sigma), rel=1e-12)
    assert sorted(gf.pole_rates) == pytest.approx(
        sorted((math.exp(-theta * c1.rho), math.exp(-theta * c2.rho))), rel=1e-12
    )


def test_bgf_interleaved_residual_rates():
    net = corpus_network("fig1b")
    theta = 0.2
    gf = pmoo_service_bgf(net, theta)
    rho2 = characterize_arrival(net.flow(2).arrival, theta).rho
    rho3 = characterize_arrival(net.flow(3).arrival, theta).rho
    expected = [
        math.exp(-theta * (5.0 - rho2)),
        math.exp(-theta * (7.0 - rho2 - rho3)),
        math.exp(-theta * (6.0 - rho3)),
    ]
    assert list(gf.pole_rates) == pytest.approx(expected, rel=1e-12)
    sa2 = characterize_arrival(net.flow(2).arrival, theta).sigma
    sa3 = characterize_arrival(net.flow(3).arrival, theta).sigma
    assert gf.log_prefactor == pytest.approx(theta * (sa2 + sa3), abs=1e-12)


def test_bgf_single_server():
    net = single_server_net()
    theta = 0.1
    ca, (c1,) = chars(net, theta)
    gf = pmoo_service_bgf(net, theta)
    assert gf.pole_rates == pytest.approx((math.exp(-theta * c1.rho),), rel=1e-13)
    assert gf.log_prefactor == pytest.approx(theta * c1.sigma, abs=1e-13)


# ---------------------------------------------------------------------------
# classical bounds against the single-queue closed forms
# ---------------------------------------------------------------------------

def test_single_server_closed_forms():
    net = single_server_net()
    theta = 0.12
    ca, (cs,) = chars(net, theta)
    for T in (0, 1, 7, 30):
        ref = single_server_delay_bound(ca.sigma, ca.rho, cs.sigma, cs.rho, theta, T)
        assert pmoo_delay(net, theta, T) == pytest.approx(ref, rel=1e-12)
    for b in (0.0, 3.0, 25.0):
        ref = single_server_backlog_bound(ca.sigma, ca.rho, cs.sigma, cs.rho, theta, b)
        assert pmoo_backlog(net, theta, b) == pytest.approx(ref, rel=1e-12)


def test_backlog_vanishes_at_large_b():
    net = single_server_net()
    assert pmoo_backlog(net, 0.12, 1e6) == pytest.approx(0.0, abs=1e-290)


def test_two_identical_servers_double_pole_series():
    doc = corpus_document("fig1a")
    doc["servers"][1] = copy.deepcopy(doc["servers"][0])
    doc["servers"][1]["id"] = 2
    net = parse_network(doc)
    theta = 0.1
    ca, (c1, c2) = chars(net, theta)
    assert c1.rho == pytest.approx(c2.rho)
    # independent summation of (k+1) exp(theta(2 sigma_S - rho_S k)) r^k terms
    r = math.exp(theta * ca.rho)
    a = math.exp(-theta * c1.rho)
    direct = 0.0
    k = 0
    while True:
        term = (k + 1) * math.exp(theta * 2 * c1.sigma) * (a**k) * (r**k)
        direct += term
        k += 1
        if term < 1e-18 * direct:
            break
    expected = math.exp(-theta * 10.0) * math.exp(theta * ca.sigma) * direct
    assert pmoo_backlog(net, theta, 10.0) == pytest.approx(expected, rel=1e-9)


def test_pmoo_delay_tail_identity():
    net = corpus_network("fig1a")
    theta = 0.12
    ca, _ = chars(net, theta)
    gf = pmoo_service_bgf(net, theta)
    r = math.exp(theta * ca.rho)
    T = 9
    partial = sum(genfunc.coeff(gf, k) * r**k for k in range(T))
    ident = (genfunc.eval_gf(gf, r) - partial) / r**T
    assert pmoo_delay(net, theta, T) == pytest.approx(
        math.exp(theta * (ca.sigma + ca.rho)) * ident, rel=1e-9
    )


def test_domain_soundness_divergence_at_theta_star():
    net = corpus_network("fig1a")
    hi = min(theta_star(net, 1), theta_star(net, 2))
    assert pmoo_backlog(net, hi * (1 - 1e-6), 5.0) > 0
    with pytest.raises(DivergenceError):
        pmoo_backlog(net, hi * (1 + 1e-6), 5.0)


# ---------------------------------------------------------------------------
# Doob prefactor
# ---------------------------------------------------------------------------

def test_xi_iid_processes():
    net = single_server_net()
    doc = {
        "servers": [
            {
                "id": 1,
                "service": {
                    "type": "mmp",
                    "transition": [[1.0]],
                    "emissions": [{"type": "bernoulli_scaled", "value": 5, "prob": 0.5}],
                },
            }
        ],
        "flows": [
            {
                "id": 1,
                "first": 1,
                "last": 1,
                "arrival": {
                    "transition": [[1.0]],
                    "emissions": [{"type": "poisson", "mean": 2.0}],
                },
            }
        ],
    }
    net = parse_network(doc)
    xi = xi_constant(net, 1, 0.3)
    assert xi.value == pytest.approx(1.0)
    assert not xi.always_served


def test_xi_always_served_flag():
    doc = {
        "servers": [{"id": 1, "service": {"type": "constant_rate", "rate": 2.0}}],
        "flows": [
            {
                "id": 1,
                "first": 1,
                "last": 1,
                "arrival": {
                    "transition": [[1.0]],
                    "emissions": [{"type": "constant", "value": 1}],
                },
            }
        ],
    }
    net = parse_network(doc)
    xi = xi_constant(net, 1, 0.5)
    assert xi.value == 1.0
    assert xi.always_served


def test_xi_excludes_idle_states_hand_enumeration():
    doc = {
        "servers": [{"id": 1, "service": {"type": "constant_rate", "rate": 3.0}}],
        "flows": [{"id": 1, "first": 1, "last": 1, "arrival": onoff_arrival_doc()}],
    }
    net = parse_network(doc)
    theta = 0.4
    ca = characterize_arrival(net.flow(1).arrival, theta)
    # off state emits 0 < 3, on state has unbounded support: P = {on}
    assert xi_constant(net, 1, theta).value == pytest.approx(
        1.0 / ca.nu[1], rel=1e-12
    )


def test_xi_upper_bound_random_instances():
    rng = np.random.default_rng(31)
    checked = 0
    while checked < 40:
        P, emissions = random_mmp_spec(rng)
        doc = {
            "servers": [{"id": 1, "service": {"type": "constant_rate", "rate": 8.0}}],
            "flows": [
                {
                    "id": 1,
                    "first": 1,
                    "last": 1,
                    "arrival": {"transition": P.tolist(), "emissions": emissions},
                }
            ],
        }
        net = parse_network(doc)
        theta = float(rng.uniform(0.05, 0.8))
        ca = characterize_arrival(net.flow(1).arrival, theta)
        xi = xi_constant(net, 1, theta)
        assert xi.value <= math.exp(theta * ca.sigma) * (1 + 1e-10)
        checked += 1


# ---------------------------------------------------------------------------
# martingale bounds against the hand-derived two-server forms
# ---------------------------------------------------------------------------

def test_mart_backlog_matches_two_server_form():
    net = corpus_network("fig1a")
    theta, b = 0.15, 20.0
    ca, (c1, c2) = chars(net, theta)
    xi = xi_constant(net, 1, theta).value
    closed = (
        xi
        * math.exp(theta * (c2.sigma - b))
        / (1.0 - math.exp(-theta * (c2.rho - ca.rho)))
    )
    assert mart_backlog(net, 1, theta, b) == pytest.approx(closed, rel=1e-12)


def test_mart_backlog_constant_upstream_form():
    doc = {
        "servers": [
            {"id": 1, "service": {"type": "constant_rate", "rate": 3.0}},
            {
                "id": 2,
                "service": {
                    "type": "mmp",
                    "transition": [[1.0]],
                    "emissions": [{"type": "bernoulli_scaled", "value": 6, "prob": 0.5}],
                },
            },
        ],
        "flows": [{"id": 1, "first": 1, "last": 2, "arrival": onoff_arrival_doc()}],
    }
    net = parse_network(doc)
    theta, b = 0.2, 15.0
    ca = characterize_arrival(net.flow(1).arrival, theta)
    xi = xi_constant(net, 2, theta).value
    closed = xi * math.exp(-theta * b) / (1.0 - math.exp(-theta * (3.0 - ca.rho)))
    assert mart_backlog(net, 2, theta, b) == pytest.approx(closed, rel=1e-12)


def test_mart_delay_matches_two_term_form():
    net = corpus_network("fig1a")
    theta1, theta2, T = 0.15, 0.17, 12
    ca1, (c11, c21) = chars(net, theta1)
    ca2, (c12, c22) = chars(net, theta2)
    xi1 = xi_constant(net, 1, theta1).value
    xi2 = xi_constant(net, 1, theta2).value
    p1_closed = (
        xi1
        * math.exp(theta1 * (c21.sigma + ca1.rho - c21.rho * T))
        / (1.0 - math.exp(-theta1 * (c21.rho - ca1.rho)))
    )
    gf = genfunc.RationalGf(
        0.0, (math.exp(-theta2 * c12.rho), math.exp(-theta2 * c22.rho))
    )
    p2_closed = (
        xi2
        * math.exp(theta2 * (c22.sigma + ca2.rho - c12.rho))
        * genfunc.coeff(gf, T - 1)
    )
    total, p1, p2 = mart_delay_parts(net, 1, theta1, theta2, T)
    assert p1 == pytest.approx(p1_closed, rel=1e-12)
    assert p2 == pytest.approx(p2_closed, rel=1e-12)
    assert total == pytest.approx(p1_closed + p2_closed, rel=1e-12)


def test_mart_delay_T0_drops_second_term():
    net = corpus_network("fig1a")
    total, p1, p2 = mart_delay_parts(net, 1, 0.15, 0.17, 0)
    assert p2 == 0.0
    assert total == p1


def test_statement_form_differs_by_flow1_burstiness():
    net = corpus_network("fig1a")
    theta, b = 0.15, 20.0
    ca, _ = chars(net, theta)
    proof = mart_backlog(net, 1, theta, b)
    stmt = mart_backlog(net, 1, theta, b, statement_form=True)
    assert stmt / proof == pytest.approx(math.exp(-2 * theta * ca.sigma), rel=1e-10)


def test_mart_site_violation_raised():
    net = corpus_network("fig1b")
    from sncbounds.errors import SiteViolationError

    with pytest.raises(SiteViolationError):
        mart_backlog(net, 3, 0.1, 5.0)


def test_mart_theta_domain_errors():
    net = corpus_network("fig1a")
    t1 = theta_star(net, 1)
    with pytest.raises(DivergenceError):
        mart_backlog(net, 1, t1 * 1.2, 5.0)  # beyond theta*_h
    # beyond theta* of a non-martingale server, with rho_h still fine
    doc = {
        "servers": [
            {"id": 1, "service": {"type": "constant_rate", "rate": 3.0}},
            {"id": 2, "service": {"type": "constant_rate", "rate": 30.0}},
        ],
        "flows": [{"id": 1, "first": 1, "last": 2, "arrival": onoff_arrival_doc()}],
    }
    net2 = parse_network(doc)
    bad = theta_star(net2, 1) * 1.05
    assert bad < theta_star(net2, 2)
    with pytest.raises(DivergenceError):
        mart_backlog(net2, 2, bad, 5.0)


# ---------------------------------------------------------------------------
# optimization and quantiles
# ---------------------------------------------------------------------------

def test_optimize_toy_quadratic():
    theta, value = optimize_theta(
        lambda t: (t - 1.0) ** 2 + 1.0, ThetaDomain(2.0, hi_inclusive=True)
    )
    assert theta == pytest.approx(1.0, abs=1e-6)
    assert value == pytest.approx(1.0, rel=1e-12)


def test_optimizer_theta_approaches_theta_star_for_large_backlog():
    net = single_server_net()
    hi = theta_star(net, 1)
    prev = 0.0
    for b in (10.0, 100.0, 1000.0):
        t, _ = optimize_theta(
            lambda th: pmoo_backlog(net, th, b), pmoo_domain(net)
        )
        assert t >= prev - 1e-12
        prev = t
    assert prev >= 0.98 * hi


def test_optimizer_infinite_everywhere_raises():
    with pytest.raises(SncError):
        optimize_theta(lambda t: math.inf, ThetaDomain(1.0, hi_inclusive=True))


def test_mart_delay_optimizes_terms_independently():
    net = corpus_network("fig1a")
    T = 12
    ob = optimized_mart_delay(net, 1, T)
    from sncbounds.engine import mart_delay_p1, mart_delay_p2

    t1, v1 = optimize_theta(
        lambda th: mart_delay_p1(net, 1, th, T), mart_domain_theta1(net, 1)
    )
    t2, v2 = optimize_theta(
        lambda th: mart_delay_p2(net, 1, th, T), mart_domain_theta2(net, 1)
    )
    assert ob.raw == pytest.approx(v1 + v2, rel=1e-12)
    assert ob.theta == pytest.approx(t1)
    assert ob.theta2 == pytest.approx(t2)


def test_delay_quantile_edges():
    assert delay_quantile(lambda T: 2.0 if T < 3 else 1e-6, 1e-4) == 3
    assert delay_quantile(lambda T: 1e-9, 1e-4) == 0
    assert delay_quantile(lambda T: 5.0, 1.0) == 0  # capped probabilities
    # exact tie returns that T
    assert delay_quantile(lambda T: 1e-4 if T >= 4 else 1.0, 1e-4) == 4
    with pytest.raises(QuantileUnreachableError):
        delay_quantile(lambda T: 0.5, 1e-4, value_cap=64)


def test_bounds_monotone_in_value():
    net = corpus_network("fig1a")
    theta = 0.15
    delays = [pmoo_delay(net, theta, T) for T in range(0, 40, 4)]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(delays, delays[1:]))
    backlogs = [pmoo_backlog(net, theta, b) for b in range(0, 40, 4)]
    assert all(b <= a for a, b in zip(backlogs, backlogs[1:]))
    marts = [mart_delay(net, 1, 0.15, 0.17, T) for T in range(0, 40, 4)]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(marts, marts[1:]))


def test_bounds_monotone_in_arrival_mean():
    theta, T = 0.1, 10
    vals = []
    for mu in (1.5, 2.0, 2.5):
        doc = {
            "servers": [{"id": 1, "service": {"type": "constant_rate", "rate": 4.0}}],
            "flows": [
                {
                    "id": 1,
                    "first": 1,
                    "last": 1,
                    "arrival": {
                        "transition": [[0.3, 0.7], [0.1, 0.9]],
                        "emissions": [
                            {"type": "constant", "value": 0},
                            {"type": "poisson", "mean": mu},
                        ],
                    },
                }
            ],
        }
        vals.append(pmoo_delay(parse_network(doc), theta, T))
    assert vals[0] < vals[1] < vals[2]


def test_optimized_curves_nonincreasing():
    net = corpus_network("fig1a")
    probs = [optimized_pmoo_delay(net, T).probability for T in range(0, 30, 3)]
    assert all(b <= a + 1e-15 for a, b in zip(probs, probs[1:]))
    probs_b = [optimized_pmoo_backlog(net, b).probability for b in range(0, 60, 10)]
    assert all(b <= a + 1e-15 for a, b in zip(probs_b, probs_b[1:]))
