import math

import numpy as np
import pytest

from sncbounds.errors import ModelError, ReducibleChainError
from sncbounds.mmp import (
    Constant,
    Mmp,
    Poisson,
    ScaledBernoulli,
    characterize_arrival,
    characterize_service_mmp,
    exp_transition_matrix,
    mgf_emission,
    perron,
    reversed_transition,
    stationary_distribution,
    support_bounds,
)
from sncbounds.sim import empirical_interval_mgf

from oracles import perron_2x2


def mmoo(p=0.7, q=0.1, mu=2.0):
    return Mmp([[1 - p, p], [q, 1 - q]], [Constant(0.0), Poisson(mu)])


# ---------------------------------------------------------------------------
# emissions
# ---------------------------------------------------------------------------

def test_mgf_examples():
    assert mgf_emission(Constant(0.0), 0.7) == 1.0
    assert mgf_emission(Poisson(2.0), 0.0) == 1.0
    theta, mu = 0.37, 1.7
    assert mgf_emission(Poisson(mu), theta) == pytest.approx(
        math.exp(mu * (math.exp(theta) - 1.0)), rel=1e-15
    )
    # 0.5 + 0.5*exp(-0.5), evaluated independently to 15 digits
    assert mgf_emission(ScaledBernoulli(5.0, 0.5), -0.1) == pytest.approx(
        0.803265329856317, rel=1e-15
    )


def test_support_bounds():
    assert support_bounds(Constant(4.0)) == (4.0, 4.0)
    assert support_bounds(Poisson(1.0)) == (0.0, math.inf)
    assert support_bounds(ScaledBernoulli(6.0, 1.0)) == (6.0, 6.0)
    assert support_bounds(ScaledBernoulli(6.0, 0.25)) == (0.0, 6.0)


def test_emission_validation():
    with pytest.raises(ModelError):
        ScaledBernoulli(1.0, 1.5)
    with pytest.raises(ModelError):
        Poisson(0.0)
    with pytest.raises(ModelError):
        Constant(-1.0)


# ---------------------------------------------------------------------------
# chains
# ---------------------------------------------------------------------------

def test_stationary_two_state_formula():
    p, q = 0.7, 0.1
    pi = stationary_distribution(np.array([[1 - p, p], [q, 1 - q]]))
    assert pi == pytest.approx([q / (p + q), p / (p + q)], abs=1e-14)
    assert pi == pytest.approx([0.125, 0.875], abs=1e-14)


def test_stationary_single_state_and_doubly_stochastic():
    assert stationary_distribution(np.eye(1)) == pytest.approx([1.0])
    P = np.array([[0.2, 0.3, 0.5], [0.5, 0.2, 0.3], [0.3, 0.5, 0.2]])
    assert stationary_distribution(P) == pytest.approx([1 / 3] * 3, abs=1e-12)


def test_stationary_rejects_reducible():
    with pytest.raises(ReducibleChainError) as err:
        stationary_distribution(np.array([[1.0, 0.0], [0.5, 0.5]]))
    assert err.value.unreachable == [1]


def test_stationary_rejects_non_stochastic():
    with pytest.raises(ModelError):
        stationary_distribution(np.array([[0.5, 0.6], [0.5, 0.5]]))


def test_reversed_two_state_is_self():
    P = np.array([[0.3, 0.7], [0.1, 0.9]])
    pi = stationary_distribution(P)
    assert reversed_transition(P, pi) == pytest.approx(P, abs=1e-14)


def test_reversed_symmetric_uniform():
    P = np.array([[0.5, 0.25, 0.25], [0.25, 0.5, 0.25], [0.25, 0.25, 0.5]])
    pi = stationary_distribution(P)
    assert reversed_transition(P, pi) == pytest.approx(P.T, abs=1e-14)


def test_reversed_cycle_reverses():
    P = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]], dtype=float)
    pi = stationary_distribution(P)
    assert reversed_transition(P, pi) == pytest.approx(P.T, abs=1e-14)


def test_reversed_is_row_stochastic_random():
    rng = np.random.default_rng(5)
    for _ in range(25):
        n = int(rng.integers(2, 6))
        P = rng.random((n, n)) + 0.01
        P /= P.sum(axis=1, keepdims=True)
        pi = stationary_distribution(P)
        Pr = reversed_transition(P, pi)
        assert Pr.sum(axis=1) == pytest.approx(np.ones(n), abs=1e-12)
        assert pi @ Pr == pytest.approx(pi, abs=1e-12)


# ---------------------------------------------------------------------------
# exponential transition matrix and eigen-pair
# ---------------------------------------------------------------------------

def test_exp_matrix_matches_onoff_form():
    p, q, mu, theta = 0.7, 0.1, 2.0, 0.5
    m = mmoo(p, q, mu)
    phi = math.exp(mu * (math.exp(theta) - 1.0))
    expected = np.array([[1 - p, p * phi], [q, (1 - q) * phi]])
    assert exp_transition_matrix(m, theta) == pytest.approx(expected, rel=1e-14)


def test_exp_matrix_at_zero_is_reversed():
    m = mmoo()
    assert exp_transition_matrix(m, 0.0) == pytest.approx(m.reversed, abs=1e-14)


def test_exp_matrix_single_state_constant():
    m = Mmp([[1.0]], [Constant(3.0)])
    psi = exp_transition_matrix(m, 0.4)
    assert psi.shape == (1, 1)
    assert psi[0, 0] == pytest.approx(math.exp(1.2), rel=1e-15)


def test_perron_one_by_one():
    lam, nu = perron(np.array([[2.5]]), np.array([1.0]))
    assert lam == pytest.approx(2.5, rel=1e-14)
    assert nu == pytest.approx([1.0])


def test_perron_stochastic_gives_unit():
    m = mmoo()
    lam, nu = perron(m.reversed, m.stationary)
    assert lam == pytest.approx(1.0, rel=1e-12)
    assert nu == pytest.approx(np.ones(2), rel=1e-10)


def test_perron_two_state_closed_form_randomized():
    rng = np.random.default_rng(17)
    for _ in range(100):
        P = rng.random((2, 2)) + 0.05
        P /= P.sum(axis=1, keepdims=True)
        pi = stationary_distribution(P)
        phi = np.exp(rng.uniform(-1.0, 1.5, size=2))
        psi = reversed_transition(P, pi) * phi[np.newaxis, :]
        lam, nu = perron(psi, pi)
        lam_ref, nu_ref = perron_2x2(psi)
        nu_ref = nu_ref / (nu_ref @ pi)
        assert lam == pytest.approx(lam_ref, rel=1e-10)
        assert nu == pytest.approx(nu_ref, rel=1e-9)
        # residual contract
        assert np.max(np.abs(psi @ nu - lam * nu)) <= 1e-11 * lam


# ---------------------------------------------------------------------------
# characterizations
# ---------------------------------------------------------------------------

def test_characterize_single_state_poisson_and_constant():
    theta = 0.8
    c = characterize_arrival(Mmp([[1.0]], [Poisson(2.0)]), theta)
    assert c.rho == pytest.approx(2.0 * (math.exp(theta) - 1.0) / theta, rel=1e-12)
    assert c.sigma == 0.0
    c2 = characterize_arrival(Mmp([[1.0]], [Constant(3.0)]), theta)
    assert c2.rho == pytest.approx(3.0, rel=1e-12)
    assert c2.sigma == 0.0


def test_characterize_service_bernoulli_formula():
    theta = 0.1
    c = characterize_service_mmp(Mmp([[1.0]], [ScaledBernoulli(5.0, 0.5)]), theta)
    assert c.rho == pytest.approx(
        -math.log(0.5 + 0.5 * math.exp(-0.5)) / 0.1, rel=1e-12
    )
    assert c.sigma == 0.0


def test_characterize_service_limit_is_mean_rate():
    m = Mmp(
        [[0.6, 0.4], [0.2, 0.8]],
        [ScaledBernoulli(4.0, 0.5), Constant(3.0)],
    )
    c = characterize_service_mmp(m, 1e-6)
    assert c.rho == pytest.approx(m.mean_rate(), rel=1e-4)


def test_characterize_normalization_and_positivity():
    theta = 0.5
    m = mmoo()
    c = characterize_arrival(m, theta)
    assert (c.nu > 0).all()
    assert float(c.nu @ m.stationary) == pytest.approx(1.0, abs=1e-10)
    assert c.sigma >= 0.0
    assert c.lam > 0


def test_effective_bandwidth_monotone_and_above_mean():
    m = mmoo()
    grid = np.linspace(0.05, 1.2, 24)
    rhos = [characterize_arrival(m, t).rho for t in grid]
    assert all(b >= a - 1e-12 for a, b in zip(rhos, rhos[1:]))
    assert rhos[0] >= m.mean_rate() - 1e-9


def test_theta_must_be_positive():
    with pytest.raises(ModelError):
        characterize_arrival(mmoo(), 0.0)


# ---------------------------------------------------------------------------
# Monte-Carlo envelope soundness
# ---------------------------------------------------------------------------

def test_arrival_envelope_sound_monte_carlo():
    theta = 0.5
    m = mmoo()
    c = characterize_arrival(m, theta)
    means, stderr = empirical_interval_mgf(m, theta, 20, 1_000_000, seed=11, sign=+1)
    for k in range(1, 21):
        envelope = math.exp(theta * (c.sigma + c.rho * k))
        assert means[k - 1] <= envelope + 3.0 * stderr[k - 1], f"k={k}"


def test_service_envelope_sound_monte_carlo():
    theta = 0.4
    m = Mmp([[0.7, 0.3], [0.4, 0.6]], [ScaledBernoulli(5.0, 0.5), Constant(2.0)])
    c = characterize_service_mmp(m, theta)
    means, stderr = empirical_interval_mgf(m, theta, 20, 1_000_000, seed=12, sign=-1)
    for k in range(1, 21):
        envelope = math.exp(theta * (c.sigma - c.rho * k))
        assert means[k - 1] <= envelope + 3.0 * stderr[k - 1], f"k={k}"
