"""Markov-modulated processes and their exponential-envelope characterization.

A process emits a nonnegative amount of data each time slot, drawn from a
per-state distribution indexed by a finite ergodic Markov chain.  For a
positive tilt parameter theta the process is summarized by the pair
(sigma(theta), rho(theta)) obtained from the Perron eigen-pair of the
exponential transition matrix of the time-reversed chain:

    E[exp(theta * A(t, t+k))] <= exp(theta * (sigma + rho * k))

for arrivals, and with theta negated inside the matrix for services.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, ModelError, ReducibleChainError

ROW_SUM_TOL = 1e-12
STATIONARY_TOL = 1e-10
PERRON_RESIDUAL_REL = 1e-11
PERRON_LAMBDA_REL = 1e-13
PERRON_MAX_ITER = 100_000


# ---------------------------------------------------------------------------
# Emission distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Constant:
    """Deterministic emission of `value` data units per slot."""

    value: float

    def __post_init__(self):
        if self.value < 0:
            raise ModelError(f"constant emission must be >= 0, got {self.value}")

    def mgf(self, theta: float) -> float:
        return math.exp(theta * self.value)

    def support(self) -> tuple[float, float]:
        return (self.value, self.value)

    def mean(self) -> float:
        return self.value


@dataclass(frozen=True)
class ScaledBernoulli:
    """Emission of `value` units with probability `prob`, else nothing."""

    value: float
    prob: float

    def __post_init__(self):
        if self.value < 0:
            raise ModelError(f"bernoulli emission value must be >= 0, got {self.value}")
        if not 0.0 <= self.prob <= 1.0:
            raise ModelError(f"bernoulli prob must lie in [0,1], got {self.prob}")

    def mgf(self, theta: float) -> float:
        return 1.0 - self.prob + self.prob * math.exp(theta * self.value)

    def support(self) -> tuple[float, float]:
        lo = self.value if self.prob == 1.0 else 0.0
        return (lo, self.value)

    def mean(self) -> float:
        return self.prob * self.value


@dataclass(frozen=True)
class Poisson:
    """Poisson-distributed emission with the given mean."""

    mean_rate: float

    def __post_init__(self):
        if self.mean_rate <= 0:
            raise ModelError(f"poisson mean must be > 0, got {self.mean_rate}")

    def mgf(self, theta: float) -> float:
        return math.exp(self.mean_rate * math.expm1(theta))

    def support(self) -> tuple[float, float]:
        return (0.0, math.inf)

    def mean(self) -> float:
        return self.mean_rate


EmissionDist = Constant | ScaledBernoulli | Poisson


def mgf_emission(dist: EmissionDist, theta: float) -> float:
    """E[exp(theta * Y)] for one slot's emission Y; finite for every theta."""
    return dist.mgf(theta)


def support_bounds(dist: EmissionDist) -> tuple[float, float]:
    """Minimum and supremum of the emission support (sup may be inf)."""
    return dist.support()


# ---------------------------------------------------------------------------
# Chains
# ---------------------------------------------------------------------------

def _check_irreducible(P: np.ndarray) -> None:
    """Reachability closure; raises naming the unreachable states."""
    n = P.shape[0]
    adj = P > 0.0
    reach = np.eye(n, dtype=bool)
    for _ in range(n):
        new = reach | (reach @ adj)
        if (new == reach).all():
            break
        reach = new
    if not reach.all():
        unreachable = set()
        for i in range(n):
            unreachable.update(np.nonzero(~reach[i])[0].tolist())
        raise ReducibleChainError(unreachable)


def stationary_distribution(P: np.ndarray) -> np.ndarray:
    """Unique probability vector pi with pi P = pi for an irreducible P."""
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    if P.shape != (n, n):
        raise ModelError(f"transition matrix must be square, got shape {P.shape}")
    if (P < 0).any():
        raise ModelError("transition matrix has negative entries")
    rowsum = P.sum(axis=1)
    bad = np.nonzero(np.abs(rowsum - 1.0) > ROW_SUM_TOL)[0]
    if bad.size:
        raise ModelError(
            f"rows {bad.tolist()} of the transition matrix do not sum to 1"
        )
    _check_irreducible(P)
    # Solve (P^T - I) pi = 0 with the normalization sum(pi) = 1 replacing
    # one redundant equation.
    A = P.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    pi = np.linalg.solve(A, b)
    pi = np.maximum(pi, 0.0)
    pi /= pi.sum()
    if (pi <= 0).any():
        raise ModelError("stationary distribution has a zero entry")
    if np.max(np.abs(pi @ P - pi)) > STATIONARY_TOL:
        raise ModelError("stationary solve failed to reach tolerance")
    return pi


def reversed_transition(P: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """Time-reversed transition matrix, entry (i,j) = pi_j / pi_i * P[j,i]."""
    P = np.asarray(P, dtype=float)
    pi = np.asarray(pi, dtype=float)
    return (P.T * pi[np.newaxis, :]) / pi[:, np.newaxis]


class Mmp:
    """Finite-state Markov chain with one emission distribution per state.

    Immutable after construction.  The stationary distribution is computed
    eagerly; spectral characterizations are memoized per theta.
    """

    def __init__(self, transition, emissions):
        P = np.asarray(transition, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ModelError(f"transition matrix must be square, got shape {P.shape}")
        n = P.shape[0]
        if len(emissions) != n:
            raise ModelError(
                f"need one emission distribution per state ({n}), got {len(emissions)}"
            )
        for dist in emissions:
            if not isinstance(dist, (Constant, ScaledBernoulli, Poisson)):
                raise ModelError(f"unsupported emission distribution {dist!r}")
        self._P = P
        self._P.setflags(write=False)
        self._emissions = tuple(emissions)
        self._pi = stationary_distribution(P)
        self._pi.setflags(write=False)
        self._reversed = reversed_transition(P, self._pi)
        self._reversed.setflags(write=False)
        self._char_cache: dict[tuple[float, int], SpectralChar] = {}

    @property
    def n_states(self) -> int:
        return self._P.shape[0]

    @property
    def transition(self) -> np.ndarray:
        return self._P

    @property
    def emissions(self) -> tuple[EmissionDist, ...]:
        return self._emissions

    @property
    def stationary(self) -> np.ndarray:
        return self._pi

    @property
    def reversed(self) -> np.ndarray:
        return self._reversed

    def mean_rate(self) -> float:
        """Stationary mean emission per slot."""
        return float(sum(p * d.mean() for p, d in zip(self._pi, self._emissions)))

    def max_emission(self) -> float:
        """Supremum of per-slot emission over states (may be inf)."""
        return max(d.support()[1] for d in self._emissions)

    def min_emission(self) -> float:
        """Minimum per-slot emission over states."""
        return min(d.support()[0] for d in self._emissions)

    def __repr__(self):
        return f"Mmp(n_states={self.n_states}, emissions={list(self._emissions)})"


def exp_transition_matrix(mmp: Mmp, theta: float) -> np.ndarray:
    """Reversed transition matrix weighted column-wise by destination MGFs."""
    phis = np.array([mgf_emission(d, theta) for d in mmp.emissions])
    return mmp.reversed * phis[np.newaxis, :]


def perron(psi: np.ndarray, pi: np.ndarray) -> tuple[float, np.ndarray]:
    """Dominant eigenvalue and right eigenvector of a primitive matrix.

    Power iteration, renormalizing to <nu, pi> = 1 each step.  Stops when
    two successive eigenvalue estimates agree to PERRON_LAMBDA_REL; the
    returned pair always satisfies the residual contract
    ||psi nu - lambda nu||_inf <= PERRON_RESIDUAL_REL * lambda.
    """
    psi = np.asarray(psi, dtype=float)
    pi = np.asarray(pi, dtype=float)
    n = psi.shape[0]
    nu = np.ones(n)
    lam = float(psi[0, 0]) if n == 1 else 1.0
    for _ in range(PERRON_MAX_ITER):
        w = psi @ nu
        lam_new = float(w @ pi)  # equals lambda once <nu,pi> = 1 converges
        nu_new = w / lam_new
        if abs(lam_new - lam) <= PERRON_LAMBDA_REL * abs(lam_new):
            residual = float(np.max(np.abs(psi @ nu_new - lam_new * nu_new)))
            if residual <= PERRON_RESIDUAL_REL * lam_new:
                return lam_new, nu_new
        lam, nu = lam_new, nu_new
    residual = float(np.max(np.abs(psi @ nu - lam * nu)))
    raise ConvergenceError(residual, PERRON_MAX_ITER)


@dataclass(frozen=True)
class SpectralChar:
    """One process at one theta: Perron pair plus the (sigma, rho) envelope."""

    theta: float
    lam: float
    nu: np.ndarray
    sigma: float
    rho: float

    def __post_init__(self):
        object.__setattr__(self, "nu", np.asarray(self.nu, dtype=float))
        self.nu.setflags(write=False)


def _characterize(mmp: Mmp, theta: float, sign: int) -> SpectralChar:
    """Shared arrival (sign=+1) / service (sign=-1) characterization."""
    key = (theta, sign)
    cached = mmp._char_cache.get(key)
    if cached is not None:
        return cached
    psi = exp_transition_matrix(mmp, sign * theta)
    lam, nu = perron(psi, mmp.stationary)
    # sign * log(lam) = theta * rho for arrivals, -theta * rho for services
    rho = sign * math.log(lam) / theta
    sigma = max(0.0, -math.log(float(nu.min())) / theta)
    char = SpectralChar(theta=theta, lam=lam, nu=nu, sigma=sigma, rho=rho)
    mmp._char_cache[key] = char
    return char


def characterize_arrival(mmp: Mmp, theta: float) -> SpectralChar:
    """(sigma, rho) envelope of an arrival process at theta > 0."""
    if theta <= 0:
        raise ModelError(f"theta must be > 0, got {theta}")
    return _characterize(mmp, theta, +1)


def characterize_service_mmp(mmp: Mmp, theta: float) -> SpectralChar:
    """(sigma, rho) envelope of a Markov service process at theta > 0.

    Uses the exponential matrix at -theta, so rho lower-bounds the offered
    service: E[exp(-theta S(t, t+k))] <= exp(theta (sigma - rho k)).
    """
    if theta <= 0:
        raise ModelError(f"theta must be > 0, got {theta}")
    return _characterize(mmp, theta, -1)
