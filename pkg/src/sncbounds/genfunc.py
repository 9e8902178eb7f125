"""Products of geometric series: coefficients, evaluation, weighted tails.

A bounding series is held as  c * prod_j 1 / (1 - a_j z)  with the positive
prefactor c stored as a natural log and the pole rates a_j > 0 in a flat
list.  All coefficient work uses the forward convolution recurrence

    out[k] = in[k] + a * out[k-1]

whose terms are all positive, so repeated or nearly equal poles cost no
accuracy.  Coefficients are returned in the linear domain; values below
1e-300 underflow to 0, which is far beyond any violation probability of
interest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError

UNDERFLOW_FLOOR = 1e-300
DEFAULT_REL_TOL = 1e-10


@dataclass(frozen=True)
class RationalGf:
    """Prefactor exp(log_prefactor) times a product of geometric factors."""

    log_prefactor: float = 0.0
    pole_rates: tuple[float, ...] = ()

    def __post_init__(self):
        rates = tuple(float(a) for a in self.pole_rates)
        if any(a <= 0 for a in rates):
            raise DivergenceError(f"pole rates must be > 0, got {rates}")
        object.__setattr__(self, "pole_rates", rates)

    @property
    def n_poles(self) -> int:
        return len(self.pole_rates)


def gf_product(factors: list[RationalGf] | tuple[RationalGf, ...]) -> RationalGf:
    """Product of bounding series: log-prefactors add, pole lists concatenate."""
    log_c = 0.0
    rates: list[float] = []
    for f in factors:
        log_c += f.log_prefactor
        rates.extend(f.pole_rates)
    return RationalGf(log_c, tuple(rates))


def radius(gf: RationalGf) -> float:
    """Radius of convergence, 1 / max pole rate (inf with no poles)."""
    if not gf.pole_rates:
        return math.inf
    return 1.0 / max(gf.pole_rates)


def _coeff_rows(pole_rates, k: int) -> np.ndarray:
    """Rows of coefficients of the partial products, prefactor excluded.

    Row j holds coefficients 0..k of prod_{l<=j} 1/(1 - a_l z); row 0 is
    the unit sequence (1, 0, 0, ...).
    """
    n = len(pole_rates)
    rows = np.zeros((n + 1, k + 1))
    rows[0, 0] = 1.0
    for j, a in enumerate(pole_rates, start=1):
        prev = rows[j - 1]
        out = rows[j]
        acc = 0.0
        for i in range(k + 1):
            acc = prev[i] + a * acc
            out[i] = acc
    return rows


def coeff(gf: RationalGf, k: int) -> float:
    """Exact k-th Taylor coefficient (positive; 0 below the underflow floor)."""
    if k < 0:
        raise ValueError(f"coefficient index must be >= 0, got {k}")
    base = _coeff_rows(gf.pole_rates, k)[-1, k]
    value = math.exp(gf.log_prefactor) * base
    return value if value >= UNDERFLOW_FLOOR else 0.0


def eval_gf(gf: RationalGf, z: float) -> float:
    """Value c * prod 1/(1 - a_j z) for z strictly inside the radius."""
    if z < 0:
        raise ValueError(f"evaluation point must be >= 0, got {z}")
    log_val = gf.log_prefactor
    for j, a in enumerate(gf.pole_rates):
        if a * z >= 1.0:
            raise DivergenceError(
                f"z={z:g} is at or beyond the radius 1/{a:g} of pole {j}",
                pole=a,
            )
        log_val -= math.log1p(-a * z)
    return math.exp(log_val)


def tail_sum(
    gf: RationalGf, r: float, T: int, rel_tol: float = DEFAULT_REL_TOL
) -> float:
    """Weighted tail  sum_{u>=0} r^u * coeff(gf, T+u).

    Computed exactly by peeling poles one at a time:  with f the
    coefficients of P u {a} and g' the tail sums of P alone,

        g_T(P u {a}) = (f_T(P u {a}) + r * g_{T+1}(P)) / (1 - r a).

    Every term is positive, so there is no cancellation, and the work is
    O(n (T + n)) regardless of how close r is to the radius.  The result
    is exact to rounding; rel_tol is accepted for interface stability but
    the returned error is always far below it.
    """
    if r < 0:
        raise ValueError(f"tail weight must be >= 0, got {r}")
    if T < 0:
        raise ValueError(f"tail start must be >= 0, got {T}")
    n = gf.n_poles
    if n == 0:
        return math.exp(gf.log_prefactor) if T == 0 else 0.0
    a_max = max(gf.pole_rates)
    if r * a_max >= 1.0:
        raise DivergenceError(
            f"tail weight r={r:g} is at or beyond the radius 1/{a_max:g}",
            pole=a_max,
        )
    if r == 0.0:
        return coeff(gf, T)
    rows = _coeff_rows(gf.pole_rates, T + n)
    g = 0.0  # tail of the empty product at index T+n >= 1
    for j in range(1, n + 1):
        k = T + n - j
        g = (rows[j, k] + r * g) / (1.0 - r * gf.pole_rates[j - 1])
    value = math.exp(gf.log_prefactor) * g
    return value if value >= UNDERFLOW_FLOOR else 0.0
