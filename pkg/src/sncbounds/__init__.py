"""Delay and backlog bounds for tandem networks of Markov-modulated queues."""

from .engine import (
    BoundCurve,
    OptimizedBound,
    XiConstant,
    analyze_curve,
    delay_quantile,
    mart_backlog,
    mart_delay,
    optimize_theta,
    optimized_mart_backlog,
    optimized_mart_delay,
    optimized_pmoo_backlog,
    optimized_pmoo_delay,
    pmoo_backlog,
    pmoo_delay,
    pmoo_service_bgf,
    xi_constant,
)
from .genfunc import RationalGf, coeff, eval_gf, gf_product, radius, tail_sum
from .mmp import (
    Constant,
    Mmp,
    Poisson,
    ScaledBernoulli,
    SpectralChar,
    characterize_arrival,
    exp_transition_matrix,
    mgf_emission,
    perron,
    reversed_transition,
    stationary_distribution,
    support_bounds,
)
from .network import (
    ConstantRate,
    FlowSpec,
    MarkovService,
    TandemNetwork,
    ThetaDomain,
    characterize_service,
    check_martingale_site,
    flows_at,
    h_only_flows,
    parse_network,
    remove_server,
    theta_star,
)
from .sim import SimConfig, SimResult, empirical_tail, simulate, tail_quantile

__version__ = "0.1.0"
