"""Tandem topology, stability thresholds, and the server-removal transform.

Servers are numbered 1..n and every flow crosses a contiguous interval of
them; flow 1 is the flow of interest and spans the whole tandem.  Each
server is either a fixed-rate link or a Markov-modulated one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InstabilityError, ModelError
from .mmp import (
    Constant,
    EmissionDist,
    Mmp,
    Poisson,
    ScaledBernoulli,
    SpectralChar,
    characterize_arrival,
    characterize_service_mmp,
)

THETA_CAP = 1e4
THETA_STAR_REL_WIDTH = 1e-9


# ---------------------------------------------------------------------------
# Service models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstantRate:
    """Work-conserving server offering exactly `rate` units every slot."""

    rate: float

    def __post_init__(self):
        if self.rate <= 0:
            raise ModelError(f"service rate must be > 0, got {self.rate}")


@dataclass(frozen=True)
class MarkovService:
    """Work-conserving server whose per-slot capacity is an MMP."""

    mmp: Mmp


ServiceModel = ConstantRate | MarkovService


def characterize_service(model: ServiceModel, theta: float) -> SpectralChar:
    """(sigma, rho) envelope of a service model at theta > 0."""
    if theta <= 0:
        raise ModelError(f"theta must be > 0, got {theta}")
    if isinstance(model, ConstantRate):
        return SpectralChar(
            theta=theta,
            lam=math.exp(-theta * model.rate),
            nu=np.ones(1),
            sigma=0.0,
            rho=model.rate,
        )
    return characterize_service_mmp(model.mmp, theta)


def service_mean_rate(model: ServiceModel) -> float:
    return model.rate if isinstance(model, ConstantRate) else model.mmp.mean_rate()


def service_min_emission(model: ServiceModel) -> float:
    return model.rate if isinstance(model, ConstantRate) else model.mmp.min_emission()


# ---------------------------------------------------------------------------
# Topology
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FlowSpec:
    """A flow entering at server `first` and leaving after server `last`."""

    id: int
    first: int
    last: int
    arrival: Mmp

    def __post_init__(self):
        if self.id < 1:
            raise ModelError(f"flow id must be >= 1, got {self.id}")
        if not 1 <= self.first <= self.last:
            raise ModelError(
                f"flow {self.id} has an invalid path [{self.first}, {self.last}]"
            )

    def crosses(self, j: int) -> bool:
        return self.first <= j <= self.last


class TandemNetwork:
    """Ordered servers plus flows; flow 1 spans the tandem.

    `TandemNetwork.reduced` builds the relaxed variant produced by
    `remove_server`, where flow 1 may be absent (it crossed only the
    removed server) but every retained path is still inside 1..n.
    """

    def __init__(self, servers, flows, _relaxed=False):
        servers = tuple(servers)
        flows = tuple(flows)
        n = len(servers)
        ids = [f.id for f in flows]
        if len(set(ids)) != len(ids):
            raise ModelError(f"duplicate flow ids: {sorted(ids)}")
        for f in flows:
            if f.last > n:
                raise ModelError(
                    f"flow {f.id} ends at server {f.last} but there are only {n}"
                )
        if not _relaxed:
            if n == 0:
                raise ModelError("network needs at least one server")
            if not flows or flows[0].id != 1:
                raise ModelError("flow 1 (the flow of interest) must be listed first")
            f1 = flows[0]
            if f1.first != 1 or f1.last != n:
                raise ModelError(
                    f"flow 1 must cross the whole tandem (first=1, last={n}), "
                    f"got [{f1.first}, {f1.last}]"
                )
        self.servers = servers
        self.flows = flows
        self._theta_star_cache: dict[int, float] = {}

    @classmethod
    def reduced(cls, servers, flows) -> "TandemNetwork":
        return cls(servers, flows, _relaxed=True)

    @property
    def n_servers(self) -> int:
        return len(self.servers)

    def flow(self, flow_id: int) -> FlowSpec:
        for f in self.flows:
            if f.id == flow_id:
                return f
        raise ModelError(f"no flow with id {flow_id}")

    def __repr__(self):
        paths = ", ".join(f"{f.id}:[{f.first},{f.last}]" for f in self.flows)
        return f"TandemNetwork(n={self.n_servers}, flows={{{paths}}})"


def flows_at(net: TandemNetwork, j: int) -> set[int]:
    """Ids of the flows crossing server j."""
    if not 1 <= j <= net.n_servers:
        raise ModelError(f"server index {j} out of range 1..{net.n_servers}")
    return {f.id for f in net.flows if f.crosses(j)}


def h_only_flows(net: TandemNetwork, h: int) -> set[int]:
    """Ids of the flows whose whole path is the single server h."""
    return {f.id for f in net.flows if f.first == h and f.last == h}


# ---------------------------------------------------------------------------
# Stability thresholds
# ---------------------------------------------------------------------------

def _rate_slack(net: TandemNetwork, j: int, theta: float) -> float:
    """rho_S_j(theta) - sum of rho_A_i(theta) over flows crossing j.

    Returns -inf when some characterization overflows at this theta, which
    can only happen deep in the unstable region.
    """
    try:
        slack = characterize_service(net.servers[j - 1], theta).rho
        for f in net.flows:
            if f.crosses(j):
                slack -= characterize_arrival(f.arrival, theta).rho
        return slack
    except OverflowError:
        return -math.inf


def theta_star(net: TandemNetwork, j: int) -> float:
    """Supremum of theta with positive rate slack at server j.

    Returns inf when arrivals are almost surely below the service in every
    slot (certified from emission supports).  Without that certificate the
    search stops at THETA_CAP and the cap is returned; optimization then
    treats the domain as [0, cap].
    """
    if not 1 <= j <= net.n_servers:
        raise ModelError(f"server index {j} out of range 1..{net.n_servers}")
    cached = net._theta_star_cache.get(j)
    if cached is not None:
        return cached
    server = net.servers[j - 1]
    mean_in = sum(f.arrival.mean_rate() for f in net.flows if f.crosses(j))
    if service_mean_rate(server) <= mean_in:
        raise InstabilityError(
            j, f"mean load {mean_in:g} vs mean service {service_mean_rate(server):g}"
        )
    max_in = sum(f.arrival.max_emission() for f in net.flows if f.crosses(j))
    if max_in < service_min_emission(server):
        net._theta_star_cache[j] = math.inf
        return math.inf

    lo = 1e-3
    while _rate_slack(net, j, lo) <= 0.0:
        lo /= 10.0
        if lo < 1e-12:
            raise InstabilityError(j, "no positive rate slack near theta=0")
    hi = lo
    capped = False
    while True:
        hi = hi * 2.0
        if hi >= THETA_CAP:
            if _rate_slack(net, j, THETA_CAP) > 0.0:
                capped = True
            hi = THETA_CAP
            break
        if _rate_slack(net, j, hi) <= 0.0:
            break
    if not capped:
        # g > 0 at lo, g <= 0 at hi: bisect
        while hi - lo > THETA_STAR_REL_WIDTH * hi:
            mid = 0.5 * (lo + hi)
            if _rate_slack(net, j, mid) > 0.0:
                lo = mid
            else:
                hi = mid
        hi = 0.5 * (lo + hi)
    net._theta_star_cache[j] = hi
    return hi


@dataclass(frozen=True)
class ThetaDomain:
    """Interval (0, hi] or (0, hi) on which a bound may be evaluated."""

    hi: float
    hi_inclusive: bool

    def effective_hi(self, margin: float = 1e-9) -> float:
        if self.hi_inclusive:
            return self.hi
        return self.hi * (1.0 - margin)


# ---------------------------------------------------------------------------
# Martingale site admissibility and server removal
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SiteReport:
    """Outcome of the admissibility check for martingale analysis at h."""

    h: int
    ok: bool
    violations: tuple[str, ...] = ()


def check_martingale_site(net: TandemNetwork, h: int) -> SiteReport:
    """Admissibility of server h: constant-rate upstream, no early exits.

    Every server before h must be constant-rate, and a flow entering at or
    before h must stay at least until h.
    """
    if not 1 <= h <= net.n_servers:
        raise ModelError(f"server index {h} out of range 1..{net.n_servers}")
    violations = []
    for j in range(1, h):
        if not isinstance(net.servers[j - 1], ConstantRate):
            violations.append(f"server {j} upstream of {h} is not constant-rate")
    for f in net.flows:
        if f.first <= h and f.last < h:
            violations.append(
                f"flow {f.id} enters at server {f.first} but leaves after "
                f"server {f.last} < {h}"
            )
    return SiteReport(h=h, ok=not violations, violations=tuple(violations))


def admissible_sites(net: TandemNetwork) -> list[int]:
    return [h for h in range(1, net.n_servers + 1) if check_martingale_site(net, h).ok]


def remove_server(net: TandemNetwork, h: int) -> TandemNetwork:
    """Tandem without server h; paths are rerouted across the gap.

    Flows whose whole path was server h disappear, every other path keeps
    its processes and stays contiguous in the renumbered tandem.
    """
    if not 1 <= h <= net.n_servers:
        raise ModelError(f"server index {h} out of range 1..{net.n_servers}")
    servers = tuple(s for j, s in enumerate(net.servers, start=1) if j != h)
    flows = []
    for f in net.flows:
        if f.first == h and f.last == h:
            continue
        new_first = f.first if f.first <= h else f.first - 1
        new_last = f.last - 1 if f.last >= h else f.last
        flows.append(FlowSpec(f.id, new_first, new_last, f.arrival))
    return TandemNetwork.reduced(servers, flows)


# ---------------------------------------------------------------------------
# JSON document parsing
# ---------------------------------------------------------------------------

def _parse_emission(doc, path: str) -> EmissionDist:
    if not isinstance(doc, dict) or "type" not in doc:
        raise ModelError("emission must be an object with a 'type'", path)
    kind = doc["type"]
    try:
        if kind == "constant":
            return Constant(float(doc["value"]))
        if kind == "bernoulli_scaled":
            return ScaledBernoulli(float(doc["value"]), float(doc["prob"]))
        if kind == "poisson":
            return Poisson(float(doc["mean"]))
    except KeyError as missing:
        raise ModelError(f"missing field {missing}", path) from None
    except (TypeError, ValueError) as bad:
        raise ModelError(str(bad), path) from None
    raise ModelError(f"unknown emission type {kind!r}", path)


def _parse_mmp(doc, path: str) -> Mmp:
    if not isinstance(doc, dict):
        raise ModelError("expected an object", path)
    if "transition" not in doc or "emissions" not in doc:
        raise ModelError("needs 'transition' and 'emissions'", path)
    transition = doc["transition"]
    emissions = [
        _parse_emission(e, f"{path}.emissions[{i}]")
        for i, e in enumerate(doc["emissions"])
    ]
    try:
        return Mmp(transition, emissions)
    except ModelError as err:
        raise ModelError(str(err), path) from None


def _parse_service(doc, path: str) -> ServiceModel:
    if not isinstance(doc, dict) or "type" not in doc:
        raise ModelError("service must be an object with a 'type'", path)
    kind = doc["type"]
    if kind == "constant_rate":
        if "rate" not in doc:
            raise ModelError("missing field 'rate'", path)
        return ConstantRate(float(doc["rate"]))
    if kind == "mmp":
        return MarkovService(_parse_mmp(doc, path))
    raise ModelError(f"unknown service type {kind!r}", path)


def parse_network(document: dict) -> TandemNetwork:
    """Validated network from the JSON document schema.

    Servers are listed in tandem order with 1-based ids; flow 1 must span
    the whole tandem.  Errors carry the offending field path.
    """
    if not isinstance(document, dict):
        raise ModelError("network document must be an object", "$")
    for key in ("servers", "flows"):
        if key not in document or not isinstance(document[key], list):
            raise ModelError(f"missing or non-list field '{key}'", "$")
    servers = []
    for idx, sdoc in enumerate(document["servers"]):
        path = f"servers[{idx}]"
        if not isinstance(sdoc, dict) or "service" not in sdoc:
            raise ModelError("server entry needs a 'service'", path)
        declared = sdoc.get("id", idx + 1)
        if declared != idx + 1:
            raise ModelError(
                f"server ids must be 1..n in order, got {declared}", path
            )
        servers.append(_parse_service(sdoc["service"], f"{path}.service"))
    flows = []
    for idx, fdoc in enumerate(document["flows"]):
        path = f"flows[{idx}]"
        if not isinstance(fdoc, dict):
            raise ModelError("flow entry must be an object", path)
        for key in ("id", "first", "last", "arrival"):
            if key not in fdoc:
                raise ModelError(f"missing field '{key}'", path)
        try:
            flow = FlowSpec(
                int(fdoc["id"]),
                int(fdoc["first"]),
                int(fdoc["last"]),
                _parse_mmp(fdoc["arrival"], f"{path}.arrival"),
            )
        except ModelError as err:
            raise ModelError(str(err), path) from None
        flows.append(flow)
    if not any(f.id == 1 for f in flows):
        raise ModelError("flow of interest (id 1) is missing", "$.flows")
    flows.sort(key=lambda f: f.id != 1)  # flow 1 first, order kept otherwise
    try:
        return TandemNetwork(servers, flows)
    except ModelError as err:
        raise ModelError(str(err), "$") from None
