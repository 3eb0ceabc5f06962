"""
Per-slot bandwidth allocation for the bids served away from their field
cloudlet.

Minimize the total weighted utilization  sum_b xi_b*lambda_b/r_b  subject to
l_b <= r_b <= u_b and the link capacities  sum_b v_mb*r_b <= R_m. For fixed
link prices gamma the optimal rates have the closed form

    r_b = clamp( sqrt(xi_b*lambda_b / sum_m gamma_m*v_mb), l_b, u_b )

so the problem is solved by projected ascent on the dual prices.
"""

import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .constants import FIELD
from .model import links, links_on_path, tier_of, qos_weight
from .utils import BandwidthError

LOG = logging.getLogger(__name__)

METHODS = ('linesearch', 'diminishing')

# Relative closeness to a bound below which a rate counts as clamped
CLAMP_TOL = 1e-9


# ----------------------------------------------------------------------

@dataclass(frozen=True)
class Tolerances:
    """
    Convergence tolerances (relative), iteration budget, dual update rule,
    and the default lower rate bound as a fraction of the base bandwidth.

    The 'diminishing' rule scales its steps by the link capacities only, not
    by the magnitude of the prices. With real rates (bits/s) and small QoS
    weights the optimal prices are many orders of magnitude below that scale
    and the rule does not converge within any practical budget; it is meant
    for small, normalized instances. 'linesearch' has no such limitation.
    """
    feasibility: float = 1e-6
    slackness: float = 1e-6
    stationarity: float = 1e-6
    iterations: int = 100000
    method: str = 'linesearch'
    lower_fraction: float = 0.1

    def __post_init__(self):
        if self.method not in METHODS:
            raise BandwidthError('unknown dual update method "{}", use one of: {}',
                                 self.method, ', '.join(METHODS))
        if min(self.feasibility, self.slackness, self.stationarity) <= 0:
            raise BandwidthError('tolerances must be positive')
        if self.iterations <= 0:
            raise BandwidthError('the iteration budget must be positive')
        if not 0 < self.lower_fraction <= 1:
            raise BandwidthError('the lower bound fraction must be in (0, 1]')


@dataclass
class FlowSet:
    """
    The N flows of a slot over the M links of the topology:
      * xi, load, lower, upper: per-flow arrays (N)
      * incidence: link-flow matrix V (M x N), V[m,b] = 1 if flow b uses link m
      * capacity: link capacities R (M)
    """
    bids: List[int]
    links: List[str]
    cloudlets: List[str]
    xi: np.ndarray
    load: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    incidence: np.ndarray
    capacity: np.ndarray

    def __post_init__(self):
        n, m = len(self.bids), len(self.links)
        for name in ('xi', 'load', 'lower', 'upper'):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(n)
            setattr(self, name, arr)
        self.incidence = np.asarray(self.incidence, dtype=float).reshape(m, n)
        self.capacity = np.asarray(self.capacity, dtype=float).reshape(m)
        if np.any(self.lower <= 0) or np.any(self.lower > self.upper):
            raise BandwidthError('rate bounds must satisfy 0 < lower <= upper')
        if np.any(self.load < 0) or np.any(self.xi < 0):
            raise BandwidthError('loads and weights must be non-negative')
        floor = self.incidence @ self.lower
        bad = np.nonzero(floor > self.capacity * (1 + 1e-12))[0]
        if len(bad):
            raise BandwidthError('lower rate bounds exceed the capacity of link {}',
                                 self.links[bad[0]])

    def __len__(self):
        return len(self.bids)

    @property
    def weight(self):
        """The objective weights xi*lambda"""
        return self.xi * self.load


@dataclass
class KktResiduals:
    stationarity: float
    feasibility: float
    slackness: float
    link_slackness: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def worst(self):
        return max(self.stationarity, self.feasibility, self.slackness)


@dataclass
class Allocation:
    rates: np.ndarray
    duals: np.ndarray
    objective: float
    residuals: KktResiduals
    iterations: int
    converged: bool
    method: str

    def utilization(self, flows):
        if not len(flows.links):
            return np.zeros(0)
        return (flows.incidence @ self.rates) / flows.capacity

    def binding_links(self, flows, tol=1e-6):
        """Ids of the links with a positive price and a saturated capacity"""
        util = self.utilization(flows)
        return [m for i, m in enumerate(flows.links)
                if self.duals[i] > 0 and util[i] >= 1 - tol]


# ----------------------------------------------------------------------

def build_flow_set(solution, book, topology, catalog, loads, lower_fraction=0.1):
    """
    Build the flows of a slot from the non-field placements of a frame
    solution.
      @param loads (dict): traffic load (bits) of every placed bid in the slot
      @param lower_fraction (float): lower rate bound, as a fraction of the
        base bandwidth of the VM type
    """
    all_links = links(topology)
    index = {link.id: i for i, link in enumerate(all_links)}
    capacity = np.array([link.capacity for link in all_links], dtype=float)
    bids, cloudlets, xi, load, lower, upper, cols = [], [], [], [], [], [], []
    for b, (c, p, m) in sorted(solution.placements().items()):
        bid = book.bids[b]
        if tier_of(topology, bid.ap, c) == FIELD:
            continue
        path = [index[k] for k in links_on_path(topology, bid.ap, c)]
        rmin = catalog.vm(bid.vm_type).base_bandwidth
        bids.append(b)
        cloudlets.append(c)
        xi.append(qos_weight(topology, bid.ap, c))
        load.append(loads.get(b, 0.0))
        lower.append(lower_fraction * rmin)
        upper.append(min(capacity[j] for j in path))
        cols.append(path)
    incidence = np.zeros((len(all_links), len(bids)))
    for n, path in enumerate(cols):
        incidence[path, n] = 1.0
    return FlowSet(bids, [link.id for link in all_links], cloudlets,
                   np.array(xi, dtype=float), np.array(load, dtype=float),
                   np.array(lower, dtype=float), np.array(upper, dtype=float),
                   incidence, capacity)


def primal_from_duals(flows, duals):
    """
    The optimal rates for fixed link prices
      @param duals (array): link prices gamma (M), non-negative
      @return (array): the rates (N)
    """
    gamma = np.asarray(duals, dtype=float)
    if np.any(gamma < 0):
        raise BandwidthError('negative link price')
    price = flows.incidence.T @ gamma
    w = flows.weight
    with np.errstate(divide='ignore', invalid='ignore'):
        free = np.where(price > 0, np.sqrt(w / np.where(price > 0, price, 1.0)), np.inf)
    rates = np.clip(free, flows.lower, flows.upper)
    rates[w == 0] = flows.lower[w == 0]
    return rates


def objective(flows, rates):
    return float(np.sum(flows.weight / rates))


def kkt_report(flows, allocation_or_rates, duals=None):
    """
    Measure how far a pair (rates, duals) is from the optimality conditions:
      * stationarity, relative, for the interior flows with positive weight;
        sign conditions of the bound multipliers for the clamped ones
      * primal feasibility, relative to capacities and bounds
      * complementary slackness, gamma_m*|load_m - R_m| relative to the
        objective
    """
    if isinstance(allocation_or_rates, Allocation):
        rates, duals = allocation_or_rates.rates, allocation_or_rates.duals
    else:
        rates = np.asarray(allocation_or_rates, dtype=float)
    gamma = np.asarray(duals, dtype=float)
    if not len(flows):
        return KktResiduals(0.0, 0.0, 0.0, np.zeros(len(flows.links)))

    w = flows.weight
    price = flows.incidence.T @ gamma
    with np.errstate(divide='ignore', invalid='ignore'):
        marginal = w / rates**2
    at_lower = rates <= flows.lower * (1 + CLAMP_TOL)
    at_upper = rates >= flows.upper * (1 - CLAMP_TOL)
    active = w > 0
    stat = np.zeros(len(flows))
    interior = active & ~at_lower & ~at_upper
    stat[interior] = np.abs(marginal[interior] - price[interior]) / marginal[interior]
    low = active & at_lower & ~at_upper
    stat[low] = np.maximum(0.0, marginal[low] - price[low]) / marginal[low]
    up = active & at_upper & ~at_lower
    stat[up] = np.maximum(0.0, price[up] - marginal[up]) / marginal[up]

    load = flows.incidence @ rates
    feas = np.maximum(0.0, load - flows.capacity) / flows.capacity
    box = np.concatenate([np.maximum(0.0, flows.lower - rates) / flows.lower,
                          np.maximum(0.0, rates - flows.upper) / flows.upper])
    obj = float(np.sum(w / rates)) or 1.0
    link_cs = gamma * np.abs(load - flows.capacity) / obj
    return KktResiduals(float(stat.max(initial=0.0)),
                        float(max(feas.max(initial=0.0), box.max(initial=0.0))),
                        float(link_cs.max(initial=0.0)), link_cs)


def _converged(res, tol):
    return (res.stationarity <= tol.stationarity and
            res.feasibility <= tol.feasibility and
            res.slackness <= tol.slackness)


def _score(res, tol):
    return max(res.stationarity / tol.stationarity,
               res.feasibility / tol.feasibility,
               res.slackness / tol.slackness)


def _link_price(flows, gamma, m):
    """
    The price of link m that makes its load equal to its capacity, with the
    other prices fixed (zero if the link is not overloaded at price zero)
    """
    users = flows.incidence[m] > 0
    if not np.any(users):
        return 0.0
    w = flows.weight[users]
    lo_b, up_b = flows.lower[users], flows.upper[users]
    other = (flows.incidence[:, users].T @ gamma) - gamma[m]
    other = np.maximum(other, 0.0)
    cap = flows.capacity[m]

    def load(g):
        s = other + g
        with np.errstate(divide='ignore', invalid='ignore'):
            r = np.where(s > 0, np.sqrt(w / np.where(s > 0, s, 1.0)), np.inf)
        r = np.clip(r, lo_b, up_b)
        r[w == 0] = lo_b[w == 0]
        return float(r.sum())

    if load(0.0) <= cap:
        return 0.0
    hi = float(np.max(w / lo_b**2 - other))
    lo = 0.0
    hi = max(hi, 0.0)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if load(mid) > cap:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return hi


def solve_allocation(flows, tolerances=None, duals=None):
    """
    Projected dual ascent on the link prices.
      * 'linesearch' sweeps the links, setting each price to the exact
        maximizer of the dual along that coordinate
      * 'diminishing' takes gradient steps step_0/sqrt(t), with step_0 the
        inverse of the worst possible link overload
    Stop when all residuals are within tolerance; else return the best
    iterate after the iteration budget, flagged as not converged.
      @param flows (FlowSet):
      @param tolerances (Tolerances):
      @param duals (array): initial link prices (default: zero)
      @return (Allocation):
    """
    tol = tolerances or Tolerances()
    m = len(flows.links)
    gamma = np.zeros(m) if duals is None else np.array(duals, dtype=float)
    if np.any(gamma < 0):
        raise BandwidthError('negative link price')
    if not len(flows):
        return Allocation(np.zeros(0), np.zeros(m), 0.0,
                          KktResiduals(0.0, 0.0, 0.0, np.zeros(m)), 0, True, tol.method)

    step0 = 1.0 / max(float(np.max(flows.incidence @ flows.upper)), 1e-300)
    best = None
    it = 0
    while it < tol.iterations:
        if tol.method == 'linesearch':
            for k in range(m):
                gamma[k] = _link_price(flows, gamma, k)
                it += 1
        else:
            it += 1
            rates = primal_from_duals(flows, gamma)
            gamma = np.maximum(0.0, gamma + step0 / np.sqrt(it) *
                               (flows.incidence @ rates - flows.capacity))
        rates = primal_from_duals(flows, gamma)
        res = kkt_report(flows, rates, gamma)
        if best is None or _score(res, tol) < best[0]:
            best = (_score(res, tol), rates, gamma.copy(), res)
        if _converged(res, tol):
            break

    _, rates, gamma, res = best
    converged = _converged(res, tol)
    alloc = Allocation(rates, gamma, objective(flows, rates), res, it, converged,
                       tol.method)
    if converged:
        LOG.debug('bandwidth: %d flows converged in %d iterations, objective %g',
                  len(flows), it, alloc.objective)
    else:
        LOG.info('bandwidth: %d flows not converged after %d iterations (residual %g)',
                 len(flows), it, res.worst())
    return alloc


def allocation_records(flows, allocation, slot=None):
    """
    One record per flow: bid, cloudlet, load, rate, path links and binding
    links on its path
    """
    binding = set(allocation.binding_links(flows))
    rows = []
    for n, b in enumerate(flows.bids):
        path = [flows.links[m] for m in np.nonzero(flows.incidence[:, n])[0]]
        row = {'bid': b, 'cloudlet': flows.cloudlets[n],
               'load': float(flows.load[n]), 'rate': float(allocation.rates[n]),
               'links': ' '.join(path),
               'binding': ' '.join(m for m in path if m in binding)}
        if slot is not None:
            row = {'slot': slot, **row}
        rows.append(row)
    return rows
