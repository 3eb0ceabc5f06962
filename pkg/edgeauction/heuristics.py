"""
The two-phase auction heuristic.

  1. VM pricing: for every (AP, VM type) sequence estimate the cost of
     serving one VM, pick the number of bids to serve that maximizes the
     estimated profit and fix the local price.
  2. VM distribution: repeatedly open the PM instance (of any type, at any
     cloudlet) whose packing list has the highest utility, until every
     selected bid is placed or nothing else fits.

The result is reconciled into a feasible Solution: bids that could not be
placed are rejected, together with any lower-priced bid of the same sequence
so that the served bids stay a prefix of the sequence.
"""

import logging
import time
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Tuple

from .constants import FIELD
from .model import (reachable_cloudlets, cloudlets, links_on_path, links,
                    last_mile_id, pm_types_at, qos_weight)
from .auction import Solution
from .utils import SolverError, exact

LOG = logging.getLogger(__name__)

QOS_ESTIMATES = ('verbatim', 'per-frame')


# ----------------------------------------------------------------------

@dataclass(frozen=True)
class HeuristicOptions:
    """
      * break_even: also serve a sequence whose best estimated profit is 0
      * qos_estimate: 'verbatim' charges xi*D/r_min per bid when estimating
        costs, 'per-frame' charges xi*D/(T*r_min), the lost revenue actually
        billed
    """
    break_even: bool = False
    qos_estimate: str = 'verbatim'

    def __post_init__(self):
        if self.qos_estimate not in QOS_ESTIMATES:
            raise SolverError('invalid QoS estimate "{}", use one of: {}',
                              self.qos_estimate, ', '.join(QOS_ESTIMATES))


@dataclass
class PricingOutcome:
    unit_cost: Dict[Tuple[str, str], Fraction] = field(default_factory=dict)
    served_count: Dict[Tuple[str, str], int] = field(default_factory=dict)
    local_price: Dict[Tuple[str, str], Fraction] = field(default_factory=dict)
    estimated_profit: Dict[Tuple[str, str], Fraction] = field(default_factory=dict)
    capacity: Dict[Tuple[str, str], Fraction] = field(default_factory=dict)
    served: List[int] = field(default_factory=list)


@dataclass
class DistributionState:
    opened: Dict[Tuple[str, str], int] = field(default_factory=dict)
    residual: Dict[str, float] = field(default_factory=dict)
    packing: Dict[Tuple[str, str], List[int]] = field(default_factory=dict)
    utility: Dict[Tuple[str, str], float] = field(default_factory=dict)
    rounds: List[Tuple[str, str, float]] = field(default_factory=list)
    unplaced: List[int] = field(default_factory=list)


@dataclass
class HeuristicResult:
    solution: Solution
    pricing: PricingOutcome
    distribution: DistributionState
    dropped: List[int]
    timings: Dict[str, float]


# ----------------------------------------------------------------------

def _unit_cost(topology, catalog, ap, c, tier, pm_id, vm_id, qos_estimate):
    """
    Estimated cost of one VM of a type on one PM of a type at a cloudlet:
    the VM energy plus its share of the PM idle energy, plus the QoS term.
    The estimate uses the IT power only; PUE enters the realized electricity
    cost, not the pricing phase.
    """
    vm, pm = catalog.vm(vm_id), catalog.pm(pm_id)
    share = sum(exact(vm.resource_demand.get(r, 0)) / exact(pm.resource_supply[r])
                for r in catalog.resources) / len(catalog.resources)
    energy = (topology.frame_hours * exact(c.electricity_price) *
              (exact(vm.peak_power) + exact(pm.idle_power) * share))
    if tier == FIELD:
        return energy
    qos = exact(qos_weight(topology, ap, c.id)) * exact(vm.max_data_per_frame)
    qos /= exact(vm.base_bandwidth)
    if qos_estimate == 'per-frame':
        qos /= exact(topology.frame_length)
    return energy + qos


def price_vms(book, topology, catalog, options=None):
    """
    First phase: choose the served bids and the local price of every
    (AP, VM type) sequence
      @param book (BidBook): the bids of the frame
      @param options (HeuristicOptions): pricing switches
      @return (PricingOutcome):
    """
    options = options or HeuristicOptions()
    out = PricingOutcome()
    for v in catalog.vm_types:
        for a in topology.aps:
            seq = book.sequence(a, v)
            if not seq:
                continue
            n = len(seq)
            vm = catalog.vm(v)
            g_total, phi = Fraction(0), Fraction(0)
            for c, tier in reachable_cloudlets(topology, a):
                for p in pm_types_at(c, catalog):
                    if not catalog.can_host(p, v):
                        continue
                    g = Fraction(min(c.pm_inventory[p], n))
                    if tier != FIELD:
                        limit = exact(last_mile_capacity(topology, a)) / exact(vm.base_bandwidth)
                        g = min(g, limit)
                    g_total += g
                    phi += g * _unit_cost(topology, catalog, a, c, tier, p, v,
                                          options.qos_estimate)
            out.capacity[(a, v)] = g_total
            if g_total <= 0:
                out.served_count[(a, v)] = 0
                out.local_price[(a, v)] = Fraction(0)
                continue
            phi /= g_total
            best_rho, best_k, omega = Fraction(0), 0, Fraction(0)
            for k, bid in enumerate(seq, 1):
                rho = k * (bid.price - phi)
                if rho > best_rho or (rho == best_rho and (rho > 0 or options.break_even)):
                    best_rho, best_k, omega = rho, k, bid.price
            out.unit_cost[(a, v)] = phi
            out.served_count[(a, v)] = best_k
            out.local_price[(a, v)] = omega
            out.estimated_profit[(a, v)] = best_rho
            out.served += [b.id for b in seq[:best_k]]
            LOG.debug('pricing %s/%s: phi=%s k=%d omega=%s', a, v,
                      float(phi), best_k, omega)
    out.served.sort(key=lambda b: (book.rank[b], b))
    LOG.info('pricing: %d of %d bids selected', len(out.served), len(book))
    return out


def last_mile_capacity(topology, ap):
    """The last-mile capacity of an AP (the R_a bound)"""
    for link in links(topology):
        if link.id == last_mile_id(ap):
            return link.capacity
    return 0


# ----------------------------------------------------------------------

def _fits(used, demand, supply):
    return all(used.get(r, 0) + q <= supply.get(r, 0) for r, q in demand.items())


def distribute_vms(pricing, book, topology, catalog):
    """
    Second phase: place the selected bids onto PM instances, opening at every
    round the candidate PM with the highest utility
      @return (tuple): the placements (bid -> (cloudlet, pm_type, index)) and
        the final DistributionState
    """
    state = DistributionState()
    state.residual = {link.id: link.capacity for link in links(topology)}
    pending = list(pricing.served)
    reach = defaultdict(set)
    for a in topology.aps:
        for c, _ in reachable_cloudlets(topology, a):
            reach[c.id].add(a)
    all_cloudlets = cloudlets(topology)
    for c in all_cloudlets:
        for p in pm_types_at(c, catalog):
            state.opened[(c.id, p)] = 0

    placements = {}
    frame = float(topology.frame_length)
    while pending:
        best, best_u = None, 0.0
        for p in catalog.pm_types:
            pm = catalog.pm(p)
            for c in all_cloudlets:
                if c.pm_inventory.get(p, 0) <= 0:
                    continue
                if state.opened[(c.id, p)] >= c.pm_inventory[p]:
                    continue
                packing, used = [], {}
                residual = dict(state.residual)
                energy, revenue, penalty = float(pm.idle_power), 0.0, 0.0
                for b in pending:
                    bid = book.bids[b]
                    if bid.ap not in reach[c.id]:
                        continue
                    vm = catalog.vm(bid.vm_type)
                    if not _fits(used, vm.resource_demand, pm.resource_supply):
                        continue
                    path = links_on_path(topology, bid.ap, c.id)
                    if any(residual[m] < vm.base_bandwidth for m in path):
                        continue
                    for m in path:
                        residual[m] -= vm.base_bandwidth
                    for r, q in vm.resource_demand.items():
                        used[r] = used.get(r, 0) + q
                    packing.append(b)
                    energy += vm.peak_power
                    revenue += float(pricing.local_price[(bid.ap, bid.vm_type)])
                    penalty += (qos_weight(topology, bid.ap, c.id) *
                                vm.max_data_per_frame / (frame * vm.base_bandwidth))
                if not packing:
                    continue
                denominator = c.electricity_price * energy + penalty
                u = revenue / denominator if denominator > 0 else float('inf')
                state.packing[(c.id, p)] = packing
                state.utility[(c.id, p)] = u
                if u > best_u:
                    best, best_u = (c, p, packing), u
        if best is None:
            break
        c, p, packing = best
        state.opened[(c.id, p)] += 1
        index = state.opened[(c.id, p)]
        for b in packing:
            bid = book.bids[b]
            placements[b] = (c.id, p, index)
            for m in links_on_path(topology, bid.ap, c.id):
                state.residual[m] -= catalog.vm(bid.vm_type).base_bandwidth
        state.rounds.append((c.id, p, best_u))
        LOG.debug('distribution: open %s#%d at %s, %d bids, u=%g',
                  p, index, c.id, len(packing), best_u)
        taken = set(packing)
        pending = [b for b in pending if b not in taken]

    state.unplaced = pending
    LOG.info('distribution: %d PMs opened, %d bids placed, %d unplaced',
             len(state.rounds), len(placements), len(pending))
    return placements, state


# ----------------------------------------------------------------------

def reconcile(placements, pricing, book):
    """
    Keep the placed bids that form a served prefix of their sequence, and
    renumber the PM instances left in use so that they start at 1 and have
    no gaps.
      @return (tuple): the kept placements, and the ids of the dropped bids
    """
    kept, dropped = {}, []
    for key, k_hat in pricing.served_count.items():
        seq = book.sequence(*key)
        gap = False
        for bid in seq[:k_hat]:
            if gap or bid.id not in placements:
                gap = True
                dropped.append(bid.id)
            else:
                kept[bid.id] = placements[bid.id]

    renumber = {}
    for c, p, m in sorted(set(kept.values())):
        renumber[(c, p, m)] = sum(1 for key in renumber if key[:2] == (c, p)) + 1
    kept = {b: (c, p, renumber[(c, p, m)]) for b, (c, p, m) in kept.items()}
    return kept, sorted(dropped)


def run_heuristic(book, topology, catalog, options=None):
    """
    Run both phases and build a feasible Solution
      @return (HeuristicResult):
    """
    t0 = time.perf_counter()
    pricing = price_vms(book, topology, catalog, options)
    t1 = time.perf_counter()
    placements, state = distribute_vms(pricing, book, topology, catalog)
    t2 = time.perf_counter()
    kept, dropped = reconcile(placements, pricing, book)
    solution = Solution.from_placements(book, kept)
    if dropped:
        LOG.info('heuristic: %d selected bids dropped', len(dropped))
    return HeuristicResult(solution, pricing, state, dropped,
                           {'pricing': t1 - t0, 'distribution': t2 - t1})


def pricing_records(result, book):
    """
    One record per (AP, VM type) sequence with the pricing figures and the
    served and dropped counts of the frame
    """
    served = defaultdict(int)
    dropped = defaultdict(int)
    for b, _ in result.solution.placements().items():
        bid = book.bids[b]
        served[(bid.ap, bid.vm_type)] += 1
    for b in result.dropped:
        bid = book.bids[b]
        dropped[(bid.ap, bid.vm_type)] += 1
    rows = []
    for key in book.keys():
        rows.append({'ap': key[0], 'vm_type': key[1],
                     'unit_cost': result.pricing.unit_cost.get(key, Fraction(0)),
                     'served_count': result.pricing.served_count.get(key, 0),
                     'local_price': result.pricing.local_price.get(key, Fraction(0)),
                     'served': served[key], 'dropped': dropped[key]})
    return rows
