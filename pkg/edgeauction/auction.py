"""
Bid bookkeeping and evaluation of candidate solutions: revenue, electricity
cost, lost revenue, profit, and the feasibility constraints C1-C10 of the
placement problem.

All money amounts are exact Fractions in currency units. Bid prices sit on
the money grid; energy and QoS terms are exact products of the scenario
figures, so two solvers reaching the same placement report the very same
objective.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Tuple

from .constants import LAST_MILE, AGGREGATION, SECONDS_PER_HOUR
from .model import (Violation, reachable_cloudlets, links_on_path, links,
                    find_cloudlet, tier_of, qos_weight)
from .utils import ModelError, FeasibilityError, EdgeAuctionError, exact

LOG = logging.getLogger(__name__)

# Relative slack for floating point capacity comparisons
EPS = 1e-9


# ----------------------------------------------------------------------

@dataclass(frozen=True)
class Bid:
    id: int
    ap: str
    vm_type: str
    price: Fraction        # willingness price, currency/frame


class BidBook:
    """
    The bids of one frame, arranged in one sequence per (AP, VM type) pair,
    sorted by decreasing price (ties by increasing bid id). Ranks start at 1.
    """

    def __init__(self, bids, topology, catalog):
        self.topology = topology
        self.catalog = catalog
        self.bids = {b.id: b for b in sorted(bids, key=lambda b: b.id)}
        seqs = defaultdict(list)
        for b in self.bids.values():
            seqs[(b.ap, b.vm_type)].append(b)
        # deterministic key order: AP order, then catalog order
        self.sequences = {}
        for a in topology.aps:
            for v in catalog.vm_types:
                if (a, v) in seqs:
                    self.sequences[(a, v)] = tuple(
                        sorted(seqs[(a, v)], key=lambda b: (-b.price, b.id)))
        self.rank = {b.id: k
                     for seq in self.sequences.values()
                     for k, b in enumerate(seq, 1)}

    def __len__(self):
        return len(self.bids)

    def __iter__(self):
        return iter(self.bids.values())

    def keys(self):
        return list(self.sequences)

    def sequence(self, ap, vm_type):
        return self.sequences.get((ap, vm_type), ())

    def price(self, k, ap, vm_type):
        """
        Price of the bid at rank k (e_{k,a}^v); rank 0 contributes nothing
        """
        if k == 0:
            return Fraction(0)
        return self.sequences[(ap, vm_type)][k-1].price

    def servable_at(self, cloudlet_id):
        """
        The bids whose AP reaches the cloudlet (the B_c set)
        """
        aps = {a for a in self.topology.aps
               if any(c.id == cloudlet_id
                      for c, _ in reachable_cloudlets(self.topology, a))}
        return [b for b in self.bids.values() if b.ap in aps]

    def __repr__(self):
        return '<BidBook bids={} sequences={}>'.format(len(self.bids),
                                                       len(self.sequences))


def build_bid_book(bids, topology, catalog):
    """
    Check the bids and arrange them into price-sorted sequences
    """
    seen = set()
    for b in bids:
        if b.id in seen:
            raise ModelError('duplicated bid id: {}', b.id)
        seen.add(b.id)
        if b.ap not in topology.aps:
            raise ModelError('bid {} references unknown AP: {}', b.id, b.ap)
        if b.vm_type not in catalog.vm_types:
            raise ModelError('bid {} references unknown VM type: {}', b.id, b.vm_type)
        if b.price < 0:
            raise ModelError('bid {} has a negative price', b.id)
    book = BidBook(bids, topology, catalog)
    LOG.debug('bid book: %r', book)
    return book


# ----------------------------------------------------------------------

@dataclass
class Solution:
    """
    The binary decision variables of one frame:
      * x: (k, ap, vm_type) -> 0/1, the bid at rank k of the sequence is served
      * y: (m, cloudlet, pm_type) -> 0/1, PM instance m is on
      * z: (bid, m, cloudlet, pm_type) -> 0/1, the bid runs on that PM instance
    Missing keys are zeros.
    """
    x: Dict[Tuple[int, str, str], int] = field(default_factory=dict)
    y: Dict[Tuple[int, str, str], int] = field(default_factory=dict)
    z: Dict[Tuple[int, int, str, str], int] = field(default_factory=dict)

    @classmethod
    def from_placements(cls, book, placements):
        """
        Build a solution from a map bid id -> (cloudlet, pm_type, pm_index)
        """
        sol = cls()
        for bid_id in sorted(placements):
            c, p, m = placements[bid_id]
            b = book.bids[bid_id]
            sol.x[(book.rank[bid_id], b.ap, b.vm_type)] = 1
            sol.y[(m, c, p)] = 1
            sol.z[(bid_id, m, c, p)] = 1
        return sol

    def placements(self):
        """
        Map bid id -> (cloudlet, pm_type, pm_index) for the assigned bids
        """
        out = {}
        for (b, m, c, p), val in sorted(self.z.items()):
            if val:
                out.setdefault(b, (c, p, m))
        return out

    def opened(self):
        return sorted(k for k, v in self.y.items() if v)


@dataclass(frozen=True)
class ProfitBreakdown:
    revenue: Fraction
    electricity_cost: Fraction
    lost_revenue: Fraction

    @property
    def profit(self):
        return self.revenue - self.electricity_cost - self.lost_revenue


# ----------------------------------------------------------------------

class CostTable:
    """
    Exact per-unit cost terms of a topology, memoized per table:
      * vm_cost: energy of one VM of a type at a cloudlet over one frame
      * idle_cost: energy of one idle PM of a type at a cloudlet over one frame
      * penalty: QoS term of one bid of a type from an AP served at a cloudlet

    Scenario figures enter as the decimals they were written as (0.1 is
    1/10), so every term is an exact rational.
    """

    def __init__(self, topology, catalog):
        self.topology = topology
        self.catalog = catalog
        self._energy = exact(topology.frame_length) * exact(topology.pue) / SECONDS_PER_HOUR
        self._vm = {}
        self._idle = {}
        self._penalty = {}

    def vm_cost(self, cloudlet_id, vm_id):
        key = cloudlet_id, vm_id
        if key not in self._vm:
            c = find_cloudlet(self.topology, cloudlet_id)
            vm = self.catalog.vm(vm_id)
            self._vm[key] = (self._energy * exact(c.electricity_price) *
                             exact(vm.peak_power))
        return self._vm[key]

    def idle_cost(self, cloudlet_id, pm_id):
        key = cloudlet_id, pm_id
        if key not in self._idle:
            c = find_cloudlet(self.topology, cloudlet_id)
            pm = self.catalog.pm(pm_id)
            self._idle[key] = (self._energy * exact(c.electricity_price) *
                               exact(pm.idle_power))
        return self._idle[key]

    def penalty(self, ap, cloudlet_id, vm_id):
        key = ap, cloudlet_id, vm_id
        if key not in self._penalty:
            xi = qos_weight(self.topology, ap, cloudlet_id)
            vm = self.catalog.vm(vm_id)
            self._penalty[key] = Fraction(0) if not xi else (
                exact(xi) * exact(vm.max_data_per_frame) /
                (exact(self.topology.frame_length) * exact(vm.base_bandwidth)))
        return self._penalty[key]

    def serving_cost(self, ap, cloudlet_id, vm_id):
        return self.vm_cost(cloudlet_id, vm_id) + self.penalty(ap, cloudlet_id, vm_id)


# ----------------------------------------------------------------------

def _x(solution, k, a, v):
    return solution.x.get((k, a, v), 0)


def cut_points(solution, book):
    """
    The number of served bids (k*) of each sequence; error if x is not
    monotone within a sequence (constraint C6)
    """
    cuts = {}
    for (a, v), seq in book.sequences.items():
        prev, cut = 1, 0
        for k in range(1, len(seq)+1):
            xk = _x(solution, k, a, v)
            if xk > prev:
                raise FeasibilityError('non-monotone x in sequence ({}, {}) at rank {}',
                                       a, v, k)
            if xk:
                cut = k
            prev = xk
        cuts[(a, v)] = cut
    return cuts


def revenue(solution, book):
    """
    Revenue of one frame: every sequence adds k*e_k - (k-1)*e_{k-1} for each
    served rank k, which telescopes to k* times the price of the last served
    bid.
    """
    cut_points(solution, book)
    total = Fraction(0)
    for (a, v), seq in book.sequences.items():
        for k in range(1, len(seq)+1):
            if _x(solution, k, a, v):
                total += k*book.price(k, a, v) - (k-1)*book.price(k-1, a, v)
    return total


def electricity_cost(solution, topology, catalog, book, costs=None):
    """
    Energy cost of one frame: the peak power of every placed VM plus the
    idle power of every PM that is on, times PUE, frame length and the
    electricity price of each cloudlet
    """
    costs = costs or CostTable(topology, catalog)
    total = Fraction(0)
    for (b, m, c, p), val in solution.z.items():
        if not val:
            continue
        if not solution.y.get((m, c, p)):
            raise FeasibilityError('bid {} is assigned to PM {}#{} at {}, which is off',
                                   b, p, m, c)
        total += costs.vm_cost(c, book.bids[b].vm_type)
    for (m, c, p), val in solution.y.items():
        if val:
            total += costs.idle_cost(c, p)
    return total


def lost_revenue(solution, topology, catalog, book, costs=None):
    """
    QoS penalty of one frame: every bid placed away from its field cloudlet
    costs xi_{a,c} times its utilization bound D/(T r_min)
    """
    costs = costs or CostTable(topology, catalog)
    total = Fraction(0)
    for (b, m, c, p), val in solution.z.items():
        if val:
            bid = book.bids[b]
            total += costs.penalty(bid.ap, c, bid.vm_type)
    return total


def profit_breakdown(solution, topology, catalog, book, costs=None):
    costs = costs or CostTable(topology, catalog)
    return ProfitBreakdown(revenue(solution, book),
                           electricity_cost(solution, topology, catalog, book, costs),
                           lost_revenue(solution, topology, catalog, book, costs))


def profit(solution, topology, catalog, book, costs=None):
    """
    Revenue minus electricity cost minus lost revenue
    """
    return profit_breakdown(solution, topology, catalog, book, costs).profit


# ----------------------------------------------------------------------

def served_bids(solution, book):
    """
    Ids of the served bids (x = 1 at their rank), in id order
    """
    return [b.id for b in book
            if _x(solution, book.rank[b.id], b.ap, b.vm_type)]


def served_ratio(solution, book):
    if not len(book):
        return 0.0
    return len(served_bids(solution, book)) / len(book)


def local_prices(solution, book):
    """
    The local price of every sequence with served bids: the price of its
    last served bid
    """
    return {key: book.price(k, *key)
            for key, k in cut_points(solution, book).items() if k}


def max_instances(book, cloudlet, pm_id):
    """
    Upper index of the PM instances of a type at a cloudlet
    """
    return min(len(book), cloudlet.pm_inventory.get(pm_id, 0))


def check_feasibility(solution, topology, catalog, book):
    """
    Check a solution against constraints C1-C10.
      @return (list): Violation records named after the failing constraint
    """
    out = []

    # Variable domains (C8-C10)
    for (k, a, v), val in sorted(solution.x.items()):
        if val not in (0, 1):
            out.append(Violation('C8', '{}/{}#{}'.format(a, v, k), 'x is not binary'))
        if not 1 <= k <= len(book.sequence(a, v)):
            out.append(Violation('C8', '{}/{}#{}'.format(a, v, k), 'no such bid rank'))
    for (m, c, p), val in sorted(solution.y.items()):
        ent = '{}/{}#{}'.format(c, p, m)
        if val not in (0, 1):
            out.append(Violation('C10', ent, 'y is not binary'))
        try:
            cl = find_cloudlet(topology, c)
        except EdgeAuctionError:
            out.append(Violation('C10', ent, 'unknown cloudlet'))
            continue
        if not 1 <= m <= max_instances(book, cl, p):
            out.append(Violation('C10', ent, 'PM index out of range'))
    for (b, m, c, p), val in sorted(solution.z.items()):
        if val not in (0, 1):
            out.append(Violation('C9', str(b), 'z is not binary'))
        if b not in book.bids:
            out.append(Violation('C9', str(b), 'unknown bid'))

    # C6: served prefix of every sequence
    for (a, v), seq in book.sequences.items():
        for k in range(2, len(seq)+1):
            if _x(solution, k, a, v) > _x(solution, k-1, a, v):
                out.append(Violation('C6', '{}/{}#{}'.format(a, v, k),
                                     'rank served while rank {} is not'.format(k-1)))

    # C7: PM instances are switched on in index order
    for (m, c, p), val in sorted(solution.y.items()):
        if val and m > 1 and not solution.y.get((m-1, c, p)):
            out.append(Violation('C7', '{}/{}#{}'.format(c, p, m),
                                 'PM on while instance {} is off'.format(m-1)))

    # C1: every served bid placed exactly once, at a reachable cloudlet
    assigned = defaultdict(int)
    for (b, m, c, p), val in solution.z.items():
        if not val or b not in book.bids:
            continue
        bid = book.bids[b]
        reach = {cl.id for cl, _ in reachable_cloudlets(topology, bid.ap)}
        if c in reach:
            assigned[b] += val
        else:
            out.append(Violation('C1', str(b),
                                 'placed at unreachable cloudlet {}'.format(c)))
    for bid in book:
        xb = _x(solution, book.rank[bid.id], bid.ap, bid.vm_type)
        if assigned[bid.id] != xb:
            out.append(Violation('C1', str(bid.id),
                                 'assigned {} times, x = {}'.format(assigned[bid.id], xb)))

    # C2: resource supply of each PM
    demand = defaultdict(lambda: defaultdict(float))
    for (b, m, c, p), val in solution.z.items():
        if val and b in book.bids:
            vm = catalog.vm(book.bids[b].vm_type)
            for r, q in vm.resource_demand.items():
                demand[(m, c, p)][r] += q
    for (m, c, p), dem in sorted(demand.items()):
        ent = '{}/{}#{}'.format(c, p, m)
        if not solution.y.get((m, c, p)):
            out.append(Violation('C2', ent, 'VMs placed on a PM that is off'))
            continue
        supply = catalog.pm(p).resource_supply
        for r, q in dem.items():
            if q > supply.get(r, 0) * (1 + EPS):
                out.append(Violation('C2', ent, '{} demand {:g} exceeds supply {:g}'
                                     .format(r, q, supply.get(r, 0))))

    # C3-C5: base bandwidth over every link
    load = defaultdict(float)
    for (b, m, c, p), val in solution.z.items():
        if not val or b not in book.bids:
            continue
        bid = book.bids[b]
        try:
            path = links_on_path(topology, bid.ap, c)
        except ModelError:
            continue
        for link_id in path:
            load[link_id] += catalog.vm(bid.vm_type).base_bandwidth
    names = {LAST_MILE: 'C3', AGGREGATION: 'C4'}
    for link in links(topology):
        if load[link.id] > link.capacity * (1 + EPS):
            out.append(Violation(names.get(link.kind, 'C5'), link.id,
                                 'base bandwidth {:g} exceeds capacity {:g}'
                                 .format(load[link.id], link.capacity)))

    return out


# ----------------------------------------------------------------------

def solution_records(solution, book, topology):
    """
    Flatten a solution into one record per placed bid
    """
    prices = local_prices(solution, book)
    rows = []
    for bid_id, (c, p, m) in sorted(solution.placements().items()):
        b = book.bids[bid_id]
        rows.append({'bid': b.id, 'ap': b.ap, 'vm_type': b.vm_type,
                     'cloudlet': c, 'tier': tier_of(topology, b.ap, c),
                     'pm_type': p, 'pm_index': m,
                     'price_paid': prices.get((b.ap, b.vm_type), Fraction(0))})
    return rows


def solution_from_records(rows, book):
    """
    Rebuild a solution from flat placement records (bid, cloudlet, pm_type,
    pm_index)
    """
    placements = {}
    for row in rows:
        bid_id = int(row['bid'])
        if bid_id not in book.bids:
            raise ModelError('placement record for unknown bid {}', bid_id)
        placements[bid_id] = (row['cloudlet'], row['pm_type'], int(row['pm_index']))
    return Solution.from_placements(book, placements)
