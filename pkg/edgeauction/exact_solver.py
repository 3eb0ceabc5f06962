"""
Exact maximization of the frame profit, for instances of desk size.

The served bids of a sequence always form a prefix, so the search branches
on the cut point of every (AP, VM type) sequence (how many of its bids are
served). For every complete choice of cut points the revenue is fixed, and a
packing search finds the cheapest placement of the served bids onto PM
instances, if any.

Two entry points:
  * solve_exhaustive: enumerates every combination of cut points, for tiny
    instances only
  * solve_bnb: depth-first branch and bound over the cut points, with an
    optional warm start from the heuristic
"""

import logging
import time
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Optional

from .constants import EXHAUSTIVE_MAX_BIDS
from .model import reachable_cloudlets, pm_types_at, links_on_path, links, validate
from .auction import Solution, CostTable, profit, check_feasibility
from .heuristics import run_heuristic
from .utils import SolverError

LOG = logging.getLogger(__name__)

# Maximum number of packing states remembered by one packing search
MAX_MEMO = 500000


# ----------------------------------------------------------------------

@dataclass(frozen=True)
class SolverLimits:
    max_bids: int = 200
    time_budget: float = 60.0              # seconds
    node_budget: int = 2000000
    warm_start: bool = True

    def __post_init__(self):
        if not (self.max_bids > 0 and self.time_budget > 0 and self.node_budget > 0):
            raise SolverError('solver limits must be positive')


@dataclass
class Instance:
    topology: object
    catalog: object
    book: object
    limits: SolverLimits = field(default_factory=SolverLimits)

    def __post_init__(self):
        problems = validate(self.topology, self.catalog)
        if problems:
            raise SolverError('invalid instance: {}', '; '.join(map(str, problems)))


@dataclass
class SolveReport:
    solution: Solution
    objective: Fraction
    optimal: bool
    nodes: int
    wall_time: float
    method: str = 'bnb'


class _BudgetExhausted(Exception):
    pass


class _Counter:
    """
    Count search nodes across a whole solve, and stop it on the node or time
    budget
    """

    def __init__(self, limits):
        self.limits = limits
        self.nodes = 0
        self.start = time.perf_counter()

    def tick(self):
        self.nodes += 1
        if self.nodes > self.limits.node_budget:
            raise _BudgetExhausted()
        if not self.nodes % 1000 and self.elapsed() > self.limits.time_budget:
            raise _BudgetExhausted()

    def elapsed(self):
        return time.perf_counter() - self.start


# ----------------------------------------------------------------------

class Packer:
    """
    Minimum-cost placement of a set of bids onto PM instances, subject to
    the PM resource supplies, the PM inventories and the link capacities.

    Bids are placed in the given order; for every bid the candidates are the
    reachable cloudlets (field, shallow, deep), their PM types in catalog
    order, the instances already open and finally the next instance. New
    instances are only ever opened at the next free index.
    """

    def __init__(self, instance, counter=None):
        self.topology = instance.topology
        self.catalog = instance.catalog
        self.book = instance.book
        self.counter = counter or _Counter(instance.limits)
        self.costs = CostTable(self.topology, self.catalog)
        self.link_ids = [link.id for link in links(self.topology)]
        self.capacity = tuple(link.capacity for link in links(self.topology))
        self.resources = self.catalog.resources
        self._options = {}

    def options(self, bid_id):
        """
        Placement options of a bid: (cloudlet, pm_type, link positions,
        bandwidth, demand vector, serving cost, idle cost, inventory)
        """
        if bid_id in self._options:
            return self._options[bid_id]
        bid = self.book.bids[bid_id]
        vm = self.catalog.vm(bid.vm_type)
        demand = tuple(vm.resource_demand.get(r, 0) for r in self.resources)
        out = []
        for c, _ in reachable_cloudlets(self.topology, bid.ap):
            path = tuple(self.link_ids.index(m)
                         for m in links_on_path(self.topology, bid.ap, c.id))
            unit = self.costs.serving_cost(bid.ap, c.id, bid.vm_type)
            for p in pm_types_at(c, self.catalog):
                if not self.catalog.can_host(p, bid.vm_type):
                    continue
                out.append((c.id, p, path, vm.base_bandwidth, demand, unit,
                            self.costs.idle_cost(c.id, p),
                            min(len(self.book), c.pm_inventory[p])))
        self._options[bid_id] = out
        return out

    def min_cost(self, bid_id):
        """
        Lowest serving cost of a bid over all its options, leaving PM idle
        power aside; None if the bid can not be placed anywhere
        """
        opts = self.options(bid_id)
        return min(o[5] for o in opts) if opts else None

    def pack(self, bid_ids, budget=None):
        """
        Find the cheapest placement of the bids with cost strictly below the
        budget (no bound if None)
          @return (tuple): (cost, placements) or None if there is none
        """
        self.bids = list(bid_ids)
        if any(not self.options(b) for b in self.bids):
            return None
        self.rest = [Fraction(0)] * (len(self.bids) + 1)
        for i in range(len(self.bids)-1, -1, -1):
            self.rest[i] = self.rest[i+1] + self.min_cost(self.bids[i])
        self.best_cost = float('inf') if budget is None else budget
        self.best = None
        self.open = {}
        self.links = list(self.capacity)
        self.assign = {}
        self.memo = {}
        self._search(0, Fraction(0))
        if self.best is None:
            return None
        return self.best_cost, self.best

    def _state(self, i):
        return (i, tuple(sorted((k, tuple(sorted(v))) for k, v in self.open.items())),
                tuple(self.links))

    def _search(self, i, cost):
        self.counter.tick()
        if i == len(self.bids):
            if cost < self.best_cost:
                self.best_cost = cost
                self.best = dict(self.assign)
            return
        if cost + self.rest[i] >= self.best_cost:
            return
        key = self._state(i)
        seen = self.memo.get(key)
        if seen is not None and seen <= cost:
            return
        if seen is not None or len(self.memo) < MAX_MEMO:
            self.memo[key] = cost

        b = self.bids[i]
        for c, p, path, bw, demand, unit, idle, limit in self.options(b):
            if any(self.links[j] < bw for j in path):
                continue
            for j in path:
                self.links[j] -= bw
            inst = self.open.setdefault((c, p), [])
            tried = set()
            for m, res in enumerate(inst):
                if res in tried or any(q > r for q, r in zip(demand, res)):
                    continue
                tried.add(res)
                inst[m] = tuple(r - q for r, q in zip(res, demand))
                self.assign[b] = (c, p, m+1)
                self._search(i+1, cost + unit)
                inst[m] = res
            if len(inst) < limit:
                supply = self.catalog.pm(p).resource_supply
                inst.append(tuple(supply[r] - q for r, q in zip(self.resources, demand)))
                self.assign[b] = (c, p, len(inst))
                self._search(i+1, cost + unit + idle)
                inst.pop()
            if not inst:
                del self.open[(c, p)]
            self.assign.pop(b, None)
            for j in path:
                self.links[j] += bw


# ----------------------------------------------------------------------

def _served(book, cuts):
    """The ids of the bids served under a choice of cut points, in id order"""
    out = []
    for key, k in cuts.items():
        out += [b.id for b in book.sequence(*key)[:k]]
    return sorted(out)


def _cut_revenue(book, key, k):
    return k * book.price(k, *key)


def _report(instance, solution, found, optimal, counter, method):
    """
    Recompute the objective from scratch and check the solution
    """
    objective = profit(solution, instance.topology, instance.catalog, instance.book)
    if objective != found:
        raise SolverError('objective mismatch: search {} vs evaluation {}', found, objective)
    problems = check_feasibility(solution, instance.topology, instance.catalog, instance.book)
    if problems:
        raise SolverError('infeasible solution: {}', '; '.join(map(str, problems)))
    report = SolveReport(solution, objective, optimal, counter.nodes,
                         counter.elapsed(), method)
    LOG.info('%s: objective=%s optimal=%s nodes=%d time=%.3fs', method,
             float(objective), optimal, report.nodes, report.wall_time)
    return report


def solve_exhaustive(instance):
    """
    Enumerate every combination of cut points (in lexicographic order) and
    keep the first optimum found
      @param instance (Instance): at most EXHAUSTIVE_MAX_BIDS bids
      @return (SolveReport):
    """
    book = instance.book
    if len(book) > EXHAUSTIVE_MAX_BIDS:
        raise SolverError('exhaustive search accepts at most {} bids, got {}',
                          EXHAUSTIVE_MAX_BIDS, len(book))
    keys = book.keys()
    counter = _Counter(SolverLimits(max_bids=EXHAUSTIVE_MAX_BIDS,
                                    time_budget=float('inf'),
                                    node_budget=10**12))
    packer = Packer(instance, counter)
    best, best_placements = Fraction(0), {}
    for cut in product(*(range(len(book.sequence(*key))+1) for key in keys)):
        cuts = dict(zip(keys, cut))
        rev = sum((_cut_revenue(book, key, k) for key, k in cuts.items()), Fraction(0))
        if rev <= best:
            continue
        result = packer.pack(_served(book, cuts), budget=rev - best)
        if result is not None:
            cost, placements = result
            best, best_placements = rev - cost, placements
    solution = Solution.from_placements(book, best_placements)
    return _report(instance, solution, best, True, counter, 'exhaustive')


def solve_bnb(instance, warm_start: Optional[Solution] = None):
    """
    Depth-first branch and bound over the cut points of every sequence.

    Sequences are branched in decreasing order of their best revenue; the
    bound of a node is the revenue of the fixed cut points minus a lower
    bound of their serving cost, plus the best such gain every remaining
    sequence may add on its own. When the node or time budget runs out,
    return the best solution found so far, flagged as not optimal.
      @param instance (Instance):
      @param warm_start (Solution): an initial incumbent (e.g. from the
        heuristic)
      @return (SolveReport):
    """
    book, limits = instance.book, instance.limits
    if len(book) > limits.max_bids:
        raise SolverError('the instance has {} bids, the limit is {}',
                          len(book), limits.max_bids)
    counter = _Counter(limits)
    packer = Packer(instance, counter)

    # Per sequence: gain of every cut point, with serving costs bounded below
    plans = []
    for key in book.keys():
        seq = book.sequence(*key)
        gains, mincost = [(0, Fraction(0))], Fraction(0)
        for k, bid in enumerate(seq, 1):
            c = packer.min_cost(bid.id)
            if c is None:
                break
            mincost += c
            gains.append((k, _cut_revenue(book, key, k) - mincost))
        top = max(_cut_revenue(book, key, k) for k in range(len(seq)+1))
        gains.sort(key=lambda g: (-g[1], g[0]))
        plans.append((top, key, gains))
    plans.sort(key=lambda p: -p[0])
    suffix = [Fraction(0)] * (len(plans) + 1)
    for d in range(len(plans)-1, -1, -1):
        suffix[d] = suffix[d+1] + max(Fraction(0), plans[d][2][0][1])

    incumbent = {'value': Fraction(0), 'placements': {}}
    if warm_start is not None:
        value = profit(warm_start, instance.topology, instance.catalog, book)
        if value > 0:
            incumbent = {'value': value, 'placements': warm_start.placements()}
            LOG.debug('bnb: warm start at %s', float(value))

    cuts = {}

    def branch(d, revenue, bound_cost):
        counter.tick()
        if revenue - bound_cost + suffix[d] <= incumbent['value']:
            return
        if d == len(plans):
            result = packer.pack(_served(book, cuts),
                                 budget=revenue - incumbent['value'])
            if result is not None:
                cost, placements = result
                incumbent['value'] = revenue - cost
                incumbent['placements'] = placements
            return
        _, key, gains = plans[d]
        for k, gain in gains:
            cuts[key] = k
            rev = _cut_revenue(book, key, k)
            branch(d+1, revenue + rev, bound_cost + (rev - gain))
        del cuts[key]

    optimal = True
    try:
        branch(0, Fraction(0), Fraction(0))
    except _BudgetExhausted:
        optimal = False
        LOG.info('bnb: budget exhausted after %d nodes', counter.nodes)
    solution = Solution.from_placements(book, incumbent['placements'])
    return _report(instance, solution, incumbent['value'], optimal, counter, 'bnb')


def solve(instance, heuristic_solution=None):
    """
    Run the branch and bound, warm-started from a heuristic solution if the
    limits ask for it
    """
    if instance.limits.warm_start and heuristic_solution is None:
        heuristic_solution = run_heuristic(instance.book, instance.topology,
                                           instance.catalog).solution
    return solve_bnb(instance, heuristic_solution if instance.limits.warm_start else None)
