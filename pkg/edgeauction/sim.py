"""
The two time-scale simulation: at the start of every frame the bids are
generated (or carried over, with AP mobility) and the auction is solved;
every slot of the frame then samples the traffic loads and allocates the
link bandwidth among the bids served away from their field cloudlet.
"""

import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from .model import Violation
from .auction import (Bid, build_bid_book, profit_breakdown, check_feasibility,
                      served_bids, local_prices)
from .heuristics import run_heuristic, pricing_records
from .exact_solver import Instance, solve
from .bandwidth import build_flow_set, solve_allocation, allocation_records
from .utils import to_money, SolverError

LOG = logging.getLogger(__name__)

SOLVERS = ('heuristic', 'exact', 'both')


# ----------------------------------------------------------------------

@dataclass(frozen=True)
class PriceLaw:
    """Triangular distribution of the willingness price of a VM type"""
    low: Fraction
    mode: Fraction
    high: Fraction

    def sample(self, rng):
        if self.low == self.high:
            return to_money(self.low)
        return to_money(rng.triangular(float(self.low), float(self.mode),
                                       float(self.high)))


@dataclass(frozen=True)
class GeneratorConfig:
    bid_counts: Tuple[int, ...] = (50,)
    mix: Mapping[str, float] = field(default_factory=dict)
    price_laws: Mapping[str, PriceLaw] = field(default_factory=dict)
    mobility: float = 0.0
    persist: bool = False
    traffic_scale: float = 1.0
    seed: int = 0

    def check(self):
        """
        Check the generator invariants
          @return (list): Violation records
        """
        out = []
        if not self.bid_counts or any(n < 0 for n in self.bid_counts):
            out.append(Violation('generator', 'bids', 'bid counts must be non-negative'))
        if not self.mix:
            out.append(Violation('generator', 'mix', 'empty VM type mix'))
        for v, r in self.mix.items():
            if not r > 0:
                out.append(Violation('generator', v, 'mix ratio must be positive'))
            if v not in self.price_laws:
                out.append(Violation('generator', v, 'no price law'))
        for v, law in self.price_laws.items():
            if not (0 <= law.low <= law.mode <= law.high):
                out.append(Violation('price', v, 'price law needs 0 <= min <= mode <= max'))
        if not 0 <= self.mobility <= 1:
            out.append(Violation('generator', 'mobility', 'probability out of [0, 1]'))
        if self.traffic_scale < 0:
            out.append(Violation('generator', 'traffic', 'traffic scale is negative'))
        return out


@dataclass
class FrameRecord:
    frame: int
    solver: str
    bids: int
    served: int
    revenue: Fraction
    electricity_cost: Fraction
    lost_revenue: Fraction
    profit: Fraction
    heuristic_profit: Optional[Fraction] = None
    exact_profit: Optional[Fraction] = None
    exact_optimal: Optional[bool] = None
    dropped: int = 0
    prices: List[dict] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict)

    @property
    def served_ratio(self):
        return self.served / self.bids if self.bids else 0.0


@dataclass
class SlotRecord:
    frame: int
    slot: int
    flows: int
    objective: float
    iterations: int
    converged: bool
    stationarity: float
    feasibility: float
    slackness: float
    utilization: Dict[str, float] = field(default_factory=dict)
    allocations: List[dict] = field(default_factory=list)


@dataclass
class SimState:
    scenario: object
    rng: np.random.Generator
    frame: int = 0
    bids: List[Bid] = field(default_factory=list)


@dataclass
class SimulationResult:
    frames: List[FrameRecord] = field(default_factory=list)
    slots: List[SlotRecord] = field(default_factory=list)


# ----------------------------------------------------------------------

def type_counts(n, mix):
    """
    Split n bids among the VM types following the mix ratios, with
    largest-remainder rounding (ties go to the type listed first)
    """
    ratios = {v: Fraction(str(r)) for v, r in mix.items()}
    total = sum(ratios.values())
    quotas = {v: n * r / total for v, r in ratios.items()}
    counts = {v: int(q) for v, q in quotas.items()}
    order = sorted(enumerate(quotas), key=lambda e: (-(quotas[e[1]] - counts[e[1]]), e[0]))
    for _, v in order[:n - sum(counts.values())]:
        counts[v] += 1
    return counts


def generate_bids(config, frame_index, rng, aps, count=None):
    """
    Draw the bids of a frame: the number of bids comes from the schedule
    (unless given), split among VM types by the mix; every bid gets a
    uniformly drawn AP and a triangular price
      @param rng (numpy.random.Generator):
      @return (list): Bid objects, ids starting at 1
    """
    if count is None:
        count = config.bid_counts[frame_index % len(config.bid_counts)]
    bids = []
    for v, k in type_counts(count, config.mix).items():
        law = config.price_laws[v]
        for _ in range(k):
            ap = aps[int(rng.integers(len(aps)))]
            bids.append(Bid(len(bids) + 1, ap, v, law.sample(rng)))
    return bids


def _move(bids, config, rng, aps):
    """Resample the AP of every bid with the mobility probability"""
    out = []
    for b in bids:
        if rng.random() < config.mobility:
            b = replace(b, ap=aps[int(rng.integers(len(aps)))])
        out.append(b)
    return out


def run_frame(state, solver='heuristic', count=None):
    """
    Run the auction of one frame
      @param state (SimState): carries the bids and random generator between
        frames
      @param solver (str): heuristic | exact | both
      @return (tuple): FrameRecord, the chosen Solution, the BidBook
    """
    if solver not in SOLVERS:
        raise SolverError('unknown solver "{}", use one of: {}', solver, ', '.join(SOLVERS))
    sc = state.scenario
    topo, catalog, gen = sc.topology, sc.catalog, sc.generator
    if gen.persist and state.bids:
        bids = _move(state.bids, gen, state.rng, topo.aps)
    else:
        bids = generate_bids(gen, state.frame, state.rng, topo.aps, count)
    state.bids = bids
    book = build_bid_book(bids, topo, catalog)

    timings = {}
    heur = exact = None
    if solver != 'heuristic' and len(book) > sc.limits.max_bids:
        LOG.warning('frame %d: %d bids exceed the exact solver limit of %d, heuristic only',
                    state.frame, len(book), sc.limits.max_bids)
        solver = 'heuristic'
    if solver in ('heuristic', 'both'):
        heur = run_heuristic(book, topo, catalog, sc.heuristic)
        timings.update(heur.timings)
    if solver in ('exact', 'both'):
        instance = Instance(topo, catalog, book, sc.limits)
        exact = solve(instance, heur.solution if heur else None)
        timings['exact'] = exact.wall_time

    heur_profit = (profit_breakdown(heur.solution, topo, catalog, book).profit
                   if heur else None)
    if exact is not None and (heur is None or exact.objective >= heur_profit):
        chosen, name = exact.solution, 'exact'
    else:
        chosen, name = heur.solution, 'heuristic'

    problems = check_feasibility(chosen, topo, catalog, book)
    if problems:
        raise SolverError('frame {}: infeasible solution: {}', state.frame,
                          '; '.join(map(str, problems)))

    pb = profit_breakdown(chosen, topo, catalog, book)
    if heur is not None:
        prices = pricing_records(heur, book)
    else:
        omega = local_prices(chosen, book)
        prices = [{'ap': a, 'vm_type': v, 'local_price': omega.get((a, v), Fraction(0))}
                  for a, v in book.keys()]
    record = FrameRecord(state.frame, name, len(book), len(served_bids(chosen, book)),
                         pb.revenue, pb.electricity_cost, pb.lost_revenue, pb.profit,
                         heuristic_profit=heur_profit,
                         exact_profit=exact.objective if exact else None,
                         exact_optimal=exact.optimal if exact else None,
                         dropped=len(heur.dropped) if heur else 0,
                         prices=prices, timings=timings)
    LOG.info('frame %d (%s): %d/%d bids served, profit %s', state.frame, name,
             record.served, record.bids, float(record.profit))
    return record, chosen, book


def run_slots(solution, book, scenario, rng, frame=0):
    """
    Allocate the link bandwidth in every slot of a frame
      @return (list): SlotRecord objects, one per slot
    """
    topo, catalog = scenario.topology, scenario.catalog
    tol = scenario.bandwidth
    placed = sorted(solution.placements())
    out = []
    for slot in range(topo.slots_per_frame):
        loads = {}
        for b in placed:
            vm = catalog.vm(book.bids[b].vm_type)
            top = (scenario.generator.traffic_scale * vm.max_data_per_frame *
                   topo.slot_length / topo.frame_length)
            loads[b] = float(rng.uniform(0.0, top)) if top > 0 else 0.0
        flows = build_flow_set(solution, book, topo, catalog, loads, tol.lower_fraction)
        alloc = solve_allocation(flows, tol)
        util = alloc.utilization(flows)
        rec = SlotRecord(frame, slot, len(flows), alloc.objective, alloc.iterations,
                         alloc.converged, alloc.residuals.stationarity,
                         alloc.residuals.feasibility, alloc.residuals.slackness,
                         {m: float(u) for m, u in zip(flows.links, util)},
                         allocation_records(flows, alloc, slot))
        if not alloc.converged:
            LOG.warning('frame %d slot %d: bandwidth allocation did not converge', frame, slot)
        out.append(rec)
    return out


def simulate(scenario, seed=None, frames=1, solver='heuristic', count=None,
             slots=True):
    """
    Run several frames of a scenario, each followed by its slots
      @param seed (int): random seed (default: the scenario generator seed)
      @return (SimulationResult):
    """
    seed = scenario.generator.seed if seed is None else seed
    state = SimState(scenario, np.random.default_rng(seed))
    result = SimulationResult()
    for f in range(frames):
        state.frame = f
        record, solution, book = run_frame(state, solver, count)
        result.frames.append(record)
        if slots:
            result.slots += run_slots(solution, book, scenario, state.rng, f)
    return result


def compare_frame(scenario, count, seed):
    """
    Solve one generated frame with both the heuristic and the exact solver
    and compare them
      @param count (int): number of bids
      @param seed (int): random seed for the bids
      @return (tuple): a comparison row and the per-sequence price rows
    """
    rng = np.random.default_rng(seed)
    topo, catalog = scenario.topology, scenario.catalog
    bids = generate_bids(scenario.generator, 0, rng, topo.aps, count)
    book = build_bid_book(bids, topo, catalog)
    heur = run_heuristic(book, topo, catalog, scenario.heuristic)
    hp = profit_breakdown(heur.solution, topo, catalog, book).profit
    row = {'case': scenario.name, 'bids': count, 'seed': seed,
           'heuristic_profit': hp,
           'heuristic_served_ratio': len(served_bids(heur.solution, book)) / count if count else 0.0,
           'heuristic_time': sum(heur.timings.values()),
           'exact_profit': None, 'exact_optimal': None, 'exact_served_ratio': None,
           'exact_time': None, 'ratio': None}
    exact_prices = None
    if count <= scenario.limits.max_bids:
        report = solve(Instance(topo, catalog, book, scenario.limits), heur.solution)
        row.update({'exact_profit': report.objective, 'exact_optimal': report.optimal,
                    'exact_served_ratio': (len(served_bids(report.solution, book)) / count
                                           if count else 0.0),
                    'exact_time': report.wall_time})
        if report.objective > 0:
            row['ratio'] = float(hp / report.objective)
        exact_prices = local_prices(report.solution, book)
    else:
        LOG.warning('compare: %d bids exceed the exact solver limit', count)
    heur_prices = local_prices(heur.solution, book)
    prices = [{'case': scenario.name, 'bids': count, 'seed': seed, 'ap': a, 'vm_type': v,
               'heuristic_price': heur_prices.get((a, v), Fraction(0)),
               'exact_price': (None if exact_prices is None
                               else exact_prices.get((a, v), Fraction(0)))}
              for a, v in book.keys()]
    return row, prices
