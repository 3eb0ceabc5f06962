import time
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest

from edgeauction.model import VmType, PmType, Catalog
from edgeauction.auction import Bid, build_bid_book, check_feasibility, local_prices
from edgeauction.heuristics import (HeuristicOptions, PricingOutcome, price_vms,
                                    distribute_vms, reconcile, run_heuristic,
                                    pricing_records, last_mile_capacity)
from edgeauction.sim import generate_bids
from edgeauction.utils import SolverError, to_money


@pytest.fixture(scope='module')
def flat():
    """
    One VM type, one-hour frames and no QoS weights: the unit cost is the
    same everywhere, 8 * (0.5 + 0.25/4) = 4.5
    """
    catalog = Catalog(('cpu',),
                      {'v': VmType('v', {'cpu': 1}, 10e6, 1.5e9, 0.5, to_money(10))},
                      {'host': PmType('host', {'cpu': 4}, 0.25)})
    return catalog


@pytest.fixture(scope='module')
def flat_topology(make_topology):
    topo = make_topology(price=8.0, xi_shallow=0.0, xi_deep=0.0)
    return replace(topo, frame_length=3600.0)


def book(topology, catalog, prices, ap='1', vm_type='v'):
    bids = [Bid(i, ap, vm_type, to_money(p)) for i, p in enumerate(prices, 1)]
    return build_bid_book(bids, topology, catalog)


class TestPricing:

    def test_unit_cost(self, flat, flat_topology):
        out = price_vms(book(flat_topology, flat, [10]), flat_topology, flat)
        assert out.unit_cost[('1', 'v')] == Fraction(9, 2)

    def test_best_cut(self, flat, flat_topology):
        # estimated profits 5.5, 7 and -10.5
        out = price_vms(book(flat_topology, flat, [10, 8, 1]), flat_topology, flat)
        assert out.served_count[('1', 'v')] == 2
        assert out.local_price[('1', 'v')] == 8
        assert out.estimated_profit[('1', 'v')] == 7
        assert out.served == [1, 2]

    def test_all_below_cost(self, flat, flat_topology):
        out = price_vms(book(flat_topology, flat, [1, 2, 3]), flat_topology, flat)
        assert out.served_count[('1', 'v')] == 0
        assert out.local_price[('1', 'v')] == 0
        assert out.served == []

    def test_positive_tie_serves_more(self, flat, flat_topology):
        out = price_vms(book(flat_topology, flat, [6, 5.25]), flat_topology, flat)
        assert out.served_count[('1', 'v')] == 2

    @pytest.mark.parametrize('break_even, count', [(False, 0), (True, 1)])
    def test_break_even(self, flat, flat_topology, break_even, count):
        out = price_vms(book(flat_topology, flat, [4.5]), flat_topology, flat,
                        HeuristicOptions(break_even=break_even))
        assert out.served_count[('1', 'v')] == count

    def test_capacity_clipped_by_last_mile(self, flat, make_topology):
        topo = make_topology(pms=2, lastmile=10e6)
        out = price_vms(book(topo, flat, [10, 9, 8]), topo, flat)
        # field 2 PMs, shallow and deep one VM each through the last mile
        assert out.capacity[('1', 'v')] == 4
        assert last_mile_capacity(topo, '1') == 10e6

    def test_no_host(self, make_catalog, topology):
        catalog = make_catalog(cpu=2)
        bids = build_bid_book([Bid(1, '1', 'large', to_money('0.08'))], topology, catalog)
        out = price_vms(bids, topology, catalog)
        assert out.capacity[('1', 'large')] == 0
        assert out.served == []

    def test_per_frame_estimate(self, catalog, topology):
        bids = build_bid_book([Bid(1, '1', 'small', to_money('0.03'))], topology, catalog)
        verbatim = price_vms(bids, topology, catalog)
        per_frame = price_vms(bids, topology, catalog, HeuristicOptions(qos_estimate='per-frame'))
        assert per_frame.unit_cost[('1', 'small')] < verbatim.unit_cost[('1', 'small')]

    def test_pue_not_in_estimate(self, catalog, make_topology):
        bids = [Bid(1, '1', 'small', to_money('0.03')), Bid(2, '2', 'large', to_money('0.08'))]
        plain, scaled = make_topology(), make_topology(pue=1.5)
        one = price_vms(build_bid_book(bids, plain, catalog), plain, catalog)
        two = price_vms(build_bid_book(bids, scaled, catalog), scaled, catalog)
        assert one.unit_cost == two.unit_cost
        assert one.local_price == two.local_price
        assert one.served == two.served

    def test_invalid_option(self):
        with pytest.raises(SolverError):
            HeuristicOptions(qos_estimate='hourly')


class TestDistribution:

    def test_field_first(self, make_catalog, topology):
        catalog = make_catalog(cpu=4, memory=8)
        bids = build_bid_book([Bid(1, '1', 'large', to_money(5)),
                               Bid(2, '1', 'large', to_money(4))], topology, catalog)
        result = run_heuristic(bids, topology, catalog)
        assert result.pricing.served == [1, 2]
        assert result.solution.placements() == {1: ('field_1', 'host', 1),
                                                2: ('shallow', 'host', 1)}
        assert [r[0] for r in result.distribution.rounds] == ['field_1', 'shallow']
        assert result.dropped == []

    def test_residual_bandwidth(self, flat, flat_topology):
        bids = book(flat_topology, flat, [10, 9])
        pricing = price_vms(bids, flat_topology, flat)
        placements, state = distribute_vms(pricing, bids, flat_topology, flat)
        assert sorted(placements) == [1, 2]
        used = sum(10e6 for c, _, _ in placements.values() if c != 'field_1')
        assert state.residual['lastmile:1'] == 50e6 - used
        assert state.unplaced == []

    def test_utility_replay(self, topology, catalog):
        bids = book(topology, catalog, [0.03, 0.03], vm_type='small')
        pricing = PricingOutcome(served_count={('1', 'small'): 2},
                                 local_price={('1', 'small'): Fraction(3, 100)},
                                 served=[1, 2])
        placements, state = distribute_vms(pricing, bids, topology, catalog)
        # revenue / (q_c * (P_idle + 2 P_peak) + sum of xi*D/(T*r_min))
        energy = 0.5 * (0.2 + 2 * 0.05)
        assert state.utility == pytest.approx({
            ('field_1', 'host'): 0.06 / energy,
            ('shallow', 'host'): 0.06 / (energy + 2 * 0.01 * 1.5e9 / (300 * 10e6)),
            ('deep', 'host'): 0.06 / (energy + 2 * 0.02 * 1.5e9 / (300 * 10e6)),
        })
        assert state.rounds == [('field_1', 'host', pytest.approx(0.4))]
        assert placements == {1: ('field_1', 'host', 1), 2: ('field_1', 'host', 1)}

    def test_cheaper_cloudlet_first(self, make_topology, catalog):
        topo = make_topology(xi_shallow=0.0, xi_deep=0.0)
        topo = replace(topo, deep=replace(topo.deep, electricity_price=0.1))
        bids = book(topo, catalog, [0.03, 0.03], vm_type='small')
        pricing = PricingOutcome(served_count={('1', 'small'): 2},
                                 local_price={('1', 'small'): Fraction(3, 100)},
                                 served=[1, 2])
        placements, state = distribute_vms(pricing, bids, topo, catalog)
        assert state.rounds[0][:2] == ('deep', 'host')
        assert state.utility[('deep', 'host')] > state.utility[('field_1', 'host')]
        assert set(placements.values()) == {('deep', 'host', 1)}

    def test_nothing_fits(self, make_topology, flat):
        topo = make_topology(lastmile=1e6)
        bids = book(topo, flat, [10] * 6)
        pricing = price_vms(bids, topo, flat)
        placements, state = distribute_vms(pricing, bids, topo, flat)
        # four VMs fit at field_1, the last mile carries none
        assert len(placements) == 4
        assert len(state.unplaced) == len(pricing.served) - 4


class TestReconcile:

    def test_drop_cascades(self, flat, topology):
        bids = book(topology, flat, [10, 9, 8])
        pricing = PricingOutcome(served_count={('1', 'v'): 3}, served=[1, 2, 3])
        kept, dropped = reconcile({1: ('deep', 'host', 2), 3: ('deep', 'host', 1)},
                                  pricing, bids)
        assert dropped == [2, 3]
        assert kept == {1: ('deep', 'host', 1)}

    def test_renumber_per_pm_type(self, flat, topology):
        bids = book(topology, flat, [10, 9, 8])
        pricing = PricingOutcome(served_count={('1', 'v'): 3}, served=[1, 2, 3])
        placements = {1: ('deep', 'host', 3), 2: ('shallow', 'host', 2),
                      3: ('deep', 'host', 5)}
        kept, dropped = reconcile(placements, pricing, bids)
        assert dropped == []
        assert kept == {1: ('deep', 'host', 1), 2: ('shallow', 'host', 1),
                        3: ('deep', 'host', 2)}


class TestRandomInstances:

    @pytest.mark.parametrize('seed', range(100))
    def test_feasible(self, random_instance, seed):
        topo, catalog, bids = random_instance(seed, max_bids=12)
        for options in (HeuristicOptions(), HeuristicOptions(qos_estimate='per-frame')):
            result = run_heuristic(bids, topo, catalog, options)
            assert check_feasibility(result.solution, topo, catalog, bids) == []
            served = set(result.solution.placements())
            assert served <= set(result.pricing.served)
            assert served | set(result.dropped) == set(result.pricing.served)
            for key, price in local_prices(result.solution, bids).items():
                assert price >= result.pricing.local_price[key]

    def test_records(self, random_instance):
        topo, catalog, bids = random_instance(3, max_bids=12)
        result = run_heuristic(bids, topo, catalog)
        rows = pricing_records(result, bids)
        assert [(r['ap'], r['vm_type']) for r in rows] == bids.keys()
        assert sum(r['served'] for r in rows) == len(result.solution.placements())


class TestScale:

    @pytest.mark.parametrize('case', ['case1', 'case2'])
    def test_2000_bids(self, request, case):
        sc = request.getfixturevalue(case)
        topo, catalog = sc.topology, sc.catalog
        bids = generate_bids(sc.generator, 0, np.random.default_rng(0), topo.aps, count=2000)
        bids = build_bid_book(bids, topo, catalog)
        start = time.perf_counter()
        result = run_heuristic(bids, topo, catalog, sc.heuristic)
        elapsed = time.perf_counter() - start
        assert elapsed <= 30
        assert check_feasibility(result.solution, topo, catalog, bids) == []
        assert result.solution.placements()
