import random

import pytest

from edgeauction.model import VmType, PmType, Cloudlet, Catalog, ShallowSite, Topology
from edgeauction.auction import Bid, build_bid_book
from edgeauction.scenario import load_scenario, reference_path
from edgeauction.utils import to_money


def _catalog(cpu=8, memory=16):
    vms = {
        'small': VmType('small', {'cpu': 1, 'memory': 2}, 10e6, 1.5e9, 0.05, to_money('0.03')),
        'large': VmType('large', {'cpu': 4, 'memory': 8}, 20e6, 3e9, 0.2, to_money('0.08')),
    }
    pms = {'host': PmType('host', {'cpu': cpu, 'memory': memory}, 0.2)}
    return Catalog(('cpu', 'memory'), vms, pms)


def _topology(aps=('1', '2'), pms=1, price=0.5, lastmile=50e6, aggregation=1e9,
              backhaul=1e9, xi_shallow=0.01, xi_deep=0.02, pue=1.0):
    """
    A small network: every AP has a field cloudlet, all share one shallow
    cloudlet, plus the deep cloudlet; the same PM count everywhere
    """
    field = {a: Cloudlet('field_' + a, 'field', {'host': pms}, price) for a in aps}
    site = ShallowSite(Cloudlet('shallow', 'shallow', {'host': pms}, price),
                       {a: lastmile for a in aps}, aggregation)
    deep = Cloudlet('deep', 'deep', {'host': pms}, price)
    qos = {}
    for a in aps:
        qos[(a, 'shallow')] = xi_shallow
        qos[(a, 'deep')] = xi_deep
    return Topology(tuple(aps), field, (site,), deep, backhaul, qos, pue, 300.0, 5.0)


def _random_bids(rnd, n, aps=('1', '2'), vm_types=('small', 'large')):
    caps = {'small': 0.03, 'large': 0.08}
    out = []
    for i in range(1, n + 1):
        v = rnd.choice(vm_types)
        out.append(Bid(i, rnd.choice(aps), v, to_money(round(rnd.uniform(0, caps[v]), 4))))
    return out


def _random_instance(seed, max_bids=10):
    """
    A random small book: 1-2 PMs per cloudlet, 1..max_bids bids. The QoS
    weights are small enough that off-field service clears the bid prices.
    """
    rnd = random.Random(seed)
    topo = _topology(pms=rnd.choice((1, 2)), xi_shallow=1e-5, xi_deep=2e-5)
    catalog = _catalog()
    bids = _random_bids(rnd, rnd.randint(1, max_bids))
    return topo, catalog, build_bid_book(bids, topo, catalog)


@pytest.fixture(scope='session')
def catalog():
    return _catalog()


@pytest.fixture(scope='session')
def topology():
    return _topology()


@pytest.fixture(scope='session')
def make_catalog():
    return _catalog


@pytest.fixture(scope='session')
def make_topology():
    return _topology


@pytest.fixture(scope='session')
def random_bids():
    return _random_bids


@pytest.fixture(scope='session')
def random_instance():
    return _random_instance


@pytest.fixture(scope='session')
def case1():
    return load_scenario(reference_path('case1'))


@pytest.fixture(scope='session')
def case2():
    return load_scenario(reference_path('case2'))


@pytest.fixture
def logdir(tmp_path, monkeypatch):
    monkeypatch.setenv('LOGDIR', str(tmp_path))
    return tmp_path
