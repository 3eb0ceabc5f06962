"""
Immutable description of the edge network: the VM and PM catalogs, the
three-tier cloudlet hierarchy (field, shallow, deep) and the links between
access points and cloudlets.

Topologies are plain data; validate() reports broken invariants as a list of
Violation records instead of raising, so that a scenario can be inspected in
full before it is used.
"""

import logging
import math
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from functools import cached_property
from typing import Mapping, Tuple

from .constants import (FIELD, SHALLOW, DEEP, LAST_MILE, AGGREGATION,
                        BACKHAUL, SECONDS_PER_HOUR)
from .utils import ModelError, exact

LOG = logging.getLogger(__name__)


# ----------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    """
    A broken invariant or constraint: its name, the entity it concerns and
    a readable message
    """
    invariant: str
    entity: str
    message: str

    def __str__(self):
        return '{}[{}]: {}'.format(self.invariant, self.entity, self.message)


@dataclass(frozen=True)
class VmType:
    id: str
    resource_demand: Mapping[str, float]
    base_bandwidth: float                  # bits/s
    max_data_per_frame: float              # bits
    peak_power: float                      # kW
    on_demand_price_cap: Fraction          # currency/frame


@dataclass(frozen=True)
class PmType:
    id: str
    resource_supply: Mapping[str, float]
    idle_power: float                      # kW


@dataclass(frozen=True)
class Cloudlet:
    id: str
    tier: str
    pm_inventory: Mapping[str, int]        # PM type id -> available PMs
    electricity_price: float               # currency/kWh


@dataclass(frozen=True)
class Link:
    id: str
    kind: str
    capacity: float                        # bits/s


@dataclass(frozen=True)
class Catalog:
    """
    The resource kinds plus the VM and PM type catalogs. Mapping order is
    the catalog order used everywhere for deterministic iteration.
    """
    resources: Tuple[str, ...]
    vm_types: Mapping[str, VmType]
    pm_types: Mapping[str, PmType]

    def vm(self, vm_id):
        try:
            return self.vm_types[vm_id]
        except KeyError:
            raise ModelError('unknown VM type: {}', vm_id)

    def pm(self, pm_id):
        try:
            return self.pm_types[pm_id]
        except KeyError:
            raise ModelError('unknown PM type: {}', pm_id)

    def can_host(self, pm_id, vm_id):
        """
        True if one empty PM of the given type can host one VM of the type
        """
        pm, vm = self.pm(pm_id), self.vm(vm_id)
        return all(q <= pm.resource_supply.get(r, 0)
                   for r, q in vm.resource_demand.items())


@dataclass(frozen=True)
class ShallowSite:
    """
    A shallow cloudlet at a point of presence, the last-mile link capacities
    of the APs attached to it, and its aggregation link capacity
    """
    cloudlet: Cloudlet
    last_mile: Mapping[str, float]
    aggregation: float


@dataclass(frozen=True)
class Topology:
    aps: Tuple[str, ...]
    field: Mapping[str, Cloudlet]          # AP -> co-located field cloudlet
    shallow: Tuple[ShallowSite, ...]
    deep: Cloudlet
    backhaul: float
    qos_weights: Mapping[Tuple[str, str], float] = dc_field(default_factory=dict)
    pue: float = 1.0
    frame_length: float = 300.0            # seconds
    slot_length: float = 5.0               # seconds

    @cached_property
    def _shallow_by_ap(self):
        idx = {}
        for site in self.shallow:
            for ap in site.last_mile:
                idx.setdefault(ap, site)
        return idx

    @cached_property
    def _cloudlets(self):
        result = {}
        for ap in self.aps:
            if ap in self.field:
                result.setdefault(self.field[ap].id, self.field[ap])
        for site in self.shallow:
            result.setdefault(site.cloudlet.id, site.cloudlet)
        result.setdefault(self.deep.id, self.deep)
        return result

    @property
    def frame_hours(self):
        """Frame length in hours, as an exact fraction (for kWh pricing)"""
        return exact(self.frame_length) / SECONDS_PER_HOUR

    @property
    def slots_per_frame(self):
        return int(round(self.frame_length / self.slot_length))


# ----------------------------------------------------------------------

def cloudlets(topology):
    """
    All cloudlets in deterministic order: field (by AP order), shallow, deep
    """
    return list(topology._cloudlets.values())


def find_cloudlet(topology, cloudlet_id):
    try:
        return topology._cloudlets[cloudlet_id]
    except KeyError:
        raise ModelError('unknown cloudlet: {}', cloudlet_id)


def shallow_of(topology, ap):
    """
    Return the ShallowSite an AP is attached to
    """
    try:
        return topology._shallow_by_ap[ap]
    except KeyError:
        raise ModelError('AP {} is not attached to any shallow cloudlet', ap)


def _check_ap(topology, ap):
    if ap not in topology.aps:
        raise ModelError('unknown AP: {}', ap)


def reachable_cloudlets(topology, ap):
    """
    The cloudlets an AP can reach (its C_a set), in tier order
      @return (list): [(field cloudlet, 'field'), (shallow, 'shallow'),
        (deep, 'deep')]
    """
    _check_ap(topology, ap)
    try:
        field = topology.field[ap]
    except KeyError:
        raise ModelError('AP {} has no field cloudlet', ap)
    return [(field, FIELD),
            (shallow_of(topology, ap).cloudlet, SHALLOW),
            (topology.deep, DEEP)]


def tier_of(topology, ap, cloudlet_id):
    """
    Tier of a cloudlet as seen from an AP; error if it is not reachable
    """
    for c, tier in reachable_cloudlets(topology, ap):
        if c.id == cloudlet_id:
            return tier
    raise ModelError('cloudlet {} is not reachable from AP {}', cloudlet_id, ap)


def last_mile_id(ap):
    return '{}:{}'.format(LAST_MILE, ap)


def aggregation_id(shallow_id):
    return '{}:{}'.format(AGGREGATION, shallow_id)


def links_on_path(topology, ap, cloudlet_id):
    """
    Ids of the links traversed between an AP and one of its cloudlets
    """
    tier = tier_of(topology, ap, cloudlet_id)
    if tier == FIELD:
        return []
    if tier == SHALLOW:
        return [last_mile_id(ap)]
    site = shallow_of(topology, ap)
    return [last_mile_id(ap), aggregation_id(site.cloudlet.id), BACKHAUL]


def links(topology):
    """
    Every link of the topology, exactly once: last-mile links (by shallow
    cloudlet and AP order), aggregation links, then the backhaul link
    """
    result = []
    for site in topology.shallow:
        for ap, cap in site.last_mile.items():
            result.append(Link(last_mile_id(ap), LAST_MILE, cap))
    for site in topology.shallow:
        result.append(Link(aggregation_id(site.cloudlet.id), AGGREGATION,
                           site.aggregation))
    result.append(Link(BACKHAUL, BACKHAUL, topology.backhaul))
    return result


def link_capacity(topology, link_id):
    for link in links(topology):
        if link.id == link_id:
            return link.capacity
    raise ModelError('unknown link: {}', link_id)


def qos_weight(topology, ap, cloudlet_id):
    """
    The QoS weight for serving a bid of an AP at a cloudlet (zero at the
    field tier)
    """
    if tier_of(topology, ap, cloudlet_id) == FIELD:
        return 0.0
    return topology.qos_weights.get((ap, cloudlet_id), 0.0)


def prorated_peak_power(pm, vm, resources):
    """
    Estimate the power of a VM type as the PM power times the mean fraction
    of the PM resources the VM takes
    """
    share = sum(vm.resource_demand.get(r, 0) / pm.resource_supply[r]
                for r in resources) / len(resources)
    return pm.idle_power * share


# ----------------------------------------------------------------------

def _validate_catalog(catalog):
    out = []
    known = set(catalog.resources)
    for vm in catalog.vm_types.values():
        if not vm.base_bandwidth > 0:
            out.append(Violation('vmtype', vm.id, 'base bandwidth must be positive'))
        if vm.max_data_per_frame < 0:
            out.append(Violation('vmtype', vm.id, 'maximum data per frame is negative'))
        if vm.peak_power < 0:
            out.append(Violation('vmtype', vm.id, 'peak power is negative'))
        for r in vm.resource_demand:
            if r not in known:
                out.append(Violation('vmtype', vm.id,
                                     'unknown resource kind: {}'.format(r)))
    for pm in catalog.pm_types.values():
        for r in catalog.resources:
            if not pm.resource_supply.get(r, 0) > 0:
                out.append(Violation('pmtype', pm.id,
                                     'supply of {} must be positive'.format(r)))
        for r in pm.resource_supply:
            if r not in known:
                out.append(Violation('pmtype', pm.id,
                                     'unknown resource kind: {}'.format(r)))
        if pm.idle_power < 0:
            out.append(Violation('pmtype', pm.id, 'idle power is negative'))
    return out


def _validate_cloudlet(c, tier, catalog):
    out = []
    if c.tier != tier:
        out.append(Violation('tier', c.id,
                             'expected tier {}, got {}'.format(tier, c.tier)))
    if c.electricity_price < 0:
        out.append(Violation('cloudlet', c.id, 'electricity price is negative'))
    for p, n in c.pm_inventory.items():
        if n < 0:
            out.append(Violation('cloudlet', c.id,
                                 'negative count for PM type {}'.format(p)))
        if catalog is not None and p not in catalog.pm_types:
            out.append(Violation('cloudlet', c.id,
                                 'unknown PM type: {}'.format(p)))
    return out


def validate(topology, catalog=None):
    """
    Check all the hierarchy invariants of a topology (and of the catalogs, if
    given).
      @return (list): a list of Violation records, empty if all invariants hold
    """
    out = []
    aps = set(topology.aps)
    if len(aps) != len(topology.aps):
        out.append(Violation('unique', 'aps', 'duplicated AP ids'))

    # Field cloudlets: one per AP, not shared
    owners = {}
    for ap in topology.aps:
        c = topology.field.get(ap)
        if c is None:
            out.append(Violation('field', ap, 'AP has no field cloudlet'))
            continue
        if c.id in owners:
            out.append(Violation('field', ap, 'field cloudlet {} already bound to AP {}'
                                 .format(c.id, owners[c.id])))
        owners[c.id] = ap
        out += _validate_cloudlet(c, FIELD, catalog)
    for ap in topology.field:
        if ap not in aps:
            out.append(Violation('field', ap, 'field cloudlet bound to an unknown AP'))

    # The shallow cloudlets' AP sets partition the APs
    seen = {}
    for site in topology.shallow:
        sid = site.cloudlet.id
        out += _validate_cloudlet(site.cloudlet, SHALLOW, catalog)
        for ap, cap in site.last_mile.items():
            if ap not in aps:
                out.append(Violation('partition', sid,
                                     'unknown AP {} attached'.format(ap)))
                continue
            if ap in seen:
                out.append(Violation('partition', ap,
                                     'AP attached to shallow cloudlets {} and {}'
                                     .format(seen[ap], sid)))
            else:
                seen[ap] = sid
            if not cap > 0:
                out.append(Violation('capacity', last_mile_id(ap),
                                     'link capacity must be positive'))
        if not site.aggregation > 0:
            out.append(Violation('capacity', aggregation_id(sid),
                                 'link capacity must be positive'))
    for ap in topology.aps:
        if ap not in seen:
            out.append(Violation('partition', ap,
                                 'AP not attached to any shallow cloudlet'))

    out += _validate_cloudlet(topology.deep, DEEP, catalog)
    if not topology.backhaul > 0:
        out.append(Violation('capacity', BACKHAUL, 'link capacity must be positive'))

    ids = [c.id for c in topology.field.values()]
    ids += [s.cloudlet.id for s in topology.shallow] + [topology.deep.id]
    if len(set(ids)) != len(ids):
        out.append(Violation('unique', 'cloudlets', 'duplicated cloudlet ids'))

    # QoS weights are defined exactly on the non-field reachable pairs
    expected = set()
    for ap in topology.aps:
        if ap in seen:
            expected.add((ap, seen[ap]))
            expected.add((ap, topology.deep.id))
    for key, w in topology.qos_weights.items():
        if key not in expected:
            out.append(Violation('qos', '{}/{}'.format(*key),
                                 'weight defined on a pair that is not a non-field reachable pair'))
        elif w < 0:
            out.append(Violation('qos', '{}/{}'.format(*key), 'weight is negative'))
    for key in sorted(expected - set(topology.qos_weights)):
        out.append(Violation('qos', '{}/{}'.format(*key), 'missing weight'))

    # Time scales
    if topology.pue < 1:
        out.append(Violation('pue', 'topology', 'PUE must be at least 1'))
    if not (topology.frame_length > 0 and topology.slot_length > 0):
        out.append(Violation('timing', 'topology', 'frame and slot lengths must be positive'))
    else:
        ratio = topology.frame_length / topology.slot_length
        if ratio < 1 or not math.isclose(ratio, round(ratio), rel_tol=0, abs_tol=1e-9):
            out.append(Violation('timing', 'topology',
                                 'frame length is not an integer multiple of the slot length'))

    if catalog is not None:
        out += _validate_catalog(catalog)

    if out:
        LOG.info('topology validation: %d violations', len(out))
    return out


def pm_types_at(cloudlet, catalog):
    """
    The PM types available at a cloudlet, in catalog order
    """
    return [p for p in catalog.pm_types if cloudlet.pm_inventory.get(p, 0) > 0]


