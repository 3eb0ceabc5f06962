"""
Scenario files: a line-oriented directive language describing the catalogs,
the edge topology, the bid generator and the solver settings.

Every non-empty, non-comment line is a directive

    %name [positional ...] key=value ...

where a value can be a comma-separated list of items, and list items can be
name:value pairs. The first directive of a scenario must be %schema.
"""

import io
import os
import os.path
import logging
from dataclasses import dataclass, replace
from fractions import Fraction
from operator import itemgetter
from typing import Optional

from .constants import SCHEMA_VERSION, FIELD, SHALLOW, DEEP
from .model import (VmType, PmType, Cloudlet, Catalog, ShallowSite, Topology,
                    prorated_peak_power, validate)
from .sim import GeneratorConfig, PriceLaw
from .exact_solver import SolverLimits
from .heuristics import HeuristicOptions
from .bandwidth import Tolerances
from .utils import ScenarioError, EdgeAuctionError, to_money, split_list

LOG = logging.getLogger(__name__)

# Maximum number of nested scenario files
MAX_RECURSE = 10

# Directory holding the reference scenarios
SCENARIODIR = os.path.join(os.path.dirname(__file__), 'scenarios')


# The list of directives with their help, as a pair [params, help-text]
DIRECTIVES = {
    '%schema': ['<version>', 'scenario schema version ({}). **REQUIRED**, must come first'
                .format(SCHEMA_VERSION)],
    '%load': ['<filename>', 'load a file with directives (path relative to the including file)'],
    '%resources': ['<kind> [...]', 'resource kinds of the VM and PM catalogs'],
    '%vmtype': ['<id> <kind>=<qty>... bandwidth=<bit/s> data=<bit> [peak=<kW>] cap=<price>',
                'declare a VM type: demand, base bandwidth, maximum data per frame, '
                'peak power (prorated on the first PM type if absent), on-demand price cap'],
    '%pmtype': ['<id> <kind>=<qty>... idle=<kW>', 'declare a PM type: supply and idle power'],
    '%timing': ['frame=<s> slot=<s> [pue=<ratio>]', 'frame and slot length, power usage effectiveness'],
    '%ap': ['<id> [field=<id>] price=<price/kWh> pms=<pmtype>:<n>[,...] xi=<cloudlet>:<w>[,...]',
            'declare an AP, its field cloudlet and its QoS weights'],
    '%shallow': ['<id> lastmile=<ap>:<bit/s>[,...] aggregation=<bit/s> price=<price/kWh> '
                 'pms=<pmtype>:<n>[,...]',
                 'declare a shallow cloudlet, its attached APs and their links'],
    '%deep': ['<id> backhaul=<bit/s> price=<price/kWh> pms=<pmtype>:<n>[,...]',
              'declare the deep cloudlet and its backhaul link'],
    '%generator': ['[bids=<n>[,...]] [mix=<vm>:<ratio>[,...]] [mobility=<p>] '
                   '[persist=on|off] [traffic=<scale>] [seed=<n>]',
                   'bid generator: bid count schedule, VM type mix, AP mobility, '
                   'bid persistence, traffic load scale, random seed'],
    '%price': ['<vm> [min=<price>] [mode=<price>] [max=<price>]',
               'triangular price law for a VM type (default 0, cap/2, cap)'],
    '%solver': ['[maxbids=<n>] [time=<s>] [nodes=<n>] [warm=on|off] '
                '[breakeven=on|off] [qos=verbatim|per-frame]',
                'exact solver budgets and heuristic pricing switches'],
    '%bandwidth': ['[tol=<x>] [iterations=<n>] [method=linesearch|diminishing] [lower=<fraction>]',
                   'bandwidth allocation tolerance, iteration budget, dual update (diminishing '
                   'only converges on small normalized instances), lower bound'],
}


# The full list of all directives
DIRECTIVE_HELP = ('Available directives:\n' +
                  '  '.join(sorted(DIRECTIVES.keys())) +
                  '\n\n' +
                  '\n'.join(('{0} {1} : {2}'.format(k, *v)
                             for k, v in sorted(DIRECTIVES.items(), key=itemgetter(0)))))


# -----------------------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    name: str
    catalog: Catalog
    topology: Topology
    generator: GeneratorConfig
    limits: SolverLimits
    heuristic: HeuristicOptions
    bandwidth: Tolerances
    path: Optional[str] = None

    def validate(self):
        """
        Check the topology, catalog and generator invariants
          @return (list): Violation records, empty if the scenario is sound
        """
        return validate(self.topology, self.catalog) + self.generator.check()

    def replace(self, **kwargs):
        return replace(self, **kwargs)


class RawScenario(object):
    """
    The directive values read so far, before assembling a Scenario
    """

    def __init__(self):
        self.schema = None
        self.resources = None
        self.vm = {}
        self.pm = {}
        self.timing = {}
        self.ap = {}
        self.shallow = {}
        self.deep = None
        self.generator = {}
        self.price = {}
        self.solver = {}
        self.bandwidth = {}


# -----------------------------------------------------------------------------

def split_lines(buf):
    '''
    Split a buffer in lines, skipping empty lines and comment lines, and
    stripping whitespace at the beginning or end of lines. Keep line numbers.
    '''
    return [(n, line) for n, line in enumerate(map(lambda x: x.strip(), buf.split('\n')), 1)
            if line and line[0] != '#']


def _params(cmd, param, allowed, positional=0):
    """
    Split directive parameters into positional values and a key=value dict,
    rejecting unknown or duplicated keys
    """
    pos, kv = [], {}
    for token in param.split():
        if '=' not in token:
            pos.append(token)
            continue
        k, v = token.split('=', 1)
        k = k.lower()
        if k not in allowed:
            raise ScenarioError("%{}: unknown key '{}'", cmd, k)
        if k in kv:
            raise ScenarioError("%{}: duplicated key '{}'", cmd, k)
        kv[k] = v
    if len(pos) != positional:
        raise ScenarioError('%{}: expected {} positional value(s), got {}',
                            cmd, positional, len(pos))
    return pos, kv


def _number(cmd, key, value, kind=float):
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise ScenarioError("%{}: invalid value for {}: '{}'", cmd, key, value)


def _flag(cmd, key, value):
    v = value.lower()
    if v in ('on', 'true', 'yes', '1'):
        return True
    if v in ('off', 'false', 'no', '0'):
        return False
    raise ScenarioError("%{}: invalid value for {}: '{}' (use on|off)", cmd, key, value)


def _pairs(cmd, key, value, kind=float):
    """
    Parse a list of name:value pairs, keeping its order
    """
    out = {}
    for item in split_list(value):
        try:
            name, v = item.rsplit(':', 1)
        except ValueError:
            raise ScenarioError("%{}: invalid {} item '{}' (expected name:value)",
                                cmd, key, item)
        if name in out:
            raise ScenarioError('%{}: duplicated {} item: {}', cmd, key, name)
        out[name] = _number(cmd, key, v, kind)
    return out


def _required(cmd, entity, kv, *keys):
    for k in keys:
        if k not in kv:
            raise ScenarioError('%{} {}: missing key: {}', cmd, entity, k)


def _define(table, cmd, ident, value):
    if ident in table:
        raise ScenarioError('%{}: duplicated id: {}', cmd, ident)
    table[ident] = value


def process_directive(line, cfg, basedir='.', _recurse=0):
    """
    Read and process one directive line
      @param line (str): the full line containing a directive
      @param cfg (RawScenario): the values read so far
      @param basedir (str): directory for relative %load paths
      @return (list): a message, as a Python format string and its
        arguments, or None
    """
    if _recurse > MAX_RECURSE:
        raise ScenarioError('maximum scenario file recursion level exceeded')

    # Split line into command & parameters
    parts = line.split(None, 1)
    cmd = parts[0][1:].lower()
    param = parts[1] if len(parts) > 1 else ''
    if '%' + cmd not in DIRECTIVES:
        raise ScenarioError('unknown directive: %{}', cmd)
    if cfg.schema is None and cmd not in ('schema', 'load'):
        raise ScenarioError('the first directive must be %schema, found %{}', cmd)

    # Process each directive
    if cmd == 'schema':

        if param.strip() != SCHEMA_VERSION:
            raise ScenarioError("unsupported schema version '{}' (expected {})",
                                param.strip(), SCHEMA_VERSION)
        cfg.schema = SCHEMA_VERSION
        return ['Schema: {}', cfg.schema]

    elif cmd == 'load':

        if cfg.schema is None:
            raise ScenarioError('the first directive must be %schema, found %load')
        if not param:
            raise ScenarioError('missing %load filename')
        filename = os.path.join(basedir, param.strip())
        try:
            with io.open(filename, 'rt', encoding='utf-8') as f:
                buf = f.read()
        except Exception as e:
            raise ScenarioError("cannot read scenario file '{}': {}", filename, e)
        process_buffer(buf, cfg, os.path.dirname(filename), filename, _recurse+1)

    elif cmd == 'resources':

        kinds = tuple(param.split())
        if not kinds:
            raise ScenarioError('missing %resources kinds')
        if cfg.resources is not None:
            raise ScenarioError('resource kinds already defined')
        cfg.resources = kinds
        return ['Resources: {}', ' '.join(kinds)]

    elif cmd in ('vmtype', 'pmtype'):

        if cfg.resources is None:
            raise ScenarioError('%{} before %resources', cmd)
        extra = ('bandwidth', 'data', 'peak', 'cap') if cmd == 'vmtype' else ('idle',)
        (ident,), kv = _params(cmd, param, cfg.resources + extra, 1)
        if cmd == 'vmtype':
            _required(cmd, ident, kv, 'bandwidth', 'data', 'cap')
        else:
            _required(cmd, ident, kv, 'idle', *cfg.resources)
        values = {k: v if k == 'cap' else _number(cmd, k, v) for k, v in kv.items()}
        _define(cfg.vm if cmd == 'vmtype' else cfg.pm, cmd, ident, values)
        return ['{} defined: {}', cmd, ident]

    elif cmd == 'timing':

        _, kv = _params(cmd, param, ('frame', 'slot', 'pue'))
        cfg.timing.update({k: _number(cmd, k, v) for k, v in kv.items()})

    elif cmd == 'ap':

        (ident,), kv = _params(cmd, param, ('field', 'price', 'pms', 'xi'), 1)
        _required(cmd, ident, kv, 'price', 'pms')
        _define(cfg.ap, cmd, ident, {
            'field': kv.get('field', 'field_' + ident),
            'price': _number(cmd, 'price', kv['price']),
            'pms': _pairs(cmd, 'pms', kv['pms'], int),
            'xi': _pairs(cmd, 'xi', kv.get('xi', ''))})
        return ['AP defined: {}', ident]

    elif cmd == 'shallow':

        (ident,), kv = _params(cmd, param, ('lastmile', 'aggregation', 'price', 'pms'), 1)
        _required(cmd, ident, kv, 'lastmile', 'aggregation', 'price', 'pms')
        _define(cfg.shallow, cmd, ident, {
            'lastmile': _pairs(cmd, 'lastmile', kv['lastmile']),
            'aggregation': _number(cmd, 'aggregation', kv['aggregation']),
            'price': _number(cmd, 'price', kv['price']),
            'pms': _pairs(cmd, 'pms', kv['pms'], int)})
        return ['Shallow cloudlet defined: {}', ident]

    elif cmd == 'deep':

        (ident,), kv = _params(cmd, param, ('backhaul', 'price', 'pms'), 1)
        _required(cmd, ident, kv, 'backhaul', 'price', 'pms')
        if cfg.deep is not None:
            raise ScenarioError('deep cloudlet already defined: {}', cfg.deep['id'])
        cfg.deep = {'id': ident,
                    'backhaul': _number(cmd, 'backhaul', kv['backhaul']),
                    'price': _number(cmd, 'price', kv['price']),
                    'pms': _pairs(cmd, 'pms', kv['pms'], int)}
        return ['Deep cloudlet defined: {}', ident]

    elif cmd == 'generator':

        _, kv = _params(cmd, param, ('bids', 'mix', 'mobility', 'persist', 'traffic', 'seed'))
        for k, v in kv.items():
            if k == 'bids':
                cfg.generator[k] = tuple(_number(cmd, k, n, int) for n in split_list(v))
            elif k == 'mix':
                cfg.generator[k] = _pairs(cmd, k, v)
            elif k == 'persist':
                cfg.generator[k] = _flag(cmd, k, v)
            elif k == 'seed':
                cfg.generator[k] = _number(cmd, k, v, int)
            else:
                cfg.generator[k] = _number(cmd, k, v)

    elif cmd == 'price':

        (vm,), kv = _params(cmd, param, ('min', 'mode', 'max'), 1)
        cfg.price.setdefault(vm, {}).update(kv)

    elif cmd == 'solver':

        _, kv = _params(cmd, param, ('maxbids', 'time', 'nodes', 'warm', 'breakeven', 'qos'))
        for k, v in kv.items():
            if k in ('warm', 'breakeven'):
                cfg.solver[k] = _flag(cmd, k, v)
            elif k == 'qos':
                cfg.solver[k] = v
            else:
                cfg.solver[k] = _number(cmd, k, v, float if k == 'time' else int)

    elif cmd == 'bandwidth':

        _, kv = _params(cmd, param, ('tol', 'iterations', 'method', 'lower'))
        for k, v in kv.items():
            if k == 'method':
                cfg.bandwidth[k] = v
            else:
                cfg.bandwidth[k] = _number(cmd, k, v, int if k == 'iterations' else float)


def process_buffer(buf, cfg, basedir='.', source='<scenario>', _recurse=0):
    """
    Process all the directive lines of a buffer, prefixing errors with the
    source and line number
    """
    for n, line in split_lines(buf):
        if line[0] != '%':
            raise ScenarioError("error in file '{}' line {}: non-directive line found: {}",
                                source, n, line)
        try:
            msg = process_directive(line, cfg, basedir, _recurse)
        except ScenarioError as e:
            if str(e).startswith('error in file'):
                raise
            raise ScenarioError("error in file '{}' line {}: {}", source, n, e)
        if msg:
            LOG.debug(msg[0].format(*msg[1:]))


# -----------------------------------------------------------------------------

def _cloudlet(ident, tier, spec, pm):
    for p in spec['pms']:
        if p not in pm:
            raise ScenarioError('cloudlet {}: unknown PM type: {}', ident, p)
    return Cloudlet(ident, tier, dict(spec['pms']), spec['price'])


def build_scenario(cfg, name='scenario', path=None):
    """
    Assemble a Scenario from the directive values
      @param cfg (RawScenario):
    """
    if cfg.schema is None:
        raise ScenarioError('missing %schema directive')
    if cfg.resources is None:
        raise ScenarioError('missing %resources directive')
    if not cfg.pm:
        raise ScenarioError('no PM types defined')
    if not cfg.vm:
        raise ScenarioError('no VM types defined')
    if cfg.deep is None:
        raise ScenarioError('missing %deep directive')
    if not cfg.ap:
        raise ScenarioError('no APs defined')
    res = cfg.resources

    try:
        pm_types = {p: PmType(p, {r: v[r] for r in res}, v['idle'])
                    for p, v in cfg.pm.items()}
        first_pm = next(iter(pm_types.values()))
        vm_types = {}
        for v, spec in cfg.vm.items():
            demand = {r: spec.get(r, 0.0) for r in res}
            vm = VmType(v, demand, spec['bandwidth'], spec['data'], spec.get('peak', 0.0),
                        to_money(spec['cap']))
            if 'peak' not in spec:
                vm = replace(vm, peak_power=prorated_peak_power(first_pm, vm, res))
            vm_types[v] = vm
        catalog = Catalog(res, vm_types, pm_types)

        field = {}
        qos = {}
        for a, spec in cfg.ap.items():
            field[a] = _cloudlet(spec['field'], FIELD, spec, pm_types)
            for c, w in spec['xi'].items():
                qos[(a, c)] = w
        sites = tuple(ShallowSite(_cloudlet(s, SHALLOW, spec, pm_types),
                                  dict(spec['lastmile']), spec['aggregation'])
                      for s, spec in cfg.shallow.items())
        deep = _cloudlet(cfg.deep['id'], DEEP, cfg.deep, pm_types)
        timing = cfg.timing
        topology = Topology(tuple(cfg.ap), field, sites, deep, cfg.deep['backhaul'],
                            qos, timing.get('pue', 1.0), timing.get('frame', 300.0),
                            timing.get('slot', 5.0))

        gen = cfg.generator
        mix = gen.get('mix', {v: 1.0 for v in vm_types})
        for v in mix:
            if v not in vm_types:
                raise ScenarioError('generator mix: unknown VM type: {}', v)
        laws = {}
        for v, vm in vm_types.items():
            spec = cfg.price.get(v, {})
            high = to_money(spec.get('max', vm.on_demand_price_cap))
            laws[v] = PriceLaw(to_money(spec.get('min', 0)),
                               to_money(spec.get('mode', high / 2)), high)
        for v in cfg.price:
            if v not in vm_types:
                raise ScenarioError('%price: unknown VM type: {}', v)
        generator = GeneratorConfig(gen.get('bids', (50,)), mix, laws,
                                    gen.get('mobility', 0.0), gen.get('persist', False),
                                    gen.get('traffic', 1.0), gen.get('seed', 0))

        sv = cfg.solver
        limits = SolverLimits(sv.get('maxbids', 200), sv.get('time', 60.0),
                              sv.get('nodes', 2000000), sv.get('warm', True))
        heuristic = HeuristicOptions(sv.get('breakeven', False), sv.get('qos', 'verbatim'))
        bw = cfg.bandwidth
        tol = bw.get('tol', 1e-6)
        bandwidth = Tolerances(tol, tol, tol, bw.get('iterations', 100000),
                               bw.get('method', 'linesearch'), bw.get('lower', 0.1))
    except ScenarioError:
        raise
    except EdgeAuctionError as e:
        raise ScenarioError(str(e))
    except Exception as e:
        raise ScenarioError('cannot assemble scenario: {}', e)

    return Scenario(name, catalog, topology, generator, limits, heuristic,
                    bandwidth, path)


def parse_scenario(buf, basedir='.', name='scenario', path=None):
    """
    Parse a scenario from a text buffer
      @return (Scenario):
    """
    cfg = RawScenario()
    process_buffer(buf, cfg, basedir, path or name)
    return build_scenario(cfg, name, path)


def load_scenario(path):
    """
    Read a scenario file. A bare name (e.g. "case1") refers to one of the
    reference scenarios shipped with the package.
      @return (Scenario):
    """
    if not os.path.exists(path) and os.path.exists(reference_path(path)):
        path = reference_path(path)
    try:
        with io.open(path, 'rt', encoding='utf-8') as f:
            buf = f.read()
    except Exception as e:
        raise ScenarioError("cannot read scenario file '{}': {}", path, e)
    name = os.path.splitext(os.path.basename(path))[0]
    LOG.info('loading scenario %s from %s', name, path)
    return parse_scenario(buf, os.path.dirname(path), name, path)


def reference_path(name):
    return os.path.join(SCENARIODIR, name + '.scn')


def reference_scenarios():
    return sorted(os.path.splitext(f)[0] for f in os.listdir(SCENARIODIR)
                  if f.endswith('.scn') and f != 'common.scn')
