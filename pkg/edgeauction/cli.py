"""
The command-line applications, one per subcommand:
  * validate: check a scenario file
  * auction: solve the auction of a single frame
  * simulate: run frames and slots, and write the record files
  * compare: heuristic against exact solver over a ladder of bid counts
  * bandwidth: allocate bandwidth for a saved frame solution
  * directives: list the scenario directives
"""

import os
import os.path
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, asdict, replace
from typing import Optional

from traitlets import Unicode, Integer, Float, Bool, Enum, default
from traitlets.config.application import Application

from .constants import (__version__, PKGNAME, OUTDIR_ENV, EXIT_OK, EXIT_USAGE,
                        EXIT_INVALID_SCENARIO, EXIT_BUDGET_EXHAUSTED, EXIT_IO_ERROR)
from .setlogging import set_logging
from .utils import EdgeAuctionError, ScenarioError, split_list, format_money
from .scenario import load_scenario, reference_path, DIRECTIVE_HELP
from .auction import build_bid_book, solution_records, solution_from_records
from .sim import SimState, run_frame, run_slots, simulate, compare_frame, SOLVERS
from . import records

import numpy as np

MODES = ('validate', 'auction', 'simulate', 'compare', 'bandwidth')

COMPARE_COLUMNS = ('case', 'bids', 'seed', 'heuristic_profit', 'exact_profit',
                   'exact_optimal', 'ratio', 'heuristic_served_ratio',
                   'exact_served_ratio', 'heuristic_time', 'exact_time')
COMPARE_PRICE_COLUMNS = ('case', 'bids', 'seed', 'ap', 'vm_type',
                         'heuristic_price', 'exact_price')


# --------------------------------------------------------------------------

@dataclass
class RunManifest:
    """
    What a run was asked to do; stored in the run summary
    """
    scenario: str
    mode: str
    seed: Optional[int] = None
    solver: str = 'heuristic'
    frames: int = 1
    bids: Optional[int] = None
    max_bids: Optional[int] = None
    time_budget: Optional[float] = None
    node_budget: Optional[int] = None
    outdir: str = '.'

    def check(self):
        if self.mode not in MODES:
            raise EdgeAuctionError('unknown run mode: {}', self.mode)
        if not os.path.isfile(self.scenario):
            raise EdgeAuctionError('scenario file not found: {}', self.scenario)

    def as_dict(self):
        doc = asdict(self)
        doc['scenario'] = os.path.basename(self.scenario)
        doc.pop('outdir')
        return doc


def _default_outdir():
    return os.environ.get(OUTDIR_ENV, os.path.join(os.getcwd(), PKGNAME + '-out'))


# --------------------------------------------------------------------------

class EdgeAuctionCommand(Application):
    """
    Common options and helpers of the subcommands
    """

    version = __version__

    logfile = Unicode('', config=True,
        help="""Log file (default: edgeauction.log in $LOGDIR or the temporal directory)."""
    )
    outdir = Unicode(config=True,
        help="""Output directory for the record files (default: ${}).""".format(OUTDIR_ENV)
    )
    seed = Integer(None, allow_none=True, config=True,
        help="""Random seed (default: the scenario seed)."""
    )
    bids = Integer(None, allow_none=True, config=True,
        help="""Number of bids per frame (default: the scenario schedule)."""
    )
    mix = Unicode('', config=True,
        help="""VM type mix override, as <vm>:<ratio>[,...]."""
    )
    solver = Enum(SOLVERS, 'heuristic', config=True,
        help="""Auction solver."""
    )
    max_bids = Integer(None, allow_none=True, config=True,
        help="""Largest instance accepted by the exact solver."""
    )
    time_budget = Float(None, allow_none=True, config=True,
        help="""Exact solver time budget (seconds)."""
    )
    node_budget = Integer(None, allow_none=True, config=True,
        help="""Exact solver node budget."""
    )
    tol = Float(None, allow_none=True, config=True,
        help="""Bandwidth allocation tolerance."""
    )
    iterations = Integer(None, allow_none=True, config=True,
        help="""Bandwidth allocation iteration budget."""
    )
    strict = Bool(False, config=True,
        help="""Fail (exit code {}) if the exact solver runs out of budget.""".format(EXIT_BUDGET_EXHAUSTED)
    )

    aliases = {
        'log-level': 'Application.log_level',
        'logfile': 'EdgeAuctionCommand.logfile',
        'outdir': 'EdgeAuctionCommand.outdir',
        'seed': 'EdgeAuctionCommand.seed',
        'bids': 'EdgeAuctionCommand.bids',
        'mix': 'EdgeAuctionCommand.mix',
        'solver': 'EdgeAuctionCommand.solver',
        'max-bids': 'EdgeAuctionCommand.max_bids',
        'time': 'EdgeAuctionCommand.time_budget',
        'nodes': 'EdgeAuctionCommand.node_budget',
        'tol': 'EdgeAuctionCommand.tol',
        'iterations': 'EdgeAuctionCommand.iterations',
    }
    flags = {
        'strict': ({'EdgeAuctionCommand': {'strict': True}},
                   'Fail if the exact solver does not prove optimality.'),
    }

    @default('outdir')
    def _outdir_default(self):
        return _default_outdir()

    def initialize(self, argv=None):
        super(EdgeAuctionCommand, self).initialize(argv)
        set_logging(self.logfile or None)

    def fail(self, code, msg, *args):
        self.log.error(msg, *args)
        self.exit(code)

    def scenario_path(self):
        if not self.extra_args:
            self.fail(EXIT_USAGE, 'missing scenario file')
        path = self.extra_args[0]
        if not os.path.exists(path) and os.path.exists(reference_path(path)):
            path = reference_path(path)
        return path

    def load(self, path=None):
        """
        Load a scenario and apply the command-line overrides
        """
        path = path or self.scenario_path()
        if not os.path.isfile(path):
            self.fail(EXIT_IO_ERROR, 'cannot read scenario file: %s', path)
        try:
            return self.overrides(load_scenario(path))
        except EdgeAuctionError as e:
            self.fail(EXIT_INVALID_SCENARIO, 'invalid scenario: %s', e)

    def overrides(self, sc):
        gen, limits, bw = sc.generator, sc.limits, sc.bandwidth
        if self.mix:
            mix = {}
            for item in split_list(self.mix):
                try:
                    v, r = item.rsplit(':', 1)
                    mix[v] = float(r)
                except ValueError:
                    raise ScenarioError("invalid mix item '{}' (expected vm:ratio)", item)
            gen = replace(gen, mix=mix)
        if self.seed is not None:
            gen = replace(gen, seed=self.seed)
        if self.bids is not None:
            gen = replace(gen, bid_counts=(self.bids,))
        for attr in ('max_bids', 'time_budget', 'node_budget'):
            if getattr(self, attr) is not None:
                limits = replace(limits, **{attr: getattr(self, attr)})
        if self.tol is not None:
            bw = replace(bw, feasibility=self.tol, slackness=self.tol, stationarity=self.tol)
        if self.iterations is not None:
            bw = replace(bw, iterations=self.iterations)
        sc = sc.replace(generator=gen, limits=limits, bandwidth=bw)
        problems = sc.generator.check()
        if problems:
            raise ScenarioError('; '.join(map(str, problems)))
        return sc

    def manifest(self, sc, mode, frames=1):
        return RunManifest(sc.path, mode, sc.generator.seed, self.solver, frames,
                           self.bids, sc.limits.max_bids, sc.limits.time_budget,
                           sc.limits.node_budget, self.outdir)

    def make_outdir(self):
        try:
            os.makedirs(self.outdir, exist_ok=True)
        except OSError as e:
            self.fail(EXIT_IO_ERROR, 'cannot create output directory: %s', e)

    def write(self, fn, *args):
        """Write record files, exiting with the IO error code on failure"""
        try:
            return fn(*args)
        except OSError as e:
            self.fail(EXIT_IO_ERROR, 'cannot write output: %s', e)

    def finish(self, frames):
        if self.strict and any(f.exact_optimal is False for f in frames):
            self.fail(EXIT_BUDGET_EXHAUSTED, 'exact solver budget exhausted')
        self.exit(EXIT_OK)


# --------------------------------------------------------------------------

class ValidateApp(EdgeAuctionCommand):
    """
    Check a scenario file
    """
    name = 'edgeauction-validate'
    description = '''Check a scenario file and list its invariant violations.
    Exit code 0 if the scenario is valid.'''

    def start(self):
        sc = self.load()
        problems = sc.validate()
        for p in problems:
            print(p)
        if problems:
            self.fail(EXIT_INVALID_SCENARIO, '%s: %d violations', sc.name, len(problems))
        topo = sc.topology
        print('{}: valid ({} APs, {} shallow cloudlets, {} VM types, {} PM types)'
              .format(sc.name, len(topo.aps), len(topo.shallow),
                      len(sc.catalog.vm_types), len(sc.catalog.pm_types)))
        self.exit(EXIT_OK)


class AuctionApp(EdgeAuctionCommand):
    """
    Solve the auction of one frame
    """
    name = 'edgeauction-auction'
    description = '''Solve the auction of a single frame and write its solution.
    Bids are generated from the scenario, or read from a bid file.'''

    bids_file = Unicode('', config=True,
        help="""Bid file (columns id, ap, vm_type, price) instead of generated bids."""
    )
    aliases = dict(EdgeAuctionCommand.aliases, **{'bids-file': 'AuctionApp.bids_file'})

    def start(self):
        sc = self.load()
        state = SimState(sc, np.random.default_rng(sc.generator.seed))
        try:
            if self.bids_file:
                state.bids = records.read_bids(self.bids_file)
                sc = sc.replace(generator=replace(sc.generator, persist=True, mobility=0.0))
                state.scenario = sc
            record, solution, book = run_frame(state, self.solver)
        except OSError as e:
            self.fail(EXIT_IO_ERROR, 'cannot read bids: %s', e)
        except EdgeAuctionError as e:
            self.fail(EXIT_INVALID_SCENARIO, '%s', e)

        self.make_outdir()
        out = lambda name: os.path.join(self.outdir, name)
        rows = solution_records(solution, book, sc.topology)
        self.write(records.write_bids, out('bids.csv'), list(book))
        self.write(records.write_table, out('solution.csv'), rows, records.SOLUTION_COLUMNS)
        self.write(records.write_table, out('frames.csv'), records.frame_rows([record]),
                   records.FRAME_COLUMNS)
        self.write(records.write_table, out('prices.csv'), records.price_rows([record]),
                   records.PRICE_COLUMNS)
        self.write(records.write_table, out('timings.csv'), records.timing_rows([record]),
                   records.TIMING_COLUMNS)
        print(records.text_table(records.frame_rows([record]), records.FRAME_COLUMNS))
        self.log.info('profit %s, %d/%d bids served; solution written to %s',
                      format_money(record.profit), record.served, record.bids, self.outdir)
        self.finish([record])


class SimulateApp(EdgeAuctionCommand):
    """
    Run a two time-scale simulation
    """
    name = 'edgeauction-simulate'
    description = '''Run a two time-scale simulation: auctions every frame,
    bandwidth allocation every slot. Writes the record files and a summary.'''

    frames = Integer(1, config=True, help="""Number of frames.""")
    slots = Bool(True, config=True, help="""Run the bandwidth allocation slots.""")
    aliases = dict(EdgeAuctionCommand.aliases, frames='SimulateApp.frames')
    flags = dict(EdgeAuctionCommand.flags,
                 **{'no-slots': ({'SimulateApp': {'slots': False}},
                                 'Skip the bandwidth allocation slots.')})

    def start(self):
        sc = self.load()
        manifest = self.manifest(sc, 'simulate', self.frames)
        manifest.check()
        try:
            result = simulate(sc, None, self.frames, self.solver, self.bids, self.slots)
        except EdgeAuctionError as e:
            self.fail(EXIT_INVALID_SCENARIO, '%s', e)
        self.write(records.write_simulation, self.outdir, result, manifest)
        print(records.text_table(records.frame_rows(result.frames), records.FRAME_COLUMNS))
        self.finish(result.frames)


def _compare_point(args):
    path, overrides, count, seed = args
    sc = load_scenario(path)
    sc = sc.replace(**overrides)
    return compare_frame(sc, count, seed)


class CompareApp(EdgeAuctionCommand):
    """
    Compare the heuristic with the exact solver
    """
    name = 'edgeauction-compare'
    description = '''Compare the heuristic with the exact solver over a ladder
    of bid counts and seeds, for one or more scenarios.'''

    ladder = Unicode('10', config=True, help="""Bid counts, comma-separated.""")
    seeds = Unicode('1', config=True, help="""Random seeds, comma-separated.""")
    workers = Integer(1, config=True, help="""Number of worker processes.""")
    aliases = dict(EdgeAuctionCommand.aliases, ladder='CompareApp.ladder',
                   seeds='CompareApp.seeds', workers='CompareApp.workers')

    def start(self):
        if not self.extra_args:
            self.fail(EXIT_USAGE, 'missing scenario file')
        try:
            ladder = [int(n) for n in split_list(self.ladder)]
            seeds = [int(s) for s in split_list(self.seeds)]
        except ValueError as e:
            self.fail(EXIT_USAGE, 'invalid ladder or seeds: %s', e)

        jobs = []
        for arg in self.extra_args:
            path = arg if os.path.exists(arg) else reference_path(arg)
            sc = self.load(path)
            overrides = {'limits': sc.limits, 'bandwidth': sc.bandwidth,
                         'generator': sc.generator}
            jobs += [(sc.path, overrides, n, s) for n in ladder for s in seeds]

        try:
            if self.workers > 1 and len(jobs) > 1:
                with ProcessPoolExecutor(self.workers) as pool:
                    results = list(pool.map(_compare_point, jobs))
            else:
                results = [_compare_point(j) for j in jobs]
        except EdgeAuctionError as e:
            self.fail(EXIT_INVALID_SCENARIO, '%s', e)

        key = lambda r: (r['case'], r['bids'], r['seed'])
        rows = sorted((r for r, _ in results), key=key)
        prices = sorted((p for _, ps in results for p in ps),
                        key=lambda p: key(p) + (p['ap'], p['vm_type']))
        self.make_outdir()
        self.write(records.write_table, os.path.join(self.outdir, 'compare.csv'),
                   rows, COMPARE_COLUMNS)
        self.write(records.write_table, os.path.join(self.outdir, 'compare_prices.csv'),
                   prices, COMPARE_PRICE_COLUMNS)
        print(records.text_table(rows, COMPARE_COLUMNS))
        if self.strict and any(r['exact_optimal'] is False for r in rows):
            self.fail(EXIT_BUDGET_EXHAUSTED, 'exact solver budget exhausted')
        self.exit(EXIT_OK)


class BandwidthApp(EdgeAuctionCommand):
    """
    Bandwidth allocation for a saved frame solution
    """
    name = 'edgeauction-bandwidth'
    description = '''Run the bandwidth allocation slots of a saved frame
    solution (the bids.csv and solution.csv written by the auction command).'''

    solution_file = Unicode('', config=True, help="""Solution file (solution.csv).""")
    bids_file = Unicode('', config=True, help="""Bid file (bids.csv).""")
    aliases = dict(EdgeAuctionCommand.aliases, **{'solution': 'BandwidthApp.solution_file',
                                                   'bids-file': 'BandwidthApp.bids_file'})

    def start(self):
        sc = self.load()
        if not (self.solution_file and self.bids_file):
            self.fail(EXIT_USAGE, 'both --solution and --bids-file are needed')
        try:
            book = build_bid_book(records.read_bids(self.bids_file), sc.topology, sc.catalog)
            solution = solution_from_records(records.read_table(self.solution_file), book)
        except OSError as e:
            self.fail(EXIT_IO_ERROR, 'cannot read input: %s', e)
        except EdgeAuctionError as e:
            self.fail(EXIT_INVALID_SCENARIO, '%s', e)
        slots = run_slots(solution, book, sc, np.random.default_rng(sc.generator.seed))
        self.make_outdir()
        out = lambda name: os.path.join(self.outdir, name)
        self.write(records.write_table, out('slots.csv'), records.slot_rows(slots),
                   records.SLOT_COLUMNS)
        self.write(records.write_table, out('links.csv'), records.link_rows(slots),
                   records.LINK_COLUMNS)
        self.write(records.write_table, out('allocations.csv'), records.allocation_rows(slots),
                   records.ALLOCATION_COLUMNS)
        print(records.text_table(records.slot_rows(slots), records.SLOT_COLUMNS, limit=10))
        self.exit(EXIT_OK)


class DirectivesApp(Application):
    """
    List the scenario directives
    """
    name = 'edgeauction-directives'
    version = __version__
    description = '''List the directives of the scenario file language.'''

    def start(self):
        print(DIRECTIVE_HELP)
        self.exit(EXIT_OK)


# --------------------------------------------------------------------------

class EdgeAuctionApp(Application):
    """
    The main application, dispatching to the subcommands
    """
    name = PKGNAME
    version = __version__
    description = '''Auction-based allocation of VMs and bandwidth in a
    hierarchical edge computing network.'''

    def start(self):
        if self.subapp is None:
            print('Available subcommands: ' + ', '.join(sorted(self.subcommands)),
                  file=sys.stderr)
            self.exit(EXIT_USAGE)
        self.subapp.start()
