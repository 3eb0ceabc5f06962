import os
import os.path

import pytest

from edgeauction.constants import (EXIT_OK, EXIT_USAGE, EXIT_INVALID_SCENARIO,
                                   EXIT_BUDGET_EXHAUSTED, EXIT_IO_ERROR, SCHEMA_VERSION)
from edgeauction.cli import (ValidateApp, AuctionApp, SimulateApp, CompareApp,
                             BandwidthApp, DirectivesApp, RunManifest)
from edgeauction.__main__ import EdgeAuctionMain
from edgeauction.records import read_table, read_bids
from edgeauction.utils import EdgeAuctionError


def run(cls, *argv):
    """Initialize and start an application, returning its exit code"""
    app = cls()
    app.initialize(list(argv))
    with pytest.raises(SystemExit) as e:
        app.start()
    return e.value.code


def read(path):
    with open(path, 'rb') as f:
        return f.read()


class TestValidate:

    def test_reference(self, logdir, capsys):
        assert run(ValidateApp, 'case1') == EXIT_OK
        assert 'case1: valid (5 APs' in capsys.readouterr().out

    def test_missing_argument(self, logdir):
        assert run(ValidateApp) == EXIT_USAGE

    def test_missing_file(self, logdir, tmp_path):
        assert run(ValidateApp, str(tmp_path / 'none.scn')) == EXIT_IO_ERROR

    def test_parse_error(self, logdir, tmp_path):
        path = tmp_path / 'bad.scn'
        path.write_text('%schema {}\n%nonsense\n'.format(SCHEMA_VERSION))
        assert run(ValidateApp, str(path)) == EXIT_INVALID_SCENARIO

    def test_violations(self, logdir, tmp_path, capsys):
        path = tmp_path / 'pue.scn'
        path.write_text('%schema {}\n%load {}\n%timing pue=0.5\n'.format(
            SCHEMA_VERSION, os.path.join(os.path.dirname(__file__), '..', 'edgeauction',
                                         'scenarios', 'common.scn')))
        assert run(ValidateApp, str(path)) == EXIT_INVALID_SCENARIO
        assert 'pue[topology]' in capsys.readouterr().out

    def test_bad_override(self, logdir):
        assert run(ValidateApp, 'case1', '--mix=m3') == EXIT_INVALID_SCENARIO
        assert run(ValidateApp, 'case1', '--mix=tiny:1') == EXIT_INVALID_SCENARIO


class TestAuction:

    def test_generated(self, logdir, tmp_path):
        out = str(tmp_path / 'out')
        assert run(AuctionApp, 'case2', '--bids=12', '--outdir=' + out) == EXIT_OK
        for name in ('bids.csv', 'solution.csv', 'frames.csv', 'prices.csv', 'timings.csv'):
            assert os.path.exists(os.path.join(out, name))
        assert len(read_bids(os.path.join(out, 'bids.csv'))) == 12
        frames = read_table(os.path.join(out, 'frames.csv'))
        assert frames[0]['solver'] == 'heuristic'
        assert len(read_table(os.path.join(out, 'solution.csv'))) == int(frames[0]['served'])

    def test_bids_file(self, logdir, tmp_path):
        first, second = str(tmp_path / 'a'), str(tmp_path / 'b')
        assert run(AuctionApp, 'case1', '--bids=10', '--outdir=' + first) == EXIT_OK
        bids = os.path.join(first, 'bids.csv')
        assert run(AuctionApp, 'case1', '--bids-file=' + bids, '--solver=both',
                   '--outdir=' + second) == EXIT_OK
        assert read(os.path.join(second, 'bids.csv')) == read(bids)
        frames = read_table(os.path.join(second, 'frames.csv'))
        assert frames[0]['exact_optimal'] == 'true'

    def test_strict_budget(self, logdir, tmp_path):
        out = str(tmp_path / 'out')
        code = run(AuctionApp, 'case1', '--bids=10', '--solver=exact', '--nodes=1',
                   '--strict', '--outdir=' + out)
        assert code == EXIT_BUDGET_EXHAUSTED
        assert read_table(os.path.join(out, 'frames.csv'))[0]['exact_optimal'] == 'false'

    def test_unwritable(self, logdir, tmp_path):
        blocker = tmp_path / 'file'
        blocker.write_text('')
        assert run(AuctionApp, 'case1', '--bids=5', '--outdir=' + str(blocker)) == EXIT_IO_ERROR

    def test_then_bandwidth(self, logdir, tmp_path):
        first, second = str(tmp_path / 'a'), str(tmp_path / 'b')
        assert run(AuctionApp, 'case1', '--bids=10', '--outdir=' + first) == EXIT_OK
        assert run(BandwidthApp, 'case1', '--solution=' + os.path.join(first, 'solution.csv'),
                   '--bids-file=' + os.path.join(first, 'bids.csv'),
                   '--outdir=' + second) == EXIT_OK
        slots = read_table(os.path.join(second, 'slots.csv'))
        assert [s['slot'] for s in slots] == [str(n) for n in range(60)]
        assert all(s['converged'] == 'true' for s in slots)

    def test_bandwidth_needs_inputs(self, logdir):
        assert run(BandwidthApp, 'case1') == EXIT_USAGE


class TestSimulate:

    FILES = ('frames.csv', 'prices.csv', 'slots.csv', 'links.csv', 'allocations.csv',
             'summary.json')

    def test_reproducible(self, logdir, tmp_path):
        dirs = [str(tmp_path / d) for d in ('one', 'two')]
        for d in dirs:
            assert run(SimulateApp, 'case1', '--bids=8', '--frames=2', '--seed=11',
                       '--outdir=' + d) == EXIT_OK
        for name in self.FILES:
            assert read(os.path.join(dirs[0], name)) == read(os.path.join(dirs[1], name))
        assert os.path.exists(os.path.join(dirs[0], 'timings.csv'))

    def test_no_slots(self, logdir, tmp_path):
        out = str(tmp_path / 'out')
        assert run(SimulateApp, 'case2', '--bids=5', '--no-slots', '--outdir=' + out) == EXIT_OK
        assert not os.path.exists(os.path.join(out, 'slots.csv'))
        assert len(read_table(os.path.join(out, 'frames.csv'))) == 1

    def test_outdir_from_environment(self, logdir, tmp_path, monkeypatch):
        out = tmp_path / 'env'
        monkeypatch.setenv('EDGEAUCTION_OUTDIR', str(out))
        assert run(SimulateApp, 'case1', '--bids=3', '--no-slots') == EXIT_OK
        assert (out / 'summary.json').exists()


class TestCompare:

    def test_ladder(self, logdir, tmp_path):
        out = str(tmp_path / 'out')
        assert run(CompareApp, 'case1', '--ladder=4,6', '--seeds=1,2',
                   '--outdir=' + out) == EXIT_OK
        rows = read_table(os.path.join(out, 'compare.csv'))
        assert [(r['bids'], r['seed']) for r in rows] == \
            [('4', '1'), ('4', '2'), ('6', '1'), ('6', '2')]
        assert all(r['exact_optimal'] == 'true' for r in rows)
        prices = read_table(os.path.join(out, 'compare_prices.csv'))
        assert {p['case'] for p in prices} == {'case1'}

    def test_empty_ladder(self, logdir, tmp_path):
        out = str(tmp_path / 'out')
        assert run(CompareApp, 'case1', '--ladder=', '--outdir=' + out) == EXIT_OK
        assert read_table(os.path.join(out, 'compare.csv')) == []

    def test_bad_ladder(self, logdir):
        assert run(CompareApp, 'case1', '--ladder=a,b') == EXIT_USAGE


class TestMain:

    def test_directives(self, capsys):
        with pytest.raises(SystemExit) as e:
            DirectivesApp().start()
        assert e.value.code == EXIT_OK
        assert '%vmtype' in capsys.readouterr().out

    def test_no_subcommand(self, logdir):
        app = EdgeAuctionMain()
        app.initialize([])
        with pytest.raises(SystemExit) as e:
            app.start()
        assert e.value.code == EXIT_USAGE

    def test_subcommand(self, logdir):
        app = EdgeAuctionMain()
        try:
            app.initialize(['validate', 'case2'])
            with pytest.raises(SystemExit) as e:
                app.start()
            assert e.value.code == EXIT_OK
        finally:
            ValidateApp.clear_instance()

    def test_manifest(self, tmp_path):
        path = tmp_path / 'x.scn'
        path.write_text('')
        manifest = RunManifest(str(path), 'simulate', seed=3, outdir=str(tmp_path))
        manifest.check()
        doc = manifest.as_dict()
        assert doc['scenario'] == 'x.scn'
        assert 'outdir' not in doc
        with pytest.raises(EdgeAuctionError):
            RunManifest(str(path), 'dance').check()
