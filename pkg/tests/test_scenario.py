from fractions import Fraction

import pytest

from edgeauction.constants import SCHEMA_VERSION
from edgeauction.scenario import (DIRECTIVES, DIRECTIVE_HELP, MAX_RECURSE, RawScenario,
                                  split_lines, process_directive, parse_scenario,
                                  load_scenario, reference_scenarios)
from edgeauction.utils import ScenarioError

SMALL = '''
# two APs sharing one shallow cloudlet
%schema edgeauction-scenario/1
%resources cpu memory
%pmtype host cpu=8 memory=16 idle=0.2
%vmtype small cpu=1 memory=2 bandwidth=10e6 data=1.5e9 peak=0.05 cap=0.03
%vmtype large cpu=4 memory=8 bandwidth=20e6 data=3e9 cap=0.08
%timing frame=300 slot=5 pue=1.1
%ap 1 price=0.5 pms=host:1 xi=shallow:0.01,deep:0.02
%ap 2 price=0.5 pms=host:1 xi=shallow:0.01,deep:0.02
%shallow shallow lastmile=1:50e6,2:50e6 aggregation=1e9 price=0.5 pms=host:1
%deep deep backhaul=1e9 price=0.5 pms=host:1
%generator bids=10,20 mix=small:3,large:1 seed=4
%price small min=0.01 max=0.02
%solver maxbids=12 breakeven=on qos=per-frame
%bandwidth tol=1e-7 method=diminishing
'''


def parse(text):
    return parse_scenario(text, name='small')


class TestParse:

    def test_small(self):
        sc = parse(SMALL)
        assert sc.validate() == []
        assert sc.topology.aps == ('1', '2')
        assert sc.topology.field['2'].id == 'field_2'
        assert sc.topology.pue == 1.1
        assert list(sc.topology.shallow[0].last_mile) == ['1', '2']
        assert sc.catalog.vm('small').on_demand_price_cap == Fraction(3, 100)

    def test_prorated_peak(self):
        # mean resource share of the host times its idle power
        assert parse(SMALL).catalog.vm('large').peak_power == pytest.approx(0.1)

    def test_generator(self):
        gen = parse(SMALL).generator
        assert gen.bid_counts == (10, 20)
        assert gen.mix == {'small': 3.0, 'large': 1.0}
        assert gen.seed == 4
        assert gen.persist is False
        small, large = gen.price_laws['small'], gen.price_laws['large']
        assert (small.low, small.mode, small.high) == \
            (Fraction(1, 100), Fraction(1, 100), Fraction(2, 100))
        assert (large.low, large.mode, large.high) == \
            (0, Fraction(4, 100), Fraction(8, 100))

    def test_solver_settings(self):
        sc = parse(SMALL)
        assert sc.limits.max_bids == 12
        assert sc.limits.warm_start is True
        assert sc.heuristic.break_even is True
        assert sc.heuristic.qos_estimate == 'per-frame'
        assert sc.bandwidth.method == 'diminishing'
        assert sc.bandwidth.feasibility == 1e-7

    def test_reference_cases(self, case1, case2):
        assert reference_scenarios() == ['case1', 'case2']
        assert case1.name == 'case1'
        assert case1.topology.aps == ('1', '2', '3', '4', '5')
        assert case1.topology.slots_per_frame == 60
        assert case1.generator.bid_counts == (50, 500, 1000, 2000)
        assert case1.generator.mix == {'m3': 2.5, 'c3': 1.5, 'r3': 1.0}
        assert case2.generator.mix == {'m3': 1.0, 'c3': 1.5, 'r3': 2.5}
        assert case1.limits.max_bids == 200
        assert case2.bandwidth.iterations == 100000

    def test_bare_name(self):
        assert load_scenario('case2').generator.seed == 2

    def test_split_lines(self):
        assert split_lines('\n  # comment\n %a b \n\n%c') == [(3, '%a b'), (5, '%c')]


class TestErrors:

    @pytest.mark.parametrize('change, message', [
        (('%schema edgeauction-scenario/1', '%schema edgeauction-scenario/9'), 'schema'),
        (('%timing', '%timming'), 'unknown directive'),
        (('pue=1.1', 'pue=1.1 power=2'), "unknown key 'power'"),
        (('aggregation=1e9 ', ''), 'missing key: aggregation'),
        (('pms=host:1 xi', 'pms=host:x xi'), 'invalid value'),
        (('mix=small:3', 'mix=small3'), 'expected name:value'),
        (('%deep deep', '%deep'), 'positional'),
        (('%ap 2', '%ap 1'), 'duplicated id'),
    ])
    def test_bad_directive(self, change, message):
        with pytest.raises(ScenarioError) as e:
            parse(SMALL.replace(*change, 1))
        assert message in str(e.value)
        assert 'line' in str(e.value)

    def test_schema_first(self):
        text = SMALL.replace('%schema edgeauction-scenario/1\n', '')
        with pytest.raises(ScenarioError, match='must be %schema'):
            parse(text)

    def test_non_directive(self):
        with pytest.raises(ScenarioError, match='line 3'):
            parse('%schema {}\n\nresources cpu\n'.format(SCHEMA_VERSION))

    def test_missing_sections(self):
        with pytest.raises(ScenarioError, match='%deep'):
            parse('\n'.join(line for line in SMALL.split('\n')
                            if not line.startswith('%deep')))

    def test_unknown_mix_type(self):
        with pytest.raises(ScenarioError, match='unknown VM type'):
            parse(SMALL.replace('mix=small:3', 'mix=tiny:3'))

    def test_recursion(self, tmp_path):
        loop = tmp_path / 'loop.scn'
        loop.write_text('%schema {}\n%load loop.scn\n'.format(SCHEMA_VERSION))
        with pytest.raises(ScenarioError, match='recursion'):
            load_scenario(str(loop))

    def test_recursion_limit_value(self):
        with pytest.raises(ScenarioError):
            process_directive('%schema ' + SCHEMA_VERSION, RawScenario(),
                              _recurse=MAX_RECURSE + 1)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ScenarioError, match='cannot read'):
            load_scenario(str(tmp_path / 'nowhere.scn'))

    def test_violations_are_reported(self):
        # parses, but the AP 2 QoS weights name the wrong cloudlet
        sc = parse(SMALL.replace('%ap 2 price=0.5 pms=host:1 xi=shallow:0.01',
                                 '%ap 2 price=0.5 pms=host:1 xi=elsewhere:0.01'))
        assert {v.invariant for v in sc.validate()} == {'qos'}


class TestLoad:

    def test_relative_load(self, tmp_path):
        sub = tmp_path / 'sub'
        sub.mkdir()
        (sub / 'base.scn').write_text(SMALL)
        (tmp_path / 'main.scn').write_text('%schema {}\n%load sub/base.scn\n'
                                           '%generator seed=9\n'.format(SCHEMA_VERSION))
        sc = load_scenario(str(tmp_path / 'main.scn'))
        assert sc.name == 'main'
        assert sc.generator.seed == 9
        assert sc.generator.bid_counts == (10, 20)

    def test_help(self):
        for name, (params, text) in DIRECTIVES.items():
            assert '{} {} : {}'.format(name, params, text) in DIRECTIVE_HELP
