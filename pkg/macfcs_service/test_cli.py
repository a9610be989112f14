import contextlib
import io
import json
import os
import sys
import tempfile
import unittest

import numpy as np

# This is the critical part that adds the project root to Python's path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from macfcs_service.app.cli import EXIT_INFEASIBLE, EXIT_OK, EXIT_USAGE, main
from macfcs_service.app.logic.macfcs_model import (cf_input_to_document, channel_to_document,
                                                   constant_channel, cross_link_channel,
                                                   df_input_to_document, dsbs_source,
                                                   independent_bits_source, source_to_document,
                                                   uniform_df_input)
from macfcs_service.app.logic.mock_data import generate_separable_instance, sum_rate_gap_instance


class CliTestCase(unittest.TestCase):

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = self._tmp.name
        ch = cross_link_channel()
        self.channel = self.write('channel.json', channel_to_document(ch))
        self.silent = self.write('silent.json', channel_to_document(constant_channel()))
        self.bern = self.write('bern.json', source_to_document(independent_bits_source(0.11, 0.11)))
        self.bits = self.write('bits.json', source_to_document(independent_bits_source(0.5, 0.5)))
        self.dsbs = self.write('dsbs.json', source_to_document(dsbs_source(0.25)))
        self.df = self.write('df.json', df_input_to_document(uniform_df_input(ch)))

    def tearDown(self):
        self._tmp.cleanup()

    def write(self, name, document):
        path = os.path.join(self.tmp, name)
        with open(path, 'w', encoding='utf-8') as f:
            if isinstance(document, str):
                f.write(document)
            else:
                json.dump(document, f)
        return path

    def run_cli(self, *argv):
        out, err = io.StringIO(), io.StringIO()
        with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
            code = main(list(argv))
        return code, out.getvalue(), err.getvalue()


class StatsCommandTest(CliTestCase):

    def test_dsbs(self):
        code, out, _ = self.run_cli('stats', '--source', self.dsbs)
        self.assertEqual(code, EXIT_OK)
        self.assertAlmostEqual(json.loads(out)['h_joint'], 1.8113, delta=1e-4)

    def test_independent_bits(self):
        code, out, _ = self.run_cli('stats', '--source', self.bits)
        self.assertEqual(json.loads(out)['i_s1_s2'], 0.0)

    def test_malformed_file(self):
        code, _, err = self.run_cli('stats', '--source', self.write('bad.json', '{"s1_card": 2'))
        self.assertEqual(code, EXIT_USAGE)
        self.assertIn('not valid JSON', err)

    def test_missing_file(self):
        code, _, _ = self.run_cli('stats', '--source', os.path.join(self.tmp, 'nowhere.json'))
        self.assertEqual(code, EXIT_USAGE)

    def test_config_reaches_stats(self):
        debug = self.write('debug.json', {'log_level': 'DEBUG'})
        code, _, err = self.run_cli('stats', '--source', self.dsbs, '--config', debug)
        self.assertEqual(code, EXIT_OK)
        self.assertIn('H(S1,S2)', err)
        code, _, err = self.run_cli('stats', '--source', self.dsbs, '--config', debug, '--preset', 'smoke')
        self.assertEqual(code, EXIT_OK)
        self.assertIn('DEBUG', err)

    def test_unknown_config_key_is_rejected(self):
        bad = self.write('bad_config.json', {'bogus': 1})
        for command in ('stats', 'sw-region'):
            code, _, err = self.run_cli(command, '--source', self.dsbs, '--config', bad)
            self.assertEqual(code, EXIT_USAGE, command)
            self.assertIn('bogus', err)

    def test_sw_region_and_capacity(self):
        code, out, _ = self.run_cli('sw-region', '--source', self.dsbs)
        self.assertEqual(code, EXIT_OK)
        self.assertEqual([q['label'] for q in json.loads(out)['inequalities']], ['5a', '5b', '5c'])
        code, out, _ = self.run_cli('capacity', '--channel', self.channel)
        self.assertAlmostEqual(json.loads(out)['sum_capacity'], 2.0, places=6)


class CheckCommandTest(CliTestCase):

    def test_feasible_instance(self):
        code, out, _ = self.run_cli('check', '--strategy', 'df', '--channel', self.channel,
                                    '--source', self.bern, '--candidate', self.df)
        self.assertEqual(code, EXIT_OK)
        self.assertAlmostEqual(json.loads(out)['min_margin'], 0.5, delta=1e-3)

    def test_uniform_bits_fail(self):
        code, out, _ = self.run_cli('check-df', '--channel', self.channel, '--source', self.bits,
                                    '--candidate', self.df)
        self.assertEqual(code, EXIT_INFEASIBLE)
        first = json.loads(out)['constraints'][0]
        self.assertEqual(first['label'], '1a')
        self.assertAlmostEqual(first['margin'], 0.0, places=9)

    def test_raw_report(self):
        code, out, _ = self.run_cli('check-df', '--raw', '--channel', self.channel, '--source', self.bern,
                                    '--candidate', self.df)
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(json.loads(out)['strategy'], 'df-raw')

    def test_wrong_cardinality(self):
        doc = df_input_to_document(uniform_df_input(cross_link_channel()))
        doc['w0_card'] = 2
        code, _, err = self.run_cli('check', '--strategy', 'df', '--channel', self.channel,
                                    '--source', self.bern, '--candidate', self.write('bad.json', doc))
        self.assertEqual(code, EXIT_USAGE)
        self.assertIn('p_w0', err)

    def test_exported_system_matches_check(self):
        rng = np.random.default_rng(31)
        for k in range(5):
            ch, src, inp = generate_separable_instance(rng)
            channel = self.write(f'sep{k}.json', channel_to_document(ch))
            source = self.write(f'src{k}.json', source_to_document(src))
            candidate = self.write(f'cf{k}.json', cf_input_to_document(inp))
            system = os.path.join(self.tmp, f'system{k}.json')
            check_code, _, _ = self.run_cli('check-cf', '--channel', channel, '--source', source,
                                            '--candidate', candidate, '--export-system', system)
            fm_code, _, _ = self.run_cli('fm', '--system', system)
            self.assertEqual(check_code, fm_code)

    def test_check_reports_stated_verdict_and_flags_empty_system(self):
        ch, src, inp = sum_rate_gap_instance()
        channel = self.write('gap_channel.json', channel_to_document(ch))
        source = self.write('gap_source.json', source_to_document(src))
        candidate = self.write('gap_cf.json', cf_input_to_document(inp))
        system = os.path.join(self.tmp, 'gap_system.json')
        code, out, err = self.run_cli('check-cf', '--channel', channel, '--source', source,
                                      '--candidate', candidate, '--export-system', system)
        self.assertEqual(code, EXIT_OK)
        self.assertTrue(json.loads(out)['feasible'])
        self.assertIn('per-step system is empty', err)
        self.assertEqual(self.run_cli('fm', '--system', system)[0], EXIT_INFEASIBLE)


class FmCommandTest(CliTestCase):

    def system(self, *rows):
        return self.write('system.json', {'vars': ['x'], 'inequalities': [
            {'label': f'q{i}', 'coeffs': {'x': 1}, 'sense': sense, 'rhs': rhs} for i, (sense, rhs) in enumerate(rows)]})

    def test_midpoint_witness(self):
        code, out, _ = self.run_cli('fm', '--system', self.system(('>', 1), ('<', 3)))
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(json.loads(out)['witness'], {'x': 2.0})

    def test_empty(self):
        code, out, _ = self.run_cli('fm', '--system', self.system(('>', 2), ('<', 1)))
        self.assertEqual(code, EXIT_INFEASIBLE)
        self.assertIsNone(json.loads(out)['witness'])

    def test_malformed_system(self):
        path = self.write('system.json', {'vars': ['x'], 'inequalities': [{'label': 'a'}]})
        self.assertEqual(self.run_cli('fm', '--system', path)[0], EXIT_USAGE)


class OptimizeCommandTest(CliTestCase):

    def test_reference_instance(self):
        code, out, _ = self.run_cli('optimize', '--channel', self.channel, '--source', self.bern,
                                    '--cards', 'W0=1,W1=1,W2=1', '--restarts', '200', '--refine-iters', '1',
                                    '--seed', '7', '--workers', '1')
        self.assertEqual(code, EXIT_OK)
        self.assertTrue(json.loads(out)['feasible'])

    def test_repeatable_output(self):
        outputs = []
        for k in range(2):
            path = os.path.join(self.tmp, f'result{k}.json')
            self.run_cli('optimize', '--channel', self.channel, '--source', self.dsbs, '--cards',
                         'W0=2,W1=1,W2=1', '--restarts', '3', '--refine-iters', '2', '--workers', '2',
                         '--out', path)
            with open(path, 'rb') as f:
                outputs.append(f.read())
        self.assertEqual(outputs[0], outputs[1])

    def test_zero_capacity(self):
        code, _, err = self.run_cli('optimize', '--channel', self.silent, '--source', self.dsbs,
                                    '--cards', 'W0=1,W1=1,W2=1', '--restarts', '2', '--workers', '1')
        self.assertEqual(code, EXIT_INFEASIBLE)
        self.assertIn('no candidate found at cardinalities', err)

    def test_bad_cards(self):
        code, _, _ = self.run_cli('optimize', '--channel', self.channel, '--source', self.dsbs,
                                  '--cards', 'W0', '--workers', '1')
        self.assertEqual(code, EXIT_USAGE)


class SweepCommandTest(CliTestCase):

    def sweep(self, start, stop, step):
        return self.run_cli('sweep', '--channel', self.channel, '--family', 'dsbs', '--start', start,
                            '--stop', stop, '--step', step, '--cards', 'W0=1,W1=1,W2=1', '--restarts', '1',
                            '--refine-iters', '0', '--workers', '1')

    def test_rows_per_parameter(self):
        code, out, _ = self.sweep('0.05', '0.45', '0.05')
        self.assertEqual(code, EXIT_OK)
        lines = out.strip().split('\n')
        self.assertEqual(lines[0], 'param,feasible,min_margin,best_objective')
        self.assertEqual(len(lines), 10)

    def test_single_point_and_wide_step(self):
        self.assertEqual(len(self.sweep('0.1', '0.1', '0.05')[1].strip().split('\n')), 2)
        code, out, _ = self.sweep('0.1', '0.2', '0.5')
        self.assertEqual(len(out.strip().split('\n')), 2)
        self.assertTrue(out.strip().split('\n')[1].startswith('0.1,'))

    def test_empty_range(self):
        self.assertEqual(self.sweep('0.3', '0.1', '0.05')[0], EXIT_USAGE)


class SimulateCommandTest(CliTestCase):

    def test_sw_trend_csv(self):
        code, out, err = self.run_cli('simulate', '--scheme', 'sw', '--source', self.dsbs, '--n', '6,10',
                                      '--trials', '100', '--rates', 'R1=1.0,R2=1.0', '--workers', '1')
        self.assertEqual(code, EXIT_OK)
        lines = out.strip().split('\n')
        self.assertEqual(lines[0], 'n,trials,errors,error_rate,stage_breakdown')
        self.assertEqual([line.split(',')[0] for line in lines[1:]], ['6', '10'])
        self.assertIn('maximum-likelihood', err)

    def test_df_on_silent_channel(self):
        code, out, _ = self.run_cli('simulate', '--scheme', 'df', '--channel', self.silent, '--source', self.bern,
                                    '--n', '4', '--trials', '50', '--blocks', '3', '--workers', '1')
        self.assertEqual(code, EXIT_OK)
        self.assertGreaterEqual(float(out.strip().split('\n')[1].split(',')[3]), 0.5)

    def test_invalid_scheme(self):
        self.assertEqual(self.run_cli('simulate', '--scheme', 'af', '--source', self.dsbs)[0], EXIT_USAGE)


if __name__ == '__main__':
    unittest.main()
