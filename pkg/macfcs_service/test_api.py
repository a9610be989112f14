import os
import sys
import unittest

from fastapi.testclient import TestClient

# This is the critical part that adds the project root to Python's path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from macfcs_service.app.logic.macfcs_model import (cf_input_to_document, channel_to_document,
                                                   cross_link_channel, dsbs_source,
                                                   df_input_to_document, independent_bits_source,
                                                   parallel_bsc_channel, source_to_document,
                                                   uniform_cf_input, uniform_df_input)
from macfcs_service.app.logic.mock_data import sum_rate_gap_instance
from macfcs_service.app.main import app

client = TestClient(app)


class ApiTest(unittest.TestCase):

    def test_stats(self):
        response = client.post('/stats', json=source_to_document(dsbs_source(0.25)))
        self.assertEqual(response.status_code, 200)
        self.assertAlmostEqual(response.json()['h_joint'], 1.8113, delta=1e-4)

    def test_stats_rejects_unnormalized_source(self):
        response = client.post('/stats', json={'s1_card': 1, 's2_card': 2, 'probs': [0.9, 0.9]})
        self.assertEqual(response.status_code, 422)

    def test_sw_region(self):
        response = client.post('/sw-region', json=source_to_document(dsbs_source(0.25)))
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.json()['vars'], ['R1', 'R2'])

    def test_check_decode_forward(self):
        ch = cross_link_channel()
        response = client.post('/check', json={
            'channel': channel_to_document(ch),
            'source': source_to_document(independent_bits_source(0.11, 0.11)),
            'candidate': df_input_to_document(uniform_df_input(ch)),
        })
        self.assertEqual(response.status_code, 200)
        body = response.json()
        self.assertTrue(body['feasible'])
        self.assertEqual(len(body['constraints'][0]['branches']), 2)

    def test_check_compress_forward(self):
        ch = parallel_bsc_channel(0.05)
        response = client.post('/check', json={
            'channel': channel_to_document(ch),
            'source': source_to_document(independent_bits_source(0.11, 0.11)),
            'candidate': cf_input_to_document(uniform_cf_input(ch)),
        })
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.json()['strategy'], 'cf')
        self.assertTrue(response.json()['independence']['passed'])

    def test_check_flags_empty_per_step_system(self):
        ch, src, inp = sum_rate_gap_instance()
        with self.assertLogs('MACFCS_Solver.api', level='WARNING'):
            response = client.post('/check', json={
                'channel': channel_to_document(ch),
                'source': source_to_document(src),
                'candidate': cf_input_to_document(inp),
            })
        self.assertEqual(response.status_code, 200)
        self.assertTrue(response.json()['feasible'])

    def test_check_reports_mismatched_candidate(self):
        ch = cross_link_channel()
        candidate = df_input_to_document(uniform_df_input(ch))
        candidate['f_x1'] = [1.0]
        response = client.post('/check', json={
            'channel': channel_to_document(ch),
            'source': source_to_document(dsbs_source(0.25)),
            'candidate': candidate,
        })
        self.assertEqual(response.status_code, 422)
        self.assertIn('f_x1', response.json()['detail'])

    def test_fm(self):
        response = client.post('/fm', json={'vars': ['x'], 'inequalities': [
            {'label': 'lo', 'coeffs': {'x': 1}, 'sense': '>', 'rhs': 1},
            {'label': 'hi', 'coeffs': {'x': 1}, 'sense': '<', 'rhs': 3}]})
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.json()['witness'], {'x': 2.0})


if __name__ == '__main__':
    unittest.main()
