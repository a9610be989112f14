import json
import os
import sys
import tempfile
import unittest

import numpy as np

# This is the critical part that adds the project root to Python's path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from macfcs_service.app.logic.macfcs_model import (
    CF_ORDER, DF_ORDER, CardinalityMismatchError, DocumentError, build_cf_joint, build_df_joint,
    cf_input_to_document, channel_to_document, common_part_labels, compose_y3, cross_link_channel,
    df_input_from_arrays, df_input_to_document, dsbs_source, independent_bits_source, load_cf_input,
    load_channel, load_df_input, load_source, make_common_part_source, read_document, sample_cf_input,
    sample_df_input, source_stats, source_to_document, uniform_df_input)
from macfcs_service.app.logic.mock_data import generate_channel, generate_source
from macfcs_service.app.logic.prob_core import cond_mutual_info, entropy_of_array, marginalize


class SourceTest(unittest.TestCase):

    def test_dsbs_statistics(self):
        st = source_stats(dsbs_source(0.25))
        self.assertAlmostEqual(st.h_s1, 1.0, places=12)
        self.assertAlmostEqual(st.h_s1_given_s2, 0.8113, delta=1e-4)
        self.assertAlmostEqual(st.h_joint, 1.8113, delta=1e-4)
        self.assertAlmostEqual(st.i_s1_s2, 0.1887, delta=1e-4)

    def test_independent_bits_share_nothing(self):
        self.assertAlmostEqual(source_stats(independent_bits_source(0.11, 0.3)).i_s1_s2, 0.0, places=12)

    def test_chain_rule_on_random_sources(self):
        rng = np.random.default_rng(37)
        for _ in range(100):
            src = generate_source(rng, max_card=4, alpha=0.4)
            st = source_stats(src)
            p = src.joint.probs
            p_s1 = p.sum(axis=1)
            rows = p[p_s1 > 0] / p_s1[p_s1 > 0, None]
            h_s2_given_s1 = float(np.dot(p_s1[p_s1 > 0], [entropy_of_array(r) for r in rows]))
            self.assertAlmostEqual(st.h_s2_given_s1, h_s2_given_s1, places=9)
            self.assertAlmostEqual(st.h_joint, st.h_s1 + st.h_s2_given_s1, places=9)
            self.assertAlmostEqual(st.h_joint, st.h_s2 + st.h_s1_given_s2, places=9)
            self.assertAlmostEqual(st.i_s1_s2, st.h_s1 - st.h_s1_given_s2, places=9)
            self.assertLessEqual(st.h_joint, st.h_s1 + st.h_s2 + 1e-12)

    def test_common_part_source(self):
        src = make_common_part_source(2, 3, 1)
        st = source_stats(src)
        self.assertAlmostEqual(st.i_s1_s2, 1.0, places=12)
        self.assertAlmostEqual(st.h_s1_given_s2, np.log2(3), places=12)
        self.assertAlmostEqual(st.h_s2_given_s1, 0.0, places=12)
        labels1, labels2, count = common_part_labels(src)
        self.assertEqual(count, 2)
        self.assertEqual(len(set(labels1[:3])), 1)
        self.assertNotEqual(labels1[0], labels1[3])
        self.assertEqual(labels2[0], labels1[0])

    def test_full_support_has_one_common_label(self):
        self.assertEqual(common_part_labels(dsbs_source(0.25))[2], 1)


class ChannelTest(unittest.TestCase):

    def test_cross_link_outputs(self):
        ch = cross_link_channel()
        self.assertEqual((ch.y1_card, ch.y2_card, ch.y3_card), (2, 2, 4))
        # Y1 copies X2
        np.testing.assert_allclose(ch.output_law('Y1')[0, 1], [0.0, 1.0])
        np.testing.assert_allclose(ch.output_law('Y3')[1, 0], [0.0, 0.0, 1.0, 0.0])

    def test_silent_destination(self):
        self.assertEqual(cross_link_channel(silent_destination=True).y3_card, 1)

    def test_compose_y3_preserves_feedback_outputs(self):
        ch = cross_link_channel(0.1)
        merged = compose_y3(ch, np.array([[1, 0], [1, 0], [0, 1], [0, 1.0]]))
        self.assertEqual(merged.y3_card, 2)
        np.testing.assert_allclose(merged.output_law('Y2'), ch.output_law('Y2'))

    def test_compose_y3_rejects_wrong_garble(self):
        with self.assertRaises(CardinalityMismatchError):
            compose_y3(cross_link_channel(), np.eye(2))


class JointTest(unittest.TestCase):

    def test_df_joint_factorization(self):
        ch = cross_link_channel(0.05)
        rng = np.random.default_rng(1)
        joint = build_df_joint(ch, sample_df_input(ch, 2, 2, 2, rng))
        self.assertEqual(joint.names, DF_ORDER)
        self.assertAlmostEqual(cond_mutual_info(joint, ['W0'], ['W1', 'W2']), 0.0, places=12)
        self.assertAlmostEqual(cond_mutual_info(joint, ['X1'], ['X2'], ['W0', 'W1', 'W2']), 0.0, places=12)
        self.assertAlmostEqual(cond_mutual_info(joint, ['W0', 'W1', 'W2'], ['Y3'], ['X1', 'X2']), 0.0,
                               places=12)

    def test_cf_joint_factorization(self):
        ch = cross_link_channel(0.05)
        rng = np.random.default_rng(2)
        joint = build_cf_joint(ch, sample_cf_input(ch, 2, 2, 3, 3, rng))
        self.assertEqual(joint.names, CF_ORDER)
        self.assertAlmostEqual(cond_mutual_info(joint, ['U1', 'X1'], ['U2', 'X2']), 0.0, places=12)
        self.assertAlmostEqual(cond_mutual_info(joint, ['YT1'], ['Y3', 'U1', 'U2', 'X2'], ['Y1', 'X1']),
                               0.0, places=12)
        self.assertEqual(marginalize(joint, ['YT2']).shape, (3,))

    def test_point_mass_auxiliaries_reduce_to_independent_inputs(self):
        rng = np.random.default_rng(41)
        for _ in range(50):
            ch = generate_channel(rng)
            w = tuple(int(c) for c in rng.integers(1, 4, size=3))
            at = tuple(int(rng.integers(c)) for c in w)
            f_x1 = rng.dirichlet(np.ones(ch.x1_card), size=w).reshape(w + (ch.x1_card,))
            f_x2 = rng.dirichlet(np.ones(ch.x2_card), size=w).reshape(w + (ch.x2_card,))
            inp = df_input_from_arrays(ch, np.eye(w[0])[at[0]], np.eye(w[1])[at[1]], np.eye(w[2])[at[2]],
                                       f_x1, f_x2)
            joint = build_df_joint(ch, inp)
            expected = (np.multiply.outer(f_x1[at], f_x2[at])[:, :, None, None, None] * ch.law.probs)
            np.testing.assert_allclose(marginalize(joint, DF_ORDER[3:]).probs, expected, atol=1e-12)

    def test_candidate_alphabet_must_match_channel(self):
        ch = cross_link_channel()
        wrong = df_input_from_arrays(ch, [1.0], [1.0], [1.0], np.full((1, 1, 1, 2), 0.5), np.full((1, 1, 1, 2), 0.5))
        ternary = load_channel({'x1_card': 3, 'x2_card': 2, 'y1_card': 1, 'y2_card': 1, 'y3_card': 1,
                                'probs': [1.0] * 6})
        with self.assertRaises(CardinalityMismatchError) as ctx:
            build_df_joint(ternary, wrong)
        self.assertIn('f_x1', str(ctx.exception))


class DocumentTest(unittest.TestCase):

    def test_channel_round_trip(self):
        ch = cross_link_channel(0.1)
        again = load_channel(channel_to_document(ch))
        np.testing.assert_allclose(again.law.probs, ch.law.probs)

    def test_source_from_json_text(self):
        src = load_source(json.dumps(source_to_document(dsbs_source(0.25))))
        self.assertAlmostEqual(source_stats(src).h_joint, 1.8113, delta=1e-4)

    def test_bad_probabilities(self):
        with self.assertRaises(DocumentError):
            load_source({'s1_card': 2, 's2_card': 1, 'probs': [0.7, 0.7]})
        with self.assertRaises(CardinalityMismatchError):
            load_source({'s1_card': 2, 's2_card': 2, 'probs': [0.5, 0.5]})
        with self.assertRaises(DocumentError) as ctx:
            load_channel({'x1_card': 0, 'x2_card': 1, 'y1_card': 1, 'y2_card': 1, 'y3_card': 1, 'probs': []})
        self.assertIn('x1_card', str(ctx.exception))

    def test_unknown_fields_are_warned(self):
        doc = source_to_document(dsbs_source(0.1))
        doc['comment'] = 'from a sweep'
        with self.assertLogs('MACFCS_Solver.model', level='WARNING') as logs:
            load_source(doc)
        self.assertIn('comment', logs.output[0])

    def test_candidate_round_trips(self):
        ch = cross_link_channel()
        rng = np.random.default_rng(4)
        df = sample_df_input(ch, 2, 1, 3, rng)
        again = load_df_input(df_input_to_document(df), ch)
        np.testing.assert_allclose(again.f_x2.probs, df.f_x2.probs)
        cf = sample_cf_input(ch, 2, 2, 3, 2, rng)
        again = load_cf_input(cf_input_to_document(cf), ch)
        np.testing.assert_allclose(again.f_yt1.probs, cf.f_yt1.probs)

    def test_candidate_length_names_the_factor(self):
        doc = df_input_to_document(uniform_df_input(cross_link_channel()))
        doc['f_x2'] = doc['f_x2'][:1]
        with self.assertRaises(CardinalityMismatchError) as ctx:
            load_df_input(doc, cross_link_channel())
        self.assertIn('f_x2', str(ctx.exception))

    def test_read_document(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'bad.json')
            with open(path, 'w', encoding='utf-8') as f:
                f.write('{not json')
            with self.assertRaises(DocumentError):
                read_document(path)


if __name__ == '__main__':
    unittest.main()
