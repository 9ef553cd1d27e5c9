import sys
sys.path.append('./')

import json
import os
import tempfile
import numpy as np
import unittest

from src.errors import ShapeError
from src.labels import NO_CALL
from src.labels import FrameLabels
from src.labels import SegmentLabels
from src.metrics import boundaries
from src.metrics import boundary_pr
from src.metrics import confusion
from src.metrics import detection_report
from src.metrics import macro
from src.metrics import pr_ap
from src.metrics import purity_coverage_sweep
from src.metrics import roc_auc
from src.metrics import scalars
from src.metrics import seg_metrics
from src.metrics import segment_report
from src.metrics import write_curves
from src.metrics import write_report
from src.tracks import FramewiseProbabilities
from src.tracks import Segment


def brute_auc(y, s):
    pos, neg = s[y == 1], s[y == 0]
    wins = (pos[:, None] > neg[None, :]).sum() + 0.5*(pos[:, None] == neg[None, :]).sum()
    return wins / float(len(pos)*len(neg))


def brute_ap(y, s):
    ap, last_recall = 0.0, 0.0
    for t in np.unique(s)[::-1]:
        predicted = s >= t
        tp = np.sum(predicted & (y == 1))
        recall = tp / float(np.sum(y == 1))
        ap += (recall - last_recall) * tp / float(np.sum(predicted))
        last_recall = recall
    return ap


class TestMetrics(unittest.TestCase):
    """
    Test ranking, thresholded, segmentation and boundary metrics and the reports.
    """

    def test_ranking_metrics_match_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n = int(rng.integers(2, 201))
            y = (rng.uniform(size=n) < rng.uniform(0.05, 0.95)).astype(int)
            s = np.round(rng.uniform(size=n), int(rng.integers(1, 4)))
            if 0 < y.sum() < n:
                self.assertLess(abs(roc_auc(y, s)[1] - brute_auc(y, s)), 1.0e-9)
            if y.sum() > 0:
                self.assertLess(abs(pr_ap(y, s)[1] - brute_ap(y, s)), 1.0e-12)

    def test_hand_fixtures(self):
        curve, area = roc_auc([ 1, 0, 1, 0 ], [ 0.9, 0.8, 0.7, 0.6 ])
        self.assertEqual(area, 0.75)
        self.assertEqual(curve.x[-1], 1.0)
        _, ap = pr_ap([ 1, 0, 1 ], [ 0.9, 0.8, 0.7 ])
        self.assertAlmostEqual(ap, 5.0/6.0, places=15)
        seg = seg_metrics([ 1, 1, 0, 0 ], [ 0, 1, 1, 0 ])
        self.assertEqual(seg['purity'], 0.5)
        self.assertEqual(seg['coverage'], 0.5)
        self.assertAlmostEqual(seg['jaccard'], 1.0/3.0, places=15)
        cc = confusion([ 1, 1, 0, 0, 0 ], [ 1, 0, 1, 0, 0 ])
        self.assertEqual((cc.TP, cc.FP, cc.TN, cc.FN), (1, 1, 2, 1))
        self.assertEqual(scalars(cc)['specificity'], 2.0/3.0)

    def test_undefined_values(self):
        self.assertEqual(roc_auc([ 1, 1 ], [ 0.2, 0.3 ]), (None, None))
        self.assertEqual(pr_ap([ 0, 0 ], [ 0.2, 0.3 ]), (None, None))
        self.assertIsNone(scalars(confusion([ 0, 0 ], [ 0, 0 ]))['sensitivity'])
        self.assertIsNone(seg_metrics([ 0, 0 ], [ 0, 0 ])['jaccard'])
        self.assertEqual(macro([ 0.5, None, 1.0 ]), 0.75)
        self.assertIsNone(macro([ None ]))
        with self.assertRaises(ShapeError):
            confusion([ 1, 0 ], [ 1 ])
        sweep = purity_coverage_sweep([ 1, 0 ], [ 0.3, 0.1 ])
        self.assertTrue(np.isnan(sweep.y[0]))   # nothing above 0.95

    def test_boundaries(self):
        self.assertTrue(np.array_equal(boundaries([ 0, 1, 1, 0, 1 ]), [ 0.1, 0.3, 0.4, 0.5 ]))
        self.assertTrue(np.array_equal(boundaries([ 1 ], start_frame=5), [ 0.5, 0.6 ]))
        pr = boundary_pr([ 1.0, 2.0 ], [ 1.15, 1.2, 2.5 ])
        self.assertAlmostEqual(pr['boundary_precision'], 1.0/3.0, places=15)
        self.assertEqual(pr['boundary_recall'], 0.5)
        self.assertEqual(boundary_pr([ 1.0 ], [ 1.2 ])['boundary_recall'], 1.0)
        self.assertIsNone(boundary_pr([], [])['boundary_precision'])

    def test_detection_report(self):
        classes = [ NO_CALL, 'rumble', 'roar' ]
        values = np.zeros((20, 3), dtype=np.int8)
        values[3:8, 1] = 1
        values[10:14, 2] = 1
        values[:, 0] = 1 - np.max(values[:, 1:], axis=1)
        labels = FrameLabels('r', classes, values)
        perfect = FramewiseProbabilities('r', classes, 0.1 + 0.8*values[2:18], 2)
        report = detection_report([ (labels, perfect) ])
        self.assertEqual(sorted(report.per_class), [ 'one-vs-one', 'one-vs-rest' ])
        self.assertEqual(sorted(report.per_class['one-vs-rest']), [ 'roar', 'rumble' ])
        for scheme in report.macro:
            self.assertEqual(report.macro[scheme]['auc'], 1.0)
        rumble = report.per_class['one-vs-rest']['rumble']
        self.assertEqual((rumble['boundary_precision'], rumble['boundary_recall']), (1.0, 1.0))
        self.assertEqual(rumble['jaccard'], 1.0)
        with tempfile.TemporaryDirectory() as tmp:
            write_report(os.path.join(tmp, 'report.json'), report)
            write_curves(os.path.join(tmp, 'curves'), report)
            with open(os.path.join(tmp, 'report.json')) as f:
                loaded = json.load(f)
            self.assertNotIn('n_folds', loaded)
            self.assertTrue(os.path.exists(os.path.join(tmp, 'curves', 'roc_one-vs-rest_rumble.csv')))
        with self.assertRaises(ShapeError):
            detection_report([ (FrameLabels('r', classes, values[:10]), perfect) ])

    def test_segment_report(self):
        classes = [ 'rumble', 'roar' ]
        targets = [ SegmentLabels('r', 0.0, 1.0, classes, np.array([ 1, 0 ])),
                    SegmentLabels('r', 2.0, 3.0, classes, np.array([ 0, 1 ])),
                    SegmentLabels('r', 4.0, 5.0, classes, np.array([ 1, 1 ])) ]
        probs = [ [ 0.9, 0.2 ], [ 0.3, 0.7 ], [ 0.6, 0.4 ] ]
        classified = [ Segment('r', t.start, t.end, None, np.array(p), classes) for t, p in zip(targets, probs) ]
        report = segment_report(targets, classified)
        self.assertEqual(report.per_class['segments']['rumble']['auc'], 1.0)
        self.assertEqual(report.per_class['segments']['roar']['recall'], 0.5)
        self.assertEqual(report.macro['segments']['map'], report.macro['segments']['ap'])
        with self.assertRaises(ShapeError):
            segment_report(targets, classified[:2])


if __name__ == '__main__':
    suite = unittest.TestSuite()
    suite.addTest(unittest.TestLoader().loadTestsFromTestCase(TestMetrics))
    result = unittest.TextTestRunner(verbosity=2).run(suite)
    sys.exit(not result.wasSuccessful())
