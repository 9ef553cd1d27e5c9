import sys
sys.path.append('./')

import os
import numpy as np
import unittest

from src.errors import ConfigError
from src.errors import NonFiniteError
from src.errors import TopologyError
from src.helpers import bce_with_logits
from src.helpers import binary_cross_entropy
from src.helpers import check_finite
from src.helpers import derive_seed
from src.helpers import hinge_loss
from src.helpers import log_odds
from src.helpers import max_workers
from src.helpers import sigmoid


class TestHelpers(unittest.TestCase):
    """
    Test numerical helpers, seed derivation and the error taxonomy.
    """

    def test_sigmoid_and_log_odds(self):
        p = np.array([ 0.01, 0.25, 0.5, 0.75, 0.99 ])
        self.assertLess(np.max(np.abs(sigmoid(log_odds(p)) - p)), 1.0e-12)
        self.assertEqual(sigmoid(0.0), 0.5)
        # no overflow warnings in the tails
        self.assertEqual(sigmoid(-1000.0), 0.0)
        self.assertEqual(sigmoid(1000.0), 1.0)

    def test_cross_entropy_from_logits_matches_probabilities(self):
        rng = np.random.default_rng(1)
        logits = rng.normal(0.0, 3.0, size=(50, 3))
        targets = (rng.uniform(size=(50, 3)) < 0.4).astype(float)
        a = bce_with_logits(logits, targets)
        b = binary_cross_entropy(sigmoid(logits), targets)
        self.assertEqual(a.shape, (3,))
        self.assertLess(np.max(np.abs(a - b)), 1.0e-9)

    def test_hinge_loss(self):
        scores = np.array([[ 2.0 ], [ 0.5 ], [ -0.5 ], [ -2.0 ]])
        targets = np.array([[ 1.0 ], [ 1.0 ], [ 0.0 ], [ 1.0 ]])
        # losses 0, 0.5, 0.5, 3
        self.assertAlmostEqual(hinge_loss(scores, targets)[0], 1.0, places=12)

    def test_derive_seed(self):
        self.assertEqual(derive_seed(7, 'recording', 3), derive_seed(7, 'recording', 3))
        self.assertNotEqual(derive_seed(7, 'recording', 3), derive_seed(7, 'recording', 4))
        self.assertNotEqual(derive_seed(7, 'recording', 3), derive_seed(8, 'recording', 3))
        self.assertTrue(0 <= derive_seed(123, 'x') < 2**32)

    def test_max_workers(self):
        old = os.environ.get('TRUNKLINE_THREADS')
        try:
            os.environ['TRUNKLINE_THREADS'] = '3'
            self.assertEqual(max_workers(), 3)
            os.environ['TRUNKLINE_THREADS'] = 'lots'
            self.assertGreaterEqual(max_workers(), 1)
        finally:
            if old is None:
                os.environ.pop('TRUNKLINE_THREADS', None)
            else:
                os.environ['TRUNKLINE_THREADS'] = old

    def test_check_finite(self):
        x = np.ones(3)
        self.assertIs(check_finite(x), x)
        with self.assertRaises(NonFiniteError):
            check_finite(np.array([ 1.0, np.nan ]))

    def test_error_codes(self):
        e = ConfigError('bad\nvalue')
        self.assertEqual(e.exit_code, 2)
        self.assertEqual(e.one_line(), 'CONFIG: bad value')
        self.assertEqual(NonFiniteError('nan').exit_code, 3)
        t = TopologyError([ 'head.weight: missing', 'blocks.0.w: expected (2,), found (3,)' ])
        self.assertEqual(len(t.mismatches), 2)
        self.assertEqual(t.code, 'TOPOLOGY')


if __name__ == '__main__':
    suite = unittest.TestSuite()
    suite.addTest(unittest.TestLoader().loadTestsFromTestCase(TestHelpers))
    result = unittest.TextTestRunner(verbosity=2).run(suite)
    sys.exit(not result.wasSuccessful())
