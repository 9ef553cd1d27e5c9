import sys
sys.path.append('./')

import os
import tempfile
import numpy as np
import unittest

from src.errors import FormatError
from src.errors import MissingInputError
from src.serialization import atomic_write
from src.serialization import read_feature_cache
from src.serialization import read_model_container
from src.serialization import write_feature_cache
from src.serialization import write_model_container


class TestSerialization(unittest.TestCase):
    """
    Test the EMD1 and EFM1 containers and atomic writes.
    """

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def path(self, name):
        return os.path.join(self.tmp.name, name)

    def test_model_container_is_bit_exact(self):
        rng = np.random.default_rng(3)
        blocks = { 'weights': rng.normal(size=(4, 3)), 'bias': rng.normal(size=3), 'scalar': np.array(2.5) }
        hyperparams = { 'l2': 1.0e-3, 'classes': [ 'rumble', 'roar' ] }
        write_model_container(self.path('m.emd'), 'logreg', hyperparams, blocks)
        kind, h, b = read_model_container(self.path('m.emd'))
        self.assertEqual(kind, 'logreg')
        self.assertEqual(h, hyperparams)
        self.assertEqual(list(b.keys()), [ 'weights', 'bias', 'scalar' ])
        for name in blocks:
            self.assertEqual(b[name].shape, np.shape(blocks[name]))
            self.assertTrue(np.array_equal(b[name], blocks[name]))
        # writing the loaded container again gives the same bytes
        write_model_container(self.path('n.emd'), kind, h, b)
        with open(self.path('m.emd'), 'rb') as f1, open(self.path('n.emd'), 'rb') as f2:
            self.assertEqual(f1.read(), f2.read())

    def test_model_container_rejects_damage(self):
        write_model_container(self.path('m.emd'), 'svm', {}, { 'w': np.ones(5) })
        with open(self.path('m.emd'), 'rb') as f:
            data = f.read()
        with open(self.path('short.emd'), 'wb') as f:
            f.write(data[:-3])
        with self.assertRaises(FormatError):
            read_model_container(self.path('short.emd'))
        with open(self.path('magic.emd'), 'wb') as f:
            f.write(b'XMD1' + data[4:])
        with self.assertRaises(FormatError):
            read_model_container(self.path('magic.emd'))
        with self.assertRaises(MissingInputError):
            read_model_container(self.path('nothing.emd'))

    def test_feature_cache(self):
        values = np.random.default_rng(0).normal(size=(7, 5)).astype(np.float32)
        write_feature_cache(self.path('f.efm'), values, 0xDEADBEEF)
        loaded, config_hash = read_feature_cache(self.path('f.efm'))
        self.assertEqual(config_hash, 0xDEADBEEF)
        self.assertTrue(np.array_equal(loaded, values))
        self.assertEqual(os.path.getsize(self.path('f.efm')), 16 + 4*7*5)
        with open(self.path('f.efm'), 'ab') as f:
            f.write(b'\0\0\0\0')
        with self.assertRaises(FormatError):
            read_feature_cache(self.path('f.efm'))

    def test_atomic_write_leaves_no_partial_file(self):
        target = self.path('out.txt')
        with self.assertRaises(RuntimeError):
            with atomic_write(target, 'w') as handle:
                handle.write('partial')
                raise RuntimeError('interrupted')
        self.assertFalse(os.path.exists(target))
        self.assertEqual([ n for n in os.listdir(self.tmp.name) if n.startswith('.tmp-') ], [])
        with atomic_write(target, 'w') as handle:
            handle.write('complete\n')
        with open(target) as f:
            self.assertEqual(f.read(), 'complete\n')


if __name__ == '__main__':
    suite = unittest.TestSuite()
    suite.addTest(unittest.TestLoader().loadTestsFromTestCase(TestSerialization))
    result = unittest.TextTestRunner(verbosity=2).run(suite)
    sys.exit(not result.wasSuccessful())
