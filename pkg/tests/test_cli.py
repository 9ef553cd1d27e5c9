import sys
sys.path.append('./')

import io
import json
import os
import tempfile
import numpy as np
import pandas
import unittest

from contextlib import redirect_stderr

from src.cli import load_dataset
from src.cli import main
from src.config import load_config
from src.tracks import FramewiseProbabilities
from src.tracks import read_segments
from src.tracks import read_tracks
from src.tracks import write_tracks

SMALL = [ '--set', 'synth.n_recordings=3', '--set', 'synth.duration=20' ]


def run(argv):
    err = io.StringIO()
    with redirect_stderr(err):
        code = main(argv)
    return code, err.getvalue()


def read_bytes(path):
    with open(path, 'rb') as f:
        return f.read()


class TestCli(unittest.TestCase):
    """
    Test the command line surface end to end on small synthetic corpora.
    """

    def test_synth_is_deterministic(self):
        with tempfile.TemporaryDirectory() as tmp:
            a, b = os.path.join(tmp, 'a'), os.path.join(tmp, 'b')
            self.assertEqual(run([ 'synth', '--seed', '5', '--out', a ] + SMALL)[0], 0)
            self.assertEqual(run([ 'synth', '--seed', '5', '--out', b ] + SMALL)[0], 0)
            names = sorted(n for n in os.listdir(a) if n != 'run.log')
            self.assertEqual(names, sorted(n for n in os.listdir(b) if n != 'run.log'))
            self.assertIn('annotations.csv', names)
            self.assertEqual(len([ n for n in names if n.endswith('.wav') ]), 3)
            for name in names:
                self.assertEqual(read_bytes(os.path.join(a, name)), read_bytes(os.path.join(b, name)))
            with open(os.path.join(a, 'manifest.json')) as f:
                self.assertEqual(json.load(f)['seed'], 5)

    def test_exit_codes(self):
        with tempfile.TemporaryDirectory() as tmp:
            code, err = run([ 'train', '--set', 'cv.folds=1', '--out', tmp ])
            self.assertEqual(code, 2)
            self.assertTrue(err.startswith('error: CONFIG: '))
            self.assertEqual(len(err.strip().splitlines()), 1)
            code, err = run([ 'detect', '--out', tmp ])
            self.assertEqual(code, 2)
            self.assertIn('MISSING_INPUT', err)
            code, err = run([ 'evaluate', '--tracks', os.path.join(tmp, 'absent.csv'), '--out', tmp ] + SMALL)
            self.assertEqual(code, 2)
            code, _ = run([ 'schema', '--out', tmp ])
            self.assertEqual(code, 0)
            self.assertTrue(os.path.isfile(os.path.join(tmp, 'config.schema.json')))

    def test_oracle_tracks_evaluate_perfectly(self):
        with tempfile.TemporaryDirectory() as tmp:
            overrides = [ 'synth.seed=5', 'synth.n_recordings=4', 'synth.duration=30' ]
            dataset = load_dataset(load_config(overrides=overrides))
            oracle = [ FramewiseProbabilities(i, dataset[i].labels.classes, dataset[i].labels.values)
                       for i in dataset.ids ]
            path = os.path.join(tmp, 'oracle.csv')
            write_tracks(path, oracle)
            argv = [ 'evaluate', '--tracks', path, '--out', tmp ]
            for o in overrides:
                argv += [ '--set', o ]
            self.assertEqual(run(argv)[0], 0)
            with open(os.path.join(tmp, 'report.json')) as f:
                report = json.load(f)
            self.assertEqual(report['macro']['one-vs-rest']['auc'], 1.0)
            self.assertEqual(report['macro']['one-vs-rest']['jaccard'], 1.0)
            self.assertEqual(report['per_class']['one-vs-rest']['call']['boundary_recall'], 1.0)
            self.assertTrue(os.path.isfile(os.path.join(tmp, 'config.json')))
            self.assertTrue(os.path.isfile(os.path.join(tmp, 'run.log')))

    def test_train_detect_endpoint(self):
        with tempfile.TemporaryDirectory() as tmp:
            settings = SMALL + [ '--set', 'model.params.epochs=5', '--seed', '9' ]
            self.assertEqual(run([ 'train', '--out', tmp ] + settings)[0], 0)
            model = os.path.join(tmp, 'model.emd')
            self.assertTrue(os.path.isfile(model))
            settings += [ '--set', 'model.path=%s' % model ]
            self.assertEqual(run([ 'detect', '--out', tmp ] + settings)[0], 0)
            tracks = read_tracks(os.path.join(tmp, 'tracks.csv'))
            self.assertEqual(len(tracks), 3)
            self.assertEqual(run([ 'endpoint', '--out', tmp ] + settings)[0], 0)
            segments = read_segments(os.path.join(tmp, 'segments.csv'))
            self.assertTrue(all(s.end > s.start for s in segments))
            self.assertEqual(run([ 'evaluate', '--tracks', os.path.join(tmp, 'tracks.csv'), '--out', tmp ] + settings)[0], 0)
            self.assertTrue(os.path.isdir(os.path.join(tmp, 'curves')))

    def test_attention_export(self):
        with tempfile.TemporaryDirectory() as tmp:
            code, err = run([ 'attention', '--out', tmp ])
            self.assertEqual(code, 2)
            self.assertIn('MISSING_INPUT', err)
            settings = SMALL + [ '--set', 'model.family=ast-lab', '--set', 'model.params.embed_dim=32',
                                 '--set', 'model.params.n_layers=1', '--set', 'model.params.n_heads=2',
                                 '--set', 'model.params.max_epochs=1', '--seed', '3' ]
            self.assertEqual(run([ 'train', '--out', tmp ] + settings)[0], 0)
            settings += [ '--set', 'model.path=%s' % os.path.join(tmp, 'model.emd') ]
            self.assertEqual(run([ 'attention', '--at', '10.0', '--out', tmp ] + settings)[0], 0)
            directory = os.path.join(tmp, 'attention')
            names = sorted(os.listdir(directory))
            self.assertEqual(len(names), 3)
            table = pandas.read_csv(os.path.join(directory, names[0]))
        # one layer, two heads, 8 x 16 patches and the classification token
        self.assertEqual(sorted(table['head'].unique()), [ 0, 1 ])
        self.assertEqual(len(table), 2*129*129)
        rows = table.groupby([ 'layer', 'head', 'query' ])['weight'].sum()
        self.assertLess(np.max(np.abs(rows.values - 1.0)), 1.0e-5)


if __name__ == '__main__':
    suite = unittest.TestSuite()
    suite.addTest(unittest.TestLoader().loadTestsFromTestCase(TestCli))
    result = unittest.TextTestRunner(verbosity=2).run(suite)
    sys.exit(not result.wasSuccessful())
