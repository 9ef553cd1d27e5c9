import sys
sys.path.append('./')

import json
import os
import tempfile
import numpy as np
import unittest

from dataclasses import replace

from src.corpus import load_wav
from src.corpus import read_annotations
from src.errors import ConfigError
from src.labels import LabelGrid
from src.labels import rasterize
from src.synthesis import CallClassSpec
from src.synthesis import SynthSpec
from src.synthesis import default_call_classes
from src.synthesis import synthesize_corpus
from src.synthesis import synthesize_recording
from src.synthesis import write_corpus


class TestSynthesis(unittest.TestCase):
    """
    Test the deterministic synthetic corpus.
    """

    def test_same_seed_same_corpus(self):
        spec = SynthSpec(seed=7, n_recordings=2, duration_range=(10.0, 10.0))
        recs_a, tracks_a = synthesize_corpus(spec)
        recs_b, tracks_b = synthesize_corpus(spec)
        for a, b in zip(recs_a, recs_b):
            self.assertEqual(a.id, b.id)
            self.assertEqual(a.samples.tobytes(), b.samples.tobytes())
        self.assertEqual([ t.events for t in tracks_a ], [ t.events for t in tracks_b ])
        other, _ = synthesize_recording(replace(spec, seed=8), 0)
        self.assertFalse(np.array_equal(other.samples, recs_a[0].samples))

    def test_recording_shape(self):
        spec = SynthSpec(seed=3, n_recordings=1, duration_range=(20.0, 20.0))
        rec, ann = synthesize_recording(spec, 0)
        self.assertEqual(rec.id, 'synth_000')
        self.assertEqual(rec.sample_rate, 16000)
        self.assertEqual(rec.n_samples, 20*16000)
        self.assertLessEqual(np.max(np.abs(rec.samples)), 0.9 + 1.0e-12)
        ann.validate(rec.duration)
        names = { c.name for c in default_call_classes() }
        for e in ann.events:
            self.assertIn(e.call_type, names)
            if e.call_type == 'rumble':
                self.assertIn(e.subcall_type, ('contact-rumble', 'greeting-rumble'))

    def test_high_snr_events_dominate(self):
        rumble = CallClassSpec('rumble', 'harmonic', 12.0, (1.0, 2.0), (14.0, 30.0), 10)
        spec = SynthSpec(seed=11, n_recordings=1, duration_range=(30.0, 30.0), classes=[rumble],
                         noise_event_rate=0.0, snr_db=40.0)
        rec, ann = synthesize_recording(spec, 0)
        self.assertGreater(len(ann.events), 0)
        inside = np.zeros(rec.n_samples, dtype=bool)
        for e in ann.events:
            inside[int(round(e.start*rec.sample_rate)):int(round(e.end*rec.sample_rate))] = True
        ratio = np.mean(rec.samples[inside]**2) / np.mean(rec.samples[~inside]**2)
        self.assertGreaterEqual(ratio, 100.0)

    def test_zero_rates_give_pure_noise(self):
        classes = [ replace(c, rate_per_min=0.0) for c in default_call_classes() ]
        spec = SynthSpec(seed=5, n_recordings=1, duration_range=(5.0, 5.0), classes=classes, noise_event_rate=0.0)
        rec, ann = synthesize_recording(spec, 0)
        self.assertEqual(ann.events, [])
        self.assertGreater(np.std(rec.samples), 0.0)

    def test_every_event_marks_a_frame(self):
        spec = SynthSpec(seed=7, n_recordings=3, duration_range=(30.0, 30.0))
        recs, tracks = synthesize_corpus(spec)
        for rec, ann in zip(recs, tracks):
            classes = sorted({ e.call_type for e in ann.events })
            labels = rasterize(ann, rec.duration, classes, LabelGrid())
            for e in ann.events:
                first, last = int(e.start/0.1), min(int(e.end/0.1), labels.n_frames - 1)
                self.assertTrue(np.any(labels.column(e.call_type)[first:last+1]))

    def test_invalid_spec(self):
        with self.assertRaises(ConfigError):
            SynthSpec(classes=[]).validate()
        with self.assertRaises(ConfigError):
            SynthSpec(duration_range=(5.0, 1.0)).validate()
        spec = SynthSpec(seed=1)
        self.assertEqual(SynthSpec.from_dict(json.loads(json.dumps(spec.to_dict()))), spec)

    def test_write_corpus(self):
        spec = SynthSpec(seed=2, n_recordings=2, duration_range=(3.0, 3.0))
        recs, tracks = synthesize_corpus(spec)
        with tempfile.TemporaryDirectory() as tmp:
            write_corpus(tmp, spec, recs, tracks)
            with open(os.path.join(tmp, 'manifest.json')) as f:
                manifest = json.load(f)
            self.assertEqual([ r['id'] for r in manifest['recordings'] ], [ 'synth_000', 'synth_001' ])
            loaded = load_wav(os.path.join(tmp, 'synth_001.wav'))
            self.assertLess(np.max(np.abs(loaded.samples - recs[1].samples)), 1.0e-7)
            annotations = read_annotations(os.path.join(tmp, 'annotations.csv'))
            for t in tracks:
                if t.events:
                    self.assertEqual(len(annotations[t.recording_id].events), len(t.events))


if __name__ == '__main__':
    suite = unittest.TestSuite()
    suite.addTest(unittest.TestLoader().loadTestsFromTestCase(TestSynthesis))
    result = unittest.TextTestRunner(verbosity=2).run(suite)
    sys.exit(not result.wasSuccessful())
