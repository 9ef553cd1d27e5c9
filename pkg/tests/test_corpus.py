import sys
sys.path.append('./')

import os
import tempfile
import numpy as np
import soundfile
import unittest

from src.corpus import PEAK_LEVEL
from src.corpus import AnnotationEvent
from src.corpus import AnnotationTrack
from src.corpus import Recording
from src.corpus import load_wav
from src.corpus import preprocess
from src.corpus import read_annotations
from src.corpus import split_recording
from src.corpus import write_annotations
from src.errors import FormatError
from src.errors import UnsupportedCodecError
from src.errors import ValidationError


class TestCorpus(unittest.TestCase):
    """
    Test audio decoding, preprocessing, splitting and the annotation CSV.
    """

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def path(self, name):
        return os.path.join(self.tmp.name, name)

    def test_load_wav_silence_and_stereo(self):
        soundfile.write(self.path('silence.wav'), np.zeros(44100, dtype=np.int16), 44100, subtype='PCM_16')
        rec = load_wav(self.path('silence.wav'))
        self.assertEqual(rec.id, 'silence')
        self.assertEqual(rec.n_samples, 44100)
        self.assertEqual(rec.channels, 1)
        self.assertEqual(np.max(np.abs(rec.samples)), 0.0)
        stereo = np.stack([ np.linspace(-0.5, 0.5, 800), np.linspace(0.5, -0.5, 800) ], axis=1)
        soundfile.write(self.path('stereo.wav'), stereo, 8000, subtype='FLOAT')
        rec = load_wav(self.path('stereo.wav'))
        self.assertEqual(rec.samples.shape, (800, 2))
        self.assertEqual(rec.source_channels, 2)

    def test_load_wav_integer_scaling(self):
        square = np.where(np.arange(1600) % 40 < 20, 32767, -32767).astype(np.int16)
        soundfile.write(self.path('square.wav'), square, 16000, subtype='PCM_16')
        rec = load_wav(self.path('square.wav'))
        self.assertAlmostEqual(np.max(rec.samples), 32767.0/32768.0, places=12)
        soundfile.write(self.path('deep.wav'), 0.25*np.ones(100), 16000, subtype='PCM_24')
        self.assertAlmostEqual(np.max(load_wav(self.path('deep.wav')).samples), 0.25, places=6)

    def test_load_wav_errors(self):
        with open(self.path('junk.wav'), 'wb') as f:
            f.write(b'RIFF\x00\x00\x00\x00WAVEjunkjunk')
        with self.assertRaises(FormatError):
            load_wav(self.path('junk.wav'))
        soundfile.write(self.path('ulaw.wav'), np.zeros(100), 8000, subtype='ULAW')
        with self.assertRaises(UnsupportedCodecError):
            load_wav(self.path('ulaw.wav'))

    def test_preprocess_sine(self):
        t = np.arange(44100)/44100.0
        raw = Recording('sine', 0.3 + 0.5*np.sin(2*np.pi*440.0*t), 44100)
        rec = preprocess(raw)
        self.assertEqual(rec.sample_rate, 16000)
        self.assertLessEqual(abs(rec.n_samples - 16000), 1)
        self.assertLess(abs(np.mean(rec.samples)), 1.0e-6)
        self.assertAlmostEqual(np.max(np.abs(rec.samples)), PEAK_LEVEL, places=4)
        self.assertAlmostEqual(PEAK_LEVEL, 0.8913, places=4)
        # idempotent
        again = preprocess(rec)
        self.assertLess(np.max(np.abs(again.samples - rec.samples)), 1.0e-6)

    def test_preprocess_channels(self):
        rng = np.random.default_rng(0)
        mono = rng.normal(size=16000)
        a = preprocess(Recording('m', mono, 16000))
        b = preprocess(Recording('s', np.stack([ mono, mono ], axis=1), 16000, 2))
        self.assertLess(np.max(np.abs(a.samples - b.samples)), 1.0e-12)
        notes = np.stack([ mono, 10.0*rng.normal(size=16000) ], axis=1)
        c = preprocess(Recording('n', notes, 16000, 2), 'first-channel')
        self.assertLess(np.max(np.abs(a.samples - c.samples)), 1.0e-12)
        with self.assertRaises(ValidationError):
            preprocess(Recording('x', notes, 16000, 2), 'second-channel')

    def test_preprocess_all_zero(self):
        rec = preprocess(Recording('z', np.zeros(16000), 16000))
        self.assertIn('all-zero', rec.flags)
        self.assertEqual(np.max(np.abs(rec.samples)), 0.0)

    def test_split_recording_avoids_calls(self):
        fs = 100
        rec = Recording('long', np.arange(300*fs, dtype=float), fs)
        ann = AnnotationTrack('long', [ AnnotationEvent(10.0, 12.0, 'rumble'), AnnotationEvent(115.0, 125.0, 'roar'),
                                        AnnotationEvent(150.0, 155.0, 'rumble') ])
        pieces = split_recording(rec, ann, 120.0)
        self.assertGreater(len(pieces), 1)
        self.assertTrue(np.array_equal(np.concatenate([ p.samples for p, _ in pieces ]), rec.samples))
        self.assertEqual(sum(len(a.events) for _, a in pieces), 3)
        offset = 0.0
        for piece, piece_ann in pieces:
            self.assertLessEqual(piece.duration, 120.0 + 1.0e-9)
            for e in piece_ann.events:
                self.assertGreaterEqual(e.start, 0.0)
                self.assertLessEqual(e.end, piece.duration + 1.0e-9)
                self.assertIn(AnnotationEvent(e.start + offset, e.end + offset, e.call_type), ann.events)
            offset += piece.duration

    def test_split_recording_short_and_oversized(self):
        rec = Recording('short', np.zeros(500), 100)
        ann = AnnotationTrack('short', [ AnnotationEvent(1.0, 2.0, 'roar') ])
        pieces = split_recording(rec, ann, 60.0)
        self.assertEqual(len(pieces), 1)
        self.assertIs(pieces[0][0], rec)
        rec = Recording('huge', np.zeros(100*100), 100)
        ann = AnnotationTrack('huge', [ AnnotationEvent(0.0, 65.0, 'rumble') ])
        pieces = split_recording(rec, ann, 60.0)
        self.assertIn('oversized', pieces[0][0].flags)
        self.assertEqual(pieces[0][1].events[0].end, 65.0)

    def test_annotation_csv(self):
        tracks = [ AnnotationTrack('a', [ AnnotationEvent(0.5, 1.25, 'rumble', 'greeting-rumble'),
                                          AnnotationEvent(2.0, 3.0, 'roar-rumble', None, 2.4) ]),
                   AnnotationTrack('b', [ AnnotationEvent(1.0, 1.5, 'trumpet') ]) ]
        write_annotations(self.path('ann.csv'), tracks)
        loaded = read_annotations(self.path('ann.csv'))
        self.assertEqual(list(loaded.keys()), [ 'a', 'b' ])
        self.assertEqual(loaded['a'].events, tracks[0].events)
        self.assertEqual(loaded['b'].events, tracks[1].events)
        with open(self.path('bad.csv'), 'w') as f:
            f.write('recording_id,start_s,end_s\nx,0,1\n')
        with self.assertRaises(FormatError):
            read_annotations(self.path('bad.csv'))

    def test_annotation_validation(self):
        with self.assertRaises(ValidationError):
            AnnotationTrack('a', [ AnnotationEvent(2.0, 1.0, 'rumble') ]).validate()
        with self.assertRaises(ValidationError):
            AnnotationTrack('a', [ AnnotationEvent(1.0, 12.0, 'rumble') ]).validate(10.0)


if __name__ == '__main__':
    suite = unittest.TestSuite()
    suite.addTest(unittest.TestLoader().loadTestsFromTestCase(TestCorpus))
    result = unittest.TextTestRunner(verbosity=2).run(suite)
    sys.exit(not result.wasSuccessful())
