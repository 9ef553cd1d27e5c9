import json
import logging
import os
from dataclasses import asdict
from dataclasses import dataclass
from dataclasses import field

import numpy as np
from scipy.signal import butter
from scipy.signal import chirp
from scipy.signal import sosfilt
from scipy.signal.windows import tukey
from tqdm import tqdm

from src.corpus import AnnotationEvent
from src.corpus import AnnotationTrack
from src.corpus import Recording
from src.corpus import write_annotations
from src.corpus import write_wav
from src.errors import ConfigError
from src.helpers import derive_seed
from src.serialization import atomic_write

logger = logging.getLogger(__name__)


@dataclass
class CallClassSpec:
    """
    One synthetic call type.

    kind ... 'harmonic' (rumble-like stack), 'noisy' (roar-like broadband harmonics),
             'sweep' (trumpet-like tonal sweep) or 'glide' (cry-like falling harmonics)
    subcalls ... optional mapping subcall name -> fundamental frequency scale
    """
    name: str
    kind: str
    rate_per_min: float
    duration_range: tuple
    f0_range: tuple
    n_harmonics: int
    subcalls: dict = field(default_factory=dict)


def default_call_classes():
    return [
        CallClassSpec('rumble', 'harmonic', 2.0, (2.0, 5.0), (14.0, 30.0), 10,
                      {'contact-rumble': 1.0, 'greeting-rumble': 1.35}),
        CallClassSpec('roar', 'noisy', 1.0, (1.0, 2.5), (200.0, 350.0), 6),
        CallClassSpec('trumpet', 'sweep', 1.0, (0.6, 1.5), (500.0, 1400.0), 3),
        CallClassSpec('cry', 'glide', 1.0, (0.5, 1.5), (150.0, 280.0), 5),
    ]


@dataclass
class SynthSpec:
    seed: int = 7
    n_recordings: int = 20
    duration_range: tuple = (60.0, 60.0)
    classes: list = field(default_factory=default_call_classes)
    noise_event_rate: float = 3.0   # per minute, tonal chirps and broadband bursts
    snr_db: float = 10.0
    sample_rate: int = 16000

    def validate(self):
        if not self.classes:
            raise ConfigError('synthetic corpus needs at least one call class')
        if self.n_recordings < 1:
            raise ConfigError('n_recordings must be positive')
        lo, hi = self.duration_range
        if not (0.0 < lo <= hi):
            raise ConfigError('invalid duration range %r' % (self.duration_range,))
        for c in self.classes:
            if c.kind not in ('harmonic', 'noisy', 'sweep', 'glide'):
                raise ConfigError('unknown call kind %r for class %s' % (c.kind, c.name))
            if c.rate_per_min < 0:
                raise ConfigError('negative call rate for class %s' % c.name)
        return self

    def to_dict(self):
        d = asdict(self)
        d['duration_range'] = list(self.duration_range)
        return d

    @staticmethod
    def from_dict(d):
        d = dict(d)
        if 'classes' in d:
            d['classes'] = [ CallClassSpec(**{**c, 'duration_range': tuple(c['duration_range']),
                                              'f0_range': tuple(c['f0_range'])}) for c in d['classes'] ]
        if 'duration_range' in d:
            d['duration_range'] = tuple(d['duration_range'])
        return SynthSpec(**d)


def _background(rng, n, fs):
    """Low-passed noise with a gentle 1/f tilt."""
    white = rng.standard_normal(n)
    sos = butter(2, 2000.0, btype='lowpass', fs=fs, output='sos')
    coloured = sosfilt(sos, white) + 0.3*white
    return coloured / np.std(coloured)


def _harmonic_stack(f0, fs, n_harmonics, rolloff=0.8):
    phase = 2.0*np.pi*np.cumsum(f0) / float(fs)   # instantaneous frequency integrated
    return sum((rolloff**h) * np.sin((h+1)*phase) for h in range(n_harmonics))


def _call_waveform(rng, spec, n, fs, f0_scale=1.0):
    t = np.arange(n) / float(fs)
    lo, hi = spec.f0_range
    if spec.kind == 'harmonic':
        base = rng.uniform(lo, hi) * f0_scale
        f0 = base * (1.0 + 0.1*np.sin(2.0*np.pi*rng.uniform(0.2, 0.6)*t))
        wave = _harmonic_stack(f0, fs, spec.n_harmonics)
    elif spec.kind == 'noisy':
        base = rng.uniform(lo, hi) * f0_scale
        f0 = base * (1.0 + 0.05*rng.standard_normal(n).cumsum()/np.sqrt(n))
        sos = butter(4, [300.0, 4000.0], btype='bandpass', fs=fs, output='sos')
        noise = sosfilt(sos, rng.standard_normal(n))
        wave = _harmonic_stack(f0, fs, spec.n_harmonics, rolloff=0.9) + 2.0*noise/np.std(noise)
    elif spec.kind == 'sweep':
        f_start = rng.uniform(lo, 0.5*(lo+hi)) * f0_scale
        f_end = rng.uniform(0.5*(lo+hi), hi) * f0_scale
        wave = sum((0.7**h) * chirp(t, (h+1)*f_start, t[-1], (h+1)*f_end) for h in range(spec.n_harmonics))
    else:
        base = rng.uniform(lo, hi) * f0_scale
        f0 = base * np.linspace(1.2, 0.8, n)
        wave = _harmonic_stack(f0, fs, spec.n_harmonics, rolloff=0.7)
    return wave * tukey(n, 0.2)


def _noise_event(rng, n, fs):
    t = np.arange(n) / float(fs)
    if rng.uniform() < 0.5:
        # bird-like tonal chirp
        wave = chirp(t, rng.uniform(2000.0, 4000.0), t[-1], rng.uniform(4000.0, 7000.0))
    else:
        wave = rng.standard_normal(n)
    return wave * tukey(n, 0.5)


def synthesize_recording(spec, index):
    """Synthesize recording `index` of the corpus; depends only on (spec.seed, index)."""
    rng = np.random.default_rng(derive_seed(spec.seed, 'recording', index))
    fs = spec.sample_rate
    duration = rng.uniform(*spec.duration_range)
    n = int(round(duration*fs))
    noise = _background(rng, n, fs)
    signal = np.zeros(n)
    events = []
    call_power = 10.0**(spec.snr_db/10.0)   # background has unit power
    for c in spec.classes:
        count = rng.poisson(c.rate_per_min * duration / 60.0)
        for _ in range(count):
            d = rng.uniform(*c.duration_range)
            m = min(int(round(d*fs)), n)
            start = int(rng.integers(0, n - m + 1))
            subcall = None
            scale = 1.0
            if c.subcalls:
                names = sorted(c.subcalls)
                subcall = names[int(rng.integers(0, len(names)))]
                scale = c.subcalls[subcall]
            wave = _call_waveform(rng, c, m, fs, scale)
            wave = wave * np.sqrt(call_power / max(np.mean(wave**2), 1.0e-12))
            signal[start:start+m] += wave
            events.append(AnnotationEvent(start/float(fs), (start+m)/float(fs), c.name, subcall))
    n_noise = rng.poisson(spec.noise_event_rate * duration / 60.0)
    for _ in range(n_noise):
        m = min(int(round(rng.uniform(0.05, 0.4)*fs)), n)
        start = int(rng.integers(0, n - m + 1))
        signal[start:start+m] += rng.uniform(0.5, 2.0) * _noise_event(rng, m, fs)
    audio = noise + signal
    audio = 0.9 * audio / max(np.max(np.abs(audio)), 1.0e-12)
    rec_id = 'synth_%03d' % index
    events.sort(key=lambda e: (e.start, e.end, e.call_type))
    return Recording(rec_id, audio, fs, 1), AnnotationTrack(rec_id, events)


def synthesize_corpus(spec, show_progress=False):
    """Returns (recordings, annotation tracks); bit-identical for identical specs."""
    spec.validate()
    recordings, tracks = [], []
    for i in tqdm(range(spec.n_recordings), 'Synthesizing', disable=(not show_progress)):
        rec, ann = synthesize_recording(spec, i)
        recordings.append(rec)
        tracks.append(ann)
    logger.info('synthesized %d recordings, %d events', len(recordings), sum(len(t.events) for t in tracks))
    return recordings, tracks


def write_corpus(directory, spec, recordings, tracks):
    """Write <id>.wav files, annotations.csv and manifest.json."""
    os.makedirs(directory, exist_ok=True)
    for rec in recordings:
        write_wav(os.path.join(directory, rec.id + '.wav'), rec)
    write_annotations(os.path.join(directory, 'annotations.csv'), tracks)
    manifest = {
        'seed': spec.seed,
        'recordings': [ {'id': r.id, 'seed': derive_seed(spec.seed, 'recording', i), 'file': r.id + '.wav'}
                        for i, r in enumerate(recordings) ],
        'spec': spec.to_dict(),
    }
    with atomic_write(os.path.join(directory, 'manifest.json'), 'w') as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write('\n')
