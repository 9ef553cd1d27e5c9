"""
Audio ingestion, preprocessing and annotation handling.

Annotation CSV: UTF-8, header ``recording_id,start_s,end_s,call_type,subcall_type``
with an optional trailing ``transition_s`` column for composite calls.
"""

import logging
import os
from dataclasses import dataclass
from dataclasses import field
from dataclasses import replace
from math import gcd

import numpy as np
import pandas
import soundfile
from scipy.signal import firwin
from scipy.signal import resample_poly

from src.errors import FormatError
from src.errors import MissingInputError
from src.errors import UnsupportedCodecError
from src.errors import ValidationError
from src.serialization import atomic_write

logger = logging.getLogger(__name__)

TARGET_RATE    = 16000
PEAK_LEVEL     = 10.0**(-1.0/20.0)   # -1 dBFS
TAPS_PER_PHASE = 64
KAISER_BETA    = 8.0

SUPPORTED_SUBTYPES = ('PCM_16', 'PCM_24', 'FLOAT')
ANNOTATION_COLUMNS = ['recording_id', 'start_s', 'end_s', 'call_type', 'subcall_type']


@dataclass
class Recording:
    """samples is 1-D for mono signals and (n_samples, n_channels) otherwise."""
    id: str
    samples: np.ndarray
    sample_rate: int
    source_channels: int = 1
    flags: list = field(default_factory=list)

    @property
    def channels(self):
        return 1 if self.samples.ndim == 1 else self.samples.shape[1]

    @property
    def n_samples(self):
        return self.samples.shape[0]

    @property
    def duration(self):
        return self.n_samples / float(self.sample_rate)


@dataclass(frozen=True)
class AnnotationEvent:
    start: float
    end: float
    call_type: str
    subcall_type: str = None
    transition: float = None   # composite calls only

    @property
    def duration(self):
        return self.end - self.start


@dataclass
class AnnotationTrack:
    recording_id: str
    events: list = field(default_factory=list)

    def validate(self, duration=None):
        for e in self.events:
            if not (0.0 <= e.start < e.end):
                raise ValidationError('%s: invalid event interval [%g, %g]' % (self.recording_id, e.start, e.end))
            if duration is not None and e.end > duration + 1.0e-6:
                raise ValidationError('%s: event [%g, %g] exceeds duration %g' % (self.recording_id, e.start, e.end, duration))
        return self

    def sorted(self):
        return AnnotationTrack(self.recording_id, sorted(self.events, key=lambda e: (e.start, e.end, e.call_type)))


def load_wav(path, recording_id=None):
    """Decode a PCM16, PCM24 or float32 WAV file into real samples in [-1, 1]."""
    if not os.path.isfile(path):
        raise MissingInputError('audio file not found: %s' % path)
    try:
        info = soundfile.info(path)
    except (RuntimeError, ValueError) as err:
        raise FormatError('%s: malformed WAV header (%s)' % (path, err))
    if info.format != 'WAV':
        raise FormatError('%s: not a RIFF/WAV file (%s)' % (path, info.format))
    if info.subtype not in SUPPORTED_SUBTYPES:
        raise UnsupportedCodecError('%s: unsupported encoding %s' % (path, info.subtype))
    try:
        samples, rate = soundfile.read(path, dtype='float64', always_2d=True)
    except (RuntimeError, ValueError) as err:
        raise FormatError('%s: cannot decode audio (%s)' % (path, err))
    if samples.shape[1] == 1:
        samples = samples[:, 0]
    if recording_id is None:
        recording_id = os.path.splitext(os.path.basename(path))[0]
    return Recording(recording_id, samples, int(rate), info.channels)


def write_wav(path, recording, subtype='FLOAT'):
    with atomic_write(path, 'wb') as handle:
        soundfile.write(handle, recording.samples, recording.sample_rate, subtype=subtype, format='WAV')


def resample(samples, rate_in, rate_out=TARGET_RATE):
    """Windowed-sinc polyphase resampling, 64 taps per phase, Kaiser beta 8."""
    if rate_in == rate_out:
        return samples.copy()
    g = gcd(int(rate_in), int(rate_out))
    up, down = int(rate_out)//g, int(rate_in)//g
    max_rate = max(up, down)
    taps = firwin(TAPS_PER_PHASE*up + 1, 1.0/max_rate, window=('kaiser', KAISER_BETA))
    return resample_poly(samples, up, down, window=taps)


def preprocess(raw, channel_policy='average'):
    """
    Mono mix-down, resampling to 16 kHz, mean removal and peak scaling to -1 dBFS.

    channel_policy ... 'average' (stereo field recordings) or 'first-channel'
                       (second channel carries spoken field notes)
    """
    if raw.samples.ndim == 1:
        mono = raw.samples.astype(np.float64)
    elif channel_policy == 'average':
        mono = np.mean(raw.samples, axis=1)
    elif channel_policy == 'first-channel':
        mono = raw.samples[:, 0].astype(np.float64)
    else:
        raise ValidationError('unknown channel policy %r' % channel_policy)
    mono = resample(mono, raw.sample_rate)
    mono = mono - np.mean(mono)   # before peak scaling, otherwise the peak drifts
    flags = list(raw.flags)
    peak = np.max(np.abs(mono)) if mono.size > 0 else 0.0
    if peak <= 1.0e-12:
        logger.warning('%s: all-zero signal, peak normalisation skipped', raw.id)
        flags.append('all-zero')
    else:
        mono = mono * (PEAK_LEVEL / peak)
    return Recording(raw.id, mono, TARGET_RATE, raw.source_channels, flags)


def _merged_intervals(events):
    intervals = sorted((e.start, e.end) for e in events)
    merged = []
    for a, b in intervals:
        if merged and a <= merged[-1][1]:   # abutting calls stay together
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return merged


def split_recording(rec, ann, max_len=60.0):
    """
    Cut a long recording into pieces of at most max_len seconds without splitting any call.

    Cut points fall outside annotated intervals. A call longer than max_len
    yields one oversized piece (flagged) instead of being split.
    """
    if rec.duration <= max_len:
        return [(rec, ann)]
    fs = rec.sample_rate
    merged = _merged_intervals(ann.events)
    cuts = [0]
    cursor = 0.0
    while rec.duration - cursor > max_len:
        cut = int(round((cursor + max_len)*fs))
        blocking = [ iv for iv in merged if iv[0] < cut/float(fs) < iv[1] ]
        if blocking:
            cut = int(np.floor(blocking[0][0]*fs))
            if cut <= cuts[-1]:
                # call starting at the cursor is longer than max_len
                cut = int(np.ceil(blocking[0][1]*fs))
        if cut >= rec.n_samples:
            break
        cuts.append(cut)
        cursor = cut / float(fs)
    cuts.append(rec.n_samples)
    pieces = []
    for k in range(len(cuts)-1):
        a, b = cuts[k], cuts[k+1]
        t0, t1 = a/float(fs), b/float(fs)
        flags = list(rec.flags)
        if (b - a)/float(fs) > max_len + 1.0e-9:
            logger.warning('%s: piece %d is %.2f s long, a call exceeds max_len %.2f s', rec.id, k, (b-a)/float(fs), max_len)
            flags.append('oversized')
        piece_id = '%s_%03d' % (rec.id, k)
        piece = Recording(piece_id, rec.samples[a:b], fs, rec.source_channels, flags)
        events = [ replace(e, start=e.start-t0, end=e.end-t0,
                           transition=None if e.transition is None else e.transition-t0)
                   for e in ann.events if e.start >= t0 - 1.0e-9 and e.end <= t1 + 1.0e-9 ]
        pieces.append((piece, AnnotationTrack(piece_id, events)))
    return pieces


def read_annotations(path):
    """Read an annotation CSV into a dict recording_id -> AnnotationTrack (ids in file order)."""
    if not os.path.isfile(path):
        raise MissingInputError('annotation file not found: %s' % path)
    try:
        table = pandas.read_csv(path, dtype={'recording_id': str, 'call_type': str, 'subcall_type': str},
                                keep_default_na=False, encoding='utf-8')
    except (ValueError, pandas.errors.ParserError) as err:
        raise FormatError('%s: cannot parse annotation CSV (%s)' % (path, err))
    missing = [ c for c in ANNOTATION_COLUMNS if c not in table.columns ]
    if missing:
        raise FormatError('%s: missing column(s) %s' % (path, ', '.join(missing)))
    tracks = {}
    for row in table.itertuples(index=False):
        transition = getattr(row, 'transition_s', '')
        transition = None if transition in ('', None) or pandas.isna(transition) else float(transition)
        event = AnnotationEvent(float(row.start_s), float(row.end_s), row.call_type,
                                row.subcall_type if row.subcall_type != '' else None, transition)
        tracks.setdefault(row.recording_id, AnnotationTrack(row.recording_id)).events.append(event)
    return tracks


def annotations_table(tracks):
    rows = []
    with_transition = any(e.transition is not None for t in tracks for e in t.events)
    for track in tracks:
        for e in track.events:
            row = [track.recording_id, e.start, e.end, e.call_type, e.subcall_type or '']
            if with_transition:
                row.append('' if e.transition is None else e.transition)
            rows.append(row)
    columns = ANNOTATION_COLUMNS + (['transition_s'] if with_transition else [])
    return pandas.DataFrame(rows, columns=columns)


def write_annotations(path, tracks):
    with atomic_write(path, 'w') as handle:
        annotations_table(tracks).to_csv(handle, index=False, float_format='%.6f', lineterminator='\n')
