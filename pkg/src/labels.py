import logging
from dataclasses import dataclass
from dataclasses import field
from dataclasses import replace

import numpy as np
import pandas

from src.corpus import AnnotationTrack
from src.errors import ConfigError
from src.errors import UnmappedLabelError
from src.serialization import atomic_write

logger = logging.getLogger(__name__)

NO_CALL = 'no-call'
CALL = 'call'
TOLERANCE = 1.0e-9


def default_mapping():
    return {
        'rumble': 'rumble', 'roar': 'roar', 'trumpet': 'trumpet', 'cry': 'cry',
        'squeak': 'squeak', 'bark': 'bark', 'snort': 'snort', 'musth-chirp': 'musth-chirp',
        'growl': 'rumble',   # acoustically the same call in the forest corpus
    }


def default_composites():
    return {
        'roar-rumble': ('roar', 'rumble'),
        'rumble-roar': ('rumble', 'roar'),
        'cry-rumble': ('cry', 'rumble'),
        'trumpet-rumble': ('trumpet', 'rumble'),
    }


@dataclass
class Taxonomy:
    """
    Unified call classes; `classes` starts with the explicit no-call class.

    mapping ... source label -> unified label
    composites ... composite source label -> (first, second) unified labels
    subcalls ... known subcall labels; empty accepts any subcall
    """
    call_classes: list = field(default_factory=lambda: ['rumble', 'roar', 'trumpet', 'cry'])
    mapping: dict = field(default_factory=default_mapping)
    composites: dict = field(default_factory=default_composites)
    subcalls: list = field(default_factory=list)

    @property
    def classes(self):
        return [NO_CALL] + list(self.call_classes)

    def without(self, excluded):
        return replace(self, call_classes=[ c for c in self.call_classes if c not in excluded ])


@dataclass(frozen=True)
class LabelGrid:
    """100 ms labels every 100 ms by default; window=0.2 gives 200 ms windows on the same hop."""
    stride: float = 0.1
    window: float = 0.1
    min_coverage: float = 0.2   # fraction of the window

    def n_frames(self, duration):
        return int(np.floor(duration/self.stride + TOLERANCE))

    def frame_starts(self, n):
        return np.round(np.arange(n)*self.stride, 9)

    def windows(self, n):
        centres = np.arange(n)*self.stride + 0.5*self.stride
        return centres - 0.5*self.window, centres + 0.5*self.window


@dataclass
class FrameLabels:
    recording_id: str
    classes: list
    values: np.ndarray   # (T, C) of {0, 1}
    grid: LabelGrid = LabelGrid()

    @property
    def n_frames(self):
        return self.values.shape[0]

    @property
    def times(self):
        return self.grid.frame_starts(self.n_frames)

    def column(self, name):
        return self.values[:, self.classes.index(name)]


@dataclass
class SegmentLabels:
    recording_id: str
    start: float
    end: float
    classes: list
    values: np.ndarray   # (C,) of {0, 1}


def map_taxonomy(track, taxonomy=None):
    """
    Translate source labels into the unified taxonomy.

    Composite calls become two abutting events split at the annotated
    transition, or at the midpoint when none is given. A subcall stays on the
    part whose type it refines, otherwise on the second part.
    """
    taxonomy = Taxonomy() if taxonomy is None else taxonomy
    unmapped = [ e.call_type for e in track.events
                 if e.call_type not in taxonomy.mapping and e.call_type not in taxonomy.composites ]
    if taxonomy.subcalls:
        unmapped += [ e.subcall_type for e in track.events
                      if e.subcall_type is not None and e.subcall_type not in taxonomy.subcalls ]
    if unmapped:
        raise UnmappedLabelError(unmapped)
    events = []
    for e in track.events:
        if e.call_type in taxonomy.mapping:
            events.append(replace(e, call_type=taxonomy.mapping[e.call_type], transition=None))
            continue
        first, second = taxonomy.composites[e.call_type]
        cut = e.transition
        if cut is None or not (e.start < cut < e.end):
            cut = 0.5*(e.start + e.end)
            logger.warning('%s: composite %s [%g, %g] has no usable transition, split at midpoint %g',
                           track.recording_id, e.call_type, e.start, e.end, cut)
        sub_first = e.subcall_type if e.subcall_type is not None and e.subcall_type.endswith(first) else None
        sub_second = e.subcall_type if sub_first is None else None
        events.append(replace(e, end=cut, call_type=first, subcall_type=sub_first, transition=None))
        events.append(replace(e, start=cut, call_type=second, subcall_type=sub_second, transition=None))
    return AnnotationTrack(track.recording_id, events).sorted()


def as_binary(track):
    return AnnotationTrack(track.recording_id, [ replace(e, call_type=CALL) for e in track.events ])


def as_subcalls(track):
    """Events relabelled by their subcall; events without one are dropped."""
    return AnnotationTrack(track.recording_id,
                           [ replace(e, call_type=e.subcall_type) for e in track.events if e.subcall_type is not None ])


def task_view(track, task):
    if task == 'detect-binary':
        return as_binary(track)
    if task == 'classify-subcall':
        return as_subcalls(track)
    if task in ('detect-multilabel', 'classify-call'):
        return track
    raise ConfigError('unknown task %r' % task)


def _union(intervals):
    merged = []
    for a, b in sorted(intervals):
        if merged and a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return merged


def class_coverage(track, call_type, lo, hi):
    """Seconds of [lo_k, hi_k) covered by events of `call_type`, per window k."""
    covered = np.zeros(len(lo))
    for a, b in _union([ (e.start, e.end) for e in track.events if e.call_type == call_type ]):
        covered += np.clip(np.minimum(b, hi) - np.maximum(a, lo), 0.0, None)
    return covered


def rasterize(track, duration, classes, grid=LabelGrid()):
    """
    Frame labels for `classes`; a 'no-call' column is 1 exactly where no
    other column is positive.
    """
    n = grid.n_frames(duration)
    lo, hi = grid.windows(n)
    threshold = grid.min_coverage*grid.window - TOLERANCE
    values = np.zeros((n, len(classes)), dtype=np.int8)
    calls = [ j for j, c in enumerate(classes) if c != NO_CALL ]
    for j in calls:
        values[:, j] = class_coverage(track, classes[j], lo, hi) >= threshold
    if NO_CALL in classes:
        any_call = np.any(values[:, calls], axis=1) if calls else np.zeros(n, dtype=bool)
        values[:, classes.index(NO_CALL)] = ~any_call
    return FrameLabels(track.recording_id, list(classes), values, grid)


def segment_targets(track, start, end, classes, source_event=None, min_fraction=0.5):
    """
    Multi-label target of the segment [start, end).

    The class of source_event is always present; any event overlapping at least
    min_fraction of the segment adds its class.
    """
    values = np.zeros(len(classes), dtype=np.int8)
    length = end - start
    for e in track.events:
        if e.call_type not in classes:
            continue
        overlap = max(0.0, min(e.end, end) - max(e.start, start))
        if length > 0.0 and overlap >= min_fraction*length - TOLERANCE:
            values[classes.index(e.call_type)] = 1
    if source_event is not None and source_event.call_type in classes:
        values[classes.index(source_event.call_type)] = 1
    if NO_CALL in classes:
        values[classes.index(NO_CALL)] = int(not np.any(np.delete(values, classes.index(NO_CALL))))
    return SegmentLabels(track.recording_id, start, end, list(classes), values)


def class_statistics(tracks):
    """Per class: number of segments, number of recordings containing it, total duration."""
    rows = [ (e.call_type, t.recording_id, e.duration) for t in tracks for e in t.events ]
    table = pandas.DataFrame(rows, columns=['class', 'recording_id', 'duration'])
    stats = table.groupby('class').agg(segments=('duration', 'size'),
                                       recordings=('recording_id', 'nunique'),
                                       duration=('duration', 'sum'))
    return stats.sort_index()


def excluded_classes(tracks, K, classes=None):
    """Classes with fewer than K segments or present in fewer than K recordings."""
    stats = class_statistics(tracks)
    classes = list(stats.index) if classes is None else [ c for c in classes if c != NO_CALL ]
    excluded = []
    for c in classes:
        segments = int(stats.loc[c, 'segments']) if c in stats.index else 0
        recordings = int(stats.loc[c, 'recordings']) if c in stats.index else 0
        if segments < K or recordings < K:
            excluded.append(c)
    if excluded:
        logger.warning('excluding classes with fewer than %d segments or recordings: %s', K, ', '.join(excluded))
    return excluded


def pool_labels(frame_values, token_starts, token_len=0.16, frame_stride=0.1):
    """
    Max-pool (T, C) frame labels onto tokens [s, s+token_len); a token is
    positive when any frame it overlaps is positive.
    """
    T = frame_values.shape[0]
    pooled = np.zeros((len(token_starts), frame_values.shape[1]), dtype=frame_values.dtype)
    for j, s in enumerate(token_starts):
        first = int(np.floor(s/frame_stride + TOLERANCE))
        last = int(np.ceil((s + token_len)/frame_stride - TOLERANCE)) - 1
        first, last = max(first, 0), min(last, T-1)
        if first <= last:
            pooled[j] = np.max(frame_values[first:last+1], axis=0)
    return pooled


def frame_labels_table(labels):
    frames = []
    for fl in labels:
        T, C = fl.values.shape
        frames.append(pandas.DataFrame({
            'recording_id': fl.recording_id,
            'frame_idx': np.repeat(np.arange(T), C),
            't_start_s': np.repeat(fl.times, C),
            'class': np.tile(fl.classes, T),
            'label': fl.values.reshape(-1).astype(int),
        }))
    columns = ['recording_id', 'frame_idx', 't_start_s', 'class', 'label']
    return pandas.concat(frames, ignore_index=True) if frames else pandas.DataFrame(columns=columns)


def write_frame_labels(path, labels):
    with atomic_write(path, 'w') as handle:
        frame_labels_table(labels).to_csv(handle, index=False, float_format='%.3f', lineterminator='\n')
