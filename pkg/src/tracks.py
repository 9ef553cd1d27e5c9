from dataclasses import dataclass
from dataclasses import field

import numpy as np
import pandas

from src.errors import ShapeError
from src.serialization import atomic_write

GRID_STRIDE = 0.1


@dataclass
class FramewiseProbabilities:
    """
    Per-class probabilities on the 100 ms grid.

    Row i belongs to grid frame start_frame + i, i.e. the interval
    [(start_frame+i)*stride, (start_frame+i+1)*stride).
    """
    recording_id: str
    classes: list
    values: np.ndarray   # (T, C)
    start_frame: int = 0
    stride: float = GRID_STRIDE
    flags: list = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1, len(self.classes))

    @property
    def n_frames(self):
        return self.values.shape[0]

    @property
    def frame_indices(self):
        return self.start_frame + np.arange(self.n_frames)

    @property
    def times(self):
        return np.round(self.frame_indices*self.stride, 9)

    def column(self, name):
        if name not in self.classes:
            raise ShapeError('class %r not in track classes %s' % (name, self.classes))
        return self.values[:, self.classes.index(name)]

    def select(self, first_frame, last_frame):
        """Rows for grid frames first_frame..last_frame (inclusive), clipped to the track."""
        a = max(first_frame - self.start_frame, 0)
        b = min(last_frame - self.start_frame + 1, self.n_frames)
        return self.values[a:max(a, b)]


@dataclass
class Segment:
    recording_id: str
    start: float
    end: float
    label: str = None          # class the segment was endpointed (or annotated) for
    probabilities: np.ndarray = None
    classes: list = None
    source: str = 'predicted'   # or 'oracle'
    flags: list = field(default_factory=list)

    @property
    def duration(self):
        return self.end - self.start

    def first_frame(self, stride=GRID_STRIDE):
        return int(np.floor(self.start/stride + 1.0e-9))

    def last_frame(self, stride=GRID_STRIDE):
        """Last grid frame starting before the segment end."""
        return int(np.ceil(self.end/stride - 1.0e-9)) - 1


def tracks_table(tracks):
    frames = []
    for tr in tracks:
        T, C = tr.values.shape
        frames.append(pandas.DataFrame({
            'recording_id': tr.recording_id,
            't_s': np.repeat(tr.times, C),
            'class': np.tile(tr.classes, T),
            'prob': tr.values.reshape(-1),
        }))
    columns = ['recording_id', 't_s', 'class', 'prob']
    return pandas.concat(frames, ignore_index=True) if frames else pandas.DataFrame(columns=columns)


def write_tracks(path, tracks):
    with atomic_write(path, 'w') as handle:
        tracks_table(tracks).to_csv(handle, index=False, float_format='%.6f', lineterminator='\n')


def read_tracks(path):
    """Inverse of write_tracks; classes keep their first-seen order."""
    table = pandas.read_csv(path, dtype={'recording_id': str, 'class': str}, keep_default_na=False)
    tracks = {}
    for rec_id, rows in table.groupby('recording_id', sort=False):
        classes = list(dict.fromkeys(rows['class']))
        times = np.array(list(dict.fromkeys(rows['t_s'])))
        values = rows['prob'].to_numpy().reshape(len(times), len(classes))
        start = int(round(times[0]/GRID_STRIDE)) if len(times) > 0 else 0
        tracks[rec_id] = FramewiseProbabilities(rec_id, classes, values, start)
    return tracks


def segments_table(segments):
    rows = []
    for s in segments:
        if s.probabilities is None:
            rows.append([s.recording_id, s.start, s.end, s.label, np.nan, s.source])
            continue
        for c, p in zip(s.classes, s.probabilities):
            rows.append([s.recording_id, s.start, s.end, c, p, s.source])
    return pandas.DataFrame(rows, columns=['recording_id', 'start_s', 'end_s', 'class', 'prob', 'source'])


def write_segments(path, segments):
    with atomic_write(path, 'w') as handle:
        segments_table(segments).to_csv(handle, index=False, float_format='%.6f', lineterminator='\n')


def read_segments(path):
    """Segments from a segment CSV; one Segment per (recording, start, end) with its class probabilities."""
    table = pandas.read_csv(path, dtype={'recording_id': str, 'class': str, 'source': str}, keep_default_na=False)
    segments = []
    for (rec_id, start, end, source), rows in table.groupby(['recording_id', 'start_s', 'end_s', 'source'], sort=False):
        probs = pandas.to_numeric(rows['prob'], errors='coerce').to_numpy()
        classes = list(rows['class'])
        if np.all(np.isnan(probs)):
            segments.append(Segment(rec_id, float(start), float(end), classes[0], None, None, source))
        else:
            label = classes[int(np.nanargmax(probs))]
            segments.append(Segment(rec_id, float(start), float(end), label, probs, classes, source))
    return segments
