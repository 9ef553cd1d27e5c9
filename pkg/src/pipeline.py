import logging
from dataclasses import dataclass

import numpy as np

from src.ast_model import resample_track
from src.errors import ConfigError
from src.estimators import DEFAULT_PARAMS
from src.features import FeatureConfig
from src.tracks import GRID_STRIDE
from src.tracks import FramewiseProbabilities
from src.tracks import Segment

logger = logging.getLogger(__name__)

EPS = 1.0e-9

# default window length per family, chunk length for ast-seq
CONTEXT_SECONDS = { family: params.get('context_seconds', params.get('chunk_seconds'))
                    for family, params in DEFAULT_PARAMS.items() }

# half the widest window plus one analysis frame
DEFAULT_MARGIN = 0.5*(max(CONTEXT_SECONDS.values()) + FeatureConfig().frame_len_ms/1000.0)


@dataclass
class DetectionConfig:
    """
    threshold ... decision threshold, p >= threshold is positive
    strategy ... 'per-frame' or 'sequence'
    margin ... seconds cut from both recording edges; None uses DEFAULT_MARGIN
               for every family so tracks of different models share one grid
    min_gap, min_duration ... optional smoothing in seconds, 0 disables it
    """
    threshold: float = 0.5
    strategy: str = 'per-frame'
    margin: float = None
    min_gap: float = 0.0
    min_duration: float = 0.0

    def validate(self):
        if not (0.0 < self.threshold < 1.0):
            raise ConfigError('threshold must lie in (0, 1), got %g' % self.threshold)
        if self.strategy not in ('per-frame', 'sequence'):
            raise ConfigError('unknown detection strategy %r' % self.strategy)
        return self


def features_duration(features):
    cfg = features.config
    if features.rows == 0:
        return 0.0
    return ((features.offset + features.rows - 1)*cfg.stride + cfg.frame_len) / float(cfg.sample_rate)


def grid_frames(duration, margin, stride=GRID_STRIDE):
    """Grid frames k with [k*stride, (k+1)*stride) inside [margin, duration - margin]."""
    first = int(np.ceil(margin/stride - EPS))
    last = int(np.floor((duration - margin)/stride + EPS)) - 1
    return np.arange(first, max(first, last + 1))


def detect(model, features, cfg=None, duration=None):
    """Sequence model outputs are interpolated onto the grid frame centres."""
    cfg = (DetectionConfig() if cfg is None else cfg).validate()
    duration = features_duration(features) if duration is None else duration
    margin = cfg.margin
    if margin is None:
        margin = DEFAULT_MARGIN
        if 0.5*model.context_seconds > margin:
            margin = 0.5*model.context_seconds
            logger.warning('%s: %s context of %.3f s exceeds the shared edge margin, tracks are shorter',
                           features.recording_id, model.family, model.context_seconds)
    frames = grid_frames(duration, margin)
    classes = list(model.classes)
    if frames.size == 0:
        logger.warning('%s: recording of %.2f s is shorter than the model context', features.recording_id, duration)
        return FramewiseProbabilities(features.recording_id, classes, np.zeros((0, len(classes))), flags=['too-short'])
    if cfg.strategy == 'per-frame':
        kept, values = model.predict_frames(features, frames)
        if len(kept) == 0:
            return FramewiseProbabilities(features.recording_id, classes, np.zeros((0, len(classes))), flags=['too-short'])
        return FramewiseProbabilities(features.recording_id, classes, values, int(kept[0]))
    if not hasattr(model, 'predict_sequence'):
        raise ConfigError('model family %s has no sequence output' % model.family)
    times, values = model.predict_sequence(features)
    centres = (frames + 0.5)*GRID_STRIDE
    return resample_track(times, values, centres, features.recording_id, classes, int(frames[0]))


def _runs(positive):
    padded = np.concatenate([[False], positive, [False]]).astype(np.int8)
    edges = np.diff(padded)
    return list(zip(np.flatnonzero(edges == 1), np.flatnonzero(edges == -1) - 1))


def endpoint(track, label, threshold=0.5, min_gap=0.0, min_duration=0.0):
    """
    Segments of class `label`: a segment opens at every rising edge of p >= threshold
    (the track start counts as negative) and closes at the next falling edge or
    the track end. Frames i..j span [i*0.1, (j+1)*0.1).
    """
    p = track.column(label)
    runs = _runs(p >= threshold)
    if min_gap > 0.0 and runs:
        merged = [list(runs[0])]
        for a, b in runs[1:]:
            if (a - merged[-1][1] - 1)*track.stride <= min_gap + EPS:
                merged[-1][1] = b
            else:
                merged.append([a, b])
        runs = [ tuple(r) for r in merged ]
    if min_duration > 0.0:
        runs = [ (a, b) for a, b in runs if (b - a + 1)*track.stride >= min_duration - EPS ]
    segments = []
    for a, b in runs:
        start = round((track.start_frame + a)*track.stride, 9)
        end = round((track.start_frame + b + 1)*track.stride, 9)
        segments.append(Segment(track.recording_id, start, end, label, np.array([np.mean(p[a:b+1])]), [label]))
    return segments


def rasterize_segments(segments, n_frames, start_frame=0, stride=GRID_STRIDE):
    """Binary track that is 1 on the grid frames covered by the segments."""
    out = np.zeros(n_frames, dtype=np.int8)
    for s in segments:
        a = max(s.first_frame(stride) - start_frame, 0)
        b = min(s.last_frame(stride) - start_frame, n_frames - 1)
        if a <= b:
            out[a:b+1] = 1
    return out


def classify_segment(track, segment):
    """
    Mean class probabilities over the grid frames of the segment. A segment
    covering no frame of the track falls back to the frame nearest its centre.
    """
    values = track.select(segment.first_frame(track.stride), segment.last_frame(track.stride))
    flags = []
    if values.shape[0] == 0:
        if track.n_frames == 0:
            raise ConfigError('%s: empty track, segment [%g, %g] cannot be classified'
                              % (track.recording_id, segment.start, segment.end))
        centre = 0.5*(segment.start + segment.end)
        nearest = int(np.clip(np.round(centre/track.stride - 0.5) - track.start_frame, 0, track.n_frames - 1))
        values = track.values[nearest:nearest+1]
        flags.append('degenerate')
        logger.warning('%s: segment [%g, %g] covers no grid frame, nearest frame used',
                       track.recording_id, segment.start, segment.end)
    probabilities = np.mean(values, axis=0)
    return Segment(segment.recording_id, segment.start, segment.end, segment.label, probabilities,
                   list(track.classes), segment.source, list(segment.flags) + flags)


def classify_segments(model, features, segments, cfg=None, duration=None):
    track = detect(model, features, cfg, duration)
    return [ classify_segment(track, s) for s in segments ]


def oracle_segments(annotation_track, classes=None):
    return [ Segment(annotation_track.recording_id, e.start, e.end, e.call_type, source='oracle')
             for e in annotation_track.events if classes is None or e.call_type in classes ]
