import json
import logging
import os
from dataclasses import dataclass
from dataclasses import field

import numpy as np
import pandas
from sklearn.metrics import auc
from sklearn.metrics import average_precision_score
from sklearn.metrics import precision_recall_curve
from sklearn.metrics import roc_curve

from src.errors import ShapeError
from src.labels import NO_CALL
from src.serialization import atomic_write

logger = logging.getLogger(__name__)

SWEEP_THRESHOLDS = np.round(np.arange(1, 20)*0.05, 2)


@dataclass
class ConfusionCounts:
    TP: int
    FP: int
    TN: int
    FN: int

    @property
    def P(self):
        return self.TP + self.FN

    @property
    def N(self):
        return self.TN + self.FP

    @property
    def PP(self):
        return self.TP + self.FP


@dataclass
class Curve:
    x: np.ndarray
    y: np.ndarray
    thresholds: np.ndarray

    def table(self):
        return pandas.DataFrame({ 'threshold': self.thresholds, 'x': self.x, 'y': self.y })


def ratio(a, b):
    return None if b == 0 else a / float(b)


def _check(y, other):
    y, other = np.asarray(y), np.asarray(other)
    if y.shape != other.shape:
        raise ShapeError('label and prediction lengths differ: %s vs %s' % (y.shape, other.shape))
    return y.astype(bool), other


def confusion(y, y_hat):
    y, y_hat = _check(y, y_hat)
    y_hat = y_hat.astype(bool)
    return ConfusionCounts(int(np.sum(y & y_hat)), int(np.sum(~y & y_hat)), int(np.sum(~y & ~y_hat)), int(np.sum(y & ~y_hat)))


def scalars(cc):
    return { 'sensitivity': ratio(cc.TP, cc.P), 'specificity': ratio(cc.TN, cc.N),
             'precision': ratio(cc.TP, cc.PP), 'recall': ratio(cc.TP, cc.P) }


def seg_metrics(y, y_hat):
    cc = confusion(y, y_hat)
    return { 'purity': ratio(cc.TP, cc.PP), 'coverage': ratio(cc.TP, cc.P),
             'jaccard': ratio(cc.TP, cc.TP + cc.FN + cc.FP) }


def roc_auc(y, scores):
    """ROC curve over all distinct scores and its trapezoidal area; (None, None) for one-class input."""
    y, scores = _check(y, scores)
    if y.all() or not y.any():
        return None, None
    fpr, tpr, thresholds = roc_curve(y, scores, drop_intermediate=False)
    return Curve(fpr, tpr, thresholds), float(auc(fpr, tpr))


def pr_ap(y, scores):
    """Precision-recall curve (x = recall) and step-integrated average precision."""
    y, scores = _check(y, scores)
    if not y.any():
        return None, None
    precision, recall, thresholds = precision_recall_curve(y, scores)
    # sklearn orders by increasing threshold, the final point (recall 0) has none
    curve = Curve(recall[::-1], precision[::-1], np.concatenate([[np.inf], thresholds[::-1]]))
    return curve, float(average_precision_score(y, scores))


def purity_coverage_sweep(y, scores, thresholds=SWEEP_THRESHOLDS):
    """Curve with x = coverage and y = purity for every threshold; undefined points are NaN."""
    thresholds = np.sort(np.asarray(thresholds, dtype=np.float64))[::-1]
    points = [ seg_metrics(y, np.asarray(scores) >= t) for t in thresholds ]
    as_float = lambda v: np.nan if v is None else v
    return Curve(np.array([ as_float(p['coverage']) for p in points ]),
                 np.array([ as_float(p['purity']) for p in points ]), thresholds)


def boundaries(binary, start_frame=0, stride=0.1):
    """Times of the rising and falling edges of a binary track; the track edges count as negative."""
    padded = np.concatenate([[0], np.asarray(binary, dtype=np.int8), [0]])
    edges = np.flatnonzero(np.diff(padded) != 0)
    return np.round((edges + start_frame)*stride, 9)


def matched_boundaries(true_boundaries, predicted_boundaries, tolerance=0.2):
    """
    Greedy one-to-one matching in time order: every predicted boundary takes
    the earliest unmatched true boundary within the tolerance. Returns the
    number of matches.
    """
    true_boundaries = sorted(true_boundaries)
    matched = [False]*len(true_boundaries)
    tp = 0
    for p in sorted(predicted_boundaries):
        for i, t in enumerate(true_boundaries):
            if not matched[i] and abs(t - p) <= tolerance + 1.0e-9:
                matched[i] = True
                tp += 1
                break
    return tp


def boundary_pr(true_boundaries, predicted_boundaries, tolerance=0.2):
    tp = matched_boundaries(true_boundaries, predicted_boundaries, tolerance)
    return { 'boundary_precision': ratio(tp, len(predicted_boundaries)),
             'boundary_recall': ratio(tp, len(true_boundaries)) }


def macro(values):
    """Arithmetic mean of the defined entries; None when all are undefined."""
    defined = [ v for v in values if v is not None ]
    return None if not defined else float(np.mean(defined))


def one_vs_one_mask(Y, classes, label):
    """Frames positive for `label` or carrying no call at all."""
    calls = [ j for j, c in enumerate(classes) if c != NO_CALL ]
    no_call = ~np.any(Y[:, calls].astype(bool), axis=1)
    return Y[:, classes.index(label)].astype(bool) | no_call


@dataclass
class MetricsReport:
    per_class: dict = field(default_factory=dict)    # scheme -> class -> metric -> value
    macro: dict = field(default_factory=dict)        # scheme -> metric -> value
    excluded: dict = field(default_factory=dict)     # scheme -> metric -> number of undefined classes
    curves: dict = field(default_factory=dict)       # (kind, scheme, class) -> Curve, not serialized
    std: dict = field(default_factory=dict)          # fold aggregates only: same layout as per_class and macro
    n_folds: int = None
    flags: list = field(default_factory=list)

    def to_dict(self):
        d = { 'per_class': self.per_class, 'macro': self.macro, 'excluded': self.excluded, 'flags': self.flags }
        if self.n_folds is not None:
            d.update(std=self.std, n_folds=self.n_folds)
        return d

    def flatten(self):
        out = {}
        for scheme, classes in self.per_class.items():
            for c, metrics in classes.items():
                for m, v in metrics.items():
                    out['%s/%s/%s' % (scheme, c, m)] = v
        for scheme, metrics in self.macro.items():
            for m, v in metrics.items():
                out['%s/macro/%s' % (scheme, m)] = v
        return out


def _class_metrics(y, scores, threshold, boundary_pairs=None, tolerance=0.2):
    y = np.asarray(y).astype(bool)
    y_hat = np.asarray(scores) >= threshold
    roc, area = roc_auc(y, scores)
    pr, ap = pr_ap(y, scores)
    metrics = { 'auc': area, 'ap': ap }
    metrics.update(scalars(confusion(y, y_hat)))
    metrics.update(seg_metrics(y, y_hat))
    if boundary_pairs is not None:
        # matches never cross recordings
        tp = sum(matched_boundaries(t, p, tolerance) for t, p in boundary_pairs)
        metrics['boundary_precision'] = ratio(tp, sum(len(p) for _, p in boundary_pairs))
        metrics['boundary_recall'] = ratio(tp, sum(len(t) for t, _ in boundary_pairs))
    curves = { 'roc': roc, 'pr': pr, 'purity-coverage': purity_coverage_sweep(y, scores) }
    return metrics, curves


def _finish(report, scheme, per_class):
    report.per_class[scheme] = per_class
    names = sorted({ m for metrics in per_class.values() for m in metrics })
    report.macro[scheme] = { m: macro([ per_class[c].get(m) for c in per_class ]) for m in names }
    report.excluded[scheme] = { m: sum(per_class[c].get(m) is None for c in per_class) for m in names }


def aligned_frames(labels, track):
    idx = track.frame_indices
    if idx.size and idx[-1] >= labels.n_frames:
        raise ShapeError('%s: track reaches frame %d, labels end at %d' % (track.recording_id, idx[-1], labels.n_frames - 1))
    return labels.values[idx]


def detection_report(pairs, threshold=0.5, tolerance=0.2, one_vs_one=True):
    """
    Framewise detection metrics over many recordings.

    pairs ... list of (FrameLabels, FramewiseProbabilities) per recording with
              identical class lists; tracks may be truncated at the edges
    """
    if not pairs:
        raise ShapeError('no recordings to evaluate')
    classes = [ c for c in pairs[0][1].classes if c != NO_CALL ]
    label_classes = pairs[0][0].classes
    Y = np.concatenate([ aligned_frames(fl, tr) for fl, tr in pairs ], axis=0)
    S = np.concatenate([ tr.values for _, tr in pairs ], axis=0)
    report = MetricsReport()
    per_class = {}
    for c in classes:
        y = Y[:, label_classes.index(c)]
        s = S[:, pairs[0][1].classes.index(c)]
        boundary_pairs = [ (boundaries(aligned_frames(fl, tr)[:, label_classes.index(c)], tr.start_frame),
                            boundaries(tr.column(c) >= threshold, tr.start_frame)) for fl, tr in pairs ]
        metrics, curves = _class_metrics(y, s, threshold, boundary_pairs, tolerance)
        per_class[c] = metrics
        report.curves.update({ (kind, 'one-vs-rest', c): curve for kind, curve in curves.items() if curve is not None })
    _finish(report, 'one-vs-rest', per_class)
    if one_vs_one and NO_CALL in label_classes and len(classes) > 1:
        per_class = {}
        for c in classes:
            mask = one_vs_one_mask(Y, label_classes, c)
            y = Y[mask, label_classes.index(c)]
            s = S[mask, pairs[0][1].classes.index(c)]
            metrics, curves = _class_metrics(y, s, threshold)
            per_class[c] = metrics
            report.curves.update({ (kind, 'one-vs-one', c): curve for kind, curve in curves.items() if curve is not None })
        _finish(report, 'one-vs-one', per_class)
    return report


def segment_report(targets, classified, threshold=0.5):
    """
    Segment classification metrics.

    targets ... SegmentLabels per segment, classified ... Segments with
                probabilities over the same classes, in the same order
    """
    if len(targets) != len(classified):
        raise ShapeError('%d segment targets but %d classified segments' % (len(targets), len(classified)))
    if not targets:
        raise ShapeError('no segments to evaluate')
    classes = [ c for c in targets[0].classes if c != NO_CALL ]
    report = MetricsReport()
    per_class = {}
    for c in classes:
        y = np.array([ t.values[t.classes.index(c)] for t in targets ])
        s = np.array([ seg.probabilities[seg.classes.index(c)] for seg in classified ])
        metrics, curves = _class_metrics(y, s, threshold)
        per_class[c] = { k: metrics[k] for k in ('auc', 'ap', 'precision', 'recall', 'specificity') }
        report.curves.update({ (kind, 'segments', c): curves[kind] for kind in ('roc', 'pr') if curves[kind] is not None })
    _finish(report, 'segments', per_class)
    report.macro['segments']['map'] = report.macro['segments'].get('ap')
    return report


def write_report(path, report):
    with atomic_write(path, 'w') as handle:
        json.dump(report.to_dict(), handle, indent=2, sort_keys=True)
        handle.write('\n')


def write_curves(directory, report):
    """One CSV threshold,x,y per (curve kind, scheme, class)."""
    os.makedirs(directory, exist_ok=True)
    for (kind, scheme, c), curve in sorted(report.curves.items()):
        path = os.path.join(directory, '%s_%s_%s.csv' % (kind, scheme, c))
        with atomic_write(path, 'w') as handle:
            curve.table().to_csv(handle, index=False, float_format='%.8f', lineterminator='\n')
