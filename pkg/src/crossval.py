import itertools
import json
import logging
from dataclasses import dataclass
from dataclasses import field
from dataclasses import replace

import numpy as np
import pandas
from tqdm import tqdm

from src.errors import ConfigError
from src.errors import EmptySearchSpaceError
from src.errors import FormatError
from src.errors import LeakageError
from src.errors import ShapeError
from src.estimators import NEURAL
from src.estimators import make_classifier
from src.helpers import derive_seed
from src.labels import excluded_classes
from src.labels import segment_targets
from src.metrics import MetricsReport
from src.metrics import detection_report
from src.metrics import segment_report
from src.pipeline import DetectionConfig
from src.pipeline import classify_segments
from src.pipeline import detect
from src.pipeline import oracle_segments
from src.serialization import atomic_write

logger = logging.getLogger(__name__)


@dataclass
class FoldPlan:
    K: int
    assignment: dict                                 # recording_id -> fold index
    classes: list
    counts: list                                     # per fold: class -> segment count
    seed: int = 0
    excluded: list = field(default_factory=list)     # classes with too few segments or recordings
    flags: list = field(default_factory=list)

    def folds(self):
        return [ sorted(r for r, f in self.assignment.items() if f == k) for k in range(self.K) ]

    def train_ids(self, *held_out):
        return sorted(r for r, f in self.assignment.items() if f not in held_out)

    def validate(self):
        """Every fold index in range and every fold non-empty."""
        bad = sorted(r for r, f in self.assignment.items() if not (0 <= f < self.K))
        if bad:
            raise ShapeError('recordings assigned outside folds 0..%d: %s' % (self.K - 1, ', '.join(bad)))
        empty = [ k for k, ids in enumerate(self.folds()) if not ids ]
        if empty:
            raise ShapeError('empty fold(s): %s' % ', '.join(str(k) for k in empty))
        return self

    def stratification_table(self):
        rows = [ (k, c, self.counts[k].get(c, 0), len(ids)) for k, ids in enumerate(self.folds()) for c in self.classes ]
        return pandas.DataFrame(rows, columns=['fold', 'class', 'segments', 'recordings'])

    def to_dict(self):
        return { 'K': self.K, 'seed': self.seed, 'classes': self.classes, 'excluded': self.excluded,
                 'flags': self.flags, 'assignment': dict(sorted(self.assignment.items())),
                 'stratification': self.counts }

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(int(d['K']), { str(r): int(f) for r, f in d['assignment'].items() }, list(d['classes']),
                       [ dict(c) for c in d['stratification'] ], int(d.get('seed', 0)), list(d.get('excluded', [])),
                       list(d.get('flags', []))).validate()
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError('malformed fold plan: %s' % e)


def write_plan(path, plan):
    with atomic_write(path, 'w') as handle:
        json.dump(plan.to_dict(), handle, indent=2, sort_keys=True)
        handle.write('\n')


def read_plan(path):
    with open(path, 'r') as handle:
        try:
            return FoldPlan.from_dict(json.load(handle))
        except json.JSONDecodeError as e:
            raise FormatError('%s: %s' % (path, e))


def segment_counts(tracks, classes):
    """(N, C) number of events per recording and class."""
    counts = np.zeros((len(tracks), len(classes)))
    for i, t in enumerate(tracks):
        for e in t.events:
            if e.call_type in classes:
                counts[i, classes.index(e.call_type)] += 1
    return counts


def make_folds(tracks, K, seed=0, classes=None):
    """
    Greedy stratified assignment of recordings to K folds.

    Recordings are visited by descending rare-class content (ties broken by a
    seeded shuffle) and each goes to the fold where the squared deviation of
    the per-class counts from the per-fold target, scaled by the target, grows
    least. Fold sizes stay within floor(N/K) and ceil(N/K).
    """
    N = len(tracks)
    if K < 2:
        raise ConfigError('fold count must be at least 2, got %d' % K)
    if N < K:
        raise ConfigError('%d recordings cannot fill %d folds' % (N, K))
    ids = [ t.recording_id for t in tracks ]
    if len(set(ids)) != N:
        raise ShapeError('duplicate recording ids in the fold planner input')
    if classes is None:
        classes = sorted({ e.call_type for t in tracks for e in t.events })
    counts = segment_counts(tracks, classes)
    total = counts.sum(axis=0)
    target = np.maximum(total/float(K), 1.0e-9)
    rarity = counts @ (1.0/np.maximum(total, 1.0)) if len(classes) else np.zeros(N)
    shuffle = np.random.default_rng(derive_seed(seed, 'folds')).permutation(N)
    order = sorted(range(N), key=lambda i: (-rarity[i], shuffle[i]))
    lo, hi = N // K, -(-N // K)
    fold_counts = np.zeros((K, len(classes)))
    sizes = np.zeros(K, dtype=int)
    assignment = {}
    for n_done, i in enumerate(order):
        remaining = N - n_done
        deficit = int(np.sum(np.maximum(lo - sizes, 0)))
        allowed = sizes < hi
        if remaining <= deficit:
            allowed &= sizes < lo
        growth = np.sum(((fold_counts + counts[i])-target)**2/target - (fold_counts-target)**2/target, axis=1)
        candidates = [ k for k in range(K) if allowed[k] ]
        best = min(candidates, key=lambda k: (round(growth[k], 9), sizes[k], k))
        assignment[ids[i]] = best
        fold_counts[best] += counts[i]
        sizes[best] += 1
    excluded = excluded_classes(tracks, K, classes)
    flags = [ 'excluded:%s' % c for c in excluded ]
    per_fold = [ { c: int(fold_counts[k, j]) for j, c in enumerate(classes) } for k in range(K) ]
    logger.info('fold sizes %s', ', '.join(str(s) for s in sizes))
    return FoldPlan(K, assignment, list(classes), per_fold, seed, excluded, flags).validate()


@dataclass
class SearchSpace:
    """
    Grid of values per parameter name. Names with a 'features.' prefix
    override FeatureConfig fields, all others are model parameters.
    """
    grid: dict = field(default_factory=dict)

    def configs(self):
        names = sorted(self.grid)
        for name in names:
            if len(self.grid[name]) == 0:
                raise EmptySearchSpaceError('parameter %s has no values to search' % name)
        return [ dict(zip(names, values)) for values in itertools.product(*[ self.grid[n] for n in names ]) ]


def config_id(config):
    return json.dumps(config, sort_keys=True, separators=(',', ':'))


def split_config(config):
    params = { k: v for k, v in config.items() if not k.startswith('features.') }
    features = { k[len('features.'):]: v for k, v in config.items() if k.startswith('features.') }
    return params, features


def modal_config(winners):
    """Most frequent configuration id; ties go to the lexicographically smallest id."""
    counts = {}
    for w in winners:
        counts[w] = counts.get(w, 0) + 1
    top = max(counts.values())
    return sorted(c for c, n in counts.items() if n == top)[0]


@dataclass
class FoldResult:
    fold: int
    chosen: str                      # config id
    inner_losses: dict               # config id -> list of inner development losses
    report: MetricsReport
    model: object = None
    test_ids: list = field(default_factory=list)


@dataclass
class CrossValResult:
    plan: FoldPlan
    folds: list
    aggregate: MetricsReport

    def search_table(self):
        rows = []
        for r in self.folds:
            for cid in sorted(r.inner_losses):
                losses = [ l for l in r.inner_losses[cid] if np.isfinite(l) ]
                rows.append((r.fold, cid, float(np.mean(losses)) if losses else np.nan, int(cid == r.chosen)))
        return pandas.DataFrame(rows, columns=['outer_fold', 'config_id', 'mean_inner_dev_loss', 'chosen'])


def write_search(path, result):
    with atomic_write(path, 'w') as handle:
        result.search_table().to_csv(handle, index=False, float_format='%.8f', lineterminator='\n')


def evaluate_model(model, dataset, ids, detection=None, tolerance=0.2):
    detection = DetectionConfig() if detection is None else detection
    cfg = model.feature_cfg
    if dataset.task.startswith('detect'):
        pairs = []
        for i in ids:
            item = dataset[i]
            track = detect(model, dataset.features(i, cfg), detection, item.duration)
            pairs.append((item.labels, track))
        return detection_report(pairs, detection.threshold, tolerance)
    targets, classified = [], []
    for i in ids:
        item = dataset[i]
        events = [ e for e in item.annotations.events if e.call_type in model.classes ]
        segments = oracle_segments(item.annotations, model.classes)
        if not segments:
            continue
        classified += classify_segments(model, dataset.features(i, cfg), segments, detection, item.duration)
        targets += [ segment_targets(item.annotations, e.start, e.end, list(model.classes), e) for e in events ]
    return segment_report(targets, classified, detection.threshold)


def audit_leakage(model, test_ids):
    leaked = sorted(set(model.fit_recording_ids) & set(test_ids))
    if leaked:
        raise LeakageError('model fitted on test recording(s) %s' % ', '.join(leaked))


def _fit(family, dataset, classes, feature_cfg, config, seed, train_ids, dev_ids=None):
    params, overrides = split_config(config)
    cfg = replace(feature_cfg, **overrides).validate()
    model = make_classifier(family, classes, cfg, params, seed)
    train_items = dataset.pairs(train_ids, cfg)
    dev_items = dataset.pairs(dev_ids, cfg) if dev_ids else None
    model.fit(train_items, dev_items)
    return model, dev_items


def nested_cv(plan, space, family, dataset, feature_cfg, seed=0, detection=None, tolerance=0.2, show_progress=False):
    """
    Nested cross-validation over `plan`. Returns a CrossValResult holding the
    per-fold choice, inner losses and test report, and the aggregate report.
    """
    if plan.K < 3:
        raise ConfigError('nested cross-validation needs at least 3 folds, got %d' % plan.K)
    configs = space.configs()
    if not configs:
        raise EmptySearchSpaceError('search space is empty')
    missing = sorted(set(plan.assignment) - set(dataset.ids))
    if missing:
        raise ShapeError('fold plan names recordings outside the dataset: %s' % ', '.join(missing))
    classes = list(dataset.classes)
    by_id = { config_id(c): c for c in configs }
    results = []
    turns = [ (t, d) for t in range(plan.K) for d in range(plan.K) if d != t ]
    progress = tqdm(total=len(turns)*len(configs) + plan.K, desc='Cross-validation', disable=(not show_progress))
    for t in range(plan.K):
        test_ids = plan.folds()[t]
        inner_losses = { cid: [] for cid in by_id }
        best_epochs = { cid: [] for cid in by_id }
        winners = []
        for d in [ d for d in range(plan.K) if d != t ]:
            train_ids, dev_ids = plan.train_ids(t, d), plan.folds()[d]
            losses = {}
            for cid, config in sorted(by_id.items()):
                model, dev_items = _fit(family, dataset, classes, feature_cfg, config,
                                        derive_seed(seed, 'outer', t, 'inner', d, cid), train_ids, dev_ids)
                audit_leakage(model, test_ids)
                loss = model.loss(dev_items)
                losses[cid] = loss if np.isfinite(loss) else np.inf
                inner_losses[cid].append(loss)
                if model.best_epoch is not None:
                    best_epochs[cid].append(model.best_epoch)
                progress.update(1)
            winners.append(min(sorted(losses), key=lambda c: losses[c]))
            logger.debug('outer %d inner %d: best %s', t, d, winners[-1])
        chosen = modal_config(winners)
        config = dict(by_id[chosen])
        if family in NEURAL and best_epochs[chosen]:
            epochs = max(1, int(round(np.mean(best_epochs[chosen]))))
            config.update(max_epochs=epochs, patience=epochs)
        model, _ = _fit(family, dataset, classes, feature_cfg, config, derive_seed(seed, 'outer', t, 'final'),
                        plan.train_ids(t))
        audit_leakage(model, test_ids)
        report = evaluate_model(model, dataset, test_ids, detection, tolerance)
        logger.info('outer fold %d: chose %s', t, chosen)
        results.append(FoldResult(t, chosen, inner_losses, report, model, test_ids))
        progress.update(1)
    progress.close()
    return CrossValResult(plan, results, aggregate([ r.report for r in results ]))


def _spread(values):
    defined = [ v for v in values if v is not None ]
    if not defined:
        return None, None, len(values)
    std = float(np.std(defined, ddof=1)) if len(defined) > 1 else 0.0
    return float(np.mean(defined)), std, len(values) - len(defined)


def aggregate(reports):
    """
    Mean and sample standard deviation of every metric over fold reports.
    The returned report holds the means; `std` mirrors its layout and
    `excluded` counts, per flattened metric key, the folds without a value.
    """
    if not reports:
        raise ShapeError('no fold reports to aggregate')
    out = MetricsReport()
    schemes = sorted({ s for r in reports for s in r.per_class })
    for s in schemes:
        classes = sorted({ c for r in reports for c in r.per_class.get(s, {}) })
        out.per_class[s], out.std.setdefault('per_class', {})[s] = {}, {}
        for c in classes:
            names = sorted({ m for r in reports for m in r.per_class.get(s, {}).get(c, {}) })
            out.per_class[s][c], out.std['per_class'][s][c] = {}, {}
            for m in names:
                mean, std, undefined = _spread([ r.per_class.get(s, {}).get(c, {}).get(m) for r in reports ])
                out.per_class[s][c][m], out.std['per_class'][s][c][m] = mean, std
                if undefined:
                    out.excluded['%s/%s/%s' % (s, c, m)] = undefined
    for s in sorted({ s for r in reports for s in r.macro }):
        out.macro[s], out.std.setdefault('macro', {})[s] = {}, {}
        for m in sorted({ m for r in reports for m in r.macro.get(s, {}) }):
            mean, std, undefined = _spread([ r.macro.get(s, {}).get(m) for r in reports ])
            out.macro[s][m], out.std['macro'][s][m] = mean, std
            if undefined:
                out.excluded['%s/macro/%s' % (s, m)] = undefined
    out.n_folds = len(reports)
    if len(reports) == 1:
        out.flags.append('single-fold')
    return out
