import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from tqdm import tqdm

from src.corpus import AnnotationTrack
from src.errors import ConfigError
from src.errors import MissingInputError
from src.features import extract_features
from src.features import load_features
from src.features import save_features
from src.helpers import max_workers
from src.labels import CALL
from src.labels import NO_CALL
from src.labels import LabelGrid
from src.labels import Taxonomy
from src.labels import excluded_classes
from src.labels import map_taxonomy
from src.labels import rasterize
from src.labels import task_view

logger = logging.getLogger(__name__)

TASKS = ('detect-binary', 'detect-multilabel', 'classify-call', 'classify-subcall')


@dataclass
class Item:
    recording: object      # preprocessed Recording
    annotations: object    # AnnotationTrack in the task's label space
    labels: object         # FrameLabels, no-call column first

    @property
    def id(self):
        return self.recording.id

    @property
    def duration(self):
        return self.recording.duration


def task_classes(task, tracks, taxonomy):
    """Call classes of a task (without no-call)."""
    if task == 'detect-binary':
        return [CALL]
    if task in ('detect-multilabel', 'classify-call'):
        return list(taxonomy.call_classes)
    if task == 'classify-subcall':
        classes = sorted({ e.call_type for t in tracks for e in t.events })
        if not classes:
            raise ConfigError('classify-subcall needs annotations with subcall labels')
        return classes
    raise ConfigError('unknown task %r, expected one of %s' % (task, ', '.join(TASKS)))


class Dataset:

    # Python constructor
    def __init__(self, items, classes, task, cache_dir=None):
        self.items     = { item.id: item for item in items }
        self.ids       = [ item.id for item in items ]
        self.classes   = list(classes)   # call classes
        self.task      = task
        self.cache_dir = cache_dir
        self._features = {}

    @property
    def label_classes(self):
        return [NO_CALL] + self.classes

    def __len__(self):
        return len(self.ids)

    def __getitem__(self, rec_id):
        if rec_id not in self.items:
            raise MissingInputError('recording %s is not part of the dataset' % rec_id)
        return self.items[rec_id]

    def tracks(self, ids=None):
        return [ self.items[i].annotations for i in (self.ids if ids is None else ids) ]

    def features(self, rec_id, cfg):
        key = (rec_id, tuple(sorted(cfg.extraction_dict().items())))
        if key not in self._features:
            self._features[key] = self._extract(rec_id, cfg)
        return self._features[key]

    def _extract(self, rec_id, cfg):
        if self.cache_dir is not None:
            path = os.path.join(self.cache_dir, '%s_%08x.efm' % (rec_id, cfg.config_hash()))
            if os.path.isfile(path):
                return load_features(path, cfg, rec_id)
            f = extract_features(self.items[rec_id].recording, cfg)
            save_features(path, f)
            # reload so cached and fresh runs see the same float32-rounded values
            return load_features(path, cfg, rec_id)
        return extract_features(self.items[rec_id].recording, cfg)

    def prefetch(self, cfg, ids=None, show_progress=False):
        """Extract features of many recordings in a thread pool."""
        ids = self.ids if ids is None else ids
        with ThreadPoolExecutor(max_workers()) as pool:
            list(tqdm(pool.map(lambda i: self.features(i, cfg), ids), 'Featurizing', total=len(ids),
                      disable=(not show_progress)))

    def pairs(self, ids, cfg):
        """(FeatureMatrix, FrameLabels) per recording, the form models train on."""
        return [ (self.features(i, cfg), self.items[i].labels) for i in ids ]

    def subset(self, ids):
        sub = Dataset([ self.items[i] for i in ids ], self.classes, self.task, self.cache_dir)
        sub._features = self._features
        return sub

    def without_classes(self, excluded, grid=LabelGrid()):
        """Same recordings with some classes removed from labels and annotations."""
        classes = [ c for c in self.classes if c not in excluded ]
        items = []
        for i in self.ids:
            item = self.items[i]
            ann = AnnotationTrack(item.annotations.recording_id,
                                  [ e for e in item.annotations.events if e.call_type not in excluded ])
            items.append(Item(item.recording, ann, rasterize(ann, item.duration, [NO_CALL] + classes, grid)))
        sub = Dataset(items, classes, self.task, self.cache_dir)
        sub._features = self._features
        return sub


def build_dataset(recordings, tracks, task, taxonomy=None, grid=LabelGrid(), cache_dir=None, min_count=None):
    """
    Map annotations into the task's label space and rasterize them.

    recordings ... preprocessed recordings
    tracks ... dict recording_id -> AnnotationTrack in source labels
    min_count ... drop classes with fewer segments or recordings (the fold count K)
    """
    taxonomy = Taxonomy() if taxonomy is None else taxonomy
    if task not in TASKS:
        raise ConfigError('unknown task %r, expected one of %s' % (task, ', '.join(TASKS)))
    views = {}
    for rec in recordings:
        track = tracks.get(rec.id)
        if track is None:
            track = AnnotationTrack(rec.id, [])
            logger.warning('%s: no annotations, treated as call-free', rec.id)
        track.validate(rec.duration)
        views[rec.id] = task_view(map_taxonomy(track, taxonomy), task)
    classes = task_classes(task, list(views.values()), taxonomy)
    classes = [ c for c in classes if c not in (excluded_classes(list(views.values()), min_count, classes)
                                                if min_count else []) ]
    if not classes:
        raise ConfigError('no class left for task %s' % task)
    items = []
    for rec in recordings:
        ann = views[rec.id]
        ann = AnnotationTrack(ann.recording_id, [ e for e in ann.events if e.call_type in classes ])
        items.append(Item(rec, ann, rasterize(ann, rec.duration, [NO_CALL] + classes, grid)))
    logger.info('dataset for %s: %d recordings, classes %s', task, len(items), ', '.join(classes))
    return Dataset(items, classes, task, cache_dir)
