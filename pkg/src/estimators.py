"""
    fit(train, dev=None)    train/dev are lists of (FeatureMatrix, FrameLabels)
    predict_frames(features, frames) -> (kept grid frames, (n, C) probabilities)
    predict_sequence(features)       -> (column centre times, (n, C) probabilities)
    loss(items)             mean BCE, mean hinge for 'svm'
"""

import logging
from dataclasses import asdict

import numpy as np
import torch
from torch.utils.data import Dataset as TorchDataset

from src.ast_model import PATCH
from src.ast_model import AstConfig
from src.ast_model import AstNet
from src.cnn_model import CnnConfig
from src.cnn_model import CnnNet
from src.errors import ConfigError
from src.errors import DegenerateCalibrationError
from src.errors import UnsupportedCombinationError
from src.errors import UntrainedModelError
from src.features import FeatureConfig
from src.features import fit_cmvn
from src.features import CmvnStats
from src.gbdt_model import GbdtModel
from src.helpers import binary_cross_entropy
from src.helpers import derive_seed
from src.helpers import hinge_loss
from src.helpers import sigmoid
from src.labels import NO_CALL
from src.labels import pool_labels
from src.linear_model import LinearModel
from src.linear_model import train_linear_svm
from src.linear_model import train_logreg
from src.methods.calibration import PlattCalibrator
from src.methods.calibration import make_calibrator
from src.methods.kernel_approximation import make_kernel_approximator
from src.methods.pca import PcaModel
from src.methods.pca import fit_pca
from src.mlp_model import MlpConfig
from src.mlp_model import MlpNet
from src.serialization import read_model_container
from src.serialization import write_model_container
from src.tracks import GRID_STRIDE
from src.training import TrainSchedule
from src.training import evaluate_loss
from src.training import import_weights
from src.training import load_blocks
from src.training import state_blocks
from src.training import train

logger = logging.getLogger(__name__)

FAMILIES = ('logreg', 'svm', 'gbdt', 'mlp', 'cnn', 'ast-lab', 'ast-seq')
SHALLOW = ('logreg', 'svm', 'gbdt')
NEURAL = ('mlp', 'cnn', 'ast-lab', 'ast-seq')
TRANSFORMERS = ('ast-lab', 'ast-seq')

PCA_FRACTION = { 'logreg': 0.95, 'svm': 0.925, 'gbdt': 0.95 }

_SCHEDULE = { 'optimizer': 'adam', 'lr': 1.0e-3, 'batch_size': 64, 'max_epochs': 30, 'patience': 3,
              'freeze_epochs': 10, 'ramp_epochs': 2, 'weight_decay': 0.01, 'train_hop': 1,
              'pretrained_weights': None }

DEFAULT_PARAMS = {
    'logreg':  { 'context_seconds': 0.5, 'context_step': 1, 'l2': 1.0e-4,
                 'epochs': 200, 'lr': 1.0, 'batch_size': None },
    'svm':     { 'context_seconds': 0.5, 'context_step': 1, 'kernel': 'nystroem',
                 'basis': 'rbf', 'gamma': None, 'n_components': None, 'lam': 1.0e-4, 'epochs': 5,
                 'batch_size': 16, 'calibration': 'isotonic', 'calibration_fraction': 0.2 },
    'gbdt':    { 'context_seconds': 0.3, 'context_step': 1, 'n_trees': 50,
                 'max_depth': 3, 'learning_rate': 0.1 },
    'mlp':     dict(_SCHEDULE, context_seconds=0.5, context_step=1, widths=[256, 256], dropout=0.125),
    'cnn':     dict(_SCHEDULE, context_seconds=2.5, context_step=1, block='plain', dropout=0.125),
    'ast-lab': dict(_SCHEDULE, optimizer='adamw', lr=2.0e-4, context_seconds=2.56, embed_dim=192, n_layers=3,
                    n_heads=3, dropout=0.0, pad_mode='repeat'),
    'ast-seq': dict(_SCHEDULE, optimizer='adamw', lr=2.0e-4, chunk_seconds=2.56, embed_dim=192, n_layers=3,
                    n_heads=3, dropout=0.0, pad_mode='repeat'),
}


def default_feature_config(family):
    if family in ('cnn', 'ast-lab', 'ast-seq'):
        return FeatureConfig(kind='logmel', cmvn=False)
    if family == 'mlp':
        return FeatureConfig(kind='mfcc', cmvn=True)
    return FeatureConfig(kind='mfcc', cmvn=True, pca_fraction=PCA_FRACTION[family], pca_whiten=True)


def gather_windows(values, starts, w, step=1):
    """(n, w, D) stack of the w frames values[s], values[s+step], ... for every start s."""
    idx = np.asarray(starts)[:, None] + np.arange(w)[None, :]*step
    return values[idx]


def call_columns(labels, classes):
    return [ labels.classes.index(c) for c in classes ]


class FrameClassifier:
    """Shared window geometry of the per-frame families."""

    # Python constructor
    def __init__(self, family, classes, feature_cfg=None, params=None, seed=0):
        if family not in FAMILIES:
            raise ConfigError('unknown model family %r, expected one of %s' % (family, ', '.join(FAMILIES)))
        self.family      = family
        self.classes     = [ c for c in classes if c != NO_CALL ]
        self.feature_cfg = (default_feature_config(family) if feature_cfg is None else feature_cfg).validate()
        unknown = set(params or {}) - set(DEFAULT_PARAMS[family])
        if unknown:
            raise ConfigError('unknown %s parameter(s): %s' % (family, ', '.join(sorted(unknown))))
        self.params      = dict(DEFAULT_PARAMS[family], **(params or {}))
        self.seed        = seed
        self.trained     = False
        self.fit_recording_ids = []
        self.best_epoch  = None
        self.history     = None

    # geometry

    @property
    def frame_stride_s(self):
        return self.feature_cfg.stride / float(self.feature_cfg.sample_rate)

    @property
    def context_step(self):
        return int(self.params.get('context_step', 1))

    @property
    def context_frames(self):
        """Number of frames w in a context window, odd for the vector models."""
        w = max(1, int(round(self.params['context_seconds']/(self.frame_stride_s*self.context_step))))
        if self.family in ('logreg', 'svm', 'gbdt', 'mlp') and w % 2 == 0:
            w += 1
        if self.family == 'ast-lab':
            w = max(PATCH, PATCH*int(round(w/float(PATCH))))
        return w

    @property
    def span(self):
        return (self.context_frames - 1)*self.context_step + 1

    @property
    def context_seconds(self):
        cfg = self.feature_cfg
        return ((self.span - 1)*cfg.stride + cfg.frame_len) / float(cfg.sample_rate)

    def centre_index(self, frames):
        """Feature frame whose centre is nearest to the centre of each grid frame."""
        half = 0.5*self.feature_cfg.frame_len/float(self.feature_cfg.sample_rate)
        return np.round(((np.asarray(frames) + 0.5)*GRID_STRIDE - half)/self.frame_stride_s).astype(np.int64)

    def window_starts(self, features, frames):
        """Grid frames whose window lies inside the matrix, and the first row of each window."""
        frames = np.asarray(frames, dtype=np.int64)
        starts = self.centre_index(frames) - (self.span - 1)//2 - features.offset
        ok = (starts >= 0) & (starts + self.span <= features.rows)
        return frames[ok], starts[ok]

    def training_frames(self, features, labels, hop=1):
        frames = np.arange(0, labels.n_frames, max(1, int(hop)))
        return self.window_starts(features, frames)

    def _check_trained(self):
        if not self.trained:
            raise UntrainedModelError('%s model has not been trained' % self.family)

    # evaluation

    def loss(self, items):
        probs, targets = [], []
        for features, labels in items:
            frames, values = self.predict_frames(features, np.arange(labels.n_frames))
            probs.append(values)
            targets.append(labels.values[frames][:, call_columns(labels, self.classes)])
        P, Y = np.concatenate(probs, axis=0), np.concatenate(targets, axis=0)
        return float(np.mean(binary_cross_entropy(P, Y)))

    # persistence

    def hyperparams(self):
        return { 'family': self.family, 'classes': self.classes, 'features': asdict(self.feature_cfg),
                 'params': self.params, 'seed': self.seed, 'fit_recording_ids': self.fit_recording_ids,
                 'best_epoch': self.best_epoch }


class ShallowClassifier(FrameClassifier):
    """
    Training-set CMVN, context windows and optional whitened PCA in front of
    logistic regression, a kernel-approximated linear SVM with per-class
    calibration, or boosted trees.
    """

    def __init__(self, family, classes, feature_cfg=None, params=None, seed=0):
        FrameClassifier.__init__(self, family, classes, feature_cfg, params, seed)
        self.cmvn        = None
        self.pca         = None
        self.kernel      = None
        self.model       = None
        self.calibrators = None

    def _front_end(self, features, starts):
        values = features.values if self.cmvn is None else self.cmvn.apply(features).values
        X = gather_windows(values, starts, self.context_frames, self.context_step)
        X = X.reshape(X.shape[0], -1)
        if self.pca is not None:
            X = self.pca.transform(X)
        return X

    def _design(self, items, hop=1):
        X, Y = [], []
        for features, labels in items:
            frames, starts = self.training_frames(features, labels, hop)
            X.append(self._front_end(features, starts))
            Y.append(labels.values[frames][:, call_columns(labels, self.classes)])
        return np.concatenate(X, axis=0), np.concatenate(Y, axis=0).astype(np.float64)

    def _fit_front_end(self, items):
        cfg = self.feature_cfg
        self.cmvn = fit_cmvn([ f for f, _ in items ]) if cfg.cmvn else None
        self.pca = None
        if cfg.pca_fraction is not None or cfg.pca_components is not None:
            X, _ = self._design(items)
            rows = np.random.default_rng(derive_seed(self.seed, 'pca')).permutation(X.shape[0])[:20000]
            self.pca = fit_pca(X[np.sort(rows)], cfg.pca_components, cfg.pca_fraction, cfg.pca_whiten)
            logger.info('PCA keeps %d of %d dimensions', self.pca.n_components, X.shape[1])

    def fit(self, train_items, dev_items=None):
        train_ids = [ f.recording_id for f, _ in train_items ]
        calibration_items = dev_items
        if self.family == 'svm' and not dev_items:
            # hold out recordings for calibration
            order = np.random.default_rng(derive_seed(self.seed, 'calibration')).permutation(len(train_items))
            n_cal = max(1, int(round(self.params['calibration_fraction']*len(train_items))))
            if len(train_items) < 2:
                raise ConfigError('SVM calibration needs development data or at least two training recordings')
            calibration_items = [ train_items[i] for i in sorted(order[:n_cal]) ]
            train_items = [ train_items[i] for i in sorted(order[n_cal:]) ]
        self._fit_front_end(train_items)
        X, Y = self._design(train_items)
        p = self.params
        if self.family == 'logreg':
            self.model = train_logreg(X, Y, p['l2'], p['epochs'], p['lr'], derive_seed(self.seed, 'logreg'), p['batch_size'])
        elif self.family == 'gbdt':
            self.model = GbdtModel(p['n_trees'], p['max_depth'], p['learning_rate'], seed=derive_seed(self.seed, 'gbdt')).fit(X, Y)
        else:
            gamma = p['gamma'] if p['gamma'] is not None else 1.0/X.shape[1]
            self.kernel = make_kernel_approximator(p['kernel'], basis=p['basis'], gamma=gamma, n_components=p['n_components'],
                                                   seed=derive_seed(self.seed, 'kernel')).fit(X)
            self.model = train_linear_svm(self.kernel.transform(X), Y, p['lam'], p['epochs'],
                                          derive_seed(self.seed, 'svm'), p['batch_size'])
            self._fit_calibrators(calibration_items)
        self.fit_recording_ids = sorted(set(train_ids) | { f.recording_id for f, _ in (dev_items or []) })
        self.trained = True
        return self

    def _fit_calibrators(self, items):
        Xc, Yc = self._design(items)
        scores = self.model.decision_function(self.kernel.transform(Xc))
        self.calibrators = []
        for c in range(len(self.classes)):
            try:
                self.calibrators.append(make_calibrator(self.params['calibration']).fit(scores[:, c], Yc[:, c]))
            except DegenerateCalibrationError:
                logger.warning('class %s: calibration data holds one label only, plain sigmoid used', self.classes[c])
                self.calibrators.append(PlattCalibrator(1.0, 0.0))

    def scores(self, features, frames):
        self._check_trained()
        kept, starts = self.window_starts(features, frames)
        if kept.size == 0:
            return kept, np.zeros((0, len(self.classes)))
        X = self._front_end(features, starts)
        if self.family == 'svm':
            return kept, self.model.decision_function(self.kernel.transform(X))
        return kept, self.model.decision_function(X)

    def predict_frames(self, features, frames):
        kept, s = self.scores(features, frames)
        if self.family != 'svm':
            return kept, sigmoid(s)
        return kept, np.column_stack([ cal(s[:, c]) for c, cal in enumerate(self.calibrators) ]).reshape(s.shape)

    def loss(self, items):
        if self.family != 'svm':
            return FrameClassifier.loss(self, items)
        scores, targets = [], []
        for features, labels in items:
            frames, s = self.scores(features, np.arange(labels.n_frames))
            scores.append(s)
            targets.append(labels.values[frames][:, call_columns(labels, self.classes)])
        return float(np.mean(hinge_loss(np.concatenate(scores), np.concatenate(targets))))

    def blocks(self):
        blocks = {}
        if self.cmvn is not None:
            blocks.update({ 'cmvn.mean': self.cmvn.mean, 'cmvn.std': self.cmvn.std })
        if self.pca is not None:
            blocks.update({ 'pca.' + k: v for k, v in self.pca.blocks().items() })
        blocks.update({ 'model.' + k: v for k, v in self.model.blocks().items() })
        if self.kernel is not None:
            blocks.update({ 'kernel.' + k: v for k, v in self.kernel.blocks().items() })
        for c, cal in enumerate(self.calibrators or []):
            blocks.update({ 'calibrator.%d.%s' % (c, k): v for k, v in cal.blocks().items() })
        return blocks

    def hyperparams(self):
        h = FrameClassifier.hyperparams(self)
        if self.kernel is not None:
            h['kernel'] = self.kernel.hyperparams()
        return h

    def set_blocks(self, blocks, hyperparams):
        sub = lambda prefix: { k[len(prefix):]: v for k, v in blocks.items() if k.startswith(prefix) }
        if 'cmvn.mean' in blocks:
            self.cmvn = CmvnStats(blocks['cmvn.mean'], blocks['cmvn.std'])
        if 'pca.mean' in blocks:
            b = sub('pca.')
            self.pca = PcaModel(b['mean'], b['components'], b['eigenvalues'], self.feature_cfg.pca_whiten)
        if self.family == 'gbdt':
            p = self.params
            self.model = GbdtModel(p['n_trees'], p['max_depth'], p['learning_rate']).set_blocks(sub('model.'))
        else:
            b = sub('model.')
            self.model = LinearModel(b['weights'].shape[0], b['weights'].shape[1], kind=self.family).set_blocks(b)
        if self.family == 'svm':
            k = dict(hyperparams['kernel'])
            self.kernel = make_kernel_approximator(k.pop('kind'), **k).set_blocks(sub('kernel.'))
            self.calibrators = [ make_calibrator(self.params['calibration']).set_blocks(sub('calibrator.%d.' % c))
                                 if 'calibrator.%d.platt' % c not in blocks
                                 else PlattCalibrator().set_blocks(sub('calibrator.%d.' % c))
                                 for c in range(len(self.classes)) ]
        self.trained = True
        return self


class WindowDataset(TorchDataset):

    def __init__(self, items, classifier, hop=1, flatten=False):
        self.features = [ torch.as_tensor(f.values, dtype=torch.float32) for f, _ in items ]
        self.index, self.targets = [], []
        for r, (features, labels) in enumerate(items):
            frames, starts = classifier.training_frames(features, labels, hop)
            self.index += [ (r, int(s)) for s in starts ]
            self.targets.append(labels.values[frames][:, call_columns(labels, classifier.classes)])
        targets = np.concatenate(self.targets, axis=0) if self.targets else np.zeros((0, len(classifier.classes)))
        self.targets = torch.as_tensor(targets, dtype=torch.float32)
        self.span = classifier.span
        self.step = classifier.context_step
        self.flatten = flatten

    def __len__(self):
        return len(self.index)

    def __getitem__(self, i):
        r, s = self.index[i]
        window = self.features[r][s:s+self.span:self.step]   # (w, D)
        x = window.reshape(-1) if self.flatten else window.T
        return x, self.targets[i]


class ChunkDataset(TorchDataset):
    """Consecutive chunks of a multiple of 16 frames with token-level targets."""

    def __init__(self, items, classifier):
        self.inputs, self.targets = [], []
        L = classifier.chunk_frames
        for features, labels in items:
            for s in range(0, features.rows - L + 1, L):
                self.inputs.append(torch.as_tensor(features.values[s:s+L].T, dtype=torch.float32))
                starts = classifier.token_starts(features, s, L)
                pooled = pool_labels(labels.values[:, call_columns(labels, classifier.classes)], starts,
                                     PATCH*classifier.frame_stride_s, GRID_STRIDE)
                self.targets.append(torch.as_tensor(pooled, dtype=torch.float32))

    def __len__(self):
        return len(self.inputs)

    def __getitem__(self, i):
        return self.inputs[i], self.targets[i]


class NeuralClassifier(FrameClassifier):
    """MLP, CNN and the transformer families, trained with the shared schedule."""

    def __init__(self, family, classes, feature_cfg=None, params=None, seed=0):
        FrameClassifier.__init__(self, family, classes, feature_cfg, params, seed)
        if family in ('cnn', 'ast-lab', 'ast-seq') and self.feature_cfg.kind not in ('mel', 'logmel'):
            raise ConfigError('%s needs mel or logmel features, got %s' % (family, self.feature_cfg.kind))
        self.net = None
        self.cmvn = None

    @property
    def chunk_frames(self):
        return max(PATCH, PATCH*int(round(self.params['chunk_seconds']/(self.frame_stride_s*PATCH))))

    @property
    def context_frames(self):
        if self.family == 'ast-seq':
            return PATCH
        return FrameClassifier.context_frames.fget(self)

    def schedule(self):
        p = self.params
        return TrainSchedule(optimizer=p['optimizer'], lr=p['lr'], batch_size=p['batch_size'], max_epochs=p['max_epochs'],
                             patience=p['patience'], freeze_epochs=p['freeze_epochs'], ramp_epochs=p['ramp_epochs'],
                             weight_decay=p['weight_decay'], seed=derive_seed(self.seed, 'train'))

    def build_net(self):
        torch.manual_seed(derive_seed(self.seed, 'init') % 2**31)
        p, C, D = self.params, len(self.classes), self.feature_cfg.dim
        if self.family == 'mlp':
            return MlpNet(D*self.context_frames, C, MlpConfig(tuple(p['widths']), p['dropout']))
        if self.family == 'cnn':
            return CnnNet(D, self.context_frames, C, CnnConfig(block=p['block'], dropout=p['dropout']))
        head = 'sequence' if self.family == 'ast-seq' else 'cls'
        n_time = (self.chunk_frames if self.family == 'ast-seq' else self.context_frames) // PATCH
        cfg = AstConfig(p['embed_dim'], p['n_layers'], p['n_heads'], head, dropout=p['dropout'],
                        max_time_patches=max(64, n_time), pad_mode=p['pad_mode'])
        return AstNet(D, C, cfg)

    def token_starts(self, features, s, L):
        """Start time of each 16-frame column of the chunk starting at row s."""
        cfg = self.feature_cfg
        rows = features.offset + s + np.arange(0, L, PATCH)
        return rows*cfg.stride / float(cfg.sample_rate)

    def _normalized(self, features):
        return features if self.cmvn is None else self.cmvn.apply(features)

    def _dataset(self, items):
        items = [ (self._normalized(f), labels) for f, labels in items ]
        if self.family == 'ast-seq':
            return ChunkDataset(items, self)
        return WindowDataset(items, self, self.params['train_hop'], flatten=(self.family == 'mlp'))

    def fit(self, train_items, dev_items=None):
        self.net = self.build_net()
        self.cmvn = fit_cmvn([ f for f, _ in train_items ]) if self.feature_cfg.cmvn else None
        pretrained = self.params['pretrained_weights'] is not None
        if pretrained:
            import_weights(self.net, self.params['pretrained_weights'], backbone_only=True)
        train_data = self._dataset(train_items)
        dev_data = self._dataset(dev_items) if dev_items else None
        result = train(self.net, train_data, dev_data, self.schedule(), pretrained)
        self.history = result
        self.best_epoch = result.best_epoch
        self.fit_recording_ids = sorted({ f.recording_id for f, _ in train_items + list(dev_items or []) })
        self.trained = True
        return self

    def _forward(self, batch):
        self.net.eval()
        with torch.no_grad():
            return torch.sigmoid(self.net(batch)).numpy().astype(np.float64)

    def predict_frames(self, features, frames):
        self._check_trained()
        if self.family == 'ast-seq':
            raise ConfigError('ast-seq produces sequences, use the sequence strategy')
        kept, starts = self.window_starts(features, frames)
        if kept.size == 0:
            return kept, np.zeros((0, len(self.classes)))
        features = self._normalized(features)
        values = torch.as_tensor(features.values, dtype=torch.float32)
        out = []
        for a in range(0, len(starts), 256):
            idx = torch.as_tensor(gather_windows(np.arange(features.rows), starts[a:a+256], self.context_frames,
                                                 self.context_step))
            windows = values[idx]   # (n, w, D)
            batch = windows.reshape(windows.shape[0], -1) if self.family == 'mlp' else windows.transpose(1, 2)
            out.append(self._forward(batch))
        return kept, np.concatenate(out, axis=0)

    def predict_sequence(self, features):
        """Chunks cover the matrix; the last one is aligned to its end and only its new columns are kept."""
        self._check_trained()
        if self.family != 'ast-seq':
            raise ConfigError('%s produces one output per window, use the per-frame strategy' % self.family)
        L = min(self.chunk_frames, PATCH*(features.rows // PATCH))
        if L == 0:
            return np.zeros(0), np.zeros((0, len(self.classes)))
        starts = list(range(0, features.rows - L + 1, L))
        if starts[-1] + L < features.rows:
            starts.append(features.rows - L)
        features = self._normalized(features)
        times, values, covered = [], [], -1
        cfg = self.feature_cfg
        for s in starts:
            x = torch.as_tensor(features.values[s:s+L].T[None], dtype=torch.float32)
            probs = self._forward(x)[0]
            first_rows = features.offset + s + np.arange(0, L, PATCH)
            centres = ((first_rows + 0.5*(PATCH - 1))*cfg.stride + 0.5*cfg.frame_len) / float(cfg.sample_rate)
            new = first_rows > covered
            times.append(centres[new])
            values.append(probs[new])
            covered = first_rows[-1] + PATCH - 1
        return np.concatenate(times), np.concatenate(values, axis=0)

    def attention_window(self, features, at=None):
        """(n_mel, frames) input of the window or chunk centred on `at` seconds, and its start time."""
        if self.family not in TRANSFORMERS:
            raise UnsupportedCombinationError('attention export needs a transformer model, got %s' % self.family)
        self._check_trained()
        cfg = self.feature_cfg
        L = min(self.chunk_frames if self.family == 'ast-seq' else self.context_frames, features.rows)
        if at is None:
            centre = features.rows // 2
        else:
            centre = int(round((at - 0.5*cfg.frame_len/float(cfg.sample_rate))/self.frame_stride_s)) - features.offset
        s = int(np.clip(centre - L//2, 0, features.rows - L))
        x = self._normalized(features).values[s:s+L].T
        return x, (features.offset + s)*cfg.stride / float(cfg.sample_rate)

    def loss(self, items):
        if self.family != 'ast-seq':
            return FrameClassifier.loss(self, items)
        data = self._dataset(items)
        if len(data) == 0:
            return float('nan')
        return evaluate_loss(self.net, data)

    def hyperparams(self):
        h = FrameClassifier.hyperparams(self)
        h['params'] = dict(h['params'], pretrained_weights=None)
        return h

    def blocks(self):
        blocks = { 'net.' + k: v for k, v in state_blocks(self.net).items() }
        if self.cmvn is not None:
            blocks.update({ 'cmvn.mean': self.cmvn.mean, 'cmvn.std': self.cmvn.std })
        return blocks

    def set_blocks(self, blocks, hyperparams):
        self.net = self.build_net()
        load_blocks(self.net, { k[4:]: v for k, v in blocks.items() if k.startswith('net.') })
        if 'cmvn.mean' in blocks:
            self.cmvn = CmvnStats(blocks['cmvn.mean'], blocks['cmvn.std'])
        self.trained = True
        return self


def make_classifier(family, classes, feature_cfg=None, params=None, seed=0):
    if family in SHALLOW:
        return ShallowClassifier(family, classes, feature_cfg, params, seed)
    if family in NEURAL:
        return NeuralClassifier(family, classes, feature_cfg, params, seed)
    raise ConfigError('unknown model family %r, expected one of %s' % (family, ', '.join(FAMILIES)))


def save_classifier(path, classifier):
    if not classifier.trained:
        raise UntrainedModelError('cannot save an untrained %s model' % classifier.family)
    write_model_container(path, classifier.family, classifier.hyperparams(), classifier.blocks())


def load_classifier(path):
    kind, hyperparams, blocks = read_model_container(path)
    feature_cfg = FeatureConfig(**hyperparams['features'])
    classifier = make_classifier(kind, hyperparams['classes'], feature_cfg, hyperparams['params'], hyperparams['seed'])
    classifier.fit_recording_ids = hyperparams.get('fit_recording_ids', [])
    classifier.best_epoch = hyperparams.get('best_epoch')
    return classifier.set_blocks(blocks, hyperparams)
