import logging

import numpy as np
from tqdm import tqdm

from src.errors import UntrainedModelError
from src.helpers import log_odds
from src.helpers import sigmoid
from src.linear_model import _check_inputs
from src.linear_model import _values
from src.methods.regression_tree import RegressionTree

logger = logging.getLogger(__name__)


class GbdtModel:
    """
    First-order gradient boosting on the logistic loss, one ensemble per class.

    F_c(x) = init_c + lr * sum_m tree_cm(x), p_c(x) = sigmoid(F_c(x)).
    Each tree is fitted to the negative gradient y - p of the current ensemble.
    """

    # Python constructor
    def __init__(self, n_trees=100, max_depth=3, learning_rate=0.1, min_samples_leaf=1, seed=0):
        self.n_trees          = n_trees
        self.max_depth        = max_depth
        self.learning_rate    = learning_rate
        self.min_samples_leaf = min_samples_leaf
        self.seed             = seed   # the exact greedy search is deterministic, kept for the container
        self.init             = None
        self.trees            = None   # trees[c][m]
        self.history          = []

    @property
    def trained(self):
        return self.init is not None

    def fit(self, X, Y, show_progress=False):
        X, Y = _check_inputs(X, Y)
        self.init = log_odds(np.mean(Y, axis=0))
        self.trees = [ [] for _ in range(Y.shape[1]) ]
        F = np.tile(self.init, (X.shape[0], 1))
        for m in tqdm(range(self.n_trees), 'Boosting', disable=(not show_progress)):
            residual = Y - sigmoid(F)
            for c in range(Y.shape[1]):
                tree = RegressionTree(self.max_depth, self.min_samples_leaf).fit(X, residual[:, c])
                self.trees[c].append(tree)
                F[:, c] += self.learning_rate*tree.predict(X)
            p = np.clip(sigmoid(F), 1.0e-12, 1.0 - 1.0e-12)
            self.history.append(float(-np.mean(Y*np.log(p) + (1.0-Y)*np.log(1.0-p))))
        return self

    def decision_function(self, X):
        if not self.trained:
            raise UntrainedModelError('boosted trees have not been trained')
        X = _values(X)
        F = np.tile(self.init, (X.shape[0], 1))
        for c, trees in enumerate(self.trees):
            for tree in trees:
                F[:, c] += self.learning_rate*tree.predict(X)
        return F

    def predict(self, X):
        return sigmoid(self.decision_function(X))

    def hyperparams(self):
        return { 'n_trees': self.n_trees, 'max_depth': self.max_depth, 'learning_rate': self.learning_rate,
                 'min_samples_leaf': self.min_samples_leaf, 'seed': self.seed }

    def blocks(self):
        """All trees as one node table; tree_offsets[c, m] is the row of the root of tree m of class c."""
        arrays, offsets, row = [], [], 0
        for trees in self.trees:
            offsets.append([])
            for tree in trees:
                nodes = tree.to_array()
                offsets[-1].append(row)
                arrays.append(nodes)
                row += nodes.shape[0]
        nodes = np.concatenate(arrays, axis=0) if arrays else np.zeros((0, 5))
        return { 'init': self.init, 'tree_offsets': np.array(offsets, dtype=np.float64).reshape(len(self.trees), -1),
                 'nodes': nodes }

    def set_blocks(self, blocks):
        self.init = blocks['init']
        offsets = blocks['tree_offsets'].astype(np.int64)
        nodes = blocks['nodes']
        ends = np.append(offsets.reshape(-1)[1:], nodes.shape[0]).reshape(offsets.shape) if offsets.size else offsets
        self.trees = [ [ RegressionTree.from_array(nodes[a:b], self.max_depth) for a, b in zip(offsets[c], ends[c]) ]
                       for c in range(offsets.shape[0]) ]
        return self


def train_gbdt(X, Y, n_trees=100, max_depth=3, lr_shrinkage=0.1, seed=0, min_samples_leaf=1):
    return GbdtModel(n_trees, max_depth, lr_shrinkage, min_samples_leaf, seed).fit(X, Y)


def predict_gbdt(model, X):
    return model.predict(X)
