import logging

import numpy as np

from src.errors import ConfigError
from src.errors import ShapeError
from src.errors import UntrainedModelError
from src.helpers import bce_with_logits
from src.helpers import check_finite
from src.helpers import sigmoid

logger = logging.getLogger(__name__)


class LinearModel:
    """
    C independent binary heads sharing the input, scores = X W + b.

    kind ... 'logreg' (outputs are probabilities) or 'svm' (outputs are
             uncalibrated margins)
    """

    # Python constructor
    def __init__(self, n_features, n_classes, l2=0.0, kind='logreg'):
        self.weights = np.zeros((n_features, n_classes))
        self.bias    = np.zeros(n_classes)
        self.l2      = l2
        self.kind    = kind
        self.trained = False
        self.history = []

    @property
    def n_features(self):
        return self.weights.shape[0]

    @property
    def n_classes(self):
        return self.weights.shape[1]

    def decision_function(self, X):
        X = _values(X)
        if X.shape[1] != self.n_features:
            raise ShapeError('model expects %d features, got %d' % (self.n_features, X.shape[1]))
        return X @ self.weights + self.bias

    def blocks(self):
        return { 'weights': self.weights, 'bias': self.bias }

    def set_blocks(self, blocks):
        self.weights = blocks['weights']
        self.bias = blocks['bias']
        self.trained = True
        return self


def _values(X):
    return X.values if hasattr(X, 'values') and not isinstance(X, np.ndarray) else np.asarray(X, dtype=np.float64)


def _check_inputs(X, Y):
    X, Y = _values(X), _values(Y).astype(np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] != Y.shape[0]:
        raise ShapeError('%d feature rows but %d label rows' % (X.shape[0], Y.shape[0]))
    check_finite(X, 'training features')
    return X, Y


def logreg_loss_and_gradient(W, b, X, Y, l2=0.0):
    """Per-class mean BCE + l2 |w_c|^2 and its gradients with respect to W and b."""
    logits = X @ W + b
    loss = bce_with_logits(logits, Y) + l2*np.sum(W**2, axis=0)
    residual = (sigmoid(logits) - Y) / X.shape[0]
    return loss, X.T @ residual + 2.0*l2*W, np.sum(residual, axis=0)


def train_logreg(X, Y, l2=0.0, epochs=200, lr=1.0, seed=0, batch_size=None, tol=1.0e-10):
    """
    Logistic regression, one head per column of Y.

    batch_size None runs full-batch gradient descent with per-class Armijo
    backtracking, so each head's loss never increases. Otherwise epoch-shuffled
    mini-batches with the fixed step lr.
    """
    X, Y = _check_inputs(X, Y)
    model = LinearModel(X.shape[1], Y.shape[1], l2, 'logreg')
    if batch_size is None:
        step = np.full(Y.shape[1], float(lr))
        loss, gW, gb = logreg_loss_and_gradient(model.weights, model.bias, X, Y, l2)
        model.history.append(float(np.mean(loss)))
        for epoch in range(epochs):
            sq_norm = np.sum(gW**2, axis=0) + gb**2
            pending = sq_norm > tol
            if not np.any(pending):
                break
            trial_step = np.where(pending, step, 0.0)
            for _ in range(50):
                W = model.weights - trial_step*gW
                b = model.bias - trial_step*gb
                trial_loss = bce_with_logits(X @ W + b, Y) + l2*np.sum(W**2, axis=0)
                ok = trial_loss <= loss - 0.5*trial_step*sq_norm
                if np.all(ok | ~pending):
                    break
                trial_step = np.where(ok | ~pending, trial_step, 0.5*trial_step)
            accept = pending & ok
            model.weights = np.where(accept, W, model.weights)
            model.bias = np.where(accept, b, model.bias)
            step = np.where(accept, 2.0*trial_step, trial_step)   # let the step grow back after success
            loss, gW, gb = logreg_loss_and_gradient(model.weights, model.bias, X, Y, l2)
            model.history.append(float(np.mean(loss)))
    else:
        rng = np.random.default_rng(seed)
        for epoch in range(epochs):
            order = rng.permutation(X.shape[0])
            for k in range(0, X.shape[0], batch_size):
                rows = order[k:k+batch_size]
                _, gW, gb = logreg_loss_and_gradient(model.weights, model.bias, X[rows], Y[rows], l2)
                model.weights -= lr*gW
                model.bias -= lr*gb
            loss, _, _ = logreg_loss_and_gradient(model.weights, model.bias, X, Y, l2)
            model.history.append(float(np.mean(loss)))
    check_finite(model.weights, 'logistic regression weights')
    model.trained = True
    logger.info('logistic regression: %d features, %d heads, final loss %.6f', X.shape[1], Y.shape[1], model.history[-1])
    return model


def train_linear_svm(Z, Y, lam=1.0e-3, epochs=20, seed=0, batch_size=1):
    """
    Pegasos subgradient descent on hinge loss + lam |w|^2 for every head at once.

    The bias is the weight of an appended constant feature. Step 1/(lam t),
    followed by projection onto the ball of radius 1/sqrt(lam).
    """
    if lam <= 0.0:
        raise ConfigError('SVM regularisation must be positive, got %g' % lam)
    Z, Y = _check_inputs(Z, Y)
    N, D = Z.shape
    Za = np.hstack([Z, np.ones((N, 1))])
    signs = 2.0*Y - 1.0
    W = np.zeros((D + 1, Y.shape[1]))
    radius = 1.0/np.sqrt(lam)
    rng = np.random.default_rng(seed)
    t = 0
    model = LinearModel(D, Y.shape[1], lam, 'svm')
    for epoch in range(epochs):
        order = rng.permutation(N)
        for k in range(0, N, batch_size):
            t += 1
            rows = order[k:k+batch_size]
            eta = 1.0/(lam*t)
            margins = signs[rows]*(Za[rows] @ W)
            violators = (margins < 1.0)*signs[rows]
            W = (1.0 - eta*lam)*W + (eta/len(rows))*(Za[rows].T @ violators)
            norms = np.sqrt(np.sum(W**2, axis=0))
            W = W*np.minimum(1.0, radius/np.maximum(norms, 1.0e-300))
        scores = Za @ W
        model.history.append(float(np.mean(np.maximum(0.0, 1.0 - signs*scores)) + lam*np.mean(np.sum(W**2, axis=0))))
    check_finite(W, 'SVM weights')
    model.weights = W[:-1]
    model.bias = W[-1]
    model.trained = True
    return model


def predict_linear(model, X):
    """Per-class sigmoid(x w_c + b_c), shape (rows, C)."""
    if not model.trained:
        raise UntrainedModelError('linear model has not been trained')
    return sigmoid(model.decision_function(X))
