import numpy as np
from scipy.optimize import minimize
from sklearn.isotonic import isotonic_regression

from src.errors import ConfigError
from src.errors import DegenerateCalibrationError
from src.helpers import sigmoid


def _check_labels(labels):
    labels = np.asarray(labels, dtype=np.float64)
    if np.all(labels == labels[0]):
        raise DegenerateCalibrationError('calibration labels contain a single class only')
    return labels


class PlattCalibrator:
    """
    p = sigmoid(A s + B), fitted by minimising binary cross-entropy against
    Platt's smoothed targets. A is kept non-negative so ranking is preserved.
    """

    kind = 'platt'

    def __init__(self, A=1.0, B=0.0):
        self.A = A
        self.B = B

    def fit(self, scores, labels):
        labels = _check_labels(labels)
        scores = np.asarray(scores, dtype=np.float64)
        n_pos = np.sum(labels)
        n_neg = labels.shape[0] - n_pos
        targets = np.where(labels > 0.5, (n_pos + 1.0)/(n_pos + 2.0), 1.0/(n_neg + 2.0))

        def objective(params):
            z = params[0]*scores + params[1]
            loss = np.logaddexp(0.0, z) - targets*z
            residual = sigmoid(z) - targets
            return np.mean(loss), np.array([np.mean(residual*scores), np.mean(residual)])

        prior = np.log((n_pos + 1.0)/(n_neg + 1.0))
        res = minimize(objective, np.array([1.0, prior]), jac=True, method='L-BFGS-B',
                       bounds=[(0.0, None), (None, None)])
        self.A, self.B = float(res.x[0]), float(res.x[1])
        return self

    def __call__(self, scores):
        return sigmoid(self.A*np.asarray(scores) + self.B)

    def blocks(self):
        return { 'platt': np.array([self.A, self.B]) }

    def set_blocks(self, blocks):
        self.A, self.B = (float(v) for v in blocks['platt'])
        return self


class IsotonicCalibrator:
    """
    Non-decreasing step function fitted by pool-adjacent-violators. Equal
    scores are pooled first; prediction takes the value of the last breakpoint
    at or below the score and is clamped at both ends.
    """

    kind = 'isotonic'

    def __init__(self, breakpoints=None, values=None):
        self.breakpoints = breakpoints
        self.values      = values

    def fit(self, scores, labels):
        labels = _check_labels(labels)
        scores = np.asarray(scores, dtype=np.float64)
        unique, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
        means = np.bincount(inverse, weights=labels) / counts
        self.breakpoints = unique
        self.values = np.clip(isotonic_regression(means, sample_weight=counts.astype(np.float64), increasing=True), 0.0, 1.0)
        return self

    def __call__(self, scores):
        scores = np.asarray(scores, dtype=np.float64)
        idx = np.searchsorted(self.breakpoints, scores, side='right') - 1
        return self.values[np.clip(idx, 0, len(self.values) - 1)]

    def blocks(self):
        return { 'breakpoints': self.breakpoints, 'values': self.values }

    def set_blocks(self, blocks):
        self.breakpoints = blocks['breakpoints']
        self.values = blocks['values']
        return self


def make_calibrator(kind):
    if kind == 'platt':
        return PlattCalibrator()
    if kind == 'isotonic':
        return IsotonicCalibrator()
    raise ConfigError('unknown calibration %r' % kind)


def fit_calibrator(scores, labels, kind='platt'):
    return make_calibrator(kind).fit(scores, labels)


def calibrate(calibrator, scores):
    return calibrator(scores)
