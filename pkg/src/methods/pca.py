import numpy as np
from scipy.linalg import eigh

from src.errors import ConfigError
from src.errors import ShapeError


class PcaModel:
    """
    Principal component projection fitted on training rows.

    components are the columns of a (D, k) matrix, eigenvalues are sorted
    non-increasing and refer to the population covariance.
    """

    # Python constructor
    def __init__(self, mean, components, eigenvalues, whiten=False):
        self.mean        = mean
        self.components  = components
        self.eigenvalues = eigenvalues
        self.whiten      = whiten

    @property
    def n_components(self):
        return self.components.shape[1]

    def _scale(self):
        return np.sqrt(np.maximum(self.eigenvalues, 1.0e-12))

    def transform(self, X):
        if X.shape[1] != self.mean.shape[0]:
            raise ShapeError('PCA fitted on %d columns, got %d' % (self.mean.shape[0], X.shape[1]))
        Z = (X - self.mean) @ self.components
        if self.whiten:
            Z = Z / self._scale()
        return Z

    def reconstruct(self, Z):
        if self.whiten:
            Z = Z * self._scale()
        return Z @ self.components.T + self.mean

    def blocks(self):
        return { 'mean': self.mean, 'components': self.components, 'eigenvalues': self.eigenvalues }


def n_components_for_fraction(eigenvalues, fraction):
    """Smallest k whose leading eigenvalues explain at least `fraction` of the variance."""
    if not (0.0 < fraction <= 1.0):
        raise ConfigError('explained variance fraction must lie in (0, 1], got %g' % fraction)
    total = np.sum(eigenvalues)
    if total <= 0.0:
        return 1
    ratios = np.cumsum(eigenvalues) / total
    k = int(np.searchsorted(ratios, fraction - 1.0e-12, side='left')) + 1
    return min(k, len(eigenvalues))


def fit_pca(X, n_components=None, fraction=None, whiten=False):
    """
    Fit on a (N, D) training matrix. Give either n_components or the explained
    variance fraction; with neither all D components are kept.
    """
    if X.ndim != 2 or X.shape[0] < 1:
        raise ShapeError('PCA needs a non-empty 2-D matrix')
    mean = np.mean(X, axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / X.shape[0]
    eigenvalues, vectors = eigh(cov)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = np.maximum(eigenvalues[order], 0.0)
    vectors = vectors[:, order]
    # sign convention: largest absolute entry of each component is positive
    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(vectors.shape[1])])
    vectors = vectors * np.where(signs == 0.0, 1.0, signs)
    if n_components is not None and fraction is not None:
        raise ConfigError('give either a component count or a variance fraction, not both')
    if fraction is not None:
        k = n_components_for_fraction(eigenvalues, fraction)
    elif n_components is not None:
        if not (1 <= n_components <= X.shape[1]):
            raise ConfigError('n_components must lie in [1, %d], got %d' % (X.shape[1], n_components))
        k = n_components
    else:
        k = X.shape[1]
    return PcaModel(mean, vectors[:, :k], eigenvalues[:k], whiten)


def apply_pca(model, f):
    """Project a FeatureMatrix."""
    return f.with_values(model.transform(f.values))
