"""
Explicit finite-dimensional kernel feature maps.

Nystroem: z(x) = k(x, B) K_BB^(-1/2) with B uniformly sampled landmarks.
Random kitchen sinks: z(x) = sqrt(2/D) cos(x Omega + phi) approximating the RBF kernel.
"""

import numpy as np
from scipy.linalg import eigh
from sklearn.metrics.pairwise import polynomial_kernel
from sklearn.metrics.pairwise import rbf_kernel

from src.errors import ConfigError
from src.errors import ShapeError
from src.errors import UnsupportedCombinationError

EIGENVALUE_FLOOR = 1.0e-10


def kernel_matrix(X, Y, basis='rbf', gamma=1.0, degree=3, coef0=1.0):
    if basis == 'rbf':
        return rbf_kernel(X, Y, gamma=gamma)
    if basis == 'polynomial':
        return polynomial_kernel(X, Y, degree=degree, gamma=gamma, coef0=coef0)
    raise ConfigError('unknown kernel basis %r' % basis)


def default_n_components(n_rows):
    return max(1, min(1024, n_rows // 10))


class Nystroem:

    kind = 'nystroem'

    # Python constructor
    def __init__(self, basis='rbf', gamma=1.0, n_components=None, degree=3, coef0=1.0, seed=0):
        self.basis        = basis
        self.gamma        = gamma
        self.n_components = n_components
        self.degree       = degree
        self.coef0        = coef0
        self.seed         = seed
        self.landmarks    = None
        self.normalization = None

    def fit(self, X):
        N = X.shape[0]
        m = default_n_components(N) if self.n_components is None else self.n_components
        if m > N:
            raise ConfigError('Nystroem needs m <= N, got m=%d for %d training rows' % (m, N))
        # landmarks are a prefix of one permutation, so smaller m nests in larger m
        order = np.random.default_rng(self.seed).permutation(N)
        self.landmarks = X[np.sort(order[:m])]
        K_bb = kernel_matrix(self.landmarks, self.landmarks, self.basis, self.gamma, self.degree, self.coef0)
        eigenvalues, vectors = eigh(K_bb)
        eigenvalues = np.maximum(eigenvalues, EIGENVALUE_FLOOR)
        self.normalization = (vectors / np.sqrt(eigenvalues)) @ vectors.T
        self.n_components = m
        return self

    def transform(self, X):
        if self.landmarks is None:
            raise ShapeError('Nystroem map used before fit')
        K_nb = kernel_matrix(X, self.landmarks, self.basis, self.gamma, self.degree, self.coef0)
        return K_nb @ self.normalization

    def hyperparams(self):
        return { 'kind': self.kind, 'basis': self.basis, 'gamma': self.gamma, 'n_components': self.n_components,
                 'degree': self.degree, 'coef0': self.coef0, 'seed': self.seed }

    def blocks(self):
        return { 'landmarks': self.landmarks, 'normalization': self.normalization }

    def set_blocks(self, blocks):
        self.landmarks = blocks['landmarks']
        self.normalization = blocks['normalization']
        return self


class RandomKitchenSinks:

    kind = 'random-kitchen-sinks'

    # Python constructor
    def __init__(self, basis='rbf', gamma=1.0, n_components=1024, seed=0, **kwargs):
        if basis != 'rbf':
            raise UnsupportedCombinationError('random kitchen sinks approximate the RBF kernel only, got basis %r' % basis)
        self.basis        = basis
        self.gamma        = gamma
        self.n_components = 1024 if n_components is None else n_components
        self.seed         = seed
        self.omega        = None
        self.phase        = None

    def fit(self, X):
        rng = np.random.default_rng(self.seed)
        D = X.shape[1]
        # exp(-gamma |x-y|^2) has spectral density N(0, 2 gamma I)
        self.omega = rng.normal(0.0, np.sqrt(2.0*self.gamma), size=(D, self.n_components))
        self.phase = rng.uniform(0.0, 2.0*np.pi, size=self.n_components)
        return self

    def transform(self, X):
        if self.omega is None:
            raise ShapeError('random kitchen sinks map used before fit')
        return np.sqrt(2.0/self.n_components) * np.cos(X @ self.omega + self.phase)

    def hyperparams(self):
        return { 'kind': self.kind, 'basis': self.basis, 'gamma': self.gamma,
                 'n_components': self.n_components, 'seed': self.seed }

    def blocks(self):
        return { 'omega': self.omega, 'phase': self.phase }

    def set_blocks(self, blocks):
        self.omega = blocks['omega']
        self.phase = blocks['phase']
        return self


def make_kernel_approximator(kind='nystroem', **kwargs):
    if kind == 'nystroem':
        return Nystroem(**kwargs)
    if kind in ('random-kitchen-sinks', 'rks'):
        return RandomKitchenSinks(**kwargs)
    raise ConfigError('unknown kernel approximation %r' % kind)


def fit_kernel_approx(X_train, kind='nystroem', **kwargs):
    return make_kernel_approximator(kind, **kwargs).fit(X_train)
