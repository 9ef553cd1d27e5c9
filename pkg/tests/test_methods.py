import sys
sys.path.append('./')

import numpy as np
import unittest

from scipy.stats import ortho_group
from sklearn.metrics.pairwise import rbf_kernel

from src.errors import ConfigError
from src.errors import DegenerateCalibrationError
from src.errors import UnsupportedCombinationError
from src.methods.calibration import IsotonicCalibrator
from src.methods.calibration import PlattCalibrator
from src.methods.calibration import fit_calibrator
from src.methods.kernel_approximation import Nystroem
from src.methods.kernel_approximation import fit_kernel_approx
from src.methods.kernel_approximation import make_kernel_approximator
from src.methods.pca import fit_pca
from src.methods.pca import n_components_for_fraction
from src.methods.regression_tree import RegressionTree


def exact_covariance_sample(eigenvalues, n_rows, seed):
    """Rows with zero mean and population covariance Q diag(eigenvalues) Q^T."""
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n_rows, len(eigenvalues)))
    A = A - np.mean(A, axis=0)
    U, _, _ = np.linalg.svd(A, full_matrices=False)
    Z = U * np.sqrt(n_rows)
    Q = ortho_group.rvs(len(eigenvalues), random_state=seed)
    return (Z * np.sqrt(eigenvalues)) @ Q.T, Q


def pava(values, weights):
    """Plain pool-adjacent-violators used as reference."""
    blocks = []   # [mean, weight, count]
    for v, w in zip(values, weights):
        blocks.append([v, w, 1])
        while len(blocks) > 1 and blocks[-2][0] > blocks[-1][0]:
            v2, w2, n2 = blocks.pop()
            v1, w1, n1 = blocks.pop()
            blocks.append([(v1*w1 + v2*w2)/(w1 + w2), w1 + w2, n1 + n2])
    return np.concatenate([ np.full(n, v) for v, _, n in blocks ])


class TestMethods(unittest.TestCase):
    """
    Test PCA, kernel feature maps, score calibration and regression trees.
    """

    def test_pca_fraction_and_reconstruction(self):
        eigenvalues = np.array([ 8.0, 1.0, 0.5, 0.5 ])
        X, Q = exact_covariance_sample(eigenvalues, 400, 3)
        self.assertEqual(n_components_for_fraction(eigenvalues, 0.95), 3)
        self.assertEqual(n_components_for_fraction(eigenvalues, 0.9), 2)
        self.assertEqual(n_components_for_fraction(eigenvalues, 1.0), 4)
        model = fit_pca(X, fraction=0.95)
        self.assertEqual(model.n_components, 3)
        self.assertLess(np.max(np.abs(model.eigenvalues - eigenvalues[:3])), 1.0e-9)
        self.assertLess(np.max(np.abs(model.components.T @ model.components - np.eye(3))), 1.0e-9)
        # leading direction agrees with Q up to sign
        self.assertAlmostEqual(abs(model.components[:, 0] @ Q[:, 0]), 1.0, places=9)
        residual = X - model.reconstruct(model.transform(X))
        self.assertAlmostEqual(np.mean(np.sum(residual**2, axis=1)), 0.5, places=9)
        full = fit_pca(X)
        self.assertLess(np.max(np.abs(full.reconstruct(full.transform(X)) - X)), 1.0e-9)
        with self.assertRaises(ConfigError):
            fit_pca(X, n_components=2, fraction=0.9)

    def test_pca_whitening(self):
        X, _ = exact_covariance_sample(np.array([ 4.0, 2.0, 1.0 ]), 300, 5)
        model = fit_pca(X, n_components=3, whiten=True)
        Z = model.transform(X)
        self.assertLess(np.max(np.abs(Z.T @ Z / Z.shape[0] - np.eye(3))), 1.0e-9)
        self.assertLess(np.max(np.abs(model.reconstruct(Z) - X)), 1.0e-9)

    def test_nystroem_with_all_landmarks_is_exact(self):
        X = np.random.default_rng(0).normal(size=(30, 5)) * 2.0
        nys = Nystroem(gamma=0.2, n_components=30, seed=1).fit(X)
        Z = nys.transform(X)
        self.assertLess(np.max(np.abs(Z @ Z.T - rbf_kernel(X, X, gamma=0.2))), 1.0e-6)
        # landmark sets nest as m grows
        small = Nystroem(gamma=0.2, n_components=10, seed=1).fit(X)
        rows = { tuple(r) for r in nys.landmarks }
        self.assertTrue(all(tuple(r) in rows for r in small.landmarks))
        with self.assertRaises(ConfigError):
            Nystroem(n_components=31).fit(X)

    def test_random_kitchen_sinks(self):
        X = np.random.default_rng(2).normal(size=(20, 3))
        rks = fit_kernel_approx(X, 'random-kitchen-sinks', gamma=0.5, n_components=4096, seed=4)
        Z = rks.transform(X)
        error = np.abs(Z @ Z.T - rbf_kernel(X, X, gamma=0.5))
        self.assertLess(np.mean(error), 0.02)
        self.assertLess(np.max(error), 0.1)
        with self.assertRaises(UnsupportedCombinationError):
            make_kernel_approximator('rks', basis='polynomial')
        with self.assertRaises(ConfigError):
            make_kernel_approximator('fourier')

    def test_isotonic_matches_pava(self):
        rng = np.random.default_rng(6)
        scores = np.round(rng.normal(size=200), 1)
        labels = (rng.uniform(size=200) < 1.0/(1.0 + np.exp(-2.0*scores))).astype(float)
        cal = IsotonicCalibrator().fit(scores, labels)
        unique = np.unique(scores)
        means = np.array([ np.mean(labels[scores == u]) for u in unique ])
        counts = np.array([ np.sum(scores == u) for u in unique ], dtype=float)
        self.assertLess(np.max(np.abs(cal(unique) - pava(means, counts))), 1.0e-9)
        grid = np.linspace(-5.0, 5.0, 101)
        self.assertTrue(np.all(np.diff(cal(grid)) >= 0.0))
        self.assertEqual(cal(-100.0), cal(unique[0]))
        self.assertEqual(cal(100.0), cal(unique[-1]))

    def test_platt_preserves_ranking(self):
        rng = np.random.default_rng(8)
        scores = rng.normal(size=300)
        labels = (scores + 0.5*rng.normal(size=300) > 0.0).astype(float)
        cal = fit_calibrator(scores, labels, 'platt')
        self.assertGreater(cal.A, 0.0)
        order = np.argsort(scores)
        self.assertTrue(np.all(np.diff(cal(scores[order])) >= 0.0))
        restored = PlattCalibrator().set_blocks(cal.blocks())
        self.assertEqual(restored(0.3), cal(0.3))
        with self.assertRaises(DegenerateCalibrationError):
            fit_calibrator(scores, np.ones(300), 'isotonic')
        with self.assertRaises(ConfigError):
            fit_calibrator(scores, labels, 'beta')

    def test_regression_tree(self):
        x = np.linspace(0.0, 1.0, 40)
        X = np.column_stack([ x, x ])
        r = np.where(x < 0.5, -1.0, 2.0)
        tree = RegressionTree(max_depth=1).fit(X, r)
        self.assertEqual(tree.feature[0], 0)   # tie between equal columns
        self.assertLess(np.max(np.abs(tree.predict(X) - r)), 1.0e-12)
        self.assertEqual(tree.depth(), 1)
        rng = np.random.default_rng(9)
        X = rng.normal(size=(200, 4))
        r = np.sin(3.0*X[:, 0]) + X[:, 2]**2
        tree = RegressionTree(max_depth=3).fit(X, r)
        self.assertLessEqual(tree.depth(), 3)
        self.assertLess(np.mean((tree.predict(X) - r)**2), np.var(r))
        restored = RegressionTree.from_array(tree.to_array(), 3)
        self.assertTrue(np.array_equal(restored.predict(X), tree.predict(X)))
        constant = RegressionTree(max_depth=3).fit(X, np.ones(200))
        self.assertEqual(constant.n_nodes, 1)


if __name__ == '__main__':
    suite = unittest.TestSuite()
    suite.addTest(unittest.TestLoader().loadTestsFromTestCase(TestMethods))
    result = unittest.TextTestRunner(verbosity=2).run(suite)
    sys.exit(not result.wasSuccessful())
