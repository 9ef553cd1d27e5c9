import hashlib
import os

import numpy as np
from scipy.special import expit

from src.errors import NonFiniteError


def sigmoid(x):
    return expit(x)

def log_odds(p, eps=1.0e-6):
    p = np.clip(p, eps, 1.0 - eps)
    return np.log(p / (1.0 - p))

def binary_cross_entropy(probs, targets, eps=1.0e-12):
    """Mean BCE per column for probability matrices of shape (n, C)."""
    probs = np.clip(probs, eps, 1.0 - eps)
    return -np.mean(targets*np.log(probs) + (1.0-targets)*np.log(1.0-probs), axis=0)

def bce_with_logits(logits, targets):
    """Numerically stable mean BCE per column, computed from logits."""
    # log(1+exp(-|z|)) + max(z,0) - z*y
    loss = np.logaddexp(0.0, -np.abs(logits)) + np.maximum(logits, 0.0) - logits*targets
    return np.mean(loss, axis=0)

def hinge_loss(scores, targets):
    """Mean hinge loss per column for {0,1} targets."""
    signs = 2.0*targets - 1.0
    return np.mean(np.maximum(0.0, 1.0 - signs*scores), axis=0)

def check_finite(x, what='features'):
    if not np.all(np.isfinite(x)):
        raise NonFiniteError('non-finite values in %s' % what)
    return x

def derive_seed(root, *names):
    """Deterministically split a root seed into a 32 bit seed per named component."""
    text = ':'.join([str(int(root))] + [str(n) for n in names])
    return int.from_bytes(hashlib.sha256(text.encode('utf-8')).digest()[:4], 'little')

def max_workers():
    """Thread cap from TRUNKLINE_THREADS, defaults to the CPU count."""
    value = os.environ.get('TRUNKLINE_THREADS')
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            pass
    return os.cpu_count() or 1
