"""Independent brute-force reference implementations used by the tests.

These deliberately avoid the library's linear-algebra paths (loops, explicit
inverses, lstsq on augmented designs, symmetric eigensolver) so that
agreement with the package is a meaningful check.
"""

import numpy as np


def value_oracle(latents, m, n, lam):
    """Normal-equation solve for one pair's value map, via explicit inverse."""
    zm = latents[:, m, :]
    zn = latents[:, n, :]
    e = zm.shape[1]
    g_mn = sum(np.outer(zm[t], zn[t]) for t in range(zm.shape[0]))
    g_nn = sum(np.outer(zn[t], zn[t]) for t in range(zn.shape[0]))
    return g_mn @ np.linalg.inv(g_nn + lam * np.eye(e))


def attention_oracle(latents, targets, m, n, lam, use_intercept=True):
    """Affine ridge fit via lstsq on an augmented design matrix."""
    zn = latents[:, n, :]
    t, e = zn.shape
    y = targets[m, n, :]
    if use_intercept:
        design = np.hstack([zn, np.ones((t, 1))])
        aug = np.vstack([design, np.sqrt(lam) * np.eye(e + 1)[:e]])
    else:
        design = zn
        aug = np.vstack([design, np.sqrt(lam) * np.eye(e)])
    rhs = np.concatenate([y, np.zeros(e)])
    theta, *_ = np.linalg.lstsq(aug, rhs, rcond=None)
    if use_intercept:
        return theta[:e], theta[e]
    return theta, 0.0


def singular_values_by_eigh(mat):
    """Singular values through the dense symmetric eigensolver."""
    vals = np.linalg.eigvalsh(mat @ mat.T)
    return np.sqrt(np.clip(vals[::-1], 0.0, None))
