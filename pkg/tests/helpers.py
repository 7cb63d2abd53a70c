"""Shared builders and oracles for the test suite."""

import numpy as np

from hgprompt import LabeledFeatures, NormalizedGradientSet, SimplexWeights
from hgprompt.bundle import PromptBundle


def random_sources(rng, m=3, n=40, h=5, c=3):
    labels = np.concatenate([np.arange(c), rng.integers(0, c, n - c)]).astype(np.int64)
    return [
        LabeledFeatures(rng.standard_normal((n, h)), labels, c)
        for _ in range(m)
    ], labels


def random_unit_directions(rng, m=3, p=4, d=6):
    raw = rng.standard_normal((m, p, d))
    norms = np.linalg.norm(raw.reshape(m, -1), axis=1)
    return NormalizedGradientSet(raw / norms[:, None, None])


def random_simplex(rng, m):
    return SimplexWeights(rng.dirichlet(np.ones(m)))


def central_difference(f, x, eps=1e-6):
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for k in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[k] += eps
        xm[k] -= eps
        grad[k] = (f(xp) - f(xm)) / (2 * eps)
    return grad


def informative_vs_noise_bundle(seed, n=300, h=8, c=3, p=4, d=6,
                                coherent=True, noise_scale=2.0, within=0.7):
    """M=2 bundle: source 0 label-informative, source 1 pure noise."""
    rng = np.random.default_rng([seed, 77])
    labels = np.concatenate([np.arange(c), rng.integers(0, c, n - c)]).astype(np.int64)
    means = 2.0 * rng.standard_normal((c, h))
    f_info = means[labels] + within * rng.standard_normal((n, h))
    f_noise = noise_scale * rng.standard_normal((n, h))
    g0 = rng.standard_normal((p, d))
    if coherent:
        g1 = g0 + 0.3 * rng.standard_normal((p, d))
    else:
        g1 = rng.standard_normal((p, d))
    return PromptBundle(features=[f_info, f_noise], gradients=[g0, g1],
                        labels=labels, class_count=c)
