"""Brute-force reference computations.

Everything here enumerates all rays explicitly and is only meant for small
trees.  The Gaussians come from the same keyed generator as the streaming
sampler, so results must agree bit for bit.
"""
from __future__ import annotations

import numpy as np

from . import rng
from . import sequences as seq
from .trees import DegreeProfile


def ray_sums(profile: DegreeProfile, model: seq.SequenceModel, depth: int, key: int,
             stub: float | None = None) -> np.ndarray:
    """Matrix ``X[r, k-1] = X_k(xi_r)`` for every ray ``r`` (one per leaf)."""
    sizes = profile.level_sizes(depth)
    off = np.concatenate([[0], np.cumsum(sizes)])
    nleaf = sizes[-1]
    alpha = model.values(depth)
    leaves = np.arange(nleaf)
    X = np.zeros((nleaf, depth))
    s = np.zeros(nleaf)
    # ancestor of each leaf at generation L: leaf // prod_{i > L} q_i
    below = np.ones(depth + 1, dtype=np.int64)
    for L in range(depth - 1, -1, -1):
        below[L] = below[L + 1] * profile.at(L + 1)
    for L in range(1, depth + 1):
        anc = leaves // below[L]
        if stub is None:
            z = rng.standard_normals(key, off[L] + anc)
        else:
            z = np.full(nleaf, float(stub))
        s = s + alpha[L - 1] * z
        X[:, L - 1] = s
    return X


def level_maxima(profile, model, depth, key, stub=None):
    """``(abs, signed)`` level maxima over all rays."""
    X = ray_sums(profile, model, depth, key, stub)
    if depth == 0:
        return np.zeros(0), np.zeros(0)
    return np.abs(X).max(axis=0), X.max(axis=0)


def tail_sup(profile, model, depth, key, N):
    """Per-depth truncated sup over rays and windows ``N <= n <= n+m <= d``."""
    X = ray_sums(profile, model, depth, key)
    P = np.concatenate([np.zeros((X.shape[0], 1)), X], axis=1)
    out = np.zeros(depth)
    for end in range(N, depth + 1):
        best = 0.0
        for start in range(N, end + 1):
            best = max(best, float(np.abs(P[:, end] - P[:, start - 1]).max()))
        out[end - 1] = best
    return np.maximum.accumulate(out)
