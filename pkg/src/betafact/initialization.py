"""Initial states for the factor models.

All random draws use ``numpy.random.default_rng(seed)`` (PCG64), so a seed
reproduces the same state on every platform.
"""

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .io import read_matrix
from .models import ModelKind, Theta, check_constraints

LABEL_SMOOTHING = 0.05


class InitMethod(str, enum.Enum):
    KMEANS = "kmeans"
    RANDOM = "random"
    FILE = "file"


@dataclass(frozen=True)
class InitSpec:
    method: InitMethod = InitMethod.KMEANS
    seed: int = 0
    kmeans_iters: int = 100
    m_path: Optional[str] = None
    a_path: Optional[str] = None
    b_path: Optional[str] = None
    b_scale: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "method", InitMethod(self.method))
        if self.method is InitMethod.KMEANS and self.kmeans_iters < 1:
            raise ValueError("kmeans_iters must be >= 1")
        if self.method is InitMethod.FILE and self.m_path is None:
            raise ValueError("file initialization needs at least a factor matrix path")


def _kmeanspp(points, K, rng):
    """k-means++ seeding on the rows of ``points``; returns row indices."""
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = np.sum((points - points[chosen[0]]) ** 2, axis=1)
    for _ in range(1, K):
        total = d2.sum()
        if total > 0:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        else:
            # all remaining points coincide with a chosen centre
            idx = int(next(i for i in range(n) if i not in chosen))
        chosen.append(idx)
        d2 = np.minimum(d2, np.sum((points - points[idx]) ** 2, axis=1))
    return chosen


def kmeans(points, K, seed=0, n_iter=100, tol=1e-9):
    """Lloyd's algorithm with k-means++ seeding on the rows of ``points``.

    An empty cluster is re-seeded at the point farthest from its current
    centre (lowest index on ties). Stops when no centre moves more than
    ``tol`` (squared Euclidean) or after ``n_iter`` iterations.

    Returns ``(centres, labels)``.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if not 1 <= K <= n:
        raise ValueError(f"need 1 <= K <= {n} points, got K={K}")
    rng = np.random.default_rng(seed)
    centres = points[_kmeanspp(points, K, rng)].copy()
    labels = np.zeros(n, dtype=np.intp)
    for _ in range(n_iter):
        d2 = (
            np.sum(points**2, axis=1)[:, None]
            - 2.0 * points @ centres.T
            + np.sum(centres**2, axis=1)[None, :]
        )
        labels = np.argmin(d2, axis=1)
        new = centres.copy()
        for k in range(K):
            members = labels == k
            if members.any():
                new[k] = points[members].mean(axis=0)
            else:
                own = np.sum((points - centres[labels]) ** 2, axis=1)
                far = int(np.argmax(own))
                new[k] = points[far]
                labels[far] = k
        shift = np.max(np.sum((new - centres) ** 2, axis=1))
        centres = new
        if shift <= tol:
            break
    return centres, labels


def init_factors_kmeans(Y, K, seed=0, n_iter=100):
    """Factor TACs as k-means centroids of the voxel TACs (columns of Y).

    Returns ``(M, labels)`` with M of shape ``(L, K)``.
    """
    Y = np.asarray(Y, dtype=np.float64)
    if K > Y.shape[1]:
        raise ValueError(f"K={K} exceeds the number of voxels {Y.shape[1]}")
    centres, labels = kmeans(Y.T, K, seed=seed, n_iter=n_iter)
    return np.maximum(centres.T, 0.0), labels


def proportions_from_labels(labels, K, smoothing=LABEL_SMOOTHING):
    """One-hot cluster memberships mixed with a uniform vector.

    Keeps every entry positive so multiplicative updates can move it.
    """
    labels = np.asarray(labels)
    A = np.full((K, labels.size), smoothing / K)
    A[labels, np.arange(labels.size)] += 1.0 - smoothing
    return A


def init_proportions_random(K, N, seed=0, stochastic=True):
    rng = np.random.default_rng(seed)
    A = rng.uniform(np.finfo(float).tiny, 1.0, size=(K, N))
    if stochastic:
        A /= A.sum(axis=0)
    return A


def init_internal_random(Nv, N, seed=0, scale=0.1):
    if not scale > 0:
        raise ValueError(f"scale must be > 0, got {scale}")
    return np.random.default_rng(seed).uniform(0.0, scale, size=(Nv, N))


def _child_seed(ss):
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _random_factors(Y, K, rng):
    cols = rng.choice(Y.shape[1], size=K, replace=False)
    M = Y[:, np.sort(cols)].copy()
    floor = 1e-3 * max(float(Y.max()), 1e-12)
    return np.maximum(M, floor)


def initialize(Y, spec, K, init, V=None, sbf_pinned=None):
    """Build a feasible initial :class:`Theta` for ``spec``.

    ``sbf_pinned`` defaults to True for SLMM (the nominal SBF stays fixed)
    and False otherwise.
    """
    Y = np.asarray(Y, dtype=np.float64)
    L, N = Y.shape
    # independent sub-streams so that e.g. changing K-means settings
    # does not shift the proportion draws
    s_m, s_a, s_b = np.random.SeedSequence(init.seed).spawn(3)
    labels = None
    if init.method is InitMethod.FILE:
        M = read_matrix(init.m_path)
    elif init.method is InitMethod.KMEANS:
        M, labels = init_factors_kmeans(Y, K, seed=_child_seed(s_m), n_iter=init.kmeans_iters)
    else:
        M = _random_factors(Y, K, np.random.default_rng(_child_seed(s_m)))
    if M.shape != (L, K):
        raise ValueError(f"factor matrix has shape {M.shape}, expected {(L, K)}")

    stochastic = spec.kind is not ModelKind.NMF
    if init.a_path is not None:
        A = read_matrix(init.a_path)
    elif labels is not None:
        A = proportions_from_labels(labels, K)
    else:
        A = init_proportions_random(K, N, seed=_child_seed(s_a), stochastic=stochastic)
    if A.shape != (K, N):
        raise ValueError(f"proportion matrix has shape {A.shape}, expected {(K, N)}")

    B = None
    if spec.kind is ModelKind.SLMM:
        if V is None:
            raise ValueError("SLMM initialization needs the variability basis V")
        V = np.asarray(V, dtype=np.float64)
        if init.b_path is not None:
            B = read_matrix(init.b_path)
        else:
            B = init_internal_random(V.shape[1], N, seed=_child_seed(s_b), scale=init.b_scale)
    else:
        V = None
    if sbf_pinned is None:
        sbf_pinned = spec.kind is ModelKind.SLMM
    theta = Theta(M=M, A=A, V=V, B=B, sbf_pinned=bool(sbf_pinned))
    violations = check_constraints(spec, theta)
    if violations:
        raise ValueError(f"initial state violates constraints: {violations[:3]}")
    return theta


__all__ = [
    "InitMethod",
    "InitSpec",
    "init_factors_kmeans",
    "init_internal_random",
    "init_proportions_random",
    "initialize",
    "kmeans",
    "proportions_from_labels",
]
