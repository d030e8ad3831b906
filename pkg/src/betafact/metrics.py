"""Reconstruction and per-variable error metrics."""

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .models import model_image


def psnr(X_hat, X_star):
    """Peak signal-to-noise ratio in dB; ``inf`` for an exact reconstruction."""
    X_hat = np.asarray(X_hat, dtype=np.float64)
    X_star = np.asarray(X_star, dtype=np.float64)
    if X_hat.shape != X_star.shape:
        raise ValueError(f"shape mismatch: {X_hat.shape} vs {X_star.shape}")
    peak = float(np.max(X_star))
    if peak == 0 and not np.any(X_star):
        raise ValueError("ground truth is identically zero")
    err = float(np.sum((X_hat - X_star) ** 2))
    if err == 0:
        return math.inf
    return 10.0 * math.log10(peak**2 / err)


def nmse(theta_hat, theta_star):
    """Squared Frobenius error normalized by the energy of the ground truth."""
    theta_hat = np.asarray(theta_hat, dtype=np.float64)
    theta_star = np.asarray(theta_star, dtype=np.float64)
    if theta_hat.shape != theta_star.shape:
        raise ValueError(f"shape mismatch: {theta_hat.shape} vs {theta_star.shape}")
    ref = float(np.sum(theta_star**2))
    if ref == 0:
        raise ValueError("NMSE undefined for an all-zero ground truth")
    return float(np.sum((theta_hat - theta_star) ** 2)) / ref


def _peak_normalized(M):
    peak = np.max(np.abs(M), axis=0)
    return M / np.where(peak > 0, peak, 1.0)


def align_factors(M_hat, M_star, pin_first=True):
    """Permutation ``p`` such that ``M_hat[:, p]`` best matches ``M_star``.

    Columns are compared by squared Euclidean distance after peak
    normalization and matched by the Hungarian algorithm. With
    ``pin_first`` factor 0 (the specific-binding factor) stays in place.
    """
    M_hat = np.asarray(M_hat, dtype=np.float64)
    M_star = np.asarray(M_star, dtype=np.float64)
    if M_hat.shape[1] != M_star.shape[1]:
        raise ValueError("factor counts differ")
    K = M_star.shape[1]
    a, b = _peak_normalized(M_hat), _peak_normalized(M_star)
    cost = np.sum((b[:, :, None] - a[:, None, :]) ** 2, axis=0)
    perm = np.arange(K)
    start = 1 if pin_first else 0
    if K - start > 0:
        rows, cols = linear_sum_assignment(cost[start:, start:])
        perm[start + rows] = start + cols
    return perm


@dataclass(frozen=True)
class MetricRecord:
    psnr: float
    nmse_A1: float
    nmse_A2K: float
    nmse_M1: float
    nmse_M1_tilde: float
    nmse_M2K: float
    nmse_A1B: float

    FIELDS = ("psnr", "nmse_A1", "nmse_A2K", "nmse_M1", "nmse_M1_tilde", "nmse_M2K", "nmse_A1B")

    def as_dict(self):
        return asdict(self)


def _safe_nmse(est, ref):
    if ref.size == 0 or not np.any(ref):
        return math.nan
    return nmse(est, ref)


def _variability_image(theta):
    """Per-voxel variability term ``V B`` (zeros without variability)."""
    if theta.V is None or theta.B is None:
        return None
    return theta.V @ theta.B


def report(theta_hat, gt, pin_first=None):
    """Metric record comparing an estimate with a phantom's ground truth.

    Factors are first aligned with :func:`align_factors`. ``nmse_M1_tilde``
    compares the per-voxel specific-binding TACs ``m1 + V b_n``;
    ``nmse_A1B`` compares ``A_1 * B`` (each variability row weighted by the
    SBF proportion). Without estimated variability B counts as zero. Entries
    that are undefined for the given ground truth are NaN.
    """
    if pin_first is None:
        pin_first = bool(theta_hat.sbf_pinned)
    perm = align_factors(theta_hat.M, gt.M, pin_first=pin_first)
    M = theta_hat.M[:, perm]
    A = theta_hat.A[perm]
    X_hat = model_image(theta_hat)

    W_hat = _variability_image(theta_hat)
    W_star = None if gt.V is None or gt.B is None else gt.V @ gt.B
    Mt_hat = M[:, :1] + (0.0 if W_hat is None else W_hat)
    Mt_star = gt.M[:, :1] + (0.0 if W_star is None else W_star)
    N = gt.A.shape[1]
    Mt_hat = np.broadcast_to(Mt_hat, (M.shape[0], N))
    Mt_star = np.broadcast_to(Mt_star, (M.shape[0], N))

    if gt.B is not None:
        A1B_star = gt.A[0] * gt.B
        A1B_hat = A[0] * theta_hat.B if theta_hat.B is not None else np.zeros_like(A1B_star)
        nmse_a1b = _safe_nmse(A1B_hat, A1B_star)
    else:
        nmse_a1b = math.nan

    return MetricRecord(
        psnr=psnr(X_hat, gt.X),
        nmse_A1=_safe_nmse(A[:1], gt.A[:1]),
        nmse_A2K=_safe_nmse(A[1:], gt.A[1:]),
        nmse_M1=_safe_nmse(M[:, :1], gt.M[:, :1]),
        nmse_M1_tilde=_safe_nmse(Mt_hat, Mt_star),
        nmse_M2K=_safe_nmse(M[:, 1:], gt.M[:, 1:]),
        nmse_A1B=nmse_a1b,
    )


__all__ = ["MetricRecord", "align_factors", "nmse", "psnr", "report"]
