"""Beta-divergence between nonnegative data and a positive model.

``d_beta(y|x)`` is the element-wise loss; ``D_beta(Y|X)`` sums it over a
matrix. Special values of beta dispatch to exact closed forms:

==========  =========================================
beta        divergence
==========  =========================================
2           half squared Euclidean distance
1           generalized Kullback-Leibler
0           Itakura-Saito
otherwise   generic power form
==========  =========================================
"""

import math

import numpy as np

from . import _kernels
from ._kernels import DELTA


class DomainError(ValueError):
    """Raised when (y, x, beta) lies outside the divergence's domain."""


def classify_beta(beta):
    """Return ``'euclidean'``, ``'kl'``, ``'is'`` or ``'generic'``."""
    beta = float(beta)
    if not math.isfinite(beta):
        raise DomainError(f"beta must be finite, got {beta}")
    return {2.0: "euclidean", 1.0: "kl", 0.0: "is"}.get(beta, "generic")


def _check_scalar(y, x, beta):
    if not math.isfinite(beta):
        raise DomainError(f"beta must be finite, got {beta}")
    if not x > 0:
        raise DomainError(f"model value must be > 0, got x={x}")
    if not y >= 0:
        raise DomainError(f"data value must be >= 0, got y={y}")
    if beta <= 0 and y == 0:
        raise DomainError(f"d_beta(0|x) diverges for beta={beta} <= 0")


def d_beta(y, x, beta):
    """Scalar beta-divergence d_beta(y | x).

    For ``beta in (0, 1]`` a zero observation is allowed and uses the
    limits ``y log(y/x) -> 0`` and ``y**beta -> 0``; the generic branch then
    reduces to ``x**beta / beta``.
    """
    y, x, beta = float(y), float(x), float(beta)
    _check_scalar(y, x, beta)
    if beta == 2.0:
        return 0.5 * (y - x) ** 2
    if beta == 1.0:
        return (y * math.log(y / x) if y > 0 else 0.0) - y + x
    if beta == 0.0:
        r = y / x
        return r - math.log(r) - 1.0
    if y == x:
        return 0.0
    if _kernels.near_branch(beta):
        return float(_kernels._generic_near_branch_np(np.array(y), np.array(x), beta))
    yb = y**beta if y > 0 else 0.0
    d = (yb + (beta - 1.0) * x**beta - beta * y * x ** (beta - 1.0)) / (beta * (beta - 1.0))
    # rounding can leave a tiny negative value next to the minimum
    return max(d, 0.0)


def grad_x_d_beta(y, x, beta):
    """Split the x-derivative of d_beta(y|x) into nonnegative parts.

    Returns ``(plus, minus)`` with ``plus = x**(beta-1)`` and
    ``minus = y * x**(beta-2)``, so the derivative is ``plus - minus``.
    """
    y, x, beta = float(y), float(x), float(beta)
    _check_scalar(y, x, beta)
    return x ** (beta - 1.0), y * x ** (beta - 2.0)


def validate_data(Y, beta, floor_data=None):
    """Check observed data against the domain of d_beta.

    Returns Y as float64, with zeros lifted to ``floor_data`` when given.
    Zeros are rejected for ``beta <= 0`` unless a floor is supplied.
    """
    Y = np.asarray(Y, dtype=np.float64)
    if not np.all(np.isfinite(Y)):
        raise DomainError("data contains non-finite entries")
    if np.any(Y < 0):
        idx = np.unravel_index(np.argmin(Y), Y.shape)
        raise DomainError(f"data must be nonnegative; Y{tuple(int(i) for i in idx)}={Y[idx]}")
    if floor_data is not None:
        if not floor_data > 0:
            raise DomainError(f"floor_data must be > 0, got {floor_data}")
        Y = np.maximum(Y, floor_data)
    elif beta <= 0 and np.any(Y == 0):
        raise DomainError(
            f"data contains zeros, which is undefined for beta={beta} <= 0; "
            "pass floor_data to clamp them"
        )
    return Y


def D_beta(Y, X, beta, floor_data=None):
    """Matrix beta-divergence, the sum of d_beta over all entries.

    Model entries are clamped to ``x >= 1e-12`` first.
    """
    Y = np.asarray(Y, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if Y.shape != X.shape:
        raise ValueError(f"shape mismatch: Y{Y.shape} vs X{X.shape}")
    beta = float(beta)
    classify_beta(beta)
    Y = validate_data(Y, beta, floor_data)
    if np.any(np.isnan(X)):
        raise DomainError("model contains NaN")
    return _kernels.beta_div_sum(Y, X, beta)


def gamma_exponent(beta):
    """MM exponent for the factor and unconstrained-proportion updates."""
    if beta < 1.0:
        return 1.0 / (2.0 - beta)
    if beta > 2.0:
        return 1.0 / (beta - 1.0)
    return 1.0


def xi_exponent(beta):
    """MM exponent of the penalized variability update.

    Exact ``1/(3-beta)`` on [1, 2]; the same expression is used below 1 and
    ``1/(beta-1)`` above 2, which joins it continuously at beta = 2.
    """
    if beta > 2.0:
        return 1.0 / (beta - 1.0)
    return 1.0 / (3.0 - beta)


__all__ = [
    "DELTA",
    "DomainError",
    "D_beta",
    "classify_beta",
    "d_beta",
    "gamma_exponent",
    "grad_x_d_beta",
    "validate_data",
    "xi_exponent",
]
