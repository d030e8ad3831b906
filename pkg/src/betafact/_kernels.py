"""Hot element-wise kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import time from ``BETAFACT_BACKEND``
(``numba`` by default, ``numpy`` to force the fallback). When numba cannot
be imported the numpy path is used silently.

Summation order
---------------
The numba kernels reduce serially: each column ``n`` accumulates its rows
in the order ``l = 0..L-1`` into a per-column partial sum, and the partial
sums are then added in increasing ``n``. The numpy kernels use
``np.sum``'s pairwise summation. Each backend is deterministic for a given
input; the two agree to rounding only.
"""

import os

import numpy as np

DELTA = 1e-12

# Within this distance of beta = 0 or 1 the generic power form loses digits
# to cancellation; a rearranged form built on expm1 is used instead.
BRANCH_WINDOW = 1e-3

_requested = os.environ.get("BETAFACT_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"BETAFACT_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

BACKEND = "numba" if (HAVE_NUMBA and _requested == "numba") else "numpy"


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------


def near_branch(beta):
    return beta not in (0.0, 1.0) and (abs(beta) < BRANCH_WINDOW or abs(beta - 1.0) < BRANCH_WINDOW)


def _generic_near_branch_np(Y, X, beta):
    """Generic branch rewritten in r = y/x and log r to avoid cancellation.

    With E(z) = expm1(z) - z the generic numerator factors as
    ``x**beta * (E(beta log r) - beta (r - 1 - log r))`` and, with c = beta - 1,
    as ``x**beta * (r E(c log r) + c (r log r - r + 1))``.
    """
    pos = Y > 0
    r = np.where(pos, Y, 1.0) / X
    L = np.log(r)
    xb = X**beta
    if abs(beta) < BRANCH_WINDOW:
        z = beta * L
        d = xb * ((np.expm1(z) - z) / beta - (r - 1.0 - L)) / (beta - 1.0)
    else:
        c = beta - 1.0
        z = c * L
        d = xb * (r * (np.expm1(z) - z) / c + (r * L - r + 1.0)) / beta
    # y = 0 keeps only the x**beta / beta term
    return np.maximum(np.where(pos, d, xb / beta), 0.0)


def _div_matrix_np(Y, X, beta):
    """Element-wise d_beta(Y|X); X is assumed already floored."""
    if beta == 2.0:
        return 0.5 * (Y - X) ** 2
    if beta == 1.0:
        with np.errstate(divide="ignore", invalid="ignore"):
            ylog = np.where(Y > 0, Y * np.log(np.where(Y > 0, Y, 1.0) / X), 0.0)
        return ylog - Y + X
    if beta == 0.0:
        r = Y / X
        return r - np.log(r) - 1.0
    if near_branch(beta):
        return _generic_near_branch_np(Y, X, beta)
    with np.errstate(divide="ignore"):
        yb = Y**beta
    d = (yb + (beta - 1.0) * X**beta - beta * Y * X ** (beta - 1.0)) / (beta * (beta - 1.0))
    return np.maximum(d, 0.0)


def beta_div_sum_np(Y, X, beta):
    return float(np.sum(_div_matrix_np(Y, np.maximum(X, DELTA), beta)))


def beta_div_colsum_np(Y, X, beta):
    return np.sum(_div_matrix_np(Y, np.maximum(X, DELTA), beta), axis=0)


def power_terms_np(Y, X, beta):
    """Return ``(X^(beta-1), Y * X^(beta-2))`` with X floored at DELTA."""
    Xf = np.maximum(X, DELTA)
    xb2 = Xf ** (beta - 2.0)
    return xb2 * Xf, Y * xb2


def power_terms_cols_np(Y, X, beta):
    """Power terms plus the column sums of X^beta and Y * X^(beta-1)."""
    Xf = np.maximum(X, DELTA)
    xb2 = Xf ** (beta - 2.0)
    P = xb2 * Xf
    Q = Y * xb2
    return P, Q, np.sum(P * Xf, axis=0), np.sum(Y * P, axis=0)


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True, inline="always")
    def _d_scalar(y, x, beta):
        if beta == 2.0:
            return 0.5 * (y - x) * (y - x)
        if beta == 1.0:
            if y > 0.0:
                return y * np.log(y / x) - y + x
            return x
        if beta == 0.0:
            r = y / x
            return r - np.log(r) - 1.0
        if y > 0.0:
            yb = y**beta
        else:
            yb = 0.0
        d = (yb + (beta - 1.0) * x**beta - beta * y * x ** (beta - 1.0)) / (beta * (beta - 1.0))
        return max(d, 0.0)

    @njit(cache=True, inline="always")
    def _pow_e(x, e):
        # exact shortcuts for beta in {2, 1, 0}
        if e == 0.0:
            return 1.0
        if e == -1.0:
            return 1.0 / x
        if e == -2.0:
            return 1.0 / (x * x)
        return x**e

    @njit(cache=True)
    def beta_div_colsum_nb(Y, X, beta):
        L, N = Y.shape
        out = np.zeros(N)
        for l in range(L):
            for n in range(N):
                x = X[l, n]
                if x < DELTA:
                    x = DELTA
                out[n] += _d_scalar(Y[l, n], x, beta)
        return out

    @njit(cache=True)
    def beta_div_colsum_pow_nb(Y, X, Yb, Xb1, beta):
        # generic branch with y**beta and x**(beta-1) supplied by the caller
        L, N = Y.shape
        out = np.zeros(N)
        c = 1.0 / (beta * (beta - 1.0))
        for l in range(L):
            for n in range(N):
                x = X[l, n]
                if x < DELTA:
                    x = DELTA
                xb1 = Xb1[l, n]
                out[n] += max(c * (Yb[l, n] + (beta - 1.0) * xb1 * x - beta * Y[l, n] * xb1), 0.0)
        return out

    @njit(cache=True)
    def _ordered_sum(cols):
        total = 0.0
        for n in range(cols.shape[0]):
            total += cols[n]
        return total

    @njit(cache=True)
    def beta_div_sum_nb(Y, X, beta):
        cols = beta_div_colsum_nb(Y, X, beta)
        total = 0.0
        for n in range(cols.shape[0]):
            total += cols[n]
        return total

    @njit(cache=True)
    def power_terms_nb(Y, X, beta):
        L, N = Y.shape
        P = np.empty((L, N))
        Q = np.empty((L, N))
        e = beta - 2.0
        for l in range(L):
            for n in range(N):
                x = X[l, n]
                if x < DELTA:
                    x = DELTA
                xb2 = _pow_e(x, e)
                P[l, n] = xb2 * x
                Q[l, n] = Y[l, n] * xb2
        return P, Q

    @njit(cache=True)
    def power_terms_pow_nb(Y, X, Xb2, with_cols):
        # fused products from a caller-supplied X**(beta-2)
        L, N = Y.shape
        P = np.empty((L, N))
        Q = np.empty((L, N))
        sx = np.zeros(N)
        sy = np.zeros(N)
        for l in range(L):
            for n in range(N):
                x = X[l, n]
                if x < DELTA:
                    x = DELTA
                y = Y[l, n]
                xb2 = Xb2[l, n]
                p = xb2 * x
                P[l, n] = p
                Q[l, n] = y * xb2
                if with_cols:
                    sx[n] += p * x
                    sy[n] += y * p
        return P, Q, sx, sy

    @njit(cache=True)
    def power_terms_cols_nb(Y, X, beta):
        L, N = Y.shape
        P = np.empty((L, N))
        Q = np.empty((L, N))
        sx = np.zeros(N)
        sy = np.zeros(N)
        e = beta - 2.0
        for l in range(L):
            for n in range(N):
                x = X[l, n]
                if x < DELTA:
                    x = DELTA
                y = Y[l, n]
                xb2 = _pow_e(x, e)
                p = xb2 * x
                P[l, n] = p
                Q[l, n] = y * xb2
                sx[n] += p * x
                sy[n] += y * p
        return P, Q, sx, sy


def _as_f64(a):
    return np.asarray(a, dtype=np.float64)


def _special(beta):
    return beta in (0.0, 1.0, 2.0)


if BACKEND == "numba":
    # numpy's SIMD pow beats a scalar pow inside the loop, so for generic
    # beta the single power array is computed by numpy and the rest fused.

    def beta_div_colsum(Y, X, beta, Yb=None):
        Y, X, beta = _as_f64(Y), _as_f64(X), float(beta)
        if _special(beta):
            return beta_div_colsum_nb(Y, X, beta)
        if near_branch(beta):
            return beta_div_colsum_np(Y, X, beta)
        if Yb is None:
            with np.errstate(divide="ignore"):
                Yb = Y**beta
        Xb1 = np.maximum(X, DELTA) ** (beta - 1.0)
        return beta_div_colsum_pow_nb(Y, X, Yb, Xb1, beta)

    def beta_div_sum(Y, X, beta, Yb=None):
        return float(_ordered_sum(beta_div_colsum(Y, X, beta, Yb)))

    def power_terms(Y, X, beta):
        Y, X, beta = _as_f64(Y), _as_f64(X), float(beta)
        if _special(beta):
            return power_terms_nb(Y, X, beta)
        P, Q, _, _ = power_terms_pow_nb(Y, X, np.maximum(X, DELTA) ** (beta - 2.0), False)
        return P, Q

    def power_terms_cols(Y, X, beta):
        Y, X, beta = _as_f64(Y), _as_f64(X), float(beta)
        if _special(beta):
            return power_terms_cols_nb(Y, X, beta)
        return power_terms_pow_nb(Y, X, np.maximum(X, DELTA) ** (beta - 2.0), True)

else:

    def beta_div_sum(Y, X, beta, Yb=None):
        return beta_div_sum_np(Y, X, beta)

    def beta_div_colsum(Y, X, beta, Yb=None):
        return beta_div_colsum_np(Y, X, beta)

    power_terms = power_terms_np
    power_terms_cols = power_terms_cols_np
