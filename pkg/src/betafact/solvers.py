"""Multiplicative block-coordinate solvers for beta-NMF, beta-LMM and beta-SLMM.

Every block update has the form ``theta <- theta * (num / den) ** exponent``
with nonnegative ``num`` and ``den``, so nonnegativity is preserved. One
iteration of :func:`fit` runs the applicable blocks in this order::

    B  ->  M (columns 1.. when the SBF is pinned)  ->  A row 0  ->  A rows 1..

NMF has no row split and updates all of A in one block. The model image is
recomputed from the current variables before each block.
"""

import enum
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from ._kernels import DELTA
from .divergence import gamma_exponent, validate_data, xi_exponent
from .models import ModelKind, ModelSpec, Theta, check_constraints, l21_norm

log = logging.getLogger(__name__)

EPS_B = 1e-12
MONOTONE_RTOL = 1e-9


class NumericalError(RuntimeError):
    """A solver produced a non-finite value."""

    def __init__(self, iteration, block, detail=""):
        self.iteration = iteration
        self.block = block
        super().__init__(f"non-finite value at iteration {iteration}, block {block}: {detail}".rstrip(": "))


class Termination(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"


@dataclass(frozen=True)
class SolverConfig:
    """Stopping rule and update options.

    ``epsilon`` bounds the relative objective decrease
    ``(J_prev - J) / J_prev`` below which the fit stops. ``rng_seed`` does not
    affect the (deterministic) solver; it is carried into the result to
    record how the initial state was drawn.
    """

    epsilon: float = 1e-4
    max_iter: int = 10_000
    use_xi_exponent: bool = False
    fix_factors: bool = False
    fix_proportions: bool = False
    update_variability: bool = True
    floor_data: Optional[float] = None
    track_blocks: bool = False
    rng_seed: int = 0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if int(self.max_iter) < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")


# Default stopping thresholds, and lambda per reconstruction regime and beta.
EPSILON_FIXED_M = 1e-5
EPSILON_ESTIMATED_M = 1e-4
LAMBDA_PRESETS = {
    "6it": {0.0: 1.3e-4, 1.0: 1.3e-3, 2.0: 3.9e-3},
    "50it": {0.0: 6.8e-5, 1.0: 6.8e-4, 2.0: 2e-3},
}


def default_epsilon(fix_factors):
    return EPSILON_FIXED_M if fix_factors else EPSILON_ESTIMATED_M


def default_lambda(preset, beta):
    """Tabulated lambda for a noise preset; log-linear in beta between entries."""
    table = LAMBDA_PRESETS[preset]
    betas = np.array(sorted(table))
    logs = np.log([table[b] for b in betas])
    return float(np.exp(np.interp(beta, betas, logs)))


@dataclass(frozen=True)
class FitResult:
    theta: Theta
    objective_trace: np.ndarray
    iterations: int
    termination: Termination
    monotonicity_violations: int = 0
    block_trace: list = field(default_factory=list)
    rng_seed: int = 0

    @property
    def objective(self):
        return float(self.objective_trace[-1])


def _ratio(num, den):
    return num / np.maximum(den, DELTA)


def update_M(Y, M, A, delta, beta, pinned=False):
    """One multiplicative update of the factor matrix.

    ``delta`` is the additive part of the model that does not depend on M
    (the SLMM variability image); pass None for NMF/LMM.
    """
    X = M @ A
    if delta is not None:
        X = X + delta
    P, Q = _kernels.power_terms(Y, X, beta)
    ratio = _ratio(Q @ A.T, P @ A.T)
    g = gamma_exponent(beta)
    step = ratio if g == 1.0 else ratio**g
    out = M * step
    if pinned:
        out[:, 0] = M[:, 0]
    return out


def update_A_nmf(Y, M, A, beta):
    """One multiplicative update of unconstrained proportions."""
    P, Q = _kernels.power_terms(Y, M @ A, beta)
    ratio = _ratio(M.T @ Q, M.T @ P)
    g = gamma_exponent(beta)
    return A * (ratio if g == 1.0 else ratio**g)


def lmm_ratio(Y, M, A, W, beta):
    """Per-entry factors r_kn of the sum-to-one proportion update.

    Derived from the gradient split of the objective under the
    reparametrization a_kn = u_kn / sum_k u_kn; ``W`` (= V B) only enters
    the row of the first factor.
    """
    X = M @ A
    if W is not None:
        X = X + A[0] * W
    P, Q, sx, sy = _kernels.power_terms_cols(Y, X, beta)
    num = M.T @ Q + sx
    den = M.T @ P + sy
    if W is not None:
        num[0] += np.sum(W * Q, axis=0)
        den[0] += np.sum(W * P, axis=0)
    return _ratio(num, den)


def update_A_lmm(Y, M, A, W, beta, rows=None):
    """Heuristic multiplicative update of column-stochastic proportions.

    Only the rows selected by ``rows`` (default: all) are rescaled; every
    column is then renormalized to sum to one.
    """
    r = lmm_ratio(Y, M, A, W, beta)
    U = A.copy()
    if rows is None:
        U *= r
    else:
        U[rows] *= r[rows]
    colsum = U.sum(axis=0)
    bad = np.nonzero(~(colsum > 0))[0]
    if bad.size:
        raise FloatingPointError(f"proportions of voxel {int(bad[0])} collapsed to zero")
    return U / colsum


def update_B(Y, M, A, V, B, beta, lam, use_xi_exponent=False):
    """One multiplicative update of the internal variability proportions.

    The group-sparsity term is majorized at the current B, giving the
    ``lam * b / ||b_n||`` contribution to the denominator. Numerator and
    denominator sums are clamped at zero so that bases with negative entries
    keep the update nonnegative.
    """
    X = M @ A + A[0] * (V @ B)
    P, Q = _kernels.power_terms(Y, X, beta)
    a1 = A[0]
    num = np.maximum(a1 * (V.T @ Q), 0.0)
    den = np.maximum(a1 * (V.T @ P), 0.0)
    if lam:
        norms = np.sqrt(np.sum(B * B, axis=0))
        den = den + lam * B / np.maximum(norms, EPS_B)
    ratio = _ratio(num, den)
    if use_xi_exponent:
        ratio = ratio ** xi_exponent(beta)
    return B * ratio


def _objective(Y, spec, theta):
    X = theta.M @ theta.A
    if theta.has_variability:
        X += theta.A[0] * (theta.V @ theta.B)
    J = _kernels.beta_div_sum(Y, X, spec.beta)
    if spec.kind is ModelKind.SLMM and spec.lam and theta.B is not None:
        J += spec.lam * l21_norm(theta.B)
    return J


def _blocks(spec, cfg, theta):
    blocks = []
    if spec.kind is ModelKind.SLMM and cfg.update_variability:
        blocks.append("B")
    if not cfg.fix_factors and not (theta.sbf_pinned and theta.K == 1):
        blocks.append("M")
    if not cfg.fix_proportions:
        if spec.kind is ModelKind.NMF:
            blocks.append("A")
        else:
            blocks.append("A1")
            if theta.K > 1:
                blocks.append("A2K")
    return blocks


def _prepare(Y, spec, theta0, cfg):
    Y = validate_data(Y, spec.beta, cfg.floor_data)
    theta = theta0.copy()
    for name in ("M", "A", "V", "B"):
        val = getattr(theta, name)
        if val is not None:
            setattr(theta, name, np.array(val, dtype=np.float64))
    L, N = Y.shape
    if theta.M.shape[0] != L or theta.A.shape != (theta.K, N):
        raise ValueError(f"initial state shapes M{theta.M.shape}, A{theta.A.shape} do not match Y{Y.shape}")
    if spec.kind is ModelKind.SLMM:
        if not theta.has_variability:
            raise ValueError("SLMM requires V and B")
        Nv = theta.V.shape[1]
        if theta.V.shape[0] != L or theta.B.shape != (Nv, N):
            raise ValueError(f"shape mismatch: V{theta.V.shape}, B{theta.B.shape}")
    else:
        theta.V = theta.B = None
    violations = check_constraints(spec, theta)
    if violations:
        raise ValueError(f"initial state violates constraints: {violations[:3]}")
    if spec.stochastic:
        theta.A = theta.A / theta.A.sum(axis=0)
    if spec.stochastic and not 1.0 <= spec.beta <= 2.0:
        warnings.warn(
            f"beta={spec.beta} is outside [1, 2]: proportion updates are heuristic "
            "(exponent 1) and monotone decrease is not guaranteed",
            RuntimeWarning,
            stacklevel=3,
        )
    return Y, theta


def _run_block(name, Y, spec, cfg, theta):
    beta = spec.beta
    if name == "B":
        theta.B = update_B(Y, theta.M, theta.A, theta.V, theta.B, beta, spec.lam, cfg.use_xi_exponent)
        return theta.B
    W = theta.V @ theta.B if theta.has_variability else None
    if name == "M":
        delta = theta.A[0] * W if W is not None else None
        theta.M = update_M(Y, theta.M, theta.A, delta, beta, pinned=theta.sbf_pinned)
        return theta.M
    if name == "A":
        theta.A = update_A_nmf(Y, theta.M, theta.A, beta)
    elif name == "A1":
        theta.A = update_A_lmm(Y, theta.M, theta.A, W, beta, rows=[0])
    else:
        theta.A = update_A_lmm(Y, theta.M, theta.A, W, beta, rows=slice(1, None))
    return theta.A


def fit(Y, spec, theta0, cfg=None, callback=None):
    """Minimize the penalized beta-divergence from ``theta0``.

    Parameters
    ----------
    Y : (L, N) array
        Nonnegative data.
    spec : ModelSpec
    theta0 : Theta
        Feasible initial state; it is copied, never modified.
    cfg : SolverConfig, optional
    callback : callable, optional
        Called as ``callback(iteration, theta)`` after each full iteration.

    Returns
    -------
    FitResult
    """
    cfg = cfg or SolverConfig()
    if not isinstance(spec, ModelSpec):
        raise TypeError("spec must be a ModelSpec")
    Y, theta = _prepare(Y, spec, theta0, cfg)
    blocks = _blocks(spec, cfg, theta)

    J = _objective(Y, spec, theta)
    if not math.isfinite(J):
        raise NumericalError(0, "init", f"objective={J}")
    trace = [J]
    block_trace = []
    violations = 0
    termination = Termination.MAX_ITER
    it = 0
    while it < cfg.max_iter:
        it += 1
        for name in blocks:
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    updated = _run_block(name, Y, spec, cfg, theta)
            except FloatingPointError as exc:
                raise NumericalError(it, name, str(exc)) from exc
            if not np.all(np.isfinite(updated)):
                raise NumericalError(it, name, "update produced non-finite entries")
            if cfg.track_blocks:
                Jb = _objective(Y, spec, theta)
                prev = block_trace[-1][2] if block_trace else J
                if Jb > prev + MONOTONE_RTOL * abs(prev):
                    violations += 1
                    log.debug("objective increased in block %s at iteration %d: %r -> %r", name, it, prev, Jb)
                block_trace.append((it, name, Jb))
        J_prev = J
        J = _objective(Y, spec, theta)
        if not math.isfinite(J):
            raise NumericalError(it, blocks[-1] if blocks else "-", f"objective={J}")
        trace.append(J)
        if not cfg.track_blocks and J > J_prev + MONOTONE_RTOL * abs(J_prev):
            violations += 1
            log.debug("objective increased at iteration %d: %r -> %r", it, J_prev, J)
        if callback is not None:
            callback(it, theta)
        if J_prev == 0.0 or (J_prev - J) / J_prev < cfg.epsilon:
            termination = Termination.CONVERGED
            break

    return FitResult(
        theta=theta,
        objective_trace=np.asarray(trace),
        iterations=it,
        termination=termination,
        monotonicity_violations=violations,
        block_trace=block_trace,
        rng_seed=cfg.rng_seed,
    )


__all__ = [
    "EPSILON_ESTIMATED_M",
    "EPSILON_FIXED_M",
    "FitResult",
    "LAMBDA_PRESETS",
    "NumericalError",
    "SolverConfig",
    "Termination",
    "default_epsilon",
    "default_lambda",
    "fit",
    "lmm_ratio",
    "update_A_lmm",
    "update_A_nmf",
    "update_B",
    "update_M",
]
