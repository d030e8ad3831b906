"""Factor models (NMF, LMM, SLMM), model evaluation and the penalized objective.

Shapes: ``Y`` and ``X`` are ``L x N`` (frames x voxels), ``M`` is ``L x K``,
``A`` is ``K x N``, ``V`` is ``L x Nv`` and ``B`` is ``Nv x N``. Column ``n``
of ``A`` holds the proportions of voxel ``n``; row 0 of ``A`` belongs to the
specific-binding factor ``M[:, 0]``.
"""

import enum
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .divergence import D_beta, classify_beta

SUM_TO_ONE_TOL = 1e-9


class ModelKind(str, enum.Enum):
    NMF = "nmf"
    LMM = "lmm"
    SLMM = "slmm"


@dataclass(frozen=True)
class ModelSpec:
    kind: ModelKind
    beta: float
    lam: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "lam", float(self.lam))
        classify_beta(self.beta)
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.lam != 0 and self.kind is not ModelKind.SLMM:
            raise ValueError("lambda is only meaningful for the SLMM model")

    @property
    def stochastic(self):
        """Whether proportions are constrained to sum to one per voxel."""
        return self.kind is not ModelKind.NMF


@dataclass(frozen=True)
class DataMatrix:
    """Observed frames x voxels matrix with optional frame durations (minutes)."""

    values: np.ndarray
    frame_durations: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or min(values.shape) < 1:
            raise ValueError(f"data must be a non-empty 2-D matrix, got shape {values.shape}")
        if np.any(values < 0):
            raise ValueError("data must be nonnegative")
        object.__setattr__(self, "values", values)
        if self.frame_durations is not None:
            d = np.asarray(self.frame_durations, dtype=np.float64)
            if d.shape != (values.shape[0],):
                raise ValueError("frame_durations must have one entry per frame")
            object.__setattr__(self, "frame_durations", d)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    @property
    def shape(self):
        return self.values.shape


@dataclass
class Theta:
    """Model variables. ``V``/``B`` are set only for SLMM."""

    M: np.ndarray
    A: np.ndarray
    V: Optional[np.ndarray] = None
    B: Optional[np.ndarray] = None
    sbf_pinned: bool = False

    def copy(self):
        return replace(
            self,
            M=self.M.copy(),
            A=self.A.copy(),
            V=None if self.V is None else self.V.copy(),
            B=None if self.B is None else self.B.copy(),
        )

    @property
    def K(self):
        return self.M.shape[1]

    @property
    def has_variability(self):
        return self.V is not None and self.B is not None


def evaluate_model(M, A, V=None, B=None):
    """Model image ``MA``, plus ``[E1 A] * (V B)`` when V and B are given."""
    M = np.asarray(M, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    if M.ndim != 2 or A.ndim != 2 or M.shape[1] != A.shape[0]:
        raise ValueError(f"shape mismatch: M{M.shape} @ A{A.shape}")
    X = M @ A
    if (V is None) != (B is None):
        raise ValueError("V and B must be given together")
    if V is not None:
        V = np.asarray(V, dtype=np.float64)
        B = np.asarray(B, dtype=np.float64)
        if V.shape[0] != M.shape[0] or V.shape[1] != B.shape[0] or B.shape[1] != A.shape[1]:
            raise ValueError(f"shape mismatch: V{V.shape} @ B{B.shape} for X{X.shape}")
        X += A[0] * (V @ B)
    return X


def model_image(theta):
    return evaluate_model(theta.M, theta.A, theta.V, theta.B)


def l21_norm(B):
    """Sum of the Euclidean norms of the columns of B."""
    return float(np.sum(np.sqrt(np.sum(np.asarray(B) ** 2, axis=0))))


def objective(Y, spec, theta, floor_data=None):
    """Penalized objective ``D_beta(Y | X(theta)) + lam * ||B||_{2,1}``."""
    J = D_beta(Y, model_image(theta), spec.beta, floor_data=floor_data)
    if spec.kind is ModelKind.SLMM and theta.B is not None and spec.lam:
        J += spec.lam * l21_norm(theta.B)
    return J


@dataclass(frozen=True)
class Violation:
    variable: str
    rule: str
    index: tuple
    magnitude: float


def _negatives(name, arr):
    out = []
    for idx in zip(*np.nonzero(arr < 0)):
        idx = tuple(int(i) for i in idx)
        out.append(Violation(name, "nonnegativity", idx, float(-arr[idx])))
    return out


def check_constraints(spec, theta, tol=SUM_TO_ONE_TOL):
    """List every constraint violated by ``theta`` under ``spec.kind``.

    An empty list means the state is feasible. Nonnegativity is checked
    exactly; column sums of A must be within ``tol`` of one for LMM/SLMM.
    """
    violations = _negatives("M", np.asarray(theta.M)) + _negatives("A", np.asarray(theta.A))
    if spec.stochastic:
        dev = np.abs(np.sum(theta.A, axis=0) - 1.0)
        for n in np.nonzero(dev > tol)[0]:
            violations.append(Violation("A", "sum-to-one", (int(n),), float(dev[n])))
    if spec.kind is ModelKind.SLMM:
        if theta.B is None or theta.V is None:
            violations.append(Violation("B", "missing", (), float("nan")))
        else:
            violations += _negatives("B", np.asarray(theta.B))
    return violations


__all__ = [
    "DataMatrix",
    "ModelKind",
    "ModelSpec",
    "Theta",
    "Violation",
    "check_constraints",
    "evaluate_model",
    "l21_norm",
    "model_image",
    "objective",
]
