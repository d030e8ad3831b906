"""Desk-scale synthetic dynamic images with known ground truth.

Voxels are laid out row-major on a square grid. A contiguous square block
in the middle of the grid is the high-uptake region of factor 0 (the
specific-binding factor); for SLMM it is split into four quadrants with
increasing variability levels, and the variability proportions are zero
everywhere else.

Noise families (``x`` is the noiseless value, all keep ``E[y] = x`` except
the clamped Gaussian near zero):

* ``gaussian``: ``max(x + sigma * N(0, 1), 0)``
* ``poisson``: ``Poisson(scale * x) / scale``
* ``gamma``: ``Gamma(shape, x / shape)`` (multiplicative)
* ``poisson-gamma``: ``Poisson(scale * g) / scale`` with ``g ~ Gamma(shape, x / shape)``
* ``poisson-gaussian``: Poisson followed by clamped Gaussian

The ``6it``/``50it`` presets emulate a noisy, weakly filtered and a
low-variance, strongly filtered reconstruction; their parameters are
desk-scale choices, not calibrated to any scanner.
"""

import enum
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .models import DataMatrix, ModelKind, Theta, evaluate_model

TOTAL_MINUTES = 60.0
VARIABILITY_PEAK = 0.3
QUADRANT_LEVELS = (0.25, 0.5, 0.75, 1.0)

# (power, time constant in minutes) of t**p * exp(-t / tau); factor 0 is the SBF
_TAC_SHAPES = [(2.0, 15.0), (1.0, 1.0), (1.0, 6.0), (0.5, 40.0)]
_VARIABILITY_SHAPES = [(3.0, 6.0), (1.5, 25.0), (1.0, 2.5), (4.0, 4.0)]


class NoiseFamily(str, enum.Enum):
    NONE = "none"
    GAUSSIAN = "gaussian"
    POISSON = "poisson"
    GAMMA = "gamma"
    POISSON_GAMMA = "poisson-gamma"
    POISSON_GAUSSIAN = "poisson-gaussian"


@dataclass(frozen=True)
class NoiseSpec:
    family: NoiseFamily = NoiseFamily.NONE
    sigma: float = 0.0
    scale: float = 1.0
    shape: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", NoiseFamily(self.family))
        f = self.family
        if f in (NoiseFamily.GAUSSIAN, NoiseFamily.POISSON_GAUSSIAN) and self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if f in (NoiseFamily.POISSON, NoiseFamily.POISSON_GAMMA, NoiseFamily.POISSON_GAUSSIAN) and not self.scale > 0:
            raise ValueError("Poisson scale must be > 0")
        if f in (NoiseFamily.GAMMA, NoiseFamily.POISSON_GAMMA) and not self.shape > 0:
            raise ValueError("Gamma shape must be > 0")


NOISE_PRESETS = {
    "6it": NoiseSpec(NoiseFamily.POISSON_GAMMA, scale=50.0, shape=12.0),
    "50it": NoiseSpec(NoiseFamily.POISSON_GAUSSIAN, scale=400.0, sigma=0.01),
}


@dataclass(frozen=True)
class PhantomSpec:
    L: int = 20
    N: int = 2500
    K: int = 4
    Nv: int = 3
    kind: ModelKind = ModelKind.SLMM
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0
    block_fraction: float = 0.16

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        if min(self.L, self.N, self.K) < 1:
            raise ValueError("L, N and K must be positive")
        if self.K > min(self.L, self.N):
            raise ValueError(f"K={self.K} must not exceed min(L, N)={min(self.L, self.N)}")
        if self.kind is ModelKind.SLMM and not 1 <= self.Nv < self.L:
            raise ValueError(f"need 1 <= Nv < L, got Nv={self.Nv}")
        if not 0 < self.block_fraction < 1:
            raise ValueError("block_fraction must lie in (0, 1)")

    def to_dict(self):
        d = asdict(self)
        d["kind"] = self.kind.value
        d["noise"]["family"] = self.noise.family.value
        return d


@dataclass
class GroundTruth:
    M: np.ndarray
    A: np.ndarray
    X: np.ndarray
    V: Optional[np.ndarray] = None
    B: Optional[np.ndarray] = None
    high_uptake: Optional[np.ndarray] = None

    def theta(self, sbf_pinned=None):
        if sbf_pinned is None:
            sbf_pinned = self.B is not None
        return Theta(
            M=self.M.copy(),
            A=self.A.copy(),
            V=None if self.V is None else self.V.copy(),
            B=None if self.B is None else self.B.copy(),
            sbf_pinned=sbf_pinned,
        )


def frame_schedule(L, total=TOTAL_MINUTES):
    """Frame durations growing linearly from 1 to 5 (rescaled to ``total``)."""
    d = np.linspace(1.0, 5.0, L) if L > 1 else np.array([1.0])
    d *= total / d.sum()
    mid = np.cumsum(d) - d / 2
    return d, mid


def gamma_variate(t, p, tau):
    """Peak-normalized ``t**p * exp(-t / tau)``."""
    c = t**p * np.exp(-t / tau)
    return c / c.max()


def _shape(table, i):
    if i < len(table):
        return table[i]
    j = i - len(table) + 1
    return (1.0 + 0.5 * j, 3.0 + 4.0 * j)


def _grid_block(N, fraction):
    side = math.ceil(math.sqrt(N))
    rows, cols = np.divmod(np.arange(N), side)
    nrows = math.ceil(N / side)
    h = max(1, round(nrows * math.sqrt(fraction)))
    w = max(1, round(side * math.sqrt(fraction)))
    r0, c0 = (nrows - h) // 2, (side - w) // 2
    inside = (rows >= r0) & (rows < r0 + h) & (cols >= c0) & (cols < c0 + w)
    quadrant = 2 * (rows >= r0 + h / 2) + (cols >= c0 + w / 2)
    return inside, quadrant


def _proportions(rng, K, inside):
    N = inside.size
    alpha = np.ones(K)
    if K > 1:
        alpha[0] = 0.2
    A = rng.dirichlet(alpha, size=N).T
    if K > 1:
        mix = rng.dirichlet(np.ones(K), size=int(inside.sum())).T
        boost = np.zeros(K)
        boost[0] = 1.0
        A[:, inside] = 0.6 * boost[:, None] + 0.4 * mix
    # exact column sums after floating-point mixing
    return A / A.sum(axis=0)


def add_noise(X, noise, rng):
    """Draw one noisy observation of ``X`` under ``noise``."""
    X = np.asarray(X, dtype=np.float64)
    f = noise.family
    if f is NoiseFamily.NONE or (f is NoiseFamily.GAUSSIAN and noise.sigma == 0):
        return X.copy()
    if f is NoiseFamily.GAUSSIAN:
        return np.maximum(X + noise.sigma * rng.standard_normal(X.shape), 0.0)
    if f is NoiseFamily.POISSON:
        return rng.poisson(noise.scale * X) / noise.scale
    if f is NoiseFamily.GAMMA:
        return rng.gamma(noise.shape, X / noise.shape)
    if f is NoiseFamily.POISSON_GAMMA:
        G = rng.gamma(noise.shape, X / noise.shape)
        return rng.poisson(noise.scale * G) / noise.scale
    Y = rng.poisson(noise.scale * X) / noise.scale
    return np.maximum(Y + noise.sigma * rng.standard_normal(X.shape), 0.0)


def generate(spec, noise_seed=None):
    """Build a phantom and one noisy observation of it.

    The ground truth depends only on ``spec.seed``; the noise realization on
    ``(spec.seed, noise_seed)``, with ``noise_seed`` defaulting to
    ``spec.seed``. Returns ``(DataMatrix, GroundTruth)``.
    """
    durations, t = frame_schedule(spec.L)
    rng = np.random.default_rng([spec.seed, 0])
    M = np.column_stack([gamma_variate(t, *_shape(_TAC_SHAPES, k)) for k in range(spec.K)])
    inside, quadrant = _grid_block(spec.N, spec.block_fraction)
    A = _proportions(rng, spec.K, inside)
    V = B = None
    if spec.kind is ModelKind.SLMM:
        V = np.column_stack([gamma_variate(t, *_shape(_VARIABILITY_SHAPES, i)) for i in range(spec.Nv)])
        B = np.zeros((spec.Nv, spec.N))
        levels = np.asarray(QUADRANT_LEVELS)[quadrant[inside]]
        peak = VARIABILITY_PEAK * M[:, 0].max()
        B[:, inside] = rng.uniform(0.0, peak, size=(spec.Nv, int(inside.sum()))) * levels
    X = evaluate_model(M, A, V, B)
    nrng = np.random.default_rng([spec.seed, 1, spec.seed if noise_seed is None else noise_seed])
    Y = add_noise(X, spec.noise, nrng)
    gt = GroundTruth(M=M, A=A, X=X, V=V, B=B, high_uptake=inside)
    return DataMatrix(Y, frame_durations=durations), gt


__all__ = [
    "GroundTruth",
    "NOISE_PRESETS",
    "NoiseFamily",
    "NoiseSpec",
    "PhantomSpec",
    "add_noise",
    "frame_schedule",
    "gamma_variate",
    "generate",
]
