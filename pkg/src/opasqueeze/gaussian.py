"""Single-mode Gaussian state algebra in shot-noise units.

The vacuum has unit variance in every quadrature, so the variance of a
rotated quadrature divided by one is directly the noise power relative to
shot noise. Quadrature ordering is ``(x, p)``; squeezing with ``r > 0``
amplifies ``x`` and de-amplifies ``p``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError

# symmetry / positivity checks on construction
_SYM_TOL = 1e-9


def _rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class GaussianState:
    """Covariance matrix and mean vector of one optical mode.

    Arrays are copied and made read-only, so states behave as values.
    """

    cov: np.ndarray
    mean: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        cov = np.array(self.cov, dtype=float)
        mean = np.array(self.mean, dtype=float)
        if cov.shape != (2, 2) or mean.shape != (2,):
            raise InvalidArgumentError("expected a 2x2 covariance and a 2-vector mean")
        if not (np.all(np.isfinite(cov)) and np.all(np.isfinite(mean))):
            raise InvalidArgumentError("state entries must be finite")
        if abs(cov[0, 1] - cov[1, 0]) > _SYM_TOL * max(1.0, np.abs(cov).max()):
            raise InvalidArgumentError("covariance must be symmetric")
        cov = 0.5 * (cov + cov.T)
        if cov[0, 0] <= 0 or np.linalg.det(cov) <= 0:
            raise InvalidArgumentError("covariance must be positive definite")
        cov.setflags(write=False)
        mean.setflags(write=False)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "mean", mean)

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.cov))

    @property
    def purity(self) -> float:
        """1/sqrt(det cov); equals 1 for pure states."""
        return 1.0 / math.sqrt(self.det)

    def variances(self) -> tuple[float, float]:
        """Variances of the ``x`` and ``p`` quadratures."""
        return float(self.cov[0, 0]), float(self.cov[1, 1])


def vacuum() -> GaussianState:
    """The vacuum state: identity covariance, zero mean."""
    return GaussianState(np.eye(2), np.zeros(2))


def squeeze(state: GaussianState, r: float) -> GaussianState:
    """Apply the single-mode squeezer ``S = diag(e^r, e^-r)``.

    ``cov -> S cov S^T`` and ``mean -> S mean``. For vacuum input the
    quadrature variances become ``(e^{2r}, e^{-2r})``.
    """
    if not math.isfinite(r):
        raise InvalidArgumentError(f"squeezing parameter must be finite, got {r!r}")
    S = np.diag([math.exp(r), math.exp(-r)])
    return GaussianState(S @ state.cov @ S.T, S @ state.mean)


def rotate(state: GaussianState, theta: float) -> GaussianState:
    """Rotate the quadrature frame by ``theta`` radians."""
    R = _rotation(theta)
    return GaussianState(R @ state.cov @ R.T, R @ state.mean)


def loss_channel(state: GaussianState, loss: float) -> GaussianState:
    """Pure-loss channel mixing in a fraction ``loss`` of vacuum.

    ``cov -> (1 - L) cov + L I`` and ``mean -> sqrt(1 - L) mean``.
    """
    if not (0.0 <= loss <= 1.0):
        raise InvalidArgumentError(f"loss must lie in [0, 1], got {loss!r}")
    eta = 1.0 - loss
    return GaussianState(eta * state.cov + loss * np.eye(2), math.sqrt(eta) * state.mean)


def quadrature_variance(state: GaussianState, theta: float) -> float:
    """Variance of ``x cos(theta) + p sin(theta)``."""
    u = np.array([math.cos(theta), math.sin(theta)])
    return float(u @ state.cov @ u)


def to_db(ratio):
    """Noise power ratio in decibels, ``10 log10(ratio)``.

    Accepts scalars or arrays; every element must be positive.
    """
    arr = np.asarray(ratio, dtype=float)
    if not np.all(arr > 0):
        raise InvalidArgumentError("noise power ratio must be positive")
    out = 10.0 * np.log10(arr)
    return float(out) if out.ndim == 0 else out


def from_db(db):
    """Inverse of :func:`to_db`."""
    out = np.power(10.0, np.asarray(db, dtype=float) / 10.0)
    return float(out) if out.ndim == 0 else out
