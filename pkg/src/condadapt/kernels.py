"""Gaussian kernels, Gram matrices, centering and regularized normalization.

Conventions: samples are columns, so a data matrix has shape (d, n).  All
Gram-level operations work on exactly symmetric float64 matrices; symmetry is
enforced by construction (one triangle computed, then mirrored), not by trust.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg

from .errors import ConfigError, DegenerateDataError, InputError, NumericalError


class BandwidthRule(Enum):
    MEAN_SQ_DIST = "mean-sq-dist"
    FIXED = "fixed"


@dataclass(frozen=True)
class KernelConfig:
    """Gaussian kernel settings.

    ``bandwidth_sq`` is sigma^2 in k(x, x') = exp(-||x - x'||^2 / sigma^2).
    When ``bandwidth_rule`` is MEAN_SQ_DIST the value was fitted to the mean
    of all pairwise squared distances of some data (use ``from_data``).
    """

    bandwidth_sq: float
    bandwidth_rule: BandwidthRule = BandwidthRule.FIXED

    def __post_init__(self):
        b = self.bandwidth_sq
        if not (np.isfinite(b) and b > 0):
            raise ConfigError(f"bandwidth_sq must be positive and finite, got {b!r}")

    @classmethod
    def fixed(cls, bandwidth_sq: float) -> "KernelConfig":
        return cls(float(bandwidth_sq), BandwidthRule.FIXED)

    @classmethod
    def from_data(cls, x: np.ndarray) -> "KernelConfig":
        """Fit sigma^2 to the mean squared pairwise distance of x's columns."""
        return cls(mean_sq_dist_bandwidth(x), BandwidthRule.MEAN_SQ_DIST)


@dataclass(frozen=True)
class GramMatrix:
    """Exactly symmetric kernel matrix over n samples."""

    entries: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.entries, dtype=float)
        if k.ndim != 2 or k.shape[0] != k.shape[1]:
            raise InputError(f"Gram matrix must be square, got shape {k.shape}")
        if not np.array_equal(k, k.T):
            raise InputError("Gram matrix must be exactly symmetric")
        object.__setattr__(self, "entries", k)

    @property
    def n(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class NormalizedGram:
    """R = G (G + n*eps*I)^{-1} for a centered Gram G; eigenvalues in [0, 1)."""

    entries: np.ndarray
    epsilon: float

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def _as_columns(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise InputError(f"expected a (d, n) data matrix, got ndim={x.ndim}")
    if x.shape[1] < 1:
        raise InputError("data matrix has no samples")
    if not np.all(np.isfinite(x)):
        raise InputError("data matrix contains non-finite values")
    return x


def gaussian_kernel(x, y, cfg: KernelConfig) -> float:
    """k(x, y) = exp(-||x - y||^2 / sigma^2) for two single samples."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise InputError(f"mismatched sample dimensions {x.shape} vs {y.shape}")
    d2 = float(np.sum((x - y) ** 2))
    return float(np.exp(-d2 / cfg.bandwidth_sq))


def pairwise_sq_dists(x) -> np.ndarray:
    """All-pairs squared Euclidean distances of x's columns.

    The upper triangle is computed once and mirrored, so the result is
    exactly symmetric with an exactly zero diagonal.
    """
    x = _as_columns(x)
    sq = np.einsum("ij,ij->j", x, x)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x.T @ x)
    np.maximum(d2, 0.0, out=d2)
    upper = np.triu(d2, k=1)
    return upper + upper.T


def cross_sq_dists(a, b) -> np.ndarray:
    """Squared distances between columns of a and columns of b."""
    a = _as_columns(a)
    b = _as_columns(b)
    if a.shape[0] != b.shape[0]:
        raise InputError(f"mismatched sample dimensions {a.shape[0]} vs {b.shape[0]}")
    d2 = (
        np.einsum("ij,ij->j", a, a)[:, None]
        + np.einsum("ij,ij->j", b, b)[None, :]
        - 2.0 * (a.T @ b)
    )
    np.maximum(d2, 0.0, out=d2)
    return d2


def mean_sq_dist_bandwidth(x) -> float:
    """Mean of all n^2 pairwise squared distances, self-pairs included."""
    x = _as_columns(x)
    if x.shape[1] < 2:
        raise InputError("bandwidth fit needs at least 2 samples")
    s2 = float(pairwise_sq_dists(x).mean())
    if s2 <= 0.0:
        raise DegenerateDataError("all samples identical: mean squared distance is zero")
    return s2


def gram(x, cfg: KernelConfig) -> GramMatrix:
    """Gaussian Gram matrix of x's columns; unit diagonal, exactly symmetric."""
    d2 = pairwise_sq_dists(x)
    return GramMatrix(np.exp(-d2 / cfg.bandwidth_sq))


def label_gram(m) -> GramMatrix:
    """Gaussian Gram for label-like column data, safe for constant input.

    A constant matrix (all columns identical) yields the all-ones Gram, the
    exact Gaussian limit for zero distances under any bandwidth.
    """
    m = _as_columns(m)
    n = m.shape[1]
    if n == 1 or np.all(m == m[:, :1]):
        return GramMatrix(np.ones((n, n)))
    return gram(m, KernelConfig.from_data(m))


def product_gram(a: GramMatrix, b: GramMatrix) -> GramMatrix:
    """Elementwise (Schur) product; PSD whenever both factors are."""
    if a.n != b.n:
        raise InputError(f"size mismatch {a.n} vs {b.n}")
    return GramMatrix(a.entries * b.entries)


def center(k) -> np.ndarray:
    """Double-center a Gram matrix: H K H with H = I - 11^T/n.

    Accepts a GramMatrix or a plain square array; returns a symmetric array
    whose rows and columns sum to ~0.
    """
    m = k.entries if isinstance(k, GramMatrix) else np.asarray(k, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InputError(f"expected a square matrix, got shape {m.shape}")
    row = m.mean(axis=1, keepdims=True)
    col = m.mean(axis=0, keepdims=True)
    g = m - row - col + m.mean()
    return 0.5 * (g + g.T)


def normalize(g, epsilon: float) -> NormalizedGram:
    """R = G (G + n*eps*I)^{-1} via a Cholesky solve of the regularized matrix.

    Uses the identity R = I - n*eps*(G + n*eps*I)^{-1}; the inverse is applied
    through an SPD factorization, never formed from an unsymmetrized product.
    """
    if not (np.isfinite(epsilon) and epsilon > 0):
        raise ConfigError(f"epsilon must be positive and finite, got {epsilon!r}")
    g = g.entries if isinstance(g, GramMatrix) else np.asarray(g, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise InputError(f"expected a square matrix, got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise NumericalError("non-finite entries in matrix passed to normalize")
    n = g.shape[0]
    ridge = n * epsilon
    f = g + ridge * np.eye(n)
    try:
        factor = scipy.linalg.cho_factor(f, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"regularized Gram is not positive definite: {exc}") from exc
    b = scipy.linalg.cho_solve(factor, np.eye(n), check_finite=False)
    r = np.eye(n) - ridge * b
    r = 0.5 * (r + r.T)
    if not np.all(np.isfinite(r)):
        raise NumericalError("normalization produced non-finite entries")
    return NormalizedGram(r, float(epsilon))
