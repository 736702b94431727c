"""Closed-form gradients of the trace dependence objectives.

The conditional objective L(X) = Tr(R_Zt S R_Xt S) depends on the feature
matrix X through the Gaussian Gram K_X alone.  With R = I - ne B,
B = (G + ne I)^{-1}, ne = n * eps, the chain is

    dL/dG_Xt = ne * B (S R_Zt S) B          (symmetric)
    dL/dK_Xt = H (dL/dG_Xt) H               (centering is self-adjoint)
    dL/dK_X  = dL/dK_Xt  *  K_Y             (elementwise)
    dL/dX    = (4 / s2) * X (A - diag(A 1)),  A = dL/dK_X * K_X,

using dK_X[i,j]/dx_i = -(2/s2)(x_i - x_j) K_X[i,j].  Bandwidths are treated
as constants of the step (stop-gradient through the mean-squared-distance
rule), so finite-difference checks must hold them fixed too.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError, NumericalError
from .kernels import KernelConfig, center, gram, pairwise_sq_dists


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    probes: int
    step: float


@dataclass(frozen=True)
class CondKernelConfig:
    """Per-block kernel settings for the conditional objective.

    ``None`` for the label or domain block means the block is constant and
    its Gram is all ones (the zero-distance Gaussian limit).
    """

    x: KernelConfig
    y: KernelConfig | None
    z: KernelConfig | None

    @classmethod
    def resolve(cls, xre, y, z) -> "CondKernelConfig":
        """Fit mean-squared-distance bandwidths on the current blocks."""
        return cls(
            KernelConfig.from_data(np.asarray(xre, dtype=float)),
            _label_config(y),
            _label_config(z),
        )


def _label_config(m) -> KernelConfig | None:
    m = np.asarray(m, dtype=float)
    if m.ndim == 1:
        m = m[None, :]
    if m.shape[1] == 1 or np.all(m == m[:, :1]):
        return None
    return KernelConfig.from_data(m)


def _block_entries(m, cfg: KernelConfig | None) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim == 1:
        m = m[None, :]
    if cfg is None:
        return np.ones((m.shape[1], m.shape[1]))
    return gram(m, cfg).entries


def _spd_inverse(g: np.ndarray, ridge: float) -> np.ndarray:
    import scipy.linalg

    n = g.shape[0]
    try:
        factor = scipy.linalg.cho_factor(g + ridge * np.eye(n), lower=True,
                                         check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"regularized solve failed: {exc}") from exc
    b = scipy.linalg.cho_solve(factor, np.eye(n), check_finite=False)
    return 0.5 * (b + b.T)


def _is_constant_block(m) -> bool:
    m = np.asarray(m, dtype=float)
    if m.ndim == 1:
        m = m[None, :]
    return m.shape[1] == 1 or bool(np.all(m == m[:, :1]))


def cond_objective(xre, y, z, cfgs: CondKernelConfig | None,
                   epsilon: float) -> tuple[float, np.ndarray]:
    """Value and feature gradient of the conditional dependence objective.

    ``xre`` is the (d', n) transformed-feature matrix, ``y`` the (K, n) label
    block (hard or soft), ``z`` the (N+1, n) domain block.  A constant ``z``
    makes the objective identically zero: with a single domain there is no
    dependence to remove, so both value and gradient vanish.
    """
    if not (np.isfinite(epsilon) and epsilon > 0):
        raise ConfigError(f"epsilon must be positive and finite, got {epsilon!r}")
    xre = np.asarray(xre, dtype=float)
    if xre.ndim != 2:
        raise InputError(f"expected a (d', n) feature matrix, got ndim={xre.ndim}")
    n = xre.shape[1]
    for name, block in (("label", y), ("domain", z)):
        b = np.asarray(block, dtype=float)
        cols = b.shape[-1] if b.ndim else 0
        if cols != n:
            raise InputError(f"{name} block has {cols} columns, expected {n}")
    if _is_constant_block(z):
        return 0.0, np.zeros_like(xre)
    if cfgs is None:
        cfgs = CondKernelConfig.resolve(xre, y, z)

    s2x = cfgs.x.bandwidth_sq
    kx = np.exp(-pairwise_sq_dists(xre) / s2x)
    ky = _block_entries(y, cfgs.y)
    kz = _block_entries(z, cfgs.z)
    if not np.all(np.isfinite(kx)):
        raise NumericalError("feature kernel matrix has non-finite entries")

    ridge = n * epsilon
    gxt = center(kx * ky)
    bx = _spd_inverse(gxt, ridge)
    rxt = np.eye(n) - ridge * bx
    rzt = np.eye(n) - ridge * _spd_inverse(center(kz * ky), ridge)
    ry = np.eye(n) - ridge * _spd_inverse(center(ky), ridge)
    s = np.eye(n) - ry

    srzs = s @ rzt @ s
    value = float(np.sum(rxt * srzs))

    dg = ridge * (bx @ srzs @ bx)
    dg = 0.5 * (dg + dg.T)
    dkx = center(dg) * ky
    a = dkx * kx
    grad = (4.0 / s2x) * (xre @ a - xre * a.sum(axis=1)[None, :])
    if not np.all(np.isfinite(grad)):
        raise NumericalError("gradient assembly produced non-finite entries")
    return value, grad


def cond_value(xre, y, z, cfgs: CondKernelConfig | None, epsilon: float) -> float:
    return cond_objective(xre, y, z, cfgs, epsilon)[0]


def grad_cond_wrt_features(xre, y, z, cfgs: CondKernelConfig | None,
                           epsilon: float) -> np.ndarray:
    return cond_objective(xre, y, z, cfgs, epsilon)[1]


def nocco_objective(xre, z, cfgs: CondKernelConfig | None,
                    epsilon: float) -> tuple[float, np.ndarray]:
    """Value and feature gradient of the unconditional trace objective.

    Reuses the conditional chain with a constant label block: K_Y = 1 makes
    R_Y = 0, so S = I and the objective reduces to Tr(R_Z R_X) exactly.
    """
    xre = np.asarray(xre, dtype=float)
    if xre.ndim != 2:
        raise InputError(f"expected a (d', n) feature matrix, got ndim={xre.ndim}")
    if cfgs is None:
        cfgs = CondKernelConfig(KernelConfig.from_data(xre), None, _label_config(z))
    return cond_objective(xre, np.ones((1, xre.shape[1])), z, cfgs, epsilon)


def finite_diff_check(objective, xre, analytic_grad, *, probes: int = 50,
                      step: float = 1e-5, seed: int = 0) -> GradCheckReport:
    """Compare an analytic gradient against central differences.

    ``objective`` is a scalar function of the feature matrix.  ``probes``
    coordinates are chosen without replacement by a seeded generator; the
    report's max_rel_error is max |g_num - g_ana| over the probed
    coordinates divided by (max |g_ana| + 1e-12) over the whole matrix.
    """
    if probes <= 0:
        raise InputError("no probes: finite-difference check needs probes >= 1")
    if step <= 0:
        raise InputError(f"step must be positive, got {step!r}")
    xre = np.asarray(xre, dtype=float)
    analytic_grad = np.asarray(analytic_grad, dtype=float)
    if analytic_grad.shape != xre.shape:
        raise InputError(f"gradient shape {analytic_grad.shape} != feature shape {xre.shape}")
    total = xre.size
    k = min(probes, total)
    flat_idx = np.random.default_rng(seed).choice(total, size=k, replace=False)
    denom = float(np.max(np.abs(analytic_grad))) + 1e-12
    worst = 0.0
    for fi in flat_idx:
        i, j = np.unravel_index(fi, xre.shape)
        xp = xre.copy()
        xp[i, j] += step
        fp = float(objective(xp))
        xp[i, j] -= 2.0 * step
        fm = float(objective(xp))
        g_num = (fp - fm) / (2.0 * step)
        worst = max(worst, abs(g_num - analytic_grad[i, j]) / denom)
    return GradCheckReport(worst, k, float(step))
