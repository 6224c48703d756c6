"""Stationary Gaussian-process machinery over spatio-temporal points.

Points live in (x, y, t). Every public operation accepts either an
``(n, 3)`` float array, a sequence of length-3 rows, or a sequence of
:class:`SpatioTemporalPoint`; internally everything is a float64 array
with one point per row. Hyper-parameters that must stay positive are
stored as logarithms so optimizers can move through an unconstrained
space.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.linalg import cho_solve, cholesky

from .errors import ClampedVarianceWarning, NumericalError, ValidationError

__all__ = [
    "KernelFamily",
    "SpatioTemporalPoint",
    "ObservationSet",
    "BaseKernelSpec",
    "GlobalHypers",
    "StationaryGP",
    "as_point",
    "as_points",
    "se_cov",
    "ch_cov",
    "stationary_cov_matrix",
    "cov_matrix",
    "chol_with_jitter",
    "log_marginal_likelihood",
    "posterior",
    "variance_clamp_count",
]

LOG_2PI = math.log(2.0 * math.pi)

# Predictive variances this far below zero are treated as roundoff and
# clamped silently; anything worse still clamps but triggers a warning.
VARIANCE_CLAMP_TOL = 1e-9

_clamp_count = 0


def variance_clamp_count() -> int:
    """Number of negative predictive variances clamped so far (diagnostic)."""
    return _clamp_count


class KernelFamily(str, Enum):
    """Supported stationary covariance families."""

    SE_ANISO = "se"
    CH_EX1 = "ch_ex1"
    CH_EX3 = "ch_ex3"

    @property
    def is_space_time(self) -> bool:
        return self in (KernelFamily.CH_EX1, KernelFamily.CH_EX3)


@dataclass(frozen=True)
class SpatioTemporalPoint:
    """A single location: two spatial coordinates and a time stamp."""

    x: float
    y: float
    t: float

    def __post_init__(self):
        for name in ("x", "y", "t"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValidationError(f"point coordinate {name} must be finite, got {v}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.t], dtype=float)


def as_point(p) -> np.ndarray:
    """Normalize a single point to a finite float64 array of shape (3,)."""
    if isinstance(p, SpatioTemporalPoint):
        return p.as_array()
    a = np.asarray(p, dtype=float).reshape(-1)
    if a.shape != (3,):
        raise ValidationError(f"a point needs exactly 3 coordinates, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError("point coordinates must be finite")
    return a


def as_points(X) -> np.ndarray:
    """Normalize a point collection to a finite float64 array of shape (n, 3)."""
    if isinstance(X, np.ndarray) and X.dtype == float and X.ndim == 2 and X.shape[1] == 3:
        a = X
    elif isinstance(X, SpatioTemporalPoint):
        a = X.as_array()[None, :]
    else:
        rows = [as_point(p) for p in X] if _is_point_sequence(X) else None
        a = np.array(rows, dtype=float) if rows is not None else np.asarray(X, dtype=float)
        if a.ndim == 1 and a.size == 0:
            a = a.reshape(0, 3)
    if a.ndim != 2 or a.shape[1] != 3:
        raise ValidationError(f"points must form an (n, 3) array, got shape {np.shape(X)}")
    if not np.all(np.isfinite(a)):
        raise ValidationError("point coordinates must be finite")
    return np.array(a, dtype=float)


def _is_point_sequence(X) -> bool:
    try:
        return len(X) > 0 and isinstance(X[0], SpatioTemporalPoint)
    except (TypeError, KeyError):
        return False


@dataclass(frozen=True)
class ObservationSet:
    """Immutable pairing of points with observed scalar values."""

    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        pts = as_points(self.points)
        vals = np.asarray(self.values, dtype=float).reshape(-1)
        if len(pts) != len(vals):
            raise ValidationError(
                f"points and values must align: {len(pts)} points vs {len(vals)} values"
            )
        if not np.all(np.isfinite(vals)):
            raise ValidationError("observed values must be finite")
        if len(pts) > 1 and len(np.unique(pts, axis=0)) != len(pts):
            raise ValidationError("duplicate points are not allowed in an observation set")
        pts.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return len(self.values)

    def subset(self, idx) -> "ObservationSet":
        idx = np.asarray(idx, dtype=int)
        return ObservationSet(self.points[idx], self.values[idx])


@dataclass(frozen=True)
class BaseKernelSpec:
    """Shape parameters of one covariance family, stored in log space.

    SE_ANISO uses per-axis length scales. The two nonseparable
    space-time families use a temporal decay parameter ``a``, a spatial
    decay parameter ``b`` and an amplitude ``sigma`` (their covariance
    at zero separation is ``sigma**2``).
    """

    family: KernelFamily
    log_length_scales: tuple = None
    log_a: float = None
    log_b: float = None
    log_sigma: float = None

    def __post_init__(self):
        fam = KernelFamily(self.family)
        object.__setattr__(self, "family", fam)
        if fam is KernelFamily.SE_ANISO:
            if self.log_length_scales is None or len(self.log_length_scales) != 3:
                raise ValidationError("SE_ANISO needs three log length scales")
            lls = tuple(float(v) for v in self.log_length_scales)
            if not all(math.isfinite(v) for v in lls):
                raise ValidationError("length scales must be positive and finite")
            object.__setattr__(self, "log_length_scales", lls)
            if any(v is not None for v in (self.log_a, self.log_b, self.log_sigma)):
                raise ValidationError("SE_ANISO does not take space-time parameters")
        else:
            if self.log_length_scales is not None:
                raise ValidationError(f"{fam.value} does not take length scales")
            for name in ("log_a", "log_b", "log_sigma"):
                v = getattr(self, name)
                if v is None or not math.isfinite(float(v)):
                    raise ValidationError(f"{fam.value} needs a finite {name}")
                object.__setattr__(self, name, float(v))

    @classmethod
    def se(cls, lx: float, ly: float, lt: float) -> "BaseKernelSpec":
        _require_positive(("lx", lx), ("ly", ly), ("lt", lt))
        return cls(KernelFamily.SE_ANISO, (math.log(lx), math.log(ly), math.log(lt)))

    @classmethod
    def ch(cls, family, a: float, b: float, sigma: float) -> "BaseKernelSpec":
        fam = KernelFamily(family)
        if not fam.is_space_time:
            raise ValidationError("ch() builds only the space-time families")
        _require_positive(("a", a), ("b", b), ("sigma", sigma))
        return cls(fam, None, math.log(a), math.log(b), math.log(sigma))

    @property
    def length_scales(self) -> np.ndarray:
        return np.exp(np.array(self.log_length_scales))

    @property
    def a(self) -> float:
        return math.exp(self.log_a)

    @property
    def b(self) -> float:
        return math.exp(self.log_b)

    @property
    def sigma(self) -> float:
        return math.exp(self.log_sigma)


def _require_positive(*pairs):
    for name, v in pairs:
        if not (math.isfinite(v) and v > 0):
            raise ValidationError(f"{name} must be positive and finite, got {v}")


@dataclass(frozen=True)
class GlobalHypers:
    """Global hyper-parameters of one GP model.

    ``sigma_n`` may be zero (noise-free); everything else is strictly
    positive. For the space-time families the amplitude lives on the
    base kernel itself, and ``log_sigma_f`` must agree with it so there
    is a single source of truth.
    """

    log_sigma_f: float
    log_sigma_n: float
    base_kernel: BaseKernelSpec
    log_leis_latent_length: float = None

    def __post_init__(self):
        if not math.isfinite(self.log_sigma_f):
            raise ValidationError("sigma_f must be positive and finite")
        if math.isnan(self.log_sigma_n) or self.log_sigma_n == math.inf:
            raise ValidationError("sigma_n must be finite and non-negative")
        if self.base_kernel.family.is_space_time:
            if self.log_sigma_f != self.base_kernel.log_sigma:
                raise ValidationError(
                    "for space-time families sigma_f must equal the kernel amplitude"
                )
        if self.log_leis_latent_length is not None and not math.isfinite(
            self.log_leis_latent_length
        ):
            raise ValidationError("the latent length scale must be positive and finite")

    @classmethod
    def from_values(
        cls,
        sigma_f: float,
        sigma_n: float,
        base_kernel: BaseKernelSpec,
        leis_latent_length: float = None,
    ) -> "GlobalHypers":
        _require_positive(("sigma_f", sigma_f))
        if not (math.isfinite(sigma_n) and sigma_n >= 0):
            raise ValidationError(f"sigma_n must be non-negative and finite, got {sigma_n}")
        log_ll = None
        if leis_latent_length is not None:
            _require_positive(("leis_latent_length", leis_latent_length))
            log_ll = math.log(leis_latent_length)
        log_sn = math.log(sigma_n) if sigma_n > 0 else -math.inf
        return cls(math.log(sigma_f), log_sn, base_kernel, log_ll)

    @property
    def sigma_f(self) -> float:
        return math.exp(self.log_sigma_f)

    @property
    def sigma_n(self) -> float:
        return math.exp(self.log_sigma_n) if self.log_sigma_n != -math.inf else 0.0

    @property
    def leis_latent_length(self) -> float:
        if self.log_leis_latent_length is None:
            raise ValidationError("this model has no latent length scale")
        return math.exp(self.log_leis_latent_length)


# ---------------------------------------------------------------------------
# kernel evaluation


def sq_displacements(A: np.ndarray, B: np.ndarray):
    """Pairwise squared displacements per axis: three (len(A), len(B)) arrays."""
    dx = A[:, 0][:, None] - B[:, 0][None, :]
    dy = A[:, 1][:, None] - B[:, 1][None, :]
    dt = A[:, 2][:, None] - B[:, 2][None, :]
    return dx * dx, dy * dy, dt * dt


def base_cov_from_sq(base: BaseKernelSpec, sigma_f: float, qs, qt):
    """Covariance of a base family at squared separations (qs spatial, qt temporal).

    For SE_ANISO the separations must already be scaled by the length
    scales (this is how the locally scaled construction feeds its
    Mahalanobis distances through with unit internal scales). The
    space-time families take raw squared separations; with d = 2 spatial
    dimensions they are

        EX1: sigma^2 * exp(-b^2 qs / (a^2 qt + 1)) / (a^2 qt + 1)
        EX3: sigma^2 * (a^2 qt + 1) / ((a^2 qt + 1)^2 + b^2 qs)^(3/2)
    """
    qs = np.asarray(qs, dtype=float)
    qt = np.asarray(qt, dtype=float)
    if base.family is KernelFamily.SE_ANISO:
        return sigma_f**2 * np.exp(-0.5 * (qs + qt))
    a2, b2, s2 = base.a**2, base.b**2, base.sigma**2
    g = a2 * qt + 1.0
    if base.family is KernelFamily.CH_EX1:
        return s2 * np.exp(-b2 * qs / g) / g
    return s2 * g / (g * g + b2 * qs) ** 1.5


def stationary_cov_matrix(A, B, h: GlobalHypers) -> np.ndarray:
    """Noise-free stationary covariance matrix between two point sets."""
    A = as_points(A)
    B = as_points(B)
    dx2, dy2, dt2 = sq_displacements(A, B)
    return _stationary_from_sq(dx2, dy2, dt2, h)


def _stationary_from_sq(dx2, dy2, dt2, h: GlobalHypers) -> np.ndarray:
    base = h.base_kernel
    if base.family is KernelFamily.SE_ANISO:
        lx2, ly2, lt2 = np.exp(2.0 * np.array(base.log_length_scales))
        return base_cov_from_sq(base, h.sigma_f, dx2 / lx2 + dy2 / ly2, dt2 / lt2)
    return base_cov_from_sq(base, h.sigma_f, dx2 + dy2, dt2)


def se_cov(p, q, h: GlobalHypers) -> float:
    """Anisotropic squared-exponential covariance between two points."""
    if h.base_kernel.family is not KernelFamily.SE_ANISO:
        raise ValidationError("se_cov needs an SE_ANISO base kernel")
    return float(stationary_cov_matrix(as_point(p)[None], as_point(q)[None], h)[0, 0])


def ch_cov(p, q, h: GlobalHypers) -> float:
    """Nonseparable space-time covariance between two points.

    Depends on the spatial separation norm and the temporal lag only,
    so it is symmetric under swapping the arguments and under sign
    flips of the displacement.
    """
    if not h.base_kernel.family.is_space_time:
        raise ValidationError("ch_cov needs a space-time base kernel")
    return float(stationary_cov_matrix(as_point(p)[None], as_point(q)[None], h)[0, 0])


def kernel_fn(h: GlobalHypers):
    """Matrix-level kernel callable for this set of hypers."""

    def cov(A, B):
        return stationary_cov_matrix(A, B, h)

    return cov


def cov_matrix(A, B, kfn) -> np.ndarray:
    """Matrix of pairwise kernel values, M[i, j] = kfn(A[i], B[j]).

    ``kfn`` is a scalar kernel on two points. This is the generic slow
    path used by reference checks; the vectorized family evaluators are
    preferred in production code.
    """
    A = as_points(A)
    B = as_points(B)
    M = np.empty((len(A), len(B)), dtype=float)
    for i in range(len(A)):
        for j in range(len(B)):
            M[i, j] = kfn(A[i], B[j])
    return M


# ---------------------------------------------------------------------------
# linear algebra


def chol_with_jitter(K: np.ndarray):
    """Lower Cholesky factor of K, escalating diagonal jitter on failure.

    Attempts no jitter first, then ``1e-10 * mean(diag)`` growing by
    factors of ten up to ``1e-4 * mean(diag)``. Raises
    :class:`NumericalError` (carrying the last jitter tried) when even
    the largest jitter fails.
    """
    K = np.asarray(K, dtype=float)
    if K.size and not np.all(np.isfinite(K)):
        raise NumericalError("covariance matrix contains non-finite entries")
    if K.size == 0:
        return np.zeros_like(K), 0.0
    scale = float(np.mean(np.diag(K)))
    jitters = [0.0] + [scale * 10.0**e for e in range(-10, -3)]
    last = 0.0
    for jit in jitters:
        last = jit
        try:
            L = cholesky(K + jit * np.eye(len(K)), lower=True)
            return L, jit
        except np.linalg.LinAlgError:
            continue
        except ValueError:
            continue
    raise NumericalError(
        f"matrix not positive definite even with jitter {last:.3e}", jitter=last
    )


def log_marginal_likelihood(data: ObservationSet, cov_fn, sigma_n: float) -> float:
    """Log marginal likelihood of observations under a zero-mean GP.

    ``cov_fn(A, B)`` must return the noise-free covariance matrix;
    observation noise ``sigma_n`` is added on the diagonal before
    factorization (with the jitter escalation policy on top).
    """
    if data.n == 0:
        return 0.0
    K = np.asarray(cov_fn(data.points, data.points), dtype=float)
    Ky = K + sigma_n**2 * np.eye(data.n)
    L, _ = chol_with_jitter(Ky)
    alpha = cho_solve((L, True), data.values)
    return float(
        -0.5 * data.values @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * data.n * LOG_2PI
    )


def posterior(data, cov_fn, sigma_n: float, Xq):
    """Posterior mean vector and covariance matrix at query points.

    With no conditioning data the prior (zero mean, prior covariance)
    is returned. Slightly negative predictive variances from roundoff
    are clamped to zero; clamps beyond ``VARIANCE_CLAMP_TOL`` also emit
    a :class:`ClampedVarianceWarning`.
    """
    global _clamp_count
    Xq = as_points(Xq)
    if data is None or data.n == 0:
        mean = np.zeros(len(Xq))
        cov = np.asarray(cov_fn(Xq, Xq), dtype=float)
        return mean, cov
    K = np.asarray(cov_fn(data.points, data.points), dtype=float)
    Ky = K + sigma_n**2 * np.eye(data.n)
    L, _ = chol_with_jitter(Ky)
    Kqx = np.asarray(cov_fn(Xq, data.points), dtype=float)
    alpha = cho_solve((L, True), data.values)
    mean = Kqx @ alpha
    V = np.linalg.solve(L, Kqx.T)
    cov = np.asarray(cov_fn(Xq, Xq), dtype=float) - V.T @ V
    diag = np.diag(cov).copy()
    bad = diag < 0.0
    if np.any(bad):
        _clamp_count += int(np.sum(bad))
        if np.any(diag < -VARIANCE_CLAMP_TOL):
            warnings.warn(
                f"clamped predictive variance as low as {diag.min():.3e}",
                ClampedVarianceWarning,
            )
        np.fill_diagonal(cov, np.where(bad, 0.0, diag))
    return mean, cov


@dataclass(frozen=True)
class StationaryGP:
    """A stationary GP model: global hypers plus the shared prediction carry."""

    hypers: GlobalHypers

    def cov_matrix(self, A, B=None) -> np.ndarray:
        return stationary_cov_matrix(A, A if B is None else B, self.hypers)

    @property
    def globals(self) -> GlobalHypers:
        return self.hypers

    def lml(self, data: ObservationSet) -> float:
        return log_marginal_likelihood(data, kernel_fn(self.hypers), self.hypers.sigma_n)

    def predict(self, cond, Xq):
        return posterior(cond, kernel_fn(self.hypers), self.hypers.sigma_n, Xq)
