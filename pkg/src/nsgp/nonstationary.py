"""Nonstationary covariance constructions over local hyper-parameters.

Two kinds are supported. The locally scaled kind (PCLSK) gives every
point its own diagonal kernel matrix diag(l_x^2, l_y^2, l_t^2); pairs
combine through a determinant prefactor and the base family evaluated
at averaged-Mahalanobis distances, with the base family's own length
scales fixed to one so local scales carry all range information. The
latent-extension kind (LEIS) gives every point a scalar latent
coordinate and multiplies the stationary base covariance by a
squared-exponential in that coordinate.

Local parameters at arbitrary points always come from the predictive
means of the model's latent fields, never from raw stored values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ValidationError
from .gp_core import (
    GlobalHypers,
    ObservationSet,
    as_point,
    as_points,
    base_cov_from_sq,
    posterior,
    sq_displacements,
    stationary_cov_matrix,
)
from .latent_field import LatentField, latent_predict_mean

__all__ = [
    "NgpKind",
    "LocalParams",
    "FittedNGP",
    "pclsk_cov",
    "leis_cov",
    "pclsk_cov_matrix",
    "leis_cov_matrix",
    "ngp_cov_matrix",
    "ngp_predict",
]

LOG2 = math.log(2.0)


class NgpKind(str, Enum):
    PCLSK = "pclsk"
    LEIS = "leis"


@dataclass(frozen=True)
class LocalParams:
    """Per-point local hyper-parameters for one of the two kinds.

    For PCLSK: an (n, 3) array of log length scales per point.
    For LEIS: an (n,) array of unconstrained latent coordinates.
    """

    kind: NgpKind
    pclsk_log_scales: np.ndarray = None
    leis_coords: np.ndarray = None

    def __post_init__(self):
        kind = NgpKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is NgpKind.PCLSK:
            if self.pclsk_log_scales is None or self.leis_coords is not None:
                raise ValidationError("PCLSK locals need pclsk_log_scales only")
            z = np.asarray(self.pclsk_log_scales, dtype=float)
            if z.ndim != 2 or z.shape[1] != 3 or not np.all(np.isfinite(z)):
                raise ValidationError("pclsk_log_scales must be a finite (n, 3) array")
            z.setflags(write=False)
            object.__setattr__(self, "pclsk_log_scales", z)
        else:
            if self.leis_coords is None or self.pclsk_log_scales is not None:
                raise ValidationError("LEIS locals need leis_coords only")
            c = np.asarray(self.leis_coords, dtype=float).reshape(-1)
            if not np.all(np.isfinite(c)):
                raise ValidationError("leis_coords must be finite")
            c.setflags(write=False)
            object.__setattr__(self, "leis_coords", c)

    @classmethod
    def pclsk(cls, log_scales) -> "LocalParams":
        return cls(NgpKind.PCLSK, pclsk_log_scales=np.asarray(log_scales, dtype=float))

    @classmethod
    def leis(cls, coords) -> "LocalParams":
        return cls(NgpKind.LEIS, leis_coords=np.asarray(coords, dtype=float))

    @property
    def n(self) -> int:
        arr = self.pclsk_log_scales if self.kind is NgpKind.PCLSK else self.leis_coords
        return len(arr)


# ---------------------------------------------------------------------------
# pairwise constructions


def _pclsk_from_sq(dx2, dy2, dt2, za, zb, h: GlobalHypers) -> np.ndarray:
    """PCLSK matrix from per-axis squared displacements and log local scales.

    za: (n, 3), zb: (m, 3). The per-axis local variances are s = e^{2z};
    the prefactor per axis is (s_i s_j)^{1/4} / ((s_i + s_j)/2)^{1/2},
    accumulated in log space for stability.
    """
    log_pre = np.zeros(dx2.shape)
    q = [None, None, None]
    for d, d2 in enumerate((dx2, dy2, dt2)):
        zi = za[:, d][:, None]
        zj = zb[:, d][None, :]
        log_savg = np.logaddexp(2.0 * zi, 2.0 * zj) - LOG2
        log_pre += 0.5 * (zi + zj) - 0.5 * log_savg
        q[d] = d2 * np.exp(-log_savg)
    qs = q[0] + q[1]
    qt = q[2]
    return np.exp(log_pre) * base_cov_from_sq(h.base_kernel, h.sigma_f, qs, qt)


def _leis_from_sq(dx2, dy2, dt2, la, lb, h: GlobalHypers) -> np.ndarray:
    """LEIS matrix: stationary base times SE in the latent coordinate."""
    from .gp_core import _stationary_from_sq

    base = _stationary_from_sq(dx2, dy2, dt2, h)
    dl = (la[:, None] - lb[None, :]) / h.leis_latent_length
    return base * np.exp(-0.5 * dl * dl)


def pclsk_cov_matrix(A, B, log_scales_a, log_scales_b, h: GlobalHypers) -> np.ndarray:
    """Locally scaled covariance matrix between two point sets."""
    A = as_points(A)
    B = as_points(B)
    za = np.asarray(log_scales_a, dtype=float)
    zb = np.asarray(log_scales_b, dtype=float)
    if za.shape != (len(A), 3) or zb.shape != (len(B), 3):
        raise ValidationError("log local scales must be (n, 3) aligned with the points")
    dx2, dy2, dt2 = sq_displacements(A, B)
    return _pclsk_from_sq(dx2, dy2, dt2, za, zb, h)


def leis_cov_matrix(A, B, coords_a, coords_b, h: GlobalHypers) -> np.ndarray:
    """Latent-extension covariance matrix between two point sets."""
    A = as_points(A)
    B = as_points(B)
    la = np.asarray(coords_a, dtype=float).reshape(-1)
    lb = np.asarray(coords_b, dtype=float).reshape(-1)
    if len(la) != len(A) or len(lb) != len(B):
        raise ValidationError("latent coordinates must align with the points")
    dx2, dy2, dt2 = sq_displacements(A, B)
    return _leis_from_sq(dx2, dy2, dt2, la, lb, h)


def pclsk_cov(p, q, Sp, Sq, h: GlobalHypers) -> float:
    """Scalar locally scaled covariance.

    Sp and Sq are the diagonals of the two local kernel matrices, i.e.
    the per-axis squared length scales (l_x^2, l_y^2, l_t^2), which must
    be strictly positive.
    """
    Sp = np.asarray(Sp, dtype=float).reshape(-1)
    Sq = np.asarray(Sq, dtype=float).reshape(-1)
    if Sp.shape != (3,) or Sq.shape != (3,):
        raise ValidationError("local kernel diagonals need exactly 3 entries")
    if not (np.all(np.isfinite(Sp)) and np.all(np.isfinite(Sq))) or np.any(Sp <= 0) or np.any(Sq <= 0):
        raise ValidationError("local scales must be strictly positive and finite")
    za = 0.5 * np.log(Sp)[None, :]
    zb = 0.5 * np.log(Sq)[None, :]
    return float(pclsk_cov_matrix(as_point(p)[None], as_point(q)[None], za, zb, h)[0, 0])


def leis_cov(p, q, lp: float, lq: float, h: GlobalHypers) -> float:
    """Scalar latent-extension covariance at latent coordinates lp, lq."""
    if not (math.isfinite(lp) and math.isfinite(lq)):
        raise ValidationError("latent coordinates must be finite")
    return float(
        leis_cov_matrix(as_point(p)[None], as_point(q)[None], [lp], [lq], h)[0, 0]
    )


# ---------------------------------------------------------------------------
# fitted model


@dataclass(frozen=True)
class FittedNGP:
    """A nonstationary GP model: globals plus one latent field per local dim.

    PCLSK carries three latent fields ordered (log l_x, log l_y, log l_t);
    LEIS carries one. All fields share identical latent locations.
    """

    kind: NgpKind
    globals: GlobalHypers
    latent: tuple
    train: ObservationSet = None

    def __post_init__(self):
        kind = NgpKind(self.kind)
        object.__setattr__(self, "kind", kind)
        fields = tuple(self.latent)
        object.__setattr__(self, "latent", fields)
        want = 3 if kind is NgpKind.PCLSK else 1
        if len(fields) != want:
            raise ValidationError(f"{kind.value} needs {want} latent fields, got {len(fields)}")
        if not all(isinstance(f, LatentField) for f in fields):
            raise ValidationError("latent entries must be LatentField instances")
        first = fields[0].locations
        for f in fields[1:]:
            if f.locations.shape != first.shape or not np.array_equal(f.locations, first):
                raise ValidationError("latent fields must share identical latent locations")
        if kind is NgpKind.LEIS and self.globals.log_leis_latent_length is None:
            raise ValidationError("LEIS models need a latent length scale in globals")

    @property
    def latent_locations(self) -> np.ndarray:
        return self.latent[0].locations

    def locals_at(self, X) -> LocalParams:
        """Local parameters at arbitrary points, via latent predictive means."""
        X = as_points(X)
        if self.kind is NgpKind.PCLSK:
            z = np.column_stack([latent_predict_mean(f, X) for f in self.latent])
            return LocalParams.pclsk(z)
        return LocalParams.leis(latent_predict_mean(self.latent[0], X))

    def cov_matrix(self, A, B=None) -> np.ndarray:
        return ngp_cov_matrix(self, A, B)


def ngp_cov_matrix(model: FittedNGP, A, B=None) -> np.ndarray:
    """Nonstationary covariance matrix with locals inferred per point list.

    Locals are computed once per distinct point list; passing B=None (or
    the same array object) reuses A's locals, keeping the matrix exactly
    symmetric.
    """
    same = B is None or B is A
    A = as_points(A)
    la = model.locals_at(A)
    if same:
        B, lb = A, la
    else:
        B = as_points(B)
        lb = model.locals_at(B)
    dx2, dy2, dt2 = sq_displacements(A, B)
    if model.kind is NgpKind.PCLSK:
        return _pclsk_from_sq(dx2, dy2, dt2, la.pclsk_log_scales, lb.pclsk_log_scales, model.globals)
    return _leis_from_sq(dx2, dy2, dt2, la.leis_coords, lb.leis_coords, model.globals)


def ngp_predict(model: FittedNGP, cond, Xq):
    """GP posterior mean and variance vector under the nonstationary kernel."""
    cov = lambda P, Q: ngp_cov_matrix(model, P, Q)
    mean, covm = posterior(cond, cov, model.globals.sigma_n, Xq)
    return mean, np.diag(covm).copy()
