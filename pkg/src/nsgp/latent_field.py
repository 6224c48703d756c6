"""Stationary latent GP over local hyper-parameters.

A latent field stores values of one scalar local parameter at a sparse
set of latent locations, together with the hyper-parameters of a
stationary squared-exponential GP over (x, y, t). Its zero-mean
predictive mean spreads the local parameter across the whole input
domain; its own log marginal likelihood acts as the regularizer in the
joint model objective; and the joint optimizer lives here as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve
from scipy.optimize import minimize

from .errors import NumericalError, OptimizationError, ValidationError
from .gp_core import (
    BaseKernelSpec,
    GlobalHypers,
    KernelFamily,
    ObservationSet,
    as_points,
    base_cov_from_sq,
    chol_with_jitter,
    log_marginal_likelihood,
    sq_displacements,
)

__all__ = [
    "LatentHypers",
    "LatentField",
    "OptimizerOptions",
    "latent_cov_matrix",
    "latent_predict_mean",
    "latent_lml",
    "joint_objective",
    "joint_optimize",
]


@dataclass(frozen=True)
class LatentHypers:
    """Hypers of one latent GP: signal sd, (x, y, t) length scales, jitter sd.

    All stored as logs; the jitter doubles as the observation noise of
    the latent values and as the floor keeping interpolation systems
    well conditioned.
    """

    log_signal_sd: float
    log_lx: float
    log_ly: float
    log_lt: float
    log_jitter_sd: float

    def __post_init__(self):
        for name in ("log_signal_sd", "log_lx", "log_ly", "log_lt", "log_jitter_sd"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValidationError(f"{name} must be finite, got {v}")
            object.__setattr__(self, name, float(v))

    @classmethod
    def from_values(cls, signal_sd: float, length_scales, jitter_sd: float) -> "LatentHypers":
        vals = [signal_sd, *length_scales, jitter_sd]
        if len(vals) != 5:
            raise ValidationError("length_scales must supply (x, y, t) scales")
        if not all(math.isfinite(v) and v > 0 for v in vals):
            raise ValidationError("latent hypers must all be positive and finite")
        return cls(*(math.log(v) for v in vals))

    @property
    def signal_sd(self) -> float:
        return math.exp(self.log_signal_sd)

    @property
    def length_scales(self) -> np.ndarray:
        return np.exp(np.array([self.log_lx, self.log_ly, self.log_lt]))

    @property
    def jitter_sd(self) -> float:
        return math.exp(self.log_jitter_sd)

    def as_globals(self) -> GlobalHypers:
        base = BaseKernelSpec(KernelFamily.SE_ANISO, (self.log_lx, self.log_ly, self.log_lt))
        return GlobalHypers(self.log_signal_sd, self.log_jitter_sd, base)

    def param_vector(self) -> np.ndarray:
        return np.array(
            [self.log_signal_sd, self.log_lx, self.log_ly, self.log_lt, self.log_jitter_sd]
        )

    @classmethod
    def from_vector(cls, v) -> "LatentHypers":
        return cls(*(float(x) for x in v))


@dataclass(frozen=True)
class LatentField:
    """Values of one local parameter at latent locations, with their GP."""

    locations: np.ndarray
    values: np.ndarray
    hypers: LatentHypers
    frozen_prefix: int = 0

    def __post_init__(self):
        loc = as_points(self.locations)
        vals = np.asarray(self.values, dtype=float).reshape(-1)
        if len(loc) == 0:
            raise ValidationError("a latent field needs at least one latent location")
        if len(loc) != len(vals):
            raise ValidationError("latent locations and values must align")
        if not np.all(np.isfinite(vals)):
            raise ValidationError("latent values must be finite")
        if len(np.unique(loc, axis=0)) != len(loc):
            raise ValidationError("latent locations must be distinct")
        if not 0 <= self.frozen_prefix <= len(vals):
            raise ValidationError(
                f"frozen_prefix {self.frozen_prefix} out of range for {len(vals)} values"
            )
        loc.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "values", vals)

    @property
    def m(self) -> int:
        return len(self.values)


def latent_cov_matrix(A, B, hypers: LatentHypers) -> np.ndarray:
    """Noise-free latent SE covariance between two point sets."""
    A = as_points(A)
    B = as_points(B)
    dx2, dy2, dt2 = sq_displacements(A, B)
    ls2 = np.exp(2.0 * np.array([hypers.log_lx, hypers.log_ly, hypers.log_lt]))
    q = dx2 / ls2[0] + dy2 / ls2[1] + dt2 / ls2[2]
    return hypers.signal_sd**2 * np.exp(-0.5 * q)


def latent_predict_mean(field: LatentField, Xq) -> np.ndarray:
    """Zero-mean predictive mean of the local parameter at query points.

    Interpolates the stored values at the latent locations (exactly, as
    jitter goes to zero) and reverts to zero far away.
    """
    Xq = as_points(Xq)
    Kmm = latent_cov_matrix(field.locations, field.locations, field.hypers)
    Kmm += field.hypers.jitter_sd**2 * np.eye(field.m)
    L, _ = chol_with_jitter(Kmm)
    Kqm = latent_cov_matrix(Xq, field.locations, field.hypers)
    return Kqm @ cho_solve((L, True), field.values)


def latent_lml(field: LatentField) -> float:
    """Log marginal likelihood of the latent values under their own GP."""
    data = ObservationSet(field.locations, field.values)
    cov = lambda A, B: latent_cov_matrix(A, B, field.hypers)
    return log_marginal_likelihood(data, cov, field.hypers.jitter_sd)


# ---------------------------------------------------------------------------
# joint ML-II objective and optimizer


@dataclass(frozen=True)
class OptimizerOptions:
    """Knobs of the multi-start quasi-Newton optimizer.

    Gradients are analytic. Restarts beyond the first draw Gaussian
    starting points. With ``explore_latent`` on, global log hypers stay
    anchored at the warm start with sd ``perturb_sd`` while the latent
    block re-anchors at its canonical initialization (values at zero,
    length scales at half the domain extent) with the wider sds below:
    an uninformative warm start sits on a saddle of the latent values,
    and only wide exploration finds the basin. Once a stage has real
    latent structure, that same width is pure risk, so refinement
    stages turn ``explore_latent`` off and every restart perturbs
    around the warm start with sd ``perturb_sd``. ``ftol_rel`` is the
    relative objective-improvement stopping threshold per restart.
    """

    restarts: int = 4
    max_iter: int = 200
    ftol_rel: float = 1e-5
    perturb_sd: float = 0.3
    latent_length_perturb_sd: float = 1.0
    latent_value_perturb_sd: float = 1.5
    explore_latent: bool = True


def _check_fields(kind, fields):
    fields = tuple(fields)
    if kind is None or not fields:
        if fields:
            raise ValidationError("a kind is required when latent fields are present")
        return fields
    from .nonstationary import NgpKind

    want = 3 if NgpKind(kind) is NgpKind.PCLSK else 1
    if len(fields) != want:
        raise ValidationError(f"{NgpKind(kind).value} needs {want} latent fields, got {len(fields)}")
    return fields


def _model_cov_matrix(data_points, kind, globals_, fields, sq=None):
    """Training covariance under the model implied by (kind, fields).

    ``sq`` optionally carries precomputed squared displacements of the
    training points; the optimizer reuses one set across evaluations.
    """
    from .gp_core import _stationary_from_sq
    from .nonstationary import NgpKind, _leis_from_sq, _pclsk_from_sq

    dx2, dy2, dt2 = sq_displacements(data_points, data_points) if sq is None else sq
    if not fields:
        return _stationary_from_sq(dx2, dy2, dt2, globals_)
    if NgpKind(kind) is NgpKind.PCLSK:
        z = np.column_stack([latent_predict_mean(f, data_points) for f in fields])
        return _pclsk_from_sq(dx2, dy2, dt2, z, z, globals_)
    coords = latent_predict_mean(fields[0], data_points)
    return _leis_from_sq(dx2, dy2, dt2, coords, coords, globals_)


def joint_objective(data: ObservationSet, kind, globals_: GlobalHypers, fields, _sq=None) -> float:
    """Data log marginal likelihood under the nonstationary kernel plus
    the latent GPs' own log marginal likelihoods.

    With no latent fields this degenerates to the stationary lml and is
    the path the stationary fit optimizes. Numerical failures yield
    -inf so optimizers can reject the parameter point.
    """
    fields = _check_fields(kind, fields)
    # optimizer line searches probe extreme hypers; over/underflow there
    # must surface as the -inf sentinel, not as warnings
    try:
        with np.errstate(all="ignore"):
            K = _model_cov_matrix(data.points, kind, globals_, fields, _sq)
            Ky = K + globals_.sigma_n**2 * np.eye(data.n)
            L, _ = chol_with_jitter(Ky)
            alpha = cho_solve((L, True), data.values)
            value = float(
                -0.5 * data.values @ alpha
                - np.sum(np.log(np.diag(L)))
                - 0.5 * data.n * math.log(2 * math.pi)
            )
            for f in fields:
                value += latent_lml(f)
    except (NumericalError, OverflowError, FloatingPointError, np.linalg.LinAlgError):
        return -math.inf
    return value if math.isfinite(value) else -math.inf


class _Packer:
    """Maps (globals, fields) to and from one unconstrained vector.

    Positivity-constrained hypers travel as logs, latent values as-is.
    Frozen prefixes of latent values never enter the vector; a field
    with a fully frozen prefix contributes no free parameters at all
    (its hypers are pinned too, so it is a constant regularizer). For
    the locally scaled kind the base kernel's own SE length scales are
    excluded because the assembly never reads them.

    The latent jitter sd stays fixed: it is a conditioning device, not
    a statistical parameter, and freeing it opens an unbounded ridge of
    the objective at all-zero latent values (signal and jitter shrink
    together while the data term never changes), which would beat any
    genuine fit under the pure-max restart reduction.
    """

    def __init__(self, kind, globals_: GlobalHypers, fields):
        from .nonstationary import NgpKind

        self.kind = None if kind is None else NgpKind(kind)
        self.fields = tuple(fields)
        self.family = globals_.base_kernel.family
        self.has_fields = bool(self.fields)
        self.glob_se_lengths = self.family is KernelFamily.SE_ANISO and not (
            self.has_fields and self.kind is NgpKind.PCLSK
        )
        self.glob_latent_length = self.has_fields and self.kind is NgpKind.LEIS
        if self.glob_latent_length and globals_.log_leis_latent_length is None:
            raise ValidationError("LEIS optimization needs a latent length scale")

    def pack(self, globals_: GlobalHypers, fields) -> np.ndarray:
        parts = [globals_.log_sigma_f, globals_.log_sigma_n]
        if self.family is KernelFamily.SE_ANISO:
            if self.glob_se_lengths:
                parts.extend(globals_.base_kernel.log_length_scales)
        else:
            parts.extend([globals_.base_kernel.log_a, globals_.base_kernel.log_b])
        if self.glob_latent_length:
            parts.append(globals_.log_leis_latent_length)
        for f in fields:
            if f.frozen_prefix == f.m:
                continue
            h = f.hypers
            parts.extend([h.log_signal_sd, h.log_lx, h.log_ly, h.log_lt])
            parts.extend(f.values[f.frozen_prefix :])
        return np.array(parts, dtype=float)

    def unpack(self, x: np.ndarray, template_globals: GlobalHypers, template_fields):
        i = 0

        def take(k):
            nonlocal i
            out = x[i : i + k]
            i += k
            return out

        log_sf, log_sn = take(2)
        base = template_globals.base_kernel
        if self.family is KernelFamily.SE_ANISO:
            lls = tuple(take(3)) if self.glob_se_lengths else base.log_length_scales
            base = BaseKernelSpec(KernelFamily.SE_ANISO, tuple(float(v) for v in lls))
        else:
            log_a, log_b = take(2)
            base = BaseKernelSpec(self.family, None, float(log_a), float(log_b), float(log_sf))
        log_ll = template_globals.log_leis_latent_length
        if self.glob_latent_length:
            log_ll = float(take(1)[0])
        globals_ = GlobalHypers(float(log_sf), float(log_sn), base, log_ll)
        fields = []
        for f in template_fields:
            if f.frozen_prefix == f.m:
                fields.append(f)
                continue
            hypers = LatentHypers.from_vector(np.append(take(4), f.hypers.log_jitter_sd))
            free = take(f.m - f.frozen_prefix)
            values = np.concatenate([f.values[: f.frozen_prefix], free])
            fields.append(LatentField(f.locations, values, hypers, f.frozen_prefix))
        return globals_, tuple(fields)

    # entry codes for restart policy: global log hyper, latent signal
    # log, latent length log (with axis), latent value
    GLOBAL, LAT_SIGNAL, LAT_LENGTH, LAT_VALUE = range(4)

    def entry_meta(self):
        """Per-entry (code, axis) aligned with the packed vector."""
        meta = [(self.GLOBAL, -1)] * 2
        if self.family is KernelFamily.SE_ANISO:
            if self.glob_se_lengths:
                meta += [(self.GLOBAL, -1)] * 3
        else:
            meta += [(self.GLOBAL, -1)] * 2
        if self.glob_latent_length:
            meta.append((self.GLOBAL, -1))
        for f in self.fields:
            if f.frozen_prefix == f.m:
                continue
            meta.append((self.LAT_SIGNAL, -1))
            meta += [(self.LAT_LENGTH, d) for d in range(3)]
            meta += [(self.LAT_VALUE, -1)] * (f.m - f.frozen_prefix)
        return meta


def _half_extent_logs(points: np.ndarray) -> np.ndarray:
    """Log of half the per-axis domain extent (degenerate axes count as
    extent one).

    This is the canonical latent length-scale initialization and the
    anchor for restart exploration of those parameters.
    """
    ext = np.ptp(points, axis=0)
    ext = np.where(ext > 1e-9, ext, 1.0)
    return np.log(ext / 2.0)


def _base_log_derivs(base: BaseKernelSpec, qs, qt):
    """Elementwise d log(base cov) in (qs, qt, log a, log b) for the
    space-time families, at squared separations (qs, qt)."""
    a2, b2 = base.a**2, base.b**2
    g = a2 * qt + 1.0
    if base.family is KernelFamily.CH_EX1:
        r_s = -b2 / g
        dlog_dg = b2 * qs / (g * g) - 1.0 / g
    else:
        den = g * g + b2 * qs
        r_s = -1.5 * b2 / den
        dlog_dg = 1.0 / g - 3.0 * g / den
    return r_s, dlog_dg * a2, dlog_dg * 2.0 * (g - 1.0), 2.0 * r_s * qs


def _joint_value_and_grad(data: ObservationSet, kind, globals_: GlobalHypers, fields, packer, sq):
    """Joint objective and its gradient in the packed coordinates.

    The value replicates :func:`joint_objective` operation for
    operation. Returns (-inf, None) where the objective is numerically
    infeasible. The gradient of the data term is 0.5 <G, dK/dtheta>
    with G = alpha alpha^T - Ky^{-1}; latent values and hypers chain
    through the interpolation z = Kxm Kmm^{-1} v and pick up their own
    regularizer terms.
    """
    from scipy.special import expit

    from .nonstationary import NgpKind

    fields = _check_fields(kind, fields)
    try:
        with np.errstate(all="ignore"):
            dx2, dy2, dt2 = sq_displacements(data.points, data.points) if sq is None else sq
            n = data.n
            base = globals_.base_kernel

            # latent interpolation factors, shared by value and gradient
            interp = []
            for f in fields:
                Km_nojit = latent_cov_matrix(f.locations, f.locations, f.hypers)
                Km = Km_nojit + f.hypers.jitter_sd**2 * np.eye(f.m)
                Lm, _ = chol_with_jitter(Km)
                beta = cho_solve((Lm, True), f.values)
                Kxm = latent_cov_matrix(data.points, f.locations, f.hypers)
                interp.append((Km_nojit, Lm, beta, Kxm, Kxm @ beta))

            kind_e = NgpKind(kind) if fields else None
            w_mats = q_mats = dl = None
            if kind_e is NgpKind.PCLSK:
                Z = np.column_stack([it[4] for it in interp])
                log_pre = np.zeros(dx2.shape)
                q_mats, w_mats = [None] * 3, [None] * 3
                for d, d2 in enumerate((dx2, dy2, dt2)):
                    zi = Z[:, d][:, None]
                    zj = Z[:, d][None, :]
                    log_savg = np.logaddexp(2.0 * zi, 2.0 * zj) - math.log(2.0)
                    log_pre += 0.5 * (zi + zj) - 0.5 * log_savg
                    q_mats[d] = d2 * np.exp(-log_savg)
                    w_mats[d] = 2.0 * expit(2.0 * (zi - zj))
                qs, qt = q_mats[0] + q_mats[1], q_mats[2]
                K = np.exp(log_pre) * base_cov_from_sq(base, globals_.sigma_f, qs, qt)
            elif kind_e is NgpKind.LEIS:
                from .gp_core import _stationary_from_sq

                z = interp[0][4]
                B = _stationary_from_sq(dx2, dy2, dt2, globals_)
                dl = (z[:, None] - z[None, :]) / globals_.leis_latent_length
                K = B * np.exp(-0.5 * dl * dl)
                qs, qt = dx2 + dy2, dt2
            else:
                from .gp_core import _stationary_from_sq

                K = _stationary_from_sq(dx2, dy2, dt2, globals_)
                qs, qt = dx2 + dy2, dt2

            Ky = K + globals_.sigma_n**2 * np.eye(n)
            L, _ = chol_with_jitter(Ky)
            alpha = cho_solve((L, True), data.values)
            value = float(
                -0.5 * data.values @ alpha
                - np.sum(np.log(np.diag(L)))
                - 0.5 * n * math.log(2 * math.pi)
            )
            for f, (Km_nojit, Lm, beta, Kxm, z) in zip(fields, interp):
                value += float(
                    -0.5 * f.values @ beta
                    - np.sum(np.log(np.diag(Lm)))
                    - 0.5 * f.m * math.log(2 * math.pi)
                )
            if not math.isfinite(value):
                return -math.inf, None

            G = np.outer(alpha, alpha) - cho_solve((L, True), np.eye(n))
            parts = [float(np.sum(G * K)), globals_.sigma_n**2 * float(np.trace(G))]
            if base.family is KernelFamily.SE_ANISO:
                if packer.glob_se_lengths:
                    ls2 = np.exp(2.0 * np.array(base.log_length_scales))
                    for d, d2 in enumerate((dx2, dy2, dt2)):
                        parts.append(0.5 * float(np.sum(G * K * (d2 / ls2[d]))))
            else:
                _, _, c_a, c_b = _base_log_derivs(base, qs, qt)
                parts.append(0.5 * float(np.sum(G * K * c_a)))
                parts.append(0.5 * float(np.sum(G * K * c_b)))
            if packer.glob_latent_length:
                parts.append(0.5 * float(np.sum(G * K * dl * dl)))

            for d, (f, (Km_nojit, Lm, beta, Kxm, z)) in enumerate(zip(fields, interp)):
                if f.frozen_prefix == f.m:
                    continue
                if kind_e is NgpKind.LEIS:
                    M = G * K
                    ll2 = globals_.leis_latent_length ** 2
                    grad_z = (M @ z - z * M.sum(axis=1)) / ll2
                else:
                    if base.family is KernelFamily.SE_ANISO:
                        r_d = -0.5
                    else:
                        r_s, r_t, _, _ = _base_log_derivs(base, qs, qt)
                        r_d = r_t if d == 2 else r_s
                    D = K * (0.5 - 0.5 * w_mats[d] - r_d * q_mats[d] * w_mats[d])
                    grad_z = np.sum(G * D, axis=1)
                u = Kxm.T @ grad_z
                wv = cho_solve((Lm, True), u)
                Gm = np.outer(beta, beta) - cho_solve((Lm, True), np.eye(f.m))
                Kb = Km_nojit @ beta
                parts.append(
                    2.0 * float(u @ beta) - 2.0 * float(wv @ Kb) + float(np.sum(Gm * Km_nojit))
                )
                sq_mm = sq_displacements(f.locations, f.locations)
                sq_xm = sq_displacements(data.points, f.locations)
                lz2 = np.exp(
                    2.0 * np.array([f.hypers.log_lx, f.hypers.log_ly, f.hypers.log_lt])
                )
                for a in range(3):
                    kq_mm = Km_nojit * (sq_mm[a] / lz2[a])
                    data_part = float(grad_z @ ((Kxm * (sq_xm[a] / lz2[a])) @ beta)) - float(
                        wv @ (kq_mm @ beta)
                    )
                    parts.append(data_part + 0.5 * float(np.sum(Gm * kq_mm)))
                parts.extend(wv[f.frozen_prefix :] - beta[f.frozen_prefix :])
            return value, np.array(parts, dtype=float)
    except (NumericalError, OverflowError, FloatingPointError, np.linalg.LinAlgError):
        return -math.inf, None


def joint_optimize(
    data: ObservationSet,
    kind,
    globals_: GlobalHypers,
    fields,
    *,
    seed: int = 0,
    options: OptimizerOptions = OptimizerOptions(),
):
    """Maximize the joint objective by seeded multi-start quasi-Newton.

    Returns (globals, fields, achieved objective). The best parameter
    vector ever evaluated is tracked across restarts, so the achieved
    objective is never below the initialization's (monotone-improvement
    contract). Frozen latent values pass through bit-for-bit.
    """
    fields = _check_fields(kind, fields)
    packer = _Packer(kind, globals_, fields)
    x0 = packer.pack(globals_, fields)
    f0 = joint_objective(data, kind, globals_, fields)
    if not math.isfinite(f0):
        raise OptimizationError("initialization is numerically infeasible")
    if x0.size == 0:
        return globals_, fields, f0

    best = {"x": x0, "f": f0}
    sq = sq_displacements(data.points, data.points)

    def neg_objective(x):
        # large finite penalty with a zero gradient keeps line searches
        # usable where the objective is -inf or the point is malformed
        if not np.all(np.isfinite(x)):
            return 1e12, np.zeros_like(x)
        g, fl = packer.unpack(x, globals_, fields)
        val, grad = _joint_value_and_grad(data, kind, g, fl, packer, sq)
        if val > best["f"]:
            best["x"] = x.copy()
            best["f"] = val
        if not math.isfinite(val):
            return 1e12, np.zeros_like(x)
        return -val, -grad

    # restart anchors: globals stay at the warm start; the latent block
    # re-anchors at its canonical initialization (exploration mode) or
    # stays at the warm start too (refinement mode)
    anchor = x0.copy()
    sds = np.full(x0.shape, options.perturb_sd)
    if fields and options.explore_latent:
        half_ext = _half_extent_logs(data.points)
        for i, (code, axis) in enumerate(packer.entry_meta()):
            if code == _Packer.LAT_SIGNAL:
                anchor[i] = 0.0
            elif code == _Packer.LAT_LENGTH:
                anchor[i] = half_ext[axis]
                sds[i] = options.latent_length_perturb_sd
            elif code == _Packer.LAT_VALUE:
                anchor[i] = 0.0
                sds[i] = options.latent_value_perturb_sd

    rng = np.random.default_rng(seed)
    failures = []
    for r in range(max(1, options.restarts)):
        start = x0 if r == 0 else anchor + sds * rng.normal(0.0, 1.0, size=x0.shape)
        try:
            minimize(
                neg_objective,
                start,
                method="L-BFGS-B",
                jac=True,
                options={"maxiter": options.max_iter, "ftol": options.ftol_rel},
            )
        except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
            failures.append(f"restart {r}: {exc}")
            continue
    if not math.isfinite(best["f"]):
        raise OptimizationError(
            "all restarts failed numerically: " + "; ".join(failures) if failures else
            "all restarts failed numerically"
        )
    g, fl = packer.unpack(best["x"], globals_, fields)
    return g, fl, best["f"]
