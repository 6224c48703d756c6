"""Adaptive fitting loop for nonstationary space-time GPs.

The driver alternates between two moves: greedily place a batch of
latent locations by mutual information under the current latent kernel,
then jointly re-optimize all free hyper-parameters with the previously
learned local values held fixed. Iteration 0 bootstraps from a plain
stationary ML-II fit, so a run with c = 0 is exactly the non-adaptive
baseline: one MI placement under the stationary kernel, one joint fit.

Every stage is seeded from the run seed, and each iteration's warm
start reuses the previous optimum, so two runs with the same inputs
produce identical traces.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import NsgpError, StageError, ValidationError
from .gp_core import (
    BaseKernelSpec,
    GlobalHypers,
    KernelFamily,
    ObservationSet,
    as_points,
    stationary_cov_matrix,
)
from .latent_field import (
    LatentField,
    LatentHypers,
    OptimizerOptions,
    joint_objective,
    joint_optimize,
)
from .nonstationary import FittedNGP, NgpKind, ngp_cov_matrix, ngp_predict
from .selection import SelectionProblem, greedy_mi_select

__all__ = [
    "LisalConfig",
    "IterationRecord",
    "LisalTrace",
    "fit_stationary",
    "lisal_fit",
    "predict",
]

LATENT_SIGNAL_INIT = 1.0
LATENT_JITTER_INIT = 1e-3
LEIS_LATENT_LENGTH_INIT = 1.0


@dataclass(frozen=True)
class LisalConfig:
    """Run parameters for the adaptive loop.

    m1 latent locations are placed at iteration 0 and m2 more in each of
    the c refinement iterations; the total must not exceed the number of
    training points (checked at fit time, when n is known).

    Iteration 0 runs ``first_restarts`` optimizer starts (default three
    times ``restarts``): the local values it learns are frozen into
    every later stage, so the first joint fit is the one chance to
    establish the latent pattern, while refinements start warm and need
    fewer.
    """

    m1: int
    m2: int
    c: int
    kind: NgpKind
    family: KernelFamily
    seed: int = 0
    restarts: int = 4
    max_iter: int = 200
    first_restarts: int = None

    def __post_init__(self):
        object.__setattr__(self, "kind", NgpKind(self.kind))
        object.__setattr__(self, "family", KernelFamily(self.family))
        for name in ("m1", "m2", "c", "seed", "restarts", "max_iter"):
            object.__setattr__(self, name, int(getattr(self, name)))
        if self.first_restarts is None:
            object.__setattr__(self, "first_restarts", 3 * self.restarts)
        else:
            object.__setattr__(self, "first_restarts", int(self.first_restarts))
        if self.m1 < 1 or self.m2 < 1:
            raise ValidationError("m1 and m2 must be at least 1")
        if self.c < 0:
            raise ValidationError("iteration count c must be non-negative")
        if self.restarts < 1 or self.max_iter < 1 or self.first_restarts < 1:
            raise ValidationError("restart and iteration counts must be at least 1")

    @property
    def total_latent(self) -> int:
        return self.m1 + self.c * self.m2

    def optimizer_options(self, first: bool = False) -> OptimizerOptions:
        # the bootstrap stage explores the latent block widely to find
        # the basin; refinements polish around the warm start
        return OptimizerOptions(
            restarts=self.first_restarts if first else self.restarts,
            max_iter=self.max_iter,
            explore_latent=first,
        )


@dataclass(frozen=True)
class IterationRecord:
    """What one iteration did: the batch it placed and where the joint
    optimizer landed, with its warm-start objective for monotonicity
    checks."""

    iteration: int
    selected: Tuple[int, ...]
    init_objective: float
    objective: float
    globals: GlobalHypers
    fields: Tuple[LatentField, ...]
    seconds: float


@dataclass(frozen=True)
class LisalTrace:
    kind: NgpKind
    data: ObservationSet
    stationary: GlobalHypers
    stationary_objective: float
    stationary_seconds: float
    records: Tuple[IterationRecord, ...]

    def __len__(self) -> int:
        return len(self.records)

    def indices_at(self, i: int) -> Tuple[int, ...]:
        """All latent-location indices accumulated through iteration i."""
        out: tuple = ()
        for r in self.records[: i + 1]:
            out = out + r.selected
        return out

    def model_at(self, i: int) -> FittedNGP:
        r = self.records[i]
        return FittedNGP(self.kind, r.globals, r.fields, self.data)


def _extents(X: np.ndarray) -> np.ndarray:
    e = X.max(axis=0) - X.min(axis=0)
    return np.where(e > 1e-9, e, 1.0)


def fit_stationary(
    data: ObservationSet,
    family,
    *,
    seed: int = 0,
    options: OptimizerOptions = OptimizerOptions(),
) -> GlobalHypers:
    """ML-II fit of a stationary GP, the bootstrap for the adaptive loop.

    Initialization: length scales at half the per-axis data extent
    (inverse scales 2/extent for the nonseparable families), signal sd
    at the sample sd of y, noise sd at a tenth of that.
    """
    family = KernelFamily(family)
    if data.n < 2:
        raise ValidationError("stationary fitting needs at least 2 observations")
    e = _extents(data.points)
    sf0 = float(np.std(data.values))
    if not sf0 > 1e-8:
        sf0 = 1.0
    if family is KernelFamily.SE_ANISO:
        base = BaseKernelSpec.se(*(e / 2.0))
    else:
        base = BaseKernelSpec.ch(family, 2.0 / e[2], 4.0 / (e[0] + e[1]), sf0)
    init = GlobalHypers.from_values(sf0, 0.1 * sf0, base)
    g, _, _ = joint_optimize(data, None, init, (), seed=seed, options=options)
    return g


def _fresh_block_init(cfg: LisalConfig, stationary: GlobalHypers) -> Tuple[float, ...]:
    """Per-field starting value for newly placed latent locations.

    Chosen so that a field holding this value everywhere reproduces the
    bootstrap stationary kernel exactly; iteration 0 therefore starts at
    the stationary model, and later fresh blocks start neutral while the
    learned prefix persists.
    """
    if cfg.kind is NgpKind.LEIS:
        return (0.0,)
    if cfg.family is KernelFamily.SE_ANISO:
        return tuple(float(v) for v in stationary.base_kernel.log_length_scales)
    # nonseparable bases consume raw squared distances; unit local
    # scales (log 0) leave them untouched
    return (0.0, 0.0, 0.0)


def _attach_leis_length(g: GlobalHypers, kind: NgpKind) -> GlobalHypers:
    if kind is not NgpKind.LEIS or g.log_leis_latent_length is not None:
        return g
    return GlobalHypers(
        g.log_sigma_f, g.log_sigma_n, g.base_kernel, math.log(LEIS_LATENT_LENGTH_INIT)
    )


def _mi_hypers(kind: NgpKind, fields) -> LatentHypers:
    """Latent kernel used for placement: the (for PCLSK: loudest) field."""
    if kind is NgpKind.LEIS:
        return fields[0].hypers
    ratios = [f.hypers.signal_sd / f.hypers.jitter_sd for f in fields]
    return fields[int(np.argmax(ratios))].hypers


def lisal_fit(data: ObservationSet, cfg: LisalConfig):
    """Run the full adaptive loop; returns (final model, trace).

    Stages: stationary bootstrap; MI placement of m1 locations under the
    stationary kernel; joint fit; then c rounds of MI placement of m2
    more locations under the current latent kernel (conditioning on all
    prior placements) followed by a joint fit with every previously
    learned local value frozen. A failure in any stage raises
    StageError naming the stage and carrying the partial trace.
    """
    X = data.points
    n = data.n
    if cfg.total_latent > n:
        raise ValidationError(
            f"m1 + c*m2 = {cfg.total_latent} exceeds the {n} training points"
        )
    opts = cfg.optimizer_options()
    seeds = np.random.SeedSequence(cfg.seed).generate_state(cfg.c + 2)
    records: list = []

    def partial_trace(stationary=None, stat_obj=math.nan, stat_sec=math.nan):
        if stationary is None:
            return None
        return LisalTrace(
            cfg.kind, data, stationary, stat_obj, stat_sec, tuple(records)
        )

    t0 = time.perf_counter()
    try:
        theta0 = fit_stationary(data, cfg.family, seed=int(seeds[0]), options=opts)
    except NsgpError as exc:
        raise StageError("stationary", exc, None) from exc
    stat_sec = time.perf_counter() - t0
    stat_obj = joint_objective(data, None, theta0, ())

    z_init = _fresh_block_init(cfg, theta0)
    theta_z0 = LatentHypers.from_values(
        LATENT_SIGNAL_INIT, tuple(_extents(X) / 2.0), LATENT_JITTER_INIT
    )

    t0 = time.perf_counter()
    try:
        problem = SelectionProblem(
            X,
            lambda A, B: stationary_cov_matrix(A, B, theta0),
            theta0.sigma_n,
            cfg.m1,
        )
        idx = list(greedy_mi_select(problem))
    except NsgpError as exc:
        raise StageError(
            "select-0", exc, partial_trace(theta0, stat_obj, stat_sec)
        ) from exc

    g = _attach_leis_length(theta0, cfg.kind)
    fields = tuple(
        LatentField(X[np.asarray(idx)], np.full(len(idx), z0), theta_z0)
        for z0 in z_init
    )
    try:
        init_obj = joint_objective(data, cfg.kind, g, fields)
        g, fields, obj = joint_optimize(
            data,
            cfg.kind,
            g,
            fields,
            seed=int(seeds[1]),
            options=cfg.optimizer_options(first=True),
        )
    except NsgpError as exc:
        raise StageError(
            "optimize-0", exc, partial_trace(theta0, stat_obj, stat_sec)
        ) from exc
    records.append(
        IterationRecord(
            0, tuple(idx), init_obj, obj, g, fields, time.perf_counter() - t0
        )
    )

    for i in range(1, cfg.c + 1):
        t0 = time.perf_counter()
        try:
            hz = _mi_hypers(cfg.kind, fields)
            problem = SelectionProblem.for_latent(
                X, hz, cfg.m2, preselected=tuple(idx)
            )
            new = greedy_mi_select(problem)
        except NsgpError as exc:
            raise StageError(
                f"select-{i}", exc, partial_trace(theta0, stat_obj, stat_sec)
            ) from exc
        frozen = len(idx)
        idx.extend(new)
        Xm = X[np.asarray(idx)]
        fields = tuple(
            LatentField(
                Xm,
                np.concatenate([f.values, np.full(len(new), z0)]),
                f.hypers,
                frozen_prefix=frozen,
            )
            for f, z0 in zip(fields, z_init)
        )
        try:
            init_obj = joint_objective(data, cfg.kind, g, fields)
            g, fields, obj = joint_optimize(
                data, cfg.kind, g, fields, seed=int(seeds[1 + i]), options=opts
            )
        except NsgpError as exc:
            raise StageError(
                f"optimize-{i}", exc, partial_trace(theta0, stat_obj, stat_sec)
            ) from exc
        records.append(
            IterationRecord(
                i, tuple(new), init_obj, obj, g, fields, time.perf_counter() - t0
            )
        )

    trace = LisalTrace(cfg.kind, data, theta0, stat_obj, stat_sec, tuple(records))
    model = FittedNGP(cfg.kind, g, fields, data)
    return model, trace


def predict(model: FittedNGP, cond, Xq):
    """Posterior mean and variance vector; empty conditioning gives the prior."""
    if cond is None or cond.n == 0:
        Xq = as_points(Xq)
        return np.zeros(len(Xq)), np.diag(ngp_cov_matrix(model, Xq)).copy()
    return ngp_predict(model, cond, Xq)
