"""Greedy placement of observation sites over a GP covariance.

Two criteria are offered. The mutual-information score of a candidate y
against a chosen set A is the variance ratio

    sigma^2(y | A) / sigma^2(y | Abar),   Abar = candidates \\ (A + {y}),

whose log is twice the entropy reduction H(y|A) - H(y|Abar); picking its
argmax greedily maximizes the MI between chosen and unchosen sites. The
entropy baseline simply maximizes sigma^2(y | A).

Naive greedy costs O(budget * n * n^3). The driver below is the classic
lazy-greedy queue: stale scores are valid upper bounds (both criteria
shrink as A grows), so a candidate whose cached score tops the heap only
needs its own score refreshed. Conditional variances are maintained
incrementally, an appended Cholesky row for the numerators and rank-one
precision downdates for the denominators, so a refresh is O(1) and a
whole run costs O(n^3 + budget * n^2).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable, Sequence, Tuple

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import NumericalError, ValidationError
from .gp_core import as_points, chol_with_jitter
from .latent_field import LatentHypers, latent_cov_matrix

__all__ = [
    "SelectionProblem",
    "mi_score",
    "greedy_mi_select",
    "entropy_select",
]


@dataclass(frozen=True)
class SelectionProblem:
    """A discrete placement instance.

    ``kernel`` maps two point arrays to their cross-covariance matrix;
    ``noise_sd`` is added (squared, on the diagonal) before any
    conditioning so denominators stay bounded away from zero on dense
    candidate grids. ``preselected`` indices count as already chosen:
    scores condition on them but they are never returned.
    """

    candidates: np.ndarray
    kernel: Callable[[np.ndarray, np.ndarray], np.ndarray]
    noise_sd: float
    budget: int
    preselected: Tuple[int, ...] = ()

    def __post_init__(self):
        X = as_points(self.candidates)
        object.__setattr__(self, "candidates", X)
        pre = tuple(int(i) for i in self.preselected)
        object.__setattr__(self, "preselected", pre)
        object.__setattr__(self, "budget", int(self.budget))
        object.__setattr__(self, "noise_sd", float(self.noise_sd))
        n = len(X)
        if self.budget < 1:
            raise ValidationError("budget must be at least 1")
        if len(set(pre)) != len(pre):
            raise ValidationError("preselected indices must be distinct")
        if any(i < 0 or i >= n for i in pre):
            raise ValidationError("preselected index out of range")
        if self.budget + len(pre) > n:
            raise ValidationError(
                f"budget {self.budget} plus {len(pre)} preselected exceeds "
                f"{n} candidates"
            )
        if not (self.noise_sd >= 0.0 and math.isfinite(self.noise_sd)):
            raise ValidationError("noise_sd must be finite and non-negative")

    @classmethod
    def for_latent(
        cls,
        candidates,
        hypers: LatentHypers,
        budget: int,
        preselected: Sequence[int] = (),
    ) -> "SelectionProblem":
        """Problem over the latent-location kernel, with its jitter as noise."""
        return cls(
            candidates=candidates,
            kernel=lambda A, B: latent_cov_matrix(A, B, hypers),
            noise_sd=hypers.jitter_sd,
            budget=budget,
            preselected=tuple(preselected),
        )

    @property
    def n(self) -> int:
        return len(self.candidates)


def _prior_cov(problem: SelectionProblem) -> np.ndarray:
    X = problem.candidates
    C = np.asarray(problem.kernel(X, X), dtype=float)
    if C.shape != (len(X), len(X)):
        raise ValidationError("kernel returned a matrix of the wrong shape")
    if not np.all(np.isfinite(C)):
        raise NumericalError("candidate covariance contains non-finite entries")
    C = 0.5 * (C + C.T)
    return C + problem.noise_sd**2 * np.eye(len(X))


def _cond_var(C: np.ndarray, y: int, A) -> float:
    """sigma^2 of coordinate y given coordinates A, Cholesky conditioning."""
    A = list(A)
    if not A:
        return float(C[y, y])
    L, _ = chol_with_jitter(C[np.ix_(A, A)])
    w = solve_triangular(L, C[A, y], lower=True)
    return float(C[y, y] - w @ w)


def mi_score(y: int, A, problem: SelectionProblem) -> float:
    """Variance-ratio MI score of candidate y against the chosen set A.

    Reference implementation: conditions from scratch both times. The
    greedy driver reproduces these values through incremental updates.
    A must already include any preselected indices the caller wants
    conditioned on; this function does not consult ``problem.preselected``.
    """
    y = int(y)
    A = tuple(int(i) for i in A)
    n = problem.n
    if y < 0 or y >= n:
        raise ValidationError("candidate index out of range")
    if y in A:
        raise ValidationError("candidate is already in the chosen set")
    if len(set(A)) != len(A) or any(i < 0 or i >= n for i in A):
        raise ValidationError("chosen set contains invalid indices")
    C = _prior_cov(problem)
    num = _cond_var(C, y, A)
    rest = [i for i in range(n) if i != y and i not in A]
    den = _cond_var(C, y, rest)
    if not (num > 0.0 and den > 0.0):
        raise NumericalError("conditioning collapsed a variance to zero")
    return num / den


class _GreedyState:
    """Incremental conditional variances for one greedy run.

    Numerators: appending s to A adds one row to W = L^-1 C[A, :] with
    L the growing Cholesky factor of C[A, A]; then
    sigma^2(y|A) = C[y, y] - ||W[:, y]||^2 drops by the new row squared.
    Denominators (MI only): P = inv(C[U, U]) over the unchosen set U
    gives sigma^2(y | U \\ {y}) = 1 / P[y, y]; deleting s from U is the
    Schur rank-one downdate P - P[:, s] P[s, :] / P[s, s], which zeroes
    row and column s in place.
    """

    def __init__(self, problem: SelectionProblem, want_denominators: bool):
        self.C = _prior_cov(problem)
        n = len(self.C)
        self.active = np.ones(n, dtype=bool)
        self.num_var = self.C.diagonal().copy()
        self._w_rows: list = []
        self.den_var = None
        self._P = None
        self._pos = None
        if want_denominators:
            free = [i for i in range(n) if i not in problem.preselected]
            L, _ = chol_with_jitter(self.C[np.ix_(free, free)])
            self._P = cho_solve((L, True), np.eye(len(free)))
            self._P = 0.5 * (self._P + self._P.T)
            self._pos = {idx: j for j, idx in enumerate(free)}
            self.den_var = np.full(n, np.nan)
            d = self._P.diagonal()
            if np.any(d <= 0.0):
                raise NumericalError("prior precision has a non-positive diagonal")
            self.den_var[free] = 1.0 / d
        for s in problem.preselected:
            self.active[s] = False
            self._append_to_chosen(s)

    def _append_to_chosen(self, s: int):
        d2 = self.num_var[s]
        if not d2 > 0.0:
            raise NumericalError(
                "conditioning became singular while growing the chosen set"
            )
        w = self.C[s].copy()
        for r in self._w_rows:
            w -= r[s] * r
        w /= math.sqrt(d2)
        self._w_rows.append(w)
        self.num_var -= w * w
        self.num_var[s] = 0.0

    def _drop_from_unchosen(self, s: int):
        j = self._pos[s]
        p = self._P[:, j].copy()
        d = p[j]
        if not d > 0.0:
            raise NumericalError("precision downdate hit a non-positive pivot")
        self._P -= np.outer(p, p / d)
        self._P[:, j] = 0.0
        self._P[j, :] = 0.0
        diag = self._P.diagonal()
        for idx, pos in self._pos.items():
            if self.active[idx]:
                if not diag[pos] > 0.0:
                    raise NumericalError(
                        "precision downdate produced a non-positive diagonal"
                    )
                self.den_var[idx] = 1.0 / diag[pos]

    def select(self, s: int):
        self.active[s] = False
        self._append_to_chosen(s)
        if self._P is not None:
            self._drop_from_unchosen(s)

    def score(self, y: int) -> float:
        num = self.num_var[y]
        if self.den_var is None:
            return float(num)
        den = self.den_var[y]
        if not (num > 0.0 and den > 0.0):
            raise NumericalError("conditioning collapsed a variance to zero")
        return float(num / den)


def _lazy_greedy(problem: SelectionProblem, want_denominators: bool) -> Tuple[int, ...]:
    state = _GreedyState(problem, want_denominators)
    # (-score, index, stamp): max-score first, lowest index on ties.
    heap = [(-state.score(y), y, 0) for y in range(problem.n) if state.active[y]]
    heapq.heapify(heap)
    stamp = 0
    chosen: list = []
    for _ in range(problem.budget):
        while True:
            neg, y, st = heapq.heappop(heap)
            if not state.active[y]:
                continue
            if st == stamp:
                break
            heapq.heappush(heap, (-state.score(y), y, stamp))
        chosen.append(y)
        state.select(y)
        stamp += 1
    return tuple(chosen)


def greedy_mi_select(problem: SelectionProblem) -> Tuple[int, ...]:
    """Greedy MI placement; returns chosen indices in pick order.

    Preselected indices are conditioned on from the start and excluded
    from the result. Deterministic; ties go to the lowest index.
    """
    return _lazy_greedy(problem, want_denominators=True)


def entropy_select(problem: SelectionProblem) -> Tuple[int, ...]:
    """Greedy maximum-conditional-variance placement (entropy baseline)."""
    return _lazy_greedy(problem, want_denominators=False)
