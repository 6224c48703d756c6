"""Brute-force reference implementations for verification.

Everything here favors transparency over speed: explicit dense inverses,
log-determinants via slogdet, exhaustive subset enumeration. The
production code paths never call into this module; tests and the CLI
``oracle`` subcommand compare against it.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

__all__ = [
    "dense_lml",
    "dense_posterior",
    "dense_latent_mean",
    "conditional_variance",
    "subset_mi",
    "mi_gain",
    "best_subset_mi",
    "run_battery",
]


def dense_lml(K: np.ndarray, y: np.ndarray, sigma_n: float) -> float:
    """Gaussian log-density of y under N(0, K + sigma_n^2 I), via explicit inverse."""
    n = len(y)
    Ky = K + sigma_n**2 * np.eye(n)
    Kinv = np.linalg.inv(Ky)
    sign, logdet = np.linalg.slogdet(Ky)
    if sign <= 0:
        raise np.linalg.LinAlgError("non positive-definite covariance in oracle")
    return float(-0.5 * y @ Kinv @ y - 0.5 * logdet - 0.5 * n * math.log(2 * math.pi))


def dense_posterior(Kxx, Kqx, Kqq, y, sigma_n: float):
    """Block-conditioning formula with an explicit dense inverse."""
    Ky = Kxx + sigma_n**2 * np.eye(len(y))
    Kinv = np.linalg.inv(Ky)
    mean = Kqx @ Kinv @ y
    cov = Kqq - Kqx @ Kinv @ Kqx.T
    return mean, cov


def dense_latent_mean(Kqm, Kmm, z, jitter_sd: float) -> np.ndarray:
    """Zero-mean interpolant K_qm (K_mm + jitter^2 I)^{-1} z via explicit inverse."""
    G = np.linalg.inv(Kmm + jitter_sd**2 * np.eye(len(z)))
    return Kqm @ G @ z


def conditional_variance(C: np.ndarray, y: int, A) -> float:
    """Var of coordinate y given coordinates A under covariance C (noise included in C)."""
    A = [int(i) for i in A]
    if not A:
        return float(C[y, y])
    CAA = C[np.ix_(A, A)]
    cyA = C[y, A]
    return float(C[y, y] - cyA @ np.linalg.inv(CAA) @ cyA)


def subset_mi(C: np.ndarray, S) -> float:
    """Mutual information I(S; complement) of a Gaussian with covariance C."""
    n = len(C)
    S = sorted(int(i) for i in S)
    R = [i for i in range(n) if i not in S]
    if not S or not R:
        return 0.0
    ld = lambda M: np.linalg.slogdet(M)[1]
    return float(0.5 * (ld(C[np.ix_(S, S)]) + ld(C[np.ix_(R, R)]) - ld(C)))


def mi_gain(C: np.ndarray, y: int, A) -> float:
    """Marginal MI gain of adding y to A: H(y|A) - H(y|complement of A+y)."""
    n = len(C)
    A = sorted(int(i) for i in A)
    rest = [i for i in range(n) if i != y and i not in A]
    num = conditional_variance(C, y, A)
    den = conditional_variance(C, y, rest)
    return float(0.5 * (math.log(num) - math.log(den)))


def best_subset_mi(C: np.ndarray, budget: int, preselected=()):
    """Exhaustive search for the MI-best subset of the given size.

    Preselected indices are part of every evaluated set; the returned MI
    is the full-set objective including them.
    """
    pre = tuple(int(i) for i in preselected)
    pool = [i for i in range(len(C)) if i not in pre]
    best, best_set = -np.inf, None
    for combo in itertools.combinations(pool, budget):
        v = subset_mi(C, pre + combo)
        if v > best:
            best, best_set = v, pre + combo
    return best, best_set


# ---------------------------------------------------------------------------
# the battery behind the CLI `oracle` subcommand


def _random_hypers(rng):
    from .gp_core import BaseKernelSpec, GlobalHypers, KernelFamily

    fam = [KernelFamily.SE_ANISO, KernelFamily.CH_EX1, KernelFamily.CH_EX3][rng.integers(0, 3)]
    sf = float(rng.uniform(0.5, 2.0))
    sn = float(rng.uniform(0.01, 0.3))
    if fam is KernelFamily.SE_ANISO:
        base = BaseKernelSpec.se(*(rng.uniform(0.4, 2.5) for _ in range(3)))
        return GlobalHypers.from_values(sf, sn, base)
    base = BaseKernelSpec.ch(fam, rng.uniform(0.3, 1.5), rng.uniform(0.3, 1.5), sf)
    return GlobalHypers.from_values(sf, sn, base)


def _random_model(rng, n_latent=3):
    from .gp_core import BaseKernelSpec, GlobalHypers
    from .latent_field import LatentField, LatentHypers
    from .nonstationary import FittedNGP, NgpKind

    kind = NgpKind(["pclsk", "leis"][rng.integers(0, 2)])
    X_M = rng.uniform(-1.5, 1.5, size=(n_latent, 3))
    lh = LatentHypers.from_values(
        signal_sd=float(rng.uniform(0.5, 1.2)),
        length_scales=tuple(rng.uniform(1.0, 3.0) for _ in range(3)),
        jitter_sd=1e-3,
    )
    if kind is NgpKind.PCLSK:
        fields = tuple(
            LatentField(X_M, rng.normal(0.0, 0.3, size=n_latent), lh) for _ in range(3)
        )
        g = GlobalHypers.from_values(
            float(rng.uniform(0.5, 1.5)), float(rng.uniform(0.05, 0.2)),
            BaseKernelSpec.se(1.0, 1.0, 1.0),
        )
    else:
        fields = (LatentField(X_M, rng.normal(0.0, 0.8, size=n_latent), lh),)
        g = GlobalHypers.from_values(
            float(rng.uniform(0.5, 1.5)), float(rng.uniform(0.05, 0.2)),
            BaseKernelSpec.se(*(rng.uniform(0.6, 2.0) for _ in range(3))),
            leis_latent_length=float(rng.uniform(0.8, 2.0)),
        )
    return FittedNGP(kind, g, fields, None)


def run_battery(seed: int = 0, instances: int = 100):
    """Compare the production numerics against the dense oracles.

    Returns a list of (check name, worst absolute error, tolerance)
    triples covering the factorized likelihood, posterior, latent
    interpolation and nonstationary prediction paths.
    """
    from .gp_core import ObservationSet, log_marginal_likelihood, posterior, stationary_cov_matrix
    from .latent_field import latent_lml, latent_predict_mean
    from .nonstationary import ngp_cov_matrix, ngp_predict

    rng = np.random.default_rng(seed)
    worst = {"lml": 0.0, "posterior": 0.0, "latent_mean": 0.0, "latent_lml": 0.0, "ngp_predict": 0.0}

    for _ in range(instances):
        n = int(rng.integers(2, 9))
        X = rng.uniform(-2.0, 2.0, size=(n, 3))
        h = _random_hypers(rng)
        cov = lambda A, B: stationary_cov_matrix(A, B, h)
        y = rng.normal(0.0, 1.0, size=n)
        data = ObservationSet(X, y)

        K = cov(X, X)
        worst["lml"] = max(
            worst["lml"],
            abs(log_marginal_likelihood(data, cov, h.sigma_n) - dense_lml(K, y, h.sigma_n)),
        )

        nq = int(rng.integers(1, 4))
        Xq = rng.uniform(-2.0, 2.0, size=(nq, 3))
        mean, covm = posterior(data, cov, h.sigma_n, Xq)
        omean, ocov = dense_posterior(K, cov(Xq, X), cov(Xq, Xq), y, h.sigma_n)
        worst["posterior"] = max(
            worst["posterior"],
            float(np.max(np.abs(mean - omean))),
            float(np.max(np.abs(covm - ocov))),
        )

        model = _random_model(rng)
        f = model.latent[0]
        from .latent_field import latent_cov_matrix

        Kqm = latent_cov_matrix(Xq, f.locations, f.hypers)
        Kmm = latent_cov_matrix(f.locations, f.locations, f.hypers)
        worst["latent_mean"] = max(
            worst["latent_mean"],
            float(
                np.max(
                    np.abs(
                        latent_predict_mean(f, Xq)
                        - dense_latent_mean(Kqm, Kmm, f.values, f.hypers.jitter_sd)
                    )
                )
            ),
        )
        worst["latent_lml"] = max(
            worst["latent_lml"],
            abs(latent_lml(f) - dense_lml(Kmm, f.values, f.hypers.jitter_sd)),
        )

        Kn = ngp_cov_matrix(model, X)
        Kqx = ngp_cov_matrix(model, Xq, X)
        Kqq = ngp_cov_matrix(model, Xq)
        pmean, pvar = ngp_predict(model, data, Xq)
        omean, ocov = dense_posterior(Kn, Kqx, Kqq, y, model.globals.sigma_n)
        worst["ngp_predict"] = max(
            worst["ngp_predict"],
            float(np.max(np.abs(pmean - omean))),
            float(np.max(np.abs(pvar - np.diag(ocov)))),
        )

    return [(name, err, 1e-8) for name, err in worst.items()]
