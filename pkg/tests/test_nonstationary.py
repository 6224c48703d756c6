"""Nonstationary covariance constructions and the fitted-model wrapper."""

import math

import numpy as np
import pytest

from nsgp.errors import ValidationError
from nsgp.gp_core import (
    BaseKernelSpec,
    GlobalHypers,
    KernelFamily,
    ObservationSet,
    stationary_cov_matrix,
)
from nsgp.latent_field import LatentField, LatentHypers, latent_predict_mean
from nsgp.nonstationary import (
    FittedNGP,
    LocalParams,
    NgpKind,
    leis_cov,
    leis_cov_matrix,
    ngp_cov_matrix,
    ngp_predict,
    pclsk_cov,
    pclsk_cov_matrix,
)
from nsgp.oracles import dense_posterior

# Frozen by tools/freeze_values.py (independent direct evaluations).
PCLSK_PREFACTOR_1_4 = 0.8944271909999159
LEIS_MULTIPLIER = 0.2107477358184072
LEIS_BASE = 1.1205055750401562
LEIS_PRODUCT = 0.2361440129116153


def se_hypers(sf=1.0, sn=0.0, ls=(1.0, 1.0, 1.0), ll=None):
    return GlobalHypers.from_values(sf, sn, BaseKernelSpec.se(*ls), leis_latent_length=ll)


def ch_hypers(family, a=0.7, b=1.3, sigma=1.2, sn=0.0, ll=None):
    return GlobalHypers.from_values(
        sigma, sn, BaseKernelSpec.ch(family, a, b, sigma), leis_latent_length=ll
    )


def random_base_hypers(rng, ll=None):
    fam = list(KernelFamily)[rng.integers(0, 3)]
    sf = float(rng.uniform(0.5, 2.0))
    if fam is KernelFamily.SE_ANISO:
        return se_hypers(sf, 0.0, tuple(rng.uniform(0.4, 2.5, size=3)), ll=ll)
    return ch_hypers(fam, float(rng.uniform(0.3, 1.5)), float(rng.uniform(0.3, 1.5)), sf, ll=ll)


def random_points(rng, n):
    return np.column_stack(
        [rng.uniform(-2, 2, n), rng.uniform(-2, 2, n), rng.uniform(-1.5, 1.5, n)]
    )


class TestPclskScalar:
    def test_prefactor_frozen(self):
        # same point, one axis with local variances 1 and 4: value is
        # sigma_f^2 times the single-axis prefactor
        h = se_hypers()
        p = (0.4, -0.2, 0.9)
        v = pclsk_cov(p, p, (1.0, 1.0, 1.0), (4.0, 1.0, 1.0), h)
        assert v == pytest.approx(PCLSK_PREFACTOR_1_4, abs=1e-14)

    def test_equal_scales_match_stationary_se(self):
        # with identical local variances l^2 everywhere, PCLSK over an SE
        # base with unit internal scales is exactly the stationary SE
        # kernel with length scales l
        rng = np.random.default_rng(7)
        ls = (0.8, 1.6, 1.1)
        S = tuple(v * v for v in ls)
        h_ns = se_hypers(sf=1.4)
        h_st = se_hypers(sf=1.4, ls=ls)
        from nsgp.gp_core import se_cov

        for _ in range(10):
            p, q = rng.normal(size=3), rng.normal(size=3)
            assert pclsk_cov(p, q, S, S, h_ns) == pytest.approx(
                se_cov(p, q, h_st), rel=1e-12
            )

    def test_variance_at_coincident_point(self):
        h = se_hypers(sf=1.3)
        S = (0.5, 2.0, 1.0)
        assert pclsk_cov((1, 2, 3), (1, 2, 3), S, S, h) == pytest.approx(1.3**2, rel=1e-13)

    def test_prefactor_bounded_by_one(self):
        rng = np.random.default_rng(11)
        h = se_hypers()
        p = (0.0, 0.0, 0.0)
        for _ in range(25):
            Sp = rng.uniform(0.1, 5.0, 3)
            Sq = rng.uniform(0.1, 5.0, 3)
            v = pclsk_cov(p, p, Sp, Sq, h)
            assert 0.0 < v <= 1.0 + 1e-12

    def test_rejects_nonpositive_scales(self):
        h = se_hypers()
        with pytest.raises(ValidationError):
            pclsk_cov((0, 0, 0), (1, 0, 0), (1.0, -0.5, 1.0), (1.0, 1.0, 1.0), h)
        with pytest.raises(ValidationError):
            pclsk_cov((0, 0, 0), (1, 0, 0), (1.0, 1.0, 1.0), (0.0, 1.0, 1.0), h)


class TestLeisScalar:
    def test_frozen_multiplier_and_product(self):
        h = se_hypers(sf=1.3, ls=(1.1, 0.9, 1.4), ll=1.7)
        p, q = (0.0, 0.0, 0.0), (0.6, -0.3, 0.9)
        v = leis_cov(p, q, 3.0, 0.0, h)
        assert v == pytest.approx(LEIS_PRODUCT, abs=1e-14)
        # multiplier isolated at a coincident point
        mult = leis_cov(p, p, 3.0, 0.0, h) / 1.3**2
        assert mult == pytest.approx(LEIS_MULTIPLIER, abs=1e-14)
        assert v / mult == pytest.approx(LEIS_BASE, rel=1e-12)

    def test_equal_coords_match_stationary(self):
        rng = np.random.default_rng(13)
        for seed in range(5):
            h = random_base_hypers(np.random.default_rng(seed), ll=0.7)
            p, q = rng.normal(size=3), rng.normal(size=3)
            want = stationary_cov_matrix(p[None], q[None], h)[0, 0]
            assert leis_cov(p, q, 1.9, 1.9, h) == pytest.approx(want, rel=1e-12)

    def test_multiplier_in_unit_interval(self):
        h = se_hypers(ll=1.0)
        p = (0.0, 0.0, 0.0)
        rng = np.random.default_rng(17)
        for _ in range(25):
            lp, lq = rng.normal(size=2) * 3
            v = leis_cov(p, p, float(lp), float(lq), h)
            assert 0.0 < v <= 1.0 + 1e-12

    def test_sign_and_shift_invariance(self):
        # the multiplier sees only coordinate differences
        h = se_hypers(ll=1.3)
        p, q = (0.1, 0.2, 0.3), (1.0, -0.4, 0.8)
        a = leis_cov(p, q, 0.7, -0.5, h)
        assert leis_cov(p, q, 0.7 + 2.0, -0.5 + 2.0, h) == pytest.approx(a, rel=1e-13)
        assert leis_cov(p, q, -0.7, 0.5, h) == pytest.approx(a, rel=1e-13)

    def test_needs_latent_length(self):
        h = se_hypers()  # no leis latent length configured
        with pytest.raises((ValidationError, TypeError)):
            leis_cov((0, 0, 0), (1, 0, 0), 0.0, 1.0, h)


class TestMatrixAssembly:
    def test_pclsk_matrix_matches_scalar_loop(self):
        rng = np.random.default_rng(19)
        for seed in range(5):
            h = random_base_hypers(np.random.default_rng(100 + seed))
            A = random_points(rng, 6)
            B = random_points(rng, 4)
            za = rng.normal(size=(6, 3)) * 0.5
            zb = rng.normal(size=(4, 3)) * 0.5
            M = pclsk_cov_matrix(A, B, za, zb, h)
            for i in range(6):
                for j in range(4):
                    want = pclsk_cov(
                        A[i], B[j], np.exp(2 * za[i]), np.exp(2 * zb[j]), h
                    )
                    assert M[i, j] == pytest.approx(want, abs=1e-12)

    def test_leis_matrix_matches_scalar_loop(self):
        rng = np.random.default_rng(23)
        for seed in range(5):
            h = random_base_hypers(np.random.default_rng(200 + seed), ll=1.1)
            A = random_points(rng, 5)
            B = random_points(rng, 7)
            la = rng.normal(size=5)
            lb = rng.normal(size=7)
            M = leis_cov_matrix(A, B, la, lb, h)
            for i in range(5):
                for j in range(7):
                    want = leis_cov(A[i], B[j], float(la[i]), float(lb[j]), h)
                    assert M[i, j] == pytest.approx(want, abs=1e-12)

    def test_equal_locals_reproduce_stationary_matrices(self):
        # both kinds collapse to the stationary matrix element-wise
        rng = np.random.default_rng(29)
        for trial in range(20):
            n = int(rng.integers(2, 9))
            A = random_points(rng, n)
            h = random_base_hypers(np.random.default_rng(300 + trial), ll=0.9)
            K_st = stationary_cov_matrix(A, A, h)
            coords = np.full(n, float(rng.normal()))
            K_leis = leis_cov_matrix(A, A, coords, coords, h)
            np.testing.assert_allclose(K_leis, K_st, atol=1e-10)
            if h.base_kernel.family is KernelFamily.SE_ANISO:
                # equal PCLSK variances equal to the squared stationary
                # lengths reproduce the same matrix
                z = np.tile(np.log(h.base_kernel.length_scales), (n, 1))
                h_unit = GlobalHypers(
                    h.log_sigma_f,
                    h.log_sigma_n,
                    BaseKernelSpec.se(1.0, 1.0, 1.0),
                    h.log_leis_latent_length,
                )
                K_pclsk = pclsk_cov_matrix(A, A, z, z, h_unit)
                np.testing.assert_allclose(K_pclsk, K_st, atol=1e-10)

    def test_symmetry_and_psd(self):
        rng = np.random.default_rng(31)
        for trial in range(50):
            n = int(rng.integers(2, 26))
            A = random_points(rng, n)
            h = random_base_hypers(np.random.default_rng(400 + trial), ll=1.3)
            if trial % 2 == 0:
                z = rng.normal(size=(n, 3)) * 0.6
                K = pclsk_cov_matrix(A, A, z, z, h)
            else:
                c = rng.normal(size=n) * 1.5
                K = leis_cov_matrix(A, A, c, c, h)
            np.testing.assert_allclose(K, K.T, atol=1e-13)
            eig = np.linalg.eigvalsh(K)
            assert eig.min() >= -1e-8

    def test_shape_validation(self):
        h = se_hypers(ll=1.0)
        A = random_points(np.random.default_rng(0), 3)
        with pytest.raises(ValidationError):
            pclsk_cov_matrix(A, A, np.zeros((3, 2)), np.zeros((3, 2)), h)
        with pytest.raises(ValidationError):
            leis_cov_matrix(A, A, np.zeros(2), np.zeros(3), h)


def make_model(rng, kind, m=4, ll=1.0):
    locs = random_points(rng, m)
    lh = LatentHypers.from_values(1.0, (1.5, 1.5, 1.5), 1e-3)
    if kind == "pclsk":
        fields = tuple(
            LatentField(locs, rng.normal(size=m) * 0.4, lh) for _ in range(3)
        )
        h = se_hypers(sf=float(rng.uniform(0.7, 1.5)))
    else:
        fields = (LatentField(locs, rng.normal(size=m) * 1.2, lh),)
        h = se_hypers(
            sf=float(rng.uniform(0.7, 1.5)), ls=tuple(rng.uniform(0.6, 1.8, 3)), ll=ll
        )
    return FittedNGP(kind, h, fields)


class TestFittedNGP:
    def test_locals_come_from_latent_interpolation(self):
        rng = np.random.default_rng(37)
        model = make_model(rng, "leis")
        X = random_points(rng, 6)
        got = model.locals_at(X).leis_coords
        want = latent_predict_mean(model.latent[0], X)
        np.testing.assert_allclose(got, want, rtol=1e-13)

    def test_cov_matrix_symmetric_same_object(self):
        rng = np.random.default_rng(41)
        for kind in ("pclsk", "leis"):
            model = make_model(rng, kind)
            A = random_points(rng, 8)
            K = ngp_cov_matrix(model, A)
            assert np.array_equal(K, K.T)
            K2 = ngp_cov_matrix(model, A, A)
            np.testing.assert_allclose(K, K2, atol=0)

    def test_cross_matrix_transpose(self):
        rng = np.random.default_rng(43)
        model = make_model(rng, "pclsk")
        A = random_points(rng, 5)
        B = random_points(rng, 3)
        np.testing.assert_allclose(
            ngp_cov_matrix(model, A, B), ngp_cov_matrix(model, B, A).T, atol=1e-13
        )

    def test_predict_matches_dense_oracle(self):
        rng = np.random.default_rng(47)
        for trial in range(20):
            kind = ["pclsk", "leis"][int(rng.integers(0, 2))]
            model = make_model(rng, kind)
            n, q = 5, 3
            X = random_points(rng, n)
            y = rng.normal(size=n)
            Xq = random_points(rng, q)
            sn = 0.3
            model = FittedNGP(
                model.kind,
                GlobalHypers(
                    model.globals.log_sigma_f,
                    math.log(sn),
                    model.globals.base_kernel,
                    model.globals.log_leis_latent_length,
                ),
                model.latent,
            )
            joint = ngp_cov_matrix(model, np.vstack([X, Xq]))
            mean_o, cov_o = dense_posterior(
                joint[:n, :n], joint[n:, :n], joint[n:, n:], y, sn
            )
            mean, var = ngp_predict(model, ObservationSet(X, y), Xq)
            np.testing.assert_allclose(mean, mean_o, atol=1e-8)
            np.testing.assert_allclose(var, np.diag(cov_o), atol=1e-8)

    def test_noiseless_interpolation(self):
        rng = np.random.default_rng(53)
        model = make_model(rng, "leis")
        X = random_points(rng, 6)
        y = rng.normal(size=6)
        mean, var = ngp_predict(model, ObservationSet(X, y), X)
        np.testing.assert_allclose(mean, y, atol=1e-7)
        assert np.all(var < 1e-7)

    def test_field_count_validation(self):
        rng = np.random.default_rng(59)
        locs = random_points(rng, 3)
        lh = LatentHypers.from_values(1.0, (1.0, 1.0, 1.0), 1e-3)
        f = LatentField(locs, np.zeros(3), lh)
        with pytest.raises(ValidationError):
            FittedNGP("pclsk", se_hypers(), (f,))
        with pytest.raises(ValidationError):
            FittedNGP("leis", se_hypers(ll=1.0), (f, f))

    def test_latent_locations_must_match(self):
        rng = np.random.default_rng(61)
        lh = LatentHypers.from_values(1.0, (1.0, 1.0, 1.0), 1e-3)
        f1 = LatentField(random_points(rng, 3), np.zeros(3), lh)
        f2 = LatentField(random_points(rng, 3), np.zeros(3), lh)
        with pytest.raises(ValidationError):
            FittedNGP("pclsk", se_hypers(), (f1, f1, f2))

    def test_leis_needs_latent_length(self):
        rng = np.random.default_rng(67)
        lh = LatentHypers.from_values(1.0, (1.0, 1.0, 1.0), 1e-3)
        f = LatentField(random_points(rng, 3), np.zeros(3), lh)
        with pytest.raises(ValidationError):
            FittedNGP("leis", se_hypers(), (f,))
