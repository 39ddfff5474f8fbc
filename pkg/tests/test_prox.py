import itertools

import numpy as np
import pytest

from burstkit import (AdmmConfig, AdmmError, NotSpdError, ValidationError,
                      build_difference_operator, prox_fused_l0, prox_fused_l1,
                      prox_weighted_admm, soft_threshold, solve_banded_spd)
from burstkit._kernels import _l0_partition_loop, _l0_partition_numpy, _tv1d_loop
from burstkit.prox import BandedMatrix, PenaltySpec, penalty_value


def kkt_residual(u_bar, x, lam):
    """Max violation of the fused-l1 stationarity system for solution x."""
    N = x.size
    s = np.zeros(N + 1)
    for j in range(N):
        s[j + 1] = s[j] + (x[j] - u_bar[j]) / lam
    resid = abs(s[N])
    interior = s[1:N]
    resid = max(resid, float(np.max(np.maximum(np.abs(interior) - 1.0, 0.0), initial=0.0)))
    d = np.diff(x)
    jumps = np.abs(d) > 1e-7
    if jumps.any():
        resid = max(resid, float(np.max(np.abs(interior[jumps] - np.sign(d[jumps])))))
    return resid


def enumerate_l0(u, lam):
    """Global minimizer over all 2^(N-1) segmentations; ties prefer fewer segments."""
    N = u.size
    best = None
    for mask in itertools.product((0, 1), repeat=N - 1):
        cuts = [0] + [i + 1 for i, m in enumerate(mask) if m] + [N]
        x = np.empty(N)
        cost = lam * sum(mask)
        for a, b in zip(cuts[:-1], cuts[1:]):
            m = u[a:b].mean()
            x[a:b] = m
            cost += 0.5 * np.sum((u[a:b] - m) ** 2)
        key = (cost, len(cuts) - 1)
        if best is None or key < best[0]:
            best = (key, x)
    return best[1]


class TestFusedL1:
    def test_zero_lambda_is_identity(self):
        u = np.array([3.0, -1.0, 2.0])
        assert np.array_equal(prox_fused_l1(u, 0.0), u)

    def test_two_point_closed_forms(self):
        np.testing.assert_allclose(prox_fused_l1([0.0, 1.0], 0.25), [0.25, 0.75])
        np.testing.assert_allclose(prox_fused_l1([0.0, 1.0], 0.6), [0.5, 0.5])
        assert kkt_residual(np.array([0.0, 1.0]), prox_fused_l1([0.0, 1.0], 0.25), 0.25) < 1e-12

    def test_kkt_on_random_instances(self):
        rng = np.random.default_rng(10)
        for _ in range(100):
            N = int(rng.integers(2, 501))
            u = rng.normal(0, 2, N)
            lam = float(abs(rng.normal(0, 1)) + 1e-3)
            x = prox_fused_l1(u, lam)
            assert kkt_residual(u, x, lam) <= 1e-8

    def test_translation_equivariance(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            u = rng.normal(0, 1, 40)
            c = rng.normal()
            a = prox_fused_l1(u + c, 0.7)
            b = prox_fused_l1(u, 0.7) + c
            np.testing.assert_allclose(a, b, atol=1e-10)

    def test_nonexpansive(self):
        rng = np.random.default_rng(12)
        for _ in range(30):
            a = rng.normal(0, 1, 60)
            b = rng.normal(0, 1, 60)
            pa = prox_fused_l1(a, 0.4)
            pb = prox_fused_l1(b, 0.4)
            assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-10

    def test_rejects_nan(self):
        with pytest.raises(ValidationError):
            prox_fused_l1([0.0, np.nan], 0.5)


class TestFusedL0:
    def test_zero_lambda_is_identity(self):
        u = np.array([3.0, -1.0, 2.0])
        assert np.array_equal(prox_fused_l0(u, 0.0), u)

    def test_two_point_split_vs_merge(self):
        np.testing.assert_allclose(prox_fused_l0([0.0, 1.0], 0.2), [0.0, 1.0])
        np.testing.assert_allclose(prox_fused_l0([0.0, 1.0], 0.3), [0.5, 0.5])
        # exact tie: split cost 0.25 == merge cost, fewer segments wins
        np.testing.assert_allclose(prox_fused_l0([0.0, 1.0], 0.25), [0.5, 0.5])

    def test_matches_enumeration(self):
        rng = np.random.default_rng(13)
        for _ in range(100):
            N = int(rng.integers(2, 13))
            u = rng.normal(0, 1, N)
            lam = float(abs(rng.normal(0, 0.5)))
            np.testing.assert_allclose(
                prox_fused_l0(u, lam), enumerate_l0(u, lam), rtol=0, atol=1e-12
            )

    def test_translation_equivariance(self):
        rng = np.random.default_rng(14)
        for _ in range(20):
            u = rng.normal(0, 1, 30)
            c = rng.normal()
            np.testing.assert_allclose(
                prox_fused_l0(u + c, 0.4), prox_fused_l0(u, 0.4) + c, atol=1e-10
            )

    def test_rejects_nan(self):
        with pytest.raises(ValidationError):
            prox_fused_l0([np.nan], 0.5)


def test_kernel_paths_agree():
    """The numba loop kernels and the numpy fallbacks compute the same maps."""
    rng = np.random.default_rng(15)
    for _ in range(25):
        N = int(rng.integers(2, 200))
        u = rng.normal(0, 1, N)
        lam = float(abs(rng.normal(0, 0.8)) + 1e-6)
        np.testing.assert_allclose(
            _l0_partition_loop(u, lam), _l0_partition_numpy(u, lam), atol=1e-12
        )
        np.testing.assert_allclose(_tv1d_loop(u, lam), prox_fused_l1(u, lam), atol=1e-12)


def test_soft_threshold_examples():
    assert soft_threshold(1.5, 1.0) == 0.5
    assert soft_threshold(-0.3, 1.0) == 0.0
    assert soft_threshold(-2.0, 0.5) == -1.5
    np.testing.assert_allclose(soft_threshold([1.5, -0.3, -2.0], 0.5), [1.0, 0.0, -1.5])
    with pytest.raises(ValidationError):
        soft_threshold(1.0, -0.1)


class TestDifferenceOperator:
    def test_order1_plain_differences(self):
        D = build_difference_operator(np.ones(2), 1)
        np.testing.assert_allclose(D.matvec([0.0, 1.0, 3.0]), [1.0, 2.0])

    def test_order2_kills_lines(self):
        D = build_difference_operator(np.ones(2), 2)
        np.testing.assert_allclose(D.matvec([0.0, 1.0, 2.0]), [0.0])

    def test_order1_spacing_weights(self):
        D = build_difference_operator([2.0], 1)
        np.testing.assert_allclose(D.matvec([0.0, 1.0]), [0.5])

    def test_order2_irregular_formula(self):
        spacing = np.array([2.0, 3.0])
        D = build_difference_operator(spacing, 2)
        u = np.array([1.0, 4.0, 2.0])
        expected = ((u[2] - u[1]) / 3.0 - (u[1] - u[0]) / 2.0) / 2.0
        np.testing.assert_allclose(D.matvec(u), [expected])

    def test_adjoint_identity(self):
        rng = np.random.default_rng(16)
        for order in (1, 2):
            spacing = rng.uniform(0.5, 3.0, 20)
            D = build_difference_operator(spacing, order)
            u = rng.normal(0, 1, D.n)
            v = rng.normal(0, 1, D.n_rows)
            assert D.matvec(u) @ v == pytest.approx(u @ D.rmatvec(v), rel=1e-12)
            np.testing.assert_allclose(D.toarray() @ u, D.matvec(u), atol=1e-12)

    def test_too_short_series(self):
        with pytest.raises(ValidationError):
            build_difference_operator(np.ones(0), 2)


class TestBandedSolve:
    def test_identity(self):
        A = BandedMatrix(ab=np.vstack([np.zeros(4), np.ones(4)]), n=4, bandwidth=1)
        b = np.array([1.0, 2.0, 3.0, 4.0])
        np.testing.assert_allclose(solve_banded_spd(A, b), b)

    def test_hand_solved_2x2(self):
        ab = np.array([[0.0, 1.0], [2.0, 2.0]])
        A = BandedMatrix(ab=ab, n=2, bandwidth=1)
        np.testing.assert_allclose(solve_banded_spd(A, [3.0, 3.0]), [1.0, 1.0])

    def test_residual_on_random_spd(self):
        rng = np.random.default_rng(17)
        for order in (1, 2):
            D = build_difference_operator(rng.uniform(0.5, 2.0, 30), order)
            A = D.gram_banded(rho=1.7)
            dense = 1.7 * D.toarray().T @ D.toarray() + np.eye(D.n)
            b = rng.normal(0, 1, D.n)
            x = solve_banded_spd(A, b)
            resid = np.max(np.abs(dense @ x - b))
            assert resid <= 1e-10 * (1 + np.max(np.abs(b)))

    def test_non_spd_detected(self):
        ab = np.array([[0.0, 5.0], [1.0, 1.0]])  # off-diagonal dominates
        with pytest.raises(NotSpdError):
            solve_banded_spd(BandedMatrix(ab=ab, n=2, bandwidth=1), [1.0, 1.0])


class TestAdmm:
    def test_matches_dp_prox(self):
        rng = np.random.default_rng(18)
        D = build_difference_operator(np.ones(199), 1)
        for _ in range(50):
            u = rng.normal(0, 1.5, 200)
            lam = float(abs(rng.normal(0, 0.6)) + 1e-3)
            ad = prox_weighted_admm(u, lam, D)
            dp = prox_fused_l1(u, lam)
            assert np.max(np.abs(ad - dp)) <= 1e-6

    def test_objective_close_to_dp(self):
        rng = np.random.default_rng(19)
        D = build_difference_operator(np.ones(99), 1)
        u = rng.normal(0, 1, 100)
        lam = 0.5
        ad = prox_weighted_admm(u, lam, D)
        dp = prox_fused_l1(u, lam)

        def obj(x):
            return 0.5 * np.sum((x - u) ** 2) + lam * np.abs(np.diff(x)).sum()

        assert obj(ad) <= obj(dp) + 1e-6

    def test_zero_lambda(self):
        u = np.arange(5.0)
        D = build_difference_operator(np.ones(4), 1)
        np.testing.assert_allclose(prox_weighted_admm(u, 0.0, D), u)

    def test_linear_input_fixed_point_for_trend(self):
        u = 0.3 * np.arange(50.0) - 2.0
        D = build_difference_operator(np.ones(49), 2)
        out = prox_weighted_admm(u, 2.0, D)
        np.testing.assert_allclose(out, u, atol=1e-7)

    def test_nonconvergence_raises(self):
        rng = np.random.default_rng(20)
        D = build_difference_operator(np.ones(99), 1)
        cfg = AdmmConfig(max_iter=2, tol_primal=1e-14, tol_dual=1e-14)
        with pytest.raises(AdmmError) as err:
            prox_weighted_admm(rng.normal(0, 1, 100), 1.0, D, cfg)
        assert err.value.primal_residual > 0


def test_penalty_value_forms():
    theta = np.array([0.0, 1.0, 1.0, -0.5])
    assert penalty_value(theta, PenaltySpec("fused_l1")) == pytest.approx(2.5)
    assert penalty_value(theta, PenaltySpec("fused_l0")) == 2
    spaced = PenaltySpec("fused_l1", spacing=(2.0, 1.0, 2.0))
    assert penalty_value(theta, spaced) == pytest.approx(0.5 + 0.0 + 0.75)
    with pytest.raises(ValidationError):
        PenaltySpec("bogus")
