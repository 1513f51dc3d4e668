import numpy as np
import pytest
import scipy.sparse as sp

from edanni.problems import (InvalidSpecError, LassoGenSpec, LeastSquaresLoss, QuadGenSpec,
                             Regularizer, SmoothLossSet, SparsePCALoss, SpcaGenSpec,
                             generate_lasso, generate_spca, generate_strongly_convex_quadratic,
                             lasso_data, objective, reference_lasso_spec, reference_spca_spec,
                             power_iteration, quadratic_data, quadratic_minimizer, spca_blocks)

from oracles import (finite_difference_gradient, lasso_gradient_per_sample,
                     lasso_value_per_sample, spca_gradient_dense)

# Frozen from the per-sample oracle for LassoGenSpec(m=2, n=3, p=4, s=2, seed=7).
LASSO_SEED7_VALUE_AT_ZERO = 0.5461623421831918
LASSO_SEED7_GRAD_AT_ZERO = [-0.2645840059460068, -0.9398616548592025,
                            -0.5072329514897332, -0.2051216300682712]


def _desk_problems():
    return [
        generate_lasso(LassoGenSpec(m=3, n=12, p=6, s=2, seed=1)),
        generate_spca(SpcaGenSpec(m=2, n=3, p=6, q=5, nnz=8, seed=2)),
        generate_strongly_convex_quadratic(3, 6, 0.5, 3),
    ]


def test_lasso_interpolation_has_zero_gradient():
    X = np.eye(2)
    w_star = np.array([0.37, 0.0])
    loss = LeastSquaresLoss(X, X @ w_star)
    assert np.array_equal(loss.gradient(w_star), np.zeros(2))


def test_lasso_value_and_gradient_match_frozen_per_sample_sums():
    X, y, _ = lasso_data(LassoGenSpec(m=2, n=3, p=4, s=2, seed=7))
    loss = LeastSquaresLoss(X[0], y[0])
    x0 = np.zeros(4)
    assert loss.value(x0) == pytest.approx(LASSO_SEED7_VALUE_AT_ZERO, rel=1e-13)
    np.testing.assert_allclose(loss.gradient(x0), LASSO_SEED7_GRAD_AT_ZERO, rtol=1e-12)
    # live recomputation as well
    assert loss.value(x0) == pytest.approx(lasso_value_per_sample(X[0], y[0], x0), rel=1e-13)
    w = np.random.default_rng(0).standard_normal(4)
    np.testing.assert_allclose(loss.gradient(w), lasso_gradient_per_sample(X[0], y[0], w),
                               rtol=1e-12, atol=1e-14)


def test_lasso_ground_truth_support_and_range():
    spec = LassoGenSpec(m=2, n=30, p=25, s=5, seed=4)
    prob = generate_lasso(spec)
    w = prob.ground_truth
    assert np.count_nonzero(w[:5]) == 5 and np.all(w[5:] == 0)
    assert np.all((w[:5] >= 0) & (w[:5] <= 1))
    assert prob.regularizer == Regularizer.l1(spec.theta)


def test_lasso_covariance_is_ar1():
    spec = LassoGenSpec(m=1, n=40000, p=4, s=1, seed=0)
    X, _, _ = lasso_data(spec)
    emp = X[0].T @ X[0] / spec.n
    idx = np.arange(4)
    np.testing.assert_allclose(emp, 0.5 ** np.abs(idx[:, None] - idx[None, :]), atol=0.03)


def test_lasso_constants_match_eigendecomposition():
    prob = generate_lasso(LassoGenSpec(m=2, n=30, p=8, s=2, seed=5))
    for loss in prob.losses:
        eig = np.linalg.eigvalsh(loss.X.T @ loss.X / loss.X.shape[0])
        assert loss.lipschitz_bound == pytest.approx(eig[-1], rel=1e-8)
        assert loss.strong_convexity_modulus == pytest.approx(eig[0], rel=1e-8)


def test_lasso_underdetermined_reports_zero_modulus():
    prob = generate_lasso(LassoGenSpec(m=1, n=3, p=8, s=2, seed=5))
    assert prob.losses[0].strong_convexity_modulus == 0.0


def test_lasso_at_truth_equals_noise_energy_plus_penalty():
    spec = LassoGenSpec(m=4, n=50, p=40, s=4, theta=0.01, seed=2)
    X, y, w = lasso_data(spec)
    prob = generate_lasso(spec)
    expected = sum(lasso_value_per_sample(X[j], y[j], w) for j in range(4)) / 4 + 0.01 * w.sum()
    noise = y - np.einsum("jnp,p->jn", X, w)
    assert objective(prob.losses, prob.regularizer, w) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx((noise ** 2).sum() / (2 * 4 * 50) + 0.01 * w.sum(), rel=1e-12)


@pytest.mark.parametrize("bad", [dict(s=41), dict(m=0), dict(n=-1), dict(p=0, s=0),
                                 dict(theta=-1.0), dict(covariance_decay=1.0)])
def test_lasso_rejects_invalid_specs(bad):
    fields = dict(m=2, n=5, p=40, s=4)
    fields.update(bad)
    with pytest.raises(InvalidSpecError):
        generate_lasso(LassoGenSpec(**fields))


def test_reference_lasso_configuration_is_accepted():
    spec = reference_lasso_spec()
    spec.validate()
    assert (spec.m, spec.n, spec.p, spec.s, spec.theta) == (20, 500, 1000, 10, 0.01)
    assert spec.s == round(0.01 * spec.p)
    assert spec.noise_std ** 2 == pytest.approx(0.01)


def test_reference_spca_configuration_is_accepted():
    spec = reference_spca_spec()
    spec.validate()
    assert (spec.m, spec.n, spec.p, spec.q, spec.nnz, spec.theta) == (3, 20, 500, 1000, 3000, 0.1)


def test_spca_zero_blocks_give_zero_loss():
    C = sp.csr_matrix((5, 6))
    loss = SparsePCALoss(C, 2)
    x = np.ones(5)
    assert loss.value(x) == 0.0
    assert np.array_equal(loss.gradient(x), np.zeros(5))
    assert loss.lipschitz_bound == 0.0


def test_spca_gradient_matches_dense_assembly():
    spec = SpcaGenSpec(m=1, n=4, p=3, q=2, nnz=3, seed=11)
    C = spca_blocks(spec)[0]
    B_list = [C[:, i * spec.q:(i + 1) * spec.q].toarray() for i in range(spec.n)]
    loss = SparsePCALoss(C, spec.n)
    w = np.random.default_rng(1).standard_normal(3)
    np.testing.assert_allclose(loss.gradient(w), spca_gradient_dense(B_list, spec.n, w),
                               rtol=1e-12, atol=1e-14)
    M = sum(B @ B.T for B in B_list) / spec.n
    assert loss.lipschitz_bound == pytest.approx(2 * np.linalg.eigvalsh(M)[-1], rel=1e-8)
    assert loss.strong_convexity_modulus == 0.0


def test_spca_block_sparsity():
    spec = SpcaGenSpec(m=2, n=3, p=30, q=60, nnz=60, seed=0)
    for C in spca_blocks(spec):
        assert C.nnz == spec.n * spec.nnz
    prob = generate_spca(spec)
    assert prob.regularizer == Regularizer.l1_ball(0.1, 1.0)
    assert prob.losses.convex is False


def test_spca_rejects_nonpositive_dims():
    with pytest.raises(InvalidSpecError):
        SpcaGenSpec(m=1, n=0, p=3, q=2, nnz=1).validate()


def test_quadratic_identity_case():
    As, bs = quadratic_data(QuadGenSpec(m=2, p=4, sigma2=2.0, seed=0, spread=0.0))
    np.testing.assert_array_equal(As[0], 2.0 * np.eye(4))
    prob = generate_strongly_convex_quadratic(2, 4, 2.0, 0, spread=0.0)
    for loss in prob.losses:
        loss.b[:] = 0.0
    assert np.array_equal(quadratic_minimizer(prob.losses), np.zeros(4))
    assert prob.losses.value(np.zeros(4)) == 0.0


def test_quadratic_minimizer_matches_direct_solve():
    prob = generate_strongly_convex_quadratic(2, 3, 1.0, 1)
    A = sum(l.hessian() for l in prob.losses) / 2
    b = sum(l.b for l in prob.losses) / 2
    x = np.linalg.solve(A, b)
    np.testing.assert_allclose(prob.losses.gradient(x), 0.0, atol=1e-12)
    np.testing.assert_allclose(quadratic_minimizer(prob.losses), x, rtol=1e-12)


def test_quadratic_modulus_is_exact_min_eigenvalue():
    prob = generate_strongly_convex_quadratic(3, 7, 0.7, 2)
    for loss in prob.losses:
        eig = np.linalg.eigvalsh(loss.hessian())
        assert loss.strong_convexity_modulus == pytest.approx(eig[0], rel=1e-12)
        assert eig[0] >= 0.7 * (1 - 1e-12)


def test_quadratic_rejects_nonpositive_sigma2():
    with pytest.raises(InvalidSpecError):
        generate_strongly_convex_quadratic(2, 3, 0.0, 0)


@pytest.mark.parametrize("which", range(3))
def test_sampled_strong_convexity_and_lipschitz(which):
    prob = _desk_problems()[which]
    rng = np.random.default_rng(which)
    for loss in prob.losses:
        L, s2 = loss.lipschitz_bound, loss.strong_convexity_modulus
        for _ in range(100):
            x, y = rng.standard_normal((2, prob.p))
            gx, gy = loss.gradient(x), loss.gradient(y)
            assert np.linalg.norm(gx - gy) <= L * np.linalg.norm(x - y) * (1 + 1e-8)
            lower = loss.value(y) + gy @ (x - y) + 0.5 * s2 * (x - y) @ (x - y)
            if s2 > 0:
                assert loss.value(x) >= lower - 1e-10 * max(1.0, abs(lower))


@pytest.mark.parametrize("which", range(3))
def test_gradients_match_central_differences(which):
    prob = _desk_problems()[which]
    rng = np.random.default_rng(10 + which)
    for loss in prob.losses:
        for _ in range(10):
            x = rng.standard_normal(prob.p)
            fd = finite_difference_gradient(loss.value, x, 1e-6)
            g = loss.gradient(x)
            assert np.linalg.norm(fd - g) <= 1e-4 * max(np.linalg.norm(g), 1e-8)


def test_generation_is_deterministic():
    a = generate_lasso(LassoGenSpec(m=2, n=10, p=5, s=2, seed=9))
    b = generate_lasso(LassoGenSpec(m=2, n=10, p=5, s=2, seed=9))
    for la, lb in zip(a.losses, b.losses):
        assert np.array_equal(la.X, lb.X) and np.array_equal(la.y, lb.y)
    c = generate_spca(SpcaGenSpec(m=2, n=2, p=5, q=4, nnz=3, seed=9))
    d = generate_spca(SpcaGenSpec(m=2, n=2, p=5, q=4, nnz=3, seed=9))
    for lc, ld in zip(c.losses, d.losses):
        assert (lc.C != ld.C).nnz == 0


def test_regularizer_values_and_feasibility():
    x = np.array([0.9, -1.2])
    assert Regularizer.none().value(x) == 0.0
    assert Regularizer.l1(0.5).value(x) == pytest.approx(1.05)
    assert Regularizer.l1_ball(0.1, 1.0).value(x) == np.inf
    assert Regularizer.l1_ball(0.1, 2.0).value(x) == pytest.approx(0.21)
    for h in (Regularizer.none(), Regularizer.l1(1.0), Regularizer.l1_ball(0.1, 1.0)):
        assert h.convex_modulus == 0.0


def test_regularizer_convexity_on_sampled_triples():
    rng = np.random.default_rng(3)
    for h in (Regularizer.l1(0.3), Regularizer.l1_ball(0.3, 1.0)):
        for _ in range(200):
            x, y = rng.uniform(-0.7, 0.7, (2, 2))
            lam = rng.uniform()
            assert h.value(lam * x + (1 - lam) * y) <= lam * h.value(x) + (1 - lam) * h.value(y) + 1e-12


def test_objective_edge_cases():
    zero = SmoothLossSet([LeastSquaresLoss(np.zeros((2, 3)), np.zeros(2))])
    assert objective(zero, Regularizer.none(), np.ones(3)) == 0.0
    assert objective(zero, Regularizer.l1_ball(0.1, 1.0), np.array([1.5, 0, 0])) == np.inf
    with pytest.raises(ValueError):
        objective(zero, Regularizer.none(), np.ones(4))


def test_power_iteration_is_a_tight_upper_estimate():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((30, 30))
    M = A @ A.T
    lam = power_iteration(lambda v: M @ v, 30)
    exact = np.linalg.eigvalsh(M)[-1]
    assert exact * (1 - 1e-12) <= lam <= exact * (1 + 2e-8)
    assert power_iteration(lambda v: 0 * v, 5) == 0.0
