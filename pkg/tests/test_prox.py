import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from edanni.problems import LeastSquaresLoss, Regularizer, SmoothLossSet, generate_lasso, \
    LassoGenSpec, generate_strongly_convex_quadratic
from edanni.prox import (project_ball, prox, prox_gradient_map, prox_nonexpansive_check,
                         soft_threshold, subgradient_residual)

from oracles import (coordinate_descent_l1, l1_ball_prox_cvxpy, l1_ball_prox_grid_2d,
                     lasso_as_quadratic, proximal_gradient_reference)

REGULARIZERS = [Regularizer.none(), Regularizer.l1(0.1), Regularizer.l1(1.0),
                Regularizer.l1_ball(0.1, 1.0), Regularizer.l1_ball(0.3, 2.0)]
finite_vectors = arrays(np.float64, 5, elements=st.floats(-50, 50, allow_nan=False))

# Frozen from the 2-d grid and cvxpy oracles: minimizer of 0.3||x||_1 + 0.5||x - (2,2)||^2
# over the unit disk.
BALL_PROX_22 = np.array([0.7071067811865476, 0.7071067811865476])


def test_soft_threshold_example():
    out = prox(Regularizer.l1(0.5), np.array([2.0, -0.5, 0.3]))
    np.testing.assert_array_equal(out, [1.5, 0.0, 0.0])


def test_ties_map_to_zero():
    assert soft_threshold(np.array([0.25, -0.25]), 0.25).tolist() == [0.0, 0.0]


def test_identity_cases():
    z = np.array([3.0, -1.0, 0.2])
    assert np.array_equal(prox(Regularizer.none(), z, 7.0), z)
    assert np.array_equal(prox(Regularizer.l1(0.0), z), z)


def test_ball_prox_matches_grid_and_frozen_value():
    z = np.array([2.0, 2.0])
    out = prox(Regularizer.l1_ball(0.3, 1.0), z)
    np.testing.assert_allclose(out, l1_ball_prox_grid_2d(z, 0.3, 1.0), atol=1e-3)
    np.testing.assert_allclose(out, BALL_PROX_22, atol=1e-12)
    np.testing.assert_allclose(out, l1_ball_prox_cvxpy(z, 0.3, 1.0), atol=1e-8)


def test_ball_prox_equals_composite_minimizer_on_100_instances():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(2, 6))
        z = rng.standard_normal(d) * rng.choice([0.3, 1.0, 3.0])
        theta, radius, scale = rng.uniform(0, 0.8), rng.uniform(0.3, 2), rng.uniform(0.2, 2)
        ours = prox(Regularizer.l1_ball(theta, radius), z, scale)
        ref = l1_ball_prox_cvxpy(z, theta, radius, scale)
        worst = max(worst, float(np.max(np.abs(ours - ref))))
    assert worst <= 1e-6


def test_nonfinite_input_and_bad_scale_raise():
    with pytest.raises(FloatingPointError):
        prox(Regularizer.l1(0.1), np.array([np.nan, 1.0]))
    with pytest.raises(ValueError):
        prox(Regularizer.l1(0.1), np.ones(2), 0.0)


def test_project_ball():
    np.testing.assert_allclose(project_ball(np.array([3.0, 4.0]), 1.0), [0.6, 0.8])
    assert np.array_equal(project_ball(np.array([0.1, 0.2]), 1.0), [0.1, 0.2])


@pytest.mark.parametrize("h", [Regularizer.l1(0.1), Regularizer.l1_ball(0.1, 1.0)],
                         ids=["l1", "l1ball"])
def test_nonexpansive_on_1000_pairs(h):
    rng = np.random.default_rng(1)
    Z1 = rng.standard_normal((1000, 8)) * 2
    Z2 = rng.standard_normal((1000, 8)) * 2
    assert all(prox_nonexpansive_check(h, a, b) for a, b in zip(Z1, Z2))
    assert prox_nonexpansive_check(h, Z1[0], Z1[0])


@pytest.mark.parametrize("h", REGULARIZERS, ids=lambda h: f"{h.kind}")
@settings(max_examples=150, deadline=None)
@given(z1=finite_vectors, z2=finite_vectors, scale=st.floats(0.01, 10))
def test_firm_nonexpansiveness(h, z1, z2, scale):
    p1, p2 = prox(h, z1, scale), prox(h, z2, scale)
    d = p1 - p2
    assert d @ d <= d @ (z1 - z2) + 1e-12 * max(1.0, abs(d @ (z1 - z2)))


@settings(max_examples=200, deadline=None)
@given(z=finite_vectors, theta=st.floats(0, 5), scale=st.floats(0.01, 10))
def test_l1_prox_optimality_intervals(z, theta, scale):
    x = prox(Regularizer.l1(theta), z, scale)
    zero = x == 0
    assert np.all(np.abs(z[zero]) <= scale * theta + 1e-12)
    nz = ~zero
    np.testing.assert_allclose(z[nz] - x[nz], scale * theta * np.sign(x[nz]), atol=1e-9)


def test_prox_gradient_map_without_regularizer():
    prob = generate_strongly_convex_quadratic(3, 5, 1.0, 0)
    x = np.random.default_rng(0).standard_normal(5)
    rep = prox_gradient_map(prob.losses, Regularizer.none(), x)
    np.testing.assert_allclose(rep.map_value, prob.losses.gradient(x), rtol=1e-14)
    assert rep.norm == pytest.approx(np.linalg.norm(rep.map_value), rel=1e-14)
    x_star = np.linalg.solve(sum(l.hessian() for l in prob.losses), sum(l.b for l in prob.losses))
    assert prox_gradient_map(prob.losses, Regularizer.none(), x_star).norm <= 1e-12


def test_prox_gradient_map_vanishes_at_coordinate_descent_minimizer():
    prob = generate_strongly_convex_quadratic(2, 6, 1.0, 4)
    Q = sum(l.hessian() for l in prob.losses) / 2
    c = sum(l.b for l in prob.losses) / 2
    h = Regularizer.l1(0.3)
    x = coordinate_descent_l1(Q, c, 0.3, tol=1e-13)
    assert prox_gradient_map(prob.losses, h, x).norm <= 1e-8
    assert np.count_nonzero(x) < 6


def test_prox_gradient_map_vanishes_at_reference_lasso_solution():
    spec = LassoGenSpec(m=2, n=30, p=10, s=2, theta=0.01, seed=0)
    prob = generate_lasso(spec)
    Q, c, _ = lasso_as_quadratic([l.X for l in prob.losses], [l.y for l in prob.losses])
    x = proximal_gradient_reference(Q, c, 0.01, 20000)
    assert prox_gradient_map(prob.losses, prob.regularizer, x).norm <= 1e-8


def test_prox_gradient_map_dimension_mismatch():
    losses = SmoothLossSet([LeastSquaresLoss(np.ones((2, 3)), np.ones(2))])
    with pytest.raises(ValueError):
        prox_gradient_map(losses, Regularizer.none(), np.ones(2))


def test_subgradient_residual_zero_at_prox_output():
    rng = np.random.default_rng(2)
    for h in (Regularizer.l1(0.2), Regularizer.l1_ball(0.2, 1.0)):
        for _ in range(50):
            z = rng.standard_normal(4) * 2
            x = prox(h, z)
            # x = prox(z) means 0 in (x - z) + dh(x)
            assert subgradient_residual(h, x - z, x) <= 1e-10
