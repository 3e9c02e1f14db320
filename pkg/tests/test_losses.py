import math

import numpy as np
import pytest

from fedadmm.data import ClientDataset
from fedadmm.errors import DimensionMismatch, InvalidMode, LabelDomain
from fedadmm.losses import LIPSCHITZ_SAFETY, CurvatureMode, LeastSquares, Logistic


def make_data(A, b, cid=0, w=1.0):
    return ClientDataset(cid, np.asarray(A, float), np.asarray(b, float), w)


def central_fd(func, x, h_scale=1e-6):
    """Central finite differences with per-coordinate step h = h_scale*(1+|x_j|)."""
    g = np.zeros_like(x)
    for j in range(x.shape[0]):
        h = h_scale * (1.0 + abs(x[j]))
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (func(x + e) - func(x - e)) / (2.0 * h)
    return g


# ------------------------------- least squares ------------------------------ #


def test_ls_value_identity_case():
    data = make_data(np.eye(2), [0.0, 0.0])
    assert LeastSquares().value(data, np.array([1.0, 1.0])) == 1.0


def test_ls_value_matches_per_row_extended_precision_oracle():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((10, 5))
    b = rng.standard_normal(10)
    x = rng.standard_normal(5)
    # per-row residuals in extended precision, exactly summed
    terms = []
    for row, target in zip(A, b):
        r = float(np.dot(row.astype(np.longdouble), x.astype(np.longdouble)) - target)
        terms.append(0.5 * r * r)
    expected = math.fsum(terms)
    got = LeastSquares().value(make_data(A, b), x)
    assert abs(got - expected) <= 1e-12 * (1 + abs(expected))


def test_ls_gradient_zero_at_optimum():
    data = make_data(np.eye(2), [1.0, 2.0])
    assert np.allclose(LeastSquares().gradient(data, np.array([1.0, 2.0])), 0.0, atol=1e-15)


def test_ls_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        LeastSquares().value(make_data(np.eye(2), [0.0, 0.0]), np.zeros(3))


def test_ls_lipschitz_diagonal():
    data = make_data(np.diag([2.0, 1.0]), [0.0, 0.0])
    assert LeastSquares().lipschitz(data) == pytest.approx(4.0 * LIPSCHITZ_SAFETY, rel=1e-12)


def test_ls_lipschitz_matches_eigh_oracle():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((20, 8))
    expected = float(np.linalg.eigvalsh(A.T @ A)[-1]) * LIPSCHITZ_SAFETY
    got = LeastSquares().lipschitz(make_data(A, np.zeros(20)))
    assert abs(got - expected) <= 1e-6 * expected


# --------------------------------- logistic --------------------------------- #


def test_logistic_value_at_origin():
    # every x-term vanishes at x = 0, leaving d_i * ln 2
    rng = np.random.default_rng(2)
    A = rng.standard_normal((4, 3))
    b = np.array([0.0, 1.0, 1.0, 0.0])
    got = Logistic(mu=0.01).value(make_data(A, b), np.zeros(3))
    assert got == pytest.approx(4.0 * math.log(2.0), rel=1e-14)


def test_logistic_gradient_at_origin_single_row():
    a = np.array([0.5, -2.0, 1.0])
    for label in (0.0, 1.0):
        data = make_data(a[None, :], [label])
        got = Logistic(mu=0.01).gradient(data, np.zeros(3))
        assert np.allclose(got, a * (0.5 - label), atol=1e-15)


def test_logistic_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((12, 6))
    b = (rng.uniform(size=12) < 0.5).astype(float)
    x = rng.standard_normal(6)
    model = Logistic(mu=0.01)
    data = make_data(A, b)
    fd = central_fd(lambda z: model.value(data, z), x)
    g = model.gradient(data, x)
    assert np.linalg.norm(fd - g) <= 1e-6 * (1 + np.linalg.norm(g))


def test_logistic_lipschitz_scaled_identity():
    data = make_data(2.0 * np.eye(2), [0.0, 1.0])
    got = Logistic(mu=0.01).lipschitz(data)
    assert got == pytest.approx((4.0 / 4.0 + 0.01) * LIPSCHITZ_SAFETY, rel=1e-12)


def test_logistic_rejects_bad_labels():
    data = make_data(np.eye(2), [0.0, 2.0])
    with pytest.raises(LabelDomain):
        Logistic(mu=0.01).value(data, np.zeros(2))


def test_logistic_stable_at_extreme_margins():
    # <a, x> = +-700 must stay finite through the log-sum-exp form
    a = np.array([[1.0, 0.0]])
    model = Logistic(mu=0.01)
    for sign in (1.0, -1.0):
        data = make_data(a, [1.0])
        x = np.array([sign * 700.0, 0.0])
        assert np.isfinite(model.value(data, x))
        assert np.isfinite(model.gradient(data, x)).all()


# --------------------------------- curvature -------------------------------- #


def test_curvature_scalar_ls():
    data = make_data(np.diag([2.0, 1.0]), [0.0, 0.0])
    got = LeastSquares().curvature_matrix(data, CurvatureMode.scalar())
    assert np.allclose(got, 4.0 * LIPSCHITZ_SAFETY * np.eye(2), rtol=1e-12)


def test_curvature_scaled_gram_logistic():
    data = make_data(np.eye(2), [0.0, 1.0])
    got = Logistic(mu=0.01).curvature_matrix(data, CurvatureMode.scaled_gram(6.0))
    assert np.allclose(got, np.eye(2) / 6.0, rtol=0, atol=1e-16)


def test_curvature_gram_matches_direct_product():
    rng = np.random.default_rng(4)
    A = rng.standard_normal((3, 2))
    got = LeastSquares().curvature_matrix(make_data(A, np.zeros(3)), CurvatureMode.gram())
    assert np.array_equal(got, A.T @ A)


def test_curvature_invalid_modes():
    data = make_data(np.eye(2), [0.0, 1.0])
    with pytest.raises(InvalidMode):
        Logistic(mu=0.01).curvature_matrix(data, CurvatureMode.gram())
    with pytest.raises(InvalidMode):
        Logistic(mu=0.01).curvature_matrix(data, CurvatureMode.scaled_gram(4.0))


def test_curvature_between_zero_and_lipschitz_identity():
    # r_i I >= M >= 0 (within 1e-8) for every mode the family supports
    rng = np.random.default_rng(5)
    A = rng.standard_normal((15, 4))
    ls_data = make_data(A, rng.standard_normal(15))
    lg_data = make_data(A, (rng.uniform(size=15) < 0.5).astype(float))
    cases = [
        (LeastSquares(), ls_data, CurvatureMode.scalar()),
        (LeastSquares(), ls_data, CurvatureMode.gram()),
        (Logistic(0.01), lg_data, CurvatureMode.scalar()),
        (Logistic(0.01), lg_data, CurvatureMode.scaled_gram(6.0)),
    ]
    for model, data, mode in cases:
        M = model.curvature_matrix(data, mode)
        r = model.lipschitz(data)
        eigs_M = np.linalg.eigvalsh(M)
        assert eigs_M[0] >= -1e-8
        assert np.linalg.eigvalsh(r * np.eye(4) - M)[0] >= -1e-8


# ------------------------------ property sweeps ----------------------------- #


def test_gradient_check_fifty_random_instances_per_family():
    rng = np.random.default_rng(6)
    for trial in range(50):
        rows = int(rng.integers(3, 12))
        cols = int(rng.integers(2, 6))
        A = rng.standard_normal((rows, cols))
        x = rng.standard_normal(cols)
        ls = LeastSquares()
        ls_data = make_data(A, rng.standard_normal(rows))
        fd = central_fd(lambda z: ls.value(ls_data, z), x)
        g = ls.gradient(ls_data, x)
        assert np.linalg.norm(fd - g) <= 1e-6 * (1 + np.linalg.norm(g))

        lg = Logistic(mu=0.01)
        lg_data = make_data(A, (rng.uniform(size=rows) < 0.5).astype(float))
        fd = central_fd(lambda z: lg.value(lg_data, z), x)
        g = lg.gradient(lg_data, x)
        assert np.linalg.norm(fd - g) <= 1e-6 * (1 + np.linalg.norm(g))


def test_descent_witness_inequality():
    # f(x) <= f(z) + <grad f(z), x - z> + (r/2) ||x - z||^2
    rng = np.random.default_rng(7)
    A = rng.standard_normal((10, 4))
    cases = [
        (LeastSquares(), make_data(A, rng.standard_normal(10))),
        (Logistic(0.01), make_data(A, (rng.uniform(size=10) < 0.5).astype(float))),
    ]
    for model, data in cases:
        r = model.lipschitz(data)
        for _ in range(100):
            x = rng.standard_normal(4)
            z = rng.standard_normal(4)
            lhs = model.value(data, x)
            rhs = (
                model.value(data, z)
                + model.gradient(data, z) @ (x - z)
                + 0.5 * r * np.sum((x - z) ** 2)
            )
            assert lhs <= rhs + 1e-9 * (1 + abs(rhs))
