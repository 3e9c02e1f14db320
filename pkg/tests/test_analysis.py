import math

import numpy as np
import pytest

from fedadmm.analysis import (
    ResidualTriple,
    check_rate_bound,
    descent_coefficients,
    lagrangian,
    limit_agreement,
    lyapunov_coefficients,
    oracle_optimum,
    residuals,
    should_stop,
    theory_report,
)
from fedadmm.data import ClientDataset, Federation, generate_regression, partition
from fedadmm.errors import HypothesisViolation, SingularSystemWarning
from fedadmm.fedcore import ClientState
from fedadmm.losses import LeastSquares, Logistic
from fedadmm.solvers import HyperParams, MultiplierRule, run


def make_state(cid, x, pi, g, sigma, weight):
    return ClientState(cid, np.asarray(x, float), np.asarray(pi, float),
                       np.asarray(g, float), sigma, weight)


# -------------------------------- lagrangian -------------------------------- #


def test_lagrangian_collapses_to_objective_at_consensus():
    fed = generate_regression(3, 4, (5, 8), seed=0)
    model = LeastSquares()
    rng = np.random.default_rng(0)
    y = rng.standard_normal(4)
    clients = [
        make_state(c.client_id, y, rng.standard_normal(4),
                   c.weight * model.gradient(c, y), 1.5, c.weight)
        for c in fed.clients
    ]
    f_y = sum(c.weight * model.value(c, y) for c in fed.clients)
    assert lagrangian(clients, y, model, fed) == pytest.approx(f_y, rel=1e-14)


def test_lagrangian_single_client_forced_case():
    # w f = 0 at x_i, <x_i - y, pi> = 1, penalty = 1 -> total 2
    data = ClientDataset(0, np.array([[1.0]]), np.array([3.0]), 1.0)
    fed = Federation((data,))
    st = make_state(0, [3.0], [1.0], [0.0], sigma=2.0, weight=1.0)
    assert lagrangian([st], np.array([2.0]), LeastSquares(), fed) == pytest.approx(2.0)


def test_lagrangian_matches_fsum_oracle():
    fed = generate_regression(3, 3, (4, 6), seed=1)
    model = LeastSquares()
    rng = np.random.default_rng(1)
    y = rng.standard_normal(3)
    clients = [
        make_state(c.client_id, rng.standard_normal(3), rng.standard_normal(3),
                   np.zeros(3), float(rng.uniform(0.5, 2.0)), c.weight)
        for c in fed.clients
    ]
    terms = []
    for st, data in zip(clients, fed.clients):
        gap = st.x - y
        terms.append(st.weight * model.value(data, st.x))
        terms.append(float(st.pi @ gap))
        terms.append(0.5 * st.sigma * float(gap @ gap))
    expected = math.fsum(terms)
    got = lagrangian(clients, y, model, fed)
    assert abs(got - expected) <= 1e-10 * (1 + abs(expected))


# --------------------------------- residuals -------------------------------- #


def test_residuals_zero_at_stationary_point():
    A = np.array([[1.0, 0.0], [0.0, 2.0]])
    b = np.array([1.0, 4.0])
    data = ClientDataset(0, A, b, 1.0)
    model = LeastSquares()
    x_opt = np.linalg.solve(A.T @ A, A.T @ b)
    g = model.gradient(data, x_opt)
    st = make_state(0, x_opt, -g, g, 1.0, 1.0)
    res = residuals([st], x_opt)
    assert res.max() <= 1e-20


def test_residuals_single_client_consensus_is_dual_norm():
    g = np.array([0.3, -0.4])
    st = make_state(0, [1.0, 2.0], -g, g, 1.0, 1.0)
    res = residuals([st], np.array([1.0, 2.0]))
    assert res.dual == 0.0 and res.primal == 0.0
    assert res.consensus == pytest.approx(float(g @ g), rel=1e-15)


def test_residuals_match_componentwise_oracle():
    rng = np.random.default_rng(2)
    clients = [
        make_state(i, rng.standard_normal(3), rng.standard_normal(3),
                   rng.standard_normal(3), 1.0, 0.25)
        for i in range(4)
    ]
    y = rng.standard_normal(3)
    res = residuals(clients, y)
    dual = sum(float((c.g + c.pi) @ (c.g + c.pi)) for c in clients)
    primal = sum(float((c.x - y) @ (c.x - y)) for c in clients)
    pi_sum = sum(c.pi for c in clients)
    assert res.dual == pytest.approx(dual, rel=1e-12)
    assert res.primal == pytest.approx(primal, rel=1e-12)
    assert res.consensus == pytest.approx(float(pi_sum @ pi_sum), rel=1e-12)


# -------------------------------- stopping rule ------------------------------ #


def test_should_stop_zero_residuals():
    assert should_stop(ResidualTriple(0.0, 0.0, 0.0), 5, 7)


def test_should_stop_boundary_inclusive():
    # sqrt(100 * 900) * 1e-7 = 3e-5: a residual exactly at the boundary stops
    boundary = math.sqrt(100 * 900) * 1e-7
    assert should_stop(ResidualTriple(0.0, 0.0, boundary), 100, 900)
    assert not should_stop(ResidualTriple(0.0, 0.0, 3.1e-5), 100, 900)


def test_should_stop_monotone_in_tolerance():
    rng = np.random.default_rng(3)
    for _ in range(50):
        res = ResidualTriple(*rng.uniform(0, 1e-4, size=3))
        t1, t2 = sorted(rng.uniform(1e-9, 1e-4, size=2))
        if should_stop(res, 10, 100, t1):
            assert should_stop(res, 10, 100, t2)


# ---------------------------------- oracles ---------------------------------- #


def test_oracle_identity_client():
    fed = Federation((ClientDataset(0, np.eye(2), np.array([1.0, 2.0]), 1.0),))
    x_star, f_star = oracle_optimum(fed, LeastSquares())
    assert np.allclose(x_star, [1.0, 2.0], atol=1e-12)
    assert f_star == pytest.approx(0.0, abs=1e-20)


def test_oracle_duplicate_clients_match_single():
    rng = np.random.default_rng(4)
    A = rng.standard_normal((10, 3))
    b = rng.standard_normal(10)
    single = Federation((ClientDataset(0, A, b, 1.0),))
    double = Federation((ClientDataset(0, A, b, 0.5), ClientDataset(1, A, b, 0.5)))
    x1, f1 = oracle_optimum(single, LeastSquares())
    x2, f2 = oracle_optimum(double, LeastSquares())
    assert np.abs(x1 - x2).max() <= 1e-10
    assert f1 == pytest.approx(f2, rel=1e-12)


def test_oracle_gradient_vanishes():
    fed = generate_regression(6, 5, (8, 12), seed=5)
    model = LeastSquares()
    x_star, _ = oracle_optimum(fed, model)
    grad = sum(c.weight * model.gradient(c, x_star) for c in fed.clients)
    assert np.linalg.norm(grad) <= 1e-10


def test_oracle_singular_system_min_norm_with_warning():
    A = np.array([[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])  # second column dead
    fed = Federation((ClientDataset(0, A, np.array([1.0, 2.0, 3.0]), 1.0),))
    with pytest.warns(SingularSystemWarning):
        x_star, _ = oracle_optimum(fed, LeastSquares())
    assert x_star[1] == pytest.approx(0.0, abs=1e-12)  # minimum-norm picks zero
    assert x_star[0] == pytest.approx(1.0, rel=1e-10)


def test_oracle_logistic_gradient_to_machine_level():
    rng = np.random.default_rng(6)
    A = rng.standard_normal((40, 5))
    b = (rng.uniform(size=40) < 0.5).astype(float)
    fed = partition(A, b, 4, seed=0)
    model = Logistic(mu=0.01)
    x_star, f_star = oracle_optimum(fed, model)
    grad = sum(c.weight * model.gradient(c, x_star) for c in fed.clients)
    assert np.abs(grad).max() <= 1e-11
    assert f_star == pytest.approx(
        sum(c.weight * model.value(c, x_star) for c in fed.clients), rel=1e-14)


# --------------------------------- rate bounds ------------------------------- #


@pytest.fixture(scope="module")
def exact_run():
    fed = generate_regression(3, 4, (6, 9), seed=11)
    model = LeastSquares()
    hp = HyperParams(k0=2, sigma_rule=MultiplierRule(2.1), max_iters=500, tol_scale=1e-9)
    return fed, model, run("ceadmm", fed, model, hp)


def test_check_rate_bound_exact_variant(exact_run):
    fed, model, res = exact_run
    _, f_star = oracle_optimum(fed, model)
    report = check_rate_bound(res.trace, sigmas=res.sigmas, wr=res.wr, m=fed.m,
                              k0=res.k0, f_star=f_star, variant="ceadmm")
    assert report.violations == []
    assert report.rho > 0 and report.varrho is None
    assert len(report.bound_satisfied_at) == len(res.trace) - 1
    # transcription check on an arbitrary entry: rhs = rho k0 / k * (L0 - f*)
    k, lhs, rhs = report.bound_satisfied_at[4]
    assert rhs == pytest.approx(report.rho * res.k0 / k * (res.trace[0].L - f_star))
    mins = min(max(r.grad_F_sq, r.grad_f_sq) for r in res.trace[1:k + 1])
    assert lhs == pytest.approx(mins)


def test_check_rate_bound_inexact_variant():
    fed = generate_regression(3, 4, (6, 9), seed=11)
    model = LeastSquares()
    hp = HyperParams(k0=3, sigma_rule=MultiplierRule(4.3), max_iters=800, tol_scale=1e-9)
    res = run("iceadmm", fed, model, hp)
    _, f_star = oracle_optimum(fed, model)
    report = check_rate_bound(res.trace, sigmas=res.sigmas, wr=res.wr, m=fed.m,
                              k0=res.k0, f_star=f_star, variant="iceadmm")
    assert report.violations == []
    assert report.varrho > 0 and report.rho is None


def test_check_rate_bound_hypothesis_violation(exact_run):
    fed, model, res = exact_run
    with pytest.raises(HypothesisViolation):
        check_rate_bound(res.trace, sigmas=0.1 * res.sigmas, wr=res.wr, m=fed.m,
                         k0=res.k0, f_star=0.0, variant="ceadmm")


def test_check_rate_bound_matches_scalar_hand_transcription():
    # single scalar client, three steps of the exact solver replayed in
    # plain floats; the bound inputs must agree with the solver trace
    a, b0 = 1.5, 2.0
    fed = Federation((ClientDataset(0, np.array([[a]]), np.array([b0]), 1.0),))
    model = LeastSquares()
    r = model.lipschitz(fed.clients[0])
    sigma = 2.1 * r
    hp = HyperParams(k0=1, sigma_rule=MultiplierRule(2.1), max_iters=3,
                     tol_scale=1e-300)
    res = run("ceadmm", fed, model, hp)

    grad = lambda x: a * (a * x - b0)
    x_i, pi = 0.0, -grad(0.0)
    traced = []
    for _ in range(3):
        y = (sigma * x_i + pi) / sigma
        x_i = (a * b0 + sigma * y - pi) / (a * a + sigma)
        pi = pi + sigma * (x_i - y)
        traced.append((y, x_i, pi))
        assert abs(grad(y) ** 2 - res.trace[len(traced)].grad_f_sq) <= 1e-12

    _, f_star = oracle_optimum(fed, model)
    report = check_rate_bound(res.trace, sigmas=res.sigmas, wr=res.wr, m=1,
                              k0=1, f_star=f_star, variant="ceadmm")
    assert report.violations == []
    theta = sigma - r - 2.0 * r * r / sigma
    assert report.rho == pytest.approx(8.0 * sigma * sigma / theta, rel=1e-9)
    for k, lhs, rhs in report.bound_satisfied_at:
        expected_lhs = min(
            max(grad(y) ** 2, grad(x) ** 2) for y, x, _ in traced[:k]
        )
        assert lhs == pytest.approx(expected_lhs, rel=1e-9)
        assert lhs <= rhs * (1 + 1e-6)


def test_descent_and_lyapunov_coefficient_signs():
    sigmas = np.array([2.1, 4.3])
    wr = np.array([1.0, 1.0])
    theta = descent_coefficients(sigmas, wr)
    vartheta = lyapunov_coefficients(sigmas, wr)
    assert theta[0] == pytest.approx(2.1 - 1.0 - 2.0 / 2.1)
    assert theta[0] > 0
    assert vartheta[0] < 0  # 2.1 is below the inexact threshold
    assert vartheta[1] == pytest.approx(4.3 - 18.0 / 4.3)
    assert vartheta[1] > 0


def test_lagrangian_minus_objective_definition_consistency(exact_run):
    # L - F(X) equals the dual and penalty terms rebuilt from stored states
    fed, model, _ = exact_run
    hp = HyperParams(k0=2, sigma_rule=MultiplierRule(2.1), max_iters=30,
                     tol_scale=1e-300, keep_states=True)
    res = run("ceadmm", fed, model, hp)
    for rec, (y, states) in zip(res.trace, res.history):
        expected = sum(
            float(st.pi @ (st.x - y)) + 0.5 * st.sigma * float((st.x - y) @ (st.x - y))
            for st in states
        )
        assert abs((rec.L - rec.F_X) - expected) <= 1e-10 * (1 + abs(expected))


def test_theory_report_clean_run(exact_run):
    fed, model, res = exact_run
    report = theory_report(res, fed, model)
    assert report["violation_count"] == 0
    assert report["variant"] == "ceadmm"
    assert report["limit_agreement"]["L_vs_f"] <= 1e-6
    assert report["accuracy"]["coef_gap_inf"] <= 1e-5


def test_theory_report_rejects_uncertified_algorithm(exact_run):
    fed, model, _ = exact_run
    res = run("fedavg", fed, model, HyperParams(max_iters=5, tol_scale=1e-300))
    with pytest.raises(HypothesisViolation):
        theory_report(res, fed, model)


def test_limit_agreement_scaling():
    class Rec:
        def __init__(self, L, F_X, f_y):
            self.L, self.F_X, self.f_y = L, F_X, f_y

    trace = [Rec(10.0, 10.0, 10.0), Rec(5.0, 5.0 + 2e-6, 5.0 - 4e-6)]
    out = limit_agreement(trace, f_star=1.0)
    assert out["L_vs_F"] == pytest.approx(1e-6)
    assert out["L_vs_f"] == pytest.approx(2e-6)
