"""Residuals, merit functions, stopping rule, oracles, and bound checking.

The solver's merit function is the augmented Lagrangian
L = sum_i [w_i f_i(x_i) + <x_i - y, pi_i> + (sigma_i/2) ||x_i - y||^2];
under the strict penalty thresholds it decreases monotonically (exact
updates) or does so after augmentation with a successive-difference term
(inexact updates). check_rate_bound verifies the O(k0/k) decay of the
smallest squared gradient norm along a finished trace.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, HypothesisViolation, NoConvergence
from .errors import SingularSystemWarning
from .losses import LeastSquares, Logistic, _sigmoid

Array = np.ndarray

# Additive slacks for floating-point accumulation in the runtime assertions.
MONOTONE_SLACK = 1e-10
QUANTITATIVE_SLACK = 1e-8
RATE_SLACK = 1.0 + 1e-6


@dataclass(frozen=True)
class ResidualTriple:
    """The three stationarity sums, all squared norms (hence >= 0)."""

    dual: float  # sum_i ||g_i + pi_i||^2
    primal: float  # sum_i ||x_i - y||^2
    consensus: float  # ||sum_i pi_i||^2

    def max(self) -> float:
        return max(self.dual, self.primal, self.consensus)


@dataclass
class TraceRecord:
    """Per-iteration metrics at the state (y^k, X^k, Pi^k)."""

    k: int
    in_K: bool
    f_y: float
    F_X: float
    L: float
    phi: float
    grad_f_sq: float
    grad_F_sq: float
    residuals: ResidualTriple
    rounds: int
    elapsed_s: float
    dy_sq: float = 0.0  # ||y^k - y^{k-1}||^2 (0 at k=0)
    dx_sq: Array = field(default_factory=lambda: np.zeros(0))  # per-client step


@dataclass
class RateReport:
    """Outcome of sweeping a rate bound along a trace."""

    rho: float | None  # max_i 8 m sigma_i^2 / theta_i (exact variant)
    varrho: float | None  # max_i 12 m sigma_i^2 / vartheta_i (inexact variant)
    bound_satisfied_at: list  # (k, lhs, rhs) for every checked k
    violations: list  # subset where lhs > rhs * (1 + 1e-6)


def lagrangian(clients, y: Array, model, fed) -> float:
    """Augmented Lagrangian of the current federation state."""
    y = np.asarray(y, dtype=float)
    total = 0.0
    for state, data in zip(clients, fed.clients):
        gap = state.x - y
        if gap.shape != y.shape:
            raise DimensionMismatch("client/server dimension mismatch")
        total += (
            state.weight * model.value(data, state.x)
            + float(state.pi @ gap)
            + 0.5 * state.sigma * float(gap @ gap)
        )
    return total


def residuals(clients, y: Array) -> ResidualTriple:
    """Stationarity residuals at (y, X, Pi), using the cached gradients."""
    y = np.asarray(y, dtype=float)
    dual = 0.0
    primal = 0.0
    pi_sum = np.zeros_like(y)
    for state in clients:
        diff = state.g + state.pi
        dual += float(diff @ diff)
        gap = state.x - y
        primal += float(gap @ gap)
        pi_sum = pi_sum + state.pi
    return ResidualTriple(dual, primal, float(pi_sum @ pi_sum))


def should_stop(res: ResidualTriple, n: int, d: int, tol_scale: float = 1e-7) -> bool:
    """Stationarity test: max residual <= sqrt(n d) * tol_scale (inclusive)."""
    if n < 1 or d < 1:
        raise DimensionMismatch("n and d must be positive")
    return bool(res.max() <= np.sqrt(float(n) * float(d)) * tol_scale)


def descent_coefficients(sigmas: Array, wr: Array) -> Array:
    """theta_i = sigma_i - w_i r_i - 2 (w_i r_i)^2 / sigma_i (exact updates)."""
    sigmas = np.asarray(sigmas, dtype=float)
    wr = np.asarray(wr, dtype=float)
    return sigmas - wr - 2.0 * wr**2 / sigmas


def lyapunov_coefficients(sigmas: Array, wr: Array) -> Array:
    """vartheta_i = sigma_i - 18 (w_i r_i)^2 / sigma_i (inexact updates)."""
    sigmas = np.asarray(sigmas, dtype=float)
    wr = np.asarray(wr, dtype=float)
    return sigmas - 18.0 * wr**2 / sigmas


def oracle_optimum(fed, model):
    """Independent pooled-problem optimum (x*, f*).

    Squared error: solve the pooled normal equations directly; a singular
    system falls back to the minimum-norm solution via an eigendecomposition
    and emits SingularSystemWarning. Logistic: plain full-gradient descent
    with step 1/r (pooled Lipschitz constant), no acceleration, run until
    ||grad f||_inf <= 1e-12.
    """
    n = fed.n
    weights = fed.weights
    if isinstance(model, LeastSquares):
        H = np.zeros((n, n))
        c = np.zeros(n)
        for w, data in zip(weights, fed.clients):
            H += w * (data.features.T @ data.features)
            c += w * (data.features.T @ data.targets)
        eigvals = np.linalg.eigvalsh(H)
        if eigvals[0] <= 1e-12 * max(1.0, eigvals[-1]):
            warnings.warn(
                "pooled normal equations are singular; returning the "
                "minimum-norm solution",
                SingularSystemWarning,
            )
            vals, vecs = np.linalg.eigh(H)
            keep = vals > 1e-12 * max(1.0, vals[-1])
            x_star = vecs[:, keep] @ ((vecs[:, keep].T @ c) / vals[keep])
        else:
            x_star = np.linalg.solve(H, c)
    elif isinstance(model, Logistic):
        # Pool all rows once; per-row weights give grad f = sum_i w_i grad f_i.
        A = np.vstack([data.features for data in fed.clients])
        b = np.concatenate([data.targets for data in fed.clients])
        row_w = np.concatenate(
            [np.full(data.n_samples, w) for w, data in zip(weights, fed.clients)]
        )
        mu_eff = model.mu * float(np.sum(weights))
        step = 1.0 / sum(
            w * model.lipschitz(data) for w, data in zip(weights, fed.clients)
        )
        x_star = np.zeros(n)
        for _ in range(1_000_000):
            grad = A.T @ (row_w * (_sigmoid(A @ x_star) - b)) + mu_eff * x_star
            if np.abs(grad).max() <= 1e-12:
                break
            x_star = x_star - step * grad
        else:
            raise NoConvergence("logistic oracle did not reach 1e-12 gradient")
    else:
        raise TypeError(f"no oracle for loss {type(model).__name__}")

    f_star = sum(
        w * model.value(data, x_star) for w, data in zip(weights, fed.clients)
    )
    return x_star, float(f_star)


def check_rate_bound(trace, *, sigmas, wr, m, k0, f_star, variant) -> RateReport:
    """Verify the O(k0/k) decay bound along a finished trace.

    Exact variant: min over j in [1, k] of max(||grad F(X^j)||^2,
    ||grad f(y^j)||^2) must stay below (rho k0 / k)(L^0 - f*). Inexact
    variant: the same with gradient indices shifted by k0 and the anchor
    phi^1 - f*. Raises HypothesisViolation when the penalty thresholds that
    define the constants are not strictly met.
    """
    sigmas = np.asarray(sigmas, dtype=float)
    wr = np.asarray(wr, dtype=float)
    if variant == "ceadmm":
        theta = descent_coefficients(sigmas, wr)
        if np.any(theta <= 0):
            raise HypothesisViolation(
                "theta_i <= 0 for some client; need sigma_i > 2 w_i r_i"
            )
        rho = float(np.max(8.0 * m * sigmas**2 / theta))
        varrho = None
        shift = 0
        anchor = trace[0].L - f_star
        constant = rho
    elif variant == "iceadmm":
        vartheta = lyapunov_coefficients(sigmas, wr)
        if np.any(vartheta <= 0):
            raise HypothesisViolation(
                "vartheta_i <= 0 for some client; need sigma_i > 3*sqrt(2) w_i r_i"
            )
        varrho = float(np.max(12.0 * m * sigmas**2 / vartheta))
        rho = None
        shift = k0
        if len(trace) < 2:
            return RateReport(rho, varrho, [], [])
        anchor = trace[1].phi - f_star
        constant = varrho
    else:
        raise ValueError(f"unknown variant {variant!r}")

    checked = []
    violations = []
    running_min = np.inf
    last = len(trace) - 1
    for k in range(1, last - shift + 1):
        rec = trace[k + shift]
        running_min = min(running_min, max(rec.grad_F_sq, rec.grad_f_sq))
        rhs = constant * k0 / k * anchor
        checked.append((k, running_min, rhs))
        if running_min > rhs * RATE_SLACK:
            violations.append((k, running_min, rhs))
    return RateReport(rho, varrho, checked, violations)


def descent_violations(trace, sigma_total: float, theta: Array) -> list:
    """Exact-update descent: L^{k+1} - L^k <= -(sigma/2)||dy||^2
    - sum_i (theta_i/2)||dx_i||^2 + slack. Returns violating (k, gap)."""
    bad = []
    for k in range(1, len(trace)):
        rec = trace[k]
        bound = (
            -0.5 * sigma_total * rec.dy_sq
            - 0.5 * float(theta @ rec.dx_sq)
            + QUANTITATIVE_SLACK
        )
        gap = rec.L - trace[k - 1].L
        if gap > bound:
            bad.append((rec.k, gap - bound))
    return bad


def lyapunov_violations(trace) -> list:
    """Inexact-update descent: phi^{k+1} <= phi^k + slack for k >= 1."""
    bad = []
    for k in range(2, len(trace)):
        if trace[k].phi > trace[k - 1].phi + MONOTONE_SLACK:
            bad.append((trace[k].k, trace[k].phi - trace[k - 1].phi))
    return bad


def sandwich_violations(trace, f_star: float, merit: str) -> list:
    """merit^k >= f(y^k) >= f* with slack >= -1e-8 (merit 'L' or 'phi')."""
    bad = []
    for k, rec in enumerate(trace):
        value = rec.L if merit == "L" else rec.phi
        if merit == "phi" and k == 0:
            continue  # phi is defined from the first step onward
        if value - rec.f_y < -QUANTITATIVE_SLACK:
            bad.append((rec.k, "merit below f(y)", value - rec.f_y))
        if rec.f_y - f_star < -QUANTITATIVE_SLACK:
            bad.append((rec.k, "f(y) below f*", rec.f_y - f_star))
    return bad


def limit_agreement(trace, f_star: float) -> dict:
    """Final-iterate gaps |L - F(X)| and |L - f(y)|, scaled by 1 + |f*|."""
    last = trace[-1]
    scale = 1.0 + abs(f_star)
    return {
        "L_vs_F": abs(last.L - last.F_X) / scale,
        "L_vs_f": abs(last.L - last.f_y) / scale,
    }


LIMIT_AGREEMENT_TOL = 1e-6
GRAD_VANISH_SCALE = 1e-8  # converged runs must have ||grad f||^2 <= this * n * d


def theory_report(result, fed, model) -> dict:
    """Run every certified inequality against a finished solve.

    Covers: merit descent (exact) or Lyapunov descent (inexact), the
    merit >= f(y) >= f* sandwich, the O(k0/k) rate bound, and on converged
    runs the limit agreement of the three objective sequences plus the
    vanishing-gradient condition. Raises HypothesisViolation when the run's
    penalties do not strictly satisfy the thresholds the bounds assume.
    Accuracy against the pooled oracle is reported as data, not a violation.
    """
    if result.algorithm in ("ceadmm", "admm"):
        variant = "ceadmm"
    elif result.algorithm in ("iceadmm", "iadmm"):
        variant = "iceadmm"
    else:
        raise HypothesisViolation(
            f"no certified bounds for algorithm {result.algorithm!r}"
        )

    x_star, f_star = oracle_optimum(fed, model)
    rate = check_rate_bound(
        result.trace,
        sigmas=result.sigmas,
        wr=result.wr,
        m=fed.m,
        k0=result.k0,
        f_star=f_star,
        variant=variant,
    )
    report = {"variant": variant, "f_star": f_star}
    if variant == "ceadmm":
        theta = descent_coefficients(result.sigmas, result.wr)
        report["rho"] = rate.rho
        report["descent_violations"] = descent_violations(
            result.trace, float(np.sum(result.sigmas)), theta
        )
        report["sandwich_violations"] = sandwich_violations(result.trace, f_star, "L")
    else:
        report["varrho"] = rate.varrho
        report["lyapunov_violations"] = lyapunov_violations(result.trace)
        report["sandwich_violations"] = sandwich_violations(result.trace, f_star, "phi")
    report["rate_violations"] = rate.violations

    count = (
        len(report.get("descent_violations", []))
        + len(report.get("lyapunov_violations", []))
        + len(report["sandwich_violations"])
        + len(report["rate_violations"])
    )
    if result.converged:
        last = result.trace[-1]
        agreement = limit_agreement(result.trace, f_star)
        grad_bound = GRAD_VANISH_SCALE * fed.n * fed.d
        report["limit_agreement"] = agreement
        report["stationarity"] = {
            "max_residual": last.residuals.max(),
            "threshold": float(np.sqrt(fed.n * fed.d)) * result.tol_scale,
            "grad_f_sq": last.grad_f_sq,
            "grad_f_sq_bound": grad_bound,
        }
        if max(agreement.values()) > LIMIT_AGREEMENT_TOL:
            count += 1
        if last.grad_f_sq > grad_bound:
            count += 1
        report["accuracy"] = {
            "coef_gap_inf": float(np.abs(result.y_final - x_star).max()),
            "objective_gap_rel": abs(result.trace[-1].f_y - f_star)
            / (1.0 + abs(f_star)),
        }
    report["violation_count"] = count
    return report
