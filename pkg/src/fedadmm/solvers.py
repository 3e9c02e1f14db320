"""Solver loop and local-update kernels for the five algorithms.

All algorithms share one server loop: aggregate on schedule, update every
client locally, trace the merit function and residuals, stop on the
stationarity rule. The kernels are pure functions of (state, broadcast),
so local updates could run in any order or thread without changing output;
this implementation runs them sequentially in ascending client_id order.

Algorithms:
    fedavg   -- weighted averaging + local gradient step (the baseline)
    ceadmm   -- exact consensus ADMM, aggregation every k0 iterations
    admm     -- alias for ceadmm with k0 = 1
    iceadmm  -- one majorized linear solve per client per iteration
    iadmm    -- alias for iceadmm with k0 = 1
    liadmm   -- linearised every-step variant with sigma_i = w_i / gamma
"""

import time
from dataclasses import dataclass, replace

import numpy as np

from . import fedcore
from .analysis import TraceRecord, residuals, should_stop
from .errors import (
    DimensionMismatch,
    InnerSolveFailure,
    InvalidMode,
    NonFiniteIterate,
    NonPositiveSigma,
)
from .fedcore import ClientState, CommLedger
from .linalg import spd_solve
from .losses import CurvatureMode, LeastSquares

Array = np.ndarray

ALGORITHMS = ("fedavg", "admm", "ceadmm", "liadmm", "iadmm", "iceadmm")

# Strict penalty thresholds under which the descent certificates are claimed.
EXACT_MULTIPLIER_FLOOR = 2.0
INEXACT_MULTIPLIER_FLOOR = 3.0 * np.sqrt(2.0)

_NEWTON_MAX_STEPS = 100
_ARMIJO_C = 1e-4


@dataclass(frozen=True)
class LogScaleRule:
    """sigma_i = a * ln(m d_i) / (10 ln(2 + k0)) * w_i r_i."""

    a: float = 1.0


@dataclass(frozen=True)
class MultiplierRule:
    """sigma_i = c * w_i r_i, with c strictly above the variant's floor."""

    c: float


@dataclass(frozen=True)
class ExplicitSigmas:
    """Caller-supplied per-client penalties."""

    values: tuple


def sigma_schedule(rule, w: float, r: float, m: int, d_i: int, k0, index: int = 0) -> float:
    """Evaluate one client's penalty under the given rule."""
    if w <= 0 or r <= 0:
        raise NonPositiveSigma(f"need w, r > 0, got w={w}, r={r}")
    if isinstance(rule, LogScaleRule):
        value = rule.a * np.log(m * d_i) / (10.0 * np.log(2.0 + k0)) * w * r
    elif isinstance(rule, MultiplierRule):
        value = rule.c * w * r
    elif isinstance(rule, ExplicitSigmas):
        value = float(rule.values[index])
    else:
        raise TypeError(f"unknown sigma rule {type(rule).__name__}")
    if value <= 0:
        raise NonPositiveSigma(f"sigma rule produced {value}")
    return float(value)


@dataclass
class HyperParams:
    """Run configuration. sigma_rule=None picks the variant's default
    multiplier (2.1 exact, 4.3 inexact); gamma=None picks 1/(2 max r_i) for
    fedavg and 1/(4.3 max r_i) for liadmm.

    dual_init "gradient" starts each dual at -w_i grad f_i(x0), which keeps
    the merit function non-increasing from the very first step; "zero" starts
    duals at the origin (the merit can then rise once before descending).
    """

    k0: int = 1
    sigma_rule: object = None
    curvature: CurvatureMode = CurvatureMode.scalar()
    gamma: float | None = None
    max_iters: int = 10_000
    tol_scale: float = 1e-7
    inner_tol: float | None = None
    x0: Array | None = None
    dual_init: str = "gradient"
    keep_states: bool = False  # retain (y, client states) per iteration


@dataclass
class SolveResult:
    y_final: Array
    trace: list
    iterations: int
    rounds: int
    converged: bool
    ledger: CommLedger
    sigmas: Array
    wr: Array  # per-client w_i * r_i
    weights: Array
    k0: int
    gamma: float | None
    algorithm: str
    tol_scale: float = 1e-7
    history: list | None = None  # (y, [ClientState...]) per iteration if kept
    curvatures: list | None = None  # inexact variants: per-client H (or scalar)


# --------------------------- local-update kernels --------------------------- #


def fedavg_local(x_bcast: Array, gamma: float, model, data) -> Array:
    """Plain local gradient step from the broadcast point."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return x_bcast - gamma * model.gradient(data, x_bcast)


def fedavg_aggregate(clients) -> Array:
    """Weighted mean sum_i w_i x_i, fixed reduction order."""
    return fedcore.weighted_average(clients)


def _newton_prox(state: ClientState, y: Array, model, data, inner_tol: float | None) -> Array:
    """Damped Newton with Armijo backtracking on the penalized subproblem
    w f(x) + <x - y, pi> + (sigma/2)||x - y||^2, run to gradient norm
    <= inner_tol."""
    w, sig = state.weight, state.sigma
    if inner_tol is None:
        inner_tol = 1e-10 * (1.0 + float(np.linalg.norm(sig * y - state.pi)))
    n = y.shape[0]
    eye = np.eye(n)

    def grad(x):
        return w * model.gradient(data, x) + state.pi + sig * (x - y)

    def value(x):
        gap = x - y
        return w * model.value(data, x) + float(state.pi @ gap) + 0.5 * sig * float(gap @ gap)

    x = state.x.copy()
    val = value(x)
    g = grad(x)
    for _ in range(_NEWTON_MAX_STEPS):
        g_norm = float(np.linalg.norm(g))
        if g_norm <= inner_tol:
            return x
        H = w * model.hessian(data, x) + sig * eye
        p = spd_solve(H, -g)
        # Full step first: in the quadratic phase the value gap falls below
        # float noise, so accept on gradient decrease instead of Armijo.
        g_full = grad(x + p)
        if np.linalg.norm(g_full) <= 0.9 * g_norm:
            x = x + p
            g = g_full
            val = value(x)
            continue
        slope = float(g @ p)
        t = 1.0
        for _ in range(60):
            x_try = x + t * p
            val_try = value(x_try)
            if val_try <= val + _ARMIJO_C * t * slope:
                break
            t *= 0.5
        else:
            raise InnerSolveFailure("backtracking failed to make progress")
        x, val = x_try, val_try
        g = grad(x)
    if np.linalg.norm(g) <= inner_tol:
        return x
    raise InnerSolveFailure(
        f"inner gradient norm {np.linalg.norm(g):.3e} above tolerance "
        f"{inner_tol:.3e} after {_NEWTON_MAX_STEPS} steps"
    )


def ceadmm_local(state: ClientState, y: Array, model, data,
                 inner_tol: float | None = None) -> ClientState:
    """Exact local subproblem, then the dual and cached-gradient refresh.

    Squared-error losses use the closed form
    x+ = (w A^T A + sigma I)^{-1} (w A^T b + sigma y - pi); anything else
    goes through the damped-Newton inner loop.
    """
    w, sig = state.weight, state.sigma
    if isinstance(model, LeastSquares):
        A = data.features
        M = w * (A.T @ A) + sig * np.eye(A.shape[1])
        rhs = w * (A.T @ data.targets) + sig * y - state.pi
        x_new = spd_solve(M, rhs)
    else:
        x_new = _newton_prox(state, y, model, data, inner_tol)
    pi_new = state.pi + sig * (x_new - y)
    g_new = w * model.gradient(data, x_new)
    return replace(state, x=x_new, pi=pi_new, g=g_new)


def iceadmm_local(state: ClientState, y: Array, H, model, data) -> ClientState:
    """One majorized step: x+ = x - (w H + sigma I)^{-1} [sigma (x - y) + g + pi].

    ``H`` may be a scalar h (meaning h * I, solved by a scalar divide) or a
    full curvature matrix.
    """
    w, sig = state.weight, state.sigma
    rhs = sig * (state.x - y) + state.g + state.pi
    if np.isscalar(H):
        x_new = state.x - rhs / (w * float(H) + sig)
    else:
        H = np.asarray(H, dtype=float)
        if H.shape != (y.shape[0], y.shape[0]):
            raise DimensionMismatch(f"curvature shape {H.shape} != ({y.shape[0]},) ** 2")
        x_new = state.x - spd_solve(w * H + sig * np.eye(H.shape[0]), rhs)
    pi_new = state.pi + sig * (x_new - y)
    g_new = w * model.gradient(data, x_new)
    return replace(state, x=x_new, pi=pi_new, g=g_new)


def liadmm_local(state: ClientState, y: Array, gamma: float, model, data) -> ClientState:
    """Linearised local step x+ = y - gamma grad f(y) - (gamma/w) pi and the
    matching dual pi+ = pi + (w/gamma)(x+ - y) (= -w grad f(y) identically)."""
    w = state.weight
    grad_y = model.gradient(data, y)
    x_new = y - gamma * grad_y - (gamma / w) * state.pi
    pi_new = state.pi + (w / gamma) * (x_new - y)
    g_new = w * model.gradient(data, x_new)
    return replace(state, x=x_new, pi=pi_new, g=g_new)


def liadmm_step(clients, gamma: float, model, datasets):
    """One full linearised round: x+ = sum_i w_i x_i + gamma sum_i pi_i,
    then every client's local and dual update. Returns (x+, new_states)."""
    order = np.argsort([c.client_id for c in clients])
    acc_x = np.zeros_like(clients[0].x)
    acc_pi = np.zeros_like(clients[0].pi)
    for idx in order:
        acc_x = acc_x + clients[idx].weight * clients[idx].x
        acc_pi = acc_pi + clients[idx].pi
    y = acc_x + gamma * acc_pi
    new_states = [
        liadmm_local(state, y, gamma, model, data)
        for state, data in zip(clients, datasets)
    ]
    return y, new_states


# --------------------------------- the loop --------------------------------- #


def _validate(hp: HyperParams, base: str, rule) -> None:
    if hp.k0 < 1:
        raise InvalidMode(f"k0 must be >= 1, got {hp.k0}")
    if hp.max_iters < 1:
        raise InvalidMode("max_iters must be >= 1")
    if hp.tol_scale <= 0:
        raise InvalidMode("tol_scale must be positive")
    if hp.gamma is not None and hp.gamma <= 0:
        raise InvalidMode("gamma must be positive")
    if isinstance(rule, MultiplierRule):
        floor = EXACT_MULTIPLIER_FLOOR if base == "ceadmm" else INEXACT_MULTIPLIER_FLOOR
        if base in ("ceadmm", "iceadmm") and rule.c <= floor:
            raise InvalidMode(
                f"multiplier {rule.c} must strictly exceed {floor:.4f} for {base}"
            )


def _record(k, in_K, y, clients, datasets, model, wr, rounds, elapsed,
            dy_sq, dx_sq) -> TraceRecord:
    weights = [c.weight for c in clients]
    f_y = sum(w * model.value(data, y) for w, data in zip(weights, datasets))
    F_X = sum(
        w * model.value(data, c.x) for w, c, data in zip(weights, clients, datasets)
    )
    penalty = 0.0
    grad_F = np.zeros_like(y)
    grad_f = np.zeros_like(y)
    for c, data in zip(clients, datasets):
        gap = c.x - y
        penalty += float(c.pi @ gap) + 0.5 * c.sigma * float(gap @ gap)
        grad_F = grad_F + c.g
        grad_f = grad_f + c.weight * model.gradient(data, y)
    L = F_X + penalty
    sigmas = np.array([c.sigma for c in clients])
    phi = L + float(np.sum(6.0 * wr**2 / sigmas * dx_sq))
    return TraceRecord(
        k=k,
        in_K=in_K,
        f_y=f_y,
        F_X=F_X,
        L=L,
        phi=phi,
        grad_f_sq=float(grad_f @ grad_f),
        grad_F_sq=float(grad_F @ grad_F),
        residuals=residuals(clients, y),
        rounds=rounds,
        elapsed_s=elapsed,
        dy_sq=dy_sq,
        dx_sq=dx_sq,
    )


def _check_finite(y, clients, iteration):
    if not np.isfinite(y).all():
        raise NonFiniteIterate(iteration, "broadcast point")
    for c in clients:
        if not (np.isfinite(c.x).all() and np.isfinite(c.pi).all()):
            raise NonFiniteIterate(iteration, f"client {c.client_id}")


def run(algorithm: str, fed, model, hp: HyperParams) -> SolveResult:
    """Run one algorithm on a federation until stationarity or max_iters.

    Primal iterates start at zero unless hp.x0 overrides them; duals follow
    hp.dual_init. The trace holds one record per iteration plus the initial
    state.
    """
    alg = algorithm.lower()
    if alg not in ALGORITHMS:
        raise InvalidMode(f"unknown algorithm {alg!r}; pick one of {ALGORITHMS}")
    base = {"admm": "ceadmm", "iadmm": "iceadmm"}.get(alg, alg)
    k0 = 1 if alg in ("admm", "iadmm", "liadmm", "fedavg") else hp.k0

    datasets = sorted(fed.clients, key=lambda c: c.client_id)
    m, n, d = fed.m, fed.n, fed.d
    weights = np.array([data.weight for data in datasets])
    r = np.array([model.lipschitz(data) for data in datasets])
    wr = weights * r

    rule = hp.sigma_rule
    if rule is None and base in ("ceadmm", "iceadmm"):
        rule = MultiplierRule(2.1 if base == "ceadmm" else 4.3)
    _validate(hp, base, rule)

    gamma = hp.gamma
    if base == "fedavg":
        gamma = gamma if gamma is not None else 1.0 / (2.0 * float(r.max()))
        sigmas = weights / gamma  # bookkeeping only: defines the merit trace
    elif base == "liadmm":
        gamma = gamma if gamma is not None else 1.0 / (4.3 * float(r.max()))
        sigmas = weights / gamma
    else:
        sigmas = np.array([
            sigma_schedule(rule, weights[i], r[i], m, datasets[i].n_samples, k0, index=i)
            for i in range(m)
        ])

    curvatures = None
    if base == "iceadmm":
        if hp.curvature.kind == "scalar":
            curvatures = [float(ri) for ri in r]  # scalar divide path
        else:
            curvatures = [model.curvature_matrix(data, hp.curvature) for data in datasets]

    x0 = np.zeros(n) if hp.x0 is None else np.asarray(hp.x0, dtype=float)
    if x0.shape != (n,):
        raise DimensionMismatch(f"x0 shape {x0.shape} != ({n},)")
    if hp.dual_init not in ("gradient", "zero"):
        raise InvalidMode(f"dual_init must be 'gradient' or 'zero', got {hp.dual_init!r}")
    # fedavg never touches its duals; leave them at zero there.
    dual_consistent = hp.dual_init == "gradient" and base != "fedavg"
    clients = []
    for i, data in enumerate(datasets):
        g0 = weights[i] * model.gradient(data, x0)
        clients.append(
            ClientState(
                client_id=data.client_id,
                x=x0.copy(),
                pi=-g0 if dual_consistent else np.zeros(n),
                g=g0,
                sigma=float(sigmas[i]),
                weight=float(weights[i]),
            )
        )
    ledger = CommLedger()
    uplink = 1 if base == "fedavg" else 2
    y = fedcore.weighted_average(clients)

    start = time.perf_counter()
    trace = [
        _record(0, True, y, clients, datasets, model, wr, 0, 0.0, 0.0, np.zeros(m))
    ]
    history = [(y, list(clients))] if hp.keep_states else None
    converged = should_stop(trace[0].residuals, n, d, hp.tol_scale)
    iterations = 0

    while not converged and iterations < hp.max_iters:
        k = iterations
        if base == "liadmm":
            y_new, new_clients = liadmm_step(clients, gamma, model, datasets)
            ledger.record_round(m, uplink)
        elif base == "fedavg":
            y_new = fedavg_aggregate(clients)
            ledger.record_round(m, uplink)
            new_clients = []
            for c, data in zip(clients, datasets):
                x_new = fedavg_local(y_new, gamma, model, data)
                new_clients.append(
                    replace(c, x=x_new, g=c.weight * model.gradient(data, x_new))
                )
        else:
            if fedcore.in_schedule(k, k0):
                y_new = fedcore.aggregate(clients)
                ledger.record_round(m, uplink)
            else:
                y_new = y
            if base == "ceadmm":
                new_clients = [
                    ceadmm_local(c, y_new, model, data, hp.inner_tol)
                    for c, data in zip(clients, datasets)
                ]
            else:
                new_clients = [
                    iceadmm_local(c, y_new, curvatures[i], model, datasets[i])
                    for i, c in enumerate(clients)
                ]

        dy_sq = float(np.sum((y_new - y) ** 2))
        dx_sq = np.array([
            float(np.sum((cn.x - c.x) ** 2)) for cn, c in zip(new_clients, clients)
        ])
        clients, y = new_clients, y_new
        iterations = k + 1
        _check_finite(y, clients, iterations)
        rec = _record(
            iterations,
            fedcore.in_schedule(iterations, k0),
            y,
            clients,
            datasets,
            model,
            wr,
            ledger.rounds,
            time.perf_counter() - start,
            dy_sq,
            dx_sq,
        )
        trace.append(rec)
        if history is not None:
            history.append((y, list(clients)))
        converged = should_stop(rec.residuals, n, d, hp.tol_scale)

    return SolveResult(
        y_final=y,
        trace=trace,
        iterations=iterations,
        rounds=ledger.rounds,
        converged=converged,
        ledger=ledger,
        sigmas=np.asarray(sigmas, dtype=float),
        wr=wr,
        weights=weights,
        k0=k0,
        gamma=gamma,
        algorithm=alg,
        tol_scale=hp.tol_scale,
        history=history,
        curvatures=curvatures,
    )
