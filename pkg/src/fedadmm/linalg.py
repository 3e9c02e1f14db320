"""Dense symmetric linear algebra: SPD solves and top-eigenvalue estimation.

Everything here is pure and deterministic: identical inputs give bitwise
identical outputs, so results are reproducible across runs and safe to call
from any number of threads.
"""

import numpy as np
import scipy.linalg

from .errors import FactorizationFailure, NoConvergence, NotSymmetric

Array = np.ndarray

# Relative asymmetry tolerated before a matrix is rejected outright.
SYMMETRY_RTOL = 1e-12

# Power-iteration controls: fixed start vector, Rayleigh-quotient change
# tolerance, and hard iteration cap.
POWER_TOL = 1e-10
POWER_MAX_ITER = 10_000


def require_symmetric(M: Array) -> Array:
    """Validate that ``M`` is square and numerically symmetric.

    Returns the exactly symmetrized matrix (M + M^T)/2 so downstream
    factorizations see a bitwise-symmetric input.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {M.shape}")
    scale = np.abs(M).max()
    gap = np.abs(M - M.T).max()
    if gap > SYMMETRY_RTOL * max(1.0, scale):
        raise NotSymmetric(
            f"asymmetry {gap:.3e} exceeds {SYMMETRY_RTOL:.0e} * max(1, |M|)"
        )
    return 0.5 * (M + M.T)


def spd_solve(M: Array, v: Array) -> Array:
    """Solve ``M u = v`` for symmetric positive-definite ``M`` via Cholesky.

    The systems solved by the ADMM kernels are all Gram-plus-positive-shift,
    so positive definiteness is guaranteed by construction; a non-positive
    pivot therefore signals a caller bug and raises FactorizationFailure.
    """
    M = require_symmetric(M)
    v = np.asarray(v, dtype=float)
    try:
        factor = scipy.linalg.cho_factor(M, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise FactorizationFailure(str(exc)) from exc
    return scipy.linalg.cho_solve(factor, v, check_finite=False)


def lambda_max(M: Array) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration.

    Deterministic by construction: the start vector is all-ones, and the
    iteration stops when the Rayleigh quotient changes by at most
    ``POWER_TOL * max(1, |lambda|)``. A zero matrix returns 0. If the start
    vector is annihilated by a nonzero matrix, or the cap is hit, the
    spectrum is degenerate for this scheme and NoConvergence is raised;
    callers may fall back to the trace upper bound.
    """
    M = require_symmetric(M)
    n = M.shape[0]
    if n == 0:
        return 0.0
    v = np.ones(n) / np.sqrt(n)
    w = M @ v
    lam = None
    for _ in range(POWER_MAX_ITER):
        lam_new = float(v @ w)
        if lam is not None and abs(lam_new - lam) <= POWER_TOL * max(1.0, abs(lam_new)):
            return lam_new
        lam = lam_new
        norm_w = float(np.linalg.norm(w))
        if norm_w == 0.0:
            if not M.any():
                return 0.0
            raise NoConvergence(
                "power iteration start vector lies in the null space; "
                "degenerate spectrum"
            )
        v = w / norm_w
        w = M @ v
    raise NoConvergence(
        f"power iteration did not settle within {POWER_MAX_ITER} iterations"
    )
