"""Client loss families: squared error and L2-regularized logistic.

Both families expose values, gradients, Hessians, a gradient-Lipschitz
constant, and the curvature matrices the inexact solver majorizes with.
The Lipschitz constants carry a (1 + 1e-6) safety factor so that strict
penalty thresholds downstream survive eigenvalue-estimation error.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidMode, LabelDomain
from .linalg import lambda_max

Array = np.ndarray

# Multiplicative slack applied to every estimated Lipschitz constant.
LIPSCHITZ_SAFETY = 1.0 + 1e-6


@dataclass(frozen=True)
class CurvatureMode:
    """Choice of local curvature matrix for the inexact update.

    kind:
        "scalar"      -> r_i * I, the Lipschitz multiple of the identity
        "scaled_gram" -> (1/r) * A^T A with the caller-chosen scale r
        "gram"        -> A^T A exactly (squared-error losses only)
    """

    kind: str
    r: float = 0.0

    @classmethod
    def scalar(cls) -> "CurvatureMode":
        return cls("scalar")

    @classmethod
    def scaled_gram(cls, r: float = 6.0) -> "CurvatureMode":
        return cls("scaled_gram", float(r))

    @classmethod
    def gram(cls) -> "CurvatureMode":
        return cls("gram")


def _check_inputs(data, x: Array) -> Array:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != data.features.shape[1]:
        raise DimensionMismatch(
            f"parameter length {x.shape} does not match feature count "
            f"{data.features.shape[1]}"
        )
    return x


def _softplus(t: Array) -> Array:
    # ln(1 + e^t) evaluated as max(t, 0) + ln(1 + e^-|t|): overflow-free.
    return np.maximum(t, 0.0) + np.log1p(np.exp(-np.abs(t)))


def _sigmoid(t: Array) -> Array:
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


class LeastSquares:
    """Squared-error loss: sum_j 0.5 * (<a_j, x> - b_j)^2."""

    def value(self, data, x: Array) -> float:
        x = _check_inputs(data, x)
        residual = data.features @ x - data.targets
        return 0.5 * float(residual @ residual)

    def gradient(self, data, x: Array) -> Array:
        x = _check_inputs(data, x)
        return data.features.T @ (data.features @ x - data.targets)

    def hessian(self, data, x: Array | None = None) -> Array:
        return data.features.T @ data.features

    def lipschitz(self, data) -> float:
        return lambda_max(data.features.T @ data.features) * LIPSCHITZ_SAFETY

    def curvature_matrix(self, data, mode: CurvatureMode) -> Array:
        n = data.features.shape[1]
        if mode.kind == "scalar":
            return self.lipschitz(data) * np.eye(n)
        if mode.kind == "scaled_gram":
            if mode.r <= 0:
                raise InvalidMode("scaled_gram scale must be positive")
            return (data.features.T @ data.features) / mode.r
        if mode.kind == "gram":
            return data.features.T @ data.features
        raise InvalidMode(f"unknown curvature kind {mode.kind!r}")


class Logistic:
    """L2-regularized logistic loss.

    sum_j [ln(1 + e^{<a_j,x>}) - b_j <a_j,x> + (mu / (2 d_i)) ||x||^2]
    with labels b_j in {0, 1} and penalty mu > 0.
    """

    def __init__(self, mu: float = 0.01):
        if mu <= 0:
            raise InvalidMode("logistic penalty mu must be positive")
        self.mu = float(mu)

    def _check_labels(self, data):
        b = data.targets
        bad = b[(b != 0.0) & (b != 1.0)]
        if bad.size:
            shown = ", ".join(repr(float(v)) for v in np.unique(bad)[:5])
            raise LabelDomain(f"labels outside {{0, 1}}: {shown}")

    def value(self, data, x: Array) -> float:
        x = _check_inputs(data, x)
        self._check_labels(data)
        t = data.features @ x
        # The per-row penalty mu/(2 d_i) ||x||^2 sums to (mu/2) ||x||^2.
        return float(
            np.sum(_softplus(t) - data.targets * t) + 0.5 * self.mu * (x @ x)
        )

    def gradient(self, data, x: Array) -> Array:
        x = _check_inputs(data, x)
        self._check_labels(data)
        t = data.features @ x
        return data.features.T @ (_sigmoid(t) - data.targets) + self.mu * x

    def hessian(self, data, x: Array) -> Array:
        x = _check_inputs(data, x)
        s = _sigmoid(data.features @ x)
        weights = s * (1.0 - s)
        A = data.features
        return (A * weights[:, None]).T @ A + self.mu * np.eye(A.shape[1])

    def lipschitz(self, data) -> float:
        gram_top = lambda_max(data.features.T @ data.features)
        return (gram_top / 4.0 + self.mu) * LIPSCHITZ_SAFETY

    def curvature_matrix(self, data, mode: CurvatureMode) -> Array:
        n = data.features.shape[1]
        if mode.kind == "scalar":
            return self.lipschitz(data) * np.eye(n)
        if mode.kind == "scaled_gram":
            if mode.r <= 4.0 + self.mu:
                raise InvalidMode(
                    f"scaled_gram scale must exceed 4 + mu = {4.0 + self.mu}"
                )
            return (data.features.T @ data.features) / mode.r
        if mode.kind == "gram":
            raise InvalidMode("gram curvature is only valid for squared-error losses")
        raise InvalidMode(f"unknown curvature kind {mode.kind!r}")
