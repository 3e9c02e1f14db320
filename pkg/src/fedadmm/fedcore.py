"""Federation state machine: client/server state, schedule, aggregation.

Aggregation always reduces in ascending client_id order with a pairwise left
fold, which makes results bit-reproducible and exactly invariant under
permutations of the input list.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionMismatch

Array = np.ndarray


@dataclass
class ClientState:
    """One client's iterate: local primal, dual, cached scaled gradient."""

    client_id: int
    x: Array  # local primal iterate
    pi: Array  # dual variable for the consensus constraint
    g: Array  # cached w_i * grad f_i(x)
    sigma: float  # penalty, > 0
    weight: float  # w_i


@dataclass
class ServerState:
    """Server view: broadcast point, iteration counter, round count."""

    y: Array
    k: int = 0
    rounds: int = 0
    sigma_total: float = 0.0


@dataclass
class CommLedger:
    """Vector-level accounting of what crosses the network.

    ADMM variants upload two vectors per client per round (x_i and pi_i);
    plain averaging uploads one. Downlink is one broadcast vector per client.
    Byte cost is vectors * n * 8, reported at the presentation layer.
    """

    rounds: int = 0
    uplink_vectors: int = 0
    downlink_vectors: int = 0

    def record_round(self, m: int, uplink_per_client: int = 2):
        self.rounds += 1
        self.uplink_vectors += uplink_per_client * m
        self.downlink_vectors += m


def tau(k: int, k0: int) -> int:
    """Most recent aggregation iteration: floor(k / k0) * k0."""
    if k < 0 or k0 < 1:
        raise ValueError(f"need k >= 0 and k0 >= 1, got k={k}, k0={k0}")
    return (k // k0) * k0


def in_schedule(k: int, k0: int) -> bool:
    """True iff iteration k triggers a communication round."""
    return tau(k, k0) == k


def _ordered(clients):
    ordered = sorted(clients, key=lambda c: c.client_id)
    n = ordered[0].x.shape[0]
    for c in ordered:
        if c.x.shape[0] != n or c.pi.shape[0] != n:
            raise DimensionMismatch("client states disagree on dimension")
    return ordered


def aggregate(clients) -> Array:
    """Penalty-weighted server update: (sum_i sigma_i x_i + sum_i pi_i) / sigma."""
    if not clients:
        raise DimensionMismatch("cannot aggregate an empty client list")
    ordered = _ordered(clients)
    acc = np.zeros_like(ordered[0].x)
    sigma = 0.0
    for c in ordered:
        acc = acc + c.sigma * c.x + c.pi
        sigma += c.sigma
    return acc / sigma


def weighted_average(clients) -> Array:
    """Plain weighted mean sum_i w_i x_i, fixed reduction order."""
    if not clients:
        raise DimensionMismatch("cannot aggregate an empty client list")
    ordered = _ordered(clients)
    acc = np.zeros_like(ordered[0].x)
    for c in ordered:
        acc = acc + c.weight * c.x
    return acc


def dual_update(state: ClientState, y: Array) -> Array:
    """New dual: pi_i + sigma_i * (x_i - y)."""
    y = np.asarray(y, dtype=float)
    if y.shape != state.x.shape:
        raise DimensionMismatch(
            f"broadcast shape {y.shape} != client shape {state.x.shape}"
        )
    return state.pi + state.sigma * (state.x - y)


def step_schedule(server: ServerState, k0: int, clients,
                  ledger: CommLedger | None = None,
                  uplink_per_client: int = 2) -> ServerState:
    """Advance the server by one iteration of the communication schedule.

    When the current iteration is on schedule the clients' states are
    aggregated into a fresh broadcast point and the round counters advance;
    otherwise the broadcast point is reused. The iteration counter always
    advances (local updates happen between the returned broadcast and the
    next call).
    """
    if in_schedule(server.k, k0):
        y = aggregate(clients)
        rounds = server.rounds + 1
        if ledger is not None:
            ledger.record_round(len(clients), uplink_per_client)
    else:
        y = server.y
        rounds = server.rounds
    return replace(server, y=y, k=server.k + 1, rounds=rounds)
