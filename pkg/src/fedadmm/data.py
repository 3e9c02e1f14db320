"""Client datasets: synthetic generation, file ingestion, and partitioning.

Randomness comes from Philox, a named, versioned, counter-based generator.
Each client draws from its own substream keyed by (seed, client_id), so a
client's data never depends on how many other clients exist or on the order
in which they are materialized.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    InvalidGroups,
    InvalidRange,
    LabelDomain,
    ParseError,
    TooManyClients,
)

Array = np.ndarray

# Substream tag reserved for whole-dataset operations (shuffles); client ids
# can never collide with it.
_SHUFFLE_TAG = 2**64 - 1


@dataclass(frozen=True)
class ClientDataset:
    """One client's immutable share of the federation."""

    client_id: int
    features: Array  # (d_i, n)
    targets: Array  # (d_i,)
    weight: float  # w_i = d_i / d across the federation

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class Federation:
    """Ordered collection of clients sharing one parameter dimension."""

    clients: tuple[ClientDataset, ...]

    def __post_init__(self):
        if not self.clients:
            raise InvalidRange("a federation needs at least one client")
        dims = {c.n_features for c in self.clients}
        if len(dims) != 1:
            raise InvalidRange(f"clients disagree on feature count: {sorted(dims)}")

    @property
    def m(self) -> int:
        return len(self.clients)

    @property
    def n(self) -> int:
        return self.clients[0].n_features

    @property
    def d(self) -> int:
        return sum(c.n_samples for c in self.clients)

    @property
    def weights(self) -> Array:
        return np.array([c.weight for c in self.clients])


def client_rng(seed: int, client_id: int) -> np.random.Generator:
    """Philox substream for one client, keyed by (seed, client_id)."""
    if seed < 0:
        raise InvalidRange("seed must be non-negative")
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) | int(client_id)))


def shuffle_rng(seed: int) -> np.random.Generator:
    """Philox substream reserved for dataset-level shuffles."""
    if seed < 0:
        raise InvalidRange("seed must be non-negative")
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) | _SHUFFLE_TAG))


def student_t5(rng: np.random.Generator, size) -> Array:
    """Student-t(5) draws as Z / sqrt(V/5), V a sum of 5 squared normals."""
    z = rng.standard_normal(size)
    v = np.sum(rng.standard_normal((5, *np.shape(z))) ** 2, axis=0)
    return z / np.sqrt(v / 5.0)


def _federation_from_parts(parts) -> Federation:
    total = sum(features.shape[0] for _, features, _ in parts)
    clients = tuple(
        ClientDataset(
            client_id=cid,
            features=features,
            targets=targets,
            weight=features.shape[0] / total,
        )
        for cid, features, targets in parts
    )
    return Federation(clients)


def generate_regression(m: int, n: int, d_range, seed: int) -> Federation:
    """Synthetic regression federation with three heterogeneous client groups.

    Clients are split into three equal groups whose (A_i, b_i) entries are
    drawn from the standard normal, Student-t(5), and uniform[-5, 5]
    distributions respectively. Each client's sample count d_i is drawn
    uniformly from the integers [lo, hi]; weights are w_i = d_i / d.
    """
    lo, hi = int(d_range[0]), int(d_range[1])
    if m % 3 != 0 or m <= 0:
        raise InvalidGroups(f"client count {m} must be a positive multiple of 3")
    if lo > hi or lo < 1:
        raise InvalidRange(f"bad sample-count range [{lo}, {hi}]")
    if n < 1:
        raise InvalidRange("feature count must be at least 1")

    group_size = m // 3
    parts = []
    for cid in range(m):
        rng = client_rng(seed, cid)
        d_i = int(rng.integers(lo, hi + 1))
        group = cid // group_size
        if group == 0:
            features = rng.standard_normal((d_i, n))
            targets = rng.standard_normal(d_i)
        elif group == 1:
            features = student_t5(rng, (d_i, n))
            targets = student_t5(rng, d_i)
        else:
            features = rng.uniform(-5.0, 5.0, (d_i, n))
            targets = rng.uniform(-5.0, 5.0, d_i)
        parts.append((cid, features, targets))
    return _federation_from_parts(parts)


def partition(A: Array, b: Array, m: int, seed: int) -> Federation:
    """Split pooled samples into m clients by a seeded shuffle.

    The first m-1 clients each receive floor(d/m) rows; the last client gets
    the remainder, so every source row is used exactly once and the weights
    w_i = d_i / d sum to one.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    d = A.shape[0]
    if b.shape[0] != d:
        raise InvalidRange("feature and target row counts differ")
    if m > d:
        raise TooManyClients(f"cannot split {d} samples across {m} clients")
    if m < 1:
        raise InvalidRange("client count must be at least 1")

    perm = shuffle_rng(seed).permutation(d)
    quota = d // m
    parts = []
    for cid in range(m):
        start = cid * quota
        stop = start + quota if cid < m - 1 else d
        rows = perm[start:stop]
        parts.append((cid, A[rows].copy(), b[rows].copy()))
    return _federation_from_parts(parts)


def _parse_csv(lines, path):
    rows = []
    start = 0
    if lines:
        first = lines[0].split(",")[0].strip()
        try:
            float(first)
        except ValueError:
            start = 1  # header row detected by non-numeric first token
    width = None
    for idx in range(start, len(lines)):
        line = lines[idx].strip()
        if not line:
            continue
        tokens = line.split(",")
        if width is None:
            width = len(tokens)
            if width < 2:
                raise ParseError(f"{path}: need a label and at least one feature",
                                 line=idx + 1)
        elif len(tokens) != width:
            raise ParseError(
                f"{path}: expected {width} fields, found {len(tokens)}",
                line=idx + 1,
            )
        try:
            rows.append([float(t) for t in tokens])
        except ValueError as exc:
            raise ParseError(f"{path}: {exc}", line=idx + 1) from exc
    if not rows:
        raise ParseError(f"{path}: no data rows")
    table = np.array(rows)
    return table[:, 1:], table[:, 0]


def _parse_libsvm(lines, path, n):
    labels = []
    entries = []  # (row, col, value)
    max_col = 0
    row = 0
    for idx, raw in enumerate(lines):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        try:
            labels.append(float(tokens[0]))
        except ValueError as exc:
            raise ParseError(f"{path}: bad label {tokens[0]!r}", line=idx + 1) from exc
        for token in tokens[1:]:
            try:
                col_text, val_text = token.split(":", 1)
                col = int(col_text)
                val = float(val_text)
            except ValueError as exc:
                raise ParseError(f"{path}: bad pair {token!r}", line=idx + 1) from exc
            if col < 1:
                raise ParseError(f"{path}: indices are 1-based, got {col}",
                                 line=idx + 1)
            entries.append((row, col - 1, val))
            max_col = max(max_col, col)
        row += 1
    if row == 0:
        raise ParseError(f"{path}: no data rows")
    width = n if n is not None else max_col
    if max_col > width:
        raise ParseError(f"{path}: feature index {max_col} exceeds n={width}")
    A = np.zeros((row, width))
    for r, c, v in entries:
        A[r, c] = v
    return A, np.array(labels)


def load_classification(path, fmt: str, n: int | None = None):
    """Load a labelled dataset from a CSV or LIBSVM text file.

    CSV rows are label-first with a '.' decimal point; a header row is
    auto-detected by a non-numeric first token. LIBSVM rows are
    ``<label> <index>:<value> ...`` with 1-based indices; pass ``n`` to fix
    the feature count when trailing features never appear. Labels must be
    coercible to {0, 1}.
    """
    with open(path, "r", encoding="utf-8") as handle:
        lines = handle.readlines()
    if fmt == "csv":
        A, b = _parse_csv(lines, path)
    elif fmt == "libsvm":
        A, b = _parse_libsvm(lines, path, n)
    else:
        raise ParseError(f"unknown format {fmt!r}")
    bad = sorted({float(v) for v in b if v not in (0.0, 1.0)})
    if bad:
        raise LabelDomain(f"{path}: labels outside {{0, 1}}: {bad[:5]}")
    return A, b
