"""Binary DAG representation and the continuous-vector-to-DAG mapping.

A directed graph on d nodes is a d x d numpy array with entries in {0, 1};
entry (i, j) = 1 means an edge from node i to node j.  The mapping from a
real vector of length d(d+1) to a DAG works in two pieces: the first d
entries order the nodes (an edge i -> j is admissible only when the
ordering value of i exceeds that of j), and the remaining d^2 entries are
thresholded at zero into an edge mask.  Acyclicity is guaranteed by
construction because every admissible edge points down the ordering.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import CyclicGraphError, DimensionMismatchError, InvalidActionError


def action_dim(d: int) -> int:
    """Length of an action vector for a d-node graph."""
    return d * (d + 1)


def nodes_from_action_dim(length: int) -> int:
    """Invert d(d+1) = length; raises if length is not of that form."""
    d = int((math.isqrt(4 * length + 1) - 1) // 2)
    if d < 1 or d * (d + 1) != length:
        raise InvalidActionError(
            f"action length {length} is not d*(d+1) for any integer d"
        )
    return d


def validate_action(a: np.ndarray) -> int:
    """Check shape/finiteness of an action vector; returns the node count."""
    a = np.asarray(a)
    if a.ndim != 1:
        raise InvalidActionError(f"action must be a 1-d vector, got shape {a.shape}")
    d = nodes_from_action_dim(a.shape[0])
    if not np.all(np.isfinite(a)):
        raise InvalidActionError("action contains non-finite entries")
    return d


def action_to_dag(a: np.ndarray) -> np.ndarray:
    """Map a real vector of length d(d+1) to a binary acyclic adjacency matrix.

    The first d entries h define the ordering matrix H (H[i,j] = 1 iff
    h[i] > h[j]; ties drop both directions), the remaining d^2 entries are
    mask logits thresholded at 0.  Returns H * S elementwise.
    """
    a = np.asarray(a, dtype=float)
    d = validate_action(a)
    h = a[:d]
    logits = a[d:].reshape(d, d)
    order = h[:, None] > h[None, :]
    mask = logits > 0.0
    adj = (order & mask).astype(np.int8)
    np.fill_diagonal(adj, 0)
    return adj


def is_acyclic(adj: np.ndarray) -> bool:
    """Kahn elimination: true iff repeatedly removing in-degree-0 nodes empties the graph."""
    a = np.asarray(adj)
    d = a.shape[0]
    if a.shape != (d, d):
        raise DimensionMismatchError(f"adjacency must be square, got {a.shape}")
    indeg = a.sum(axis=0).astype(np.int64)
    alive = np.ones(d, dtype=bool)
    remaining = d
    while remaining:
        ready = np.flatnonzero(alive & (indeg == 0))
        if ready.size == 0:
            return False
        alive[ready] = False
        remaining -= ready.size
        indeg -= a[ready].sum(axis=0)
    return True


def topological_order(adj: np.ndarray) -> list[int]:
    """Kahn's algorithm with lowest-index-first tie-breaking.

    Raises CyclicGraphError on cyclic input.
    """
    a = np.asarray(adj)
    d = a.shape[0]
    indeg = a.sum(axis=0).astype(np.int64)
    alive = np.ones(d, dtype=bool)
    order: list[int] = []
    for _ in range(d):
        ready = np.flatnonzero(alive & (indeg == 0))
        if ready.size == 0:
            raise CyclicGraphError("graph contains a directed cycle")
        nxt = int(ready[0])
        order.append(nxt)
        alive[nxt] = False
        indeg -= a[nxt]
    return order


def dag_decompose(adj: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split an acyclic adjacency A into (P, U) with P^T U P = A.

    P is the permutation matrix of a topological order of A and U is the
    strictly upper-triangular reordering of A under that order.
    """
    a = np.asarray(adj, dtype=np.int8)
    order = topological_order(a)
    d = a.shape[0]
    perm = np.zeros((d, d), dtype=np.int8)
    for pos, node in enumerate(order):
        perm[pos, node] = 1
    upper = a[np.ix_(order, order)]
    return perm, upper


def complement(adj: np.ndarray) -> np.ndarray:
    """Flip off-diagonal entries; the diagonal stays 0 (self-loops stay meaningless)."""
    a = np.asarray(adj, dtype=np.int8)
    out = (1 - a).astype(np.int8)
    np.fill_diagonal(out, 0)
    return out


def random_dag(d: int, edge_prob: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform-order random DAG: random topological order, iid edges below it."""
    upper = np.triu(rng.random((d, d)) < edge_prob, k=1).astype(np.int8)
    perm = rng.permutation(d)
    return upper[np.ix_(perm, perm)]


def matrix_to_lists(adj: np.ndarray) -> list[list[int]]:
    """Row-major nested lists of 0/1 ints, the JSON wire form."""
    return [[int(v) for v in row] for row in np.asarray(adj)]


def matrix_from_lists(rows: list[list[int]]) -> np.ndarray:
    arr = np.asarray(rows, dtype=np.int8)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionMismatchError(f"expected a square 0/1 matrix, got shape {arr.shape}")
    if not np.isin(arr, (0, 1)).all():
        raise DimensionMismatchError("adjacency entries must be 0 or 1")
    return arr
