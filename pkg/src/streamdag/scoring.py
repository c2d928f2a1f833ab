"""BIC scoring of candidate DAGs and the two agents' reward functions.

The score of a graph A against an n x d batch X is

    sum_i n * log(RSS_i / n)  +  |E| * log(n)

where RSS_i is the residual sum of squares of regressing column i on its
parent columns (intercept-only when the parent set is empty).  Lower is
better; the engine negates it into a reward.  The quadratic backend adds
squares and pairwise products of the parents to the regressors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    CyclicGraphError,
    DimensionMismatchError,
    InsufficientDataError,
)
from .graphs import complement, is_acyclic

BACKENDS = ("linear", "quadratic")

# Floor on RSS/n before the log so perfect fits stay finite.
_RSS_FLOOR = 1e-300


@dataclass
class ScoreConfig:
    backend: str = "linear"
    penalty_lambda1: float = 0.1
    penalty_lambda2: float = 0.1
    ridge_eps: float = 1e-8

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if not (self.ridge_eps > 0):
            raise ConfigError("ridge_eps must be > 0")
        for name in ("penalty_lambda1", "penalty_lambda2"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ConfigError(f"{name} must be finite and nonnegative")


@dataclass
class RewardBreakdown:
    bic: float
    decouple: float
    total: float


class BatchScorer:
    """Caches the Gram matrix of one batch so many DAGs score cheaply.

    The design matrix is [intercept | X | quadratic features]; per node we
    solve ridge-regularized normal equations on the sub-block selected by
    its parent set.
    """

    def __init__(self, x: np.ndarray, cfg: ScoreConfig):
        x = np.asarray(x, dtype=float)
        if x.ndim != 2:
            raise DimensionMismatchError(f"batch must be 2-d, got shape {x.shape}")
        n, d = x.shape
        if n < d + 2:
            raise InsufficientDataError(f"need at least d+2={d + 2} rows, got {n}")
        self.cfg = cfg
        self.n = n
        self.d = d
        cols = [np.ones((n, 1)), x]
        # feature column index: 0 intercept, 1..d linear, then squares, then pairs
        self._square_col = {}
        self._pair_col = {}
        if cfg.backend == "quadratic":
            for i in range(d):
                self._square_col[i] = 1 + d + i
                cols.append((x[:, i] ** 2)[:, None])
            k = 1 + 2 * d
            for i in range(d):
                for j in range(i + 1, d):
                    self._pair_col[(i, j)] = k
                    k += 1
                    cols.append((x[:, i] * x[:, j])[:, None])
        phi = np.concatenate(cols, axis=1)
        self._gram = phi.T @ phi
        self._xty = phi.T @ x  # cross terms against every target column
        self._yty = np.einsum("ij,ij->j", x, x)

    def _feature_cols(self, parents: np.ndarray) -> list[int]:
        cols = [0] + [1 + int(p) for p in parents]
        if self.cfg.backend == "quadratic":
            ps = [int(p) for p in parents]
            cols += [self._square_col[p] for p in ps]
            cols += [self._pair_col[(a, b)] for ai, a in enumerate(ps) for b in ps[ai + 1:]]
        return cols

    def node_rss(self, node: int, parents: np.ndarray) -> float:
        cols = self._feature_cols(parents)
        s_xx = self._gram[np.ix_(cols, cols)]
        s_xy = self._xty[cols, node]
        beta = np.linalg.solve(s_xx + self.cfg.ridge_eps * np.eye(len(cols)), s_xy)
        rss = self._yty[node] - 2.0 * beta @ s_xy + beta @ s_xx @ beta
        return max(float(rss), 0.0)

    def score(self, adj: np.ndarray) -> float:
        a = np.asarray(adj)
        if a.shape != (self.d, self.d):
            raise DimensionMismatchError(
                f"adjacency shape {a.shape} does not match batch with d={self.d}"
            )
        n = self.n
        total = 0.0
        for j in range(self.d):
            rss = self.node_rss(j, np.flatnonzero(a[:, j]))
            total += n * np.log(max(rss / n, _RSS_FLOOR))
        total += int(a.sum()) * np.log(n)
        return float(total)


def bic_score(adj: np.ndarray, x: np.ndarray, cfg: ScoreConfig) -> float:
    """One-off BIC of a DAG against a batch; see BatchScorer for the formula."""
    if not is_acyclic(adj):
        raise CyclicGraphError("bic_score requires an acyclic graph")
    return BatchScorer(x, cfg).score(adj)


def _sq_fro(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"shape mismatch {a.shape} vs {b.shape}")
    diff = a - b
    return float(np.sum(diff * diff))


def decouple_specific(a_spec: np.ndarray, a_inv_prev: np.ndarray,
                      a_prev_state: np.ndarray) -> float:
    """(||A_spec - comp(A_inv_prev)||^2 + ||A_spec - comp(A_prev_state)||^2) / d."""
    d = np.asarray(a_spec).shape[0]
    return (_sq_fro(a_spec, complement(a_inv_prev))
            + _sq_fro(a_spec, complement(a_prev_state))) / d


def decouple_invariant(a_inv: np.ndarray, a_spec_prev: np.ndarray,
                       a_prev_state: np.ndarray) -> float:
    """(||A_inv - comp(A_spec_prev)||^2 + ||A_inv - A_prev_state||^2) / d.

    The second term has no complement: it is zero when the invariant graph
    reproduces the previous state's estimate.
    """
    d = np.asarray(a_inv).shape[0]
    return (_sq_fro(a_inv, complement(a_spec_prev))
            + _sq_fro(a_inv, a_prev_state)) / d


def reward(kind: str, bic: float, decouple: float, cfg: ScoreConfig) -> RewardBreakdown:
    """Total agent reward: -bic + lambda * decouple, with the breakdown kept."""
    if kind == "specific":
        lam = cfg.penalty_lambda1
    elif kind == "invariant":
        lam = cfg.penalty_lambda2
    else:
        raise ConfigError(f"unknown agent kind {kind!r}")
    return RewardBreakdown(bic=bic, decouple=decouple, total=-bic + lam * decouple)
