"""Root-cause ranking on a learned graph via random walk with restarts.

The walk runs against edge direction (from effects toward causes); the
restart distribution is the normalized per-node anomaly score, and nodes
with no cause to walk to hand their mass back to the restart distribution.
Stationary visit probability ranks the candidates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionMismatchError, GenerationError, InsufficientDataError


@dataclass
class RwrConfig:
    anomaly_scores: np.ndarray
    restart_prob: float = 0.3
    tol: float = 1e-12
    max_iter: int = 10000

    def __post_init__(self):
        self.anomaly_scores = np.asarray(self.anomaly_scores, dtype=float)
        if self.anomaly_scores.ndim != 1:
            raise ConfigError("anomaly_scores must be a vector")
        if (self.anomaly_scores < 0).any() or not np.isfinite(self.anomaly_scores).all():
            raise ConfigError("anomaly_scores must be finite and nonnegative")
        if not self.anomaly_scores.sum() > 0:
            raise ConfigError("anomaly_scores must not be all zero")
        if not 0.0 < self.restart_prob < 1.0:
            raise ConfigError(f"restart_prob must be in (0, 1), got {self.restart_prob}")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be positive")


def rank_root_causes(adj: np.ndarray, cfg: RwrConfig) -> list[tuple[int, float]]:
    """Nodes sorted by stationary visit probability, ties broken by index."""
    a = np.asarray(adj)
    d = a.shape[0]
    if a.shape != (d, d):
        raise DimensionMismatchError(f"adjacency must be square, got {a.shape}")
    if cfg.anomaly_scores.shape != (d,):
        raise DimensionMismatchError(
            f"anomaly_scores length {cfg.anomaly_scores.shape[0]} does not match d={d}"
        )
    q = cfg.anomaly_scores / cfg.anomaly_scores.sum()
    # reversed walk: from node j step to each parent i of j (A[i, j] = 1)
    w = np.asarray(a, dtype=float).copy()
    np.fill_diagonal(w, 0.0)
    col_deg = w.sum(axis=0)
    trans = np.zeros((d, d))
    nonzero = col_deg > 0
    trans[:, nonzero] = w[:, nonzero] / col_deg[nonzero]
    trans[:, ~nonzero] = q[:, None]           # dangling columns restart
    r = cfg.restart_prob
    pi = q.copy()
    for _ in range(cfg.max_iter):
        nxt = (1.0 - r) * (trans @ pi) + r * q
        if np.abs(nxt - pi).sum() < cfg.tol:
            pi = nxt
            break
        pi = nxt
    else:
        raise GenerationError(f"random walk did not converge in {cfg.max_iter} iterations")
    order = np.lexsort((np.arange(d), -pi))
    return [(int(i), float(pi[i])) for i in order]


def anomaly_zscores(normal_x: np.ndarray, fault_x: np.ndarray,
                    floor: float = 1e-12) -> np.ndarray:
    """Per-node mean absolute deviation of the fault window, in normal-window sigmas."""
    normal_x = np.asarray(normal_x, dtype=float)
    fault_x = np.asarray(fault_x, dtype=float)
    if normal_x.ndim != 2 or fault_x.ndim != 2 or normal_x.shape[1] != fault_x.shape[1]:
        raise DimensionMismatchError("normal and fault windows must share column count")
    if normal_x.shape[0] < 2:
        raise InsufficientDataError("normal window needs at least 2 rows")
    if fault_x.shape[0] < 1:
        raise InsufficientDataError("fault window is empty")
    mu = normal_x.mean(axis=0)
    sigma = np.maximum(normal_x.std(axis=0), floor)
    return np.abs(fault_x - mu).mean(axis=0) / sigma


def fault_window_scores(batches, state: int, row_start: int, row_stop: int) -> np.ndarray:
    """Anomaly z-scores for rows [row_start, row_stop) of one state's data.

    The preceding rows of the same state serve as the normal window.
    """
    rows = [np.asarray(b.x, dtype=float) for b in batches if b.t == state]
    if not rows:
        raise InsufficientDataError(f"stream has no batches for state {state}")
    x = np.concatenate(rows, axis=0)
    if not 0 < row_start < row_stop <= x.shape[0]:
        raise ConfigError(
            f"fault rows [{row_start}, {row_stop}) invalid for a state with {x.shape[0]} rows"
        )
    return anomaly_zscores(x[:row_start], x[row_start:row_stop])
