"""Synthetic non-stationary streams with per-state ground-truth DAGs.

The final state's graph is an Erdos-Renyi DAG; earlier states are built
backward by cumulative random edge deletions, and every non-final state
additionally receives a few acyclicity-preserving noise edges.  Edge
weights are drawn once over the union of all per-state edges, so shared
edges keep identical mechanisms across states.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, CyclicGraphError, GenerationError
from .graphs import is_acyclic, topological_order
from .io import StreamBatch

MECHANISMS = ("LG", "LE", "QR", "GP")


@dataclass
class SynthConfig:
    d: int
    m: int = 2
    e: float = 0.0                 # transition noise rate, percent
    mechanism: str = "LG"
    er_expected_degree: float = 4.0
    n_per_state: int = 500
    batch_size: int = 50
    seed: int = 0
    noise_scale: float = 1.0

    def __post_init__(self):
        if self.d < 2:
            raise ConfigError(f"need at least 2 nodes, got d={self.d}")
        if self.m < 2:
            raise ConfigError(f"need at least 2 states, got m={self.m}")
        if self.e < 0:
            raise ConfigError(f"noise rate must be >= 0, got {self.e}")
        if self.mechanism not in MECHANISMS:
            raise ConfigError(f"mechanism must be one of {MECHANISMS}, got {self.mechanism!r}")
        if self.er_expected_degree <= 0:
            raise ConfigError("er_expected_degree must be positive")
        if not 1 <= self.batch_size <= self.n_per_state:
            raise ConfigError("need 1 <= batch_size <= n_per_state")
        if self.noise_scale <= 0:
            raise ConfigError("noise_scale must be positive")


@dataclass
class MechanismParams:
    """Per-edge coefficients shared by all states (masked per state)."""

    lin: np.ndarray                          # (d, d) linear weight for i -> j
    square: np.ndarray                       # (d, d) coefficient of x_i^2 into j
    pair: dict = field(default_factory=dict)  # (i, k) -> (d,) coefficients of x_i * x_k
    noise_scale: np.ndarray | None = None    # (d,) per-node noise scale


@dataclass
class GroundTruth:
    adjacencies: list[np.ndarray]            # G_1 .. G_m
    params: MechanismParams
    mechanism: str
    config: SynthConfig

    def weights_for(self, t: int) -> np.ndarray:
        """Per-state linear weight matrix (zero where no edge)."""
        return self.params.lin * self.adjacencies[t - 1]


def _er_dag(d: int, expected_degree: float, rng: np.random.Generator) -> np.ndarray:
    p = min(expected_degree / max(d - 1, 1), 1.0)
    upper = np.triu(rng.random((d, d)) < p, k=1).astype(np.int8)
    perm = rng.permutation(d)
    return upper[np.ix_(perm, perm)]


def _inject_noise_edges(adj: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Add `count` random edges that keep the graph acyclic; retry, then fail."""
    out = adj.copy()
    d = adj.shape[0]
    added = 0
    attempts = 0
    limit = 200 * d * d
    while added < count:
        if attempts >= limit:
            raise GenerationError(
                f"could not place {count} acyclic noise edges after {limit} attempts"
            )
        attempts += 1
        i = int(rng.integers(d))
        j = int(rng.integers(d))
        if i == j or out[i, j]:
            continue
        out[i, j] = 1
        if is_acyclic(out):
            added += 1
        else:
            out[i, j] = 0
    return out


def _quad_feature_count(k: int) -> int:
    return 2 * k + k * (k - 1) // 2


def _draw_weight(rng: np.random.Generator, size) -> np.ndarray:
    mag = rng.uniform(0.5, 2.0, size=size)
    sign = rng.choice([-1.0, 1.0], size=size)
    return mag * sign


def make_state_graphs(cfg: SynthConfig, rng: np.random.Generator) -> list[np.ndarray]:
    """G_m from ER, earlier states by cumulative deletion plus noise injection."""
    final = _er_dag(cfg.d, cfg.er_expected_degree, rng)
    graphs = [final]
    per_step = final.sum() // cfg.m
    cur = final
    for _ in range(cfg.m - 1):
        edges = np.argwhere(cur == 1)
        drop = min(int(per_step), len(edges))
        cur = cur.copy()
        if drop > 0:
            picks = rng.choice(len(edges), size=drop, replace=False)
            for idx in picks:
                i, j = edges[idx]
                cur[i, j] = 0
        graphs.append(cur)
    graphs.reverse()                          # now G_1 .. G_m, edge counts ascending
    for t in range(cfg.m - 1):                # non-final states get noise edges
        base_edges = int(graphs[t].sum())
        extra = int(np.ceil(cfg.e / 100.0 * base_edges))
        if extra > 0:
            graphs[t] = _inject_noise_edges(graphs[t], extra, rng)
    return graphs


def _draw_params(cfg: SynthConfig, graphs: list[np.ndarray],
                 rng: np.random.Generator) -> MechanismParams:
    union = np.zeros((cfg.d, cfg.d), dtype=np.int8)
    for g in graphs:
        union |= g
    lin = np.zeros((cfg.d, cfg.d))
    mask = union == 1
    lin[mask] = _draw_weight(rng, int(mask.sum()))
    square = np.zeros((cfg.d, cfg.d))
    pair: dict = {}
    if cfg.mechanism == "QR":
        square[mask] = _draw_weight(rng, int(mask.sum()))
        for i, k in itertools.combinations(range(cfg.d), 2):
            pair[(i, k)] = _draw_weight(rng, cfg.d)
    return MechanismParams(lin=lin, square=square, pair=pair,
                           noise_scale=np.full(cfg.d, cfg.noise_scale))


def sem_sample(adj: np.ndarray, params: MechanismParams, mechanism: str,
               n: int, rng: np.random.Generator,
               noise_scale: np.ndarray | None = None) -> np.ndarray:
    """Draw n rows from the SEM X_j = f_j(parents) + noise, in topological order."""
    if mechanism not in MECHANISMS:
        raise ConfigError(f"mechanism must be one of {MECHANISMS}, got {mechanism!r}")
    if not is_acyclic(adj):
        raise CyclicGraphError("sem_sample requires an acyclic graph")
    d = adj.shape[0]
    scale = params.noise_scale if noise_scale is None else np.asarray(noise_scale, dtype=float)
    if scale is None:
        scale = np.ones(d)
    x = np.zeros((n, d))
    order = topological_order(adj)
    for j in order:
        parents = np.flatnonzero(adj[:, j])
        if mechanism in ("LG", "LE"):
            mean = x[:, parents] @ params.lin[parents, j] if parents.size else 0.0
            if mechanism == "LG":
                noise = rng.standard_normal(n) * scale[j]
            else:
                noise = rng.exponential(1.0, size=n) * scale[j]
            x[:, j] = mean + noise
        elif mechanism == "QR":
            val = np.zeros(n)
            if parents.size:
                val += x[:, parents] @ params.lin[parents, j]
                val += (x[:, parents] ** 2) @ params.square[parents, j]
                for a, b in itertools.combinations(sorted(parents.tolist()), 2):
                    val += params.pair[(a, b)][j] * x[:, a] * x[:, b]
            x[:, j] = val + rng.standard_normal(n) * scale[j]
        else:  # GP
            if parents.size:
                pts = x[:, parents]
                sq = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1)
                kernel = np.exp(-0.5 * sq) + 1e-6 * np.eye(n)
                chol = np.linalg.cholesky(kernel)
                f = chol @ rng.standard_normal(n)
            else:
                f = np.zeros(n)
            x[:, j] = f + rng.standard_normal(n) * scale[j]
    return x


def generate(cfg: SynthConfig) -> tuple[list[StreamBatch], GroundTruth]:
    """Full stream (state 1 .. m, batched) plus its ground truth."""
    root = np.random.SeedSequence(cfg.seed)
    graph_seq, param_seq, data_seq = root.spawn(3)
    rng_graphs = np.random.default_rng(graph_seq)
    graphs = make_state_graphs(cfg, rng_graphs)
    params = _draw_params(cfg, graphs, np.random.default_rng(param_seq))
    truth = GroundTruth(adjacencies=graphs, params=params,
                        mechanism=cfg.mechanism, config=cfg)
    data_children = data_seq.spawn(cfg.m)
    batches: list[StreamBatch] = []
    for t in range(1, cfg.m + 1):
        rng = np.random.default_rng(data_children[t - 1])
        x = sem_sample(graphs[t - 1], params, cfg.mechanism, cfg.n_per_state, rng)
        n_batches = cfg.n_per_state // cfg.batch_size
        for l in range(1, n_batches + 1):
            lo = (l - 1) * cfg.batch_size
            hi = l * cfg.batch_size if l < n_batches else cfg.n_per_state
            batches.append(StreamBatch(t=t, l=l, transition=(t > 1 and l == 1),
                                       x=x[lo:hi]))
    return batches, truth
