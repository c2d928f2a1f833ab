"""Online learning loop over a non-stationary batch stream.

One engine instance consumes batches in order, maintains the two agents,
and emits one estimate per batch.  Three modes share the code path:

  marlin    dual agents, one worker owning the whole action vector
  marlin-s  single specific-style agent, no fusion, no decoupling terms
  marlin-m  dual agents, the action vector split across several workers

marlin is literally marlin-m with workers=1, which is what makes the
worker count a pure throughput knob.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .agents import Agent, fuse_actions, reinit_specific
from .errors import ConfigError, DimensionMismatchError
from .graphs import action_dim, action_to_dag
from .scoring import BatchScorer, ScoreConfig, decouple_invariant, decouple_specific, reward

MODES = ("marlin", "marlin-s", "marlin-m")

_JS_EPS = 1e-3


@dataclass
class OnlineConfig:
    beta: float = 0.5
    xi_threshold: float = 0.98
    episodes_per_batch: int = 64
    mode: str = "marlin"
    workers: int = 1
    seed: int = 0
    score: ScoreConfig = field(default_factory=ScoreConfig)
    lr: float = 0.01
    gamma: float = 0.99
    embed: int | None = None      # None -> max(16, 64 // workers)
    hidden: int | None = None
    timing: bool = True           # False writes wall_ms = 0.0 for byte-stable output

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.mode in ("marlin", "marlin-s") and self.workers != 1:
            raise ConfigError(f"mode {self.mode} runs a single worker")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError(f"beta must be in [0, 1], got {self.beta}")
        if not 0.0 <= self.xi_threshold <= 1.0:
            raise ConfigError(f"xi_threshold must be in [0, 1], got {self.xi_threshold}")
        if self.episodes_per_batch < 1:
            raise ConfigError("episodes_per_batch must be positive")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must be in [0, 1], got {self.gamma}")

    def width(self) -> int:
        return self.embed if self.embed is not None else max(16, 64 // self.workers)

    def hidden_width(self) -> int:
        return self.hidden if self.hidden is not None else max(16, 64 // self.workers)


@dataclass
class EpisodeRecord:
    """Per-batch output of the engine."""

    t: int
    l: int
    a_est: np.ndarray
    a_spec: np.ndarray | None
    a_inv: np.ndarray | None
    best_reward: float
    xi: float
    wall_ms: float
    converged: bool
    edge_scores: np.ndarray | None = None


def graph_similarity(g_prev: np.ndarray, g_cur: np.ndarray, eps: float = _JS_EPS) -> float:
    """1 minus the mean base-2 JS divergence over off-diagonal edge cells.

    Each cell is a Laplace-smoothed Bernoulli p = (v + eps) / (1 + 2 eps),
    so identical graphs give 1 and fully complementary graphs approach 0.
    """
    a = np.asarray(g_prev, dtype=float)
    b = np.asarray(g_cur, dtype=float)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(f"graphs must share a square shape, got {a.shape} vs {b.shape}")
    d = a.shape[0]
    if d < 2:
        return 1.0
    off = ~np.eye(d, dtype=bool)
    p = (a[off] + eps) / (1.0 + 2.0 * eps)
    q = (b[off] + eps) / (1.0 + 2.0 * eps)

    def kl(u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return u * np.log2(u / v) + (1.0 - u) * np.log2((1.0 - u) / (1.0 - v))

    m = 0.5 * (p + q)
    js = 0.5 * kl(p, m) + 0.5 * kl(q, m)
    return float(1.0 - js.mean())


class OracleDetector:
    """Pass-through change-point detector: trusts the stream's transition flag."""

    def is_transition(self, batch) -> bool:
        return bool(batch.transition)


class OnlineEngine:
    """Incremental DAG learner over a stream of batches."""

    def __init__(self, d: int, cfg: OnlineConfig, detector=None):
        if d < 2:
            raise ConfigError(f"need at least 2 variables, got d={d}")
        if cfg.workers > action_dim(d):
            raise ConfigError(
                f"workers={cfg.workers} exceeds action length {action_dim(d)}"
            )
        self.d = d
        self.cfg = cfg
        self.detector = detector if detector is not None else OracleDetector()
        embed = cfg.width()
        hidden = cfg.hidden_width()
        root = np.random.SeedSequence(cfg.seed)
        spec_init, inv_init, spec_sample, inv_sample = root.spawn(4)
        self.spec = Agent("specific", d, cfg.workers, embed, hidden,
                          cfg.lr, cfg.gamma, spec_init)
        self.dual = cfg.mode != "marlin-s"
        self.inv = (Agent("invariant", d, cfg.workers, embed, hidden,
                          cfg.lr, cfg.gamma, inv_init) if self.dual else None)
        self._rng_spec = np.random.default_rng(spec_sample)
        self._rng_inv = np.random.default_rng(inv_sample)
        zeros = np.zeros((d, d), dtype=np.int8)
        self.prev_batch_est = zeros.copy()     # previous batch's fused estimate
        self.prev_spec_dag = zeros.copy()      # A_spec of the previous batch's best episode
        self.prev_inv_dag = zeros.copy()       # A_inv of the previous batch's best episode
        self.prev_state_est = zeros.copy()     # final estimate of the previous state
        self.prev_summary = np.zeros((d, 2))   # previous state's per-column (mean, std)
        self._stat_count = 0
        self._stat_sum = np.zeros(d)
        self._stat_sumsq = np.zeros(d)
        self.t: int | None = None
        self.batch_in_state = 0
        self.converged = False
        self._last_best_reward = float("nan")
        self._last_edge_scores: np.ndarray | None = None

    # -- state handling ---------------------------------------------------------

    def on_state_transition(self, t_new: int) -> "OnlineEngine":
        """Roll summaries, snapshot the finished state's estimate, reset the specific agent."""
        self.prev_state_est = self.prev_batch_est.copy()
        if self._stat_count > 0:
            mean = self._stat_sum / self._stat_count
            var = self._stat_sumsq / self._stat_count - mean * mean
            self.prev_summary = np.stack([mean, np.sqrt(np.maximum(var, 0.0))], axis=1)
        self._stat_count = 0
        self._stat_sum[:] = 0.0
        self._stat_sumsq[:] = 0.0
        reinit_specific(self.spec)
        self.converged = False
        self.t = t_new
        self.batch_in_state = 0
        return self

    def _accumulate_stats(self, x: np.ndarray):
        self._stat_count += x.shape[0]
        self._stat_sum += x.sum(axis=0)
        self._stat_sumsq += (x * x).sum(axis=0)

    # -- main loop ----------------------------------------------------------------

    def process_batch(self, batch) -> EpisodeRecord:
        x = np.asarray(batch.x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.d:
            raise DimensionMismatchError(
                f"batch {batch.t}/{batch.l} has width {x.shape[-1]}, expected d={self.d}"
            )
        if self.t is None:
            self.t = batch.t
        elif self.detector.is_transition(batch) or batch.t != self.t:
            self.on_state_transition(batch.t)
        self.batch_in_state += 1
        start = time.perf_counter()

        if self.converged:
            record = self._converged_record(batch, start)
            self._accumulate_stats(x)
            return record

        cfg = self.cfg
        scorer = BatchScorer(x, cfg.score)
        best_neg_bic = -np.inf
        best = None
        for _ in range(cfg.episodes_per_batch):
            z_spec = self.spec.encode_specific(x, self.prev_batch_est)
            prop_spec = self.spec.propose(z_spec, self._rng_spec)
            if self.dual:
                z_inv = self.inv.encode_invariant(self.prev_summary, z_spec,
                                                  self.prev_batch_est)
                prop_inv = self.inv.propose(z_inv, self._rng_inv)
                fused = fuse_actions(prop_spec.action, prop_inv.action, cfg.beta)
            else:
                prop_inv = None
                fused = prop_spec.action
            a_fused = action_to_dag(fused)
            a_spec = action_to_dag(prop_spec.action)
            bic = scorer.score(a_fused)
            if self.dual:
                a_inv = action_to_dag(prop_inv.action)
                dec_s = decouple_specific(a_spec, self.prev_inv_dag, self.prev_state_est)
                r_spec = reward("specific", bic, dec_s, cfg.score).total
                dec_i = decouple_invariant(a_inv, self.prev_spec_dag, self.prev_state_est)
                r_inv = reward("invariant", bic, dec_i, cfg.score).total
            else:
                a_inv = None
                r_spec = -bic
            self.spec.train_step([prop_spec], [r_spec])
            if self.dual:
                self.inv.train_step([prop_inv], [r_inv])
            if -bic > best_neg_bic:
                best_neg_bic = -bic
                best = (a_fused, a_spec, a_inv, fused)
        self.spec.commit_carry()

        a_est, a_spec_best, a_inv_best, fused_best = best
        xi = (0.0 if self.batch_in_state == 1
              else graph_similarity(self.prev_batch_est, a_est))
        if xi > cfg.xi_threshold:
            self.converged = True
        self.prev_batch_est = a_est.copy()
        self.prev_spec_dag = a_spec_best.copy()
        if a_inv_best is not None:
            self.prev_inv_dag = a_inv_best.copy()
        self._accumulate_stats(x)
        self._last_best_reward = best_neg_bic
        self._last_edge_scores = fused_best[self.d:].reshape(self.d, self.d).copy()
        wall_ms = (time.perf_counter() - start) * 1000.0 if cfg.timing else 0.0
        return EpisodeRecord(
            t=batch.t, l=batch.l,
            a_est=a_est.copy(),
            a_spec=a_spec_best.copy(),
            a_inv=None if a_inv_best is None else a_inv_best.copy(),
            best_reward=best_neg_bic,
            xi=xi, wall_ms=wall_ms, converged=self.converged,
            edge_scores=self._last_edge_scores.copy(),
        )

    def _converged_record(self, batch, start: float) -> EpisodeRecord:
        """Early-exit path: no episodes, no scoring, just similarity and a copy."""
        xi = graph_similarity(self.prev_batch_est, self.prev_batch_est)
        wall_ms = (time.perf_counter() - start) * 1000.0 if self.cfg.timing else 0.0
        return EpisodeRecord(
            t=batch.t, l=batch.l,
            a_est=self.prev_batch_est.copy(),
            a_spec=self.prev_spec_dag.copy(),
            a_inv=self.prev_inv_dag.copy() if self.dual else None,
            best_reward=self._last_best_reward,
            xi=xi, wall_ms=wall_ms, converged=True,
            edge_scores=(None if self._last_edge_scores is None
                         else self._last_edge_scores.copy()),
        )

    def run(self, batches):
        """Process an iterable of batches, yielding one record per batch."""
        for batch in batches:
            yield self.process_batch(batch)
