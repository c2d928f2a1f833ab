"""State-specific and state-invariant actor-critic agents.

Both agents share one mechanical skeleton: encode the current evidence
into node embeddings, decode a diagonal-Gaussian policy over (a slice of)
the action vector, and train with an advantage built from a critic and a
scalar reward baseline.  They differ in what they encode: the specific
agent runs batch statistics through an LSTM whose carry persists within a
system state, the invariant agent projects a summary of the previous
state's data and conditions on the specific agent's embedding.

All parameter tensors carry a leading worker axis so a factored action
space (several workers owning contiguous action slices) runs through the
same batched code as the single-worker case.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionMismatchError, InsufficientDataError
from .nn import (
    GaussianPolicy,
    GCNLayer,
    LSTMCell,
    Linear,
    ParamStore,
    Tensor,
    adam_step,
    concat,
    gcn_normalize,
)

KINDS = ("specific", "invariant")


def fuse_actions(a_spec: np.ndarray, a_inv: np.ndarray, beta: float) -> np.ndarray:
    """Convex combination beta * a_spec + (1 - beta) * a_inv."""
    a_spec = np.asarray(a_spec, dtype=float)
    a_inv = np.asarray(a_inv, dtype=float)
    if a_spec.shape != a_inv.shape:
        raise DimensionMismatchError(
            f"cannot fuse actions of shapes {a_spec.shape} and {a_inv.shape}"
        )
    if not 0.0 <= beta <= 1.0:
        raise ConfigError(f"beta must be in [0, 1], got {beta}")
    return beta * a_spec + (1.0 - beta) * a_inv


def update_baseline(baseline: float, gamma: float, mean_reward: float) -> float:
    """Exponential moving average B' = gamma * B + (1 - gamma) * mean_reward."""
    if not 0.0 <= gamma <= 1.0:
        raise ConfigError(f"gamma must be in [0, 1], got {gamma}")
    return gamma * baseline + (1.0 - gamma) * mean_reward


def batch_stats(x: np.ndarray) -> np.ndarray:
    """Per-column [mean, std, min, max], squashed by sign(v)*log1p(|v|)."""
    x = np.asarray(x, dtype=float)
    raw = np.stack([x.mean(axis=0), x.std(axis=0), x.min(axis=0), x.max(axis=0)], axis=1)
    return np.sign(raw) * np.log1p(np.abs(raw))


def summary_stats(mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    """Previous-state summary as a (d, 2) matrix, same squashing as batch_stats."""
    raw = np.stack([np.asarray(mean, dtype=float), np.asarray(std, dtype=float)], axis=1)
    return np.sign(raw) * np.log1p(np.abs(raw))


@dataclass
class ActionProposal:
    """One sampled action plus the taped quantities train_step needs."""

    action: np.ndarray            # assembled full action, length d*(d+1)
    log_prob: Tensor              # (w,) log density of each worker's slice
    predicted_reward: Tensor      # (w,) critic output
    embedding: Tensor             # (w, d, embed) node embeddings

    def total_log_prob(self) -> float:
        return float(self.log_prob.data.sum())


@dataclass
class TrainStats:
    actor_loss: float
    critic_loss: float
    mean_advantage: float
    baseline: float


def partition_action_space(action_len: int, workers: int) -> list[int]:
    """Contiguous slice lengths; the last worker absorbs the remainder."""
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")
    if workers > action_len:
        raise ConfigError(f"workers={workers} exceeds action length {action_len}")
    base = action_len // workers
    sizes = [base] * workers
    sizes[-1] += action_len - base * workers
    return sizes


class Agent:
    """Actor-critic over (a partition of) the continuous action space.

    kind "specific" adds an LSTM over per-batch statistics whose carry is
    the agent's memory within a system state; kind "invariant" instead
    projects the previous state's data summary and consumes the specific
    agent's (detached) embedding.
    """

    def __init__(self, kind: str, d: int, workers: int, embed: int, hidden: int,
                 lr: float, gamma: float, seed_seq: np.random.SeedSequence):
        if kind not in KINDS:
            raise ConfigError(f"agent kind must be one of {KINDS}, got {kind!r}")
        self.kind = kind
        self.d = d
        self.workers = workers
        self.embed = embed
        self.hidden = hidden
        self.lr = lr
        self.gamma = gamma
        action_len = d * (d + 1)
        self.slice_sizes = partition_action_space(action_len, workers)
        self.max_slice = max(self.slice_sizes)
        mask = np.zeros((workers, 1, self.max_slice))
        for k, size in enumerate(self.slice_sizes):
            mask[k, 0, :size] = 1.0
        self.valid_mask = mask
        self._init_seq = seed_seq
        self._build(np.random.default_rng(seed_seq.spawn(1)[0]))

    # -- construction --------------------------------------------------------

    def _build(self, rng: np.random.Generator):
        d, w, emb, hid = self.d, self.workers, self.embed, self.hidden
        store = ParamStore()
        stack = (w,)
        if self.kind == "specific":
            self.proj = Linear(store, "proj", stack, 4, emb, rng)
            self.lstm = LSTMCell(store, "lstm", stack, emb, hid, rng)
            gcn_in = emb + hid
            self.carry = (np.zeros((w, 1, hid)), np.zeros((w, 1, hid)))
            self._pending_carry = None
        else:
            self.proj = Linear(store, "proj", stack, 2, emb, rng)
            self.lstm = None
            gcn_in = 2 * emb
            self.carry = None
            self._pending_carry = None
        self.gcn = GCNLayer(store, "gcn", stack, gcn_in, emb, rng)
        self.dec1 = Linear(store, "dec1", stack, d * emb, hid, rng)
        self.dec2 = Linear(store, "dec2", stack, hid, 2 * self.max_slice, rng, gain=0.1)
        self.critic1 = Linear(store, "critic1", stack, emb, hid, rng)
        self.critic2 = Linear(store, "critic2", stack, hid, 1, rng)
        self.params = store
        self.baseline = np.zeros(self.workers)

    def reinit(self):
        """Fresh seeded parameters, zero carry, zero baseline."""
        if self.kind != "specific":
            raise ConfigError("only the state-specific agent is reinitialized")
        self._build(np.random.default_rng(self._init_seq.spawn(1)[0]))

    # -- encoders -------------------------------------------------------------

    def encode_specific(self, x: np.ndarray, prev_dag: np.ndarray) -> Tensor:
        """Column statistics -> LSTM with carried state -> GCN over prev_dag."""
        if self.kind != "specific":
            raise ConfigError("encode_specific requires a specific agent")
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.d:
            raise DimensionMismatchError(f"batch shape {x.shape} does not match d={self.d}")
        stats = batch_stats(x)                        # (d, 4)
        proj = self.proj(Tensor(stats)).tanh()        # (w, d, emb)
        pooled = proj.mean(axis=1, keepdims=True)     # (w, 1, emb)
        h_prev = Tensor(self.carry[0])
        c_prev = Tensor(self.carry[1])
        h, (h_new, c_new) = self.lstm(pooled, (h_prev, c_prev))
        self._pending_carry = (h_new.data.copy(), c_new.data.copy())
        spread = h.broadcast_to((self.workers, self.d, self.hidden))
        feats = concat([proj, spread], axis=-1)
        return self.gcn(feats, gcn_normalize(prev_dag))

    def commit_carry(self):
        """Advance the LSTM carry to the last encode's output (once per batch)."""
        if self._pending_carry is not None:
            self.carry = self._pending_carry
            self._pending_carry = None

    def encode_invariant(self, prev_summary: np.ndarray, z_specific: Tensor,
                         prev_dag: np.ndarray) -> Tensor:
        """Previous-state summary projection, concatenated with z_specific, GCN."""
        if self.kind != "invariant":
            raise ConfigError("encode_invariant requires an invariant agent")
        summary = np.asarray(prev_summary, dtype=float)
        if summary.shape != (self.d, 2):
            raise DimensionMismatchError(
                f"previous-state summary must be ({self.d}, 2), got {summary.shape}"
            )
        squashed = np.sign(summary) * np.log1p(np.abs(summary))
        proj = self.proj(Tensor(squashed)).tanh()     # (w, d, emb)
        z_const = z_specific.detach()
        if z_const.data.shape != (self.workers, self.d, self.embed):
            raise DimensionMismatchError(
                f"specific embedding shape {z_const.data.shape} does not match agent"
            )
        feats = concat([proj, z_const], axis=-1)
        return self.gcn(feats, gcn_normalize(prev_dag))

    # -- acting ----------------------------------------------------------------

    def propose(self, z: Tensor, rng: np.random.Generator) -> ActionProposal:
        """Decode a policy from the embedding, sample, and predict the reward."""
        w = self.workers
        flat = z.reshape(w, 1, self.d * self.embed)
        hid = self.dec1(flat).tanh()
        out = self.dec2(hid)                           # (w, 1, 2 * max_slice)
        mean = out.narrow(-1, 0, self.max_slice)
        log_std = out.narrow(-1, self.max_slice, self.max_slice)
        policy = GaussianPolicy(mean, log_std)
        eps = rng.standard_normal((w, 1, self.max_slice))
        action_stack = policy.mean.data + np.exp(policy.log_std.data) * eps
        log_prob = policy.log_prob(action_stack, valid_mask=self.valid_mask,
                                   axis=-1).reshape(w)
        pooled = z.detach().mean(axis=1, keepdims=True)
        pred = self.critic2(self.critic1(pooled).tanh()).reshape(w)
        action = np.concatenate(
            [action_stack[k, 0, :size] for k, size in enumerate(self.slice_sizes)]
        )
        return ActionProposal(action=action, log_prob=log_prob,
                              predicted_reward=pred, embedding=z)

    def evaluate_log_prob(self, z: Tensor, action: np.ndarray) -> Tensor:
        """Taped log density of a given assembled action under the current policy."""
        action = np.asarray(action, dtype=float)
        expect = sum(self.slice_sizes)
        if action.shape != (expect,):
            raise DimensionMismatchError(f"action must have length {expect}")
        stacked = np.zeros((self.workers, 1, self.max_slice))
        start = 0
        for k, size in enumerate(self.slice_sizes):
            stacked[k, 0, :size] = action[start:start + size]
            start += size
        w = self.workers
        flat = z.reshape(w, 1, self.d * self.embed)
        hid = self.dec1(flat).tanh()
        out = self.dec2(hid)
        policy = GaussianPolicy(out.narrow(-1, 0, self.max_slice),
                                out.narrow(-1, self.max_slice, self.max_slice))
        return policy.log_prob(stacked, valid_mask=self.valid_mask, axis=-1).reshape(w)

    def policy_for(self, z: Tensor) -> tuple[np.ndarray, np.ndarray]:
        """Assembled (mean, log_std) of the current policy, without sampling."""
        w = self.workers
        flat = z.reshape(w, 1, self.d * self.embed)
        hid = self.dec1(flat).tanh()
        out = self.dec2(hid)
        mean = out.narrow(-1, 0, self.max_slice)
        policy = GaussianPolicy(mean, out.narrow(-1, self.max_slice, self.max_slice))

        def assemble(a: np.ndarray) -> np.ndarray:
            return np.concatenate(
                [a[k, 0, :size] for k, size in enumerate(self.slice_sizes)]
            )

        return assemble(policy.mean.data), assemble(policy.log_std.data)

    # -- learning ----------------------------------------------------------------

    def train_step(self, proposals: list[ActionProposal],
                   rewards: list[float]) -> TrainStats:
        """One combined actor/critic update from aligned proposals and rewards.

        advantage = R - (B + R_hat), held constant for the actor term; the
        critic minimizes the squared TD error (R - (B + R_hat))^2.  Actor
        and critic parameter sets are disjoint (the critic reads a detached
        embedding), so the single Adam step below is one step for each.
        """
        if not proposals:
            raise InsufficientDataError("train_step needs at least one proposal")
        if len(proposals) != len(rewards):
            raise DimensionMismatchError("proposals and rewards must align")
        inv_n = 1.0 / len(proposals)
        actor_terms = []
        critic_terms = []
        adv_accum = 0.0
        for prop, r in zip(proposals, rewards):
            adv = r - (self.baseline + prop.predicted_reward.data)   # (w,) constant
            actor_terms.append(prop.log_prob * Tensor(-adv))
            td = Tensor(r - self.baseline) - prop.predicted_reward
            critic_terms.append(td.square())
            adv_accum += float(adv.mean())
        actor_loss = _sum_tensors(actor_terms) * inv_n
        critic_loss = _sum_tensors(critic_terms) * inv_n
        total = actor_loss.sum() + critic_loss.sum()
        self.params.zero_grad()
        total.backward()
        adam_step(self.params, lr=self.lr)
        mean_reward = float(np.mean(rewards))
        self.baseline = np.array(
            [update_baseline(b, self.gamma, mean_reward) for b in self.baseline]
        )
        return TrainStats(
            actor_loss=float(actor_loss.data.sum()),
            critic_loss=float(critic_loss.data.sum()),
            mean_advantage=adv_accum * inv_n,
            baseline=float(self.baseline.mean()),
        )


def _sum_tensors(terms: list[Tensor]) -> Tensor:
    out = terms[0]
    for t in terms[1:]:
        out = out + t
    return out


def reinit_specific(agent: Agent) -> Agent:
    """Re-draw the specific agent's parameters; never valid on the invariant."""
    agent.reinit()
    return agent
