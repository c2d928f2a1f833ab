"""Structure-recovery metrics, ranking metrics, and timing aggregation.

SID follows the intervention-distance definition: pair (i, j) counts as a
mistake unless the estimate's parent set of i is a valid (backdoor)
adjustment set for the effect of i on j in the true graph.  d-separation
is decided on the moralized ancestral subgraph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, InsufficientDataError


@dataclass
class StructureReport:
    tpr: float
    fdr: float
    f1: float
    auroc: float
    shd: int
    sid: int
    atb_ms: float = 0.0

    def as_dict(self) -> dict:
        return {"tpr": self.tpr, "fdr": self.fdr, "f1": self.f1, "auroc": self.auroc,
                "shd": self.shd, "sid": self.sid, "atb_ms": self.atb_ms}


@dataclass
class RankingReport:
    pr_at: dict
    ap_at: dict
    mrr: float

    def as_dict(self) -> dict:
        return {"pr_at": {str(k): v for k, v in self.pr_at.items()},
                "ap_at": {str(k): v for k, v in self.ap_at.items()},
                "mrr": self.mrr}


def _check_pair(a_true: np.ndarray, a_est: np.ndarray) -> int:
    a_true = np.asarray(a_true)
    a_est = np.asarray(a_est)
    if a_true.shape != a_est.shape or a_true.ndim != 2 or a_true.shape[0] != a_true.shape[1]:
        raise DimensionMismatchError(
            f"graphs must share a square shape, got {a_true.shape} vs {a_est.shape}"
        )
    return a_true.shape[0]


def shd(a_true: np.ndarray, a_est: np.ndarray) -> int:
    """Differing unordered-pair patterns; a reversed edge costs 1."""
    d = _check_pair(a_true, a_est)
    iu, ju = np.triu_indices(d, k=1)
    pat_true = np.asarray(a_true)[iu, ju] * 2 + np.asarray(a_true)[ju, iu]
    pat_est = np.asarray(a_est)[iu, ju] * 2 + np.asarray(a_est)[ju, iu]
    return int((pat_true != pat_est).sum())


def _tie_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    order = np.argsort(values, kind="mergesort")
    sv = values[order]
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * ((i + 1) + (j + 1))
        i = j + 1
    return ranks


def auroc_score(labels: np.ndarray, scores: np.ndarray) -> float:
    """Rank-based AUROC; degenerate label sets score a neutral 0.5."""
    labels = np.asarray(labels, dtype=bool)
    scores = np.asarray(scores, dtype=float)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return 0.5
    ranks = _tie_ranks(scores)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def descendants(adj: np.ndarray, node: int) -> np.ndarray:
    """Boolean mask of nodes reachable from `node`, including itself."""
    d = adj.shape[0]
    seen = np.zeros(d, dtype=bool)
    seen[node] = True
    frontier = [node]
    while frontier:
        u = frontier.pop()
        for v in np.flatnonzero(adj[u]):
            if not seen[v]:
                seen[v] = True
                frontier.append(v)
    return seen


def _ancestral_mask(adj: np.ndarray, seeds: np.ndarray) -> np.ndarray:
    """Boolean mask of seeds plus all their ancestors."""
    mask = seeds.copy()
    frontier = list(np.flatnonzero(seeds))
    while frontier:
        u = frontier.pop()
        for v in np.flatnonzero(adj[:, u]):
            if not mask[v]:
                mask[v] = True
                frontier.append(v)
    return mask


def d_separated(adj: np.ndarray, x: int, y: int, z: np.ndarray) -> bool:
    """d-separation of x and y given mask z, via the moralized ancestral graph."""
    d = adj.shape[0]
    seeds = z.copy()
    seeds[x] = True
    seeds[y] = True
    keep = _ancestral_mask(adj, seeds)
    sub = np.asarray(adj, dtype=bool) & keep[:, None] & keep[None, :]
    moral = sub | sub.T
    # marry co-parents of every kept child
    for c in np.flatnonzero(keep):
        parents = np.flatnonzero(sub[:, c])
        if parents.size > 1:
            moral[np.ix_(parents, parents)] = True
    np.fill_diagonal(moral, False)
    blocked = z
    if blocked[x] or blocked[y]:
        return True
    seen = np.zeros(d, dtype=bool)
    seen[x] = True
    frontier = [x]
    while frontier:
        u = frontier.pop()
        for v in np.flatnonzero(moral[u]):
            if blocked[v] or seen[v]:
                continue
            if v == y:
                return False
            seen[v] = True
            frontier.append(v)
    return True


def sid(a_true: np.ndarray, a_est: np.ndarray) -> int:
    """Count ordered pairs whose parent-adjustment in the estimate fails in the truth."""
    d = _check_pair(a_true, a_est)
    g = np.asarray(a_true, dtype=np.int8)
    h = np.asarray(a_est, dtype=np.int8)
    mistakes = 0
    for i in range(d):
        z = h[:, i].astype(bool)              # estimated parents of i
        desc = descendants(g, i)
        cut = g.copy()
        cut[i, :] = 0
        z_hits_desc = bool((z & desc).any())
        for j in range(d):
            if j == i:
                continue
            if z[j]:
                ok = not desc[j]
            else:
                ok = (not z_hits_desc) and d_separated(cut, i, j, z)
            if not ok:
                mistakes += 1
    return mistakes


def structure_metrics(a_true: np.ndarray, a_est: np.ndarray,
                      edge_scores: np.ndarray | None = None) -> StructureReport:
    """TPR/FDR/F1/AUROC/SHD/SID of an estimated DAG against the truth."""
    d = _check_pair(a_true, a_est)
    t = np.asarray(a_true, dtype=bool)
    e = np.asarray(a_est, dtype=bool)
    off = ~np.eye(d, dtype=bool)
    tp = int((t & e).sum())
    fp = int((~t & e & off).sum())
    pos = int(t.sum())
    pred = tp + fp
    tpr = tp / pos if pos else 1.0
    fdr = fp / pred if pred else 0.0
    precision = tp / pred if pred else (1.0 if pos == 0 else 0.0)
    recall = tpr
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall > 0 else 0.0)
    if edge_scores is None:
        scores = e[off].astype(float)
    else:
        scores = np.asarray(edge_scores, dtype=float)
        if scores.shape != (d, d):
            raise DimensionMismatchError(
                f"edge_scores shape {scores.shape} does not match d={d}"
            )
        scores = scores[off]
    roc = auroc_score(t[off], scores)
    return StructureReport(tpr=float(tpr), fdr=float(fdr), f1=float(f1),
                           auroc=roc, shd=shd(a_true, a_est), sid=sid(a_true, a_est))


def ranking_metrics(rank_list, true_roots, k_values) -> RankingReport:
    """PR@K, AP@K, and MRR of a root-cause ranking."""
    ranks = list(rank_list)
    if sorted(ranks) != list(range(len(ranks))):
        raise DimensionMismatchError("rank list must be a permutation of node indices")
    roots = set(true_roots)
    if not roots:
        raise InsufficientDataError("true root set is empty")
    if not roots <= set(ranks):
        raise DimensionMismatchError("true roots must appear in the rank list")
    max_k = max(k_values) if k_values else 0
    pr_curve = []
    hits = 0
    for k in range(1, min(max_k, len(ranks)) + 1):
        if ranks[k - 1] in roots:
            hits += 1
        pr_curve.append(hits / min(k, len(roots)))
    pr_at = {}
    ap_at = {}
    for k in k_values:
        kk = min(k, len(pr_curve))
        pr_at[k] = pr_curve[kk - 1] if kk else 0.0
        ap_at[k] = float(np.mean(pr_curve[:kk])) if kk else 0.0
    position = {node: idx + 1 for idx, node in enumerate(ranks)}
    mrr = float(np.mean([1.0 / position[r] for r in roots]))
    return RankingReport(pr_at=pr_at, ap_at=ap_at, mrr=mrr)


def atb(records) -> float:
    """Mean wall_ms across records (converged batches included)."""
    times = [float(r.wall_ms if hasattr(r, "wall_ms") else r["wall_ms"]) for r in records]
    if not times:
        raise InsufficientDataError("atb needs at least one record")
    return float(np.mean(times))


def final_records_per_state(results: list[dict]) -> dict[int, dict]:
    """Last record of each state in a results-file dict list."""
    finals: dict[int, dict] = {}
    for rec in results:
        finals[int(rec["t"])] = rec
    return finals


def summarize_run(results: list[dict], truth: dict) -> dict:
    """Per-state reports (final estimate vs truth) plus the across-state average."""
    finals = final_records_per_state(results)
    states = []
    for t in range(1, int(truth["m"]) + 1):
        if t not in finals:
            raise InsufficientDataError(f"results contain no records for state {t}")
        rec = finals[t]
        scores = rec.get("edge_scores")
        report = structure_metrics(
            truth["adjacencies"][t - 1],
            np.asarray(rec["a_est"], dtype=np.int8),
            None if scores is None else np.asarray(scores, dtype=float),
        )
        report.atb_ms = atb([r for r in results if int(r["t"]) == t])
        states.append(report)
    avg = {
        key: float(np.mean([s.as_dict()[key] for s in states]))
        for key in ("tpr", "fdr", "f1", "auroc", "shd", "sid", "atb_ms")
    }
    return {"states": [s.as_dict() for s in states], "average": avg}
