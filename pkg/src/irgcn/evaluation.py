"""Tail-ranking evaluation: MRR, MR and Hits@k.

Ties are broken pessimistically: the true tail is ranked after every
candidate with an equal score.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._rng import stream
from .exceptions import ContractError

HITS_AT = (1, 3, 10)


@dataclass
class RankingQuery:
    head: int
    relation: int
    tail: int
    candidates: np.ndarray
    filter: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def filtered_candidates(self):
        """Candidates minus the filter set; the true tail is always kept."""
        cand = np.asarray(self.candidates, dtype=np.int64)
        if self.tail not in cand:
            raise ContractError(f"true tail {self.tail} is not a candidate")
        drop = np.setdiff1d(np.asarray(self.filter, dtype=np.int64), [self.tail])
        return cand[~np.isin(cand, drop)]


def rank_of(scores, true_index):
    """1-based pessimistic rank of ``scores[true_index]`` by descending score."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ContractError("empty candidate set")
    return int(np.count_nonzero(scores >= scores[true_index]))


def rank(query, model):
    """Rank of the query's true tail under ``model.score_candidates``."""
    cand = query.filtered_candidates()
    if cand.size == 0:
        raise ContractError("empty filtered candidate set")
    scores = model.score_candidates(query.relation, [query.head], cand)[0]
    return rank_of(scores, int(np.flatnonzero(cand == query.tail)[0]))


def aggregate(ranks):
    """MRR, MR and Hits@k; sums are correctly rounded, so row order never matters."""
    ranks = np.asarray(ranks, dtype=np.int64)
    if ranks.size == 0:
        raise ContractError("no ranks to aggregate")
    n = ranks.size
    out = {"MRR": math.fsum(1.0 / ranks) / n, "MR": math.fsum(ranks.astype(np.float64)) / n}
    for k in HITS_AT:
        out[f"Hits@{k}"] = int(np.count_nonzero(ranks <= k)) / n
    return out


@dataclass
class RankingReport:
    triples: np.ndarray
    ranks: np.ndarray
    n_candidates: np.ndarray
    metadata: dict

    @property
    def metrics(self):
        return aggregate(self.ranks)

    def write(self, directory, graph):
        """Write ``metrics.csv``, ``ranks.tsv`` and ``metadata.txt`` into ``directory``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        rows = ["metric,value"] + [f"{k},{v!r}" for k, v in self.metrics.items()]
        (directory / "metrics.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
        lines = ["head\trelation\ttail\trank"]
        for (h, r, t), rk in zip(self.triples, self.ranks):
            rel = graph.relations[r]
            lines.append(
                f"{graph.format_node(rel.head_type, h)}\t{rel.name}\t"
                f"{graph.format_node(rel.tail_type, t)}\t{rk}"
            )
        (directory / "ranks.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        meta = [f"{k}={v}" for k, v in self.metadata.items()]
        (directory / "metadata.txt").write_text("\n".join(meta) + "\n", encoding="utf-8")


def evaluate(model, test_triples, graph, known=None, policy="all", n_candidates=None,
             filtered=True, seed=0):
    """Rank the tail of every test triple among tails of the same node type.

    Parameters
    ----------
    model : object with ``score_candidates(relation, heads, tails)``
    test_triples : (n, 3) array
    graph : HeteroGraph
        Provides node counts and relation typing.
    known : (m, 3) array, optional
        Known positives used for filtering, typically train and test edges.
        Defaults to ``test_triples`` plus the edges of ``graph``.
    policy : {"all", "sampled"}
        ``sampled`` ranks against ``n_candidates - 1`` tails drawn without
        replacement from the filtered candidates, plus the true tail.
    filtered : bool
        ``False`` ranks against every candidate ("raw" ranking).
    """
    test = np.asarray(test_triples, dtype=np.int64).reshape(-1, 3)
    if known is None:
        known = np.concatenate([graph.triples(), test])
    known = np.asarray(known, dtype=np.int64).reshape(-1, 3)
    if policy not in ("all", "sampled"):
        raise ValueError(f"unknown candidate policy {policy!r}")
    if policy == "sampled" and (n_candidates is None or n_candidates < 1):
        raise ValueError("sampled policy needs n_candidates >= 1")
    rng = stream(seed, "candidates")
    known_tails = {}
    if filtered:
        for h, r, t in known:
            known_tails.setdefault((h, r), []).append(t)
    ranks = np.zeros(len(test), dtype=np.int64)
    sizes = np.zeros(len(test), dtype=np.int64)
    for r in np.unique(test[:, 1]):
        rel = graph.relations[r]
        all_tails = np.arange(graph.num_nodes(rel.tail_type))
        idx = np.flatnonzero(test[:, 1] == r)
        heads = np.unique(test[idx, 0])
        table = model.score_candidates(r, heads, all_tails)
        row_of = {h: i for i, h in enumerate(heads)}
        for q in idx:
            h, _, t = test[q]
            query = RankingQuery(h, r, t, all_tails, np.array(known_tails.get((h, r), []), dtype=np.int64))
            cand = query.filtered_candidates()
            if policy == "sampled":
                others = cand[cand != t]
                m = min(n_candidates - 1, len(others))
                cand = np.concatenate([[t], rng.choice(others, size=m, replace=False)])
            if cand.size == 0:
                raise ContractError("empty filtered candidate set")
            scores = table[row_of[h], cand]
            ranks[q] = rank_of(scores, int(np.flatnonzero(cand == t)[0]))
            sizes[q] = cand.size
    metadata = {
        "candidate_policy": policy if policy == "all" else f"sampled:{n_candidates}",
        "filter": "filtered" if filtered else "raw",
        "ties": "pessimistic",
        "side": "tail",
        "seed": seed,
        "n_queries": len(test),
    }
    return RankingReport(test, ranks, sizes, metadata)
