"""Drug repurposing: rank candidate drugs per target gene and count top-k hits.

Scores come from any model with ``score_candidates(relation, heads, tails)``.
By default the drug is the head of the scored triple and the gene the tail
(``drug inhibits gene``); ``drug_as_head=False`` flips that. Ties within a
gene's list go to the smaller drug id.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._rng import stream
from .exceptions import ContractError, ResolutionError


@dataclass
class RepurposeSpec:
    """Target genes, candidate drugs and validation drugs as local node ids."""

    genes: np.ndarray
    drugs: np.ndarray
    relation: int = 0
    k: int = 100
    validation: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    drug_as_head: bool = True
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        self.genes = np.asarray(self.genes, dtype=np.int64).reshape(-1)
        self.drugs = np.asarray(self.drugs, dtype=np.int64).reshape(-1)
        self.validation = np.asarray(self.validation, dtype=np.int64).reshape(-1)
        if len(self.genes) == 0:
            raise ContractError("no target genes")
        if self.k < 0:
            raise ContractError("k must be >= 0")
        if self.k > len(self.drugs):
            raise ContractError(f"k={self.k} exceeds the {len(self.drugs)} candidate drugs")
        if len(np.unique(self.drugs)) != len(self.drugs):
            raise ContractError("candidate drugs contain duplicates")
        outside = np.setdiff1d(self.validation, self.drugs)
        if outside.size:
            self.warnings.append(
                f"{outside.size} validation drugs are not candidates: {outside.tolist()}"
            )

    @classmethod
    def from_names(cls, graph, genes, drugs, validation=(), relation=0, k=100, drug_as_head=True):
        r = graph.relation_id(relation)
        rel = graph.relations[r]
        drug_type, gene_type = (
            (rel.head_type, rel.tail_type) if drug_as_head else (rel.tail_type, rel.head_type)
        )
        problems = []
        ids = {}
        for label, names, t in (
            ("gene", genes, gene_type),
            ("drug", drugs, drug_type),
            ("validation drug", validation, drug_type),
        ):
            try:
                ids[label] = graph.resolve(t, list(names))
            except ResolutionError as err:
                problems.append(f"{label}s: {err}")
        if problems:
            raise ResolutionError("; ".join(problems))
        return cls(ids["gene"], ids["drug"], r, k, ids["validation drug"], drug_as_head)

    @property
    def random_baseline(self):
        """Expected hits of one drug for a scorer that ranks uniformly at random."""
        return len(self.genes) * self.k / len(self.drugs) if len(self.drugs) else 0.0


@dataclass
class RepurposeReport:
    genes: np.ndarray
    top_drugs: np.ndarray
    top_scores: np.ndarray
    hits: dict
    random_baseline: float
    metadata: dict
    warnings: list

    def ranked_hits(self):
        """``(drug, hits)`` pairs by descending hits, then ascending drug id."""
        return sorted(self.hits.items(), key=lambda kv: (-kv[1], kv[0]))

    def write(self, directory, graph=None, drug_type=None, gene_type=None):
        """Write ``hits.tsv``, ``topk.tsv`` and ``metadata.txt``; names via ``graph`` if given."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)

        def name(t, i):
            return str(i) if graph is None else graph.node_names[t][i]

        lines = ["drug\thits"] + [f"{name(drug_type, d)}\t{h}" for d, h in self.ranked_hits()]
        (directory / "hits.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        lines = ["gene\trank\tdrug\tscore"]
        for g, drugs, scores in zip(self.genes, self.top_drugs, self.top_scores):
            for pos, (d, s) in enumerate(zip(drugs, scores), start=1):
                lines.append(f"{name(gene_type, g)}\t{pos}\t{name(drug_type, d)}\t{float(s)!r}")
        (directory / "topk.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        meta = dict(self.metadata, random_baseline=self.random_baseline)
        meta_lines = [f"{k}={v}" for k, v in meta.items()] + [f"warning={w}" for w in self.warnings]
        (directory / "metadata.txt").write_text("\n".join(meta_lines) + "\n", encoding="utf-8")


def top_k(scores, k, ids):
    """Per-row top-``k`` column positions, by descending score then ascending ``ids``.

    Returns an ``(n_rows, k)`` array of column positions into ``scores``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    n_rows, n_cols = scores.shape
    if k == 0:
        return np.zeros((n_rows, 0), dtype=np.int64)
    by_id = np.argsort(ids, kind="stable")
    s = scores[:, by_id]
    kth = -np.partition(-s, k - 1, axis=1)[:, k - 1:k]
    greater = s > kth
    need = k - greater.sum(axis=1, keepdims=True)
    equal = s == kth
    keep = greater | (equal & (np.cumsum(equal, axis=1) <= need))
    rows, cols = np.nonzero(keep)
    cols = cols.reshape(n_rows, k)
    sel_scores = np.take_along_axis(s, cols, axis=1)
    order = np.lexsort((cols, -sel_scores), axis=1)
    return by_id[np.take_along_axis(cols, order, axis=1)]


def rank_from_scores(scores, spec):
    """Build a report from a ``(genes, drugs)`` score matrix aligned with ``spec``."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (len(spec.genes), len(spec.drugs)):
        raise ContractError(
            f"score matrix shape {scores.shape} != ({len(spec.genes)}, {len(spec.drugs)})"
        )
    pos = top_k(scores, spec.k, spec.drugs)
    top_drugs = spec.drugs[pos]
    top_scores = np.take_along_axis(scores, pos, axis=1)
    hits = {int(d): int(np.count_nonzero(top_drugs == d)) for d in spec.validation}
    metadata = {
        "relation": spec.relation,
        "direction": "drug->gene" if spec.drug_as_head else "gene->drug",
        "k": spec.k,
        "n_genes": len(spec.genes),
        "n_candidates": len(spec.drugs),
        "ties": "ascending drug id",
    }
    return RepurposeReport(spec.genes, top_drugs, top_scores, hits, spec.random_baseline,
                           metadata, list(spec.warnings))


def rank_drugs(model, spec):
    """Score every (drug, gene) pair under ``spec.relation`` and rank drugs per gene."""
    if spec.drug_as_head:
        scores = model.score_candidates(spec.relation, spec.drugs, spec.genes).T
    else:
        scores = model.score_candidates(spec.relation, spec.genes, spec.drugs)
    return rank_from_scores(scores, spec)


@dataclass
class RandomControl:
    mean_hits: float
    stderr: float
    trial_means: np.ndarray
    expected: float


def random_control(spec, seed=0, trials=20):
    """Mean per-drug hits when scores are replaced by seeded uniform noise.

    Averages over validation drugs (all candidates if none are given) and
    trials; ``stderr`` is the standard error of the per-trial means.
    """
    if trials < 1:
        raise ContractError("trials must be >= 1")
    rng = stream(seed, "control")
    validation = spec.validation if len(spec.validation) else spec.drugs
    cols = np.searchsorted(np.sort(spec.drugs), validation)
    order = np.argsort(spec.drugs, kind="stable")
    means = np.zeros(trials)
    for i in range(trials):
        noise = rng.random((len(spec.genes), len(spec.drugs)))
        pos = top_k(noise, spec.k, spec.drugs)
        counts = np.bincount(pos.ravel(), minlength=len(spec.drugs))
        means[i] = counts[order[cols]].mean() if len(validation) else 0.0
    stderr = float(np.std(means, ddof=1) / np.sqrt(trials)) if trials > 1 else float("nan")
    return RandomControl(float(means.mean()), stderr, means, spec.random_baseline)
