"""Negative sampling, the logistic triple loss and the full-batch training loop."""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from ._rng import stream
from .exceptions import ContractError, DivergenceError, SamplingExhaustedError
from .model import ModelConfig, adjacency, encode_nodes, init_params, relation_matrix, score_rows

log = logging.getLogger(__name__)


@dataclass
class TripleBatch:
    """Parallel arrays of labeled triples; labels are +1 or -1."""

    heads: np.ndarray
    relations: np.ndarray
    tails: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.heads = np.asarray(self.heads, dtype=np.int64).reshape(-1)
        self.relations = np.asarray(self.relations, dtype=np.int64).reshape(-1)
        self.tails = np.asarray(self.tails, dtype=np.int64).reshape(-1)
        self.labels = np.asarray(self.labels, dtype=np.float64).reshape(-1)
        n = len(self.heads)
        if not (len(self.relations) == len(self.tails) == len(self.labels) == n):
            raise ContractError("triple batch fields differ in length")
        if n and not np.all(np.abs(self.labels) == 1.0):
            raise ContractError("labels must be +1 or -1")

    @classmethod
    def positives(cls, triples):
        triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        return cls(triples[:, 0], triples[:, 1], triples[:, 2], np.ones(len(triples)))

    @classmethod
    def concat(cls, *batches):
        return cls(
            np.concatenate([b.heads for b in batches]),
            np.concatenate([b.relations for b in batches]),
            np.concatenate([b.tails for b in batches]),
            np.concatenate([b.labels for b in batches]),
        )

    def __len__(self):
        return len(self.heads)

    def triples(self):
        return np.column_stack([self.heads, self.relations, self.tails])

    def check_types(self, graph):
        for r in np.unique(self.relations):
            rel = graph.relations[r]
            sel = self.relations == r
            if self.heads[sel].max(initial=-1) >= graph.num_nodes(rel.head_type) or (
                self.tails[sel].max(initial=-1) >= graph.num_nodes(rel.tail_type)
            ):
                raise ContractError(f"triple endpoints out of range for relation {rel.name!r}")
            if self.heads[sel].min(initial=0) < 0 or self.tails[sel].min(initial=0) < 0:
                raise ContractError(f"negative node id in relation {rel.name!r}")
        return self


def _codes(graph, heads, relations, tails):
    n = max(graph.counts)
    return (relations * n + heads) * n + tails


def sample_negatives(graph, positives, k_neg, rng, known=None, max_tries=100):
    """Corrupt the tail of every positive ``k_neg`` times within the tail's node type.

    Tails are drawn uniformly and redrawn (up to ``max_tries`` rounds) while
    they hit the original tail or any tail in ``known`` for the same head and
    relation. ``known`` is an ``(E, 3)`` triple array and defaults to the
    edges of ``graph``. A triple still unresolved after ``max_tries`` draws
    from its remaining valid tails directly, which keeps the draw uniform.
    """
    if k_neg < 1:
        raise ContractError("k_neg must be >= 1")
    if len(positives) and not np.all(positives.labels == 1.0):
        raise ContractError("sample_negatives expects positive triples only")
    known = graph.triples() if known is None else np.asarray(known, dtype=np.int64).reshape(-1, 3)
    known_codes = np.union1d(
        _codes(graph, known[:, 0], known[:, 1], known[:, 2]),
        _codes(graph, positives.heads, positives.relations, positives.tails),
    )
    heads = np.repeat(positives.heads, k_neg)
    rels = np.repeat(positives.relations, k_neg)
    tail_types = np.array([rel.tail_type for rel in graph.relations], dtype=np.int64)
    counts = np.array(graph.counts, dtype=np.int64)[tail_types[rels]] if len(rels) else np.zeros(0, dtype=np.int64)
    tails = rng.integers(0, counts) if len(rels) else np.zeros(0, dtype=np.int64)
    bad = np.isin(_codes(graph, heads, rels, tails), known_codes)
    tries = 1
    while bad.any() and tries < max_tries:
        idx = np.flatnonzero(bad)
        tails[idx] = rng.integers(0, counts[idx])
        bad[idx] = np.isin(_codes(graph, heads[idx], rels[idx], tails[idx]), known_codes)
        tries += 1
    for i in np.flatnonzero(bad):
        cand = np.arange(counts[i])
        ok = ~np.isin(_codes(graph, heads[i], rels[i], cand), known_codes)
        if not ok.any():
            rel = graph.relations[rels[i]]
            raise SamplingExhaustedError(
                f"no valid corrupted tail for ({heads[i]}, {rel.name}, {positives.tails[i // k_neg]})"
            )
        tails[i] = rng.choice(cand[ok])
    return TripleBatch(heads, rels, tails, -np.ones(len(heads)))


def triple_loss(scores, labels):
    """``sum log(1 + exp(-y * score))`` on plain arrays."""
    return float(np.sum(np.logaddexp(0.0, -np.asarray(labels) * np.asarray(scores))))


def loss(batch, node_embs, rel_embs, graph, kind="distmult"):
    """Differentiable logistic loss of a batch.

    ``node_embs`` is the per-type list of embedding nodes, ``rel_embs`` the
    ``(R, width)`` relation node. Triples are grouped by endpoint types.
    """
    if not len(batch):
        raise ContractError("empty triple batch")
    head_types = np.array([rel.head_type for rel in graph.relations])[batch.relations]
    tail_types = np.array([rel.tail_type for rel in graph.relations])[batch.relations]
    total = None
    for ht, tt in sorted(set(zip(head_types.tolist(), tail_types.tolist()))):
        sel = np.flatnonzero((head_types == ht) & (tail_types == tt))
        h = nx.row_lookup(node_embs[ht], batch.heads[sel])
        t = nx.row_lookup(node_embs[tt], batch.tails[sel])
        r = nx.row_lookup(rel_embs, batch.relations[sel])
        s = score_rows(h, r, t, kind)
        neg_y = nx.const(-batch.labels[sel].reshape(-1, 1))
        term = nx.sum_all(nx.softplus(nx.mul(neg_y, s)))
        total = term if total is None else nx.add(total, term)
    return total


class Adam:
    """Adam with bias correction, updating arrays in place."""

    def __init__(self, lr=1e-2, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k, p in params.items():
            g = grads[k]
            if k not in self.m:
                self.m[k] = np.zeros_like(p)
                self.v[k] = np.zeros_like(p)
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * (g * g)
            p -= self.lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.eps)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    lr: float = 1e-2
    k_neg: int = 1
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.k_neg < 1:
            raise ValueError("k_neg must be >= 1")
        if not self.lr > 0:
            raise ValueError("learning rate must be > 0")


@dataclass
class FitResult:
    params: dict
    loss_trace: list


class LossProblem:
    """The expression graph of the training objective for one graph and split.

    The encoder and relation embeddings are built once; :meth:`build` adds a
    loss head for a given batch. Leaves wrap the parameter arrays directly,
    so in-place optimizer updates are visible to the next forward pass.
    """

    def __init__(self, graph, feats, params, config, train_triples):
        self.graph = graph
        self.config = config
        self.params = params
        self.leaves = {k: nx.leaf(v, name=k) for k, v in params.items()}
        for k, node in self.leaves.items():
            node.value = params[k]
        adj = [nx.const(a) for a in adjacency(graph, config.normalize)] if config.n_layers else None
        self.node_embs = encode_nodes(graph, feats, self.leaves, config, adj=adj)
        self.rel_embs = relation_matrix(graph, self.node_embs, self.leaves, config, train_triples)

    def build(self, batch):
        return loss(batch, self.node_embs, self.rel_embs, self.graph, self.config.scorer)


def canonical(triples):
    """Triples sorted by (relation, head, tail), so results ignore input row order."""
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    return triples[np.lexsort((triples[:, 2], triples[:, 0], triples[:, 1]))]


def fit(graph, feats, cfg, train_triples=None, callback=None):
    """Train on ``train_triples`` (default: every edge of ``graph``).

    Message passing, supervision, negative filtering and inductive support
    all use the training triples only; other edges of ``graph`` are never
    read. Rows are put in :func:`canonical` order first. ``callback(epoch, params)`` runs after every optimizer step.
    """
    train_triples = canonical(graph.triples() if train_triples is None else train_triples)
    train_graph = graph.with_triples(train_triples)
    positives = TripleBatch.positives(train_triples).check_types(train_graph)
    params = init_params(train_graph, feats, cfg.model, stream(cfg.seed, "init"))
    problem = LossProblem(train_graph, feats, params, cfg.model, train_triples)
    neg_rng = stream(cfg.seed, "negatives")
    opt = Adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    trace = []
    for epoch in range(1, cfg.epochs + 1):
        negatives = sample_negatives(train_graph, positives, cfg.k_neg, neg_rng, known=train_triples)
        root = problem.build(TripleBatch.concat(positives, negatives))
        value = float(nx.forward(root)[0, 0])
        if not np.isfinite(value):
            raise DivergenceError(epoch, cfg.lr, value)
        trace.append(value)
        grads = nx.backward(root)
        opt.step(params, {k: grads[problem.leaves[k]] for k in params})
        if callback is not None:
            callback(epoch, params)
    log.debug("trained %d epochs, final loss %.6g", cfg.epochs, trace[-1])
    rel = problem.rel_embs.value
    if cfg.model.mode == "inductive" and rel is not None and not np.any(rel):
        # every relation MLP output died in its ReLUs; scores are all zero
        log.warning("all relation embeddings are zero after training; try k_neg=1 or a smaller lr")
    return FitResult(params, trace)


def write_loss_trace(trace, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,loss\n")
        for epoch, value in enumerate(trace, start=1):
            fh.write(f"{epoch},{value!r}\n")


def toy_loss(seed=0, mode="inductive", scorer="distmult", n_layers=2, width=4):
    """Training loss of a seeded random 20-node, 3-relation graph, as a graph root.

    Type ``a`` (12 nodes) carries random features; type ``b`` (8 nodes)
    uses a learned table, so both input paths are exercised.
    """
    from .graph import HeteroGraph, RelationSchema
    from .model import FeatureStore

    rng = stream(seed, "synth")
    sizes = (12, 8)
    relations = [RelationSchema("ab", 0, 1), RelationSchema("ba", 1, 0), RelationSchema("aa", 0, 0)]
    edges = []
    for rel in relations:
        nh, nt = sizes[rel.head_type], sizes[rel.tail_type]
        flat = rng.choice(nh * nt, size=10, replace=False)
        edges.append(np.column_stack([flat // nt, flat % nt]))
    graph = HeteroGraph(["a", "b"], [[f"a{i}" for i in range(n)] if j == 0 else
                                     [f"b{i}" for i in range(n)] for j, n in enumerate(sizes)],
                        relations, edges)
    d = width if width % 2 == 0 else width + 1
    feats = FeatureStore({"a": rng.standard_normal((sizes[0], 3)), "b": d})
    config = ModelConfig(n_layers=n_layers, hidden_dim=d, scorer=scorer, mode=mode)
    params = init_params(graph, feats, config, stream(seed, "init"))
    triples = graph.triples()
    problem = LossProblem(graph, feats, params, config, triples)
    positives = TripleBatch.positives(triples)
    negatives = sample_negatives(graph, positives, 1, stream(seed, "negatives"), known=triples)
    return problem.build(TripleBatch.concat(positives, negatives))
