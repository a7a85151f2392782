"""scikit-learn style estimator wrapping the RGCN / inductive RGCN link predictor."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import numerics as nx
from ._rng import stream
from .exceptions import CheckpointError
from .graph import HeteroGraph
from .model import (
    FeatureStore,
    ModelConfig,
    encode_nodes,
    init_params,
    relation_matrix,
    score,
    score_candidates,
)
from .training import TrainConfig, canonical, fit


def check_graph(graph, features=None, embedding_dim=16):
    """Validate a graph/feature pair, defaulting to learned embeddings."""
    if not isinstance(graph, HeteroGraph):
        raise TypeError(f"expected a HeteroGraph, got {type(graph).__name__}")
    if features is None:
        features = FeatureStore.learned(graph, embedding_dim)
    elif not isinstance(features, FeatureStore):
        features = FeatureStore(features)
    return graph, features.check(graph)


def check_triples(graph, triples):
    if triples is None:
        return graph.triples()
    triples = np.asarray(triples, dtype=np.int64)
    if triples.ndim != 2 or triples.shape[1] != 3:
        raise ValueError(f"triples must have shape (n, 3), got {triples.shape}")
    if len(triples) and (triples[:, 1].min() < 0 or triples[:, 1].max() >= graph.num_relations):
        raise ValueError("relation id out of range")
    return triples


class RGCNLinkPredictor(BaseEstimator):
    """Relational GCN encoder with a DistMult, ComplEx or RotatE decoder.

    With ``mode="inductive"`` each relation embedding is computed by a
    two-layer MLP from the node embeddings of that relation's training edges;
    with ``mode="transductive"`` relations get a learned lookup table.
    ``n_layers=0`` with featureless node types gives a plain KGE model.

    Parameters
    ----------
    mode : {"inductive", "transductive"}
    scorer : {"distmult", "complex", "rotate"}
    n_layers, hidden_dim : int
        Depth and width of the RGCN stack.
    self_loop, normalize : bool
        Add a per-type self term to each layer; average instead of summing
        neighbor messages. Both off gives the unnormalized, self-free layer.
    inductive_relations : tuple of relation names or ids, optional
        Restrict the relation MLP to these relations; the rest use a table.
    embedding_dim : int
        Width of learned tables for node types without features.
    epochs, lr, k_neg, beta1, beta2, adam_eps, seed
        Full-batch Adam training settings.

    Attributes
    ----------
    params_ : dict of str -> ndarray
    loss_curve_ : list of float
    node_embeddings_ : list of ndarray, one per node type
    relation_embeddings_ : ndarray of shape (n_relations, width)
    """

    def __init__(
        self,
        mode="inductive",
        scorer="distmult",
        n_layers=1,
        hidden_dim=32,
        self_loop=True,
        normalize=True,
        inductive_relations=None,
        embedding_dim=16,
        epochs=300,
        lr=1e-2,
        k_neg=1,
        beta1=0.9,
        beta2=0.999,
        adam_eps=1e-8,
        seed=0,
    ):
        self.mode = mode
        self.scorer = scorer
        self.n_layers = n_layers
        self.hidden_dim = hidden_dim
        self.self_loop = self_loop
        self.normalize = normalize
        self.inductive_relations = inductive_relations
        self.embedding_dim = embedding_dim
        self.epochs = epochs
        self.lr = lr
        self.k_neg = k_neg
        self.beta1 = beta1
        self.beta2 = beta2
        self.adam_eps = adam_eps
        self.seed = seed

    def model_config(self):
        rels = self.inductive_relations
        return ModelConfig(
            n_layers=self.n_layers,
            hidden_dim=self.hidden_dim,
            self_loop=self.self_loop,
            normalize=self.normalize,
            scorer=self.scorer,
            mode=self.mode,
            inductive_relations=None if rels is None else tuple(rels),
        )

    def train_config(self):
        return TrainConfig(
            epochs=self.epochs,
            lr=self.lr,
            k_neg=self.k_neg,
            seed=self.seed,
            beta1=self.beta1,
            beta2=self.beta2,
            adam_eps=self.adam_eps,
            model=self.model_config(),
        )

    def fit(self, graph, features=None, train_triples=None, callback=None):
        """Train on ``train_triples`` of ``graph`` (default: all its edges)."""
        graph, features = check_graph(graph, features, self.embedding_dim)
        train_triples = check_triples(graph, train_triples)
        result = fit(graph, features, self.train_config(), train_triples, callback=callback)
        self.loss_curve_ = result.loss_trace
        return self._set_state(graph, features, train_triples, result.params)

    def initialize(self, graph, features=None, train_triples=None):
        """Set seeded initial parameters without training."""
        graph, features = check_graph(graph, features, self.embedding_dim)
        train_triples = check_triples(graph, train_triples)
        train_graph = graph.with_triples(train_triples)
        params = init_params(train_graph, features, self.model_config(), stream(self.seed, "init"))
        self.loss_curve_ = []
        return self._set_state(graph, features, train_triples, params)

    def set_fitted_params(self, graph, features, train_triples, params):
        """Install externally stored parameters, e.g. from a checkpoint.

        Names and shapes must match a fresh initialization on ``graph``.
        """
        graph, features = check_graph(graph, features, self.embedding_dim)
        train_triples = check_triples(graph, train_triples)
        expected = init_params(graph.with_triples(canonical(train_triples)), features, self.model_config(),
                               stream(self.seed, "init"))
        got = {k: np.shape(v) for k, v in params.items()}
        want = {k: v.shape for k, v in expected.items()}
        if got != want:
            diff = sorted(set(got.items()) ^ set(want.items()))
            raise CheckpointError(f"parameters do not fit this graph and config: {diff[:6]}")
        params = {k: np.asarray(params[k], dtype=np.float64) for k in expected}
        return self._set_state(graph, features, train_triples, params)

    def _set_state(self, graph, features, train_triples, params):
        train_triples = canonical(train_triples)
        self.graph_ = graph.with_triples(train_triples)
        self.features_ = features
        self.train_triples_ = train_triples
        self.params_ = params
        self.node_embeddings_, self.relation_embeddings_ = self._embed(self.graph_)
        return self

    def _embed(self, graph):
        config = self.model_config()
        consts = {k: nx.const(v) for k, v in self.params_.items()}
        nodes = encode_nodes(graph, self.features_, consts, config)
        rel = relation_matrix(graph, nodes, consts, config, self.train_triples_)
        node_embs = [nx.forward(n).copy() for n in nodes]
        return node_embs, nx.forward(rel).copy()

    def transform(self, graph=None):
        """Final node embeddings per type name, optionally on another edge set.

        ``graph`` must share the node and relation tables of the training
        graph; its edges drive message passing.
        """
        check_is_fitted(self, "params_")
        if graph is None:
            embs = self.node_embeddings_
        else:
            embs, _ = self._embed(graph)
        return {t: e for t, e in zip(self.graph_.node_types, embs)}

    def score_triples(self, triples):
        """Scores of an ``(n, 3)`` array of ``(head, relation, tail)`` ids."""
        check_is_fitted(self, "params_")
        triples = check_triples(self.graph_, triples)
        out = np.empty(len(triples))
        for r in np.unique(triples[:, 1]):
            rel = self.graph_.relations[r]
            sel = triples[:, 1] == r
            h = self.node_embeddings_[rel.head_type][triples[sel, 0]]
            t = self.node_embeddings_[rel.tail_type][triples[sel, 2]]
            out[sel] = score(h, self.relation_embeddings_[r][None, :], t, self.scorer)
        return out

    def score_candidates(self, relation, heads, tails):
        """``(len(heads), len(tails))`` score matrix for one relation."""
        check_is_fitted(self, "params_")
        r = self.graph_.relation_id(relation)
        rel = self.graph_.relations[r]
        h = self.node_embeddings_[rel.head_type][np.asarray(heads, dtype=np.int64)]
        t = self.node_embeddings_[rel.tail_type][np.asarray(tails, dtype=np.int64)]
        rvec = np.repeat(self.relation_embeddings_[r][None, :], len(h), axis=0)
        return score_candidates(h, rvec, t, self.scorer)
