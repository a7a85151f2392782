"""Few-shot and percentage splits, label-refined relations, and a synthetic
heterogeneous graph generator for desk-scale experiments."""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._rng import stream
from .exceptions import ParseError, SpecError, TransformError
from .graph import HeteroGraph, RelationSchema
from .model import FeatureStore


@dataclass
class FewShotSplit:
    """``K`` training edges of one relation, the rest of it held out.

    All edges of the other relations are training edges.
    """

    relation: int
    k: int
    seed: int
    train: np.ndarray
    test: np.ndarray
    background: np.ndarray
    warnings: list = field(default_factory=list)

    def train_triples(self):
        return np.concatenate([self.background, self.train])

    def manifest(self, graph):
        return {
            "mode": "kshot",
            "relation": graph.relations[self.relation].name,
            "k": self.k,
            "seed": self.seed,
            "n_train": len(self.train_triples()),
            "n_train_relation": len(self.train),
            "n_test": len(self.test),
        }


@dataclass
class PercentSplit:
    p: float
    seed: int
    train: np.ndarray
    test: np.ndarray

    def train_triples(self):
        return self.train

    def manifest(self, graph):
        return {
            "mode": "percent",
            "p": self.p,
            "seed": self.seed,
            "n_train": len(self.train),
            "n_test": len(self.test),
        }


def kshot_split(graph, relation, k, seed=0):
    """Uniform random ``k``-subset of one relation's edges as training edges.

    ``k`` larger than the relation's edge count is clamped, with a note in
    ``split.warnings``.
    """
    r = graph.relation_id(relation)
    if k < 0:
        raise ValueError(f"K must be >= 0, got {k}")
    triples = graph.triples()
    rel_rows = triples[triples[:, 1] == r]
    warnings = []
    if k > len(rel_rows):
        warnings.append(f"K={k} exceeds the {len(rel_rows)} edges of relation "
                        f"{graph.relations[r].name!r}; clamped")
        k = len(rel_rows)
    order = stream(seed, "split").permutation(len(rel_rows))
    train = rel_rows[np.sort(order[:k])]
    test = rel_rows[np.sort(order[k:])]
    return FewShotSplit(r, k, seed, train, test, triples[triples[:, 1] != r], warnings)


def percent_split(graph, p, seed=0):
    """Random split of all edges irrespective of relation, ``round(p * E)`` for training."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    triples = graph.triples()
    n_train = int(round(p * len(triples)))
    order = stream(seed, "split").permutation(len(triples))
    return PercentSplit(p, seed, triples[np.sort(order[:n_train])], triples[np.sort(order[n_train:])])


def write_split(graph, split, directory):
    """Write ``train.tsv``, ``test.tsv`` and a ``manifest.txt`` of ``key=value`` lines.

    A k-shot split puts only the ``K`` few-shot edges in ``train.tsv`` and
    the other relations' edges in ``background.tsv``; both are training data.
    The node map and relation schema are written alongside so later steps
    see the same ids whatever subset of files they read.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    graph.write_triples(directory / "train.tsv", split.train)
    if isinstance(split, FewShotSplit):
        graph.write_triples(directory / "background.tsv", split.background)
    graph.write_triples(directory / "test.tsv", split.test)
    graph.write_node_map(directory / "nodes.tsv")
    graph.write_relations(directory / "relations.tsv")
    lines = [f"{k}={v}" for k, v in split.manifest(graph).items()]
    lines += [f"warning={w}" for w in getattr(split, "warnings", [])]
    (directory / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def transform_label_relations(graph, relations, labels):
    """Split each listed relation into one relation per label of its labeled endpoint.

    ``labels`` maps a node-type name to a sequence giving every node's label
    (``None`` for unlabeled). Exactly one endpoint type of each refined
    relation must be labeled. ``directed`` with label ``drama`` becomes
    ``directed_drama``; relations not listed pass through unchanged.
    """
    refine = {graph.relation_id(r) for r in relations}
    label_of = {}
    for t, values in labels.items():
        ti = graph.type_id(t)
        values = list(values)
        if len(values) != graph.num_nodes(ti):
            raise TransformError(
                f"{len(values)} labels for {graph.num_nodes(ti)} nodes of type {t!r}"
            )
        label_of[ti] = values
    new_relations, new_edges = [], []
    for r, rel in enumerate(graph.relations):
        e = graph.edges(r)
        if r not in refine:
            new_relations.append(rel)
            new_edges.append(e)
            continue
        sides = [side for side, t in ((0, rel.head_type), (1, rel.tail_type)) if t in label_of]
        if len(sides) != 1:
            raise TransformError(
                f"relation {rel.name!r} must have exactly one labeled endpoint type, has {len(sides)}"
            )
        side = sides[0]
        node_labels = label_of[rel.head_type if side == 0 else rel.tail_type]
        edge_labels = []
        for h, t in e:
            lab = node_labels[(h, t)[side]]
            if lab is None:
                raise TransformError(
                    f"edge ({graph.format_node(rel.head_type, h)}, {rel.name}, "
                    f"{graph.format_node(rel.tail_type, t)}) has an unlabeled endpoint"
                )
            edge_labels.append(str(lab))
        edge_labels = np.array(edge_labels, dtype=object)
        for lab in sorted(set(edge_labels.tolist())):
            new_relations.append(RelationSchema(f"{rel.name}_{lab}", rel.head_type, rel.tail_type))
            new_edges.append(e[edge_labels == lab])
    return graph.with_relations(new_relations, new_edges)


@dataclass(frozen=True)
class SynthSpec:
    """Counts and knobs of :func:`synth_generate`.

    Relation ``i < n_relations - 1`` links the ``i``-th ordered type pair of
    ``(0,1), (1,0), (0,2), (2,0), (1,2), (2,1), (0,0), (1,1), ...``; the last
    relation is the planted rare relation from type 0 to type 1.
    """

    n_types: int = 3
    nodes_per_type: int = 100
    n_relations: int = 8
    edges_per_relation: int = 300
    rare_edges: int = 60
    feature_dim: int = 8
    noise: float = 0.1
    n_labels: int = 3
    sharpness: float = 2.0
    seed: int = 0

    def __post_init__(self):
        for name in ("n_types", "nodes_per_type", "n_relations", "edges_per_relation",
                     "rare_edges", "feature_dim"):
            if getattr(self, name) < 1:
                raise SpecError(f"{name} must be positive")
        if self.n_types < 2:
            raise SpecError("need at least 2 node types for the rare relation")
        if self.noise < 0:
            raise SpecError("noise must be >= 0")


@dataclass
class SynthData:
    graph: HeteroGraph
    features: FeatureStore
    labels: dict
    factors: list
    rare_relation: int
    rare_threshold: float


def _type_pairs(n_types):
    pairs = []
    for a in range(n_types):
        for b in range(a + 1, n_types):
            pairs += [(a, b), (b, a)]
    pairs += [(a, a) for a in range(n_types)]
    return pairs


def planted_edges(head_factors, tail_factors, threshold):
    """Pairs ``(u, v)`` whose factor dot product exceeds ``threshold``."""
    dots = head_factors @ tail_factors.T
    return np.argwhere(dots > threshold)


def synth_generate(spec):
    """Generate a typed graph with latent node factors and a planted rare relation.

    Each node gets a standard normal factor vector of width
    ``feature_dim``. Relation ``r`` draws ``edges_per_relation`` distinct
    pairs with probability proportional to ``exp(sharpness * u . diag(w_r) v)``
    for a positive per-relation weight vector ``w_r``. The rare relation
    holds exactly the ``rare_edges`` pairs of largest plain dot product
    ``u . v``. Features are the factors plus Gaussian noise of scale
    ``noise``; type-0 labels are the argmax over the first ``n_labels``
    factor coordinates.
    """
    rng = stream(spec.seed, "synth")
    n = spec.nodes_per_type
    pairs = _type_pairs(spec.n_types)
    if spec.n_relations - 1 > len(pairs):
        raise SpecError(f"at most {len(pairs) + 1} relations fit {spec.n_types} node types")
    if max(spec.edges_per_relation, spec.rare_edges) > n * n:
        raise SpecError(f"{max(spec.edges_per_relation, spec.rare_edges)} edges exceed the "
                        f"{n * n} possible pairs")
    node_types = [f"type{i}" for i in range(spec.n_types)]
    node_names = [[f"n{j}" for j in range(n)] for _ in node_types]
    factors = [rng.standard_normal((n, spec.feature_dim)) for _ in node_types]
    relations, edges = [], []
    scale = spec.sharpness / np.sqrt(spec.feature_dim)
    for i in range(spec.n_relations - 1):
        a, b = pairs[i]
        w = rng.uniform(0.5, 1.5, size=spec.feature_dim)
        logits = scale * ((factors[a] * w) @ factors[b].T).ravel()
        p = np.exp(logits - logits.max())
        p /= p.sum()
        chosen = np.sort(rng.choice(n * n, size=spec.edges_per_relation, replace=False, p=p))
        relations.append(RelationSchema(f"rel{i}", a, b))
        edges.append(np.column_stack([chosen // n, chosen % n]))
    dots = (factors[0] @ factors[1].T).ravel()
    order = np.argsort(-dots, kind="stable")
    threshold = 0.5 * (dots[order[spec.rare_edges - 1]] + dots[order[spec.rare_edges]]) \
        if spec.rare_edges < dots.size else -np.inf
    rare = np.sort(order[:spec.rare_edges])
    relations.append(RelationSchema("rare", 0, 1))
    edges.append(np.column_stack([rare // n, rare % n]))
    graph = HeteroGraph(node_types, node_names, relations, edges)
    noise_rng = stream(spec.seed, "synth_noise")
    feats = FeatureStore({
        t: f + spec.noise * noise_rng.standard_normal(f.shape) if spec.noise > 0 else f.copy()
        for t, f in zip(node_types, factors)
    })
    k = min(spec.n_labels, spec.feature_dim)
    labels = {node_types[0]: [f"L{c}" for c in np.argmax(factors[0][:, :k], axis=1)]}
    return SynthData(graph, feats, labels, factors, len(relations) - 1, float(threshold))


def write_labels(graph, labels, path):
    rows = []
    for t, values in labels.items():
        ti = graph.type_id(t)
        for name, lab in zip(graph.node_names[ti], values):
            if lab is not None:
                rows.append(f"{t}\t{name}\t{lab}\n")
    Path(path).write_text("".join(rows), encoding="utf-8")


def read_labels(graph, path):
    """Read ``type<TAB>name<TAB>label`` rows into a label map; unlisted nodes are unlabeled."""
    labels = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not raw.strip() or raw.startswith("#"):
            continue
        parts = raw.split("\t")
        if len(parts) != 3:
            raise ParseError(f"expected 3 tab-separated fields, got {len(parts)}", lineno)
        t, name, lab = parts
        ti = graph.type_id(t)
        values = labels.setdefault(t, [None] * graph.num_nodes(ti))
        values[graph.node_id(ti, name)] = lab
    return labels
