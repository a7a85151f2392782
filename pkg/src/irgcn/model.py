"""Node encoders, the inductive relation encoder and triple scorers.

Embeddings are row vectors, so a layer maps ``H @ W``. The relation MLP
weights are stored in the same row layout: ``W2`` has shape ``(2d, d)`` and
``W1`` shape ``(d, d)``.

ComplEx and RotatE use an interleaved layout: column ``2k`` holds the real
part and column ``2k + 1`` the imaginary part of complex coordinate ``k``.
RotatE relations are stored as ``d / 2`` phases.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import numerics as nx
from .exceptions import ContractError, DimensionError, ParseError, ResolutionError

SCORERS = ("distmult", "complex", "rotate")


class FeatureStore:
    """Per node type input features: a given dense matrix or a learned table.

    Parameters
    ----------
    sources : dict
        Maps node-type name to either an ``(N_t, F_t)`` array of given
        features or an int ``F_t``, the width of a learned embedding table.
    """

    def __init__(self, sources):
        self.sources = {}
        for t, src in sources.items():
            if isinstance(src, (int, np.integer)):
                if src < 1:
                    raise DimensionError(f"learned embedding width for {t!r} must be >= 1")
                self.sources[t] = int(src)
            else:
                arr = np.array(src, dtype=np.float64)
                if arr.ndim != 2:
                    raise DimensionError(f"features of {t!r} must be 2-D, got shape {arr.shape}")
                arr.setflags(write=False)
                self.sources[t] = arr

    @classmethod
    def learned(cls, graph, width):
        return cls({t: width for t in graph.node_types})

    def is_learned(self, node_type):
        return isinstance(self.sources[node_type], int)

    def width(self, node_type):
        src = self.sources[node_type]
        return src if isinstance(src, int) else src.shape[1]

    def matrix(self, node_type):
        src = self.sources[node_type]
        return None if isinstance(src, int) else src

    def check(self, graph):
        problems = []
        for t, n in zip(graph.node_types, graph.counts):
            if t not in self.sources:
                problems.append(f"node type {t!r} has no feature source")
            elif not self.is_learned(t) and self.sources[t].shape[0] != n:
                problems.append(
                    f"features of {t!r} have {self.sources[t].shape[0]} rows, graph has {n} nodes"
                )
        if problems:
            raise DimensionError("; ".join(problems))
        return self

    def __eq__(self, other):
        if not isinstance(other, FeatureStore) or self.sources.keys() != other.sources.keys():
            return NotImplemented
        for t, a in self.sources.items():
            b = other.sources[t]
            if isinstance(a, int) != isinstance(b, int):
                return False
            if isinstance(a, int) and a != b:
                return False
            if not isinstance(a, int) and not np.array_equal(a, b):
                return False
        return True


def load_features(graph, paths, default_width=16):
    """Read per-type feature CSVs (header ``node_id,f0,...``) keyed via the node map.

    ``paths`` maps node-type name to a CSV path, or is a directory holding
    ``<type>.csv`` files. Types with no file get a learned table of
    ``default_width`` columns.
    """
    if isinstance(paths, (str, Path)):
        directory = Path(paths)
        paths = {t: directory / f"{t}.csv" for t in graph.node_types}
        paths = {t: p for t, p in paths.items() if p.exists()}
    sources = {}
    for t in graph.node_types:
        path = paths.get(t)
        if path is None:
            sources[t] = default_width
            continue
        lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
        if not lines:
            raise ParseError(f"{path}: empty feature file")
        header = lines[0].split(",")
        if header[0].strip() != "node_id":
            raise ParseError(f"{path}: header must start with node_id", 1)
        width = len(header) - 1
        mat = np.full((graph.num_nodes(t), width), np.nan)
        filled = np.zeros(graph.num_nodes(t), dtype=bool)
        for lineno, line in enumerate(lines[1:], start=2):
            parts = line.split(",")
            if len(parts) != width + 1:
                raise ParseError(f"{path}: expected {width + 1} fields, got {len(parts)}", lineno)
            try:
                i = graph.node_id(t, parts[0].strip())
            except ResolutionError as err:
                raise ResolutionError(f"{path}: line {lineno}: {err}") from None
            try:
                mat[i] = [float(x) for x in parts[1:]]
            except ValueError:
                raise ParseError(f"{path}: non-numeric feature", lineno) from None
            filled[i] = True
        if not filled.all():
            missing = [graph.node_names[graph.type_id(t)][i] for i in np.flatnonzero(~filled)]
            raise ResolutionError(f"{path}: no features for nodes {', '.join(missing[:10])}")
        sources[t] = mat
    return FeatureStore(sources)


def write_features(graph, feats, directory):
    """Write every given feature matrix as ``<directory>/<type>.csv``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for ti, t in enumerate(graph.node_types):
        mat = feats.matrix(t)
        if mat is None:
            continue
        header = ",".join(["node_id"] + [f"f{j}" for j in range(mat.shape[1])])
        rows = [
            ",".join([name] + [repr(float(x)) for x in row])
            for name, row in zip(graph.node_names[ti], mat)
        ]
        (directory / f"{t}.csv").write_text("\n".join([header] + rows) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture switches shared by training, evaluation and checkpoints."""

    n_layers: int = 1
    hidden_dim: int = 32
    self_loop: bool = True
    normalize: bool = True
    scorer: str = "distmult"
    mode: str = "inductive"
    inductive_relations: tuple = None

    def __post_init__(self):
        if self.scorer not in SCORERS:
            raise ValueError(f"scorer must be one of {SCORERS}, got {self.scorer!r}")
        if self.mode not in ("inductive", "transductive"):
            raise ValueError(f"mode must be 'inductive' or 'transductive', got {self.mode!r}")
        if self.mode == "inductive" and self.scorer == "rotate":
            raise ValueError("inductive relation embeddings are not defined for rotate")
        if self.n_layers < 0:
            raise ValueError("n_layers must be >= 0")

    def embedding_dim(self, feats, graph):
        if self.n_layers > 0:
            return self.hidden_dim
        widths = {feats.width(t) for t in graph.node_types}
        if len(widths) != 1:
            raise DimensionError(f"with no layers all input widths must agree, got {sorted(widths)}")
        return widths.pop()

    def inductive_set(self, graph):
        """Relation ids embedded by the relation MLP."""
        if self.mode != "inductive":
            return ()
        if self.inductive_relations is None:
            return tuple(range(graph.num_relations))
        return tuple(sorted(graph.relation_id(r) for r in self.inductive_relations))


# -- parameter initialization --------------------------------------------

def glorot(rng, shape):
    a = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-a, a, size=shape)


def init_params(graph, feats, config, rng):
    """Seeded initial parameters, as an ordered ``name -> array`` dict."""
    feats.check(graph)
    params = {}
    for t in graph.node_types:
        if feats.is_learned(t):
            params[f"emb/{t}"] = glorot(rng, (graph.num_nodes(t), feats.width(t)))
    widths = [feats.width(t) for t in graph.node_types]
    for layer in range(config.n_layers):
        d_out = config.hidden_dim
        for r, rel in enumerate(graph.relations):
            params[f"rgcn/{layer}/rel/{rel.name}"] = glorot(rng, (widths[rel.tail_type], d_out))
        if config.self_loop:
            for ti, t in enumerate(graph.node_types):
                params[f"rgcn/{layer}/self/{t}"] = glorot(rng, (widths[ti], d_out))
        widths = [d_out] * graph.num_types
    d = config.embedding_dim(feats, graph)
    if config.scorer in ("complex", "rotate") and d % 2:
        raise DimensionError(f"{config.scorer} needs an even embedding width, got {d}")
    inductive = config.inductive_set(graph)
    if inductive:
        params["relmlp/W2"] = glorot(rng, (2 * d, d))
        params["relmlp/W1"] = glorot(rng, (d, d))
    if len(inductive) < graph.num_relations:
        width = d // 2 if config.scorer == "rotate" else d
        params["reltable"] = glorot(rng, (graph.num_relations, width))
    return params


# -- encoders --------------------------------------------------------------

def _node(x):
    return x if isinstance(x, nx.Node) else nx.const(x)


def adjacency(graph, normalize):
    """Dense per-relation message matrices ``A_r`` of shape ``(N_head, N_tail)``.

    Row ``h`` of ``A_r`` sums (or, normalized, averages) the tails of ``h``.
    """
    mats = []
    for r, rel in enumerate(graph.relations):
        a = np.zeros((graph.num_nodes(rel.head_type), graph.num_nodes(rel.tail_type)))
        e = graph.edges(r)
        np.add.at(a, (e[:, 0], e[:, 1]), 1.0)
        if normalize:
            deg = a.sum(axis=1, keepdims=True)
            a = np.divide(a, deg, out=np.zeros_like(a), where=deg > 0)
        mats.append(a)
    return mats


def rgcn_layer(graph, h_in, rel_weights, self_weights=None, normalize=True, adj=None):
    """One relational convolution.

    ``h_out[n] = relu(sum_r agg_{n' in N_n^r} h_in[n'] @ W_r + h_in[n] @ W_self)``
    where messages travel from tail to head and ``agg`` is a sum, or a mean
    when ``normalize`` is set. ``self_weights=None`` drops the self term.

    ``h_in`` is a per-type list of matrices (arrays or graph nodes);
    ``rel_weights`` one matrix per relation, ``self_weights`` one per type.
    Returns a per-type list of graph nodes.
    """
    h_in = [_node(h) for h in h_in]
    rel_weights = [_node(w) for w in rel_weights]
    if adj is None:
        adj = adjacency(graph, normalize)
    d_out = rel_weights[0].shape[1] if rel_weights else _node(self_weights[0]).shape[1]
    terms = [[] for _ in graph.node_types]
    for r, rel in enumerate(graph.relations):
        w = rel_weights[r]
        src = h_in[rel.tail_type]
        if src.shape[1] != w.shape[0]:
            raise DimensionError(
                f"relation {rel.name!r}: input shape {src.shape} and weight shape {w.shape}"
            )
        if w.shape[1] != d_out:
            raise DimensionError(f"relation {rel.name!r}: output width {w.shape[1]} != {d_out}")
        if not len(graph.edges(r)):
            continue
        a = adj[r] if isinstance(adj[r], nx.Node) else nx.const(adj[r])
        terms[rel.head_type].append(nx.matmul(a, nx.matmul(src, w)))
    if self_weights is not None:
        for t, w in enumerate(self_weights):
            w = _node(w)
            if h_in[t].shape[1] != w.shape[0]:
                raise DimensionError(
                    f"self-loop of type {graph.node_types[t]!r}: input shape {h_in[t].shape} "
                    f"and weight shape {w.shape}"
                )
            terms[t].append(nx.matmul(h_in[t], w))
    out = []
    for t, parts in enumerate(terms):
        if not parts:
            out.append(nx.relu(nx.const(np.zeros((graph.num_nodes(t), d_out)))))
            continue
        total = parts[0]
        for p in parts[1:]:
            total = nx.add(total, p)
        out.append(nx.relu(total))
    return out


def input_nodes(graph, feats, params):
    """Layer-0 inputs: feature constants or learned-table leaves from ``params``."""
    out = []
    for t in graph.node_types:
        if feats.is_learned(t):
            out.append(_node(params[f"emb/{t}"]))
        else:
            out.append(nx.const(feats.matrix(t)))
    return out


def encode_nodes(graph, feats, params, config, adj=None):
    """Run the RGCN stack; returns per-type graph nodes of width ``d``.

    ``params`` maps parameter names to arrays or leaves (see :func:`init_params`).
    """
    h = input_nodes(graph, feats, params)
    if config.n_layers and adj is None:
        adj = [nx.const(a) for a in adjacency(graph, config.normalize)]
    for layer in range(config.n_layers):
        rel_w = [params[f"rgcn/{layer}/rel/{rel.name}"] for rel in graph.relations]
        self_w = None
        if config.self_loop:
            self_w = [params[f"rgcn/{layer}/self/{t}"] for t in graph.node_types]
        h = rgcn_layer(graph, h, rel_w, self_w, normalize=config.normalize, adj=adj)
    return h


def relation_embed(heads, tails, w2, w1):
    """Inductive relation embedding from support pairs.

    ``mean over pairs of relu(relu([h, t] @ W2) @ W1)``, a ``(1, d)`` node.
    """
    heads, tails, w2, w1 = map(_node, (heads, tails, w2, w1))
    if heads.shape[0] == 0:
        raise ContractError("relation_embed needs at least one support pair")
    if heads.shape != tails.shape:
        raise DimensionError(f"support head shape {heads.shape} and tail shape {tails.shape} differ")
    hidden = nx.relu(nx.matmul(nx.concat_cols(heads, tails), w2))
    return nx.mean_rows(nx.relu(nx.matmul(hidden, w1)))


def relation_matrix(graph, node_embs, params, config, support):
    """Stack of all relation embeddings as an ``(R, width)`` node.

    ``support`` is an ``(S, 3)`` triple array; its rows for inductive
    relations feed the relation MLP, averaged per relation.
    """
    inductive = config.inductive_set(graph)
    n_rel = graph.num_relations
    out = None
    if inductive:
        support = np.asarray(support, dtype=np.int64).reshape(-1, 3)
        w2, w1 = _node(params["relmlp/W2"]), _node(params["relmlp/W1"])
        by_pair = {}
        for r in inductive:
            sel = support[support[:, 1] == r]
            if not len(sel):
                raise ContractError(
                    f"relation {graph.relations[r].name!r} has no support edges for its "
                    "inductive embedding"
                )
            rel = graph.relations[r]
            by_pair.setdefault((rel.head_type, rel.tail_type), []).append((r, sel))
        for (ht, tt), groups in by_pair.items():
            sel = np.concatenate([s for _, s in groups])
            pairs = nx.concat_cols(
                nx.row_lookup(node_embs[ht], sel[:, 0]), nx.row_lookup(node_embs[tt], sel[:, 2])
            )
            z = nx.relu(nx.matmul(nx.relu(nx.matmul(pairs, w2)), w1))
            avg = np.zeros((n_rel, len(sel)))
            offset = 0
            for r, s in groups:
                avg[r, offset:offset + len(s)] = 1.0 / len(s)
                offset += len(s)
            term = nx.matmul(nx.const(avg), z)
            out = term if out is None else nx.add(out, term)
    if not inductive:
        return _node(params["reltable"])
    if len(inductive) < n_rel:
        mask = np.ones(n_rel)
        mask[list(inductive)] = 0.0
        table = nx.matmul(nx.const(np.diag(mask)), _node(params["reltable"]))
        out = table if out is None else nx.add(out, table)
    return out


# -- scorers ---------------------------------------------------------------

def _check_width(kind, d):
    if kind in ("complex", "rotate") and d % 2:
        raise DimensionError(f"{kind} needs an even width, got {d}")


def _split_complex(x):
    return x[..., 0::2], x[..., 1::2]


def score(h, r, t, kind="distmult"):
    """Score of triples given row-aligned arrays (1-D for a single triple).

    distmult: ``sum(h * t * r)``; complex: ``Re(sum(h * r * conj(t)))``;
    rotate: ``-sum_k |h_k * exp(i r_k) - t_k|`` with ``r`` given as phases.
    """
    h, r, t = (np.asarray(x, dtype=np.float64) for x in (h, r, t))
    if h.shape[-1] != t.shape[-1]:
        raise DimensionError(f"head width {h.shape[-1]} and tail width {t.shape[-1]} differ")
    d = h.shape[-1]
    _check_width(kind, d)
    if kind == "distmult":
        if r.shape[-1] != d:
            raise DimensionError(f"relation width {r.shape[-1]} != {d}")
        return np.sum((h * t) * r, axis=-1)
    if kind == "complex":
        if r.shape[-1] != d:
            raise DimensionError(f"relation width {r.shape[-1]} != {d}")
        hr, hi = _split_complex(h)
        rr, ri = _split_complex(r)
        tr, ti = _split_complex(t)
        return np.sum(hr * rr * tr + hi * rr * ti + hr * ri * ti - hi * ri * tr, axis=-1)
    if kind == "rotate":
        if r.shape[-1] != d // 2:
            raise DimensionError(f"rotate phases width {r.shape[-1]} != {d // 2}")
        hr, hi = _split_complex(h)
        tr, ti = _split_complex(t)
        c, s = np.cos(r), np.sin(r)
        re = hr * c - hi * s - tr
        im = hr * s + hi * c - ti
        return -np.sum(np.sqrt(re * re + im * im), axis=-1)
    raise ValueError(f"unknown scorer {kind!r}")


def score_candidates(h, r, tails, kind="distmult"):
    """Scores of ``(n, d)`` heads with ``(n, w)`` relations against ``(m, d)`` tails -> ``(n, m)``."""
    h, r, tails = (np.atleast_2d(np.asarray(x, dtype=np.float64)) for x in (h, r, tails))
    return score(h[:, None, :], r[:, None, :], tails[None, :, :], kind)


def _selectors(d):
    re = np.zeros((d, d // 2))
    im = np.zeros((d, d // 2))
    re[0::2, :] = np.eye(d // 2)
    im[1::2, :] = np.eye(d // 2)
    return nx.const(re), nx.const(im)


def score_rows(h, r, t, kind="distmult"):
    """Differentiable per-row scores of aligned ``(n, d)`` nodes -> ``(n, 1)`` node."""
    d = h.shape[1]
    _check_width(kind, d)
    ones = nx.const(np.ones((d // 2 if kind != "distmult" else d, 1)))
    if kind == "distmult":
        return nx.matmul(nx.mul(nx.mul(h, t), r), ones)
    pre, pim = _selectors(d)
    hr, hi = nx.matmul(h, pre), nx.matmul(h, pim)
    tr, ti = nx.matmul(t, pre), nx.matmul(t, pim)
    if kind == "complex":
        rr, ri = nx.matmul(r, pre), nx.matmul(r, pim)
        total = nx.add(
            nx.add(nx.mul(nx.mul(hr, rr), tr), nx.mul(nx.mul(hi, rr), ti)),
            nx.add(nx.mul(nx.mul(hr, ri), ti), nx.scale(nx.mul(nx.mul(hi, ri), tr), -1.0)),
        )
        return nx.matmul(total, ones)
    if kind == "rotate":
        c, s = nx.cos(r), nx.sin(r)
        re = nx.add(nx.add(nx.mul(hr, c), nx.scale(nx.mul(hi, s), -1.0)), nx.scale(tr, -1.0))
        im = nx.add(nx.add(nx.mul(hr, s), nx.mul(hi, c)), nx.scale(ti, -1.0))
        modulus = nx.sqrt(nx.add(nx.mul(re, re), nx.mul(im, im)))
        return nx.scale(nx.matmul(modulus, ones), -1.0)
    raise ValueError(f"unknown scorer {kind!r}")
