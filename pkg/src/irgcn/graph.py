"""Heterogeneous graph storage: typed nodes, typed directed relations.

Nodes carry dense per-type integer ids. Edges are stored per relation as
``(head_id, tail_id)`` rows; a whole-graph edge list is an ``(E, 3)`` integer
array of ``(head, relation, tail)`` rows, which is the triple layout used by
the rest of the package.

Triple files are UTF-8 TSV with one edge per line::

    gene::g1<TAB>inhibits<TAB>drug::d1

Lines starting with ``#`` and blank lines are skipped.
"""

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import DuplicateEdgeError, ParseError, ResolutionError, SchemaError

TYPE_SEP = "::"


@dataclass(frozen=True)
class RelationSchema:
    name: str
    head_type: int
    tail_type: int


class _CSR:
    __slots__ = ("indptr", "indices")

    def __init__(self, n_rows, rows, cols):
        order = np.argsort(rows, kind="stable")
        counts = np.bincount(rows, minlength=n_rows)
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self.indices = cols[order].astype(np.int64)
        self.indptr.setflags(write=False)
        self.indices.setflags(write=False)

    def row(self, i):
        return self.indices[self.indptr[i]:self.indptr[i + 1]]


class HeteroGraph:
    """Immutable heterogeneous graph.

    Parameters
    ----------
    node_types : list of str
        Node-type names, in id order.
    node_names : list of list of str
        ``node_names[t][i]`` is the name of node ``i`` of type ``t``.
    relations : list of RelationSchema
    edges : list of array-like of shape (E_r, 2)
        Per-relation ``(head_id, tail_id)`` rows, in insertion order.
    check : bool, default True
        Raise on invariant violations. Pass ``False`` to build a graph that
        :meth:`validate` can then report on.
    """

    def __init__(self, node_types, node_names, relations, edges, check=True):
        self.node_types = tuple(node_types)
        self.node_names = tuple(tuple(names) for names in node_names)
        self.relations = tuple(relations)
        if len(edges) != len(self.relations):
            raise SchemaError(f"{len(edges)} edge lists for {len(self.relations)} relations")
        self._edges = []
        for e in edges:
            arr = np.asarray(e, dtype=np.int64).reshape(-1, 2).copy()
            arr.setflags(write=False)
            self._edges.append(arr)
        self._type_index = {name: i for i, name in enumerate(self.node_types)}
        self._rel_index = {rel.name: i for i, rel in enumerate(self.relations)}
        self._name_index = [{n: i for i, n in enumerate(names)} for names in self.node_names]
        self._out = []
        self._in = []
        if check:
            problems = self.validate()
            if problems:
                dup = [p for p in problems if p.startswith("duplicate")]
                if dup:
                    raise DuplicateEdgeError(dup[0])
                raise SchemaError("; ".join(problems))
        for rel, e in zip(self.relations, self._edges):
            if check:
                self._out.append(_CSR(self.num_nodes(rel.head_type), e[:, 0], e[:, 1]))
                self._in.append(_CSR(self.num_nodes(rel.tail_type), e[:, 1], e[:, 0]))
            else:
                self._out.append(None)
                self._in.append(None)

    # -- lookup -----------------------------------------------------------
    @property
    def num_types(self):
        return len(self.node_types)

    @property
    def num_relations(self):
        return len(self.relations)

    @property
    def num_edges(self):
        return sum(len(e) for e in self._edges)

    @property
    def counts(self):
        return tuple(len(names) for names in self.node_names)

    def num_nodes(self, node_type):
        return len(self.node_names[self.type_id(node_type)])

    def type_id(self, node_type):
        if isinstance(node_type, (int, np.integer)):
            if not 0 <= node_type < len(self.node_types):
                raise IndexError(f"node type {node_type} out of range")
            return int(node_type)
        try:
            return self._type_index[node_type]
        except KeyError:
            raise ResolutionError(f"unknown node type {node_type!r}") from None

    def relation_id(self, relation):
        if isinstance(relation, (int, np.integer)):
            if not 0 <= relation < len(self.relations):
                raise IndexError(f"relation {relation} out of range")
            return int(relation)
        try:
            return self._rel_index[relation]
        except KeyError:
            raise ResolutionError(f"unknown relation {relation!r}") from None

    def node_id(self, node_type, name):
        t = self.type_id(node_type)
        try:
            return self._name_index[t][name]
        except KeyError:
            raise ResolutionError(f"unknown node {self.node_types[t]}{TYPE_SEP}{name}") from None

    def resolve(self, node_type, names):
        """Map names to ids, reporting every unknown name at once."""
        t = self.type_id(node_type)
        index = self._name_index[t]
        missing = [n for n in names if n not in index]
        if missing:
            raise ResolutionError(
                f"unknown {self.node_types[t]} nodes: {', '.join(map(str, missing))}"
            )
        return np.array([index[n] for n in names], dtype=np.int64)

    def edges(self, relation):
        return self._edges[self.relation_id(relation)]

    def triples(self):
        """All edges as an ``(E, 3)`` array of ``(head, relation, tail)``."""
        parts = [
            np.column_stack([e[:, 0], np.full(len(e), r, dtype=np.int64), e[:, 1]])
            for r, e in enumerate(self._edges)
        ]
        if not parts:
            return np.zeros((0, 3), dtype=np.int64)
        return np.concatenate(parts).astype(np.int64)

    def neighbors(self, node, relation, direction="out"):
        """Neighbors of ``node = (type, id)`` under ``relation``.

        ``out`` returns the tails of edges whose head is ``node``, ``in`` the
        heads of edges whose tail is ``node``. Order follows edge insertion.
        """
        node_type, node_id = node
        r = self.relation_id(relation)
        t = self.type_id(node_type)
        rel = self.relations[r]
        if direction == "out":
            expected, index = rel.head_type, self._out[r]
        elif direction == "in":
            expected, index = rel.tail_type, self._in[r]
        else:
            raise ValueError(f"direction must be 'in' or 'out', got {direction!r}")
        if t != expected:
            raise ValueError(
                f"relation {rel.name!r} has no {direction}-edges on type {self.node_types[t]!r}"
            )
        if not 0 <= node_id < self.num_nodes(t):
            raise IndexError(f"node id {node_id} out of range for type {self.node_types[t]!r}")
        return index.row(node_id).copy()

    def out_degree(self, relation):
        """Out-degree of every head-type node under ``relation``."""
        r = self.relation_id(relation)
        return np.diff(self._out[r].indptr)

    # -- invariants -------------------------------------------------------
    def validate(self):
        problems = []
        names = set()
        for i, t in enumerate(self.node_types):
            if t in names:
                problems.append(f"duplicate node type name {t!r}")
            names.add(t)
            if len(self.node_names[i]) < 1:
                problems.append(f"node type {t!r} has no nodes")
        rel_names = set()
        for r, rel in enumerate(self.relations):
            if rel.name in rel_names:
                problems.append(f"duplicate relation name {rel.name!r}")
            rel_names.add(rel.name)
            bad_types = False
            for side in (rel.head_type, rel.tail_type):
                if not 0 <= side < len(self.node_types):
                    problems.append(f"relation {rel.name!r} references node type {side}")
                    bad_types = True
            if bad_types:
                continue
            e = self._edges[r]
            nh, nt = len(self.node_names[rel.head_type]), len(self.node_names[rel.tail_type])
            for k, (h, t) in enumerate(e):
                if not (0 <= h < nh and 0 <= t < nt):
                    problems.append(
                        f"edge {k} of relation {rel.name!r} has endpoint ({h}, {t}) outside "
                        f"[0, {nh}) x [0, {nt})"
                    )
            if len(e):
                codes = e[:, 0] * max(nt, 1) + e[:, 1]
                uniq, cnt = np.unique(codes, return_counts=True)
                for code, c in zip(uniq, cnt):
                    if c > 1:
                        dup_rows = np.flatnonzero(codes == code)
                        problems.append(
                            f"duplicate triple ({e[dup_rows[0], 0]}, {rel.name}, "
                            f"{e[dup_rows[0], 1]}) at edge {dup_rows[1]}"
                        )
        if self._out and self._out[0] is not None:
            for r, rel in enumerate(self.relations):
                e = self._edges[r]
                rebuilt = sorted(
                    (h, t) for h in range(self.num_nodes(rel.head_type)) for t in self._out[r].row(h)
                )
                if rebuilt != sorted(map(tuple, e.tolist())):
                    problems.append(f"adjacency index of relation {rel.name!r} is stale")
        return problems

    # -- derived graphs ---------------------------------------------------
    def with_triples(self, triples):
        """A graph with the same node and relation tables but the given edges."""
        triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        edges = [triples[triples[:, 1] == r][:, [0, 2]] for r in range(self.num_relations)]
        return HeteroGraph(self.node_types, self.node_names, self.relations, edges)

    def with_relations(self, relations, edges):
        return HeteroGraph(self.node_types, self.node_names, relations, edges)

    # -- serialization ----------------------------------------------------
    def format_node(self, node_type, node_id):
        t = self.type_id(node_type)
        return f"{self.node_types[t]}{TYPE_SEP}{self.node_names[t][node_id]}"

    def triple_lines(self, triples=None):
        triples = self.triples() if triples is None else np.asarray(triples).reshape(-1, 3)
        lines = []
        for h, r, t in triples:
            rel = self.relations[r]
            lines.append(
                f"{self.format_node(rel.head_type, h)}\t{rel.name}\t"
                f"{self.format_node(rel.tail_type, t)}"
            )
        return lines

    def write_triples(self, path, triples=None):
        lines = self.triple_lines(triples)
        Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")

    def write_node_map(self, path):
        rows = [
            f"{t}\t{name}\t{i}\n"
            for t, names in zip(self.node_types, self.node_names)
            for i, name in enumerate(names)
        ]
        Path(path).write_text("".join(rows), encoding="utf-8")

    def write_relations(self, path):
        rows = [
            f"{rel.name}\t{self.node_types[rel.head_type]}\t{self.node_types[rel.tail_type]}\n"
            for rel in self.relations
        ]
        Path(path).write_text("".join(rows), encoding="utf-8")

    def __repr__(self):
        types = ", ".join(f"{t}={n}" for t, n in zip(self.node_types, self.counts))
        return f"HeteroGraph({types}; {self.num_relations} relations, {self.num_edges} edges)"


def _data_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield lineno, line


def read_node_map(path):
    """Read a ``type<TAB>name<TAB>id`` node map into ``(node_types, node_names)``."""
    node_types, by_type = [], {}
    for lineno, line in _data_lines(path):
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError(f"expected 3 tab-separated fields, got {len(parts)}", lineno)
        t, name, raw_id = parts
        try:
            i = int(raw_id)
        except ValueError:
            raise ParseError(f"node id {raw_id!r} is not an integer", lineno) from None
        if t not in by_type:
            node_types.append(t)
            by_type[t] = {}
        if i in by_type[t]:
            raise ParseError(f"node id {i} of type {t!r} assigned twice", lineno)
        by_type[t][i] = name
    node_names = []
    for t in node_types:
        ids = by_type[t]
        if sorted(ids) != list(range(len(ids))):
            raise ParseError(f"ids of node type {t!r} are not dense 0..{len(ids) - 1}")
        node_names.append([ids[i] for i in range(len(ids))])
    return node_types, node_names


def read_relations(path, node_types):
    """Read a ``relation<TAB>head_type<TAB>tail_type`` schema file."""
    type_index = {t: i for i, t in enumerate(node_types)}
    schema = []
    for lineno, line in _data_lines(path):
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError(f"expected 3 tab-separated fields, got {len(parts)}", lineno)
        name, ht, tt = parts
        if ht not in type_index or tt not in type_index:
            raise SchemaError(f"line {lineno}: relation {name!r} uses an undeclared node type")
        schema.append(RelationSchema(name, type_index[ht], type_index[tt]))
    return schema


def _split_node(token, lineno):
    if TYPE_SEP not in token:
        raise ParseError(f"node {token!r} lacks a 'type{TYPE_SEP}id' prefix", lineno)
    t, _, name = token.partition(TYPE_SEP)
    if not t or not name:
        raise ParseError(f"node {token!r} has an empty type or id", lineno)
    return t, name


def load_triples(path, schema=None, node_map=None):
    """Load a triple TSV file into a :class:`HeteroGraph`.

    Parameters
    ----------
    path : path-like or list of path-likes
        Several files are read in order into one graph.
    schema : list of RelationSchema, optional
        Fixes relation ids and endpoint types. Inferred from first use when
        absent. Requires ``node_map`` or relies on type ids in first-seen order.
    node_map : tuple (node_types, node_names), optional
        Fixes node ids, e.g. from :func:`read_node_map`. Without it ids are
        assigned densely per type in first-seen order.
    """
    fixed_nodes = node_map is not None
    if fixed_nodes:
        node_types = list(node_map[0])
        node_names = [list(n) for n in node_map[1]]
    else:
        node_types, node_names = [], []
    type_index = {t: i for i, t in enumerate(node_types)}
    name_index = [{n: i for i, n in enumerate(names)} for names in node_names]

    relations = list(schema) if schema is not None else []
    rel_index = {rel.name: i for i, rel in enumerate(relations)}
    edges = [[] for _ in relations]
    seen = set()

    def node(t, name, lineno):
        if t not in type_index:
            if fixed_nodes:
                raise ParseError(f"node type {t!r} not in node map", lineno)
            type_index[t] = len(node_types)
            node_types.append(t)
            node_names.append([])
            name_index.append({})
        ti = type_index[t]
        if name not in name_index[ti]:
            if fixed_nodes:
                raise ParseError(f"node {t}{TYPE_SEP}{name} not in node map", lineno)
            name_index[ti][name] = len(node_names[ti])
            node_names[ti].append(name)
        return ti, name_index[ti][name]

    paths = [path] if isinstance(path, (str, os.PathLike)) else list(path)
    lines = ((lineno, line) for p in paths for lineno, line in _data_lines(p))
    for lineno, line in lines:
        parts = [p.strip() for p in line.split("\t")]
        if len(parts) != 3:
            raise ParseError(f"expected 3 tab-separated fields, got {len(parts)}", lineno)
        head_tok, rel_name, tail_tok = parts
        if not rel_name:
            raise ParseError("empty relation name", lineno)
        ht, hname = _split_node(head_tok, lineno)
        tt, tname = _split_node(tail_tok, lineno)
        hti, hid = node(ht, hname, lineno)
        tti, tid = node(tt, tname, lineno)
        if rel_name not in rel_index:
            if schema is not None:
                raise SchemaError(f"line {lineno}: relation {rel_name!r} not in schema")
            rel_index[rel_name] = len(relations)
            relations.append(RelationSchema(rel_name, hti, tti))
            edges.append([])
        r = rel_index[rel_name]
        rel = relations[r]
        if (rel.head_type, rel.tail_type) != (hti, tti):
            raise SchemaError(
                f"line {lineno}: relation {rel_name!r} used with ({ht}, {tt}) but declared "
                f"({node_types[rel.head_type]}, {node_types[rel.tail_type]})"
            )
        key = (hid, r, tid)
        if key in seen:
            raise DuplicateEdgeError(f"duplicate triple {head_tok} {rel_name} {tail_tok}", lineno)
        seen.add(key)
        edges[r].append((hid, tid))
    return HeteroGraph(node_types, node_names, relations, [np.array(e).reshape(-1, 2) for e in edges])
