"""Labelled graphs, Markov blankets, CPDAG orientation, SHD and serialization.

An edge joins an unordered node pair and is either undirected (``a - b``) or
directed (``a -> b``). Node identity is by name. Node and edge iteration
follow insertion order, which makes every export deterministic.
"""

from __future__ import annotations

import json
import re
from itertools import combinations
from typing import Iterable, Sequence
from xml.sax.saxutils import escape, quoteattr

from .errors import GraphError

UNDIRECTED = "undirected"
DIRECTED = "directed"


class LabelledGraph:
    """Graph over named nodes with at most one edge per node pair."""

    def __init__(self, nodes: Iterable[str] = (), edges: Iterable = ()):
        self._nodes: dict[str, None] = {}
        # frozenset({a, b}) -> [tail, head, directed, attrs]
        self._edges: dict[frozenset, list] = {}
        for node in nodes:
            self.add_node(node)
        for edge in edges:
            if len(edge) == 2:
                self.add_edge(edge[0], edge[1])
            else:
                a, b, mark = edge[:3]
                self.add_edge(a, b, directed=_parse_mark(mark))

    # -- construction -------------------------------------------------

    def add_node(self, node: str) -> None:
        node = str(node)
        if not node:
            raise GraphError("node names must be non-empty")
        if node in self._nodes:
            raise GraphError(f"duplicated node {node!r}")
        self._nodes[node] = None

    def _check_pair(self, a, b):
        for node in (a, b):
            if node not in self._nodes:
                raise GraphError(f"unknown node {node!r}")
        if a == b:
            raise GraphError(f"self-loop on {a!r} is not allowed")

    def add_edge(self, a: str, b: str, directed: bool = False, **attrs) -> None:
        self._check_pair(a, b)
        key = frozenset((a, b))
        if key in self._edges:
            raise GraphError(f"nodes {a!r} and {b!r} are already adjacent")
        self._validate_mutation(a, b, directed, replacing=None)
        self._edges[key] = [a, b, bool(directed), dict(attrs)]

    def set_edge(self, a: str, b: str, directed: bool = False) -> None:
        """Re-mark an existing edge as ``a - b`` or ``a -> b`` (attributes kept)."""
        self._check_pair(a, b)
        key = frozenset((a, b))
        if key not in self._edges:
            raise GraphError(f"no edge between {a!r} and {b!r}")
        self._validate_mutation(a, b, directed, replacing=key)
        entry = self._edges[key]
        entry[0], entry[1], entry[2] = a, b, bool(directed)

    def remove_edge(self, a: str, b: str) -> None:
        try:
            del self._edges[frozenset((a, b))]
        except KeyError:
            raise GraphError(f"no edge between {a!r} and {b!r}") from None

    def _validate_mutation(self, a, b, directed, replacing):
        """Hook for subclasses; raise to reject the mutation before it happens."""

    def copy(self):
        g = type(self).__new__(type(self))
        LabelledGraph.__init__(g, self.nodes)
        g._edges = {k: [e[0], e[1], e[2], dict(e[3])] for k, e in self._edges.items()}
        return g

    # -- queries -----------------------------------------------------------

    @property
    def nodes(self) -> list[str]:
        return list(self._nodes)

    def __contains__(self, node) -> bool:
        return node in self._nodes

    def __len__(self) -> int:
        return len(self._nodes)

    def edges(self) -> list[tuple[str, str, str]]:
        """``(a, b, mark)`` triples; for directed edges ``a`` is the tail."""
        return [(e[0], e[1], DIRECTED if e[2] else UNDIRECTED) for e in self._edges.values()]

    def edge_attrs(self, a: str, b: str) -> dict:
        return self._edge(a, b)[3]

    def _edge(self, a, b):
        try:
            return self._edges[frozenset((a, b))]
        except KeyError:
            raise GraphError(f"no edge between {a!r} and {b!r}") from None

    @property
    def n_edges(self) -> int:
        return len(self._edges)

    def is_adjacent(self, a: str, b: str) -> bool:
        return frozenset((a, b)) in self._edges

    def has_directed(self, a: str, b: str) -> bool:
        e = self._edges.get(frozenset((a, b)))
        return e is not None and e[2] and e[0] == a

    def has_undirected(self, a: str, b: str) -> bool:
        e = self._edges.get(frozenset((a, b)))
        return e is not None and not e[2]

    def mark(self, a: str, b: str) -> tuple[str, str, str] | None:
        """Canonical mark of the pair, or ``None`` when not adjacent."""
        e = self._edges.get(frozenset((a, b)))
        if e is None:
            return None
        if e[2]:
            return (e[0], e[1], DIRECTED)
        return (*sorted((e[0], e[1])), UNDIRECTED)

    def _require(self, node):
        if node not in self._nodes:
            raise GraphError(f"unknown node {node!r}")

    def adjacent(self, node: str) -> list[str]:
        self._require(node)
        return [(e[1] if e[0] == node else e[0]) for k, e in self._edges.items() if node in k]

    def parents(self, node: str) -> list[str]:
        self._require(node)
        return [e[0] for e in self._edges.values() if e[2] and e[1] == node]

    def children(self, node: str) -> list[str]:
        self._require(node)
        return [e[1] for e in self._edges.values() if e[2] and e[0] == node]

    def neighbors(self, node: str) -> list[str]:
        """Nodes joined to ``node`` by an undirected edge."""
        self._require(node)
        return [(e[1] if e[0] == node else e[0]) for k, e in self._edges.items() if node in k and not e[2]]

    def skeleton(self) -> "LabelledGraph":
        g = LabelledGraph(self.nodes)
        for a, b, _ in self.edges():
            g.add_edge(a, b, **self.edge_attrs(a, b))
        return g

    def skeleton_pairs(self) -> set[frozenset]:
        return set(self._edges)

    def directed_is_acyclic(self) -> bool:
        children = {v: [] for v in self._nodes}
        indeg = {v: 0 for v in self._nodes}
        for a, b, mark in self.edges():
            if mark == DIRECTED:
                children[a].append(b)
                indeg[b] += 1
        stack = [v for v, d in indeg.items() if d == 0]
        seen = 0
        while stack:
            v = stack.pop()
            seen += 1
            for c in children[v]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    stack.append(c)
        return seen == len(self._nodes)

    def has_directed_path(self, src: str, dst: str) -> bool:
        stack, seen = [src], {src}
        while stack:
            v = stack.pop()
            for c in self.children(v):
                if c == dst:
                    return True
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        return False

    def __eq__(self, other):
        if not isinstance(other, LabelledGraph):
            return NotImplemented
        if set(self._nodes) != set(other._nodes) or set(self._edges) != set(other._edges):
            return False
        return all(self.mark(*tuple(k)) == other.mark(*tuple(k)) for k in self._edges)

    __hash__ = None

    def __repr__(self):
        parts = [f"{a}->{b}" if m == DIRECTED else f"{a}-{b}" for a, b, m in self.edges()]
        return f"{type(self).__name__}(nodes={self.nodes}, edges=[{', '.join(parts)}])"


class Pdag(LabelledGraph):
    """Partially directed graph whose directed part stays acyclic."""

    def _validate_mutation(self, a, b, directed, replacing):
        if directed and _path_ignoring(self, b, a, replacing):
            raise GraphError(f"orienting {a!r} -> {b!r} would create a directed cycle")


class Dag(LabelledGraph):
    """Directed acyclic graph; every mutation is checked for cycles."""

    def add_edge(self, a, b, directed=True, **attrs):
        super().add_edge(a, b, directed=directed, **attrs)

    def set_edge(self, a, b, directed=True):
        super().set_edge(a, b, directed=directed)

    def _validate_mutation(self, a, b, directed, replacing):
        if not directed:
            raise GraphError("a DAG cannot hold undirected edges")
        if _path_ignoring(self, b, a, replacing):
            raise GraphError(f"edge {a!r} -> {b!r} would create a directed cycle")

    def topological_order(self) -> list[str]:
        indeg = {v: len(self.parents(v)) for v in self.nodes}
        order, ready = [], [v for v in self.nodes if indeg[v] == 0]
        while ready:
            v = ready.pop(0)
            order.append(v)
            for c in self.children(v):
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
        return order


def _path_ignoring(g: LabelledGraph, src, dst, skip_key) -> bool:
    saved = g._edges.pop(skip_key) if skip_key is not None else None
    try:
        return g.has_directed_path(src, dst)
    finally:
        if saved is not None:
            g._edges[skip_key] = saved


def _parse_mark(mark) -> bool:
    if mark in (DIRECTED, "->", True):
        return True
    if mark in (UNDIRECTED, "-", "--", False):
        return False
    raise GraphError(f"unknown edge mark {mark!r}")


# -- Markov blankets -----------------------------------------------------------


def markov_blanket_of(g: LabelledGraph, target: str) -> set[str]:
    """Parents, children and co-parents of ``target`` in a DAG."""
    if target not in g:
        raise GraphError(f"unknown node {target!r}")
    children = g.children(target)
    blanket = set(g.parents(target)) | set(children)
    for c in children:
        blanket.update(g.parents(c))
    blanket.discard(target)
    return blanket


# -- orientation -------------------------------------------------------------


def v_structures(g: LabelledGraph) -> list[tuple[str, str, str]]:
    """Unshielded colliders ``a -> c <- b`` of ``g`` with ``a < b`` by name."""
    out = []
    for c in g.nodes:
        pa = sorted(g.parents(c))
        for a, b in combinations(pa, 2):
            if not g.is_adjacent(a, b):
                out.append((a, c, b))
    return out


def _meek_pass(g: Pdag, strict: bool = True, blocked: set | None = None) -> bool:
    changed = False
    for a, b, mark in list(g.edges()):
        if mark == DIRECTED:
            continue
        for x, y in ((a, b), (b, a)):
            if not g.has_undirected(x, y):
                break
            if _should_orient(g, x, y):
                try:
                    g.set_edge(x, y, directed=True)
                except GraphError:
                    if strict:
                        raise
                    blocked.add((x, y))
                    continue
                changed = True
                break
    return changed


def _should_orient(g: Pdag, x: str, y: str) -> bool:
    """True when one of the three propagation rules forces ``x -> y``."""
    # rule 1: w -> x - y with w, y nonadjacent
    for w in g.parents(x):
        if not g.is_adjacent(w, y):
            return True
    # rule 2: x -> w -> y
    for w in g.children(x):
        if g.has_directed(w, y):
            return True
    # rule 3: x - w1 -> y, x - w2 -> y, w1 and w2 nonadjacent
    cands = [w for w in g.neighbors(x) if g.has_directed(w, y)]
    for w1, w2 in combinations(cands, 2):
        if not g.is_adjacent(w1, w2):
            return True
    return False


def orient_cpdag(skeleton: LabelledGraph, v_structures: Sequence[tuple[str, str, str]] = (),
                 strict: bool = True, skipped: list | None = None) -> Pdag:
    """Orient colliders, then close under the three propagation rules.

    Existing directed edges of ``skeleton`` are kept. A collider set demanding
    both ``a -> c`` and ``c -> a``, or orientations that close a directed
    cycle, raises :class:`GraphError`. With ``strict=False`` a propagated
    orientation that would close a cycle is skipped instead, leaving the
    edge undirected and is appended to ``skipped`` when given; edges are
    visited in insertion order.
    """
    g = Pdag(skeleton.nodes)
    for a, b, mark in skeleton.edges():
        g.add_edge(a, b, **skeleton.edge_attrs(a, b))
    demanded: dict[frozenset, tuple[str, str]] = {}
    for a, b, mark in skeleton.edges():
        if mark == DIRECTED:
            demanded[frozenset((a, b))] = (a, b)
    for triple in v_structures:
        a, c, b = triple
        for tail in (a, b):
            if not skeleton.is_adjacent(tail, c):
                raise GraphError(f"collider {triple}: edge {tail!r} - {c!r} not in skeleton")
            key = frozenset((tail, c))
            prev = demanded.get(key)
            if prev is not None and prev != (tail, c):
                raise GraphError(
                    f"contradictory orientations: {prev[0]!r} -> {prev[1]!r} and {tail!r} -> {c!r}"
                )
            demanded[key] = (tail, c)
    for tail, head in demanded.values():
        if not g.has_directed(tail, head):
            g.set_edge(tail, head, directed=True)
    blocked: set = set()
    while _meek_pass(g, strict, blocked):
        pass
    if skipped is not None:
        skipped.extend(sorted(blocked))
    return g


def dag_to_cpdag(dag: LabelledGraph) -> Pdag:
    """Completed partially directed graph of the Markov equivalence class of ``dag``."""
    return orient_cpdag(dag.skeleton(), v_structures(dag))


# -- distance -------------------------------------------------------------------


def shd(g1: LabelledGraph, g2: LabelledGraph) -> int:
    """Structural Hamming distance; a reversal or a mark change counts once."""
    if set(g1.nodes) != set(g2.nodes):
        raise GraphError("structural Hamming distance needs identical node sets")
    dist = 0
    for key in g1.skeleton_pairs() | g2.skeleton_pairs():
        a, b = tuple(key)
        if g1.mark(a, b) != g2.mark(a, b):
            dist += 1
    return dist


def skeleton_precision_recall(learned: LabelledGraph, truth: LabelledGraph) -> tuple[float, float]:
    """Adjacency precision and recall; an empty denominator scores 1.0."""
    est, true = learned.skeleton_pairs(), truth.skeleton_pairs()
    tp = len(est & true)
    precision = tp / len(est) if est else 1.0
    recall = tp / len(true) if true else 1.0
    return precision, recall


# -- serialization -------------------------------------------------------------


def _fmt_attr(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _dot_id(name: str) -> str:
    return '"' + name.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(g: LabelledGraph, undirected: bool = False, name: str = "G") -> str:
    lines = [f"digraph {name} {{"]
    for node in g.nodes:
        lines.append(f"  {_dot_id(node)};")
    for a, b, mark in g.edges():
        attrs = []
        if mark == UNDIRECTED or undirected:
            attrs.append("dir=none")
        for key, val in sorted(g.edge_attrs(a, b).items()):
            attrs.append(f'{key}="{_fmt_attr(val)}"')
        suffix = f" [{', '.join(attrs)}]" if attrs else ""
        lines.append(f"  {_dot_id(a)} -> {_dot_id(b)}{suffix};")
    lines.append("}")
    return "\n".join(lines) + "\n"


_DOT_ID = r'"((?:[^"\\]|\\.)*)"'
_DOT_NODE = re.compile(rf"^\s*{_DOT_ID}\s*;\s*$")
_DOT_EDGE = re.compile(rf"^\s*{_DOT_ID}\s*->\s*{_DOT_ID}\s*(?:\[(.*)\])?\s*;\s*$")
_DOT_ATTR = re.compile(r'(\w+)\s*=\s*(?:"((?:[^"\\]|\\.)*)"|(\w+))')


def _unquote(s: str) -> str:
    return re.sub(r"\\(.)", r"\1", s)


def _attr_value(text: str):
    try:
        return float(text)
    except ValueError:
        return text


def parse_dot(text: str) -> LabelledGraph:
    """Parse the DOT subset written by :func:`to_dot`."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not re.match(r"^\s*digraph\s+\w*\s*\{\s*$", lines[0]) or lines[-1].strip() != "}":
        raise GraphError("not a DOT digraph document")
    g = LabelledGraph()
    for ln in lines[1:-1]:
        m = _DOT_NODE.match(ln)
        if m:
            g.add_node(_unquote(m.group(1)))
            continue
        m = _DOT_EDGE.match(ln)
        if not m:
            raise GraphError(f"unsupported DOT statement: {ln.strip()!r}")
        a, b = _unquote(m.group(1)), _unquote(m.group(2))
        directed, attrs = True, {}
        for key, quoted, bare in _DOT_ATTR.findall(m.group(3) or ""):
            val = _unquote(quoted) if quoted or not bare else bare
            if key == "dir" and val == "none":
                directed = False
            else:
                attrs[key] = _attr_value(val)
        g.add_edge(a, b, directed=directed, **attrs)
    return g


def to_graphml(g: LabelledGraph, undirected: bool = False) -> str:
    keys = sorted({k for a, b, _ in g.edges() for k in g.edge_attrs(a, b)})
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<graphml xmlns="http://graphml.graphdrawing.org/xmlns">',
    ]
    for key in keys:
        lines.append(f'  <key id={quoteattr(key)} for="edge" attr.name={quoteattr(key)} attr.type="string"/>')
    lines.append('  <graph id="G" edgedefault="directed">')
    for node in g.nodes:
        lines.append(f"    <node id={quoteattr(node)}/>")
    for i, (a, b, mark) in enumerate(g.edges()):
        directed = "false" if (mark == UNDIRECTED or undirected) else "true"
        head = f'    <edge id="e{i}" source={quoteattr(a)} target={quoteattr(b)} directed="{directed}"'
        attrs = g.edge_attrs(a, b)
        if not attrs:
            lines.append(head + "/>")
            continue
        lines.append(head + ">")
        for key in sorted(attrs):
            lines.append(f"      <data key={quoteattr(key)}>{escape(_fmt_attr(attrs[key]))}</data>")
        lines.append("    </edge>")
    lines.append("  </graph>")
    lines.append("</graphml>")
    return "\n".join(lines) + "\n"


def graph_to_dict(g: LabelledGraph) -> dict:
    edges = []
    for a, b, mark in g.edges():
        entry = {"from": a, "to": b, "mark": mark}
        entry.update(g.edge_attrs(a, b))
        edges.append(entry)
    return {"nodes": g.nodes, "edges": edges}


def graph_from_dict(obj: dict) -> LabelledGraph:
    try:
        g = LabelledGraph(obj["nodes"])
        for e in obj["edges"]:
            attrs = {k: v for k, v in e.items() if k not in ("from", "to", "mark")}
            g.add_edge(e["from"], e["to"], directed=_parse_mark(e.get("mark", UNDIRECTED)), **attrs)
    except (KeyError, TypeError) as exc:
        raise GraphError(f"malformed graph JSON: {exc}") from None
    return g


def to_json(g: LabelledGraph) -> str:
    return json.dumps(graph_to_dict(g), indent=2) + "\n"


def from_json(text: str) -> LabelledGraph:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphError(f"malformed graph JSON: {exc}") from None
    return graph_from_dict(obj)


def export_graph(g: LabelledGraph, format: str = "dot", undirected: bool = False) -> str:
    """Render ``g`` as ``dot``, ``graphml`` or ``json`` text.

    With ``undirected`` every edge is written without direction, for
    presenting learned gene-gene links as chain-graph style undirected edges.
    """
    if format == "dot":
        return to_dot(g, undirected=undirected)
    if format == "graphml":
        return to_graphml(g, undirected=undirected)
    if format == "json":
        if undirected:
            g = g.skeleton()
        return to_json(g)
    raise GraphError(f"unknown graph format {format!r}")


def as_dag(g: LabelledGraph) -> Dag:
    dag = Dag(g.nodes)
    for a, b, mark in g.edges():
        if mark != DIRECTED:
            raise GraphError(f"edge {a!r} - {b!r} is undirected")
        dag.add_edge(a, b, **g.edge_attrs(a, b))
    return dag
