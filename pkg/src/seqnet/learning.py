"""Constraint-based structure learning: PC-stable and grow/shrink Markov blankets."""

import json
import warnings
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Mapping, NamedTuple, Sequence

from ._parallel import parallel_map
from .citests import TESTS, TestResult, check_regime, ci_test
from .data import Dataset
from .errors import (ConfigError, DataError, GraphError, SeqnetWarning, UntestableError,
                     UntestableWarning)
from .graphs import LabelledGraph, Pdag, orient_cpdag

SYMMETRY_RULES = ("AND", "OR")
ASSEMBLY_ORDERS = ("correct-first", "assemble-first")
CONFLICT_POLICIES = ("raise", "skip")


@dataclass(frozen=True)
class LearnConfig:
    test: str = "fisher_z"
    alpha: float = 0.05
    max_cond_size: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.test not in TESTS:
            raise ConfigError(f"unknown test {self.test!r}; choose from {sorted(TESTS)}")
        if not 0.0 < float(self.alpha) < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if int(self.max_cond_size) != self.max_cond_size or self.max_cond_size < 0:
            raise ConfigError(f"max_cond_size must be a non-negative integer, got {self.max_cond_size}")


@dataclass(frozen=True)
class UntestableRecord:
    """A test that could not be carried out; kept in the log next to real results."""

    test_name: str
    x: str
    y: str
    cond: tuple
    reason: str

    def to_dict(self) -> dict:
        return {"test": self.test_name, "x": self.x, "y": self.y, "cond": list(self.cond),
                "untestable": self.reason}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def log_to_jsonl(log: Iterable) -> str:
    return "".join(entry.to_json() + "\n" for entry in log)


class SepsetMap:
    """Separating sets keyed by unordered node pair."""

    def __init__(self, items: Mapping | Iterable = ()):
        self._sets: dict[frozenset, tuple] = {}
        pairs = items.items() if isinstance(items, Mapping) else items
        for pair, sepset in pairs:
            a, b = tuple(pair)
            self[a, b] = sepset

    def __setitem__(self, pair, sepset):
        a, b = pair
        if a == b:
            raise GraphError("a separating set needs two distinct nodes")
        self._sets[frozenset((a, b))] = tuple(sorted(sepset))

    def __getitem__(self, pair) -> tuple:
        return self._sets[frozenset(pair)]

    def __contains__(self, pair) -> bool:
        return frozenset(pair) in self._sets

    def __len__(self):
        return len(self._sets)

    def get(self, a, b, default=None):
        return self._sets.get(frozenset((a, b)), default)

    def items(self):
        for key in sorted(self._sets, key=sorted):
            yield tuple(sorted(key)), self._sets[key]

    def to_dict(self) -> dict:
        return {f"{a}|{b}": list(s) for (a, b), s in self.items()}

    def __eq__(self, other):
        return isinstance(other, SepsetMap) and self._sets == other._sets

    def __repr__(self):
        return f"SepsetMap({dict(self.items())})"


class PCResult(NamedTuple):
    graph: Pdag
    sepsets: SepsetMap
    test_log: list


def _run_test(cfg: LearnConfig, d: Dataset, x: str, y: str, cond: tuple):
    try:
        return ci_test(cfg.test, d, x, y, cond)
    except UntestableError as exc:
        return UntestableRecord(cfg.test, x, y, cond, str(exc))


def _warn_untestable(records: list[UntestableRecord], what: str) -> None:
    if records:
        first = records[0]
        warnings.warn(
            f"{len(records)} untestable {what} test(s) skipped, e.g. {first.x} vs {first.y} "
            f"given {list(first.cond)}: {first.reason}",
            UntestableWarning,
            stacklevel=3,
        )


def _candidate_sets(adj: Mapping[str, frozenset], x: str, y: str, size: int):
    seen = set()
    for source, other in ((x, y), (y, x)):
        pool = sorted(adj[source] - {other})
        for subset in combinations(pool, size):
            if subset not in seen:
                seen.add(subset)
                yield subset


def effective_max_cond(cfg: LearnConfig, p: int) -> int:
    return max(0, min(int(cfg.max_cond_size), p - 2))


def pc_skeleton(d: Dataset, cfg: LearnConfig, threads: int | None = 1):
    """Level-wise edge removal against frozen per-level neighbour snapshots.

    Node pairs and conditioning subsets are visited in name order, so the
    outcome does not depend on column order.
    """
    nodes = sorted(d.names)
    adj = {v: set(nodes) - {v} for v in nodes}
    sepsets = SepsetMap()
    log: list = []
    untestable: list = []
    for level in range(effective_max_cond(cfg, len(nodes)) + 1):
        snapshot = {v: frozenset(adj[v]) for v in nodes}
        pairs = [(x, y) for x, y in combinations(nodes, 2) if y in snapshot[x]
                 and max(len(snapshot[x]), len(snapshot[y])) - 1 >= level]
        if not pairs:
            break

        def job(pair, level=level, snapshot=snapshot):
            x, y = pair
            entries = []
            for cond in _candidate_sets(snapshot, x, y, level):
                res = _run_test(cfg, d, x, y, cond)
                entries.append(res)
                if isinstance(res, TestResult) and res.p_value >= cfg.alpha:
                    return entries, cond
            return entries, None

        for (x, y), (entries, sep) in zip(pairs, parallel_map(job, pairs, threads)):
            log.extend(entries)
            untestable.extend(e for e in entries if isinstance(e, UntestableRecord))
            if sep is not None:
                adj[x].discard(y)
                adj[y].discard(x)
                sepsets[x, y] = sep
    skeleton = LabelledGraph(d.names)
    for x, y in combinations(nodes, 2):
        if y in adj[x]:
            skeleton.add_edge(x, y)
    return skeleton, sepsets, log, untestable


def collider_candidates(skeleton: LabelledGraph, sepsets: SepsetMap) -> list[tuple[str, str, str]]:
    """Unshielded triples ``a - c - b`` whose middle node is outside ``sepset(a, b)``."""
    out = []
    for c in sorted(skeleton.nodes):
        for a, b in combinations(sorted(skeleton.adjacent(c)), 2):
            if not skeleton.is_adjacent(a, b) and c not in sepsets.get(a, b, ()):
                out.append((a, c, b))
    return out


def consistent_colliders(skeleton: LabelledGraph, triples: Sequence[tuple[str, str, str]]):
    """Accept colliders in order, skipping any that reverses or cycles an accepted one."""
    g = Pdag(skeleton.nodes)
    for a, b, _ in skeleton.edges():
        g.add_edge(a, b)
    accepted, rejected = [], []
    for a, c, b in triples:
        if g.has_directed(c, a) or g.has_directed(c, b):
            rejected.append((a, c, b))
            continue
        trial = g.copy()
        try:
            for tail in (a, b):
                if not trial.has_directed(tail, c):
                    trial.set_edge(tail, c, directed=True)
        except GraphError:
            rejected.append((a, c, b))
            continue
        g = trial
        accepted.append((a, c, b))
    return accepted, rejected


def pc_learn(d: Dataset, cfg: LearnConfig, threads: int | None = 1, conflicts: str = "raise") -> PCResult:
    """PC-stable: skeleton, sepset colliders, then orientation closure.

    With ``conflicts="raise"`` contradictory colliders, or propagation that
    would close a directed cycle, raise :class:`GraphError`. ``"skip"``
    accepts colliders first-come in name order, leaves cycle-closing edges
    undirected and warns instead.
    """
    if conflicts not in CONFLICT_POLICIES:
        raise ConfigError(f"conflicts must be one of {CONFLICT_POLICIES}, got {conflicts!r}")
    check_regime(cfg.test, d, d.names)
    skeleton, sepsets, log, untestable = pc_skeleton(d, cfg, threads)
    _warn_untestable(untestable, "skeleton")
    triples = collider_candidates(skeleton, sepsets)
    if conflicts == "raise":
        try:
            return PCResult(orient_cpdag(skeleton, triples), sepsets, log)
        except GraphError as exc:
            raise GraphError(f"{exc}; the data or alpha produce inconsistent colliders "
                             "(use conflicts='skip' to arbitrate)") from None
    accepted, rejected = consistent_colliders(skeleton, triples)
    if rejected:
        warnings.warn(f"{len(rejected)} conflicting collider(s) ignored, first {rejected[0]}",
                      SeqnetWarning, stacklevel=2)
    skipped: list = []
    graph = orient_cpdag(skeleton, accepted, strict=False, skipped=skipped)
    if skipped:
        warnings.warn(f"{len(skipped)} propagated orientation(s) would close a cycle and were left undirected",
                      SeqnetWarning, stacklevel=2)
    return PCResult(graph, sepsets, log)


# -- Markov blankets -------------------------------------------------------------


def _check_target(d: Dataset, target: str) -> None:
    if target not in d:
        raise DataError(f"unknown target column {target!r}")


def learn_markov_blanket(d: Dataset, target: str, cfg: LearnConfig, threads: int | None = 1,
                         log: list | None = None) -> set[str]:
    """Grow/shrink blanket of ``target``.

    Grow adds the candidate with the smallest p-value below ``alpha`` given
    the current blanket until none is left; shrink then drops the member with
    the largest p-value at or above ``alpha`` until none is. Ties go to the
    earlier column. Untestable candidates are not added and untestable
    members are kept.
    """
    _check_target(d, target)
    check_regime(cfg.test, d, d.names, targets=(target,))
    order = {name: j for j, name in enumerate(d.names)}
    log = [] if log is None else log
    untestable: list = []
    blanket: list[str] = []

    def test_all(names, cond_for):
        results = parallel_map(lambda v: _run_test(cfg, d, v, target, cond_for(v)), names, threads)
        log.extend(results)
        untestable.extend(r for r in results if isinstance(r, UntestableRecord))
        return [(v, r.p_value) for v, r in zip(names, results) if isinstance(r, TestResult)]

    while True:
        cands = [v for v in d.names if v != target and v not in blanket]
        cond = tuple(sorted(blanket, key=order.get))
        scored = [(p, order[v], v) for v, p in test_all(cands, lambda v: cond) if p < cfg.alpha]
        if not scored:
            break
        blanket.append(min(scored)[2])

    while blanket:
        members = sorted(blanket, key=order.get)
        scored = test_all(members, lambda v: tuple(m for m in members if m != v))
        removable = [(-p, order[v], v) for v, p in scored if p >= cfg.alpha]
        if not removable:
            break
        blanket.remove(min(removable)[2])

    _warn_untestable(untestable, f"blanket ({target})")
    return set(blanket)


def learn_all_blankets(d: Dataset, cfg: LearnConfig, threads: int | None = 1,
                       targets: Sequence[str] | None = None) -> dict[str, set[str]]:
    targets = list(d.names if targets is None else targets)
    return {t: learn_markov_blanket(d, t, cfg, threads) for t in targets}


def _check_blankets(blankets: Mapping[str, Iterable[str]], rule: str) -> None:
    if rule not in SYMMETRY_RULES:
        raise ConfigError(f"rule must be one of {SYMMETRY_RULES}, got {rule!r}")
    for v, members in blankets.items():
        for u in members:
            if u not in blankets:
                raise ConfigError(f"blanket of {v!r} names {u!r}, which has no blanket of its own")
            if u == v:
                raise ConfigError(f"{v!r} is listed in its own blanket")


def symmetric_mb_correction(blankets: Mapping[str, Iterable[str]], rule: str = "AND") -> dict[str, set[str]]:
    """AND keeps ``y`` in ``MB(x)`` only when ``x`` is in ``MB(y)``; OR adds the missing direction."""
    _check_blankets(blankets, rule)
    sets = {v: set(m) for v, m in blankets.items()}
    if rule == "AND":
        return {v: {u for u in m if v in sets[u]} for v, m in sets.items()}
    out = {v: set(m) for v, m in sets.items()}
    for v, m in sets.items():
        for u in m:
            out[u].add(v)
    return out


def blanket_network(blankets: Mapping[str, Iterable[str]], rule: str = "AND",
                    order: str = "correct-first") -> LabelledGraph:
    """Undirected network with ``x - y`` whenever the corrected blankets pair them.

    ``correct-first`` symmetrises the blankets and then reads off edges;
    ``assemble-first`` collects directed claims and applies the rule per
    pair. Both give the same graph.
    """
    if order not in ASSEMBLY_ORDERS:
        raise ConfigError(f"order must be one of {ASSEMBLY_ORDERS}, got {order!r}")
    _check_blankets(blankets, rule)
    g = LabelledGraph(blankets)
    names = list(blankets)
    if order == "correct-first":
        sets = symmetric_mb_correction(blankets, rule)
        for a, b in combinations(names, 2):
            if b in sets[a]:
                g.add_edge(a, b)
    else:
        claims = {(v, u) for v, m in blankets.items() for u in m}
        join = all if rule == "AND" else any
        for a, b in combinations(names, 2):
            if join(((a, b) in claims, (b, a) in claims)):
                g.add_edge(a, b)
    return g
