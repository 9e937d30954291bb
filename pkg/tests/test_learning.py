import warnings
from itertools import combinations

import numpy as np
import pytest

from seqnet.citests import TestResult, ci_test
from seqnet.data import dataset_from_arrays
from seqnet.errors import ConfigError, DataError, GraphError, SeqnetWarning, UntestableWarning
from seqnet.graphs import Dag, markov_blanket_of
from seqnet.learning import (
    LearnConfig,
    SepsetMap,
    UntestableRecord,
    blanket_network,
    learn_all_blankets,
    learn_markov_blanket,
    log_to_jsonl,
    pc_learn,
    symmetric_mb_correction,
)
from seqnet.simulation import simulate_dag, simulate_discrete, simulate_gaussian

FZ = LearnConfig("fisher_z", 0.01)


def dag(nodes, edges):
    g = Dag(nodes)
    for a, b in edges:
        g.add_edge(a, b)
    return g


@pytest.mark.parametrize("kwargs", [{"alpha": 0.0}, {"alpha": 1.0}, {"alpha": -0.2},
                                    {"max_cond_size": -1}, {"max_cond_size": 1.5}, {"test": "t"}])
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        LearnConfig(**kwargs)


def test_independent_columns_give_empty_graph():
    rng = np.random.default_rng(0)
    d = dataset_from_arrays({f"V{j}": rng.normal(size=5000) for j in range(5)})
    res = pc_learn(d, FZ)
    assert len(res.graph.edges()) <= 1


def test_chain_skeleton_and_sepset():
    g = dag(["X1", "X2", "X3"], [("X1", "X2"), ("X2", "X3")])
    res = pc_learn(simulate_gaussian(g, 10000, seed=1), FZ)
    assert res.graph.skeleton_pairs() == {frozenset(("X1", "X2")), frozenset(("X2", "X3"))}
    assert res.sepsets["X1", "X3"] == ("X2",)
    assert ("X1", "X2") not in res.sepsets
    assert all(m == "undirected" for _, _, m in res.graph.edges())


def test_collider_is_oriented():
    g = dag(["X1", "X2", "X3"], [("X1", "X3"), ("X2", "X3")])
    res = pc_learn(simulate_gaussian(g, 10000, seed=2), FZ)
    assert res.graph.has_directed("X1", "X3") and res.graph.has_directed("X2", "X3")
    assert res.sepsets["X1", "X2"] == ()


def test_absent_edges_have_logged_separating_test():
    truth = simulate_dag(7, 2.0, seed=3)
    d = simulate_gaussian(truth, 2000, seed=3)
    res = pc_learn(d, LearnConfig("fisher_z", 0.05))
    for a, b in combinations(d.names, 2):
        if res.graph.is_adjacent(a, b):
            assert (a, b) not in res.sepsets
            continue
        sep = res.sepsets[a, b]
        hits = [e for e in res.test_log if isinstance(e, TestResult) and {e.x, e.y} == {a, b}
                and tuple(sorted(e.cond)) == sep and e.p_value >= 0.05]
        assert hits


def test_max_cond_size_limits_levels():
    truth = simulate_dag(6, 2.5, seed=4)
    d = simulate_gaussian(truth, 1000, seed=4)
    res = pc_learn(d, LearnConfig("fisher_z", 0.05, max_cond_size=1))
    assert max(len(e.cond) for e in res.test_log) <= 1
    zero = pc_learn(d, LearnConfig("fisher_z", 0.05, max_cond_size=0))
    assert all(len(e.cond) == 0 for e in zero.test_log)
    big = pc_learn(d, LearnConfig("fisher_z", 0.05, max_cond_size=50))
    assert max(len(e.cond) for e in big.test_log) <= 4


def test_regime_mismatch_is_rejected():
    d = dataset_from_arrays({"a": [0, 1, 0, 1], "b": [1.0, 2.0, 3.0, 4.0]}, {"a": "discrete"})
    with pytest.raises(DataError):
        pc_learn(d, LearnConfig("g2", 0.05))
    with pytest.raises(DataError):
        pc_learn(d, LearnConfig("jt", 0.05))


def test_untestable_edges_retained_with_warning():
    rng = np.random.default_rng(5)
    d = dataset_from_arrays({f"V{j}": rng.normal(size=6) for j in range(6)})
    with pytest.warns(UntestableWarning):
        res = pc_learn(d, LearnConfig("fisher_z", 0.999, max_cond_size=3))
    records = [e for e in res.test_log if isinstance(e, UntestableRecord)]
    assert records and all(len(r.cond) >= 3 for r in records)
    assert '"untestable"' in log_to_jsonl(res.test_log)


def test_discrete_chain_with_g2():
    g = dag(["A", "B", "C"], [("A", "B"), ("B", "C")])
    cpts = {"A": [[0.5, 0.5]], "B": [[0.85, 0.15], [0.2, 0.8]], "C": [[0.8, 0.2], [0.25, 0.75]]}
    d = simulate_discrete(g, 5000, seed=6, cpts=cpts)
    res = pc_learn(d, LearnConfig("g2", 0.01))
    assert res.graph.skeleton_pairs() == {frozenset("AB"), frozenset("BC")}
    assert res.sepsets["A", "C"] == ("B",)


@pytest.mark.filterwarnings("ignore::seqnet.errors.SeqnetWarning")
def test_threads_do_not_change_result():
    truth = simulate_dag(8, 2.0, seed=7)
    d = simulate_gaussian(truth, 500, seed=7)
    a = pc_learn(d, LearnConfig("fisher_z", 0.05), threads=1, conflicts="skip")
    b = pc_learn(d, LearnConfig("fisher_z", 0.05), threads=6, conflicts="skip")
    assert a.graph == b.graph and a.sepsets == b.sepsets and a.test_log == b.test_log


@pytest.mark.parametrize("seed", range(100))
def test_pc_column_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(4, 8))
    truth = simulate_dag(p, float(rng.uniform(0.5, min(2.5, p - 1))), seed=seed)
    d = simulate_gaussian(truth, int(rng.integers(50, 400)), seed=seed)
    shuffled = d.select(list(rng.permutation(d.names)))
    outcomes = []
    for data in (d, shuffled):
        try:
            outcomes.append(pc_learn(data, LearnConfig("fisher_z", 0.05)))
        except GraphError as exc:
            outcomes.append(str(exc))
    a, b = outcomes
    if isinstance(a, str):
        assert a == b
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            a = pc_learn(d, LearnConfig("fisher_z", 0.05), conflicts="skip")
            b = pc_learn(shuffled, LearnConfig("fisher_z", 0.05), conflicts="skip")
    assert a.graph == b.graph
    assert a.sepsets == b.sepsets


# -- Markov blankets ---------------------------------------------------------------


def test_blanket_of_independent_target_is_empty():
    rng = np.random.default_rng(8)
    d = dataset_from_arrays({f"V{j}": rng.normal(size=5000) for j in range(6)})
    assert learn_markov_blanket(d, "V0", FZ) == set()


def test_blanket_matches_generating_dag():
    g = dag(list("ABCDEFG"), [("A", "C"), ("B", "C"), ("C", "D"), ("E", "D"), ("F", "E"), ("A", "G")])
    d = simulate_gaussian(g, 10000, seed=9)
    assert learn_markov_blanket(d, "C", FZ) == markov_blanket_of(g, "C") == {"A", "B", "D", "E"}


def test_blanket_errors():
    d = dataset_from_arrays({"a": [1.0, 2, 3, 4], "b": [2.0, 1, 4, 3]})
    with pytest.raises(DataError, match="unknown target"):
        learn_markov_blanket(d, "zz", FZ)
    with pytest.raises(ConfigError):
        learn_markov_blanket(d, "a", LearnConfig("fisher_z", 1.5))


def _shrink_passes(d, target, blanket, cfg):
    for v in blanket:
        rest = tuple(m for m in d.names if m in blanket and m != v)
        if ci_test(cfg.test, d, v, target, rest).p_value >= cfg.alpha:
            return False
    return True


@pytest.mark.parametrize("seed", range(20))
def test_blanket_survives_its_own_shrink(seed):
    truth = simulate_dag(8, 2.0, seed=100 + seed)
    d = simulate_gaussian(truth, 300, seed=100 + seed)
    cfg = LearnConfig("fisher_z", 0.05)
    for target in d.names[:3]:
        mb = learn_markov_blanket(d, target, cfg)
        assert _shrink_passes(d, target, mb, cfg)


def test_blanket_monotone_in_alpha():
    violations = []
    for seed in range(30):
        truth = simulate_dag(8, 2.0, seed=200 + seed)
        d = simulate_gaussian(truth, 300, seed=200 + seed)
        target = d.names[seed % 8]
        prev = set()
        for alpha in (0.001, 0.01, 0.05, 0.1):
            mb = learn_markov_blanket(d, target, LearnConfig("fisher_z", alpha))
            if not prev <= mb:
                violations.append((seed, alpha, prev - mb))
            prev = mb
    assert violations == []


def test_jt_blanket_with_continuous_trait():
    rng = np.random.default_rng(10)
    snps = rng.integers(0, 3, (3000, 4))
    trait = 0.4 * snps[:, 0] + 0.4 * (snps[:, 2] == 2) + rng.normal(size=3000)
    data = {f"s{j}": snps[:, j] for j in range(4)}
    data["trait"] = trait
    d = dataset_from_arrays(data, {f"s{j}": "ordinal" for j in range(4)}, {f"s{j}": ["-1", "0", "1"] for j in range(4)})
    assert learn_markov_blanket(d, "trait", LearnConfig("jt", 0.01)) == {"s0", "s2"}
    with pytest.raises(DataError):
        learn_markov_blanket(d, "s0", LearnConfig("jt", 0.01))


def test_blanket_threads_independent():
    truth = simulate_dag(10, 2.0, seed=11)
    d = simulate_gaussian(truth, 400, seed=11)
    assert learn_all_blankets(d, FZ, threads=1) == learn_all_blankets(d, FZ, threads=5)


def test_symmetry_rules_on_example():
    mb = {"A": {"B"}, "B": set(), "C": set()}
    assert symmetric_mb_correction(mb, "AND") == {"A": set(), "B": set(), "C": set()}
    assert symmetric_mb_correction(mb, "OR") == {"A": {"B"}, "B": {"A"}, "C": set()}
    sym = {"A": {"B"}, "B": {"A"}, "C": set()}
    assert symmetric_mb_correction(sym, "AND") == sym == symmetric_mb_correction(sym, "OR")


def test_symmetry_rejects_bad_input():
    with pytest.raises(ConfigError):
        symmetric_mb_correction({"A": {"Z"}}, "AND")
    with pytest.raises(ConfigError):
        symmetric_mb_correction({"A": set()}, "XOR")


@pytest.mark.parametrize("seed", range(100))
def test_symmetry_correction_is_symmetric(seed):
    rng = np.random.default_rng(seed)
    names = [f"N{i}" for i in range(int(rng.integers(2, 9)))]
    mb = {v: {u for u in names if u != v and rng.random() < 0.4} for v in names}
    for rule in ("AND", "OR"):
        out = symmetric_mb_correction(mb, rule)
        for v, u in combinations(names, 2):
            assert (u in out[v]) == (v in out[u])
        assert symmetric_mb_correction(out, rule) == out
        if rule == "AND":
            assert all(out[v] <= mb[v] for v in names)
        else:
            assert all(out[v] >= mb[v] for v in names)
        net_a = blanket_network(mb, rule, "correct-first")
        net_b = blanket_network(mb, rule, "assemble-first")
        assert net_a == net_b


def test_sepset_map_unordered_keys():
    s = SepsetMap()
    s["b", "a"] = ["z", "y"]
    assert s["a", "b"] == ("y", "z") and ("a", "b") in s and len(s) == 1
    assert s.to_dict() == {"a|b": ["y", "z"]}


def test_conflicting_colliders_abort_by_default():
    truth = simulate_dag(8, 2.0, seed=7)
    d = simulate_gaussian(truth, 500, seed=7)
    with pytest.raises(GraphError, match="inconsistent colliders"):
        pc_learn(d, LearnConfig("fisher_z", 0.05))
    with pytest.warns(SeqnetWarning, match="conflicting collider"):
        res = pc_learn(d, LearnConfig("fisher_z", 0.05), conflicts="skip")
    assert res.graph.directed_is_acyclic()
    with pytest.raises(ConfigError):
        pc_learn(d, FZ, conflicts="ignore")
