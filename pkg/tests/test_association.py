
import numpy as np
import pytest
from scipy import linalg, stats

from seqnet.association import (
    CorrelationMatrix,
    correlation_matrix,
    gene_association_network,
    relevance_network,
    shrinkage_intensity,
    shrinkage_partial_correlations,
)
from seqnet.data import dataset_from_arrays
from seqnet.errors import DataError


def gaussian_dataset(rng, n, p=None, cov=None):
    if cov is None:
        X = rng.normal(size=(n, p))
    else:
        X = rng.multivariate_normal(np.zeros(len(cov)), cov, size=n)
    return dataset_from_arrays({f"G{j}": X[:, j] for j in range(X.shape[1])})


def intensity_oracle(X, clamp=True):
    """Variance-to-signal ratio written out element by element."""
    n, p = X.shape
    Z = (X - X.mean(0)) / X.std(0, ddof=1)
    num = den = 0.0
    for i in range(p):
        for j in range(p):
            if i == j:
                continue
            w = Z[:, i] * Z[:, j]
            r = w.sum() / (n - 1)
            var = n / (n - 1) ** 3 * np.sum((w - w.mean()) ** 2)
            num += var
            den += r * r
    return min(1.0, max(0.0, num / den)) if clamp else num / den


def test_relevance_threshold_extremes():
    rng = np.random.default_rng(0)
    d = gaussian_dataset(rng, 50, 5)
    assert len(relevance_network(d, 0.0).edges()) == 10
    r = correlation_matrix(d).values
    top = np.abs(r[np.triu_indices(5, 1)]).max()
    assert relevance_network(d, min(1.0, top + 1e-6)).edges() == []


def test_duplicated_column_survives_threshold_one():
    rng = np.random.default_rng(1)
    x = rng.normal(size=30)
    d = dataset_from_arrays({"a": x, "b": x.copy(), "c": rng.normal(size=30)})
    g = relevance_network(d, 1.0)
    assert [(a, b) for a, b, _ in g.edges()] == [("a", "b")]
    assert g.edge_attrs("a", "b")["weight"] == pytest.approx(1.0)


def test_relevance_network_errors():
    d = dataset_from_arrays({"a": [1.0, 2.0, 3.0], "b": [1.0, 1.0, 1.0]})
    with pytest.raises(DataError, match="constant"):
        relevance_network(d, 0.5)
    with pytest.raises(DataError):
        relevance_network(dataset_from_arrays({"a": [1.0, 2.0, 3.0]}), 0.1)
    with pytest.raises(DataError):
        relevance_network(dataset_from_arrays({"a": [1.0, 2.0], "b": [2.0, 1.0]}), 0.1)
    with pytest.raises(DataError):
        relevance_network(gaussian_dataset(np.random.default_rng(0), 10, 2), 1.5)


@pytest.mark.parametrize("seed", range(100))
def test_relevance_threshold_monotone(seed):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(2, 8))
    cov = np.corrcoef(rng.normal(size=(p, p + 2)))
    d = gaussian_dataset(rng, int(rng.integers(5, 60)), cov=cov)
    t1, t2 = np.sort(rng.random(2))
    e1 = {frozenset(e[:2]) for e in relevance_network(d, t1).edges()}
    e2 = {frozenset(e[:2]) for e in relevance_network(d, t2).edges()}
    assert e2 <= e1


def test_correlation_matrix_invariants():
    cm = correlation_matrix(gaussian_dataset(np.random.default_rng(2), 40, 6))
    assert np.array_equal(np.diag(cm.values), np.ones(6))
    assert np.abs(cm.values - cm.values.T).max() <= 1e-12
    with pytest.raises(DataError):
        CorrelationMatrix(("a", "b"), [[1, 0.5], [0.4, 1]])
    text = cm.to_csv().splitlines()
    assert text[0] == ",G0,G1,G2,G3,G4,G5" and text[1].startswith("G0,1.0,")


@pytest.mark.parametrize("seed", range(5))
def test_intensity_matches_elementwise_oracle(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(25, 6)) @ rng.normal(size=(6, 6))
    Z = (X - X.mean(0)) / X.std(0, ddof=1)
    assert shrinkage_intensity(Z) == pytest.approx(intensity_oracle(X), rel=1e-10)


def test_intensity_is_clamped():
    # independent columns at small n push the raw ratio above 1
    rng = np.random.default_rng(3)
    for _ in range(50):
        X = rng.normal(size=(6, 8))
        if intensity_oracle(X, clamp=False) > 1:
            break
    else:
        pytest.fail("no instance with raw intensity above 1")
    est = shrinkage_partial_correlations(dataset_from_arrays({f"v{j}": X[:, j] for j in range(8)}))
    assert est.lambda_ == 1.0
    assert np.array_equal(est.partial, np.eye(8))


def test_two_variables_partial_equals_shrunk_marginal():
    rng = np.random.default_rng(4)
    x = rng.normal(size=60)
    d = dataset_from_arrays({"a": x, "b": x + rng.normal(size=60)})
    est = shrinkage_partial_correlations(d)
    r = np.corrcoef(d.column("a"), d.column("b"))[0, 1]
    assert est.partial[0, 1] == pytest.approx((1 - est.lambda_) * r, abs=1e-12)


def test_dense_sample_limit_matches_direct_inversion():
    rng = np.random.default_rng(5)
    A = rng.normal(size=(5, 5))
    d = gaussian_dataset(rng, 100_000, cov=A @ A.T + np.eye(5))
    est = shrinkage_partial_correlations(d)
    X = np.column_stack([d.column(v) for v in d.names])
    P = np.linalg.inv(np.corrcoef(X.T))
    direct = -P / np.sqrt(np.outer(np.diag(P), np.diag(P)))
    np.fill_diagonal(direct, 1.0)
    assert est.lambda_ < 0.01
    assert np.abs(est.partial - direct).max() < 1e-2


@pytest.mark.parametrize("seed", range(20))
def test_shrunk_matrix_positive_definite(seed):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(5, 15))
    d = gaussian_dataset(rng, int(rng.integers(3, p)), p)  # n < p: sample matrix singular
    est = shrinkage_partial_correlations(d)
    if est.lambda_ > 0:
        linalg.cholesky(est.shrunk)
    assert np.array_equal(np.diag(est.partial), np.ones(p))
    assert np.allclose(est.partial, est.partial.T)


def sparse_precision():
    omega = np.eye(5)
    for (i, j), v in zip([(0, 1), (1, 2), (2, 3), (1, 4)], [0.4, -0.35, 0.3, 0.35]):
        omega[i, j] = omega[j, i] = v
    assert np.all(np.linalg.eigvalsh(omega) > 0)
    return omega


def test_exact_recovery_of_sparse_precision():
    rng = np.random.default_rng(6)
    omega = sparse_precision()
    d = gaussian_dataset(rng, 20_000, cov=np.linalg.inv(omega))
    g = gene_association_network(d, 0.01)
    truth = {frozenset((f"G{i}", f"G{j}")) for i, j in zip(*np.nonzero(np.triu(omega, 1)))}
    assert g.skeleton_pairs() == truth
    assert all(g.edge_attrs(a, b)["p"] < 0.01 for a, b, _ in g.edges())


def test_independent_columns_false_edge_rate():
    pairs = edges = 0
    for seed in range(20):
        d = gaussian_dataset(np.random.default_rng(100 + seed), 2000, 10)
        edges += len(gene_association_network(d, 0.01).edges())
        pairs += 45
    assert edges <= stats.binom.ppf(0.995, pairs, 0.01)


def test_vanishing_alpha_gives_empty_graph():
    d = gaussian_dataset(np.random.default_rng(7), 500, 6)
    assert gene_association_network(d, 5e-324).edges() == []
    with pytest.raises(DataError):
        gene_association_network(d, 0.0)


def test_bonferroni_is_subset():
    rng = np.random.default_rng(8)
    A = rng.normal(size=(8, 8)) * (rng.random((8, 8)) < 0.3)
    d = gaussian_dataset(rng, 300, cov=A @ A.T + np.eye(8))
    raw = gene_association_network(d, 0.05).skeleton_pairs()
    bonf = gene_association_network(d, 0.05, bonferroni=True).skeleton_pairs()
    assert bonf <= raw


def test_small_n_refused():
    d = gaussian_dataset(np.random.default_rng(9), 6, 6)
    with pytest.raises(DataError, match="relevance network"):
        gene_association_network(d, 0.05)


def test_column_scaling_invariance():
    rng = np.random.default_rng(10)
    A = rng.normal(size=(6, 6))
    d = gaussian_dataset(rng, 400, cov=A @ A.T + np.eye(6))
    scaled = dataset_from_arrays({v: d.column(v) * (3.0 + k) for k, v in enumerate(d.names)})
    assert relevance_network(d, 0.2).skeleton_pairs() == relevance_network(scaled, 0.2).skeleton_pairs()
    assert gene_association_network(d, 0.01).skeleton_pairs() == gene_association_network(scaled, 0.01).skeleton_pairs()


def test_confounder_removes_mediated_edge():
    rng = np.random.default_rng(11)
    z = rng.normal(size=3000)
    d = dataset_from_arrays({"z": z, "a": z + rng.normal(size=3000), "b": z + rng.normal(size=3000)})
    rel = relevance_network(d, 0.0).skeleton_pairs()
    ggm = gene_association_network(d, 0.01).skeleton_pairs()
    assert ggm <= rel and frozenset("ab") in rel and frozenset("ab") not in ggm
