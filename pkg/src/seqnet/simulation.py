"""Synthetic data with known ground truth and the power/recovery benchmarks."""

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import optimize, stats

from ._parallel import child_rng, child_seed, parallel_map
from .citests import fisher_z_test, g2_test, jt_test
from .data import (CONTINUOUS, DISCRETE, ORDINAL, Dataset, GenotypeTable, VariableMeta,
                   dataset_from_arrays, recode_snps)
from .errors import ConfigError, SeqnetError, SeqnetWarning, UntestableError, UntestableWarning
from .graphs import Dag, dag_to_cpdag, shd, skeleton_precision_recall
from .learning import pc_learn

PATTERNS = ("linear", "dominant", "recessive")
# genetic value by copies of the major allele A: (aa, Aa, AA)
PATTERN_EFFECTS = {
    "linear": np.array([-1.0, 0.0, 1.0]),
    "dominant": np.array([0.0, 1.0, 1.0]),
    "recessive": np.array([0.0, 0.0, 1.0]),
}
POWER_TESTS = ("jt", "linear", "g2")


# -- graphs and generic samples ---------------------------------------------------


def simulate_dag(p: int, expected_degree: float, seed: int = 0) -> Dag:
    """Random DAG on ``X1..Xp``: a random order, each forward pair edged with
    probability ``expected_degree / (p - 1)``."""
    if int(p) != p or p < 1:
        raise ConfigError(f"p must be a positive integer, got {p}")
    if expected_degree < 0 or (p > 1 and expected_degree > p - 1) or (p == 1 and expected_degree > 0):
        raise ConfigError(f"expected_degree must lie in [0, p - 1], got {expected_degree}")
    rng = np.random.default_rng(seed)
    names = [f"X{i + 1}" for i in range(p)]
    g = Dag(names)
    if p == 1:
        return g
    order = rng.permutation(p)
    prob = expected_degree / (p - 1)
    draws = rng.random((p, p))
    for a in range(p):
        for b in range(a + 1, p):
            if draws[a, b] < prob:
                g.add_edge(names[order[a]], names[order[b]])
    return g


def _parent_lists(g: Dag) -> dict[str, list[str]]:
    return {v: sorted(g.parents(v)) for v in g.nodes}


def gaussian_weights(g: Dag, seed: int = 0, coef_range=(0.5, 1.0), random_sign: bool = True) -> dict:
    """Edge coefficients drawn uniformly from ``coef_range`` with a random sign."""
    lo, hi = coef_range
    if not 0 < lo <= hi:
        raise ConfigError(f"coef_range must satisfy 0 < low <= high, got {coef_range}")
    rng = np.random.default_rng(seed)
    weights = {}
    for v in g.topological_order():
        for u in sorted(g.parents(v)):
            w = rng.uniform(lo, hi)
            if random_sign and rng.random() < 0.5:
                w = -w
            weights[(u, v)] = float(w)
    return weights


def simulate_gaussian(g: Dag, n: int, seed: int = 0, coef_range=(0.5, 1.0), noise_sd: float = 1.0,
                      random_sign: bool = True, weights: Mapping | None = None) -> Dataset:
    """Linear Gaussian structural equations along ``g``; columns follow ``g.nodes``."""
    if int(n) != n or n < 1:
        raise ConfigError(f"n must be a positive integer, got {n}")
    if noise_sd <= 0:
        raise ConfigError(f"noise_sd must be positive, got {noise_sd}")
    if weights is None:
        weights = gaussian_weights(g, child_seed(seed, 0), coef_range, random_sign)
    missing = [e for e in ((a, b) for a, b, _ in g.edges()) if e not in weights]
    if missing:
        raise ConfigError(f"no weight given for edge(s) {missing}")
    noise = np.random.default_rng(child_seed(seed, 1)).normal(0.0, noise_sd, (len(g.nodes), n))
    index = {v: j for j, v in enumerate(g.nodes)}
    values = {}
    for v in g.topological_order():
        x = noise[index[v]].copy()
        for u in sorted(g.parents(v)):
            x += weights[(u, v)] * values[u]
        values[v] = x
    return dataset_from_arrays({v: values[v] for v in g.nodes})


def _level_counts(g: Dag, levels) -> dict[str, int]:
    if isinstance(levels, Mapping):
        counts = {v: int(levels[v]) for v in g.nodes}
    else:
        counts = {v: int(levels) for v in g.nodes}
    for v, k in counts.items():
        if k < 2:
            raise ConfigError(f"node {v!r} needs at least 2 levels, got {k}")
    return counts


def random_cpts(g: Dag, levels=2, dirichlet_alpha: float = 1.0, seed: int = 0) -> dict[str, np.ndarray]:
    """One symmetric-Dirichlet row per parent configuration (first parent by name varies slowest)."""
    if dirichlet_alpha <= 0:
        raise ConfigError("dirichlet_alpha must be positive; pass explicit cpts for deterministic tables")
    k = _level_counts(g, levels)
    rng = np.random.default_rng(seed)
    parents = _parent_lists(g)
    cpts = {}
    for v in g.topological_order():
        configs = int(np.prod([k[u] for u in parents[v]], dtype=np.int64))
        cpts[v] = rng.dirichlet(np.full(k[v], float(dirichlet_alpha)), size=configs)
    return cpts


def simulate_discrete(g: Dag, n: int, seed: int = 0, levels=2, dirichlet_alpha: float = 1.0,
                      cpts: Mapping | None = None, kind: str = DISCRETE) -> Dataset:
    """Ancestral sampling through conditional probability tables.

    ``cpts[v]`` has one row per parent configuration, with the configurations
    of the name-sorted parents enumerated lexicographically.
    """
    if kind not in (DISCRETE, ORDINAL):
        raise ConfigError(f"kind must be discrete or ordinal, got {kind!r}")
    if int(n) != n or n < 1:
        raise ConfigError(f"n must be a positive integer, got {n}")
    k = _level_counts(g, levels)
    parents = _parent_lists(g)
    if cpts is None:
        cpts = random_cpts(g, k, dirichlet_alpha, child_seed(seed, 0))
    tables = {}
    for v in g.nodes:
        t = np.asarray(cpts[v], dtype=float)
        configs = int(np.prod([k[u] for u in parents[v]], dtype=np.int64))
        if t.shape != (configs, k[v]):
            raise ConfigError(f"CPT of {v!r} must have shape {(configs, k[v])}, got {t.shape}")
        if (t < 0).any() or not np.allclose(t.sum(axis=1), 1.0):
            raise ConfigError(f"CPT rows of {v!r} must be probability vectors")
        tables[v] = t
    uniform = np.random.default_rng(child_seed(seed, 1)).random((len(g.nodes), n))
    index = {v: j for j, v in enumerate(g.nodes)}
    values = {}
    for v in g.topological_order():
        config = np.zeros(n, dtype=np.int64)
        for u in parents[v]:
            config = config * k[u] + values[u]
        cdf = np.cumsum(tables[v][config], axis=1)
        draw = (uniform[index[v]][:, None] >= cdf[:, :-1]).sum(axis=1)
        values[v] = draw.astype(np.int64)
    return dataset_from_arrays(
        {v: values[v] for v in g.nodes},
        {v: kind for v in g.nodes},
        {v: [str(i) for i in range(k[v])] for v in g.nodes},
    )


# -- SNP scenarios --------------------------------------------------------------


@dataclass(frozen=True)
class SnpScenario:
    n: int
    m: int
    maf: float
    pattern: str = "linear"
    h2: float = 0.0
    causal: tuple = (1,)
    ld_rho: float = 0.0
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "causal", tuple(int(c) for c in self.causal))
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError(f"n must be a positive integer, got {self.n}")
        if int(self.m) != self.m or self.m < 1:
            raise ConfigError(f"m must be a positive integer, got {self.m}")
        if not 0 < self.maf <= 0.5:
            raise ConfigError(f"maf must lie in (0, 0.5], got {self.maf}")
        if self.pattern not in PATTERNS:
            raise ConfigError(f"pattern must be one of {PATTERNS}, got {self.pattern!r}")
        if not 0 <= self.h2 <= 1:
            raise ConfigError(f"h2 must lie in [0, 1], got {self.h2}")
        if not 0 <= self.ld_rho < 1:
            raise ConfigError(f"ld_rho must lie in [0, 1), got {self.ld_rho}")
        bad = [c for c in self.causal if not 1 <= c <= self.m]
        if bad or len(set(self.causal)) != len(self.causal):
            raise ConfigError(f"causal indices must be distinct values in 1..{self.m}, got {self.causal}")
        if self.h2 > 0 and not self.causal:
            raise ConfigError("h2 > 0 needs at least one causal SNP")

    @property
    def snp_names(self) -> list[str]:
        return [f"snp{j + 1}" for j in range(self.m)]

    def to_dict(self) -> dict:
        out = asdict(self)
        out["causal"] = list(self.causal)
        return out

    @classmethod
    def from_dict(cls, obj: Mapping) -> "SnpScenario":
        known = set(cls.__dataclass_fields__)
        extra = set(obj) - known
        if extra:
            raise ConfigError(f"unknown scenario field(s) {sorted(extra)}")
        return cls(**obj)


def load_scenarios(text: str) -> list[SnpScenario]:
    """Scenarios from JSON: one object or a list of objects."""
    obj = json.loads(text)
    items = obj if isinstance(obj, list) else [obj]
    return [SnpScenario.from_dict(item) for item in items]


@dataclass(frozen=True)
class SnpTruth:
    causal: tuple
    pattern: str
    beta: float
    genetic: np.ndarray = field(repr=False)


def latent_ld_correlation(maf: float, ld_rho: float) -> float:
    """Latent Gaussian correlation whose thresholded minor-allele indicators correlate at ``ld_rho``."""
    if ld_rho == 0:
        return 0.0
    t = stats.norm.ppf(maf)
    target = maf * maf + ld_rho * maf * (1 - maf)

    def excess(r):
        joint = stats.multivariate_normal([0.0, 0.0], [[1.0, r], [r, 1.0]]).cdf([t, t])
        return joint - target

    return float(optimize.brentq(excess, 0.0, 0.999999, xtol=1e-10))


def simulate_genotypes(n: int, m: int, maf: float, ld_rho: float, rng: np.random.Generator) -> np.ndarray:
    """Copies of the major allele for ``n`` samples and ``m`` SNPs in AR(1) linkage."""
    r = latent_ld_correlation(maf, ld_rho)
    t = stats.norm.ppf(maf)
    minor = np.zeros((n, m), dtype=np.int8)
    innov = math.sqrt(1.0 - r * r)
    for _ in range(2):
        z = rng.standard_normal((n, m))
        for j in range(1, m):
            z[:, j] = r * z[:, j - 1] + innov * z[:, j]
        minor += z < t
    return (2 - minor).astype(np.int8)


def simulate_snp_trait(s: SnpScenario, rng: np.random.Generator | None = None):
    """Genotypes, a continuous trait and the generating truth for one scenario."""
    rng = np.random.default_rng(s.seed) if rng is None else rng
    counts = simulate_genotypes(s.n, s.m, s.maf, s.ld_rho, rng)
    effect = PATTERN_EFFECTS[s.pattern]
    genetic = np.zeros(s.n)
    for c in s.causal:
        genetic += effect[counts[:, c - 1]]
    noise = rng.standard_normal(s.n)
    var_g = genetic.var()
    beta = 0.0
    if s.h2 > 0:
        if var_g == 0:
            raise UntestableError("causal SNPs are monomorphic in this sample; the genetic variance is zero")
        beta = math.sqrt(s.h2 / var_g)
    genetic = beta * genetic
    trait = genetic + math.sqrt(1.0 - s.h2) * noise
    names = s.snp_names
    truth = SnpTruth(tuple(names[c - 1] for c in s.causal), s.pattern, beta, genetic)
    return GenotypeTable(tuple(names), counts), trait, truth


def snp_trait_dataset(geno: GenotypeTable, trait, scheme: str = "centered", trait_name: str = "trait") -> Dataset:
    d = recode_snps(geno, scheme)
    return d.with_column(VariableMeta(trait_name, CONTINUOUS), np.asarray(trait, dtype=float))


# -- power benchmark --------------------------------------------------------------


@dataclass(frozen=True)
class PowerRow:
    scenario: str
    test: str
    n: int
    rejection_rate: float
    replicates: int
    rejections: int
    untestable: int = 0

    def __post_init__(self):
        if self.replicates < 1:
            raise ConfigError("a power row needs at least one replicate")
        if not 0 <= self.rejection_rate <= 1:
            raise ConfigError("rejection_rate must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class PowerTable:
    rows: tuple
    outcomes: Mapping = field(default_factory=dict, repr=False)

    def rate(self, scenario: str, test: str) -> float:
        for row in self.rows:
            if row.scenario == scenario and row.test == test:
                return row.rejection_rate
        raise KeyError((scenario, test))

    def gap(self, scenario: str, a: str, b: str) -> tuple[float, float]:
        """Power difference ``a - b`` and its paired standard error."""
        diff = self.outcomes[(scenario, a)].astype(float) - self.outcomes[(scenario, b)].astype(float)
        se = diff.std(ddof=1) / math.sqrt(diff.size) if diff.size > 1 else float("nan")
        return float(diff.mean()), float(se)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scenario", "test", "n", "rejection_rate", "replicates", "rejections", "untestable"])
        for r in self.rows:
            w.writerow([r.scenario, r.test, r.n, repr(r.rejection_rate), r.replicates, r.rejections, r.untestable])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"rows": [asdict(r) for r in self.rows]}, indent=2) + "\n"

    def __eq__(self, other):
        return isinstance(other, PowerTable) and self.rows == other.rows


def _replicate_tests(d: Dataset, snp: str, tests: Sequence[str], alpha: float, trait: str = "trait"):
    out = []
    for test in tests:
        try:
            if test == "jt":
                p = jt_test(d, snp, trait).p_value
            elif test == "linear":
                p = fisher_z_test(d, snp, trait).p_value
            else:
                binned = np.searchsorted(np.quantile(d.column(trait), [1 / 3, 2 / 3]), d.column(trait), side="right")
                dd = d.with_column(VariableMeta("trait_tertile", DISCRETE, ("0", "1", "2")), binned)
                p = g2_test(dd, snp, "trait_tertile").p_value
            out.append((p < alpha, False))
        except UntestableError:
            out.append((False, True))
    return out


def power_benchmark(scenarios: Sequence[SnpScenario], tests: Sequence[str] = ("jt", "linear"),
                    alpha: float = 0.05, replicates: int = 1000, seed: int = 0,
                    threads: int | None = 1) -> PowerTable:
    """Rejection rates of single-SNP tests on the first causal SNP of each scenario.

    Replicate ``r`` of scenario ``i`` draws from its own stream keyed by
    ``(seed, i, r)``. Every test sees the same replicate data, so power gaps
    can be assessed pairwise. Untestable replicates count as non-rejections.
    """
    if replicates < 100:
        raise ConfigError(f"power estimates need replicates >= 100, got {replicates}")
    if not 0 < alpha < 1:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    for t in tests:
        if t not in POWER_TESTS:
            raise ConfigError(f"unknown power test {t!r}; choose from {POWER_TESTS}")
    rows, outcomes = [], {}
    total_untestable = 0
    for i, s in enumerate(scenarios):
        sid = s.name or f"s{i + 1}"
        snp = s.snp_names[(s.causal[0] if s.causal else 1) - 1]

        def one(r, i=i, s=s, snp=snp):
            try:
                geno, trait, _ = simulate_snp_trait(s, child_rng(seed, i, r))
            except UntestableError:
                return [(False, True)] * len(tests)
            return _replicate_tests(snp_trait_dataset(geno, trait), snp, tests, alpha)

        results = parallel_map(one, range(replicates), threads)
        for k, test in enumerate(tests):
            hits = np.array([res[k][0] for res in results], dtype=bool)
            skipped = sum(res[k][1] for res in results)
            total_untestable += skipped
            outcomes[(sid, test)] = hits
            rows.append(PowerRow(sid, test, s.n, float(hits.mean()), replicates, int(hits.sum()), int(skipped)))
    if total_untestable:
        warnings.warn(f"{total_untestable} untestable replicate(s) counted as non-rejections",
                      UntestableWarning, stacklevel=2)
    return PowerTable(tuple(rows), outcomes)


# -- structure recovery benchmark ------------------------------------------------


@dataclass(frozen=True)
class GeneratorConfig:
    p: int = 5
    expected_degree: float = 1.5
    n: int = 10000
    data: str = "gaussian"
    coef_range: tuple = (0.5, 1.0)
    levels: int = 2
    dirichlet_alpha: float = 1.0
    dag: Dag | None = None

    def __post_init__(self):
        if self.data not in ("gaussian", "discrete"):
            raise ConfigError(f"data must be gaussian or discrete, got {self.data!r}")
        object.__setattr__(self, "coef_range", tuple(self.coef_range))

    def draw(self, seed: int) -> tuple[Dag, Dataset]:
        g = self.dag if self.dag is not None else simulate_dag(self.p, self.expected_degree, child_seed(seed, 0))
        if self.data == "gaussian":
            d = simulate_gaussian(g, self.n, child_seed(seed, 1), self.coef_range)
        else:
            d = simulate_discrete(g, self.n, child_seed(seed, 1), self.levels, self.dirichlet_alpha)
        return g, d


@dataclass(frozen=True)
class RecoveryRow:
    replicate: int
    shd: int | None
    precision: float | None
    recall: float | None
    status: str = "ok"


@dataclass(frozen=True)
class RecoveryTable:
    rows: tuple

    def scored(self) -> list[RecoveryRow]:
        return [r for r in self.rows if r.status == "ok"]

    def median_shd(self) -> float:
        return float(np.median([r.shd for r in self.scored()]))

    def perfect_skeletons(self) -> int:
        return sum(r.precision == 1.0 and r.recall == 1.0 for r in self.scored())

    def mean_precision(self) -> float:
        return float(np.mean([r.precision for r in self.scored()]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["replicate", "shd", "precision", "recall", "status"])
        for r in self.rows:
            w.writerow([r.replicate, "" if r.shd is None else r.shd,
                        "" if r.precision is None else repr(r.precision),
                        "" if r.recall is None else repr(r.recall), r.status])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"rows": [asdict(r) for r in self.rows]}, indent=2) + "\n"


def recovery_benchmark(gen: GeneratorConfig, cfg, replicates: int = 20, seed: int = 0,
                       threads: int | None = 1, conflicts: str = "raise") -> RecoveryTable:
    """PC-stable on simulated data, scored against the generating DAG's CPDAG.

    Replicates the learner fails on are kept as skipped rows with the reason.
    """
    if replicates < 10:
        raise ConfigError(f"recovery needs replicates >= 10, got {replicates}")

    def one(r):
        truth, d = gen.draw(child_seed(seed, r))
        try:
            learned = pc_learn(d, cfg, conflicts=conflicts).graph
        except SeqnetError as exc:
            return RecoveryRow(r, None, None, None, f"skipped: {type(exc).__name__}: {exc}")
        precision, recall = skeleton_precision_recall(learned, truth)
        return RecoveryRow(r, shd(learned, dag_to_cpdag(truth)), precision, recall)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SeqnetWarning)
        rows = parallel_map(one, range(replicates), threads)
    skipped = [r for r in rows if r.status != "ok"]
    if skipped:
        warnings.warn(f"{len(skipped)} recovery replicate(s) skipped; first: {skipped[0].status}",
                      SeqnetWarning, stacklevel=2)
    return RecoveryTable(tuple(rows))
