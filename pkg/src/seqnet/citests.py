"""Conditional-independence tests for ordinal, multinomial and Gaussian data.

* ``jt``: stratified Jonckheere-Terpstra trend test with tie-corrected
  asymptotic normal null.
* ``g2``: log-likelihood-ratio test of conditional independence.
* ``fisher_z``: Fisher's z test of a partial correlation.

Every test is a pure function of the dataset and its arguments and returns a
:class:`TestResult`. :func:`permutation_pvalue` is the small-sample and
validation fallback shared by all three.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from ._parallel import parallel_map
from .data import (
    CONTINUOUS,
    DISCRETE,
    ContingencyTable,
    Dataset,
    _check_distinct,
    build_table,
    categorical_codes,
    strata_codes,
)
from .errors import ConfigError, DataError, UntestableError

ALTERNATIVES = ("two-sided", "increasing", "decreasing")
PERMUTATION_CHUNK_CELLS = 2_000_000


@dataclass(frozen=True)
class TestResult:
    """Outcome of one conditional-independence test of ``x`` and ``y`` given ``cond``."""

    __test__ = False  # not a pytest class

    test_name: str
    statistic: float
    p_value: float
    x: str
    y: str
    cond: tuple[str, ...]
    n_effective: int
    null_mean: float | None = None
    null_sd: float | None = None
    df: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "cond", tuple(self.cond))
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p-value {self.p_value} outside [0, 1]")
        if self.null_sd is not None and not self.null_sd > 0:
            raise ValueError("null_sd must be positive")
        if self.df is not None and self.df < 1:
            raise ValueError("df must be >= 1")

    @property
    def z(self) -> float | None:
        """Standardized JT statistic; ``None`` for the other tests."""
        if self.null_sd is None:
            return None
        return (self.statistic - self.null_mean) / self.null_sd

    def to_dict(self) -> dict:
        out = {
            "test": self.test_name,
            "x": self.x,
            "y": self.y,
            "cond": list(self.cond),
            "statistic": self.statistic,
            "p": self.p_value,
        }
        if self.df is not None:
            out["df"] = self.df
        if self.null_mean is not None:
            out["null_mean"] = self.null_mean
            out["null_sd"] = self.null_sd
        out["n_effective"] = self.n_effective
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


# -- Jonckheere-Terpstra ------------------------------------------------------


def _by_stratum(table: ContingencyTable) -> np.ndarray:
    """Counts as a float array of shape (L, T, C)."""
    return np.moveaxis(table.counts, 2, 0).astype(np.float64)


def _jt_per_stratum(c: np.ndarray) -> np.ndarray:
    """JT statistic of every stratum from counts of shape (..., T, C).

    For each group pair i < j the Wilcoxon score of response level s is its
    mid-rank in the pooled sample of groups i and j; the rank sum of group j
    minus its minimum gives the number of (i, j) pairs in ascending order,
    ties counted one half.
    """
    T = c.shape[-2]
    out = np.zeros(c.shape[:-2])
    for i in range(T - 1):
        ni = c[..., i, :]
        for j in range(i + 1, T):
            nj = c[..., j, :]
            pooled = ni + nj
            scores = np.cumsum(pooled, axis=-1) - pooled + (pooled + 1.0) / 2.0
            size = nj.sum(axis=-1)
            out += (scores * nj).sum(axis=-1) - size * (size + 1.0) / 2.0
    return out


def _active_strata(c: np.ndarray) -> np.ndarray:
    """Strata (shape (..., L)) with at least two nonempty groups."""
    return (c.sum(axis=-1) > 0).sum(axis=-1) >= 2


def _jt_moments_per_stratum(c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Null mean and tie-corrected variance of JT for each stratum of (L, T, C) counts."""
    groups = c.sum(axis=-1)
    ties = c.sum(axis=-2)
    N = groups.sum(axis=-1)
    mean = (N**2 - (groups**2).sum(axis=-1)) / 4.0

    def s2(v):
        return (v * (v - 1)).sum(axis=-1)

    def s3(v):
        return (v * (v - 1) * (v - 2)).sum(axis=-1)

    first = (
        N * (N - 1) * (2 * N + 5)
        - (groups * (groups - 1) * (2 * groups + 5)).sum(axis=-1)
        - (ties * (ties - 1) * (2 * ties + 5)).sum(axis=-1)
    ) / 72.0
    with np.errstate(divide="ignore", invalid="ignore"):
        second = np.where(N > 2, s3(groups) * s3(ties) / (36.0 * N * (N - 1) * (N - 2)), 0.0)
        third = np.where(N > 1, s2(groups) * s2(ties) / (8.0 * N * (N - 1)), 0.0)
    var = first + second + third
    active = _active_strata(c)
    return np.where(active, mean, 0.0), np.where(active, var, 0.0)


def _check_jt_table(table: ContingencyTable) -> np.ndarray:
    T, C, L = table.dims
    if T < 2:
        raise UntestableError("Jonckheere-Terpstra test: fewer than two groups")
    c = _by_stratum(table)
    if not _active_strata(c).any():
        raise UntestableError("Jonckheere-Terpstra test: no stratum has two nonempty groups")
    if np.count_nonzero(table.counts) <= 1:
        raise UntestableError("Jonckheere-Terpstra test: all observations fall in one cell")
    return c


def jt_statistic(t: ContingencyTable) -> float:
    """Stratified Jonckheere-Terpstra statistic, summed over strata."""
    c = _check_jt_table(t)
    return float(_jt_per_stratum(c).sum())


def jt_null_moments(t: ContingencyTable) -> tuple[float, float]:
    """Mean and variance of the statistic under homogeneity within every stratum.

    Strata are independent under the null, so per-stratum moments add.
    """
    c = _check_jt_table(t)
    mean, var = _jt_moments_per_stratum(c)
    var_total = float(var.sum())
    if not var_total > 1e-12 * max(1.0, float(mean.sum())):
        raise UntestableError("Jonckheere-Terpstra test: zero null variance (all responses tied within strata)")
    return float(mean.sum()), var_total


def _normal_p(z: float, alternative: str) -> float:
    if alternative == "two-sided":
        return float(min(1.0, 2.0 * stats.norm.sf(abs(z))))
    if alternative == "increasing":
        return float(stats.norm.sf(z))
    if alternative == "decreasing":
        return float(stats.norm.cdf(z))
    raise ConfigError(f"alternative must be one of {ALTERNATIVES}, got {alternative!r}")


def _require_ordered(d: Dataset, name: str):
    if d.meta(name).kind == DISCRETE:
        raise DataError(f"variable {name!r} is unordered discrete; the JT test needs ordinal data")


def jt_test(d: Dataset, x: str, y: str, cond: Sequence[str] = (), alternative: str = "two-sided") -> TestResult:
    """Jonckheere-Terpstra test of ``x`` and ``y`` given categorical ``cond``.

    ``x`` defines the ordered groups and ``y`` the response. Either may be
    continuous, in which case its distinct values act as ordered levels.
    ``alternative="increasing"`` tests for ``y`` stochastically increasing with
    ``x``; the default two-sided test covers both directions.
    """
    if alternative not in ALTERNATIVES:
        raise ConfigError(f"alternative must be one of {ALTERNATIVES}, got {alternative!r}")
    cond = tuple(cond)
    for name in (x, y):
        _require_ordered(d, name)
    table = build_table(d, x, y, cond, allow_continuous=True)
    stat = jt_statistic(table)
    mean, var = jt_null_moments(table)
    sd = math.sqrt(var)
    z = (stat - mean) / sd
    active = _active_strata(_by_stratum(table))
    return TestResult(
        test_name="jt",
        statistic=stat,
        p_value=_normal_p(z, alternative),
        x=x,
        y=y,
        cond=cond,
        n_effective=int(table.stratum_totals[active].sum()),
        null_mean=mean,
        null_sd=sd,
    )


# -- G2 ---------------------------------------------------------------------------


def _g2_per_stratum(c: np.ndarray) -> np.ndarray:
    rows = c.sum(axis=-1, keepdims=True)
    cols = c.sum(axis=-2, keepdims=True)
    total = rows.sum(axis=-2, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        expected = rows * cols / total
        terms = np.where(c > 0, c * np.log(c / expected), 0.0)
    return 2.0 * terms.sum(axis=(-1, -2))


def _g2_df(c: np.ndarray) -> int:
    rows = (c.sum(axis=-1) > 0).sum(axis=-1)
    cols = (c.sum(axis=-2) > 0).sum(axis=-1)
    return int((np.maximum(rows - 1, 0) * np.maximum(cols - 1, 0)).sum())


def g2_test(d: Dataset, x: str, y: str, cond: Sequence[str] = ()) -> TestResult:
    """G2 test; each stratum contributes (r - 1)(c - 1) df over its observed levels."""
    cond = tuple(cond)
    table = build_table(d, x, y, cond, allow_continuous=False)
    c = _by_stratum(table)
    df = _g2_df(c)
    if df < 1:
        raise UntestableError("G2 test: no stratum observes two levels of both variables")
    g2 = float(max(_g2_per_stratum(c).sum(), 0.0))
    rows = (c.sum(axis=-1) > 0).sum(axis=-1)
    cols = (c.sum(axis=-2) > 0).sum(axis=-1)
    used = (rows >= 2) & (cols >= 2)
    return TestResult(
        test_name="g2",
        statistic=g2,
        p_value=float(stats.chi2.sf(g2, df)),
        x=x,
        y=y,
        cond=cond,
        n_effective=int(table.stratum_totals[used].sum()),
        df=df,
    )


# -- Fisher z --------------------------------------------------------------------


def _numeric_columns(d: Dataset, names) -> np.ndarray:
    cols = []
    for name in names:
        if not d.has_numeric_coding(name):
            raise DataError(f"variable {name!r} has no numeric coding; Fisher's z needs continuous data")
        cols.append(d.numeric(name))
    return np.vstack(cols)


def partial_correlation(d: Dataset, x: str, y: str, cond: Sequence[str] = ()) -> float:
    """Partial correlation of ``x`` and ``y`` given ``cond`` by inverting the correlation submatrix."""
    cond = tuple(cond)
    _check_distinct(x, y, cond)
    data = _numeric_columns(d, (x, y, *cond))
    constant = [name for name, row in zip((x, y, *cond), data) if np.ptp(row) == 0]
    if constant:
        raise UntestableError(f"constant column(s) {constant}: correlation undefined")
    R = np.corrcoef(data)
    if not cond:
        return float(np.clip(R[0, 1], -1.0, 1.0))
    if np.linalg.cond(R[2:, 2:]) > 1e12:
        raise UntestableError(f"singular conditioning matrix for {list(cond)} (collinear conditioning set)")
    if np.linalg.cond(R) > 1e12:
        # x or y is (nearly) a linear function of the others
        return _residual_correlation(data)
    P = np.linalg.inv(R)
    r = -P[0, 1] / math.sqrt(P[0, 0] * P[1, 1])
    return float(np.clip(r, -1.0, 1.0))


def _residuals(data: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Residuals of rows 0 and 1 after least-squares regression on the rest."""
    design = np.column_stack([np.ones(data.shape[1]), data[2:].T])
    coef, *_ = np.linalg.lstsq(design, data[:2].T, rcond=None)
    res = data[:2].T - design @ coef
    return res[:, 0], res[:, 1]


def _residual_correlation(data: np.ndarray) -> float:
    rx, ry = _residuals(data)
    nx, ny = np.linalg.norm(rx), np.linalg.norm(ry)
    scale = np.abs(data[:2]).max() * math.sqrt(data.shape[1])
    if nx <= 1e-10 * scale or ny <= 1e-10 * scale:
        raise UntestableError("partial correlation undefined: variable determined by the conditioning set")
    return float(np.clip(rx @ ry / (nx * ny), -1.0, 1.0))


def fisher_z(r: float, n_eff: int) -> float:
    r = float(np.clip(r, -np.nextafter(1.0, 0.0), np.nextafter(1.0, 0.0)))
    return math.sqrt(n_eff) * math.atanh(r)


def fisher_z_test(d: Dataset, x: str, y: str, cond: Sequence[str] = (), alternative: str = "two-sided") -> TestResult:
    """Fisher's z test of zero partial correlation.

    The statistic is ``sqrt(n - |cond| - 3) * atanh(r)``. Ordinal columns with
    numeric level labels (recoded SNPs) enter through their numeric coding.
    """
    cond = tuple(cond)
    n_eff = d.n - len(cond) - 3
    if n_eff < 1:
        raise UntestableError(f"Fisher's z test: n - |cond| - 3 = {n_eff} < 1")
    r = partial_correlation(d, x, y, cond)
    z = fisher_z(r, n_eff)
    return TestResult(
        test_name="fisher_z",
        statistic=z,
        p_value=_normal_p(z, alternative),
        x=x,
        y=y,
        cond=cond,
        n_effective=n_eff,
    )


# -- dispatch -----------------------------------------------------------------------

TESTS = {"jt": jt_test, "g2": g2_test, "fisher_z": fisher_z_test}


def ci_test(kind: str, d: Dataset, x: str, y: str, cond: Sequence[str] = (), **kwargs) -> TestResult:
    try:
        fn = TESTS[kind]
    except KeyError:
        raise ConfigError(f"unknown test {kind!r}; choose from {sorted(TESTS)}") from None
    return fn(d, x, y, cond, **kwargs)


def check_regime(kind: str, d: Dataset, names: Sequence[str], targets: Sequence[str] = ()) -> None:
    """Raise :class:`DataError` unless every column can enter ``kind`` tests.

    Columns in ``targets`` are only ever tested, never conditioned on, which
    lets a continuous trait take part in JT-based blanket learning.
    """
    if kind not in TESTS:
        raise ConfigError(f"unknown test {kind!r}; choose from {sorted(TESTS)}")
    for name in names:
        meta = d.meta(name)
        if kind == "fisher_z":
            ok = d.has_numeric_coding(name)
        elif kind == "g2":
            ok = meta.is_categorical
        else:
            ok = meta.kind != DISCRETE and (meta.kind != CONTINUOUS or name in targets)
        if not ok:
            raise DataError(f"test {kind!r} cannot use {meta.kind} variable {name!r}")


# -- permutation oracle ------------------------------------------------------------


def _permutation_chunks(B: int, n: int) -> list[int]:
    size = max(1, min(1000, PERMUTATION_CHUNK_CELLS // max(n, 1)))
    sizes = [size] * (B // size)
    if B % size:
        sizes.append(B % size)
    return sizes


def _exceed(stat_perm: np.ndarray, observed: float, alternative: str, center: float = 0.0) -> int:
    tol = 1e-9 * max(1.0, abs(observed), abs(center))
    if alternative == "two-sided":
        return int(np.count_nonzero(np.abs(stat_perm - center) >= abs(observed - center) - tol))
    if alternative == "increasing":
        return int(np.count_nonzero(stat_perm >= observed - tol))
    return int(np.count_nonzero(stat_perm <= observed + tol))


def permutation_pvalue(test_kind: str, d: Dataset, x: str, y: str, cond: Sequence[str] = (),
                       B: int = 1000, seed: int = 0, alternative: str = "two-sided",
                       threads: int | None = 1) -> float:
    """Monte Carlo permutation p-value ``(1 + #exceedances) / (B + 1)``.

    For ``jt`` and ``g2``, ``y`` is permuted within the joint strata of
    ``cond``. For ``fisher_z`` the residuals of ``y`` given ``cond`` are
    permuted. Replicates come in fixed-size chunks with their own spawned
    seeds, so the result does not depend on ``threads``.
    """
    if B < 100:
        raise ConfigError(f"permutation test needs B >= 100, got {B}")
    if alternative not in ALTERNATIVES:
        raise ConfigError(f"alternative must be one of {ALTERNATIVES}, got {alternative!r}")
    if test_kind == "g2" and alternative != "two-sided":
        raise ConfigError("the G2 test has no one-sided form")
    cond = tuple(cond)
    observed = ci_test(test_kind, d, x, y, cond, **({} if test_kind == "g2" else {"alternative": alternative}))
    sizes = _permutation_chunks(B, d.n)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))

    if test_kind == "fisher_z":
        data = _numeric_columns(d, (x, y, *cond))
        if cond:
            rx, ry = _residuals(data)
        else:
            rx, ry = data[0] - data[0].mean(), data[1] - data[1].mean()
        rx = rx / np.linalg.norm(rx)
        ry = ry / np.linalg.norm(ry)
        r_obs = float(rx @ ry)

        def run(job):
            size, ss = job
            rng = np.random.default_rng(ss)
            perm = rng.permuted(np.broadcast_to(ry, (size, ry.size)), axis=1)
            return _exceed(perm @ rx, r_obs, alternative)

    else:
        allow = test_kind == "jt"
        xc, xl = categorical_codes(d, x, allow)
        yc, yl = categorical_codes(d, y, allow)
        k, L, _ = strata_codes(d, cond)
        T, C = len(xl), len(yl)
        order = np.argsort(k, kind="stable")
        xs, ys, ks = xc[order], yc[order], k[order]
        base = (xs * C) * L + ks
        cells = T * C * L
        if test_kind == "jt":
            table = build_table(d, x, y, cond, allow_continuous=True)
            center = float(_jt_moments_per_stratum(_by_stratum(table))[0].sum())
            stat_fn = _jt_per_stratum
            obs = observed.statistic
        else:
            center = 0.0
            stat_fn = _g2_per_stratum
            obs = observed.statistic

        def run(job):
            size, ss = job
            rng = np.random.default_rng(ss)
            keys = ks[None, :] + rng.random((size, ks.size))
            perm = np.argsort(keys, axis=1)
            flat = base[None, :] + ys[perm] * L + (np.arange(size) * cells)[:, None]
            counts = np.bincount(flat.ravel(), minlength=size * cells).reshape(size, T, C, L)
            c = np.moveaxis(counts, 3, 1).astype(np.float64)
            return _exceed(stat_fn(c).sum(axis=-1), obs, alternative, center)

    hits = sum(parallel_map(run, list(zip(sizes, seeds)), threads))
    return (1 + hits) / (B + 1)
