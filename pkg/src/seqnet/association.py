"""Undirected association networks from marginal and shrunk partial correlations."""

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, stats

from .citests import fisher_z
from .data import Dataset
from .errors import DataError
from .graphs import LabelledGraph

# |r| within this distance of the threshold still counts, so that a duplicated
# column (r = 1 up to rounding) survives threshold 1
THRESHOLD_TOL = 1e-12


def matrix_to_csv(names, values) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["", *names])
    for name, row in zip(names, np.asarray(values)):
        w.writerow([name, *(repr(float(v)) for v in row)])
    return buf.getvalue()


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    names: tuple
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        p = len(self.names)
        if v.shape != (p, p):
            raise DataError(f"correlation matrix must be {p} x {p}, got {v.shape}")
        if not np.allclose(v, v.T, atol=1e-12, rtol=0):
            raise DataError("correlation matrix is not symmetric")
        if np.any(np.abs(v) > 1 + 1e-12):
            raise DataError("correlation entries must lie in [-1, 1]")
        v = np.clip((v + v.T) / 2, -1.0, 1.0)
        np.fill_diagonal(v, 1.0)
        v.setflags(write=False)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "values", v)

    def to_csv(self) -> str:
        return matrix_to_csv(self.names, self.values)


@dataclass(frozen=True, eq=False)
class ShrinkageEstimate:
    names: tuple
    partial: np.ndarray
    lambda_: float
    shrunk: np.ndarray

    def __post_init__(self):
        if not 0.0 <= self.lambda_ <= 1.0:
            raise DataError(f"shrinkage intensity must lie in [0, 1], got {self.lambda_}")

    def to_csv(self) -> str:
        return matrix_to_csv(self.names, self.partial)


def _standardized(d: Dataset) -> tuple[list[str], np.ndarray]:
    names = d.names
    if len(names) < 2:
        raise DataError("association networks need at least 2 columns")
    if d.n < 3:
        raise DataError(f"association networks need n >= 3, got {d.n}")
    for name in names:
        if not d.has_numeric_coding(name):
            raise DataError(f"column {name!r} has no numeric coding")
    X = np.column_stack([d.numeric(name) for name in names]).astype(float)
    X = X - X.mean(axis=0)
    sd = X.std(axis=0, ddof=1)
    const = [name for name, s in zip(names, sd) if not s > 0]
    if const:
        raise DataError(f"constant column(s) {const}: correlation undefined")
    return names, X / sd


def correlation_matrix(d: Dataset) -> CorrelationMatrix:
    names, Z = _standardized(d)
    return CorrelationMatrix(tuple(names), Z.T @ Z / (d.n - 1))


def relevance_network(d: Dataset, threshold: float) -> LabelledGraph:
    """Edge ``i - j`` whenever ``|r_ij| >= threshold``; edges carry ``weight = r_ij``."""
    if not 0.0 <= threshold <= 1.0:
        raise DataError(f"threshold must lie in [0, 1], got {threshold}")
    cm = correlation_matrix(d)
    g = LabelledGraph(cm.names)
    p = len(cm.names)
    for i in range(p):
        for j in range(i + 1, p):
            r = float(cm.values[i, j])
            if abs(r) >= threshold - THRESHOLD_TOL:
                g.add_edge(cm.names[i], cm.names[j], weight=r)
    return g


def shrinkage_intensity(Z: np.ndarray) -> float:
    """Analytic intensity toward the identity for standardized data ``Z``, clamped to [0, 1]."""
    n = Z.shape[0]
    W = Z.T @ Z / n
    # sum_k (w_kij - w_ij)^2 = sum_k z_ki^2 z_kj^2 - n w_ij^2
    S2 = (Z * Z).T @ (Z * Z) - n * W * W
    var_r = n / (n - 1) ** 3 * S2
    r = W * n / (n - 1)
    off = ~np.eye(Z.shape[1], dtype=bool)
    denom = float(np.sum(r[off] ** 2))
    if denom == 0.0:
        return 1.0
    return float(min(1.0, max(0.0, np.sum(var_r[off]) / denom)))


def shrinkage_partial_correlations(d: Dataset, lambda_: float | None = None) -> ShrinkageEstimate:
    """Partial correlations from the correlation matrix shrunk toward the identity.

    The intensity is estimated analytically unless ``lambda_`` is given.
    """
    names, Z = _standardized(d)
    lam = shrinkage_intensity(Z) if lambda_ is None else float(lambda_)
    if not 0.0 <= lam <= 1.0:
        raise DataError(f"shrinkage intensity must lie in [0, 1], got {lam}")
    R = Z.T @ Z / (d.n - 1)
    shrunk = (1.0 - lam) * R
    np.fill_diagonal(shrunk, 1.0)
    try:
        factor = linalg.cho_factor(shrunk)
    except linalg.LinAlgError:
        raise DataError("shrunk correlation matrix is not positive definite; increase the intensity") from None
    P = linalg.cho_solve(factor, np.eye(len(names)))
    s = np.sqrt(np.diag(P))
    partial = -P / np.outer(s, s)
    partial = np.clip((partial + partial.T) / 2, -1.0, 1.0)
    np.fill_diagonal(partial, 1.0)
    partial.setflags(write=False)
    shrunk.setflags(write=False)
    return ShrinkageEstimate(tuple(names), partial, lam, shrunk)


def gene_association_network(d: Dataset, alpha: float, bonferroni: bool = False,
                             lambda_: float | None = None) -> LabelledGraph:
    """Edges whose shrunk partial correlation is significant by Fisher's z.

    The effective sample size is ``n - (p - 2) - 3``. With ``bonferroni``
    the level is divided by the number of pairs. Edges carry ``weight`` (the
    partial correlation) and ``p`` (its raw p-value).
    """
    if not 0.0 < alpha < 1.0:
        raise DataError(f"alpha must lie in (0, 1), got {alpha}")
    est = shrinkage_partial_correlations(d, lambda_)
    p = len(est.names)
    n_eff = d.n - (p - 2) - 3
    if n_eff < 1:
        raise DataError(
            f"effective sample size n - (p - 2) - 3 = {n_eff} < 1; use a thresholded relevance network instead"
        )
    level = alpha / (p * (p - 1) / 2) if bonferroni else alpha
    log_level = math.log(level)
    g = LabelledGraph(est.names)
    for i in range(p):
        for j in range(i + 1, p):
            r = float(est.partial[i, j])
            z = abs(fisher_z(r, n_eff))
            log_p = math.log(2.0) + float(stats.norm.logsf(z))
            if log_p < log_level:
                g.add_edge(est.names[i], est.names[j], weight=r, p=math.exp(log_p))
    return g
