"""Additive SNP trait model with kinship and blanket-based marker selection."""

import csv
import json
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg

from ._parallel import parallel_map
from .data import Dataset
from .errors import KINSHIP_CAVEAT, ConfigError, DataError, KinshipCaveatWarning
from .learning import learn_markov_blanket

SYMMETRY_TOL = 1e-10
DEFAULT_FOLDS = 5


@dataclass(frozen=True, eq=False)
class KinshipMatrix:
    """Symmetric positive definite sample-relatedness matrix."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise DataError(f"kinship matrix must be square, got shape {v.shape}")
        if v.shape[0] < 1:
            raise DataError("kinship matrix is empty")
        if not np.all(np.isfinite(v)):
            raise DataError("kinship matrix has non-finite entries")
        if np.abs(v - v.T).max() > SYMMETRY_TOL:
            raise DataError(f"kinship matrix is not symmetric (max deviation {np.abs(v - v.T).max():.3g})")
        v = (v + v.T) / 2
        try:
            factor = linalg.cholesky(v, lower=True)
        except linalg.LinAlgError:
            raise DataError("kinship matrix is not positive definite") from None
        v.setflags(write=False)
        factor.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "_factor", factor)

    @classmethod
    def identity(cls, n: int) -> "KinshipMatrix":
        return cls(np.eye(n))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def is_identity(self) -> bool:
        return bool(np.array_equal(self.values, np.eye(self.n)))

    @property
    def cholesky(self) -> np.ndarray:
        return self._factor

    def whiten(self, a: np.ndarray) -> np.ndarray:
        """``L^-1 a`` for the lower Cholesky factor ``L`` of the matrix."""
        return linalg.solve_triangular(self._factor, a, lower=True)

    def take(self, rows) -> "KinshipMatrix":
        rows = np.asarray(rows)
        return KinshipMatrix(self.values[np.ix_(rows, rows)])


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_kinship(path) -> KinshipMatrix:
    """Square numeric CSV; an optional header row and label column are skipped."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [[c.strip() for c in r] for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    if not rows:
        raise DataError(f"{path}: empty kinship file")
    if not all(_is_number(c) for c in rows[0] if c):
        rows = rows[1:]
    if rows and not all(_is_number(r[0]) for r in rows):
        rows = [r[1:] for r in rows]
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise DataError(f"{path}: rows have different lengths {sorted(widths)}")
    try:
        values = np.array([[float(c) for c in r] for r in rows])
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if values.shape[0] != values.shape[1]:
        raise DataError(f"{path}: kinship matrix must be square, got {values.shape[0]} x {values.shape[1]}")
    return KinshipMatrix(values)


@dataclass(frozen=True, eq=False)
class AdditiveModelFit:
    mu: float
    effects: np.ndarray
    lambda_: float
    kinship_used: bool
    snp_names: tuple

    def __post_init__(self):
        effects = np.array(self.effects, dtype=float).ravel()
        if effects.size != len(self.snp_names):
            raise DataError("one effect per SNP name is required")
        if self.lambda_ < 0:
            raise DataError(f"lambda must be >= 0, got {self.lambda_}")
        effects.setflags(write=False)
        object.__setattr__(self, "effects", effects)
        object.__setattr__(self, "snp_names", tuple(self.snp_names))

    def to_dict(self) -> dict:
        return {
            "mu": float(self.mu),
            "lambda": float(self.lambda_),
            "kinship_used": bool(self.kinship_used),
            "effects": [{"snp": s, "g": float(g)} for s, g in zip(self.snp_names, self.effects)],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "AdditiveModelFit":
        try:
            obj = json.loads(text)
            effects = obj["effects"]
            return cls(float(obj["mu"]), [e["g"] for e in effects], float(obj["lambda"]),
                       bool(obj.get("kinship_used", False)), [e["snp"] for e in effects])
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed model file: {exc}") from None


def design_matrix(d: Dataset, names: Sequence[str] | None = None) -> tuple[np.ndarray, list[str]]:
    """Numeric coding of the named columns, one column per SNP."""
    names = list(d.names if names is None else names)
    for name in names:
        if not d.has_numeric_coding(name):
            raise DataError(f"column {name!r} has no numeric coding; recode genotypes first")
    X = np.column_stack([d.numeric(name) for name in names]) if names else np.empty((d.n, 0))
    return X.astype(float), names


def _check_inputs(X, y, sigma):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2:
        raise DataError("genotype matrix must be two-dimensional")
    n, m = X.shape
    if y.size != n:
        raise DataError(f"trait has {y.size} values for {n} genotype rows")
    if sigma is None:
        sigma = KinshipMatrix.identity(n)
    elif not isinstance(sigma, KinshipMatrix):
        sigma = KinshipMatrix(sigma)
    if sigma.n != n:
        raise DataError(f"kinship matrix is {sigma.n} x {sigma.n} but there are {n} samples")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DataError("genotype matrix and trait must be finite")
    return X, y, sigma


def fit_additive(X, y, sigma: KinshipMatrix | None = None, lambda_: float = 1.0,
                 snp_names: Sequence[str] | None = None) -> AdditiveModelFit:
    """Ridge fit of ``y = mu + X g + e`` with ``e ~ N(0, sigma)``.

    ``mu`` is unpenalised and profiled out jointly with ``g``, which makes
    ``lambda_ = 0`` ordinary (generalised) least squares. ``sigma`` is
    factorised once; the smaller of the primal and dual systems is solved.
    """
    X, y, sigma = _check_inputs(X, y, sigma)
    n, m = X.shape
    names = tuple(snp_names) if snp_names is not None else tuple(f"snp{j + 1}" for j in range(m))
    if len(names) != m:
        raise DataError(f"{len(names)} SNP names for {m} columns")
    lam = float(lambda_)
    if lam < 0:
        raise DataError(f"lambda must be >= 0, got {lam}")
    if lam == 0 and m >= n:
        raise DataError(f"lambda = 0 needs fewer SNPs than samples ({m} >= {n})")

    Xw = sigma.whiten(X)
    yw = sigma.whiten(y)
    ow = sigma.whiten(np.ones(n))
    oo = float(ow @ ow)
    # project out the whitened intercept direction
    Xc = Xw - np.outer(ow, ow @ Xw) / oo
    yc = yw - ow * (ow @ yw) / oo

    if m == 0:
        g = np.zeros(0)
    elif lam == 0:
        if np.linalg.matrix_rank(Xc) < m:
            raise DataError("lambda = 0 with a rank-deficient genotype matrix")
        g = linalg.cho_solve(linalg.cho_factor(Xc.T @ Xc), Xc.T @ yc)
    elif m <= n:
        g = linalg.cho_solve(linalg.cho_factor(Xc.T @ Xc + lam * np.eye(m)), Xc.T @ yc)
    else:
        g = Xc.T @ linalg.cho_solve(linalg.cho_factor(Xc @ Xc.T + lam * np.eye(n)), yc)
    mu = float(ow @ (yw - Xw @ g) / oo)
    return AdditiveModelFit(mu, g, lam, not sigma.is_identity, names)


def predict_additive(fit: AdditiveModelFit, X) -> np.ndarray:
    """``mu + X g``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != fit.effects.size:
        raise DataError(f"model has {fit.effects.size} effects but X has {X.shape[1]} columns")
    return fit.mu + X @ fit.effects


def fold_assignment(n: int, k: int, seed: int) -> np.ndarray:
    if not 2 <= k <= n:
        raise ConfigError(f"cross-validation needs 2 <= folds <= n, got {k} folds for n = {n}")
    folds = np.arange(n) % k
    return np.random.default_rng(seed).permutation(folds)


def default_lambda_grid(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    scale = float(np.sum((X - X.mean(axis=0)) ** 2)) / max(X.shape[1], 1)
    return np.logspace(-3, 3, 13) * max(scale, 1e-12)


def cv_lambda(X, y, sigma: KinshipMatrix | None = None, grid: Sequence[float] | None = None,
              k: int = DEFAULT_FOLDS, seed: int = 0, threads: int | None = 1) -> tuple[float, dict]:
    """Ridge parameter with the smallest k-fold prediction error; ties go to the larger value."""
    X, y, sigma = _check_inputs(X, y, sigma)
    grid = np.asarray(default_lambda_grid(X) if grid is None else grid, dtype=float)
    if grid.size == 0 or np.any(grid <= 0):
        raise ConfigError("lambda grid must be non-empty and strictly positive")
    folds = fold_assignment(len(y), k, seed)

    def fold_errors(f):
        train, test = folds != f, folds == f
        sub = sigma.take(np.flatnonzero(train))
        errs = []
        for lam in grid:
            fit = fit_additive(X[train], y[train], sub, lam)
            errs.append(float(np.sum((predict_additive(fit, X[test]) - y[test]) ** 2)))
        return errs

    sse = np.sum(parallel_map(fold_errors, range(k), threads), axis=0) / len(y)
    scores = {float(lam): float(e) for lam, e in zip(grid, sse)}
    best = min(range(grid.size), key=lambda i: (sse[i], -grid[i]))
    return float(grid[best]), scores


def gwas_feature_select(d: Dataset, trait: str, cfg, threads: int | None = 1) -> set[str]:
    """Markov blanket of ``trait``; warns that sample relatedness is ignored."""
    if trait not in d:
        raise DataError(f"unknown trait column {trait!r}")
    if any(d.is_genotype_coded(name) for name in d.names if name != trait):
        warnings.warn(KINSHIP_CAVEAT, KinshipCaveatWarning, stacklevel=2)
    return learn_markov_blanket(d, trait, cfg, threads)
