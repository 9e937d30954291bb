"""Typed datasets, file ingestion, SNP recoding and contingency tables.

Datasets are stored column-major. Continuous columns are ``float64`` arrays;
discrete and ordinal columns hold ``int64`` level indices into the ordered
``levels`` of their :class:`VariableMeta`. All arrays are read-only.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, UntestableError

CONTINUOUS = "continuous"
DISCRETE = "discrete"
ORDINAL = "ordinal"
KINDS = (CONTINUOUS, DISCRETE, ORDINAL)

MISSING_TOKENS = frozenset({"", "NA", "NaN", "nan", "N/A"})

GENOTYPE_TOKENS = ("AA", "Aa", "aa")
# copies of the "A" allele per genotype token
_TOKEN_TO_COUNT = {"AA": 2, "Aa": 1, "aA": 1, "aa": 0}
_COUNT_TO_TOKEN = {2: "AA", 1: "Aa", 0: "aa"}

# level labels listed in ascending order; numeric labels double as the
# regression coding, so AA > Aa > aa under both schemes
RECODING_SCHEMES = {
    "centered": ("-1", "0", "1"),
    "allele_count": ("0", "1", "2"),
}

PLINK_RAW_LEADING = ("FID", "IID", "PAT", "MAT", "SEX", "PHENOTYPE")


@dataclass(frozen=True)
class VariableMeta:
    name: str
    kind: str
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(str(v) for v in self.levels))
        if not self.name:
            raise DataError("variable name must be non-empty")
        if self.kind not in KINDS:
            raise DataError(f"variable {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == CONTINUOUS:
            if self.levels:
                raise DataError(f"continuous variable {self.name!r} cannot carry levels")
        else:
            if not self.levels:
                raise DataError(f"{self.kind} variable {self.name!r} needs at least one level")
            if len(set(self.levels)) != len(self.levels):
                raise DataError(f"variable {self.name!r}: duplicated level labels")

    @property
    def is_categorical(self) -> bool:
        return self.kind != CONTINUOUS

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def level_index(self, token: str) -> int:
        try:
            return self.levels.index(token)
        except ValueError:
            raise DataError(f"variable {self.name!r}: unknown level {token!r}") from None

    def level_scores(self) -> np.ndarray | None:
        """Numeric value of each level when every label parses as a number."""
        try:
            return np.array([float(v) for v in self.levels])
        except ValueError:
            return None


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """An immutable n x p table of typed columns."""

    variables: tuple[VariableMeta, ...]
    columns: tuple[np.ndarray, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        variables = tuple(self.variables)
        if len(variables) < 1:
            raise DataError("p >= 1 violated: dataset has no variables")
        if len(variables) != len(self.columns):
            raise DataError("number of columns does not match number of variables")
        names = [v.name for v in variables]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise DataError(f"duplicated variable names: {dup}")
        cols = []
        n = None
        for meta, col in zip(variables, self.columns):
            col = np.asarray(col)
            if col.ndim != 1:
                raise DataError(f"column {meta.name!r} must be one-dimensional")
            if n is None:
                n = len(col)
            elif len(col) != n:
                raise DataError(f"column {meta.name!r} has {len(col)} rows, expected {n}")
            if meta.kind == CONTINUOUS:
                col = col.astype(np.float64)
                if not np.all(np.isfinite(col)):
                    raise DataError(f"column {meta.name!r} contains non-finite values")
            else:
                if col.size and not np.issubdtype(col.dtype, np.integer):
                    if not np.all(np.equal(np.mod(col, 1), 0)):
                        raise DataError(f"column {meta.name!r}: level indices must be integers")
                col = col.astype(np.int64)
                if col.size and (col.min() < 0 or col.max() >= meta.n_levels):
                    raise DataError(f"column {meta.name!r}: level index out of range")
            cols.append(_frozen(col))
        if not n:
            raise DataError("n >= 1 violated: dataset has no rows")
        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "columns", tuple(cols))
        object.__setattr__(self, "_index", {name: i for i, name in enumerate(names)})

    @property
    def n(self) -> int:
        return len(self.columns[0])

    @property
    def p(self) -> int:
        return len(self.variables)

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    def __contains__(self, name) -> bool:
        return name in self._index

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise DataError(f"unknown variable {name!r}") from None

    def meta(self, name: str) -> VariableMeta:
        return self.variables[self.index(name)]

    def column(self, name: str) -> np.ndarray:
        return self.columns[self.index(name)]

    def numeric(self, name: str) -> np.ndarray:
        """Numeric view of a column.

        Continuous columns are returned as is. Categorical columns map to
        their level labels when those are numbers (the recoded-SNP case) and
        to level indices otherwise.
        """
        meta = self.meta(name)
        col = self.column(name)
        if meta.kind == CONTINUOUS:
            return col
        scores = meta.level_scores()
        if scores is None:
            return col.astype(np.float64)
        return scores[col]

    def has_numeric_coding(self, name: str) -> bool:
        meta = self.meta(name)
        return meta.kind == CONTINUOUS or (meta.kind == ORDINAL and meta.level_scores() is not None)

    def select(self, names: Sequence[str]) -> "Dataset":
        idx = [self.index(nm) for nm in names]
        return Dataset(tuple(self.variables[i] for i in idx), tuple(self.columns[i] for i in idx))

    def take_rows(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.variables, tuple(c[rows] for c in self.columns))

    def with_column(self, meta: VariableMeta, values) -> "Dataset":
        return Dataset(self.variables + (meta,), self.columns + (np.asarray(values),))

    def is_genotype_coded(self, name: str) -> bool:
        meta = self.meta(name)
        return meta.is_categorical and (
            meta.levels in RECODING_SCHEMES.values() or set(meta.levels) <= set(GENOTYPE_TOKENS)
        )

    # -- serialization -------------------------------------------------

    def cell_text(self, j: int, i: int) -> str:
        meta = self.variables[j]
        value = self.columns[j][i]
        if meta.kind == CONTINUOUS:
            return repr(float(value))
        return meta.levels[int(value)]

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.names)
        for i in range(self.n):
            writer.writerow([self.cell_text(j, i) for j in range(self.p)])
        return buf.getvalue()

    def schema_text(self) -> str:
        return "".join(schema_line(v) + "\n" for v in self.variables)

    def canonical_bytes(self) -> bytes:
        """Schema followed by data; equal datasets serialize identically."""
        return (self.schema_text() + "\n" + self.to_csv_text()).encode("utf-8")

    def to_csv(self, path, schema_path=None) -> None:
        Path(path).write_text(self.to_csv_text(), encoding="utf-8")
        if schema_path is not None:
            Path(schema_path).write_text(self.schema_text(), encoding="utf-8")

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.variables == other.variables and all(
            np.array_equal(a, b) for a, b in zip(self.columns, other.columns)
        )

    __hash__ = None


def dataset_from_arrays(data: Mapping[str, Iterable], kinds: Mapping[str, str] | None = None,
                        levels: Mapping[str, Sequence] | None = None) -> Dataset:
    """Build a dataset from named value arrays.

    Continuous columns take raw floats. Categorical columns take either level
    labels or integer level indices when ``levels`` is given, and otherwise
    integer values whose sorted distinct values become the levels.
    """
    kinds = dict(kinds or {})
    levels = dict(levels or {})
    variables, columns = [], []
    for name, values in data.items():
        kind = kinds.get(name, CONTINUOUS)
        values = np.asarray(values)
        if kind == CONTINUOUS:
            variables.append(VariableMeta(name, kind))
            columns.append(values.astype(np.float64))
            continue
        if name in levels:
            labs = tuple(str(v) for v in levels[name])
            if values.dtype.kind in "iu":
                codes = values.astype(np.int64)
            else:
                lookup = {lab: i for i, lab in enumerate(labs)}
                try:
                    codes = np.array([lookup[str(v)] for v in values], dtype=np.int64)
                except KeyError as exc:
                    raise DataError(f"column {name!r}: unknown level {exc.args[0]!r}") from None
        else:
            uniq, codes = np.unique(values, return_inverse=True)
            labs = tuple(str(v) for v in uniq)
        variables.append(VariableMeta(name, kind, labs))
        columns.append(codes)
    return Dataset(tuple(variables), tuple(columns))


# -- schema ---------------------------------------------------------------


def schema_line(meta: VariableMeta) -> str:
    if meta.kind == CONTINUOUS:
        return f"{meta.name},{meta.kind}"
    return f"{meta.name},{meta.kind},{'<'.join(meta.levels)}"


def parse_schema(text: str) -> dict[str, VariableMeta]:
    """Parse sidecar schema lines ``name,kind,level1<level2<...``.

    Discrete levels may also be separated by ``|``. Blank lines and lines
    starting with ``#`` are ignored.
    """
    schema: dict[str, VariableMeta] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",", 2)
        if len(parts) < 2:
            raise DataError(f"schema line {lineno}: expected 'name,kind[,levels]'")
        name, kind = parts[0].strip(), parts[1].strip()
        levels: tuple[str, ...] = ()
        if len(parts) == 3 and parts[2].strip():
            sep = "|" if "|" in parts[2] and "<" not in parts[2] else "<"
            levels = tuple(tok.strip() for tok in parts[2].split(sep))
        if name in schema:
            raise DataError(f"schema line {lineno}: duplicated variable {name!r}")
        try:
            schema[name] = VariableMeta(name, kind, levels)
        except DataError as exc:
            raise DataError(f"schema line {lineno}: {exc}") from None
    return schema


def load_schema(path) -> dict[str, VariableMeta]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read schema file {path}: {exc}") from None
    return parse_schema(text)


def _infer_meta(name: str, tokens: list[str]) -> VariableMeta:
    try:
        for tok in tokens:
            float(tok)
    except ValueError:
        return VariableMeta(name, DISCRETE, tuple(sorted(set(tokens))))
    return VariableMeta(name, CONTINUOUS)


def _read_rows(path) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [row for row in csv.reader(fh)]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    except (UnicodeDecodeError, csv.Error) as exc:
        raise DataError(f"cannot parse {path}: {exc}") from None
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: missing header row")
    header = [h.strip() for h in rows[0]]
    return header, [[c.strip() for c in r] for r in rows[1:]]


def load_dataset(path, schema="infer", missing: str = "reject") -> Dataset:
    """Read a CSV file with a header row into a :class:`Dataset`.

    ``schema`` is ``"infer"``, a path to a sidecar schema file, or a mapping
    from column name to :class:`VariableMeta`. Inference only distinguishes
    continuous (every cell numeric) from discrete; ordinal columns must be
    declared, and their level order always comes from the declaration.
    ``missing`` is ``"reject"`` or ``"drop"`` (drop incomplete rows).
    """
    if missing not in ("reject", "drop"):
        raise DataError(f"missing policy must be 'reject' or 'drop', got {missing!r}")
    header, rows = _read_rows(path)
    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicated column names in header")
    for i, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise DataError(f"{path}: row {i} has {len(row)} fields, header has {len(header)}")

    kept = []
    for i, row in enumerate(rows, start=1):
        gaps = [header[j] for j, tok in enumerate(row) if tok in MISSING_TOKENS]
        if gaps:
            if missing == "reject":
                raise DataError(f"{path}: row {i}, column {gaps[0]!r}: missing value")
            continue
        kept.append((i, row))
    if not kept:
        raise DataError(f"{path}: n >= 1 violated: no complete data rows")

    if isinstance(schema, str) and schema == "infer":
        metas = [_infer_meta(name, [r[j] for _, r in kept]) for j, name in enumerate(header)]
    else:
        mapping = schema if isinstance(schema, Mapping) else load_schema(schema)
        missing_cols = [h for h in header if h not in mapping]
        extra = [k for k in mapping if k not in header]
        if missing_cols or extra:
            raise DataError(
                f"{path}: schema inconsistent with columns "
                f"(undeclared: {missing_cols}, not in file: {extra})"
            )
        metas = [mapping[h] for h in header]

    columns = []
    for j, meta in enumerate(metas):
        if meta.kind == CONTINUOUS:
            vals = np.empty(len(kept))
            for k, (i, row) in enumerate(kept):
                try:
                    vals[k] = float(row[j])
                except ValueError:
                    raise DataError(
                        f"{path}: row {i}, column {meta.name!r}: non-numeric value {row[j]!r}"
                    ) from None
                if not math.isfinite(vals[k]):
                    raise DataError(f"{path}: row {i}, column {meta.name!r}: non-finite value")
        else:
            lookup = {lab: idx for idx, lab in enumerate(meta.levels)}
            vals = np.empty(len(kept), dtype=np.int64)
            for k, (i, row) in enumerate(kept):
                try:
                    vals[k] = lookup[row[j]]
                except KeyError:
                    raise DataError(
                        f"{path}: row {i}, column {meta.name!r}: unknown level {row[j]!r}"
                    ) from None
        columns.append(vals)
    return Dataset(tuple(metas), tuple(columns))


# -- genotypes ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GenotypeTable:
    """n x m biallelic genotype calls, stored as copies of the ``A`` allele."""

    snp_names: tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2:
            raise DataError("genotype calls must form an n x m matrix")
        if counts.shape[1] != len(self.snp_names):
            raise DataError("number of SNP names does not match number of columns")
        if counts.shape[0] < 1:
            raise DataError("n >= 1 violated: no samples")
        if counts.size and not np.isin(counts, (0, 1, 2)).all():
            raise DataError("genotype calls must be allele counts in {0, 1, 2}")
        object.__setattr__(self, "snp_names", tuple(self.snp_names))
        object.__setattr__(self, "counts", _frozen(counts.astype(np.int8)))

    @classmethod
    def from_tokens(cls, snp_names, calls) -> "GenotypeTable":
        calls = np.asarray(calls, dtype=object)
        counts = np.empty(calls.shape, dtype=np.int8)
        for (i, j), tok in np.ndenumerate(calls):
            try:
                counts[i, j] = _TOKEN_TO_COUNT[tok]
            except KeyError:
                raise DataError(f"sample {i + 1}, SNP {snp_names[j]!r}: invalid genotype {tok!r}") from None
        return cls(tuple(snp_names), counts)

    @property
    def n(self) -> int:
        return self.counts.shape[0]

    @property
    def m(self) -> int:
        return self.counts.shape[1]

    @property
    def samples(self) -> int:
        return self.n

    @property
    def snps(self) -> int:
        return self.m

    def tokens(self) -> np.ndarray:
        lookup = np.array([_COUNT_TO_TOKEN[c] for c in (0, 1, 2)], dtype=object)
        return lookup[self.counts]

    def relabel_by_frequency(self) -> "GenotypeTable":
        """Swap ``A``/``a`` per SNP so that ``A`` is the more common allele."""
        freq_a = self.counts.mean(axis=0) / 2.0
        flip = freq_a < 0.5
        counts = np.where(flip[None, :], 2 - self.counts, self.counts)
        return GenotypeTable(self.snp_names, counts)

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.snp_names)
        for row in self.tokens():
            writer.writerow(list(row))
        return buf.getvalue()

    def __eq__(self, other):
        if not isinstance(other, GenotypeTable):
            return NotImplemented
        return self.snp_names == other.snp_names and np.array_equal(self.counts, other.counts)

    __hash__ = None


def load_genotypes(path, fmt: str = "tokens", labelling: str = "alphabetical") -> GenotypeTable:
    """Read genotype calls.

    ``fmt="tokens"`` expects a CSV of ``AA``/``Aa``/``aa`` cells; ``fmt="counts"``
    a whitespace-separated 0/1/2 matrix with a header, where the six leading
    PLINK ``.raw`` columns (FID IID PAT MAT SEX PHENOTYPE) are skipped when
    present. ``labelling="alphabetical"`` keeps the labels of the file;
    ``"frequency"`` relabels each SNP so that ``A`` is the common allele.
    """
    if labelling not in ("alphabetical", "frequency"):
        raise DataError(f"labelling must be 'alphabetical' or 'frequency', got {labelling!r}")
    if fmt == "tokens":
        header, rows = _read_rows(path)
        if not rows:
            raise DataError(f"{path}: n >= 1 violated: no data rows")
        for i, row in enumerate(rows, start=1):
            if len(row) != len(header):
                raise DataError(f"{path}: row {i} has {len(row)} fields, header has {len(header)}")
        table = GenotypeTable.from_tokens(header, rows)
    elif fmt == "counts":
        try:
            lines = [ln.split() for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
        except OSError as exc:
            raise DataError(f"cannot read {path}: {exc}") from None
        if not lines:
            raise DataError(f"{path}: missing header row")
        header, body = lines[0], lines[1:]
        skip = len(PLINK_RAW_LEADING) if tuple(header[:6]) == PLINK_RAW_LEADING else 0
        if not body:
            raise DataError(f"{path}: n >= 1 violated: no data rows")
        counts = np.empty((len(body), len(header) - skip), dtype=np.int8)
        for i, row in enumerate(body, start=1):
            if len(row) != len(header):
                raise DataError(f"{path}: row {i} has {len(row)} fields, header has {len(header)}")
            for j, tok in enumerate(row[skip:]):
                if tok not in ("0", "1", "2"):
                    raise DataError(f"{path}: row {i}, SNP {header[skip + j]!r}: invalid allele count {tok!r}")
                counts[i - 1, j] = int(tok)
        table = GenotypeTable(tuple(header[skip:]), counts)
    else:
        raise DataError(f"genotype format must be 'tokens' or 'counts', got {fmt!r}")
    if labelling == "frequency":
        table = table.relabel_by_frequency()
    return table


def recode_snps(g: GenotypeTable, scheme: str = "centered") -> Dataset:
    """Recode genotype calls as ordinal columns with numeric level labels.

    ``centered`` maps AA, Aa, aa to 1, 0, -1 and ``allele_count`` to 2, 1, 0.
    Levels are stored in ascending numeric order, which makes ``aa < Aa < AA``
    the ordinal order for both schemes.
    """
    try:
        levels = RECODING_SCHEMES[scheme]
    except KeyError:
        raise DataError(f"unknown recoding scheme {scheme!r}; use one of {sorted(RECODING_SCHEMES)}") from None
    # level index 0, 1, 2 equals the allele count under both schemes
    variables = tuple(VariableMeta(name, ORDINAL, levels) for name in g.snp_names)
    columns = tuple(g.counts[:, j].astype(np.int64) for j in range(g.m))
    return Dataset(variables, columns)


def decode_snps(d: Dataset, names: Sequence[str] | None = None) -> GenotypeTable:
    """Inverse of :func:`recode_snps` for columns with a recoding level set."""
    names = list(names) if names is not None else d.names
    counts = np.empty((d.n, len(names)), dtype=np.int8)
    for j, name in enumerate(names):
        meta = d.meta(name)
        if meta.levels not in RECODING_SCHEMES.values():
            raise DataError(f"column {name!r} is not a recoded SNP")
        counts[:, j] = d.column(name)
    return GenotypeTable(tuple(names), counts)


# -- preprocessing --------------------------------------------------------


def box_cox(column, lam: float) -> np.ndarray:
    """Box-Cox transform ``(y**lam - 1) / lam``, or ``log y`` when ``lam == 0``."""
    y = np.asarray(column, dtype=np.float64)
    bad = np.flatnonzero(~(y > 0))
    if bad.size:
        i = int(bad[0])
        raise DataError(f"box_cox requires strictly positive values; row {i + 1} has {y[i]!r}")
    if lam == 0:
        return np.log(y)
    return (np.power(y, lam) - 1.0) / lam


# -- contingency tables ----------------------------------------------------


@dataclass(frozen=True, eq=False)
class ContingencyTable:
    """Counts ``n[i, s, k]`` for row variable level i, column level s, stratum k."""

    counts: np.ndarray
    x_levels: tuple[str, ...] = ()
    y_levels: tuple[str, ...] = ()
    strata: tuple[tuple[str, ...], ...] = ()

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim == 2:
            counts = counts[:, :, None]
        if counts.ndim != 3:
            raise DataError("contingency counts must have shape (T, C, L)")
        if counts.size and (counts.min() < 0 or not np.all(np.equal(np.mod(counts, 1), 0))):
            raise DataError("contingency counts must be nonnegative integers")
        counts = counts.astype(np.int64)
        object.__setattr__(self, "counts", _frozen(counts))
        T, C, L = counts.shape
        if not self.x_levels:
            object.__setattr__(self, "x_levels", tuple(str(i) for i in range(T)))
        if not self.y_levels:
            object.__setattr__(self, "y_levels", tuple(str(s) for s in range(C)))
        if not self.strata:
            object.__setattr__(self, "strata", tuple((str(k),) for k in range(L)))
        if (len(self.x_levels), len(self.y_levels), len(self.strata)) != counts.shape:
            raise DataError("level labels do not match table dimensions")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.counts.shape

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def row_margins(self) -> np.ndarray:
        """``n[i, +, k]`` with shape (T, L)."""
        return self.counts.sum(axis=1)

    @property
    def col_margins(self) -> np.ndarray:
        """``n[+, s, k]`` with shape (C, L)."""
        return self.counts.sum(axis=0)

    @property
    def stratum_totals(self) -> np.ndarray:
        return self.counts.sum(axis=(0, 1))

    def stratum(self, k: int) -> np.ndarray:
        """The T x C slice of stratum k."""
        return self.counts[:, :, k]


def categorical_codes(d: Dataset, name: str, allow_continuous: bool = False) -> tuple[np.ndarray, tuple[str, ...]]:
    """Level indices and labels of a column.

    With ``allow_continuous`` a continuous column is mapped to the ranks of
    its distinct values, which keeps every order relation and tie.
    """
    meta = d.meta(name)
    col = d.column(name)
    if meta.is_categorical:
        return col, meta.levels
    if not allow_continuous:
        raise DataError(f"variable {name!r} is continuous; a categorical variable is required")
    uniq, codes = np.unique(col, return_inverse=True)
    return codes.astype(np.int64), tuple(repr(float(u)) for u in uniq)


def strata_codes(d: Dataset, cond: Sequence[str]) -> tuple[np.ndarray, int, list[tuple[str, ...]]]:
    """Joint configuration index of the conditioning variables.

    Configurations are numbered in lexicographic level order with the first
    variable most significant; every configuration is counted, observed or not.
    """
    k = np.zeros(d.n, dtype=np.int64)
    L = 1
    labels: list[tuple[str, ...]] = [()]
    for name in cond:
        meta = d.meta(name)
        if not meta.is_categorical:
            raise DataError(f"conditioning variable {name!r} is continuous; a categorical variable is required")
        k = k * meta.n_levels + d.column(name)
        L *= meta.n_levels
        labels = [lab + (lev,) for lab in labels for lev in meta.levels]
    return k, L, labels


def _check_distinct(x, y, cond):
    names = [x, y, *cond]
    if len(set(names)) != len(names):
        raise DataError(f"test variables must be distinct, got x={x!r}, y={y!r}, cond={list(cond)}")


def build_table(d: Dataset, x: str, y: str, cond: Sequence[str] = (), allow_continuous: bool = False) -> ContingencyTable:
    _check_distinct(x, y, cond)
    xc, xl = categorical_codes(d, x, allow_continuous)
    yc, yl = categorical_codes(d, y, allow_continuous)
    k, L, labels = strata_codes(d, cond)
    T, C = len(xl), len(yl)
    if L > 1 and np.bincount(k, minlength=L).max() < 2:
        raise UntestableError(
            f"{L} conditioning strata for {d.n} observations: every stratum has fewer than 2 rows"
        )
    flat = (xc * C + yc) * L + k
    counts = np.bincount(flat, minlength=T * C * L).reshape(T, C, L)
    table = ContingencyTable(counts, xl, yl, tuple(labels))
    assert table.n == d.n
    assert np.array_equal(table.row_margins, counts.sum(axis=1))
    return table


def contingency_table(d: Dataset, x1: str, x3: str, cond: Sequence[str] = ()) -> ContingencyTable:
    """Cross-tabulate two categorical variables within the strata of ``cond``."""
    return build_table(d, x1, x3, cond, allow_continuous=False)
