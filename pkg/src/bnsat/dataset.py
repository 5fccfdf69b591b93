"""Complete discrete data stored as distinct joint instantiations with counts.

A dataset never stores one record per sample: equal rows are aggregated into
a count map, and all downstream statistics are contingency counts over
variable subsets.  Cell keys use mixed-radix integers internally (first
variable most significant, last varies fastest); the external text format
uses value labels.
"""

from __future__ import annotations

import csv
import hashlib
import io
import warnings
from dataclasses import dataclass, field
from math import prod

import numpy as np


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class VariableDecl:
    """A named discrete variable with an ordered tuple of value labels."""

    name: str
    values: tuple[str, ...]

    def __post_init__(self):
        if len(self.values) < 1:
            raise DatasetError(f"variable {self.name!r} has no values")
        if len(set(self.values)) != len(self.values):
            raise DatasetError(f"variable {self.name!r} has duplicate value labels")
        if len(self.values) == 1:
            warnings.warn(f"variable {self.name!r} has arity 1", stacklevel=2)

    @property
    def arity(self) -> int:
        return len(self.values)


@dataclass
class Dataset:
    """Distinct joint instantiations (tuples of value indices) with counts."""

    schema: tuple[VariableDecl, ...]
    rows: dict[tuple[int, ...], int]
    _mat: np.ndarray | None = field(default=None, repr=False, compare=False)
    _cnt: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.schema)
        for key, count in self.rows.items():
            if len(key) != n:
                raise DatasetError(f"row {key} has length {len(key)}, expected {n}")
            if count < 1:
                raise DatasetError(f"row {key} has nonpositive count {count}")
            for j, v in enumerate(key):
                if not 0 <= v < self.schema[j].arity:
                    raise DatasetError(
                        f"row {key}: value {v} out of range for {self.schema[j].name!r}"
                    )

    @property
    def total(self) -> int:
        return sum(self.rows.values())

    @property
    def n_vars(self) -> int:
        return len(self.schema)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct rows as an (R, n) int matrix plus the parallel count vector."""
        if self._mat is None:
            keys = sorted(self.rows)
            self._mat = np.array(keys, dtype=np.int64).reshape(len(keys), self.n_vars)
            self._cnt = np.array([self.rows[k] for k in keys], dtype=np.int64)
        return self._mat, self._cnt

    def to_counts_text(self) -> str:
        """One line per distinct instantiation, sorted by instantiation key."""
        out = io.StringIO()
        out.write("# bnsat counts format=1\n")
        for v in self.schema:
            out.write(f"# var {v.name} {','.join(v.values)}\n")
        for key in sorted(self.rows):
            labels = ",".join(self.schema[j].values[v] for j, v in enumerate(key))
            out.write(f"{labels}\t{self.rows[key]}\n")
        return out.getvalue()

    @classmethod
    def from_counts_text(cls, text: str) -> "Dataset":
        schema: list[VariableDecl] = []
        rows: dict[tuple[int, ...], int] = {}
        lookup: list[dict[str, int]] = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts[:1] == ["var"]:
                    if len(parts) != 3:
                        raise DatasetError(f"line {lineno}: malformed var header")
                    decl = VariableDecl(parts[1], tuple(parts[2].split(",")))
                    schema.append(decl)
                    lookup.append({lab: i for i, lab in enumerate(decl.values)})
                continue
            if not schema:
                raise DatasetError(f"line {lineno}: data before schema header")
            try:
                labels_part, count_part = line.split("\t")
            except ValueError as exc:
                raise DatasetError(f"line {lineno}: expected '<labels>\\t<count>'") from exc
            labels = labels_part.split(",")
            if len(labels) != len(schema):
                raise DatasetError(f"line {lineno}: expected {len(schema)} values")
            try:
                key = tuple(lookup[j][lab] for j, lab in enumerate(labels))
            except KeyError as exc:
                raise DatasetError(f"line {lineno}: unknown value label {exc}") from exc
            if key in rows:
                raise DatasetError(f"line {lineno}: duplicate instantiation")
            rows[key] = int(count_part)
        return cls(tuple(schema), rows)

    def digest(self) -> str:
        """SHA-256 of the canonical counts text; identifies the data downstream."""
        return hashlib.sha256(self.to_counts_text().encode()).hexdigest()


@dataclass
class ContingencyTable:
    """Counts of the joint instantiations of a variable subset.

    ``cells`` maps mixed-radix keys over the subset (in the order given,
    last variable fastest) to counts; only nonzero cells are stored while
    ``num_cells_possible`` reflects the full table size.
    """

    subset: tuple[int, ...]
    cells: dict[int, int]
    num_cells_possible: int
    arities: tuple[int, ...]

    def key_to_values(self, key: int) -> tuple[int, ...]:
        vals = []
        for a in reversed(self.arities):
            vals.append(key % a)
            key //= a
        return tuple(reversed(vals))

    def total(self) -> int:
        return sum(self.cells.values())


def project(data: Dataset, subset: tuple[int, ...] | list[int]) -> ContingencyTable:
    """Contingency counts of ``subset``; the empty subset has one cell of size N."""
    subset = tuple(subset)
    n = data.n_vars
    if len(set(subset)) != len(subset):
        raise DatasetError(f"duplicate index in subset {subset}")
    for j in subset:
        if not 0 <= j < n:
            raise DatasetError(f"index {j} out of range")
    if not subset:
        return ContingencyTable((), {0: data.total}, 1, ())
    arities = tuple(data.schema[j].arity for j in subset)
    q = prod(arities)
    mat, cnt = data.arrays()
    if len(cnt) == 0:
        return ContingencyTable(subset, {}, q, arities)
    keys = mat[:, subset[0]].copy()
    for j, a in zip(subset[1:], arities[1:]):
        keys *= a
        keys += mat[:, j]
    if q <= max(1024, 8 * len(cnt)):
        acc = np.zeros(q, dtype=np.int64)
        np.add.at(acc, keys, cnt)
        nz = np.nonzero(acc)[0]
        cells = {int(k): int(acc[k]) for k in nz}
    else:
        order = np.argsort(keys, kind="stable")
        cells = {}
        for k, c in zip(keys[order], cnt[order]):
            k = int(k)
            cells[k] = cells.get(k, 0) + int(c)
    return ContingencyTable(subset, cells, q, arities)


def ingest_csv(text: str, schema: tuple[VariableDecl, ...] | None = None) -> Dataset:
    """Aggregate a CSV of instantiations (header = variable names) into a Dataset.

    Cells may hold value labels or integer indices.  Without a schema, each
    column's values are the distinct observed strings, sorted numerically
    when all parse as integers and lexicographically otherwise.
    """
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DatasetError("empty CSV") from None
    header = [h.strip() for h in header]
    raw_rows = []
    for lineno, row in enumerate(reader, 2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            raise DatasetError(f"line {lineno}: ragged row ({len(row)} of {len(header)} fields)")
        raw_rows.append([c.strip() for c in row])

    if schema is None:
        cols = []
        for j, name in enumerate(header):
            observed = sorted({r[j] for r in raw_rows})
            if not observed:
                raise DatasetError(f"column {name!r} has no data to infer values from")
            try:
                observed.sort(key=int)
            except ValueError:
                pass
            cols.append(VariableDecl(name, tuple(observed)))
        schema = tuple(cols)
    else:
        schema = tuple(schema)
        by_name = {v.name: v for v in schema}
        if set(header) != set(by_name):
            raise DatasetError(
                f"CSV columns {header} do not match schema names {sorted(by_name)}"
            )
        # reorder columns to schema order
        perm = [header.index(v.name) for v in schema]
        raw_rows = [[r[p] for p in perm] for r in raw_rows]

    lookup = [{lab: i for i, lab in enumerate(v.values)} for v in schema]
    rows: dict[tuple[int, ...], int] = {}
    for r in raw_rows:
        key = []
        for j, cell in enumerate(r):
            if cell in lookup[j]:
                key.append(lookup[j][cell])
            else:
                try:
                    idx = int(cell)
                except ValueError:
                    idx = -1
                if 0 <= idx < schema[j].arity:
                    key.append(idx)
                else:
                    raise DatasetError(
                        f"value {cell!r} not in schema for variable {schema[j].name!r}"
                    )
        key = tuple(key)
        rows[key] = rows.get(key, 0) + 1
    return Dataset(schema, rows)
