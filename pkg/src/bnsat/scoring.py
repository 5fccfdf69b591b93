"""Exact log marginal-likelihood family scores for discrete data.

The score of a child variable with a candidate parent set factorizes into a
ratio of subset statistics H: log Score(child | parents) equals
log H(parents + child) - log H(parents), where

    H(X) = prod over the q_X cells of  Gamma(n_cell + a/q_X) / Gamma(a/q_X)

with ``a`` the prior precision.  Zero-count cells contribute a factor of 1
and are skipped, but q_X always counts every cell of the full table, using
declared arities rather than observed support.  All arithmetic stays in log
space; scores are never exponentiated.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, field
from itertools import combinations
from math import prod
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.special import gammaln

from .dataset import Dataset, VariableDecl, project


class ScoreTableError(ValueError):
    pass


class HCache:
    """Memo for log H keyed by sorted variable-index tuple.  Write-once per key."""

    __slots__ = ("values", "computations")

    def __init__(self):
        self.values: dict[tuple[int, ...], float] = {}
        self.computations = 0


def log_h(
    data: Dataset,
    subset: tuple[int, ...] | list[int],
    alpha: float = 1.0,
    cache: HCache | None = None,
) -> float:
    """log H of a variable subset; the empty subset gives log Gamma(N + alpha) - log Gamma(alpha)."""
    key = tuple(sorted(subset))
    if cache is not None:
        hit = cache.values.get(key)
        if hit is not None:
            return hit
    table = project(data, key)
    a = alpha / table.num_cells_possible
    if table.cells:
        counts = np.fromiter(table.cells.values(), dtype=np.float64, count=len(table.cells))
        value = float(np.sum(gammaln(counts + a)) - len(counts) * gammaln(a))
    else:
        value = 0.0
    if cache is not None:
        cache.values.setdefault(key, value)
        cache.computations += 1
    return value


def family_score(
    data: Dataset,
    child: int,
    parents: tuple[int, ...] | list[int],
    alpha: float = 1.0,
    cache: HCache | None = None,
) -> float:
    """Exact log score of ``child | parents`` via the H decomposition."""
    parents = tuple(parents)
    if child in parents:
        raise ScoreTableError(f"child {child} contained in parent set {parents}")
    family = parents + (child,)
    return log_h(data, family, alpha, cache) - log_h(data, parents, alpha, cache)


def family_score_direct(
    data: Dataset,
    child: int,
    parents: tuple[int, ...] | list[int],
    alpha: float = 1.0,
) -> float:
    """Direct evaluation from the per-cell Gamma-ratio product.

    Independent of the H route; kept as the second leg of the internal
    cross-check and used only by tests and debug assertions.
    """
    parents = tuple(parents)
    if child in parents:
        raise ScoreTableError(f"child {child} contained in parent set {parents}")
    r = data.schema[child].arity
    q = prod(data.schema[j].arity for j in parents)
    a_j = alpha / q
    a_jk = alpha / (q * r)
    # project with the child as the fastest-varying position: cell key = j*r + k
    table = project(data, parents + (child,))
    n_j: dict[int, int] = {}
    score = 0.0
    for key, c in table.cells.items():
        n_j[key // r] = n_j.get(key // r, 0) + c
        score += gammaln(c + a_jk) - gammaln(a_jk)
    for c in n_j.values():
        score += gammaln(a_j) - gammaln(c + a_j)
    return float(score)


@dataclass
class ScoreTable:
    """Per-child map from candidate parent set to exact log family score."""

    names: tuple[str, ...]
    arities: tuple[int, ...]
    alpha: float
    max_parents: int
    entries: list[dict[tuple[int, ...], float]]
    dataset_digest: str | None = None
    pruned: bool = False
    prune_ties: bool = False
    kept: tuple[int, ...] | None = None
    dropped: tuple[int, ...] | None = None

    @property
    def n_vars(self) -> int:
        return len(self.names)

    def num_scores(self) -> int:
        return sum(len(e) for e in self.entries)

    def best_subset_of(self, child: int, parents: tuple[int, ...]) -> tuple[tuple[int, ...], float]:
        """Highest-scoring stored entry among all subsets of ``parents``."""
        entry = self.entries[child]
        if () not in entry:
            raise ScoreTableError(f"no empty-parent-set score for child {self.names[child]!r}")
        best_set, best = (), entry[()]
        for k in range(1, len(parents) + 1):
            for sub in combinations(sorted(parents), k):
                s = entry.get(sub)
                if s is not None and s > best:
                    best_set, best = sub, s
        return best_set, best

    def to_text(self) -> str:
        out = io.StringIO()
        out.write("# bnsat scores format=1\n")
        out.write(f"# alpha={self.alpha!r} max_parents={self.max_parents}\n")
        out.write(f"# dataset_sha256={self.dataset_digest or '-'}\n")
        out.write(f"# pruned={'true' if self.pruned else 'false'}")
        if self.pruned:
            out.write(f" ties={'prune' if self.prune_ties else 'keep'}")
        out.write("\n")
        for name, arity in zip(self.names, self.arities):
            out.write(f"# var {name} {arity}\n")
        if self.kept is not None and self.dropped is not None:
            for name, k, d in zip(self.names, self.kept, self.dropped):
                out.write(f"# candidates {name} kept={k} dropped={d}\n")
        for child, entry in enumerate(self.entries):
            child_name = self.names[child]
            for pa in sorted(entry):
                pa_names = ",".join(sorted(self.names[j] for j in pa)) or "-"
                out.write(f"{child_name}\t{pa_names}\t{entry[pa]!r}\n")
        return out.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "ScoreTable":
        names: list[str] = []
        arities: list[int] = []
        alpha = 1.0
        max_parents = 0
        digest: str | None = None
        pruned = False
        prune_ties = False
        kept: dict[str, int] = {}
        dropped: dict[str, int] = {}
        body: list[tuple[str, str, float]] = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if not parts:
                    continue
                if parts[0] == "var":
                    names.append(parts[1])
                    arities.append(int(parts[2]))
                elif parts[0] == "candidates":
                    kept[parts[1]] = int(parts[2].split("=")[1])
                    dropped[parts[1]] = int(parts[3].split("=")[1])
                else:
                    for p in parts:
                        if p.startswith("alpha="):
                            alpha = float(p[6:])
                        elif p.startswith("max_parents="):
                            max_parents = int(p[12:])
                        elif p.startswith("dataset_sha256="):
                            digest = p[15:]
                            if digest == "-":
                                digest = None
                        elif p.startswith("pruned="):
                            pruned = p[7:] == "true"
                        elif p.startswith("ties="):
                            prune_ties = p[5:] == "prune"
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise ScoreTableError(f"line {lineno}: expected 3 tab-separated fields")
            body.append((fields[0], fields[1], float(fields[2])))
        index = {name: j for j, name in enumerate(names)}
        entries: list[dict[tuple[int, ...], float]] = [{} for _ in names]
        for child_name, pa_names, score in body:
            if child_name not in index:
                raise ScoreTableError(f"unknown child variable {child_name!r}")
            pa = ()
            if pa_names != "-":
                try:
                    pa = tuple(sorted(index[p] for p in pa_names.split(",")))
                except KeyError as exc:
                    raise ScoreTableError(f"unknown parent variable {exc}") from exc
            entries[index[child_name]][pa] = score
        table = cls(
            tuple(names), tuple(arities), alpha, max_parents, entries,
            dataset_digest=digest, pruned=pruned, prune_ties=prune_ties,
        )
        if kept:
            table.kept = tuple(kept.get(n, 0) for n in names)
            table.dropped = tuple(dropped.get(n, 0) for n in names)
        return table

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()


def enumerate_scores(
    data: Dataset,
    max_parents: int = 3,
    alpha: float = 1.0,
    threads: int = 1,
) -> ScoreTable:
    """Score every parent set of size <= max_parents for every child.

    log H is evaluated once per subset of size <= max_parents + 1 and shared
    through a cache; family scores are then differences of cached values.
    """
    n = data.n_vars
    if not 0 <= max_parents < n:
        raise ScoreTableError(f"max_parents={max_parents} must lie in [0, {n})")
    cache = HCache()
    indices = range(n)

    def score_child(child: int) -> dict[tuple[int, ...], float]:
        others = [j for j in indices if j != child]
        entry: dict[tuple[int, ...], float] = {}
        for k in range(max_parents + 1):
            for pa in combinations(others, k):
                entry[pa] = family_score(data, child, pa, alpha, cache)
        return entry

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            entries = list(pool.map(score_child, indices))
    else:
        entries = [score_child(child) for child in indices]
    return ScoreTable(
        names=tuple(v.name for v in data.schema),
        arities=tuple(v.arity for v in data.schema),
        alpha=alpha,
        max_parents=max_parents,
        entries=entries,
        dataset_digest=data.digest(),
    )
