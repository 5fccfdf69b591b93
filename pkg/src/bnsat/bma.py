"""Model averaging over the structures visited during search.

Whenever the walker satisfies every hard clause with exactly one family
atom true per child, the selected parent-set vector is recorded.  Distinct
vectors are deduplicated in-process, the best ``keep_top`` by exact score
are kept, and their renormalized weights estimate posterior probabilities
of parent sets, with zero probability for structures never encountered.
All weight arithmetic goes through log-sum-exp; raw scores are never
exponentiated on their own.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .bif import CyclicNetworkError, topological_order
from .encoder import AtomMap, Wcnf
from .solver import SolverConfig, SolverStats, solve


class BmaError(ValueError):
    pass


@dataclass(frozen=True)
class SearchRecord:
    """One distinct feasible structure: family atom ids per child, in child order."""

    vector: tuple[int, ...]
    score: float  # exact log score, sum of unrounded family scores
    cost: int  # sum of rounded clause weights


def _instance_key(atom_map: AtomMap) -> str:
    return f"{atom_map.mode}/{atom_map.cycle}/{atom_map.scores_digest or '-'}"


class HarvestObserver:
    """Solver observer tracking per-child true-family counts incrementally.

    Emission is O(1) per flip: a record is taken only when no hard clause is
    violated and every child has exactly one true family atom; per-child
    sums of true atom ids then directly spell the vector.
    """

    def __init__(self, atom_map: AtomMap):
        self.n = atom_map.n_vars
        self.child_of = [-1] * (atom_map.num_atoms + 1)
        for aid in range(1, atom_map.num_atoms + 1):
            atom = atom_map.atoms[aid]
            if atom.kind == "family":
                self.child_of[aid] = atom.child
        self.count = [0] * self.n
        self.id_sum = [0] * self.n
        self.bad = self.n  # children whose count != 1
        self.dirty = True
        self.records: set[tuple[int, ...]] = set()

    def on_try_start(self, state):
        self.count = [0] * self.n
        self.id_sum = [0] * self.n
        assignment = state.assignment
        for aid, child in enumerate(self.child_of):
            if child >= 0 and assignment[aid]:
                self.count[child] += 1
                self.id_sum[child] += aid
        self.bad = sum(1 for c in self.count if c != 1)
        self.dirty = True

    def on_flip(self, atom, value):
        child = self.child_of[atom]
        if child < 0:
            return
        was = self.count[child]
        if value:
            self.count[child] = was + 1
            self.id_sum[child] += atom
        else:
            self.count[child] = was - 1
            self.id_sum[child] -= atom
        now = self.count[child]
        if (was == 1) != (now == 1):
            self.bad += 1 if was == 1 else -1
        self.dirty = True

    def on_feasible(self, state):
        if self.bad == 0 and self.dirty:
            self.records.add(tuple(self.id_sum))
            self.dirty = False


def harvest(
    problem: Wcnf,
    atom_map: AtomMap,
    config: SolverConfig,
    keep_top: int = 1_000_000,
) -> tuple[list[SearchRecord], SolverStats]:
    """Run the solver, streaming feasible structures into a deduplicated pool.

    Requires a hard-acyclic encoding (cycle mode none or hard) so that
    feasibility implies acyclicity; each distinct vector is nevertheless
    re-checked with an independent topological sort.
    """
    if atom_map.cycle not in ("none", "hard"):
        raise BmaError(
            f"harvest requires cycle mode 'none' or 'hard', not {atom_map.cycle!r}"
        )
    if keep_top < 1:
        raise BmaError("keep_top must be positive")
    observer = HarvestObserver(atom_map)
    _, _, stats = solve(problem, config, observer=observer)
    records = []
    for vec in observer.records:
        records.append(_record_from_vector(vec, atom_map))
    records.sort(key=lambda r: (-r.score, r.vector))
    return records[:keep_top], stats


def _record_from_vector(vec: tuple[int, ...], atom_map: AtomMap) -> SearchRecord:
    parents = []
    score = 0.0
    cost = 0
    for child, aid in enumerate(vec):
        atom = atom_map.atoms[aid]
        if atom.kind != "family" or atom.child != child:
            raise BmaError(f"atom {aid} is not a family atom for child {child}")
        parents.append(atom.parents)
        score += atom.score
        cost += atom.weight
    try:
        topological_order(tuple(parents))
    except CyclicNetworkError as exc:
        raise BmaError(f"harvested vector {vec} decodes to a cyclic structure") from exc
    return SearchRecord(vec, score, cost)


@dataclass
class PosteriorEstimate:
    """Estimated P(child chooses parent set) for every set seen in the pool."""

    probs: dict[tuple[int, int], float]  # (child, family atom id) -> probability
    support: int  # number of distinct structures retained
    log_normalizer: float
    instance_key: str | None = None

    def per_child_sums(self, n_vars: int) -> list[float]:
        sums = [0.0] * n_vars
        for (child, _), p in self.probs.items():
            sums[child] += p
        return sums


def estimate(records: list[SearchRecord], atom_map: AtomMap | None = None) -> PosteriorEstimate:
    """Renormalize retained scores and accumulate per-parent-set mass."""
    if not records:
        raise BmaError("cannot estimate a posterior from zero records")
    scores = np.array([r.score for r in records])
    log_z = float(logsumexp(scores))
    weights = np.exp(scores - log_z)
    probs: dict[tuple[int, int], float] = {}
    for rec, w in zip(records, weights):
        for child, aid in enumerate(rec.vector):
            key = (child, aid)
            probs[key] = probs.get(key, 0.0) + float(w)
    return PosteriorEstimate(
        probs=probs,
        support=len(records),
        log_normalizer=log_z,
        instance_key=_instance_key(atom_map) if atom_map is not None else None,
    )


@dataclass
class DivergenceReport:
    pairs: list[tuple[int, int, float, float]]  # (child, atom id, p_a, p_b)
    max_abs_diff: float
    big_differences: int  # both estimates > floor yet differing by > threshold
    floor: float
    threshold: float

    def render(self, atom_map: AtomMap | None = None) -> str:
        lines = [
            f"parent sets compared = {len(self.pairs)}",
            f"max |p_a - p_b| = {self.max_abs_diff:.6f}",
            f"big differences (both > {self.floor}, diff > {self.threshold}) = "
            f"{self.big_differences}",
        ]
        worst = sorted(self.pairs, key=lambda t: -abs(t[2] - t[3]))[:10]
        for child, aid, pa, pb in worst:
            label = atom_map.describe(aid) if atom_map is not None else f"atom {aid}"
            lines.append(f"  {label}: {pa:.6g} vs {pb:.6g}")
        return "\n".join(lines) + "\n"


def compare_runs(
    a: PosteriorEstimate,
    b: PosteriorEstimate,
    threshold: float = 0.1,
    floor: float = 0.01,
) -> DivergenceReport:
    """Scatter pairs and a divergence summary for two runs on one instance."""
    if a.instance_key is not None and b.instance_key is not None:
        if a.instance_key != b.instance_key:
            raise BmaError(
                f"estimates come from different instances: "
                f"{a.instance_key} vs {b.instance_key}"
            )
    keys = sorted(set(a.probs) | set(b.probs))
    pairs = []
    max_diff = 0.0
    big = 0
    for key in keys:
        pa = a.probs.get(key, 0.0)
        pb = b.probs.get(key, 0.0)
        pairs.append((key[0], key[1], pa, pb))
        diff = abs(pa - pb)
        max_diff = max(max_diff, diff)
        if pa > floor and pb > floor and diff > threshold:
            big += 1
    return DivergenceReport(pairs, max_diff, big, floor, threshold)


# ---------------------------------------------------------------------------
# Text formats

def records_to_text(records: list[SearchRecord], atom_map: AtomMap) -> str:
    """One line per distinct structure: rounded cost, then one family atom id
    per child in declaration order.  Sorted by exact score, best first."""
    out = io.StringIO()
    out.write("# bnsat records format=1\n")
    out.write(f"# encoding={atom_map.mode} cycle={atom_map.cycle}\n")
    out.write(f"# scores_sha256={atom_map.scores_digest or '-'}\n")
    out.write("# columns: cost family-atom-id*n\n")
    for rec in records:
        out.write(f"{rec.cost} {' '.join(str(i) for i in rec.vector)}\n")
    return out.getvalue()


def records_from_text(text: str, atom_map: AtomMap) -> list[SearchRecord]:
    records = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != atom_map.n_vars + 1:
            raise BmaError(f"line {lineno}: expected cost plus {atom_map.n_vars} ids")
        vec = tuple(int(x) for x in parts[1:])
        rec = _record_from_vector(vec, atom_map)
        if rec.cost != int(parts[0]):
            raise BmaError(f"line {lineno}: cost {parts[0]} does not match atom weights")
        records.append(rec)
    return records


def posterior_to_text(post: PosteriorEstimate, atom_map: AtomMap) -> str:
    out = io.StringIO()
    out.write("# bnsat posterior format=1\n")
    out.write(f"# support={post.support} log_normalizer={post.log_normalizer!r}\n")
    for (child, aid), p in sorted(post.probs.items(), key=lambda kv: (kv[0][0], -kv[1], kv[0][1])):
        atom = atom_map.atoms[aid]
        pa = ",".join(sorted(atom_map.names[j] for j in atom.parents)) or "-"
        out.write(f"{atom_map.names[child]}\t{pa}\t{p!r}\n")
    return out.getvalue()


def scatter_text(report: DivergenceReport) -> str:
    """Two-column scatter data (p_a, p_b), one parent set per line."""
    out = io.StringIO()
    out.write("# p_run_a\tp_run_b\n")
    for _, _, pa, pb in report.pairs:
        out.write(f"{pa!r}\t{pb!r}\n")
    return out.getvalue()
