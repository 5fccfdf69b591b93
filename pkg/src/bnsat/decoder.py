"""Translate solver assignments back into graphs, independently validated.

Decoding trusts nothing about the encoding's constraint clauses: the chosen
parent sets are re-checked for acyclicity with a topological sort, and the
reported score is the sum of the exact (unrounded) log family scores
carried by the atom map.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .bif import BayesNet, CyclicNetworkError, topological_order
from .dataset import VariableDecl
from .encoder import AtomMap, Wcnf
from .solver import unsat_clauses


class DecodeError(ValueError):
    pass


class CyclicStructureError(DecodeError):
    pass


@dataclass
class LearnedStructure:
    names: tuple[str, ...]
    parents: tuple[tuple[int, ...], ...]  # per child, sorted variable indices
    exact_score: float  # sum of exact log family scores
    rounded_cost: int  # sum of rounded clause weights
    source: str = ""

    @property
    def n_vars(self) -> int:
        return len(self.names)


def decode(assignment, atom_map: AtomMap, strict: bool = True) -> LearnedStructure:
    """Read off each child's true family atom and build the learned DAG.

    Strict mode requires exactly one true family atom per child: zero means
    a violated hard clause, several a mid-search assignment.  Lenient mode
    (diagnostics only) takes the best-scoring one.  A directed cycle, which
    can only be selected under a soft cycle indicator, is always an error.
    """
    n = atom_map.n_vars
    chosen: list[list[int]] = [[] for _ in range(n)]
    for aid in range(1, atom_map.num_atoms + 1):
        atom = atom_map.atoms[aid]
        if atom.kind == "family" and assignment[aid]:
            chosen[atom.child].append(aid)
    parents: list[tuple[int, ...]] = []
    exact = 0.0
    cost = 0
    for child in range(n):
        picks = chosen[child]
        if not picks:
            raise DecodeError(
                f"no parent set selected for {atom_map.names[child]!r} "
                "(a hard clause is violated)"
            )
        if len(picks) > 1:
            if strict:
                raise DecodeError(
                    f"{len(picks)} parent sets selected for {atom_map.names[child]!r} "
                    "(non-final assignment; decode leniently for diagnostics)"
                )
            picks.sort(key=lambda aid: (-atom_map.atoms[aid].score, aid))
        atom = atom_map.atoms[picks[0]]
        parents.append(tuple(sorted(atom.parents)))
        exact += atom.score
        cost += atom.weight
    try:
        topological_order(tuple(parents))
    except CyclicNetworkError as exc:
        raise CyclicStructureError(
            "selected parent sets form a directed cycle (possible only under a "
            "soft cycle indicator; such structures must be filtered out)"
        ) from exc
    source = f"encoding={atom_map.mode} cycle={atom_map.cycle}"
    if atom_map.wcnf_digest:
        source += f" wcnf_sha256={atom_map.wcnf_digest}"
    return LearnedStructure(atom_map.names, tuple(parents), exact, cost, source)


def to_network(learned: LearnedStructure, variables: tuple[VariableDecl, ...]) -> BayesNet:
    """Structure-only BayesNet for export in the serialized network format."""
    if tuple(v.name for v in variables) != learned.names:
        raise DecodeError("variable declarations do not match learned structure")
    return BayesNet("learned", variables, learned.parents, None)


@dataclass
class CompareReport:
    score_learned: float
    score_reference: float
    per_variable: list[tuple[str, tuple[str, ...], tuple[str, ...]]]  # name, learned, reference

    @property
    def score_delta(self) -> float:
        """log of the probability ratio learned/reference under a uniform prior."""
        return self.score_learned - self.score_reference

    @property
    def beats_reference(self) -> bool:
        return self.score_delta >= 0

    def render(self) -> str:
        lines = [
            f"reference score = {self.score_reference:.6f}",
            f"learned score   = {self.score_learned:.6f}",
            f"delta           = {self.score_delta:.6f} "
            f"(probability ratio e^{self.score_delta:.1f}), "
            f"{'>=True' if self.beats_reference else '<True'}",
        ]
        if self.per_variable:
            lines.append("differing parent sets:")
            for name, got, want in self.per_variable:
                lines.append(
                    f"  {name}: learned {{{', '.join(got) or '-'}}} "
                    f"reference {{{', '.join(want) or '-'}}}"
                )
        else:
            lines.append("structures identical")
        return "\n".join(lines) + "\n"


def compare(learned: LearnedStructure, reference: BayesNet, ref_score: float) -> CompareReport:
    """Score difference and per-variable parent diff against a reference net."""
    names = tuple(v.name for v in reference.variables)
    if names != learned.names:
        raise DecodeError("learned structure and reference network differ in schema")
    diffs = []
    for i, name in enumerate(names):
        got = tuple(sorted(names[j] for j in learned.parents[i]))
        want = tuple(sorted(names[j] for j in reference.parents[i]))
        if got != want:
            diffs.append((name, got, want))
    return CompareReport(learned.exact_score, ref_score, diffs)


def unsat_shape_ok(problem: Wcnf, atom_map: AtomMap, assignment) -> tuple[bool, str]:
    """Check the expected shape of a best assignment on hard-acyclic instances:
    the unsatisfied clauses must be exactly one soft family unit per child."""
    ids = unsat_clauses(problem, assignment)
    children = set()
    for ci in ids:
        clause = problem.clauses[ci]
        if clause.weight is None:
            return False, f"hard clause {ci} unsatisfied"
        if len(clause.lits) != 1 or clause.lits[0] >= 0:
            return False, f"unsatisfied soft clause {ci} is not a negative unit"
        atom = atom_map.atoms[-clause.lits[0]]
        if atom.kind != "family":
            return False, f"unsatisfied soft clause {ci} is not a family unit"
        children.add(atom.child)
    n = atom_map.n_vars
    if len(ids) != n or len(children) != n:
        return False, f"{len(ids)} unsatisfied clauses over {len(children)} children, expected {n}"
    return True, f"{len(ids)} unsatisfied soft family units, one per child"
