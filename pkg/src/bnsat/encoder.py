"""Compile a pruned score table into weighted CNF.

Atoms: one per candidate family (child plus parent set), plus either
ancestor-relation atoms an(i, j) for all ordered pairs or order atoms
ord(i, j) for pairs with i < j in declaration order (the documented
collation).  Acyclicity is enforced by transitivity plus 2-cycle bans in
ancestor mode, or by 3-cycle exclusion over the order atoms in order mode
(a tournament with a cycle has a 3-cycle).  An optional cycle indicator
atom replaces the 2-cycle bans with implications into a single atom whose
negation is then asserted hard or soft.

Costs are -1 times the exact log family scores, rounded half away from
zero; rounded-to-zero soft clauses are omitted from the CNF but their
atoms keep exact scores in the atom map, which is what decoding reports.
"""

from __future__ import annotations

import hashlib
import io
import math
from dataclasses import dataclass, field

from .scoring import ScoreTable

HARD = None  # clause weight sentinel
_INT64_MAX = 2**63 - 1


class EncodingError(ValueError):
    pass


class WcnfParseError(ValueError):
    pass


def round_cost(log_score: float) -> int:
    """Integer clause weight for a log score: round half away from zero.

    Log scores are nonpositive (the marginal likelihood is at most 1), so
    the cost -log_score is nonnegative.
    """
    w = int(math.floor(-log_score + 0.5))
    if w < 0:
        raise EncodingError(f"positive log score {log_score!r} has no cost")
    return w


@dataclass(frozen=True)
class Atom:
    """Tagged semantic object behind a dense 1-based integer id."""

    kind: str  # "family" | "anc" | "ord" | "cycle"
    child: int = -1
    parents: tuple[int, ...] = ()
    pair: tuple[int, int] = (-1, -1)
    score: float = 0.0  # exact log score (family atoms only)
    weight: int = 0  # rounded cost (family atoms only)


@dataclass
class Clause:
    lits: tuple[int, ...]
    weight: int | None  # None = hard

    def __post_init__(self):
        if not self.lits:
            raise EncodingError("empty clause")
        seen = set(self.lits)
        if len(seen) != len(self.lits) or any(-l in seen for l in self.lits):
            raise EncodingError(f"duplicate or complementary literals in {self.lits}")
        if self.weight is not None and self.weight <= 0:
            raise EncodingError(f"soft clause weight must be positive, got {self.weight}")


@dataclass
class Wcnf:
    num_atoms: int
    clauses: list[Clause]
    top: int
    provenance: dict[str, str] = field(default_factory=dict)

    def soft_weight_sum(self) -> int:
        return sum(c.weight for c in self.clauses if c.weight is not None)

    def __eq__(self, other):
        if not isinstance(other, Wcnf):
            return NotImplemented
        return (
            self.num_atoms == other.num_atoms
            and self.top == other.top
            and self.clauses == other.clauses
            and self.provenance == other.provenance
        )


@dataclass
class AtomMap:
    """Bidirectional id <-> semantics table emitted alongside the CNF."""

    names: tuple[str, ...]
    mode: str
    cycle: str
    atoms: list[Atom]  # index 0 unused
    scores_digest: str | None = None
    wcnf_digest: str | None = None

    @property
    def num_atoms(self) -> int:
        return len(self.atoms) - 1

    @property
    def n_vars(self) -> int:
        return len(self.names)

    def family_ids(self) -> list[dict[tuple[int, ...], int]]:
        out: list[dict[tuple[int, ...], int]] = [{} for _ in self.names]
        for aid, atom in enumerate(self.atoms):
            if aid and atom.kind == "family":
                out[atom.child][atom.parents] = aid
        return out

    def describe(self, aid: int) -> str:
        atom = self.atoms[aid]
        if atom.kind == "family":
            pa = ",".join(sorted(self.names[j] for j in atom.parents)) or "-"
            return f"family {self.names[atom.child]} <- {pa}"
        if atom.kind == "anc":
            return f"anc({self.names[atom.pair[0]]}, {self.names[atom.pair[1]]})"
        if atom.kind == "ord":
            return f"ord({self.names[atom.pair[0]]}, {self.names[atom.pair[1]]})"
        return "cycle"

    def to_text(self) -> str:
        out = io.StringIO()
        out.write("# bnsat atom-map format=1\n")
        out.write(f"# encoding={self.mode} cycle={self.cycle} collation=declaration-order\n")
        out.write(f"# scores_sha256={self.scores_digest or '-'}\n")
        out.write(f"# wcnf_sha256={self.wcnf_digest or '-'}\n")
        for name in self.names:
            out.write(f"# var {name}\n")
        for aid in range(1, len(self.atoms)):
            atom = self.atoms[aid]
            if atom.kind == "family":
                pa = ",".join(str(j) for j in atom.parents) or "-"
                out.write(f"{aid}\tfamily\t{atom.child}\t{pa}\t{atom.score!r}\t{atom.weight}\n")
            elif atom.kind in ("anc", "ord"):
                out.write(f"{aid}\t{atom.kind}\t{atom.pair[0]}\t{atom.pair[1]}\n")
            else:
                out.write(f"{aid}\tcycle\n")
        return out.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "AtomMap":
        names: list[str] = []
        mode = cycle = ""
        scores_digest = wcnf_digest = None
        atoms: list[Atom] = [Atom("unused")]
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts[:1] == ["var"]:
                    names.append(parts[1])
                else:
                    for p in parts:
                        if p.startswith("encoding="):
                            mode = p[9:]
                        elif p.startswith("cycle="):
                            cycle = p[6:]
                        elif p.startswith("scores_sha256=") and p[14:] != "-":
                            scores_digest = p[14:]
                        elif p.startswith("wcnf_sha256=") and p[12:] != "-":
                            wcnf_digest = p[12:]
                continue
            fields = line.split("\t")
            aid = int(fields[0])
            if aid != len(atoms):
                raise WcnfParseError(f"line {lineno}: atom ids must be dense from 1")
            kind = fields[1]
            if kind == "family":
                parents = () if fields[3] == "-" else tuple(int(x) for x in fields[3].split(","))
                atoms.append(
                    Atom("family", child=int(fields[2]), parents=parents,
                         score=float(fields[4]), weight=int(fields[5]))
                )
            elif kind in ("anc", "ord"):
                atoms.append(Atom(kind, pair=(int(fields[2]), int(fields[3]))))
            elif kind == "cycle":
                atoms.append(Atom("cycle"))
            else:
                raise WcnfParseError(f"line {lineno}: unknown atom kind {kind!r}")
        return cls(tuple(names), mode, cycle, atoms, scores_digest, wcnf_digest)


def _order_literal(a: int, b: int, ord_ids: dict[tuple[int, int], int]) -> int:
    """Literal asserting that a precedes b in the total order."""
    return ord_ids[(a, b)] if a < b else -ord_ids[(b, a)]


def encode(
    scores: ScoreTable,
    mode: str = "ancestor",
    cycle: str = "none",
    cycle_weight: int = 1,
) -> tuple[Wcnf, AtomMap]:
    """Build the weighted CNF and its atom map from a (pruned) score table."""
    if mode not in ("ancestor", "order"):
        raise EncodingError(f"unknown encoding mode {mode!r}")
    if cycle not in ("none", "hard", "soft"):
        raise EncodingError(f"unknown cycle mode {cycle!r}")
    if mode == "order" and cycle != "none":
        raise EncodingError("the cycle indicator applies to the ancestor encoding only")
    n = scores.n_vars
    for child, entry in enumerate(scores.entries):
        if not entry:
            raise EncodingError(f"child {scores.names[child]!r} has no candidate parent sets")

    atoms: list[Atom] = [Atom("unused")]
    family_ids: list[dict[tuple[int, ...], int]] = [{} for _ in range(n)]
    for child, entry in enumerate(scores.entries):
        for pa in sorted(entry, key=lambda t: (len(t), t)):
            s = entry[pa]
            atoms.append(Atom("family", child=child, parents=pa, score=s, weight=round_cost(s)))
            family_ids[child][pa] = len(atoms) - 1

    anc_ids: dict[tuple[int, int], int] = {}
    ord_ids: dict[tuple[int, int], int] = {}
    if mode == "ancestor":
        for i in range(n):
            for j in range(n):
                if i != j:
                    atoms.append(Atom("anc", pair=(i, j)))
                    anc_ids[(i, j)] = len(atoms) - 1
    else:
        for i in range(n):
            for j in range(i + 1, n):
                atoms.append(Atom("ord", pair=(i, j)))
                ord_ids[(i, j)] = len(atoms) - 1
    cycle_id = 0
    if cycle != "none":
        atoms.append(Atom("cycle"))
        cycle_id = len(atoms) - 1

    clauses: list[Clause] = []
    # one (possibly empty) parent set per child
    for child in range(n):
        clauses.append(Clause(tuple(sorted(family_ids[child].values())), HARD))
    # per-family cost units; rounded-to-zero weights are omitted
    for aid in range(1, len(atoms)):
        atom = atoms[aid]
        if atom.kind == "family" and atom.weight > 0:
            clauses.append(Clause((-aid,), atom.weight))
    # a chosen family determines ancestor / order atoms
    for child in range(n):
        for pa, aid in sorted(family_ids[child].items(), key=lambda kv: kv[1]):
            for p in pa:
                if mode == "ancestor":
                    clauses.append(Clause((-aid, anc_ids[(p, child)]), HARD))
                else:
                    clauses.append(Clause((-aid, _order_literal(p, child, ord_ids)), HARD))
    if mode == "ancestor":
        for i in range(n):
            for j in range(n):
                if j == i:
                    continue
                for k in range(n):
                    if k == i or k == j:
                        continue
                    clauses.append(
                        Clause((-anc_ids[(i, j)], -anc_ids[(j, k)], anc_ids[(i, k)]), HARD)
                    )
        if cycle == "none":
            for i in range(n):
                for j in range(i + 1, n):
                    clauses.append(Clause((-anc_ids[(i, j)], -anc_ids[(j, i)]), HARD))
        else:
            for i in range(n):
                for j in range(i + 1, n):
                    clauses.append(Clause((-anc_ids[(i, j)], -anc_ids[(j, i)], cycle_id), HARD))
            if cycle == "hard":
                clauses.append(Clause((-cycle_id,), HARD))
            else:
                clauses.append(Clause((-cycle_id,), cycle_weight))
    else:
        # two displayed schemas per ordered triple (i, j, k), reversal classes i < k
        for i in range(n):
            for k in range(i + 1, n):
                for j in range(n):
                    if j == i or j == k:
                        continue
                    lij = _order_literal(i, j, ord_ids)
                    ljk = _order_literal(j, k, ord_ids)
                    lik = _order_literal(i, k, ord_ids)
                    clauses.append(Clause((-lij, -ljk, lik), HARD))
                    clauses.append(Clause((lij, ljk, -lik), HARD))

    top = 1 + sum(c.weight for c in clauses if c.weight is not None)
    if top > _INT64_MAX:
        raise EncodingError(f"hard-clause sentinel {top} overflows 64-bit clause weights")

    provenance = {
        "encoding": mode,
        "cycle": cycle,
        "scores_sha256": scores.digest(),
        "n_vars": str(n),
    }
    problem = Wcnf(len(atoms) - 1, clauses, top, provenance)
    amap = AtomMap(tuple(scores.names), mode, cycle, atoms, provenance["scores_sha256"])
    return problem, amap


def emit_wcnf(problem: Wcnf) -> str:
    """Weighted-DIMACS text: provenance comments, header, one clause per line."""
    out = io.StringIO()
    for key in sorted(problem.provenance):
        out.write(f"c bnsat {key}={problem.provenance[key]}\n")
    out.write(f"p wcnf {problem.num_atoms} {len(problem.clauses)} {problem.top}\n")
    for clause in problem.clauses:
        w = problem.top if clause.weight is None else clause.weight
        out.write(f"{w} {' '.join(str(l) for l in clause.lits)} 0\n")
    return out.getvalue()


def wcnf_digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def parse_wcnf(text: str) -> Wcnf:
    """Parse weighted DIMACS; weights >= top are hard.  Accepts foreign files."""
    num_atoms = num_clauses = top = None
    clauses: list[Clause] = []
    provenance: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("c"):
            parts = line.split()
            if len(parts) >= 3 and parts[1] == "bnsat" and "=" in parts[2]:
                key, _, value = parts[2].partition("=")
                provenance[key] = value
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) != 5 or parts[1] != "wcnf":
                raise WcnfParseError(f"line {lineno}: malformed header {line!r}")
            try:
                num_atoms, num_clauses, top = int(parts[2]), int(parts[3]), int(parts[4])
            except ValueError as exc:
                raise WcnfParseError(f"line {lineno}: malformed header {line!r}") from exc
            continue
        if num_atoms is None:
            raise WcnfParseError(f"line {lineno}: clause before header")
        parts = line.split()
        if parts[-1] != "0":
            raise WcnfParseError(f"line {lineno}: clause lacks terminating 0")
        try:
            w = int(parts[0])
            lits = tuple(int(x) for x in parts[1:-1])
        except ValueError as exc:
            raise WcnfParseError(f"line {lineno}: malformed clause {line!r}") from exc
        for l in lits:
            if l == 0 or abs(l) > num_atoms:
                raise WcnfParseError(f"line {lineno}: literal {l} out of range")
        clauses.append(Clause(lits, HARD if w >= top else w))
    if num_atoms is None:
        raise WcnfParseError("no 'p wcnf' header found")
    if num_clauses is not None and num_clauses != len(clauses):
        raise WcnfParseError(f"header declares {num_clauses} clauses, found {len(clauses)}")
    return Wcnf(num_atoms, clauses, top, provenance)
