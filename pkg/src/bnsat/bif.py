"""Bayesian Interchange Format parsing, network validation, and sampling.

The accepted dialect covers discrete networks: ``network``, ``variable``
(with an explicit value list) and ``probability`` blocks, C-style comments,
case-insensitive keywords, and both ``table`` and per-row conditional
entries.  ``property`` entries are ignored.  Continuous variables and the
rest of the full grammar are out of scope.

CPT rows are indexed by the mixed-radix encoding of the parent
instantiation in declared parent order, last parent varying fastest; a
``table`` entry lists rows in that order, child value fastest within a row.
"""

from __future__ import annotations

import heapq
import json
import re
import warnings
from dataclasses import dataclass
from math import prod

import numpy as np

from .dataset import Dataset, VariableDecl
from . import scoring

NORMALIZATION_TOL = 1e-9


class BifError(ValueError):
    """Parse or validation failure; carries line/column when known."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        if line is not None:
            message = f"line {line}, col {col}: {message}"
        super().__init__(message)
        self.line = line
        self.col = col


class CyclicNetworkError(BifError):
    pass


@dataclass
class BayesNet:
    """Discrete network: variables, per-variable parent index lists, CPTs.

    ``cpts[i]`` has shape (q_i, r_i) with one distribution per joint parent
    instantiation.  Structure-only networks carry ``cpts=None``.
    """

    name: str
    variables: tuple[VariableDecl, ...]
    parents: tuple[tuple[int, ...], ...]
    cpts: tuple[np.ndarray, ...] | None = None

    def __post_init__(self):
        n = len(self.variables)
        if len(self.parents) != n:
            raise BifError("parent list count does not match variable count")
        for i, pa in enumerate(self.parents):
            if len(set(pa)) != len(pa) or any(not 0 <= j < n for j in pa) or i in pa:
                raise BifError(f"invalid parent set {pa} for variable {self.variables[i].name!r}")
        topological_order(self.parents)  # raises on cycles
        if self.cpts is not None:
            if len(self.cpts) != n:
                raise BifError("CPT count does not match variable count")
            for i, cpt in enumerate(self.cpts):
                q = prod(self.variables[j].arity for j in self.parents[i])
                r = self.variables[i].arity
                if cpt.shape != (q, r):
                    raise BifError(
                        f"CPT for {self.variables[i].name!r} has shape {cpt.shape}, expected {(q, r)}"
                    )
                sums = cpt.sum(axis=1)
                if np.any(np.abs(sums - 1.0) > NORMALIZATION_TOL):
                    worst = int(np.argmax(np.abs(sums - 1.0)))
                    raise BifError(
                        f"CPT row {worst} for {self.variables[i].name!r} sums to {sums[worst]!r}"
                    )

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    def var_index(self, name: str) -> int:
        for i, v in enumerate(self.variables):
            if v.name == name:
                return i
        raise KeyError(name)


def topological_order(parents: tuple[tuple[int, ...], ...]) -> list[int]:
    """Deterministic (smallest-index-first) topological order; raises on cycles."""
    n = len(parents)
    missing = [len(pa) for pa in parents]
    children: list[list[int]] = [[] for _ in range(n)]
    for i, pa in enumerate(parents):
        for j in pa:
            children[j].append(i)
    ready = [i for i in range(n) if missing[i] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        i = heapq.heappop(ready)
        order.append(i)
        for c in children[i]:
            missing[c] -= 1
            if missing[c] == 0:
                heapq.heappush(ready, c)
    if len(order) != n:
        raise CyclicNetworkError("parent structure contains a directed cycle")
    return order


# ---------------------------------------------------------------------------
# BIF tokenizer / parser

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>//[^\n]*|/\*.*?\*/)
  | (?P<num>[-+]?(\d+\.\d*|\.\d+|\d+)([eE][-+]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_.\-]*)
  | (?P<string>"[^"]*")
  | (?P<punct>[{}()\[\],;|=])
    """,
    re.VERBOSE | re.DOTALL,
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos, line, col = 0, 1, 1
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise BifError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        tok_text = m.group()
        if kind not in ("ws", "comment"):
            toks.append(_Tok(kind, tok_text, line, col))
        newlines = tok_text.count("\n")
        if newlines:
            line += newlines
            col = len(tok_text) - tok_text.rfind("\n")
        else:
            col += len(tok_text)
        pos = m.end()
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self) -> _Tok | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def next(self) -> _Tok:
        tok = self.peek()
        if tok is None:
            last = self.toks[-1] if self.toks else _Tok("", "", 1, 1)
            raise BifError("unexpected end of input", last.line, last.col)
        self.i += 1
        return tok

    def expect(self, text: str) -> _Tok:
        tok = self.next()
        if tok.text != text:
            raise BifError(f"expected {text!r}, found {tok.text!r}", tok.line, tok.col)
        return tok

    def keyword(self, tok: _Tok) -> str:
        return tok.text.lower()

    def skip_block(self):
        """Consume a balanced { ... } block."""
        self.expect("{")
        depth = 1
        while depth:
            tok = self.next()
            if tok.text == "{":
                depth += 1
            elif tok.text == "}":
                depth -= 1

    def skip_statement(self):
        """Consume tokens through the next ';' (for ignored property entries)."""
        while True:
            tok = self.next()
            if tok.text == ";":
                return

    def value_token(self) -> str:
        tok = self.next()
        if tok.kind == "string":
            return tok.text[1:-1]
        if tok.kind in ("name", "num"):
            return tok.text
        raise BifError(f"expected a value label, found {tok.text!r}", tok.line, tok.col)

    def number(self) -> float:
        tok = self.next()
        if tok.kind != "num":
            raise BifError(f"expected a number, found {tok.text!r}", tok.line, tok.col)
        return float(tok.text)

    def number_list(self, terminator: str = ";") -> list[float]:
        nums = [self.number()]
        while True:
            tok = self.next()
            if tok.text == ",":
                nums.append(self.number())
            elif tok.text == terminator:
                return nums
            else:
                raise BifError(f"expected ',' or {terminator!r}, found {tok.text!r}", tok.line, tok.col)


def parse_bif(text: str) -> BayesNet:
    """Parse BIF text into a validated BayesNet (variable order = declaration order)."""
    p = _Parser(text)
    net_name = "network"
    decls: list[VariableDecl] = []
    index: dict[str, int] = {}
    prob_blocks: dict[int, tuple[tuple[int, ...], np.ndarray]] = {}

    while p.peek() is not None:
        tok = p.next()
        kw = p.keyword(tok)
        if kw == "network":
            name_tok = p.next()
            if name_tok.text == "{":
                p.i -= 1
            else:
                net_name = name_tok.text.strip('"')
            p.skip_block()
        elif kw == "variable":
            name_tok = p.next()
            if name_tok.kind != "name":
                raise BifError("expected variable name", name_tok.line, name_tok.col)
            name = name_tok.text
            if name in index:
                raise BifError(f"variable {name!r} declared twice", name_tok.line, name_tok.col)
            p.expect("{")
            values: tuple[str, ...] | None = None
            while True:
                tok2 = p.next()
                if tok2.text == "}":
                    break
                kw2 = p.keyword(tok2)
                if kw2 == "type":
                    t = p.next()
                    if p.keyword(t) != "discrete":
                        raise BifError("only discrete variables supported", t.line, t.col)
                    p.expect("[")
                    arity = int(p.number())
                    p.expect("]")
                    p.expect("{")
                    labels = [p.value_token()]
                    while True:
                        sep = p.next()
                        if sep.text == ",":
                            labels.append(p.value_token())
                        elif sep.text == "}":
                            break
                        else:
                            raise BifError(f"expected ',' or '}}', found {sep.text!r}", sep.line, sep.col)
                    p.expect(";")
                    if len(labels) != arity:
                        raise BifError(
                            f"variable {name!r} declares arity {arity} but {len(labels)} values",
                            tok2.line, tok2.col,
                        )
                    values = tuple(labels)
                elif kw2 == "property":
                    p.skip_statement()
                else:
                    raise BifError(f"unexpected token {tok2.text!r} in variable block", tok2.line, tok2.col)
            if values is None:
                raise BifError(f"variable {name!r} has no type declaration", name_tok.line, name_tok.col)
            index[name] = len(decls)
            decls.append(VariableDecl(name, values))
        elif kw == "probability":
            _parse_probability(p, decls, index, prob_blocks)
        else:
            raise BifError(f"unexpected token {tok.text!r}", tok.line, tok.col)

    n = len(decls)
    parents: list[tuple[int, ...]] = [()] * n
    cpts: list[np.ndarray | None] = [None] * n
    for child, (pa, cpt) in prob_blocks.items():
        parents[child] = pa
        cpts[child] = cpt
    for i in range(n):
        if cpts[i] is None:
            raise BifError(f"no probability block for variable {decls[i].name!r}")
    return BayesNet(net_name, tuple(decls), tuple(parents), tuple(cpts))


def _parse_probability(p, decls, index, prob_blocks):
    head = p.expect("(")
    child_tok = p.next()
    if child_tok.text not in index:
        raise BifError(f"undeclared variable {child_tok.text!r}", child_tok.line, child_tok.col)
    child = index[child_tok.text]
    parent_ids: list[int] = []
    tok = p.next()
    if tok.text == "|":
        while True:
            ptok = p.next()
            if ptok.text not in index:
                raise BifError(f"undeclared variable {ptok.text!r}", ptok.line, ptok.col)
            parent_ids.append(index[ptok.text])
            sep = p.next()
            if sep.text == ")":
                break
            if sep.text != ",":
                raise BifError(f"expected ',' or ')', found {sep.text!r}", sep.line, sep.col)
    elif tok.text != ")":
        raise BifError(f"expected '|' or ')', found {tok.text!r}", tok.line, tok.col)
    if child in prob_blocks:
        raise BifError(f"duplicate probability block for {child_tok.text!r}", head.line, head.col)
    if child in parent_ids or len(set(parent_ids)) != len(parent_ids):
        raise BifError(f"invalid parent list for {child_tok.text!r}", head.line, head.col)

    r = decls[child].arity
    par_arities = [decls[j].arity for j in parent_ids]
    q = prod(par_arities)
    rows = np.full((q, r), np.nan)
    p.expect("{")
    while True:
        tok2 = p.next()
        if tok2.text == "}":
            break
        kw2 = p.keyword(tok2)
        if kw2 == "table":
            nums = p.number_list()
            if len(nums) != q * r:
                raise BifError(
                    f"table for {child_tok.text!r} has {len(nums)} entries, expected {q * r}",
                    tok2.line, tok2.col,
                )
            rows[:] = np.array(nums).reshape(q, r)
        elif tok2.text == "(":
            labels = [p.value_token()]
            while True:
                sep = p.next()
                if sep.text == ",":
                    labels.append(p.value_token())
                elif sep.text == ")":
                    break
                else:
                    raise BifError(f"expected ',' or ')', found {sep.text!r}", sep.line, sep.col)
            if len(labels) != len(parent_ids):
                raise BifError(
                    f"row for {child_tok.text!r} gives {len(labels)} parent values, expected {len(parent_ids)}",
                    tok2.line, tok2.col,
                )
            ridx = 0
            for lab, j, a in zip(labels, parent_ids, par_arities):
                try:
                    v = decls[j].values.index(lab)
                except ValueError:
                    raise BifError(
                        f"value {lab!r} not declared for {decls[j].name!r}", tok2.line, tok2.col
                    ) from None
                ridx = ridx * a + v
            if not np.isnan(rows[ridx]).all():
                raise BifError(f"duplicate CPT row for {child_tok.text!r}", tok2.line, tok2.col)
            nums = p.number_list()
            if len(nums) != r:
                raise BifError(
                    f"row for {child_tok.text!r} has {len(nums)} entries, expected {r}",
                    tok2.line, tok2.col,
                )
            rows[ridx] = nums
        elif kw2 == "property":
            p.skip_statement()
        else:
            raise BifError(f"unsupported probability entry {tok2.text!r}", tok2.line, tok2.col)
    if np.isnan(rows).any():
        raise BifError(f"missing CPT rows for {child_tok.text!r}", head.line, head.col)
    sums = rows.sum(axis=1)
    bad = np.abs(sums - 1.0) > NORMALIZATION_TOL
    if bad.any():
        worst = int(np.argmax(np.abs(sums - 1.0)))
        raise BifError(
            f"CPT row {worst} for {child_tok.text!r} sums to {sums[worst]!r}", head.line, head.col
        )
    rows /= sums[:, None]  # silent renormalization inside tolerance
    prob_blocks[child] = (tuple(parent_ids), rows)


# ---------------------------------------------------------------------------
# Serialized network format (JSON, versioned).  Exact float round-trip.

def net_to_json(net: BayesNet) -> str:
    doc = {
        "format": "bnsat-network",
        "version": 1,
        "name": net.name,
        "variables": [{"name": v.name, "values": list(v.values)} for v in net.variables],
        "parents": [list(pa) for pa in net.parents],
        "cpts": None if net.cpts is None else [cpt.tolist() for cpt in net.cpts],
    }
    return json.dumps(doc, indent=1)


def net_from_json(text: str) -> BayesNet:
    doc = json.loads(text)
    if doc.get("format") != "bnsat-network" or doc.get("version") != 1:
        raise BifError("not a bnsat-network v1 document")
    variables = tuple(VariableDecl(v["name"], tuple(v["values"])) for v in doc["variables"])
    parents = tuple(tuple(pa) for pa in doc["parents"])
    cpts = None
    if doc["cpts"] is not None:
        cpts = tuple(np.array(c, dtype=float) for c in doc["cpts"])
    return BayesNet(doc["name"], variables, parents, cpts)


# ---------------------------------------------------------------------------
# Forward sampling

def forward_sample(net: BayesNet, n_rows: int, seed: int) -> Dataset:
    """Ancestral sampling into an aggregated Dataset.

    Uses numpy's PCG64 stream: one uniform batch per variable, variables
    visited in deterministic topological order, values chosen by inverse
    CDF.  Reproducible for a fixed (net, n_rows, seed).
    """
    if net.cpts is None:
        raise BifError("cannot sample from a structure-only network")
    if n_rows < 1:
        raise BifError("n_rows must be positive")
    rng = np.random.Generator(np.random.PCG64(seed))
    n = net.n_vars
    vals = np.empty((n_rows, n), dtype=np.int64)
    for i in topological_order(net.parents):
        pa = net.parents[i]
        if pa:
            ridx = vals[:, pa[0]].copy()
            for j in pa[1:]:
                ridx *= net.variables[j].arity
                ridx += vals[:, j]
        else:
            ridx = np.zeros(n_rows, dtype=np.int64)
        cdf = np.cumsum(net.cpts[i][ridx], axis=1)
        u = rng.random(n_rows)
        vals[:, i] = np.minimum((u[:, None] >= cdf).sum(axis=1), net.variables[i].arity - 1)
    uniq, counts = np.unique(vals, axis=0, return_counts=True)
    rows = {tuple(int(x) for x in row): int(c) for row, c in zip(uniq, counts)}
    return Dataset(net.variables, rows)


# ---------------------------------------------------------------------------
# Scoring against data

def _check_schema(net: BayesNet, data: Dataset):
    if tuple(net.variables) != tuple(data.schema):
        raise BifError("network variables do not match dataset schema")


def true_score(net: BayesNet, data: Dataset, alpha: float = 1.0) -> float:
    """Exact log score of the network's structure on the data (no parent cap)."""
    _check_schema(net, data)
    cache = scoring.HCache()
    return sum(
        scoring.family_score(data, i, net.parents[i], alpha, cache) for i in range(net.n_vars)
    )


def target_network(net: BayesNet, scores: scoring.ScoreTable) -> BayesNet:
    """Replace each parent set by its best-scoring scored subset.

    Result is structure-only: subsets of an acyclic assignment cannot create
    cycles, but the original CPTs no longer apply.
    """
    if tuple(scores.names) != tuple(v.name for v in net.variables):
        raise BifError("score table variables do not match network")
    new_parents = []
    for i in range(net.n_vars):
        best_set, _ = scores.best_subset_of(i, net.parents[i])
        new_parents.append(best_set)
    return BayesNet(net.name, net.variables, tuple(new_parents), None)
