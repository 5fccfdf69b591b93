"""MaxWalkSat local search for weighted CNF.

Minimizes the total weight of unsatisfied clauses across randomized
restarts ("tries").  Each step picks an unsatisfied clause uniformly at
random and flips one of its atoms: with the configured noise probability a
uniformly random one (optionally restricted to flips that break no hard
clause, falling through to greedy when none qualifies), otherwise the atom
whose flip minimizes the resulting total cost, ties broken uniformly.

Two engines share one bit-exact decision sequence: a pure-Python walker
(supports observers and powers the differential tests) and a compiled
kernel used when no observer is attached.  Both consume the same SplitMix64
stream with per-try seeds derived from the master seed, so results are
identical for a given (problem, config) regardless of engine.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .encoder import Wcnf
from .seeds import SplitMix64, derive_seed


@dataclass
class SolverConfig:
    tries: int = 100
    cutoff: int = 100_000
    noise: tuple[int, int] = (50, 100)  # probability of a random (non-greedy) flip
    target_cost: int | None = None
    seed: int = 0
    allow_random_hard_break: bool = True
    init: str = "random"  # "random" | "all_false" | "from_file"
    init_assignment: tuple[bool, ...] | None = None  # atoms 1..n when init="from_file"

    def __post_init__(self):
        num, den = self.noise
        if den <= 0 or not 0 <= num <= den:
            raise ValueError(f"noise {self.noise} is not a probability")
        if self.cutoff < 1 or self.tries < 1:
            raise ValueError("cutoff and tries must be positive")
        if self.init not in ("random", "all_false", "from_file"):
            raise ValueError(f"unknown init mode {self.init!r}")
        if self.init == "from_file" and self.init_assignment is None:
            raise ValueError("init='from_file' requires init_assignment")


def baseline_config(**overrides) -> SolverConfig:
    """100 tries of 100,000 flips at 50% noise, random hard breaks allowed."""
    base = dict(tries=100, cutoff=100_000, noise=(50, 100), allow_random_hard_break=True)
    base.update(overrides)
    return SolverConfig(**base)


def long_config(**overrides) -> SolverConfig:
    """100 tries of 10,000,000 flips at 10% noise, no random hard breaks."""
    base = dict(tries=100, cutoff=10_000_000, noise=(10, 100), allow_random_hard_break=False)
    base.update(overrides)
    return SolverConfig(**base)


@dataclass
class TryStats:
    index: int
    lowest_cost: int
    flips_to_best: int
    flips: int
    seconds: float
    best_assignment: tuple[bool, ...]  # atoms 1..n at index 1..n; [0] unused


@dataclass
class SolverStats:
    tries: list[TryStats]
    best_cost: int
    best_try: int
    total_flips: int
    elapsed_seconds: float
    success: bool
    target_cost: int | None

    @property
    def flips_per_second(self) -> float:
        return self.total_flips / self.elapsed_seconds if self.elapsed_seconds > 0 else 0.0


def check_cost(problem: Wcnf, assignment) -> int:
    """From-scratch cost: soft weights of unsatisfied clauses, top per unsatisfied hard."""
    cost = 0
    for clause in problem.clauses:
        for l in clause.lits:
            if assignment[l] if l > 0 else not assignment[-l]:
                break
        else:
            cost += problem.top if clause.weight is None else clause.weight
    return cost


def unsat_clauses(problem: Wcnf, assignment) -> list[int]:
    """Indices of clauses the assignment leaves unsatisfied."""
    out = []
    for ci, clause in enumerate(problem.clauses):
        for l in clause.lits:
            if assignment[l] if l > 0 else not assignment[-l]:
                break
        else:
            out.append(ci)
    return out


class FlipState:
    """Incremental WalkSAT bookkeeping: per-clause satisfying-literal counts,
    total cost, and an unsatisfied-clause index with O(1) random choice."""

    __slots__ = (
        "num_atoms", "lits", "weight", "is_hard", "occ_pos", "occ_neg",
        "assignment", "true_count", "unsat", "upos", "cost", "hard_unsat",
    )

    def __init__(self, problem: Wcnf):
        self.num_atoms = problem.num_atoms
        self.lits = [list(c.lits) for c in problem.clauses]
        self.weight = [problem.top if c.weight is None else c.weight for c in problem.clauses]
        self.is_hard = [1 if c.weight is None else 0 for c in problem.clauses]
        self.occ_pos = [[] for _ in range(problem.num_atoms + 1)]
        self.occ_neg = [[] for _ in range(problem.num_atoms + 1)]
        for ci, cl in enumerate(self.lits):
            for l in cl:
                (self.occ_pos[l] if l > 0 else self.occ_neg[-l]).append(ci)
        self.assignment = [False] * (problem.num_atoms + 1)
        self.true_count = [0] * len(self.lits)
        self.unsat: list[int] = []
        self.upos = [-1] * len(self.lits)
        self.cost = 0
        self.hard_unsat = 0

    def reset(self, assignment) -> None:
        """Adopt an assignment (index 1..num_atoms) and rebuild all counts."""
        a = self.assignment
        a[0] = False
        for v in range(1, self.num_atoms + 1):
            a[v] = bool(assignment[v])
        self.unsat.clear()
        self.cost = 0
        self.hard_unsat = 0
        upos = self.upos
        for ci, cl in enumerate(self.lits):
            t = 0
            for l in cl:
                if a[l] if l > 0 else not a[-l]:
                    t += 1
            self.true_count[ci] = t
            if t == 0:
                upos[ci] = len(self.unsat)
                self.unsat.append(ci)
                self.cost += self.weight[ci]
                self.hard_unsat += self.is_hard[ci]
            else:
                upos[ci] = -1

    def flip(self, v: int) -> None:
        a = self.assignment
        val = not a[v]
        a[v] = val
        tc = self.true_count
        w = self.weight
        hard = self.is_hard
        unsat = self.unsat
        upos = self.upos
        cost = self.cost
        hu = self.hard_unsat
        gain_side = self.occ_pos[v] if val else self.occ_neg[v]
        lose_side = self.occ_neg[v] if val else self.occ_pos[v]
        for c in gain_side:
            t = tc[c]
            tc[c] = t + 1
            if t == 0:
                i = upos[c]
                last = unsat[-1]
                unsat[i] = last
                upos[last] = i
                unsat.pop()
                upos[c] = -1
                cost -= w[c]
                hu -= hard[c]
        for c in lose_side:
            t = tc[c] - 1
            tc[c] = t
            if t == 0:
                upos[c] = len(unsat)
                unsat.append(c)
                cost += w[c]
                hu += hard[c]
        self.cost = cost
        self.hard_unsat = hu

    def delta(self, v: int) -> int:
        """Cost change if v were flipped (positive = worse)."""
        a = self.assignment
        val = a[v]
        tc = self.true_count
        w = self.weight
        gain_side = self.occ_neg[v] if val else self.occ_pos[v]
        lose_side = self.occ_pos[v] if val else self.occ_neg[v]
        d = 0
        for c in lose_side:
            if tc[c] == 1:
                d += w[c]
        for c in gain_side:
            if tc[c] == 0:
                d -= w[c]
        return d

    def breaks_hard(self, v: int) -> bool:
        """Would flipping v unsatisfy some currently satisfied hard clause?"""
        tc = self.true_count
        hard = self.is_hard
        lose_side = self.occ_pos[v] if self.assignment[v] else self.occ_neg[v]
        for c in lose_side:
            if tc[c] == 1 and hard[c]:
                return True
        return False


def _initial_assignment(num_atoms: int, config: SolverConfig, rng: SplitMix64) -> list[bool]:
    a = [False] * (num_atoms + 1)
    if config.init == "random":
        for v in range(1, num_atoms + 1):
            a[v] = bool(rng.next_u64() & 1)
    elif config.init == "from_file":
        given = config.init_assignment
        if len(given) != num_atoms:
            raise ValueError(
                f"init assignment has {len(given)} atoms, problem has {num_atoms}"
            )
        for v in range(1, num_atoms + 1):
            a[v] = bool(given[v - 1])
    return a


def _run_try_python(fs: FlipState, config: SolverConfig, rng: SplitMix64, observer):
    """One try on a freshly seeded stream.  Returns (best_cost, best_flips,
    flips_done, best_assignment)."""
    noise_num, noise_den = config.noise
    allow_break = config.allow_random_hard_break
    target = config.target_cost
    cutoff = config.cutoff
    unsat = fs.unsat
    lits = fs.lits

    a = _initial_assignment(fs.num_atoms, config, rng)
    fs.reset(a)
    if observer is not None:
        observer.on_try_start(fs)
        if fs.hard_unsat == 0:
            observer.on_feasible(fs)

    best = fs.cost
    best_flips = 0
    best_assign = tuple(fs.assignment)
    flips = 0
    while flips < cutoff:
        if target is not None and fs.cost <= target:
            break
        if not unsat:
            break
        clause = lits[unsat[rng.below(len(unsat))]]
        v = 0
        if noise_num > 0 and rng.chance(noise_num, noise_den):
            if allow_break:
                l = clause[rng.below(len(clause))]
                v = l if l > 0 else -l
            else:
                k = 0
                for l in clause:
                    cand = l if l > 0 else -l
                    if not fs.breaks_hard(cand):
                        k += 1
                        if k == 1:
                            v = cand
                        elif rng.below(k) == 0:
                            v = cand
                if k == 0:
                    v = 0  # no safe literal: fall through to greedy
        if v == 0:
            best_d = None
            k = 0
            for l in clause:
                cand = l if l > 0 else -l
                d = fs.delta(cand)
                if best_d is None or d < best_d:
                    best_d = d
                    v = cand
                    k = 1
                elif d == best_d:
                    k += 1
                    if rng.below(k) == 0:
                        v = cand
        fs.flip(v)
        flips += 1
        if observer is not None:
            observer.on_flip(v, fs.assignment[v])
            if fs.hard_unsat == 0:
                observer.on_feasible(fs)
        if fs.cost < best:
            best = fs.cost
            best_flips = flips
            best_assign = tuple(fs.assignment)
    return best, best_flips, flips, best_assign


# ---------------------------------------------------------------------------
# Compiled engine: identical decisions, identical RNG stream.

_KERNEL = None
_KERNEL_FAILED = False


def _get_kernel():
    global _KERNEL, _KERNEL_FAILED
    if _KERNEL is not None or _KERNEL_FAILED:
        return _KERNEL
    try:
        from numba import njit
    except ImportError:
        _KERNEL_FAILED = True
        return None

    U = np.uint64

    @njit(cache=True, inline="always")
    def sm_next(state):
        state = state + U(0x9E3779B97F4A7C15)
        z = (state ^ (state >> U(30))) * U(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> U(27))) * U(0x94D049BB133111EB)
        return state, z ^ (z >> U(31))

    @njit(cache=True)
    def run_try(seed, init_mode, init_assign,
                lit_flat, lit_off, weight, is_hard,
                occp_flat, occp_off, occn_flat, occn_off,
                cutoff, has_target, target, noise_num, noise_den, allow_break,
                assignment, true_count, unsat, upos, best_assign):
        num_atoms = assignment.shape[0] - 1
        nclauses = weight.shape[0]
        rs = U(seed)

        # initial assignment
        assignment[0] = 0
        if init_mode == 0:
            for v in range(1, num_atoms + 1):
                rs, u = sm_next(rs)
                assignment[v] = np.uint8(u & U(1))
        elif init_mode == 1:
            for v in range(1, num_atoms + 1):
                assignment[v] = 0
        else:
            for v in range(1, num_atoms + 1):
                assignment[v] = init_assign[v]

        # rebuild counts
        cost = np.int64(0)
        hard_unsat = 0
        nunsat = 0
        for c in range(nclauses):
            t = 0
            for p in range(lit_off[c], lit_off[c + 1]):
                l = lit_flat[p]
                if l > 0:
                    if assignment[l]:
                        t += 1
                elif not assignment[-l]:
                    t += 1
            true_count[c] = t
            if t == 0:
                upos[c] = nunsat
                unsat[nunsat] = c
                nunsat += 1
                cost += weight[c]
                hard_unsat += is_hard[c]
            else:
                upos[c] = -1

        best = cost
        best_flips = np.int64(0)
        for v in range(num_atoms + 1):
            best_assign[v] = assignment[v]
        flips = np.int64(0)

        while flips < cutoff:
            if has_target and cost <= target:
                break
            if nunsat == 0:
                break
            rs, u = sm_next(rs)
            c_sel = unsat[np.int64(u % U(nunsat))]
            lo = lit_off[c_sel]
            hi = lit_off[c_sel + 1]
            v = 0
            use_greedy = True
            if noise_num > 0:
                rs, u = sm_next(rs)
                if u % U(noise_den) < U(noise_num):
                    if allow_break:
                        rs, u = sm_next(rs)
                        l = lit_flat[lo + np.int64(u % U(hi - lo))]
                        v = l if l > 0 else -l
                        use_greedy = False
                    else:
                        k = 0
                        for p in range(lo, hi):
                            l = lit_flat[p]
                            cand = l if l > 0 else -l
                            # does flipping cand break a hard clause?
                            if assignment[cand]:
                                s, e = occp_off[cand], occp_off[cand + 1]
                                flat = occp_flat
                            else:
                                s, e = occn_off[cand], occn_off[cand + 1]
                                flat = occn_flat
                            breaks = False
                            for q in range(s, e):
                                cc = flat[q]
                                if true_count[cc] == 1 and is_hard[cc]:
                                    breaks = True
                                    break
                            if not breaks:
                                k += 1
                                if k == 1:
                                    v = cand
                                else:
                                    rs, u = sm_next(rs)
                                    if u % U(k) == U(0):
                                        v = cand
                        if k > 0:
                            use_greedy = False
            if use_greedy:
                best_d = np.int64(0)
                first = True
                k = 0
                for p in range(lo, hi):
                    l = lit_flat[p]
                    cand = l if l > 0 else -l
                    d = np.int64(0)
                    if assignment[cand]:
                        for q in range(occp_off[cand], occp_off[cand + 1]):
                            cc = occp_flat[q]
                            if true_count[cc] == 1:
                                d += weight[cc]
                        for q in range(occn_off[cand], occn_off[cand + 1]):
                            cc = occn_flat[q]
                            if true_count[cc] == 0:
                                d -= weight[cc]
                    else:
                        for q in range(occn_off[cand], occn_off[cand + 1]):
                            cc = occn_flat[q]
                            if true_count[cc] == 1:
                                d += weight[cc]
                        for q in range(occp_off[cand], occp_off[cand + 1]):
                            cc = occp_flat[q]
                            if true_count[cc] == 0:
                                d -= weight[cc]
                    if first or d < best_d:
                        best_d = d
                        v = cand
                        k = 1
                        first = False
                    elif d == best_d:
                        k += 1
                        rs, u = sm_next(rs)
                        if u % U(k) == U(0):
                            v = cand

            # flip v
            newval = 1 - assignment[v]
            assignment[v] = newval
            if newval:
                gs, ge = occp_off[v], occp_off[v + 1]
                gflat = occp_flat
                ls, le = occn_off[v], occn_off[v + 1]
                lflat = occn_flat
            else:
                gs, ge = occn_off[v], occn_off[v + 1]
                gflat = occn_flat
                ls, le = occp_off[v], occp_off[v + 1]
                lflat = occp_flat
            for q in range(gs, ge):
                c = gflat[q]
                t = true_count[c]
                true_count[c] = t + 1
                if t == 0:
                    i = upos[c]
                    last = unsat[nunsat - 1]
                    unsat[i] = last
                    upos[last] = i
                    nunsat -= 1
                    upos[c] = -1
                    cost -= weight[c]
                    hard_unsat -= is_hard[c]
            for q in range(ls, le):
                c = lflat[q]
                t = true_count[c] - 1
                true_count[c] = t
                if t == 0:
                    upos[c] = nunsat
                    unsat[nunsat] = c
                    nunsat += 1
                    cost += weight[c]
                    hard_unsat += is_hard[c]
            flips += 1
            if cost < best:
                best = cost
                best_flips = flips
                for vv in range(num_atoms + 1):
                    best_assign[vv] = assignment[vv]

        return best, best_flips, flips

    _KERNEL = run_try
    return _KERNEL


def _csr(list_of_lists, dtype=np.int64):
    off = np.zeros(len(list_of_lists) + 1, dtype=np.int64)
    for i, row in enumerate(list_of_lists):
        off[i + 1] = off[i] + len(row)
    flat = np.empty(off[-1], dtype=dtype)
    for i, row in enumerate(list_of_lists):
        flat[off[i] : off[i + 1]] = row
    return flat, off


def solve(
    problem: Wcnf,
    config: SolverConfig,
    observer=None,
    engine: str = "auto",
) -> tuple[tuple[bool, ...], int, SolverStats]:
    """Run MaxWalkSat; returns (best assignment, its cost, stats).

    The observer, when given, must provide ``on_try_start(state)``,
    ``on_flip(atom, value)`` and ``on_feasible(state)``; it sees every flip
    and is told whenever all hard clauses hold.  Observers force the Python
    engine.  An unsatisfiable-hard instance is not an error: the best found
    assignment simply has cost >= top.
    """
    if engine not in ("auto", "python", "compiled"):
        raise ValueError(f"unknown engine {engine!r}")
    if not problem.clauses:
        raise ValueError("cannot solve an empty problem")
    use_compiled = engine == "compiled" or (engine == "auto" and observer is None)
    if observer is not None and engine == "compiled":
        raise ValueError("observers require the python engine")
    kernel = _get_kernel() if use_compiled else None
    if use_compiled and kernel is None:
        if engine == "compiled":
            raise RuntimeError("compiled engine unavailable (numba missing)")
        use_compiled = False

    t0 = time.perf_counter()
    tries: list[TryStats] = []
    best_cost = None
    best_try = -1
    best_assign: tuple[bool, ...] = ()
    total_flips = 0
    success = False

    if use_compiled:
        fs = None
        lits = [list(c.lits) for c in problem.clauses]
        lit_flat, lit_off = _csr(lits)
        weight = np.array(
            [problem.top if c.weight is None else c.weight for c in problem.clauses],
            dtype=np.int64,
        )
        is_hard = np.array(
            [1 if c.weight is None else 0 for c in problem.clauses], dtype=np.int64
        )
        occ_pos = [[] for _ in range(problem.num_atoms + 1)]
        occ_neg = [[] for _ in range(problem.num_atoms + 1)]
        for ci, cl in enumerate(lits):
            for l in cl:
                (occ_pos[l] if l > 0 else occ_neg[-l]).append(ci)
        occp_flat, occp_off = _csr(occ_pos)
        occn_flat, occn_off = _csr(occ_neg)
        assignment = np.zeros(problem.num_atoms + 1, dtype=np.uint8)
        true_count = np.zeros(len(lits), dtype=np.int64)
        unsat = np.zeros(len(lits), dtype=np.int64)
        upos = np.zeros(len(lits), dtype=np.int64)
        best_assign_buf = np.zeros(problem.num_atoms + 1, dtype=np.uint8)
        init_mode = {"random": 0, "all_false": 1, "from_file": 2}[config.init]
        init_arr = np.zeros(problem.num_atoms + 1, dtype=np.uint8)
        if config.init == "from_file":
            given = config.init_assignment
            if len(given) != problem.num_atoms:
                raise ValueError(
                    f"init assignment has {len(given)} atoms, problem has {problem.num_atoms}"
                )
            init_arr[1:] = [1 if b else 0 for b in given]
    else:
        fs = FlipState(problem)

    for t in range(config.tries):
        seed_t = derive_seed(config.seed, "try", t)
        tt0 = time.perf_counter()
        if use_compiled:
            cost_t, flips_best_t, flips_t = kernel(
                np.uint64(seed_t), init_mode, init_arr,
                lit_flat, lit_off, weight, is_hard,
                occp_flat, occp_off, occn_flat, occn_off,
                np.int64(config.cutoff),
                config.target_cost is not None,
                np.int64(config.target_cost if config.target_cost is not None else 0),
                np.int64(config.noise[0]), np.int64(config.noise[1]),
                config.allow_random_hard_break,
                assignment, true_count, unsat, upos, best_assign_buf,
            )
            cost_t = int(cost_t)
            flips_best_t = int(flips_best_t)
            flips_t = int(flips_t)
            assign_t = tuple(bool(x) for x in best_assign_buf)
        else:
            rng = SplitMix64(seed_t)
            cost_t, flips_best_t, flips_t, assign_t = _run_try_python(
                fs, config, rng, observer
            )
        tt1 = time.perf_counter()
        tries.append(TryStats(t, cost_t, flips_best_t, flips_t, tt1 - tt0, assign_t))
        total_flips += flips_t
        if best_cost is None or cost_t < best_cost:
            best_cost = cost_t
            best_try = t
            best_assign = assign_t
        if config.target_cost is not None and best_cost <= config.target_cost:
            success = True
            break
        if best_cost == 0:
            break

    elapsed = time.perf_counter() - t0
    verified = check_cost(problem, best_assign)
    if verified != best_cost:
        raise RuntimeError(
            f"incremental best cost {best_cost} disagrees with check_cost {verified}"
        )
    stats = SolverStats(
        tries=tries,
        best_cost=best_cost,
        best_try=best_try,
        total_flips=total_flips,
        elapsed_seconds=elapsed,
        success=success,
        target_cost=config.target_cost,
    )
    return best_assign, best_cost, stats


def render_trace(problem: Wcnf, config: SolverConfig, stats: SolverStats) -> str:
    """Human-readable run trace: per-try bests, totals, throughput, success line."""
    lines = [
        f"seed = {config.seed}",
        f"cutoff = {config.cutoff}",
        f"tries = {config.tries}",
        f"targetcost = {config.target_cost if config.target_cost is not None else 'none'}",
        f"heuristic = best, noise {config.noise[0]} / {config.noise[1]}"
        + (", no random hard breaks" if not config.allow_random_hard_break else ""),
        f"numatom = {problem.num_atoms}, numclause = {len(problem.clauses)}, top = {problem.top}",
        f"{'try':>5} {'lowest':>12} {'#unsat':>7} {'when':>12} {'flips':>12}",
    ]
    for ts in stats.tries:
        n_unsat = len(unsat_clauses(problem, ts.best_assignment))
        lines.append(
            f"{ts.index + 1:>5} {ts.lowest_cost:>12} {n_unsat:>7} "
            f"{ts.flips_to_best:>12} {ts.flips:>12}"
        )
    lines.append(f"total elapsed seconds = {stats.elapsed_seconds:.6f}")
    lines.append(f"average flips per second = {stats.flips_per_second:.0f}")
    lines.append(f"best cost = {stats.best_cost} (try {stats.best_try + 1})")
    if stats.target_cost is not None and stats.success:
        lines.append(f"ASSIGNMENT ACHIEVING TARGET {stats.target_cost} FOUND")
    return "\n".join(lines) + "\n"
