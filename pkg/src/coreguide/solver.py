"""CDCL solver with two-watched-literal propagation, 1UIP learning, VSIDS and seedable branching.

Internally variable ``v`` (1-based in DIMACS) is index ``v - 1`` and its
literals are encoded as ``2 * (v - 1)`` (positive) and ``2 * (v - 1) + 1``
(negative), so ``lit ^ 1`` negates.
"""

from __future__ import annotations

import heapq
import random
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cnf import (
    BRUTE_FORCE_MAX_VARS,
    Cnf,
    Kind,
    NotUnsat,
    SolveStats,
    Verdict,
    assignment_satisfies,
    brute_force_solve,
)

RESCALE_LIMIT = 1e100


@dataclass
class SolverConfig:
    conflict_budget: int = 0  # 0 = unlimited
    time_budget_ms: float = 0.0  # 0 = unlimited
    activity_decay: float = 0.95
    restart_base: int = 64
    phase_saving: bool = True
    seed: int = 0
    random_var_freq: float = 0.0

    def __post_init__(self):
        if not 0 < self.activity_decay < 1:
            raise ValueError("activity_decay must lie in (0, 1)")
        if self.conflict_budget < 0 or self.time_budget_ms < 0:
            raise ValueError("budgets must be >= 0")
        if self.restart_base < 1:
            raise ValueError("restart_base must be >= 1")


@dataclass
class BranchSeed:
    scores: np.ndarray  # per variable, index 0 is x1
    order: list[int]  # 1-based variables, highest priority first

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        n = len(self.scores)
        if sorted(self.order) != list(range(1, n + 1)):
            raise ValueError("order must be a permutation of 1..n")


def seed_from_prediction(pred) -> BranchSeed:
    """Scores are the probabilities; order is by score descending, ties by index."""
    p = np.asarray(getattr(pred, "probs", pred), dtype=np.float64)
    order = sorted(range(1, len(p) + 1), key=lambda v: (-p[v - 1], v))
    return BranchSeed(p.copy(), order)


def luby(i: int) -> int:
    """i-th element (0-based) of the Luby sequence 1 1 2 1 1 2 4 ..."""
    size, seq = 1, 0
    while size < i + 1:
        seq += 1
        size = 2 * size + 1
    while size - 1 != i:
        size = (size - 1) >> 1
        seq -= 1
        i %= size
    return 1 << seq


class Solver:
    """One CDCL search over a fixed clause set; not reusable across threads."""

    def __init__(self, num_vars: int, clauses: Sequence[Sequence[int]], cfg: SolverConfig | None = None,
                 seed_hint: BranchSeed | None = None):
        self.cfg = cfg or SolverConfig()
        self.n = num_vars
        n = num_vars
        self.lit_val = [0] * (2 * n)  # 1 true, -1 false, 0 unassigned
        self.level = [0] * n
        self.reason: list[int | None] = [None] * n
        self.phase = [1] * n  # saved literal parity: 1 = negative (initial phase false)
        self.trail: list[int] = []
        self.trail_lim: list[int] = []
        self.qhead = 0
        self.clauses: list[list[int]] = []
        self.num_original = 0
        self.watches: list[list[int]] = [[] for _ in range(2 * n)]
        self.stats = SolveStats()
        self.ok = True
        self.empty_clause: int | None = None
        self.rng = random.Random(self.cfg.seed)

        if seed_hint is not None:
            if len(seed_hint.order) != n:
                raise ValueError(f"seed order has {len(seed_hint.order)} entries, formula has {n} variables")
            self.activity = [float(x) for x in seed_hint.scores]
            self.rank = [0] * n
            for pos, v in enumerate(seed_hint.order):
                self.rank[v - 1] = pos
        else:
            self.activity = [0.0] * n
            self.rank = list(range(n))
        self.var_inc = 1.0
        self.heap: list[tuple[float, int, int]] = [(-self.activity[v], self.rank[v], v) for v in range(n)]
        heapq.heapify(self.heap)

        for ci, c in enumerate(clauses):
            self._add_original(ci, c)
        self.num_original = len(self.clauses)

    # ---------------------------------------------------------------- setup

    @staticmethod
    def _enc(x: int) -> int:
        return 2 * (x - 1) if x > 0 else 2 * (-x - 1) + 1

    def _add_original(self, ci: int, c: Sequence[int]) -> None:
        lits = list(dict.fromkeys(self._enc(x) for x in c))
        self.clauses.append(lits)
        if not self.ok:
            return
        if any(l ^ 1 in lits for l in lits):
            return  # tautology: always satisfied, never watched
        if not lits:
            self.ok = False
            self.empty_clause = ci
            return
        if len(lits) == 1:
            l = lits[0]
            v = self.lit_val[l]
            if v == -1:
                self.ok = False
            elif v == 0:
                self._enqueue(l, len(self.clauses) - 1)
            return
        self.watches[lits[0]].append(len(self.clauses) - 1)
        self.watches[lits[1]].append(len(self.clauses) - 1)

    # ------------------------------------------------------------ primitives

    def _enqueue(self, lit: int, reason: int | None) -> None:
        v = lit >> 1
        self.lit_val[lit] = 1
        self.lit_val[lit ^ 1] = -1
        self.level[v] = len(self.trail_lim)
        self.reason[v] = reason
        self.trail.append(lit)

    def _decision_level(self) -> int:
        return len(self.trail_lim)

    def _cancel_until(self, lvl: int) -> None:
        if len(self.trail_lim) <= lvl:
            return
        lit_val, phase, heap, act, rank, reason = self.lit_val, self.phase, self.heap, self.activity, self.rank, self.reason
        stop = self.trail_lim[lvl]
        for i in range(len(self.trail) - 1, stop - 1, -1):
            lit = self.trail[i]
            v = lit >> 1
            lit_val[lit] = 0
            lit_val[lit ^ 1] = 0
            reason[v] = None
            if self.cfg.phase_saving:
                phase[v] = lit & 1
            heapq.heappush(heap, (-act[v], rank[v], v))
        del self.trail[stop:]
        del self.trail_lim[lvl:]
        self.qhead = len(self.trail)

    def propagate(self) -> int | None:
        """Unit propagation to fixpoint; returns a conflicting clause index or None."""
        lit_val, clauses, watches, trail = self.lit_val, self.clauses, self.watches, self.trail
        level, reason = self.level, self.reason
        dl = len(self.trail_lim)
        props = 0
        while self.qhead < len(trail):
            false_lit = trail[self.qhead] ^ 1
            self.qhead += 1
            ws = watches[false_lit]
            kept = []
            i, nw = 0, len(ws)
            while i < nw:
                ci = ws[i]
                i += 1
                c = clauses[ci]
                if c[0] == false_lit:
                    c[0] = c[1]
                    c[1] = false_lit
                first = c[0]
                if lit_val[first] == 1:
                    kept.append(ci)
                    continue
                for k in range(2, len(c)):
                    l = c[k]
                    if lit_val[l] != -1:
                        c[1] = l
                        c[k] = false_lit
                        watches[l].append(ci)
                        break
                else:
                    kept.append(ci)
                    if lit_val[first] == -1:
                        kept.extend(ws[i:])
                        watches[false_lit] = kept
                        self.qhead = len(trail)
                        self.stats.propagations += props
                        return ci
                    v = first >> 1
                    lit_val[first] = 1
                    lit_val[first ^ 1] = -1
                    level[v] = dl
                    reason[v] = ci
                    trail.append(first)
                    props += 1
            watches[false_lit] = kept
        self.stats.propagations += props
        return None

    def _bump(self, v: int) -> None:
        act = self.activity
        act[v] += self.var_inc
        if act[v] > RESCALE_LIMIT:
            for u in range(self.n):
                act[u] *= 1.0 / RESCALE_LIMIT
            self.var_inc *= 1.0 / RESCALE_LIMIT
            self._rebuild_heap()
        elif self.lit_val[2 * v] == 0:
            heapq.heappush(self.heap, (-act[v], self.rank[v], v))

    def _rebuild_heap(self) -> None:
        self.heap = [(-self.activity[v], self.rank[v], v) for v in range(self.n) if self.lit_val[2 * v] == 0]
        heapq.heapify(self.heap)

    def _analyze(self, confl: int) -> tuple[list[int], int]:
        seen = self._seen
        level, reason, clauses, trail = self.level, self.reason, self.clauses, self.trail
        dl = len(self.trail_lim)
        learnt = [0]
        counter = 0
        p = -1
        idx = len(trail) - 1
        c = clauses[confl]
        touched = []
        while True:
            start = 0 if p == -1 else 1
            for k in range(start, len(c)):
                q = c[k]
                v = q >> 1
                if not seen[v] and level[v] > 0:
                    seen[v] = True
                    touched.append(v)
                    self._bump(v)
                    if level[v] >= dl:
                        counter += 1
                    else:
                        learnt.append(q)
            while not seen[trail[idx] >> 1]:
                idx -= 1
            p = trail[idx]
            idx -= 1
            v = p >> 1
            seen[v] = False
            counter -= 1
            if counter == 0:
                break
            c = clauses[reason[v]]
        learnt[0] = p ^ 1
        for v in touched:
            seen[v] = False
        if len(learnt) == 1:
            bt = 0
        else:
            mi = max(range(1, len(learnt)), key=lambda k: level[learnt[k] >> 1])
            learnt[1], learnt[mi] = learnt[mi], learnt[1]
            bt = level[learnt[1] >> 1]
        return learnt, bt

    def _analyze_final(self, p: int) -> set[int]:
        """Assumption literals responsible for assumption ``p`` being false (includes ``p``)."""
        out = {p}
        if not self.trail_lim:
            return out
        seen = self._seen
        seen[p >> 1] = True
        touched = [p >> 1]
        for i in range(len(self.trail) - 1, self.trail_lim[0] - 1, -1):
            lit = self.trail[i]
            v = lit >> 1
            if seen[v]:
                r = self.reason[v]
                if r is None:
                    out.add(lit)
                else:
                    for q in self.clauses[r][1:]:
                        u = q >> 1
                        if self.level[u] > 0 and not seen[u]:
                            seen[u] = True
                            touched.append(u)
        for v in touched:
            seen[v] = False
        return out

    def _pick_branch(self) -> int:
        lit_val = self.lit_val
        if self.cfg.random_var_freq > 0 and self.rng.random() < self.cfg.random_var_freq:
            free = [v for v in range(self.n) if lit_val[2 * v] == 0]
            if free:
                v = self.rng.choice(free)
                return 2 * v + self.phase[v]
        heap, act = self.heap, self.activity
        while heap:
            a, _, v = heapq.heappop(heap)
            if lit_val[2 * v] == 0 and -a == act[v]:
                return 2 * v + self.phase[v]
        return -1

    # ----------------------------------------------------------------- search

    def solve(self, assumptions: Sequence[int] = ()) -> tuple[Kind, set[int] | None]:
        """Run CDCL; returns (kind, failed assumption literals as DIMACS ints if UNSAT under them)."""
        t0 = time.perf_counter()
        try:
            return self._search([self._enc(a) for a in assumptions], t0)
        finally:
            self.stats.wall_ms = (time.perf_counter() - t0) * 1000.0

    def _search(self, assumptions: list[int], t0: float) -> tuple[Kind, set[int] | None]:
        self._seen = [False] * self.n
        self.final_conflict: set[int] = set()
        if not self.ok:
            return Kind.UNSAT, set()
        cfg = self.cfg
        budget = cfg.conflict_budget
        tbudget = cfg.time_budget_ms / 1000.0
        decay = 1.0 / cfg.activity_decay
        stats = self.stats
        restart_idx = 0
        next_restart = luby(0) * cfg.restart_base
        since_restart = 0
        while True:
            confl = self.propagate()
            if confl is not None:
                stats.conflicts += 1
                since_restart += 1
                if not self.trail_lim:
                    return Kind.UNSAT, set()
                learnt, bt = self._analyze(confl)
                self._cancel_until(bt)
                if len(learnt) == 1:
                    self._enqueue(learnt[0], None)
                else:
                    ci = len(self.clauses)
                    self.clauses.append(learnt)
                    self.watches[learnt[0]].append(ci)
                    self.watches[learnt[1]].append(ci)
                    self._enqueue(learnt[0], ci)
                self.var_inc *= decay
                if self.var_inc > RESCALE_LIMIT:
                    for u in range(self.n):
                        self.activity[u] *= 1.0 / RESCALE_LIMIT
                    self.var_inc *= 1.0 / RESCALE_LIMIT
                    self._rebuild_heap()
                if budget and stats.conflicts >= budget:
                    return Kind.HALTED, None
                if tbudget and time.perf_counter() - t0 > tbudget:
                    return Kind.HALTED, None
                if len(self.heap) > 8 * self.n + 1024:
                    self._rebuild_heap()
                continue
            if since_restart >= next_restart:
                stats.restarts += 1
                restart_idx += 1
                next_restart = luby(restart_idx) * cfg.restart_base
                since_restart = 0
                self._cancel_until(0)
                continue
            dl = len(self.trail_lim)
            if dl < len(assumptions):
                a = assumptions[dl]
                val = self.lit_val[a]
                if val == 1:
                    self.trail_lim.append(len(self.trail))
                    continue
                if val == -1:
                    failed = self._analyze_final(a)
                    self.final_conflict = {self._dec(l) for l in failed}
                    return Kind.UNSAT, self.final_conflict
                self.trail_lim.append(len(self.trail))
                stats.decisions += 1
                self._enqueue(a, None)
                continue
            lit = self._pick_branch()
            if lit < 0:
                return Kind.SAT, None
            stats.decisions += 1
            self.trail_lim.append(len(self.trail))
            self._enqueue(lit, None)

    @staticmethod
    def _dec(lit: int) -> int:
        v = (lit >> 1) + 1
        return -v if lit & 1 else v

    def model(self) -> tuple[bool, ...]:
        return tuple(self.lit_val[2 * v] == 1 for v in range(self.n))

    def learnt_clauses(self) -> list[tuple[int, ...]]:
        return [tuple(self._dec(l) for l in c) for c in self.clauses[self.num_original:]]

    def check_propagation_fixpoint(self) -> bool:
        """True iff no clause is unit or falsified under the current trail."""
        for c in self.clauses:
            vals = [self.lit_val[l] for l in c]
            if 1 in vals:
                continue
            if vals.count(0) <= 1:
                return False
        return True


def solve(cnf: Cnf, cfg: SolverConfig | None = None, seed_hint: BranchSeed | None = None) -> Verdict:
    cfg = cfg or SolverConfig()
    s = Solver(cnf.num_vars, cnf.clauses, cfg, seed_hint)
    kind, _ = s.solve()
    model = None
    if kind is Kind.SAT:
        model = s.model()
        if not assignment_satisfies(cnf, model):
            raise AssertionError(f"{cnf.name}: solver produced a non-model")
    return Verdict(kind, model=model, stats=s.stats)


def verify_model(cnf: Cnf, assignment: Sequence[bool]) -> bool:
    return assignment_satisfies(cnf, assignment)


# ------------------------------------------------------------- UNSAT cores


@dataclass
class CoreResult:
    kind: Kind
    clauses: frozenset[int] | None
    variables: frozenset[int] | None
    stats: SolveStats


def _solve_with_selectors(cnf: Cnf, active: Sequence[int], cfg: SolverConfig) -> tuple[Kind, set[int] | None, SolveStats]:
    """Solve the clauses in ``active`` guarded by selector variables; returns the core as clause indices."""
    n = cnf.num_vars
    guarded = []
    sel_of = {}
    for j, ci in enumerate(active):
        s = n + 1 + j
        sel_of[s] = ci
        guarded.append(tuple(cnf.clauses[ci]) + (-s,))
    solver = Solver(n + len(active), guarded, cfg)
    kind, failed = solver.solve([n + 1 + j for j in range(len(active))])
    core = None
    if kind is Kind.UNSAT:
        core = {sel_of[a] for a in (failed or ()) if a > 0 and a in sel_of}
    return kind, core, solver.stats


def extract_core(cnf: Cnf, cfg: SolverConfig | None = None, minimize: bool = False) -> CoreResult:
    """UNSAT core via selector literals and assumptions, optionally shrunk by one deletion pass."""
    cfg = cfg or SolverConfig()
    total = SolveStats()

    def add(st: SolveStats):
        for f in ("decisions", "propagations", "conflicts", "restarts", "wall_ms"):
            setattr(total, f, getattr(total, f) + getattr(st, f))

    empties = [i for i, c in enumerate(cnf.clauses) if len(c) == 0]
    if empties:
        core = frozenset(empties[:1])
        return CoreResult(Kind.UNSAT, core, frozenset(), total)
    kind, core, st = _solve_with_selectors(cnf, range(cnf.num_clauses), cfg)
    add(st)
    if kind is Kind.SAT:
        raise NotUnsat(f"{cnf.name or 'instance'} is satisfiable")
    if kind is Kind.HALTED:
        return CoreResult(Kind.HALTED, None, None, total)
    if minimize:
        current = sorted(core)
        for ci in list(current):
            if ci not in current:
                continue
            trial = [c for c in current if c != ci]
            k2, core2, st = _solve_with_selectors(cnf, trial, cfg)
            add(st)
            if k2 is Kind.UNSAT:
                current = sorted(core2)
        core = set(current)
    variables = frozenset(abs(x) for ci in core for x in cnf.clauses[ci])
    return CoreResult(Kind.UNSAT, frozenset(core), variables, total)


def verify_core(cnf: Cnf, core_clauses, cfg: SolverConfig | None = None) -> bool | None:
    """True iff the clause subset is UNSAT; None if the check ran out of budget."""
    idx = sorted(core_clauses)
    for i in idx:
        if not 0 <= i < cnf.num_clauses:
            raise IndexError(f"clause index {i} out of range")
    sub = cnf.subset(idx)
    if sub.num_vars <= 16 or len(sub.variables()) <= 16:
        # compact variables so the exhaustive check stays cheap
        used = sorted(sub.variables())
        ren = {v: k + 1 for k, v in enumerate(used)}
        small = Cnf(len(used), tuple(tuple(ren[abs(x)] * (1 if x > 0 else -1) for x in c) for c in sub.clauses))
        if small.num_vars <= BRUTE_FORCE_MAX_VARS:
            return brute_force_solve(small).is_unsat
    v = solve(sub, cfg)
    if v.kind is Kind.HALTED:
        return None
    return v.is_unsat
