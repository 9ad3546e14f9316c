"""CNF data model, DIMACS I/O and exhaustive oracles.

Clauses are stored as tuples of signed DIMACS integers (``3`` is x3, ``-3``
is its negation).  :class:`Lit` exists for callers that want the explicit
(var, polarity) view and for the literal-to-node index convention used by
the graph encoders: the positive literal of variable ``i`` is node ``i`` and
the negative literal is node ``n + i`` (1-based).
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

BRUTE_FORCE_MAX_VARS = 26
MIN_CORE_MAX_VARS = 20
MIN_CORE_MAX_CLAUSES = 16


class DimacsError(ValueError):
    """Base class for DIMACS parse errors; ``line`` is 1-based."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class MalformedHeader(DimacsError):
    pass


class LiteralOutOfRange(DimacsError):
    pass


class MissingTerminator(DimacsError):
    pass


class EmptyClauseError(DimacsError):
    pass


class ClauseCountMismatch(DimacsError):
    pass


class BoundExceeded(ValueError):
    """Instance too large for an exhaustive oracle."""


class NotUnsat(ValueError):
    """Raised when an operation requires an unsatisfiable formula."""


@dataclass(frozen=True)
class Lit:
    var: int
    polarity: bool = True

    def __post_init__(self):
        if self.var < 1:
            raise ValueError(f"variable index must be >= 1, got {self.var}")

    @classmethod
    def from_int(cls, x: int) -> "Lit":
        if x == 0:
            raise ValueError("0 is not a literal")
        return cls(abs(x), x > 0)

    def to_int(self) -> int:
        return self.var if self.polarity else -self.var

    def __neg__(self) -> "Lit":
        return Lit(self.var, not self.polarity)


def lit_node_index(lit: Lit | int, n: int) -> int:
    """1-based node index of a literal among the ``2n`` literal nodes."""
    if isinstance(lit, int):
        lit = Lit.from_int(lit)
    if lit.var > n:
        raise ValueError(f"variable {lit.var} out of range for n={n}")
    return lit.var if lit.polarity else n + lit.var


def node_lit(node: int, n: int) -> int:
    """Inverse of :func:`lit_node_index`, returning a signed DIMACS literal."""
    if not 1 <= node <= 2 * n:
        raise ValueError(f"node {node} out of range for n={n}")
    return node if node <= n else -(node - n)


def is_tautology(clause: Sequence[int]) -> bool:
    s = set(clause)
    return any(-x in s for x in s)


def _dedup(lits: Iterable[int]) -> tuple[int, ...]:
    return tuple(dict.fromkeys(lits))


@dataclass(frozen=True)
class Cnf:
    num_vars: int
    clauses: tuple[tuple[int, ...], ...]
    name: str = ""

    def __post_init__(self):
        if self.num_vars < 0:
            raise ValueError("num_vars must be non-negative")
        clauses = tuple(_dedup(c) for c in self.clauses)
        for c in clauses:
            for x in c:
                if x == 0 or abs(x) > self.num_vars:
                    raise ValueError(f"literal {x} out of range for n={self.num_vars}")
        object.__setattr__(self, "clauses", clauses)

    @property
    def num_clauses(self) -> int:
        return len(self.clauses)

    def tautological(self) -> list[bool]:
        return [is_tautology(c) for c in self.clauses]

    def subset(self, indices: Iterable[int], name: str | None = None) -> "Cnf":
        idx = sorted(set(indices))
        return Cnf(self.num_vars, tuple(self.clauses[i] for i in idx), name if name is not None else self.name)

    def variables(self) -> set[int]:
        return {abs(x) for c in self.clauses for x in c}


class Kind(str, enum.Enum):
    SAT = "SAT"
    UNSAT = "UNSAT"
    HALTED = "HALTED"


@dataclass
class SolveStats:
    decisions: int = 0
    propagations: int = 0
    conflicts: int = 0
    restarts: int = 0
    wall_ms: float = 0.0


@dataclass
class Verdict:
    kind: Kind
    model: tuple[bool, ...] | None = None
    core_clauses: frozenset[int] | None = None
    stats: SolveStats = field(default_factory=SolveStats)

    @property
    def is_sat(self) -> bool:
        return self.kind is Kind.SAT

    @property
    def is_unsat(self) -> bool:
        return self.kind is Kind.UNSAT


# --------------------------------------------------------------------- DIMACS


def parse_dimacs(text: bytes | str, name: str = "") -> Cnf:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    header: tuple[int, int] | None = None
    clauses: list[tuple[int, ...]] = []
    pending: list[int] = []
    pending_line = 0
    lineno = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        if line.startswith("%"):
            break
        if line.startswith("p"):
            if header is not None:
                raise MalformedHeader("duplicate header", lineno)
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise MalformedHeader(f"expected 'p cnf <n> <m>', got {line!r}", lineno)
            try:
                n, m = int(parts[2]), int(parts[3])
            except ValueError:
                raise MalformedHeader(f"non-integer header field in {line!r}", lineno) from None
            if n < 0 or m < 0:
                raise MalformedHeader("negative header field", lineno)
            header = (n, m)
            continue
        if header is None:
            raise MalformedHeader("clause before header", lineno)
        n = header[0]
        for tok in line.split():
            try:
                x = int(tok)
            except ValueError:
                raise DimacsError(f"bad token {tok!r}", lineno) from None
            if x == 0:
                if not pending:
                    raise EmptyClauseError("empty clause", lineno)
                clauses.append(_dedup(pending))
                pending = []
                continue
            if abs(x) > n:
                raise LiteralOutOfRange(f"literal {x} exceeds n={n}", lineno)
            if not pending:
                pending_line = lineno
            pending.append(x)
    if header is None:
        raise MalformedHeader("missing header", max(lineno, 1))
    if pending:
        raise MissingTerminator(f"clause starting on line {pending_line} lacks terminating 0", lineno)
    if len(clauses) != header[1]:
        raise ClauseCountMismatch(f"header declares {header[1]} clauses, found {len(clauses)}", lineno)
    return Cnf(header[0], tuple(clauses), name)


def write_dimacs(cnf: Cnf) -> bytes:
    out = [f"p cnf {cnf.num_vars} {cnf.num_clauses}"]
    out.extend(" ".join(map(str, c + (0,))) for c in cnf.clauses)
    return ("\n".join(out) + "\n").encode("ascii")


def read_cnf(path) -> Cnf:
    from pathlib import Path

    p = Path(path)
    return parse_dimacs(p.read_bytes(), name=p.stem)


# -------------------------------------------------------------------- oracles


def _clause_masks(cnf: Cnf, codes: np.ndarray) -> list[np.ndarray]:
    """Per-clause boolean satisfaction vectors over assignment codes.

    Assignment code ``k`` sets x_i to bit ``n - i`` of ``k``, so increasing
    codes enumerate assignments lexicographically with x1 most significant.
    """
    n = cnf.num_vars
    bits = {}
    out = []
    for c in cnf.clauses:
        sat = np.zeros(codes.shape, dtype=bool)
        for x in c:
            v = abs(x)
            if v not in bits:
                bits[v] = ((codes >> (n - v)) & 1).astype(bool)
            sat |= bits[v] if x > 0 else ~bits[v]
        out.append(sat)
    return out


def _decode(code: int, n: int) -> tuple[bool, ...]:
    return tuple(bool((code >> (n - i)) & 1) for i in range(1, n + 1))


def brute_force_solve(cnf: Cnf, chunk: int = 1 << 16) -> Verdict:
    """Exhaustive solve; returns the lexicographically first model (all-false first)."""
    n = cnf.num_vars
    if n > BRUTE_FORCE_MAX_VARS:
        raise BoundExceeded(f"brute force limited to {BRUTE_FORCE_MAX_VARS} variables, got {n}")
    if any(len(c) == 0 for c in cnf.clauses):
        return Verdict(Kind.UNSAT)
    total = 1 << n
    for start in range(0, total, chunk):
        codes = np.arange(start, min(start + chunk, total), dtype=np.int64)
        ok = np.ones(codes.shape, dtype=bool)
        for sat in _clause_masks(cnf, codes):
            ok &= sat
            if not ok.any():
                break
        hits = np.flatnonzero(ok)
        if hits.size:
            return Verdict(Kind.SAT, model=_decode(int(codes[hits[0]]), n))
    return Verdict(Kind.UNSAT)


def _unsat_subset_table(cnf: Cnf) -> np.ndarray:
    """Boolean table over clause-subset bitmasks: True where the subset is UNSAT."""
    n, m = cnf.num_vars, cnf.num_clauses
    codes = np.arange(1 << n, dtype=np.int64)
    satmask = np.zeros(codes.shape, dtype=np.int64)
    for j, sat in enumerate(_clause_masks(cnf, codes)):
        satmask |= sat.astype(np.int64) << j
    sat_subset = np.zeros(1 << m, dtype=bool)
    sat_subset[np.unique(satmask)] = True
    # downward closure: any subset of a jointly satisfied set is satisfiable
    idx = np.arange(1 << m)
    for b in range(m):
        has = (idx >> b) & 1 == 1
        sat_subset[idx[has] ^ (1 << b)] |= sat_subset[idx[has]]
    return ~sat_subset


def _check_core_bounds(cnf: Cnf) -> None:
    if cnf.num_vars > MIN_CORE_MAX_VARS or cnf.num_clauses > MIN_CORE_MAX_CLAUSES:
        raise BoundExceeded(
            f"min-core enumeration limited to n<={MIN_CORE_MAX_VARS}, m<={MIN_CORE_MAX_CLAUSES}; "
            f"got n={cnf.num_vars}, m={cnf.num_clauses}"
        )


def minimum_cores(cnf: Cnf) -> list[frozenset[int]]:
    """All minimum-cardinality UNSAT clause subsets, in lexicographic order."""
    _check_core_bounds(cnf)
    unsat = _unsat_subset_table(cnf)
    if not unsat[-1]:
        raise NotUnsat("formula is satisfiable")
    masks = np.flatnonzero(unsat)
    sizes = np.array([bin(int(x)).count("1") for x in masks])
    best = sizes.min()
    cores = [tuple(j for j in range(cnf.num_clauses) if (int(x) >> j) & 1) for x in masks[sizes == best]]
    return [frozenset(c) for c in sorted(cores)]


def brute_force_min_core(cnf: Cnf) -> frozenset[int]:
    """Minimum-cardinality UNSAT clause subset, lexicographically smallest on ties."""
    return minimum_cores(cnf)[0]


def assignment_satisfies(cnf: Cnf, assignment: Sequence[bool]) -> bool:
    if len(assignment) != cnf.num_vars:
        raise ValueError(f"assignment has {len(assignment)} values, formula has {cnf.num_vars} variables")
    return all(any(assignment[abs(x) - 1] == (x > 0) for x in c) for c in cnf.clauses)


def all_models(cnf: Cnf) -> Iterable[tuple[bool, ...]]:
    """Every satisfying assignment, for tiny formulas in tests."""
    for bits in itertools.product((False, True), repeat=cnf.num_vars):
        if assignment_satisfies(cnf, bits):
            yield bits
