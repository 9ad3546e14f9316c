"""Synthetic instance generators.

Planted-core instances are the main workload: an UNSAT kernel over some
variables plus satisfiable padding over disjoint fresh variables, shuffled
so that neither variable names nor clause positions reveal the kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .cnf import Cnf, brute_force_solve, write_dimacs
from .solver import SolverConfig, solve

MAX_RESAMPLES = 100
BRUTE_FORCE_VERIFY = 16


class GenerationError(RuntimeError):
    pass


@dataclass
class GenSpec:
    family: str = "planted_core"  # planted_core | pigeonhole | random_ksat
    n_core_vars: int = 20
    n_pad_vars: int = 2
    k: int = 3
    clause_ratio: float = 8.0  # kernel clauses per kernel variable
    pad_clause_ratio: float = 2.0
    kernel: str = "random"  # random | pigeonhole
    seed: int = 0

    def __post_init__(self):
        if self.family not in ("planted_core", "pigeonhole", "random_ksat"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.n_core_vars < 1 or self.n_pad_vars < 0 or self.k < 1:
            raise ValueError("n_core_vars and k must be positive, n_pad_vars non-negative")
        if self.clause_ratio <= 0 or self.pad_clause_ratio < 0:
            raise ValueError("clause_ratio must be > 0")

    @property
    def core_fraction(self) -> float:
        return self.n_core_vars / (self.n_core_vars + self.n_pad_vars)


def _random_clauses(n: int, m: int, k: int, rng: np.random.Generator, offset: int = 0) -> list[tuple[int, ...]]:
    if k > n:
        raise ValueError(f"k={k} exceeds n={n}")
    out = []
    for _ in range(m):
        vs = rng.choice(n, size=k, replace=False) + 1 + offset
        signs = rng.integers(0, 2, size=k) * 2 - 1
        out.append(tuple(int(v * s) for v, s in zip(vs, signs)))
    return out


def gen_random_ksat(n: int, m: int, k: int, rng: np.random.Generator | int, name: str = "") -> Cnf:
    rng = np.random.default_rng(rng)
    return Cnf(n, tuple(_random_clauses(n, m, k, rng)), name)


def gen_pigeonhole(holes: int, name: str = "") -> Cnf:
    """PHP(holes+1, holes): variable p*holes + h + 1 means pigeon p sits in hole h."""
    if holes < 1:
        raise ValueError("holes must be >= 1")
    pigeons = holes + 1

    def x(p, h):
        return p * holes + h + 1

    clauses = [tuple(x(p, h) for h in range(holes)) for p in range(pigeons)]
    for h in range(holes):
        for p in range(pigeons):
            for q in range(p + 1, pigeons):
                clauses.append((-x(p, h), -x(q, h)))
    return Cnf(pigeons * holes, tuple(clauses), name or f"php{pigeons}_{holes}")


def gen_satisfiable(n: int, clause_ratio: float, k: int, rng: np.random.Generator | int, name: str = "") -> Cnf:
    """Random k-CNF resampled until satisfiable."""
    rng = np.random.default_rng(rng)
    m = int(round(clause_ratio * n))
    for _ in range(MAX_RESAMPLES):
        cnf = Cnf(n, tuple(_random_clauses(n, m, k, rng)), name)
        if _is_sat(cnf):
            return cnf
    raise GenerationError(f"no SAT formula after {MAX_RESAMPLES} samples (n={n}, m={m}, k={k})")


def _is_unsat(cnf: Cnf) -> bool:
    if cnf.num_vars <= BRUTE_FORCE_VERIFY:
        return brute_force_solve(cnf).is_unsat
    return solve(cnf, SolverConfig()).is_unsat


def _is_sat(cnf: Cnf) -> bool:
    if cnf.num_vars <= BRUTE_FORCE_VERIFY:
        return brute_force_solve(cnf).is_sat
    return solve(cnf, SolverConfig()).is_sat


@dataclass
class Planted:
    cnf: Cnf
    core_vars: frozenset[int]  # ground truth after renaming
    kernel_clauses: frozenset[int]  # clause indices of the kernel after shuffling


def _kernel(spec: GenSpec, rng: np.random.Generator) -> Cnf:
    if spec.kernel == "pigeonhole":
        # largest PHP that fits in n_core_vars; the caller adopts its variable count
        holes = 1
        while (holes + 2) * (holes + 1) <= spec.n_core_vars:
            holes += 1
        return gen_pigeonhole(holes)
    m = max(1, int(round(spec.clause_ratio * spec.n_core_vars)))
    k = min(spec.k, spec.n_core_vars)
    for _ in range(MAX_RESAMPLES):
        cand = Cnf(spec.n_core_vars, tuple(_random_clauses(spec.n_core_vars, m, k, rng)))
        if _is_unsat(cand):
            return cand
    raise GenerationError(f"no UNSAT kernel after {MAX_RESAMPLES} samples (n={spec.n_core_vars}, m={m}, k={k})")


def _padding(spec: GenSpec, rng: np.random.Generator) -> list[tuple[int, ...]]:
    n_pad = spec.n_pad_vars
    if n_pad == 0:
        return []
    m = int(round(spec.pad_clause_ratio * n_pad))
    k = min(spec.k, n_pad)
    for _ in range(MAX_RESAMPLES):
        pad = _random_clauses(n_pad, m, k, rng)
        if _is_sat(Cnf(n_pad, tuple(pad))):
            return pad
    raise GenerationError(f"no SAT padding after {MAX_RESAMPLES} samples (n={n_pad}, m={m})")


def gen_planted_core(spec: GenSpec, rng: np.random.Generator | int | None = None,
                     kernel: Cnf | None = None, name: str = "") -> Planted:
    """UNSAT kernel over ``n_core_vars`` plus SAT padding over ``n_pad_vars`` fresh variables.

    Pass ``kernel`` to plant a hand-written UNSAT formula instead of sampling one.
    """
    rng = np.random.default_rng(spec.seed if rng is None else rng)
    if kernel is None:
        kernel = _kernel(spec, rng)
    spec = replace(spec, n_core_vars=kernel.num_vars)
    nc, npad = spec.n_core_vars, spec.n_pad_vars
    pad = _padding(spec, rng)
    n = nc + npad
    # rename: kernel var v -> perm[v-1], pad var v -> perm[nc+v-1]
    perm = rng.permutation(n) + 1

    def ren(x: int, off: int) -> int:
        v = int(perm[abs(x) - 1 + off])
        return v if x > 0 else -v

    tagged = [(tuple(ren(x, 0) for x in c), True) for c in kernel.clauses]
    tagged += [(tuple(ren(x, nc) for x in c), False) for c in pad]
    order = rng.permutation(len(tagged))
    clauses = tuple(tagged[i][0] for i in order)
    kernel_idx = frozenset(j for j, i in enumerate(order) if tagged[i][1])
    core_vars = frozenset(int(perm[v]) for v in range(nc))
    return Planted(Cnf(n, clauses, name), core_vars, kernel_idx)


# ------------------------------------------------------------------- presets

PRESETS = {
    # core fraction, total variable range, kernel clause ratio, padding ratio
    "lec-like": dict(core_fraction=(0.90, 0.97), n_range=(60, 300), clause_ratio=(8.0, 12.0), pad_ratio=(1.5, 3.0)),
    "comp-like": dict(core_fraction=(0.30, 0.50), n_range=(60, 300), clause_ratio=(8.0, 12.0), pad_ratio=(1.5, 3.0)),
}


def preset_spec(preset: str, rng: np.random.Generator, **overrides) -> GenSpec:
    p = PRESETS[preset]
    n = int(rng.integers(p["n_range"][0], p["n_range"][1] + 1))
    frac = float(rng.uniform(*p["core_fraction"]))
    nc = max(3, int(round(frac * n)))
    fields = dict(
        family="planted_core",
        n_core_vars=nc,
        n_pad_vars=n - nc,
        clause_ratio=float(rng.uniform(*p["clause_ratio"])),
        pad_clause_ratio=float(rng.uniform(*p["pad_ratio"])),
        seed=int(rng.integers(2**31)),
    )
    fields.update(overrides)
    return GenSpec(**fields)


def gen_corpus(preset: str, count: int, seed: int, **overrides) -> list[Planted]:
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        spec = preset_spec(preset, rng, **overrides)
        out.append(gen_planted_core(spec, name=f"{preset}-{seed}-{i:05d}"))
    return out


# ----------------------------------------------------------------------- I/O


def write_labels(path, core_vars) -> None:
    Path(path).write_text("core-vars\n" + " ".join(str(v) for v in sorted(core_vars)) + "\n")


def read_labels(path) -> frozenset[int]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "core-vars":
        raise ValueError(f"{path}: missing 'core-vars' header")
    return frozenset(int(t) for line in lines[1:] for t in line.split())


def write_instance(directory, planted: Planted) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    cnf_path = d / f"{planted.cnf.name}.cnf"
    cnf_path.write_bytes(write_dimacs(planted.cnf))
    write_labels(d / f"{planted.cnf.name}.core", planted.core_vars)
    return cnf_path
