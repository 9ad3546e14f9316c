"""Experiment runners behind ``scripts/`` and the acceptance suite.

Each ``check_*`` / ``run_*`` function builds its own workload from a seed and
returns a :class:`CriterionResult` (plus raw data where a script wants it).
"""

from __future__ import annotations

import itertools
import json
import logging
import tempfile
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .bench import (
    ABLATION_ARMS,
    TIME_COLUMNS,
    ModelSeeder,
    OracleSeeder,
    SpeedMetrics,
    compare,
    eval_prediction,
    majority_baseline,
    read_csv,
    report,
    run_ablation,
    run_speed_bench,
    solve_record,
)
from .cnf import (
    MIN_CORE_MAX_CLAUSES,
    MIN_CORE_MAX_VARS,
    Cnf,
    Kind,
    brute_force_solve,
    minimum_cores,
    write_dimacs,
)
from .datagen import (
    GenerationError,
    GenSpec,
    gen_corpus,
    gen_pigeonhole,
    gen_planted_core,
    gen_random_ksat,
    gen_satisfiable,
    write_instance,
)
from .graph import build_wlig, encode, flip_partner, normalize_adjacency
from .labeling import build_dataset
from .model import (
    ModelConfig,
    Sample,
    cross_entropy_loss,
    finite_difference_grads,
    flip,
    focal_loss,
    forward_backward,
    init_params,
    predict,
    relative_error,
    save_checkpoint,
    train,
)
from .solver import BranchSeed, SolverConfig, extract_core, seed_from_prediction, solve, verify_core

log = logging.getLogger(__name__)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float
    data: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] criterion {self.number:>2} {self.name}: {self.detail} ({self.seconds:.1f}s)"


class _Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


def _rand_cnf(rng: np.random.Generator, n: int, m: int, k: int) -> Cnf:
    return gen_random_ksat(n, m, min(k, n), rng)


# ------------------------------------------------------------ 1: gradients


def gradient_check(seed: int, instances: int = 20, max_vars: int = 6, step: float = 1e-4) -> list[dict]:
    """Per instance: worst per-tensor relative error of analytic vs central-difference gradients."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(instances):
        n = int(rng.integers(2, max_vars + 1))
        m = int(rng.integers(2, 3 * n + 1))
        cnf = _rand_cnf(rng, n, m, 3)
        cfg = ModelConfig(d=int(rng.integers(1, 4)), L=int(rng.integers(1, 3)), hidden=int(rng.integers(2, 6)))
        params = init_params(cfg, int(rng.integers(2**31)))
        for key in params:
            params[key] = params[key] + rng.normal(0, 0.3, params[key].shape)
        sample = Sample(encode(cnf), (rng.random(n) < 0.7).astype(np.float64), 1.0)
        _, grads = forward_backward(params, sample, cfg)
        fd = finite_difference_grads(params, sample, cfg, step=step)
        errs = {k: relative_error(grads[k], fd[k]) for k in grads}
        out.append({"n": n, "m": m, "d": cfg.d, "L": cfg.L, "errors": errs, "worst": max(errs.values())})
    return out


def check_gradients(seed: int = 0, instances: int = 20, tol: float = 1e-4) -> CriterionResult:
    with _Timer() as t:
        rows = gradient_check(seed, instances)
    worst = max(r["worst"] for r in rows)
    ok = worst < tol and t.seconds < 60
    return CriterionResult(1, "gradient fidelity", ok,
                           f"max rel err {worst:.2e} over {instances} instances (< {tol:g}, < 60 s)", t.seconds,
                           {"rows": rows})


# --------------------------------------------------------------- 2: solver


def solver_corpus(seed: int, count: int = 1000, max_vars: int = 20) -> list[Cnf]:
    """Random k-CNF with n <= max_vars, k in {2, 3, 4} and clause ratios spread across the phase transition."""
    rng = np.random.default_rng(seed)
    thresholds = {2: 1.0, 3: 4.26, 4: 9.93}
    out = []
    for i in range(count):
        n = int(rng.integers(1, max_vars + 1))
        k = int(rng.choice([2, 3, 3, 4]))
        ratio = thresholds[k] * float(rng.uniform(0.3, 1.8))
        m = max(1, int(round(ratio * n)))
        out.append(replace(_rand_cnf(rng, n, m, k), name=f"rand-{i}"))
    return out


def check_solver(seed: int = 0, count: int = 1000) -> CriterionResult:
    with _Timer() as t:
        cnfs = solver_corpus(seed, count) + [gen_pigeonhole(h) for h in (1, 2, 3)]
        mismatches = []
        kinds = {"SAT": 0, "UNSAT": 0}
        for cnf in cnfs:
            v, truth = solve(cnf), brute_force_solve(cnf)
            kinds[truth.kind.value] += 1
            if v.kind is not truth.kind:
                mismatches.append(cnf.name)
    ok = not mismatches and t.seconds < 300
    return CriterionResult(2, "solver correctness", ok,
                           f"{len(cnfs) - len(mismatches)}/{len(cnfs)} verdicts agree "
                           f"({kinds['SAT']} SAT, {kinds['UNSAT']} UNSAT, PHP(2,1)..PHP(4,3) included, < 300 s)",
                           t.seconds, {"mismatches": mismatches})


# -------------------------------------------------------------- 3: seeding


def check_seeding(seed: int = 0, count: int = 200, seeds_per: int = 5) -> CriterionResult:
    rng = np.random.default_rng(seed)
    cfg = SolverConfig()
    with _Timer() as t:
        disagree, halted = [], 0
        for i in range(count):
            n = int(rng.integers(20, 61))
            cnf = _rand_cnf(rng, n, int(round(float(rng.uniform(3.5, 5.0)) * n)), 3)
            base = solve(cnf, cfg)
            halted += base.kind is Kind.HALTED
            for _ in range(seeds_per):
                hint = seed_from_prediction(rng.random(n))
                v = solve(cnf, cfg, hint)
                halted += v.kind is Kind.HALTED
                if v.kind is not base.kind:
                    disagree.append(i)
    ok = not disagree and not halted and t.seconds < 300
    return CriterionResult(3, "seeding preserves completeness", ok,
                           f"{count}x{seeds_per} seeded solves, {len(disagree)} kind mismatches, {halted} halts (< 300 s)",
                           t.seconds)


# ---------------------------------------------------------------- 4: cores


def core_corpus(seed: int, count: int = 200) -> list[Cnf]:
    """Synthetic UNSAT instances: half small enough for exhaustive minimum cores, half larger."""
    rng = np.random.default_rng(seed)
    out: list[Cnf] = []
    small = count // 2
    out += [gen_pigeonhole(1), gen_pigeonhole(2)]
    while len(out) < small:
        # random 2-CNF kernels: small enough for exhaustive minimum cores, often with several MUSes
        nc = int(rng.integers(3, 8))
        spec = GenSpec(n_core_vars=nc, n_pad_vars=int(rng.integers(0, 5)), k=2,
                       clause_ratio=float(rng.uniform(1.5, 2.5)), pad_clause_ratio=0.8)
        try:
            p = gen_planted_core(spec, rng, name=f"small-{len(out)}")
        except GenerationError:
            continue
        if _within_min_core_bounds(p.cnf):
            out.append(p.cnf)
    out += [gen_pigeonhole(3), gen_pigeonhole(4)]
    while len(out) < count:
        spec = GenSpec(n_core_vars=int(rng.integers(15, 41)), n_pad_vars=int(rng.integers(2, 20)),
                       clause_ratio=float(rng.uniform(6, 10)), pad_clause_ratio=2.0)
        out.append(gen_planted_core(spec, rng, name=f"large-{len(out)}").cnf)
    return out


def _within_min_core_bounds(cnf: Cnf) -> bool:
    return cnf.num_vars <= MIN_CORE_MAX_VARS and cnf.num_clauses <= MIN_CORE_MAX_CLAUSES


def check_cores(seed: int = 0, count: int = 200) -> CriterionResult:
    """Checks the default (unminimized) output and, for information, the minimized one."""
    with _Timer() as t:
        cnfs = core_corpus(seed, count)
        invalid = {False: 0, True: 0}
        misses = {False: [], True: []}
        bounded = 0
        for i, cnf in enumerate(cnfs):
            mins = minimum_cores(cnf) if _within_min_core_bounds(cnf) else None
            bounded += mins is not None
            for minimize in (False, True):
                r = extract_core(cnf, minimize=minimize)
                if verify_core(cnf, r.clauses) is not True:
                    invalid[minimize] += 1
                if mins is not None and not any(mc <= r.clauses for mc in mins):
                    misses[minimize].append(i)
    ok = invalid[False] == 0 and invalid[True] == 0 and not misses[False] and t.seconds < 600
    detail = (f"{count} instances: invalid cores {invalid[False]} (minimized {invalid[True]}); "
              f"core contains a minimum core on {bounded - len(misses[False])}/{bounded} bounded instances "
              f"(minimized {bounded - len(misses[True])}/{bounded})")
    return CriterionResult(4, "core validity", ok, detail, t.seconds,
                           {"misses": misses[False], "misses_minimized": misses[True], "bounded": bounded})


# ------------------------------------------------------------- 5: encoding


def pair_count_weights(cnf: Cnf) -> dict[tuple[int, int], int]:
    """Co-occurrence counts of distinct literal pairs, keyed by 0-based node index, by direct enumeration."""
    n = cnf.num_vars

    def node(x: int) -> int:
        return x - 1 if x > 0 else n - x - 1

    counts: dict[tuple[int, int], int] = {}
    for c in cnf.clauses:
        for a, b in itertools.permutations(c, 2):
            key = (node(a), node(b))
            counts[key] = counts.get(key, 0) + 1
    return counts


def check_encoding(seed: int = 0, count: int = 500) -> CriterionResult:
    rng = np.random.default_rng(seed)
    bad_weights, bad_sums, bad_flip = 0, 0, 0
    with _Timer() as t:
        for _ in range(count):
            n = int(rng.integers(1, 13))
            m = int(rng.integers(1, 25))
            clauses = tuple(tuple(int(v) * int(rng.choice((-1, 1))) for v in rng.integers(1, n + 1, size=int(rng.integers(1, 6))))
                            for _ in range(m))
            cnf = Cnf(n, clauses)
            g = build_wlig(cnf)
            A = g.matrix().toarray()
            expected = np.zeros_like(A)
            for (i, j), w in pair_count_weights(cnf).items():
                expected[i, j] = w
            bad_weights += not np.array_equal(A, expected)
            if g.nnz:
                bad_sums += abs(normalize_adjacency(g).total() - 1.0) > 1e-12
            H = rng.normal(size=(2 * n, 3))
            partner = flip_partner(2 * n, n)
            bad_flip += not (np.array_equal(flip(flip(H)), H) and np.array_equal(partner[partner], np.arange(2 * n)))
    ok = not (bad_weights or bad_sums or bad_flip)
    return CriterionResult(5, "graph-encoding equivalence", ok,
                           f"{count} CNFs: weight mismatches {bad_weights}, NormAdj sums off by > 1e-12 {bad_sums}, "
                           f"flip failures {bad_flip}", t.seconds)


# ---------------------------------------------------------------- 6: focal


def check_focal(seed: int = 0, count: int = 100, tol: float = 1e-12) -> CriterionResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    with _Timer() as t:
        for _ in range(count):
            size = int(rng.integers(1, 200))
            p = rng.uniform(0, 1, size)
            y = (rng.random(size) < 0.5).astype(np.float64)
            fl, _ = focal_loss(p, y, 0.5, 0.0)
            ce, _ = cross_entropy_loss(p, y)
            worst = max(worst, abs(fl - 0.5 * ce))
    return CriterionResult(6, "focal-loss reduction", worst <= tol,
                           f"max |focal(gamma=0, alpha=0.5) - 0.5 CE| = {worst:.2e} over {count} vectors (<= {tol:g})",
                           t.seconds)


# ------------------------------------------------------------- 7: learning


@dataclass
class LearningConfig:
    preset: str = "lec-like"
    n_train: int = 2000
    n_test: int = 500
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)


def planted_samples(planted, cfg: ModelConfig) -> list[Sample]:
    out = []
    for p in planted:
        labels = np.zeros(p.cnf.num_vars)
        labels[[v - 1 for v in p.core_vars]] = 1.0
        out.append(Sample(encode(p.cnf, cfg.graph, cfg.norm, cfg.degree), labels, 1.0, p.cnf.name))
    return out


def run_learning(lc: LearningConfig, progress=None) -> CriterionResult:
    """Train on planted labels, evaluate pooled test metrics against the constant-majority predictor."""
    with _Timer() as t:
        corpus = gen_corpus(lc.preset, lc.n_train + lc.n_test, lc.seed)
        gen_s = time.perf_counter() - t.t0
        train_set = planted_samples(corpus[:lc.n_train], lc.model)
        test_set = planted_samples(corpus[lc.n_train:], lc.model)
        params, history = train(train_set, lc.model, progress=progress)
        m = eval_prediction(params, lc.model, test_set)
        maj = majority_baseline(test_set)
    maj_neg = maj.neg_f1 if maj.neg_f1 is not None else float("nan")
    ok = (m.accuracy >= maj.accuracy + 0.05 and m.neg_f1 is not None and m.neg_f1 > maj_neg
          and t.seconds <= 7200)
    fmt = lambda x: "undefined" if x is None else f"{x:.4f}"  # noqa: E731
    detail = (f"acc {m.accuracy:.4f} vs majority {maj.accuracy:.4f} (need +0.05), "
              f"neg F1 {fmt(m.neg_f1)} vs {fmt(maj.neg_f1)}, pos F1 {fmt(m.pos_f1)}")
    return CriterionResult(7, "learning signal", ok, detail, t.seconds, {
        "params": params, "config": lc.model, "history": history, "metrics": m.as_dict(),
        "majority": maj.as_dict(), "generation_s": gen_s,
        "positive_rate": m.positive_rate,
    })


# --------------------------------------------------------------- 8: guided


@dataclass
class GuidedConfig:
    instances: int = 300
    n_core_vars: int = 140
    clause_ratio: float = 4.5
    n_pad_vars: int = 100
    pad_clause_ratio: float = 4.2
    seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)


def guided_corpus(gc: GuidedConfig):
    rng = np.random.default_rng(gc.seed)
    spec = GenSpec(n_core_vars=gc.n_core_vars, n_pad_vars=gc.n_pad_vars, clause_ratio=gc.clause_ratio,
                   pad_clause_ratio=gc.pad_clause_ratio)
    return [gen_planted_core(spec, rng, name=f"guided-{gc.seed}-{i:04d}") for i in range(gc.instances)]


def run_guided(gc: GuidedConfig, params=None, model_cfg: ModelConfig | None = None, out_dir=None,
               progress=None) -> CriterionResult:
    """Baseline vs oracle seeding (hard criterion) and, when a model is given, model seeding (reported only)."""
    with _Timer() as t:
        corpus = guided_corpus(gc)
        base, oracle, model = [], [], []
        seeder = ModelSeeder(params, model_cfg) if params is not None else None
        for i, p in enumerate(corpus):
            name = p.cnf.name
            base.append(solve_record(name, p.cnf, gc.solver, None, 0.0))
            for arm, fn in ((oracle, OracleSeeder(p.core_vars)), (model, seeder)):
                if fn is None:
                    continue
                t0 = time.perf_counter()
                seed = fn(p.cnf)
                overhead = (time.perf_counter() - t0) * 1000.0
                arm.append(solve_record(name, p.cnf, gc.solver, seed, overhead))
            if progress is not None:
                progress(i, base[-1], oracle[-1])
    budget = gc.solver.time_budget_ms
    b = SpeedMetrics("baseline", base, budget)
    o = SpeedMetrics("oracle", oracle, budget)
    data = {"baseline": b.summary(), "oracle": o.summary(), "oracle_vs_baseline": compare(b, o)}
    if model:
        g = SpeedMetrics("model", model, budget)
        data["model"] = g.summary()
        data["model_vs_baseline"] = compare(b, g)
    if out_dir is not None:
        config = {"guided": asdict(gc)}
        report(Path(out_dir) / "oracle", b, o, config)
        if model:
            report(Path(out_dir) / "model", b, SpeedMetrics("model", model, budget), config)
    bm, om = b.median_conflicts, o.median_conflicts
    ok = bm >= 1000 and om <= bm and t.seconds <= 1800
    detail = f"median conflicts baseline {bm:.0f} (need >= 1000), oracle-seeded {om:.0f}"
    if "model" in data:
        c = data["model_vs_baseline"]
        detail += (f"; model-seeded median {data['model']['median_conflicts']:.0f}, "
                   f"Imp. {c['improvement_ms']:.1f} ms ({c['improvement_pct']:.1f}%)")
    return CriterionResult(8, "guided-solving benefit", ok, detail, t.seconds, data)


# ------------------------------------------------------------- 9: overhead


def check_overhead(params=None, cfg: ModelConfig | None = None, sizes=(500, 1000, 2000, 5000),
                   clause_ratio: float = 12.0, seed: int = 0, limit_s: float = 1.5) -> CriterionResult:
    """Graph build + inference + seed ranking, timed end to end on dense random 3-CNF."""
    cfg = cfg or ModelConfig()
    params = params if params is not None else init_params(cfg, seed)
    rows = []
    with _Timer() as t:
        for n in sizes:
            cnf = gen_random_ksat(n, int(round(clause_ratio * n)), 3, seed)
            t0 = time.perf_counter()
            hint = seed_from_prediction(predict(params, cfg, cnf))
            el = time.perf_counter() - t0
            assert isinstance(hint, BranchSeed)
            rows.append({"n_vars": n, "n_clauses": cnf.num_clauses, "seconds": el})
    worst = max(r["seconds"] for r in rows)
    return CriterionResult(9, "pipeline overhead", worst < limit_s,
                           "; ".join(f"n={r['n_vars']} m={r['n_clauses']}: {r['seconds']:.3f}s" for r in rows)
                           + f" (< {limit_s} s)", t.seconds, {"rows": rows})


# ---------------------------------------------------------- 10: determinism


def _strip_time(rows: list[dict]) -> list[dict]:
    return [{k: v for k, v in r.items() if k not in TIME_COLUMNS} for r in rows]


def check_determinism(seed: int = 0, workdir=None) -> CriterionResult:
    with _Timer() as t, tempfile.TemporaryDirectory(dir=workdir) as tmp:
        tmp = Path(tmp)
        corpus = gen_corpus("lec-like", 12, seed)
        again = gen_corpus("lec-like", 12, seed)
        same_corpus = all(a.cnf == b.cnf and a.core_vars == b.core_vars for a, b in zip(corpus, again))

        cfg = ModelConfig(d=8, L=2, hidden=16, epochs=3, batch_size=4, seed=seed)
        blobs = []
        for run in range(2):
            params, _ = train(planted_samples(corpus, cfg), cfg)
            save_checkpoint(params, cfg, tmp / f"model{run}.ckpt")
            blobs.append((tmp / f"model{run}.ckpt").read_bytes())
        same_ckpt = blobs[0] == blobs[1]

        fields = ("decisions", "propagations", "conflicts", "restarts")
        stats = []
        for run in range(2):
            row = []
            for p in corpus:
                for hint in (None, seed_from_prediction(predict(params, cfg, p.cnf))):
                    s = solve(p.cnf, SolverConfig(seed=seed), hint).stats
                    row.append(tuple(getattr(s, f) for f in fields))
            stats.append(row)
        same_stats = stats[0] == stats[1]

        csvs = []
        for run in range(2):
            out = tmp / f"bench{run}"
            b, g = run_speed_bench([p.cnf for p in corpus], SolverConfig(seed=seed), seed_fn=ModelSeeder(params, cfg))
            report(out, b, g, {"seed": seed})
            csvs.append({name: _strip_time(read_csv(out / name)) for name in ("baseline.csv", "guided.csv", "scatter.csv")})
            csvs[-1]["provenance"] = [l for l in (out / "guided.csv").read_text().splitlines() if l.startswith("#")]
        same_csv = csvs[0] == csvs[1]
    ok = same_corpus and same_ckpt and same_stats and same_csv
    detail = (f"corpus {'same' if same_corpus else 'DIFFERS'}, checkpoints {'bit-identical' if same_ckpt else 'DIFFER'}, "
              f"solver stats {'identical' if same_stats else 'DIFFER'}, "
              f"bench CSVs {'identical' if same_csv else 'DIFFER'} modulo time columns")
    return CriterionResult(10, "determinism", ok, detail, t.seconds)


# ------------------------------------------------------------- 11: ablation


@dataclass
class AblationConfig:
    preset: str = "lec-like"
    instances: int = 500
    sat_fraction: float = 0.1  # satisfiable look-alikes, used only by the graph-level supervision arm
    sat_clause_ratio: float = 3.5
    seed: int = 0
    model: ModelConfig = field(default_factory=lambda: ModelConfig(epochs=10))


def write_ablation_corpus(ac: AblationConfig, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    n_sat = int(round(ac.sat_fraction * ac.instances))
    for p in gen_corpus(ac.preset, ac.instances - n_sat, ac.seed):
        write_instance(d, p)
    rng = np.random.default_rng(ac.seed + 1)
    for i in range(n_sat):
        n = int(rng.integers(60, 301))
        cnf = gen_satisfiable(n, ac.sat_clause_ratio, 3, rng, name=f"sat-{ac.seed}-{i:05d}")
        (d / f"{cnf.name}.cnf").write_bytes(write_dimacs(cnf))
    return d


def run_ablation_suite(ac: AblationConfig, workdir=None, out_dir=None, progress=None) -> CriterionResult:
    with _Timer() as t, tempfile.TemporaryDirectory(dir=workdir) as tmp:
        d = write_ablation_corpus(ac, Path(tmp) / "corpus")
        manifest = build_dataset(d, SolverConfig(), split_seed=ac.seed, label_source="planted")
        rows = []
        for axis in ABLATION_ARMS:
            rows += run_ablation(manifest, axis, ac.model, progress=progress)
    complete = len(rows) == sum(len(v) for v in ABLATION_ARMS.values()) and all(
        isinstance(r["metrics"]["accuracy"], float) for r in rows)
    by = {(r["axis"], r["arm"]): r["metrics"] for r in rows}
    wlig, lcg = by[("graph", "wlig")], by[("graph", "lcg")]
    direction = "WLIG > LCG" if wlig["accuracy"] > lcg["accuracy"] else (
        "WLIG = LCG" if wlig["accuracy"] == lcg["accuracy"] else "LCG > WLIG")
    data = {"rows": rows, "graph_direction": direction, "labeled": len(manifest.entries),
            "skipped": len(manifest.skipped)}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "ablation.json").write_text(json.dumps({"config": asdict(ac), **data}, indent=1, sort_keys=True,
                                                      default=str) + "\n")
    arms = ", ".join(f"{a}/{b} acc {m['accuracy']:.4f}" for (a, b), m in by.items())
    detail = (f"{ac.instances} instances ({len(manifest.entries)} UNSAT labeled, {len(manifest.skipped)} SAT); "
              f"{arms}; graph direction {direction}")
    return CriterionResult(11, "ablation harness", complete, detail, t.seconds, data)
