"""Prediction metrics, guided-vs-baseline runtime benchmarks, ablations and reports.

CSV schemas
-----------
Per-solve records (``baseline.csv``, ``guided.csv``)::

    instance,kind,decisions,propagations,conflicts,restarts,wall_ms,overhead_ms

``wall_ms`` is end-to-end: solve time plus ``overhead_ms`` (graph build,
inference and seeding; 0 for the baseline arm).

Paired scatter data (``scatter.csv``)::

    instance,baseline_ms,guided_ms,baseline_conflicts,guided_conflicts

Every CSV starts with one ``#`` provenance line holding the run config as JSON.
"""

from __future__ import annotations

import csv
import io
import json
import statistics
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .cnf import Cnf, Kind
from .model import ModelConfig, Params, Sample, predict, predict_encoded, train
from .solver import BranchSeed, SolverConfig, seed_from_prediction, solve

THRESHOLD = 0.5
RECORD_COLUMNS = ["instance", "kind", "decisions", "propagations", "conflicts", "restarts", "wall_ms", "overhead_ms"]
SCATTER_COLUMNS = ["instance", "baseline_ms", "guided_ms", "baseline_conflicts", "guided_conflicts"]
TIME_COLUMNS = {"wall_ms", "overhead_ms", "baseline_ms", "guided_ms"}


# ---------------------------------------------------------------- prediction


def f1(tp: int, fp: int, fn: int) -> float | None:
    """F1 of one class; ``None`` when the class is absent from the ground truth."""
    if tp + fn == 0:
        return None
    return 2 * tp / (2 * tp + fp + fn)


@dataclass
class PredMetrics:
    tp: int = 0  # core predicted core
    fp: int = 0
    tn: int = 0
    fn: int = 0
    macro: dict = field(default_factory=dict)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else float("nan")

    @property
    def pos_f1(self) -> float | None:
        return f1(self.tp, self.fp, self.fn)

    @property
    def neg_f1(self) -> float | None:
        return f1(self.tn, self.fn, self.fp)

    @property
    def positive_rate(self) -> float:
        return (self.tp + self.fn) / self.total if self.total else float("nan")

    def __add__(self, other: "PredMetrics") -> "PredMetrics":
        return PredMetrics(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "pos_f1": fmt_optional(self.pos_f1),
            "neg_f1": fmt_optional(self.neg_f1),
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "macro": self.macro,
        }


def fmt_optional(x: float | None):
    return "undefined" if x is None else x


def confusion(probs: np.ndarray, labels: np.ndarray, threshold: float = THRESHOLD) -> PredMetrics:
    pred = np.asarray(probs) >= threshold
    y = np.asarray(labels) > 0.5
    return PredMetrics(
        tp=int(np.sum(pred & y)), fp=int(np.sum(pred & ~y)), tn=int(np.sum(~pred & ~y)), fn=int(np.sum(~pred & y))
    )


def _mean_defined(xs):
    xs = [x for x in xs if x is not None]
    return float(np.mean(xs)) if xs else None


def pooled_metrics(probs: Sequence[np.ndarray], labels: Sequence[np.ndarray], threshold: float = THRESHOLD) -> PredMetrics:
    """Micro (pooled over all variables) counts, with per-instance macro averages attached."""
    if not probs:
        raise ValueError("empty evaluation set")
    per = [confusion(p, y, threshold) for p, y in zip(probs, labels)]
    total = PredMetrics()
    for m in per:
        total = total + m
    total.macro = {
        "accuracy": float(np.mean([m.accuracy for m in per])),
        "pos_f1": fmt_optional(_mean_defined([m.pos_f1 for m in per])),
        "neg_f1": fmt_optional(_mean_defined([m.neg_f1 for m in per])),
    }
    return total


def eval_prediction(params: Params, cfg: ModelConfig, test: Sequence[Sample], threshold: float = THRESHOLD) -> PredMetrics:
    if not test:
        raise ValueError("empty test set")
    probs = [predict_encoded(params, cfg, s.enc) for s in test]
    return pooled_metrics(probs, [s.labels for s in test], threshold)


def majority_baseline(test: Sequence[Sample]) -> PredMetrics:
    """Constant predictor of whichever class is most frequent across the pooled variables."""
    y = np.concatenate([s.labels for s in test])
    const = 1.0 if y.mean() >= 0.5 else 0.0
    return pooled_metrics([np.full(len(s.labels), const) for s in test], [s.labels for s in test])


def pr_curve(probs: np.ndarray, labels: np.ndarray) -> list[tuple[float, float, float]]:
    """(threshold, precision, recall) at every distinct score, core class positive."""
    p = np.asarray(probs)
    y = np.asarray(labels) > 0.5
    out = []
    for t in np.unique(p)[::-1]:
        pred = p >= t
        tp = int(np.sum(pred & y))
        prec = tp / int(pred.sum())
        rec = tp / int(y.sum()) if y.any() else float("nan")
        out.append((float(t), prec, rec))
    return out


# ------------------------------------------------------------------- runtime


@dataclass
class SolveRecord:
    instance: str
    kind: str
    decisions: int
    propagations: int
    conflicts: int
    restarts: int
    wall_ms: float
    overhead_ms: float = 0.0

    def row(self) -> list:
        return [getattr(self, c) for c in RECORD_COLUMNS]


@dataclass
class SpeedMetrics:
    arm: str
    records: list[SolveRecord]
    time_budget_ms: float = 0.0

    def censored_ms(self, r: SolveRecord) -> float:
        if r.kind == Kind.HALTED.value and self.time_budget_ms:
            return max(r.wall_ms, self.time_budget_ms + r.overhead_ms)
        return r.wall_ms

    @property
    def avg_runtime_ms(self) -> float:
        return float(np.mean([self.censored_ms(r) for r in self.records])) if self.records else float("nan")

    @property
    def halted_count(self) -> int:
        return sum(r.kind == Kind.HALTED.value for r in self.records)

    @property
    def halted_pct(self) -> float:
        return 100.0 * self.halted_count / len(self.records) if self.records else float("nan")

    @property
    def median_conflicts(self) -> float:
        return float(statistics.median(r.conflicts for r in self.records))

    @property
    def mean_conflicts(self) -> float:
        return float(np.mean([r.conflicts for r in self.records]))

    @property
    def median_decisions(self) -> float:
        return float(statistics.median(r.decisions for r in self.records))

    def summary(self) -> dict:
        return {
            "arm": self.arm,
            "instances": len(self.records),
            "avg_runtime_ms": self.avg_runtime_ms,
            "halted": self.halted_count,
            "halted_pct": self.halted_pct,
            "median_conflicts": self.median_conflicts,
            "mean_conflicts": self.mean_conflicts,
            "median_decisions": self.median_decisions,
        }


def compare(baseline: SpeedMetrics, method: SpeedMetrics) -> dict:
    imp = baseline.avg_runtime_ms - method.avg_runtime_ms
    pct = 100.0 * imp / baseline.avg_runtime_ms if baseline.avg_runtime_ms else 0.0
    return {
        "improvement_ms": imp,
        "improvement_pct": pct,
        "conflict_median_delta": baseline.median_conflicts - method.median_conflicts,
        "conflict_mean_delta": baseline.mean_conflicts - method.mean_conflicts,
    }


SeedFn = Callable[[Cnf], BranchSeed]


class ModelSeeder:
    """Seed producer running the full encode + inference + ranking pipeline."""

    def __init__(self, params: Params, cfg: ModelConfig):
        self.params, self.cfg = params, cfg

    def __call__(self, cnf: Cnf) -> BranchSeed:
        return seed_from_prediction(predict(self.params, self.cfg, cnf))


def oracle_seed(core_vars, n: int, hi: float = 0.99, lo: float = 0.01) -> BranchSeed:
    p = np.full(n, lo)
    for v in core_vars:
        p[v - 1] = hi
    return seed_from_prediction(p)


class OracleSeeder:
    """Ground-truth core variables as probabilities ``hi``, all others ``lo``."""

    def __init__(self, core_vars, hi: float = 0.99, lo: float = 0.01):
        self.core_vars, self.hi, self.lo = frozenset(core_vars), hi, lo

    def __call__(self, cnf: Cnf) -> BranchSeed:
        return oracle_seed(self.core_vars, cnf.num_vars, self.hi, self.lo)


def solve_record(name: str, cnf: Cnf, cfg: SolverConfig, seed: BranchSeed | None, overhead_ms: float) -> SolveRecord:
    v = solve(cnf, cfg, seed)
    s = v.stats
    return SolveRecord(name, v.kind.value, s.decisions, s.propagations, s.conflicts, s.restarts,
                       s.wall_ms + overhead_ms, overhead_ms)


def _bench_one(job) -> tuple[SolveRecord, SolveRecord | None]:
    i, cnf, cfg, fn = job
    name = cnf.name or f"instance-{i}"
    base = solve_record(name, cnf, cfg, None, 0.0)
    if fn is None:
        return base, None
    t0 = time.perf_counter()
    seed = fn(cnf)
    overhead = (time.perf_counter() - t0) * 1000.0
    return base, solve_record(name, cnf, cfg, seed, overhead)


def run_speed_bench(instances: Sequence[Cnf], cfg: SolverConfig, seed_fn: SeedFn | None = None,
                    seed_fns: Sequence[SeedFn] | None = None, jobs: int = 1) -> tuple[SpeedMetrics, SpeedMetrics | None]:
    """Solve each instance unseeded, then seeded; the guided arm's time includes producing the seed.

    ``seed_fns`` gives a per-instance seed producer (used for oracle seeding).
    With ``jobs > 1`` instances run in worker processes; results keep input order.
    """
    fns = list(seed_fns) if seed_fns is not None else [seed_fn] * len(instances)
    work = [(i, cnf, cfg, fns[i]) for i, cnf in enumerate(instances)]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(_bench_one, work))
    else:
        results = [_bench_one(w) for w in work]
    b = SpeedMetrics("baseline", [r[0] for r in results], cfg.time_budget_ms)
    if seed_fn is None and seed_fns is None:
        return b, None
    return b, SpeedMetrics("guided", [r[1] for r in results], cfg.time_budget_ms)


# ------------------------------------------------------------------ ablation

ABLATION_ARMS = {
    "graph": [("wlig", {"graph": "wlig"}), ("lcg", {"graph": "lcg"})],
    "supervision": [("core", {"target_kind": "core"}), ("satisfiability", {"target_kind": "satisfiability"})],
    "loss": [("focal", {"loss_kind": "focal"}), ("cross_entropy", {"loss_kind": "cross_entropy"}), ("kl", {"loss_kind": "kl"})],
}


def run_ablation(manifest, axis: str, cfg: ModelConfig, arms=None, progress=None) -> list[dict]:
    """Train one model per arm (same seed, same data) and evaluate each on the core-labelled test split."""
    from .labeling import load_samples

    if arms is None:
        if axis not in ABLATION_ARMS:
            raise ValueError(f"unknown ablation axis {axis!r}")
        arms = ABLATION_ARMS[axis]
    rows = []
    for label, overrides in arms:
        acfg = replace(cfg, **overrides)
        sat_target = acfg.target_kind == "satisfiability"
        train_set = load_samples(manifest, acfg, "train", include_sat=sat_target)
        test_set = load_samples(manifest, acfg, "test")
        params, history = train(train_set, acfg)
        m = eval_prediction(params, acfg, test_set)
        rows.append({"axis": axis, "arm": label, "config": asdict(acfg), "metrics": m.as_dict(),
                     "final_train_loss": history[-1].train_loss if history else None})
        if progress is not None:
            progress(rows[-1])
    return rows


def format_ablation(rows: list[dict]) -> str:
    lines = [f"{'axis':<12}{'arm':<16}{'acc':>8}{'pos_f1':>10}{'neg_f1':>10}"]
    for r in rows:
        m = r["metrics"]
        fmt = lambda x: f"{x:.4f}" if isinstance(x, float) else str(x)  # noqa: E731
        lines.append(f"{r['axis']:<12}{r['arm']:<16}{fmt(m['accuracy']):>8}{fmt(m['pos_f1']):>10}{fmt(m['neg_f1']):>10}")
    return "\n".join(lines)


# -------------------------------------------------------------------- report


def provenance(config: dict) -> str:
    return f"# coreguide {__version__} " + json.dumps(config, sort_keys=True, default=str)


def write_csv(path, columns: list[str], rows: list[list], config: dict) -> None:
    buf = io.StringIO()
    buf.write(provenance(config) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue())


def read_csv(path) -> list[dict]:
    lines = [l for l in Path(path).read_text().splitlines() if not l.startswith("#")]
    return list(csv.DictReader(lines))


def report(out_dir, baseline: SpeedMetrics, guided: SpeedMetrics | None = None, config: dict | None = None,
           extra: dict | None = None) -> dict:
    """Write per-arm CSVs, scatter data and a text + JSON summary; returns the summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = config or {}
    write_csv(out / "baseline.csv", RECORD_COLUMNS, [r.row() for r in baseline.records], config)
    summary = {"config": config, "baseline": baseline.summary()}
    if guided is not None and guided.records:
        write_csv(out / "guided.csv", RECORD_COLUMNS, [r.row() for r in guided.records], config)
        pairs = [[b.instance, b.wall_ms, g.wall_ms, b.conflicts, g.conflicts]
                 for b, g in zip(baseline.records, guided.records)]
        write_csv(out / "scatter.csv", SCATTER_COLUMNS, pairs, config)
        summary["guided"] = guided.summary()
        summary["comparison"] = compare(baseline, guided)
    if extra:
        summary.update(extra)
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True, default=str) + "\n")
    (out / "summary.txt").write_text(format_summary(summary))
    return summary


def format_summary(summary: dict) -> str:
    lines = []
    for arm in ("baseline", "guided"):
        if arm in summary:
            s = summary[arm]
            lines.append(f"{arm:<9} n={s['instances']} A.RT={s['avg_runtime_ms']:.2f}ms halted={s['halted']} "
                         f"({s['halted_pct']:.1f}%) median_conflicts={s['median_conflicts']:.1f}")
    if "comparison" in summary:
        c = summary["comparison"]
        lines.append(f"Imp.={c['improvement_ms']:.2f}ms ({c['improvement_pct']:.2f}%) "
                     f"conflict median delta={c['conflict_median_delta']:.1f}")
    return "\n".join(lines) + "\n"
