import json

import numpy as np
import pytest

from coreguide.bench import (
    RECORD_COLUMNS,
    SCATTER_COLUMNS,
    OracleSeeder,
    PredMetrics,
    SolveRecord,
    SpeedMetrics,
    compare,
    confusion,
    f1,
    majority_baseline,
    pooled_metrics,
    pr_curve,
    read_csv,
    report,
    run_speed_bench,
)
from coreguide.cnf import Cnf
from coreguide.datagen import GenSpec, gen_planted_core
from coreguide.graph import encode
from coreguide.model import Sample
from coreguide.solver import SolverConfig


def rec(name, kind="UNSAT", conflicts=10, wall=5.0, overhead=0.0):
    return SolveRecord(name, kind, 3, 40, conflicts, 0, wall, overhead)


class TestPredictionMetrics:
    def test_f1_examples(self):
        assert f1(1, 1, 1) == 0.5
        assert f1(0, 3, 0) is None

    def test_confusion(self):
        m = confusion(np.array([0.9, 0.5, 0.2, 0.1]), np.array([1, 0, 1, 0]))
        assert (m.tp, m.fp, m.fn, m.tn) == (1, 1, 1, 1)
        assert m.accuracy == 0.5 and m.pos_f1 == 0.5 and m.neg_f1 == 0.5

    def test_perfect(self):
        m = confusion(np.array([0.9, 0.1]), np.array([1, 0]))
        assert m.accuracy == 1.0 and m.pos_f1 == 1.0 and m.neg_f1 == 1.0

    def test_all_core_truth(self):
        m = confusion(np.array([0.9, 0.9, 0.9]), np.array([1, 1, 1]))
        assert m.neg_f1 is None and m.as_dict()["neg_f1"] == "undefined"

    def test_pooled_vs_macro(self):
        m = pooled_metrics([np.array([0.9, 0.9]), np.array([0.1, 0.1, 0.1, 0.9])],
                           [np.array([1, 1]), np.array([0, 0, 0, 0])])
        assert (m.tp, m.fp, m.tn, m.fn) == (2, 1, 3, 0)
        assert m.accuracy == pytest.approx(5 / 6)
        assert m.macro["accuracy"] == pytest.approx((1.0 + 0.75) / 2)

    def test_majority(self):
        s = [Sample(encode(Cnf(3, ((1, 2),))), np.array([1.0, 1.0, 0.0]), 1.0)]
        m = majority_baseline(s)
        assert m.accuracy == pytest.approx(2 / 3) and m.neg_f1 == 0.0

    def test_pr_curve(self):
        pts = pr_curve(np.array([0.9, 0.6, 0.3]), np.array([1, 0, 1]))
        assert pts == [(0.9, 1.0, 0.5), (0.6, 0.5, 0.5), (0.3, 2 / 3, 1.0)]


class TestSpeedMetrics:
    def test_self_compare_is_zero(self):
        m = SpeedMetrics("a", [rec("x", wall=4.0), rec("y", wall=8.0)])
        c = compare(m, m)
        assert c["improvement_ms"] == 0 and c["improvement_pct"] == 0

    def test_censoring(self):
        m = SpeedMetrics("a", [rec("x", "HALTED", wall=30.0), rec("y", wall=10.0)], time_budget_ms=100.0)
        assert m.avg_runtime_ms == 55.0
        assert m.halted_count == 1 and m.halted_pct == 50.0

    def test_improvement(self):
        b = SpeedMetrics("b", [rec("x", wall=10.0, conflicts=20)])
        g = SpeedMetrics("g", [rec("x", wall=6.0, conflicts=12)])
        c = compare(b, g)
        assert c["improvement_ms"] == 4.0 and c["improvement_pct"] == 40.0
        assert c["conflict_median_delta"] == 8


def _instances():
    return [gen_planted_core(GenSpec(n_core_vars=10, n_pad_vars=4, clause_ratio=9), s, name=f"i{s}") for s in range(4)]


class TestRunAndReport:
    def test_baseline_only(self, tmp_path):
        ps = _instances()
        base, guided = run_speed_bench([p.cnf for p in ps], SolverConfig())
        assert guided is None and len(base.records) == 4
        summary = report(tmp_path, base, None, {"k": 1})
        assert (tmp_path / "baseline.csv").exists() and not (tmp_path / "guided.csv").exists()
        assert "comparison" not in summary

    def test_csvs(self, tmp_path):
        ps = _instances()
        base, guided = run_speed_bench([p.cnf for p in ps], SolverConfig(),
                                       seed_fns=[OracleSeeder(p.core_vars) for p in ps])
        summary = report(tmp_path, base, guided, {"seed": 0})
        first = (tmp_path / "guided.csv").read_text().splitlines()[0]
        assert first.startswith("# coreguide ") and json.loads(first.split(" ", 3)[3]) == {"seed": 0}
        rows = read_csv(tmp_path / "guided.csv")
        assert list(rows[0]) == RECORD_COLUMNS
        assert [r["instance"] for r in rows] == ["i0", "i1", "i2", "i3"]
        assert all(float(r["overhead_ms"]) > 0 for r in rows)
        assert list(read_csv(tmp_path / "scatter.csv")[0]) == SCATTER_COLUMNS
        art = np.mean([float(r["wall_ms"]) for r in read_csv(tmp_path / "baseline.csv")])
        assert summary["baseline"]["avg_runtime_ms"] == pytest.approx(art, rel=1e-9)
        assert "Imp.=" in (tmp_path / "summary.txt").read_text()

    def test_parallel_matches_serial(self):
        cnfs = [p.cnf for p in _instances()]
        a, _ = run_speed_bench(cnfs, SolverConfig())
        b, _ = run_speed_bench(cnfs, SolverConfig(), jobs=2)
        strip = lambda m: [(r.instance, r.kind, r.decisions, r.conflicts) for r in m.records]  # noqa: E731
        assert strip(a) == strip(b)


def test_pred_metrics_add():
    assert PredMetrics(1, 2, 3, 4) + PredMetrics(1, 1, 1, 1) == PredMetrics(2, 3, 4, 5)
