import numpy as np
import pytest

from coreguide.cnf import Cnf, write_dimacs
from coreguide.datagen import GenSpec, gen_planted_core, write_instance
from coreguide.labeling import (
    DatasetManifest,
    LabelingSkipped,
    VarLabels,
    build_dataset,
    label_instance,
    load_samples,
    split_counts,
)
from coreguide.model import ModelConfig


def write_planted(d, count, seed=0):
    for i in range(count):
        p = gen_planted_core(GenSpec(n_core_vars=8, n_pad_vars=3, clause_ratio=10), seed + i, name=f"p{i:02d}")
        write_instance(d, p)


class TestLabelInstance:
    def test_contradiction(self):
        lab = label_instance(Cnf(2, ((1,), (-1,), (2,))))
        assert lab.core.tolist() == [True, False]
        assert lab.variables() == {1}

    def test_sat_skipped(self):
        with pytest.raises(LabelingSkipped) as exc:
            label_instance(Cnf(1, ((1,),)))
        assert exc.value.verdict == "SAT"

    def test_budget_skipped(self):
        from coreguide.datagen import gen_pigeonhole
        from coreguide.solver import SolverConfig

        with pytest.raises(LabelingSkipped) as exc:
            label_instance(gen_pigeonhole(7), SolverConfig(conflict_budget=2))
        assert exc.value.verdict == "HALTED"

    def test_from_vars(self):
        assert VarLabels.from_vars(4, {2, 4}, "planted").core.tolist() == [False, True, False, True]


def test_split_counts():
    assert [split_counts(n) for n in (1, 5, 9, 10)] == [1, 4, 7, 8]


class TestBuildDataset:
    def test_ten_instances_split(self, tmp_path):
        write_planted(tmp_path, 10)
        m = build_dataset(tmp_path, split_seed=1)
        assert len(m.split("train")) == 8 and len(m.split("test")) == 2
        assert {e.source for e in m.entries} == {"oracle"}
        assert len(list(tmp_path.glob("*.oracle.core"))) == 10

    def test_sat_instance_skipped(self, tmp_path):
        write_planted(tmp_path, 9)
        (tmp_path / "sat.cnf").write_bytes(write_dimacs(Cnf(2, ((1, 2),))))
        (tmp_path / "junk.cnf").write_text("p cnf 1 1\n5 0\n")
        m = build_dataset(tmp_path)
        assert len(m.entries) == 9
        reasons = {s["path"].rsplit("/", 1)[-1]: s["verdict"] for s in m.skipped}
        assert reasons == {"sat.cnf": "SAT", "junk.cnf": "unknown"}

    def test_deterministic_and_round_trip(self, tmp_path):
        write_planted(tmp_path, 6)
        a = build_dataset(tmp_path, split_seed=4, label_source="planted", manifest_path=tmp_path / "m.json")
        b = build_dataset(tmp_path, split_seed=4, label_source="planted")
        assert a.to_json() == b.to_json()
        assert DatasetManifest.load(tmp_path / "m.json").to_json() == a.to_json()
        assert {e.source for e in a.entries} == {"planted"}

    def test_oracle_labels_inside_planted_core(self, tmp_path):
        write_planted(tmp_path, 3)
        m = build_dataset(tmp_path)
        from coreguide.datagen import read_labels

        for e in m.entries:
            planted = read_labels(e.cnf_path[:-4] + ".core")
            oracle = read_labels(e.label_path)
            assert oracle and oracle <= planted

    def test_load_samples(self, tmp_path):
        write_planted(tmp_path, 5)
        (tmp_path / "sat.cnf").write_bytes(write_dimacs(Cnf(3, ((1, 2),))))
        m = build_dataset(tmp_path, label_source="planted")
        cfg = ModelConfig(target_kind="satisfiability")
        train = load_samples(m, cfg, "train", include_sat=True)
        test = load_samples(m, cfg, "test", include_sat=True)
        assert len(train) + len(test) == 6
        sat = [s for s in train + test if s.graph_label == 0.0]
        assert len(sat) == 1 and not np.any(sat[0].labels)
        assert all(s.labels.sum() > 0 for s in train + test if s.graph_label == 1.0)
