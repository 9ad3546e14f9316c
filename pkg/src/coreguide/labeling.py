"""Core-variable labels and train/test manifests."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .cnf import Cnf, DimacsError, Kind, NotUnsat, read_cnf
from .datagen import read_labels, write_labels
from .graph import encode
from .model import ModelConfig, Sample
from .solver import SolverConfig, extract_core, verify_core

log = logging.getLogger(__name__)

TRAIN_FRACTION = 0.8


class LabelingSkipped(RuntimeError):
    def __init__(self, reason: str, verdict: str):
        super().__init__(reason)
        self.reason, self.verdict = reason, verdict


@dataclass
class VarLabels:
    core: np.ndarray  # bool per variable, index 0 is x1
    source: str = "oracle"  # oracle | planted

    @classmethod
    def from_vars(cls, n: int, core_vars, source: str) -> "VarLabels":
        core = np.zeros(n, dtype=bool)
        for v in core_vars:
            core[v - 1] = True
        return cls(core, source)

    def variables(self) -> frozenset[int]:
        return frozenset(int(i) + 1 for i in np.flatnonzero(self.core))


def label_instance(cnf: Cnf, cfg: SolverConfig | None = None, minimize: bool = False) -> VarLabels:
    """Label variables that occur in a verified UNSAT core."""
    cfg = cfg or SolverConfig()
    try:
        res = extract_core(cnf, cfg, minimize=minimize)
    except NotUnsat:
        raise LabelingSkipped("satisfiable", Kind.SAT.value) from None
    if res.kind is Kind.HALTED:
        raise LabelingSkipped("budget exhausted", Kind.HALTED.value)
    ok = verify_core(cnf, res.clauses, cfg)
    if ok is not True:
        raise LabelingSkipped(f"core failed verification ({ok})", Kind.UNSAT.value)
    return VarLabels.from_vars(cnf.num_vars, res.variables, "oracle")


@dataclass
class ManifestEntry:
    cnf_path: str
    label_path: str
    split: str
    n_vars: int
    n_clauses: int
    verdict: str
    source: str


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    split_seed: int
    skipped: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        d = json.loads(Path(path).read_text())
        return cls(
            entries=[ManifestEntry(**e) for e in d["entries"]],
            split_seed=d["split_seed"],
            skipped=d.get("skipped", []),
            config=d.get("config", {}),
        )


def split_counts(n: int) -> int:
    """Number of training instances out of ``n``."""
    return int(round(TRAIN_FRACTION * n))


def build_dataset(instance_dir, cfg: SolverConfig | None = None, split_seed: int = 0, label_source: str = "oracle",
                  minimize: bool = False, manifest_path=None) -> DatasetManifest:
    """Label every ``*.cnf`` in ``instance_dir`` (reusing cached sidecars) and split 80/20.

    ``label_source="planted"`` prefers a generator sidecar ``<stem>.core``;
    oracle labels are cached as ``<stem>.oracle.core``.
    """
    cfg = cfg or SolverConfig()
    d = Path(instance_dir)
    labeled: list[ManifestEntry] = []
    skipped: list[dict] = []
    for path in sorted(d.glob("*.cnf")):
        try:
            cnf = read_cnf(path)
        except (OSError, UnicodeDecodeError, DimacsError) as e:
            skipped.append({"path": str(path), "reason": f"unreadable: {e}", "verdict": "unknown"})
            continue
        planted = path.with_suffix(".core")
        oracle = path.with_suffix(".oracle.core")
        if label_source == "planted" and planted.exists():
            labeled.append(ManifestEntry(str(path), str(planted), "", cnf.num_vars, cnf.num_clauses,
                                         Kind.UNSAT.value, "planted"))
            continue
        if not oracle.exists():
            try:
                labels = label_instance(cnf, cfg, minimize)
            except LabelingSkipped as e:
                skipped.append({"path": str(path), "reason": e.reason, "verdict": e.verdict})
                continue
            write_labels(oracle, labels.variables())
        labeled.append(ManifestEntry(str(path), str(oracle), "", cnf.num_vars, cnf.num_clauses,
                                     Kind.UNSAT.value, "oracle"))
    order = np.random.default_rng(split_seed).permutation(len(labeled))
    n_train = split_counts(len(labeled))
    for rank, i in enumerate(order):
        labeled[i].split = "train" if rank < n_train else "test"
    manifest = DatasetManifest(labeled, split_seed, skipped,
                               config={"solver": asdict(cfg), "label_source": label_source, "minimize": minimize})
    if manifest_path is not None:
        manifest.save(manifest_path)
    return manifest


def entry_sample(entry: ManifestEntry, cfg: ModelConfig) -> Sample:
    cnf = read_cnf(entry.cnf_path)
    labels = VarLabels.from_vars(cnf.num_vars, read_labels(entry.label_path), entry.source)
    return Sample(encode(cnf, cfg.graph, cfg.norm, cfg.degree), labels.core.astype(np.float64), 1.0, cnf.name)


def load_samples(manifest: DatasetManifest, cfg: ModelConfig, split: str, include_sat: bool = False) -> list[Sample]:
    """Encode one split; ``include_sat`` adds skipped SAT instances (graph label 0, no core)."""
    out = [entry_sample(e, cfg) for e in manifest.split(split)]
    if include_sat:
        sat = [s for s in manifest.skipped if s.get("verdict") == Kind.SAT.value]
        rng = np.random.default_rng(manifest.split_seed)
        order = rng.permutation(len(sat))
        n_train = split_counts(len(sat))
        for rank, i in enumerate(order):
            if (rank < n_train) == (split == "train"):
                cnf = read_cnf(sat[i]["path"])
                out.append(Sample(encode(cnf, cfg.graph, cfg.norm, cfg.degree), np.zeros(cnf.num_vars), 0.0, cnf.name))
    return out

