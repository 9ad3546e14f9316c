"""Command-line entry point: ``coreguide <subcommand> ...``.

Config precedence is flags > ``--config`` JSON file > built-in defaults.  The
JSON file may hold ``model``, ``solver`` and ``gen`` sections whose keys are
the corresponding dataclass field names.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import __version__
from .cnf import Cnf, DimacsError, Kind, NotUnsat, read_cnf
from .datagen import GenSpec, PRESETS, gen_corpus, gen_pigeonhole, gen_planted_core, gen_random_ksat, write_instance
from .graph import build_wlig, dump_wlig
from .model import CheckpointError, ModelConfig, load_checkpoint, predict, save_checkpoint, train

log = logging.getLogger("coreguide")


class DomainError(RuntimeError):
    """Errors reported with exit status 1."""


# -------------------------------------------------------------------- config

def _add_dataclass_flags(p: argparse.ArgumentParser, cls, prefix: str = "", skip=()) -> None:
    for f in fields(cls):
        if f.name in skip:
            continue
        flag = "--" + (prefix + f.name).replace("_", "-")
        default = f.default
        if isinstance(default, bool):
            p.add_argument(flag, dest=prefix + f.name, type=_bool, default=None, metavar="BOOL",
                           help=f"(default {default})")
        else:
            p.add_argument(flag, dest=prefix + f.name, type=type(default), default=None,
                           help=f"(default {default})")


def _bool(s: str) -> bool:
    if s.lower() in ("1", "true", "yes", "on"):
        return True
    if s.lower() in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {s!r}")


def _resolve(cls, section: str, args, file_cfg: dict, prefix: str = "", base: dict | None = None):
    values = dict(base or {})
    values.update(file_cfg.get(section, {}))
    for f in fields(cls):
        v = getattr(args, prefix + f.name, None)
        if v is not None:
            values[f.name] = v
    known = {f.name for f in fields(cls)}
    return cls(**{k: v for k, v in values.items() if k in known})


def _file_config(args) -> dict:
    if getattr(args, "config", None):
        return json.loads(Path(args.config).read_text())
    return {}


def _solver_cfg(args, file_cfg):
    from .solver import SolverConfig

    return _resolve(SolverConfig, "solver", args, file_cfg, prefix="solver_")


def _provenance(args, **configs) -> str:
    rec = {"command": args.command, "version": __version__}
    rec.update({k: (asdict(v) if hasattr(v, "__dataclass_fields__") else v) for k, v in configs.items()})
    return "# coreguide " + json.dumps(rec, sort_keys=True, default=str)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- subcommands


def cmd_gen(args) -> int:
    file_cfg = _file_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.preset:
        corpus = gen_corpus(args.preset, args.count, args.seed)
        for p in corpus:
            write_instance(out, p)
        print(f"wrote {len(corpus)} {args.preset} instances to {out}")
        return 0
    spec = _resolve(GenSpec, "gen", args, file_cfg, prefix="gen_")
    rng = np.random.default_rng(args.seed)
    from .cnf import write_dimacs

    for i in range(args.count):
        name = f"{spec.family}-{args.seed}-{i:05d}"
        if spec.family == "planted_core":
            write_instance(out, gen_planted_core(spec, rng, name=name))
        elif spec.family == "pigeonhole":
            c = gen_pigeonhole(max(1, spec.n_core_vars), name=name)
            (out / f"{name}.cnf").write_bytes(write_dimacs(c))
        else:
            n = spec.n_core_vars
            c = gen_random_ksat(n, int(round(spec.clause_ratio * n)), spec.k, rng, name=name)
            (out / f"{name}.cnf").write_bytes(write_dimacs(c))
    print(f"wrote {args.count} {spec.family} instances to {out}")
    return 0


def cmd_label(args) -> int:
    from .labeling import build_dataset

    file_cfg = _file_config(args)
    scfg = _solver_cfg(args, file_cfg)
    manifest = build_dataset(args.dir, scfg, args.split_seed, args.label_source, args.minimize)
    manifest.config["provenance"] = _provenance(args, solver=scfg)
    out = args.manifest or str(Path(args.dir) / "manifest.json")
    manifest.save(out)
    print(f"{len(manifest.entries)} labeled ({len(manifest.split('train'))} train / "
          f"{len(manifest.split('test'))} test), {len(manifest.skipped)} skipped -> {out}")
    return 0


def cmd_encode(args) -> int:
    cnf = read_cnf(args.cnf)
    _emit(_provenance(args, cnf=args.cnf) + "\n" + dump_wlig(build_wlig(cnf)), args.out)
    return 0


def cmd_train(args) -> int:
    from .labeling import DatasetManifest, load_samples

    file_cfg = _file_config(args)
    cfg = _resolve(ModelConfig, "model", args, file_cfg)
    manifest = DatasetManifest.load(args.manifest)
    samples = load_samples(manifest, cfg, "train", include_sat=cfg.target_kind == "satisfiability")
    if not samples:
        raise DomainError("manifest has no training instances")

    def progress(rec):
        log.info("epoch %d train_loss %.6f val_loss %.6f", rec.epoch, rec.train_loss, rec.val_loss)

    params, history = train(samples, cfg, progress=progress)
    save_checkpoint(params, cfg, args.out)
    if args.history:
        lines = [_provenance(args, model=cfg), "epoch,train_loss,val_loss"]
        lines += [f"{h.epoch},{h.train_loss!r},{h.val_loss!r}" for h in history]
        Path(args.history).write_text("\n".join(lines) + "\n")
    print(f"trained {cfg.epochs} epochs on {len(samples)} instances; "
          f"final train loss {history[-1].train_loss:.6f}; checkpoint -> {args.out}")
    return 0


def cmd_predict(args) -> int:
    params, cfg = load_checkpoint(args.model)
    lines = [_provenance(args, model=cfg)]
    for path in args.cnf:
        cnf = read_cnf(path)
        pred = predict(params, cfg, cnf)
        lines.append(f"c instance {cnf.name} vars {cnf.num_vars} pipeline_ms {pred.wall_ms:.3f}")
        lines += [f"{v} {p:.6f}" for v, p in enumerate(pred.probs, start=1)]
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def cmd_solve(args) -> int:
    from .bench import RECORD_COLUMNS, SolveRecord
    from .solver import seed_from_prediction, solve

    file_cfg = _file_config(args)
    scfg = _solver_cfg(args, file_cfg)
    cnf = read_cnf(args.cnf)
    seed, overhead = None, 0.0
    if args.seed_model:
        params, mcfg = load_checkpoint(args.seed_model)
        pred = predict(params, mcfg, cnf)
        seed = seed_from_prediction(pred)
        overhead = pred.wall_ms
    v = solve(cnf, scfg, seed)
    print(v.kind.value)
    if v.kind is Kind.SAT and args.model:
        print("v " + " ".join(str(i if b else -i) for i, b in enumerate(v.model, start=1)) + " 0")
    s = v.stats
    rec = SolveRecord(cnf.name, v.kind.value, s.decisions, s.propagations, s.conflicts, s.restarts,
                      s.wall_ms + overhead, overhead)
    line = ",".join(str(x) for x in rec.row())
    if args.record:
        path = Path(args.record)
        new = not path.exists()
        with path.open("a") as fh:
            if new:
                fh.write(_provenance(args, solver=scfg) + "\n" + ",".join(RECORD_COLUMNS) + "\n")
            fh.write(line + "\n")
    else:
        print(line, file=sys.stderr)
    return 0


def _manifest_instances(manifest, split: str):
    from .datagen import read_labels

    entries = manifest.entries if split == "all" else manifest.split(split)
    return [(read_cnf(e.cnf_path), read_labels(e.label_path)) for e in entries]


def cmd_bench(args) -> int:
    from .bench import ModelSeeder, OracleSeeder, report, run_speed_bench
    from .labeling import DatasetManifest

    file_cfg = _file_config(args)
    scfg = _solver_cfg(args, file_cfg)
    manifest = DatasetManifest.load(args.manifest)
    items = _manifest_instances(manifest, args.split)
    if not items:
        raise DomainError("no instances selected")
    cnfs = [c for c, _ in items]
    config = {"solver": asdict(scfg), "manifest": args.manifest, "split": args.split}
    if args.oracle:
        base, guided = run_speed_bench(cnfs, scfg, seed_fns=[OracleSeeder(core) for _, core in items], jobs=args.jobs)
        config["seeding"] = "oracle"
    elif args.model:
        params, mcfg = load_checkpoint(args.model)
        base, guided = run_speed_bench(cnfs, scfg, seed_fn=ModelSeeder(params, mcfg), jobs=args.jobs)
        config["seeding"] = "model"
        config["model"] = asdict(mcfg)
    else:
        base, guided = run_speed_bench(cnfs, scfg, jobs=args.jobs)
    summary = report(args.out, base, guided, config)
    from .bench import format_summary

    sys.stdout.write(format_summary(summary))
    return 0


def cmd_ablate(args) -> int:
    from .bench import ABLATION_ARMS, format_ablation, run_ablation
    from .labeling import DatasetManifest

    file_cfg = _file_config(args)
    cfg = _resolve(ModelConfig, "model", args, file_cfg)
    manifest = DatasetManifest.load(args.manifest)
    axes = list(ABLATION_ARMS) if args.axis == "all" else [args.axis]
    rows = []
    for axis in axes:
        rows += run_ablation(manifest, axis, cfg, progress=lambda r: log.info("%s/%s done", r["axis"], r["arm"]))
    text = format_ablation(rows)
    print(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "ablation.json").write_text(json.dumps({"provenance": _provenance(args, model=cfg), "rows": rows},
                                                      indent=1, sort_keys=True, default=str) + "\n")
        (out / "ablation.txt").write_text(_provenance(args, model=cfg) + "\n" + text + "\n")
    return 0


def gradcheck(seed: int, instances: int = 1) -> float:
    """Largest per-tensor relative error between analytic and finite-difference gradients."""
    from .experiments import gradient_check

    return max(r["worst"] for r in gradient_check(seed, instances))


def cmd_gradcheck(args) -> int:
    err = gradcheck(args.seed, args.instances)
    ok = err < 1e-4
    print(f"max relative error {err:.3e} ({'ok' if ok else 'FAIL'}, tolerance 1e-4)")
    return 0 if ok else 1


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="coreguide", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate synthetic instances")
    p.add_argument("--out", required=True)
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")
    _add_dataclass_flags(p, GenSpec, prefix="gen_", skip=("seed",))
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("label", help="label a directory of CNFs and write a manifest")
    p.add_argument("--dir", required=True)
    p.add_argument("--manifest")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--label-source", choices=("oracle", "planted"), default="oracle")
    p.add_argument("--minimize", action="store_true")
    p.add_argument("--config")
    from .solver import SolverConfig

    _add_dataclass_flags(p, SolverConfig, prefix="solver_")
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("encode", help="dump the WLIG of a CNF as an edge list")
    p.add_argument("--cnf", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("train", help="train a model on a manifest's training split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--history")
    p.add_argument("--config")
    _add_dataclass_flags(p, ModelConfig)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="per-variable core probabilities")
    p.add_argument("--model", required=True)
    p.add_argument("--cnf", required=True, nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("solve", help="solve a CNF, optionally seeded by a model")
    p.add_argument("--cnf", required=True)
    p.add_argument("--seed-model")
    p.add_argument("--model", action="store_true", help="print the satisfying assignment")
    p.add_argument("--record", help="append the CSV result record to this file")
    p.add_argument("--config")
    _add_dataclass_flags(p, SolverConfig, prefix="solver_")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="baseline vs guided runtime benchmark")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model")
    p.add_argument("--oracle", action="store_true", help="seed from label sidecars (0.99 core / 0.01 other)")
    p.add_argument("--split", choices=("train", "test", "all"), default="test")
    p.add_argument("--out", default="bench-out")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--config")
    _add_dataclass_flags(p, SolverConfig, prefix="solver_")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("ablate", help="paired ablation training runs")
    p.add_argument("--manifest", required=True)
    p.add_argument("--axis", choices=("graph", "supervision", "loss", "all"), required=True)
    p.add_argument("--out")
    p.add_argument("--config")
    _add_dataclass_flags(p, ModelConfig)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="compare analytic gradients with finite differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=1)
    p.set_defaults(func=cmd_gradcheck)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (DomainError, DimacsError, CheckpointError, NotUnsat, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
