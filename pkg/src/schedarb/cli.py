"""Command-line harness wiring generation, calibration, training, and
evaluation into reproducible experiments.

Every command writes a manifest.json next to its outputs recording the full
flag set, seeds, tool version, and input/output hashes; rerunning a command
with the manifest's flags reproduces its outputs byte for byte. The
SCHEDARB_WORKERS environment variable controls labeling parallelism (the only
environment knob).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .arbiter import (
    ArbiterConfig,
    build,
    build_frontend,
    load_bundle,
    save_bundle,
    select,
    stack_matrices,
    train_classifier,
    train_denoiser,
)
from .datagen import (
    ErrorSpec,
    GenConfig,
    generate_dataset,
    load_dataset,
    save_dataset,
    upsample,
    upsample_rng,
)
from .evaluation import (
    CalibrationError,
    calibrate_overhead,
    compare_strategies,
    default_overhead_model,
    load_overhead_model,
    plot_report,
    save_overhead_model,
    write_report,
)
from .model import GOALS_BY_NAME, canonical_kinds, goal_name, kind_from_key, kind_to_class
from .nn import TrainConfig

MODEL_FILE = "overhead_model.json"


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("SCHEDARB_WORKERS", "1")))
    except ValueError:
        return 1


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _dataset_hash(dataset_dir: Path) -> str:
    digest = hashlib.sha256()
    for name in sorted(p.name for p in dataset_dir.glob("*.jsonl")) + ["meta.json"]:
        path = dataset_dir / name
        if path.exists():
            digest.update(name.encode())
            digest.update(_sha256(path).encode())
    return digest.hexdigest()


def _write_manifest(out: Path, command: str, args: argparse.Namespace, inputs: dict) -> None:
    flags = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    flags = {k: (str(v) if isinstance(v, Path) else v) for k, v in flags.items()}
    outputs = {
        p.name: _sha256(p)
        for p in sorted(out.iterdir())
        if p.is_file() and p.name != "manifest.json"
    }
    manifest = {
        "command": command,
        "tool_version": __version__,
        "flags": flags,
        "inputs": inputs,
        "outputs": outputs,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _load_model_arg(path: str | None):
    if path is None:
        return default_overhead_model(), {}
    model_path = Path(path)
    return load_overhead_model(model_path), {str(model_path): _sha256(model_path)}


def cmd_gen(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = GenConfig(
        n=args.n,
        master_seed=args.seed,
        cores_per_isa=args.cores_per_isa,
        workload_count=args.workloads,
        systems_per_n=args.systems,
        batches=args.batches,
    )
    goal = GOALS_BY_NAME[args.goal]
    spec = ErrorSpec(
        mode=args.error, mean=args.error_mean, std=args.error_std, field_seed=args.seed
    )
    model, inputs = _load_model_arg(args.overhead_model)
    kinds = canonical_kinds(args.pod_size)
    splits = generate_dataset(
        config, goal, model, spec, kinds=kinds, draws=args.draws, workers=_workers()
    )

    histogram: dict[str, int] = {}
    for inst in splits["train"] + splits["val"] + splits["test"]:
        histogram[inst.label.key] = histogram.get(inst.label.key, 0) + 1
    metadata = {
        "format_version": 1,
        "n": config.n,
        "goal": {"name": args.goal, "mode": goal.mode, "amount": goal.amount},
        "error": {
            "mode": spec.mode,
            "mean": spec.mean,
            "std": spec.std,
            "field_seed": spec.field_seed,
        },
        "gen": {
            "master_seed": config.master_seed,
            "cores_per_isa": config.cores_per_isa,
            "workload_count": config.workload_count,
            "systems_per_n": config.systems_per_n,
            "batches": config.batches,
        },
        "kinds": [k.key for k in kinds],
        "draws": args.draws,
        "overhead_model": model.to_json(),
        "counts": {name: len(instances) for name, instances in splits.items()},
        "label_histogram": dict(sorted(histogram.items())),
    }
    save_dataset(out, splits, metadata)
    _write_manifest(out, "gen", args, inputs)
    counts = ", ".join(f"{name}={len(instances)}" for name, instances in splits.items())
    print(f"wrote dataset to {out} ({counts})")
    print(f"label histogram: {metadata['label_histogram']}")
    return 0


def cmd_calibrate(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    try:
        model = calibrate_overhead(sizes, args.reps, clock_hz=args.clock_hz, seed=args.seed)
    except CalibrationError as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        return 1
    save_overhead_model(model, out / MODEL_FILE)
    _write_manifest(out, "calibrate", args, {})
    for alg, c in sorted(model.coefficients.items()):
        print(f"{alg}: {c:.3f} cycles/unit")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    dataset_dir = Path(args.dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    splits, meta = load_dataset(dataset_dir)
    n = int(meta["n"])
    kinds = tuple(kind_from_key(k) for k in meta["kinds"])
    spec = ErrorSpec(**meta["error"])

    if args.mode == "classifier" and args.frontend != "none":
        print("mode=classifier trains the backend alone; use --mode linked", file=sys.stderr)
        return 2
    if args.mode in ("denoiser", "linked") and args.frontend == "none":
        print(f"mode={args.mode} needs a frontend", file=sys.stderr)
        return 2

    config = ArbiterConfig(args.frontend, args.backend, n)
    train_split = splits["train"]
    if args.mode in ("classifier", "linked"):
        train_split = upsample(train_split, spec, upsample_rng(args.seed), kinds=kinds)

    def matrices(instances):
        field = "oracular" if args.train_inputs == "oracular" else "noisy"
        return stack_matrices([getattr(inst, field) for inst in instances])

    def labels(instances):
        return np.array([kind_to_class(inst.label, kinds) for inst in instances])

    tc = TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch_size,
        max_epochs=args.epochs,
        patience=args.patience,
        seed=args.seed,
    )
    if args.mode == "denoiser":
        net = build_frontend(config, seed=args.seed)
        oracular = stack_matrices([inst.oracular for inst in train_split])
        val_oracular = stack_matrices([inst.oracular for inst in splits["val"]])
        net, history = train_denoiser(
            net, (matrices(train_split), oracular), (matrices(splits["val"]), val_oracular), tc
        )
    else:
        net = build(config, seed=args.seed)
        net, history = train_classifier(
            net,
            (matrices(train_split), labels(train_split)),
            (matrices(splits["val"]), labels(splits["val"])),
            tc,
        )

    metadata = {
        "mode": args.mode,
        "dataset": str(dataset_dir),
        "dataset_hash": _dataset_hash(dataset_dir),
        "seed": args.seed,
        "train_inputs": args.train_inputs,
        "train_config": {
            "loss": "mae" if args.mode == "denoiser" else "sparse_categorical_crossentropy",
            "learning_rate": args.lr,
            "batch_size": args.batch_size,
            "max_epochs": args.epochs,
            "patience": args.patience,
        },
        "history": history,
    }
    save_bundle(out, net, config, metadata)
    with open(out / "history.json", "w") as fh:
        json.dump(history, fh, sort_keys=True, indent=2)
        fh.write("\n")
    _write_manifest(out, "train", args, {str(dataset_dir): _dataset_hash(dataset_dir)})
    if history.get("diverged"):
        print(
            f"training diverged at epoch {history.get('diverged_epoch')}; "
            f"bundle holds best weights from epoch {history.get('best_epoch')}",
            file=sys.stderr,
        )
        return 1
    print(
        f"trained {config.name} ({args.mode}) to epoch {history['stopped_epoch']} "
        f"(best {history['best_epoch']}); bundle in {out}"
    )
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    dataset_dir = Path(args.dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    splits, meta = load_dataset(dataset_dir)
    test = splits["test"]
    kinds = tuple(kind_from_key(k) for k in meta["kinds"])
    goal = GOALS_BY_NAME[meta["goal"]["name"]]

    if args.goal is not None and args.goal != meta["goal"]["name"]:
        print(
            f"--goal {args.goal} conflicts with dataset goal {meta['goal']['name']}; "
            "stored scores were computed under the dataset goal",
            file=sys.stderr,
        )
        return 1
    model, inputs = _load_model_arg(args.overhead_model)
    if args.overhead_model is not None and model.to_json() != meta["overhead_model"]:
        print(
            "--overhead-model conflicts with the model stored in dataset metadata; "
            "stored scores were computed under the dataset model",
            file=sys.stderr,
        )
        return 1
    from .evaluation import OverheadModel

    model = OverheadModel.from_json(meta["overhead_model"])

    arbiters = {}
    accuracy = {}
    for model_dir in args.model or []:
        net, config, _ = load_bundle(model_dir)
        if config.n != int(meta["n"]):
            print(
                f"model {model_dir} expects n={config.n}, dataset has n={meta['n']}",
                file=sys.stderr,
            )
            return 1
        name = f"{Path(model_dir).name}:{config.name}"
        arbiters[name] = lambda m, _net=net: select(_net, m, kinds)[0]
        hits = sum(1 for inst in test if select(net, inst.noisy, kinds)[0] == inst.label)
        accuracy[name] = hits / len(test)
        inputs[str(model_dir)] = _dataset_hash(Path(model_dir))

    rows = compare_strategies(test, goal, model, arbiters, kinds=kinds)
    write_report(rows, out / "report.csv")
    if args.plot:
        plot_report(rows, out / "report.svg")
    with open(out / "metrics.json", "w") as fh:
        json.dump({"accuracy": accuracy, "test_instances": len(test)}, fh, sort_keys=True, indent=2)
        fh.write("\n")
    inputs[str(dataset_dir)] = _dataset_hash(dataset_dir)
    _write_manifest(out, "eval", args, inputs)

    width = max(len(row.strategy) for row in rows)
    for row in rows:
        print(f"{row.strategy:<{width}}  mean={row.mean_effective_aipc:8.4f}  "
              f"normalized={row.normalized_to_oracle:.4f}")
    for name, acc in accuracy.items():
        print(f"accuracy[{name}] = {acc:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="schedarb",
        description="Competitive scheduler selection experiments.",
        epilog="SCHEDARB_WORKERS controls labeling parallelism (default 1).",
    )
    parser.add_argument("--version", action="version", version=f"schedarb {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate, label, split, and persist a dataset")
    gen.add_argument("--n", type=int, default=8, help="cores per system")
    gen.add_argument("--systems", type=int, default=20, help="systems to sample")
    gen.add_argument("--batches", type=int, default=500, help="workload batches to sample")
    gen.add_argument("--goal", choices=sorted(GOALS_BY_NAME), default="first100")
    gen.add_argument("--error", choices=["none", "statistical", "consistent"], default="none")
    gen.add_argument("--error-mean", type=float, default=0.25)
    gen.add_argument("--error-std", type=float, default=0.35)
    gen.add_argument("--pod-size", type=int, default=4, help="serial-hungarian pod size")
    gen.add_argument("--draws", type=int, default=100, help="seeded draws per randomized scheduler")
    gen.add_argument("--cores-per-isa", type=int, default=200)
    gen.add_argument("--workloads", type=int, default=72)
    gen.add_argument("--overhead-model", default=None, help="calibrated model JSON (default: built-in)")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_gen)

    cal = sub.add_parser("calibrate", help="time the schedulers and fit an overhead model")
    cal.add_argument("--sizes", default="16,32,64,128", help="comma-separated system sizes")
    cal.add_argument("--reps", type=int, default=5)
    cal.add_argument("--clock-hz", type=float, default=3e9)
    cal.add_argument("--seed", type=int, default=0)
    cal.add_argument("--out", required=True)
    cal.set_defaults(func=cmd_calibrate)

    tr = sub.add_parser("train", help="train an arbiter model on a dataset")
    tr.add_argument("--dataset", required=True)
    tr.add_argument("--mode", choices=["classifier", "denoiser", "linked"], required=True)
    tr.add_argument("--frontend", choices=["none", "simple", "cnn"], default="none")
    tr.add_argument("--backend", choices=["deep", "cnn"], default="deep")
    tr.add_argument("--train-inputs", choices=["noisy", "oracular"], default="noisy")
    tr.add_argument("--lr", type=float, default=1e-3)
    tr.add_argument("--batch-size", type=int, default=64)
    tr.add_argument("--epochs", type=int, default=200)
    tr.add_argument("--patience", type=int, default=5)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--out", required=True)
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="compare always/oracle/arbiter strategies on a test split")
    ev.add_argument("--dataset", required=True)
    ev.add_argument("--model", action="append", help="trained bundle directory (repeatable)")
    ev.add_argument("--goal", choices=sorted(GOALS_BY_NAME), default=None,
                    help="must match the dataset goal if given")
    ev.add_argument("--overhead-model", default=None,
                    help="must match the dataset model if given")
    ev.add_argument("--plot", action="store_true", help="also write report.svg")
    ev.add_argument("--out", required=True)
    ev.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
