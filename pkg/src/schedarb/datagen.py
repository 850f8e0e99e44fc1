"""Synthetic dataset pipeline: core/workload pools, oracular performance
matrices, predictor-error injection, labeling, class balancing, splits, and
line-delimited persistence.

Everything is deterministic per (master_seed, item ids): each stage draws from
its own seed stream, so stages and instances can be generated/labeled in any
order (or in parallel) and still reproduce bit-for-bit.
"""

from __future__ import annotations

import dataclasses
import json
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .model import (
    AIPC_MAX,
    CANONICAL_KINDS,
    FP_THRESHOLD,
    CoreDescriptor,
    Isa,
    MulticoreSystem,
    PerfMatrix,
    SchedulerKind,
    SchedulingGoal,
    WorkloadBatch,
    WorkloadDescriptor,
    kind_from_key,
)
from .evaluation import LABEL_DRAWS, OverheadModel, label_instance
from .schedulers import SchedulerInput

FORMAT_VERSION = 1
SPLIT_FRACTIONS = (0.80, 0.05, 0.15)

# Seed-stream tags; combined with the master seed so every stage gets an
# independent, reproducible generator.
_CORES, _WORKLOADS, _SYSTEMS, _BATCHES, _NOISE, _SPLIT, _LABEL, _CLONES = range(8)
_MASK64 = 0xFFFFFFFFFFFFFFFF


def _rng(master_seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master_seed & _MASK64, *tags]))


def _stream_seed(master_seed: int, *tags: int) -> int:
    state = np.random.SeedSequence([master_seed & _MASK64, *tags]).generate_state(1, np.uint64)
    return int(state[0])


@dataclass(frozen=True)
class GenConfig:
    """Dataset shape. Defaults are paper scale; the CLI uses desk-scale flags."""

    n: int
    master_seed: int
    cores_per_isa: int = 200
    workload_count: int = 72
    systems_per_n: int = 1000
    batches: int = 20000

    def __post_init__(self):
        for name in ("cores_per_isa", "workload_count", "systems_per_n", "batches"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.n < 3:
            raise ValueError("need n >= 3 (one core per ISA)")


@dataclass(frozen=True)
class ErrorSpec:
    """Predictor-error model applied to oracular matrices.

    statistical: per entry, a fresh signed magnitude.
    consistent:  magnitude and sign are a fixed function of (workload id,
                 core id, field_seed), so the same pair always gets the same
                 error - emulating a real predictor's learnable error pattern.

    Magnitudes are drawn from a Gamma distribution moment-matched to (mean,
    std), giving a nonnegative error with exactly the requested mean.
    """

    mode: str = "none"
    mean: float = 0.25
    std: float = 0.35
    field_seed: int = 0

    def __post_init__(self):
        if self.mode not in ("none", "statistical", "consistent"):
            raise ValueError(f"unknown error mode {self.mode!r}")
        if self.std < 0:
            raise ValueError("std must be >= 0")
        if self.mean < 0:
            raise ValueError("mean must be >= 0")


NO_ERROR = ErrorSpec("none")


@dataclass(frozen=True)
class ProblemInstance:
    """One scheduling problem: system + batch + oracular (and noisy) matrices."""

    system_id: int
    batch_id: int
    system: MulticoreSystem
    batch: WorkloadBatch
    oracular: PerfMatrix
    noisy: PerfMatrix | None = None


@dataclass(frozen=True)
class LabeledInstance:
    """Dataset entry: matrices, winning scheduler, and all per-scheduler scores.

    clone > 0 marks upsampling copies; clones exist only in training splits.
    """

    system_id: int
    batch_id: int
    oracular: PerfMatrix
    noisy: PerfMatrix
    label: SchedulerKind
    scores: Mapping[SchedulerKind, float]
    clone: int = 0

    def __post_init__(self):
        if self.oracular.n != self.noisy.n:
            raise ValueError("oracular and noisy matrices must have equal dimensions")


def gen_pools(config: GenConfig) -> tuple[tuple[CoreDescriptor, ...], tuple[WorkloadDescriptor, ...]]:
    """Deterministic core and workload pools (cores_per_isa per ISA)."""
    rng = _rng(config.master_seed, _CORES)
    cores = []
    for isa in (Isa.THUMB, Isa.ALPHA, Isa.X86):
        for _ in range(config.cores_per_isa):
            cores.append(
                CoreDescriptor(
                    id=len(cores),
                    isa=isa,
                    has_fp=isa is not Isa.THUMB,
                    strength=1.0 - rng.random(),
                    mem_bw=1.0 - rng.random(),
                )
            )
    rng = _rng(config.master_seed, _WORKLOADS)
    workloads = []
    for i in range(config.workload_count):
        affinity = {isa: 0.5 + rng.random() for isa in (Isa.THUMB, Isa.ALPHA, Isa.X86)}
        workloads.append(
            WorkloadDescriptor(
                id=i,
                ilp=1.0 - rng.random(),
                fp_intensity=rng.random(),
                mem_boundedness=rng.random(),
                isa_affinity=affinity,
            )
        )
    return tuple(cores), tuple(workloads)


def synth_true_aipc(core: CoreDescriptor, workload: WorkloadDescriptor) -> float:
    """Deterministic stand-in for profiled per-pair performance.

    ISA affinity, FP starvation on FP-less cores, and memory boundedness all
    move the result, so all three heterogeneity drivers matter to a scheduler.
    """
    base = core.strength * workload.ilp
    mem_penalty = workload.mem_boundedness * (1.0 - core.mem_bw)
    aipc = AIPC_MAX * workload.isa_affinity[core.isa] * base * (1.0 - mem_penalty)
    if workload.fp_intensity > FP_THRESHOLD and not core.has_fp:
        aipc *= 0.02
    return min(max(aipc, 0.0), AIPC_MAX)


def sample_systems(
    pool: Sequence[CoreDescriptor], n: int, count: int, rng: np.random.Generator
) -> tuple[MulticoreSystem, ...]:
    """Random n-core systems, each forced to include one core per ISA."""
    if n < 3:
        raise ValueError("cannot satisfy the one-core-per-ISA constraint with n < 3")
    by_isa = {isa: [i for i, c in enumerate(pool) if c.isa is isa] for isa in Isa}
    for isa, members in by_isa.items():
        if not members:
            raise ValueError(f"core pool has no {isa} cores")
    systems = []
    for sid in range(count):
        picked = [members[rng.integers(len(members))] for members in by_isa.values()]
        remaining = np.array([i for i in range(len(pool)) if i not in set(picked)], dtype=np.intp)
        extra = rng.choice(remaining, size=n - 3, replace=False)
        members = np.array(picked + [int(e) for e in extra], dtype=np.intp)
        rng.shuffle(members)
        systems.append(MulticoreSystem(sid, tuple(pool[i] for i in members)))
    return tuple(systems)


def sample_batches(
    pool: Sequence[WorkloadDescriptor], n: int, count: int, rng: np.random.Generator
) -> tuple[WorkloadBatch, ...]:
    """Random batches of n workloads drawn with replacement."""
    batches = []
    for _ in range(count):
        idx = rng.integers(0, len(pool), size=n)
        batches.append(WorkloadBatch(tuple(pool[i] for i in idx)))
    return tuple(batches)


def _system_arrays(system: MulticoreSystem):
    strength = np.array([c.strength for c in system.cores])
    mem_bw = np.array([c.mem_bw for c in system.cores])
    has_fp = np.array([c.has_fp for c in system.cores])
    isa_idx = np.array([list(Isa).index(c.isa) for c in system.cores], dtype=np.intp)
    return strength, mem_bw, has_fp, isa_idx


def _batch_matrix(system_arrays, batch: WorkloadBatch) -> PerfMatrix:
    """Vectorized synth_true_aipc over a full (workload, core) grid.

    Mirrors the scalar arithmetic exactly (same operation order) so entries
    match per-pair calls bit-for-bit.
    """
    strength, mem_bw, has_fp, isa_idx = system_arrays
    ilp = np.array([w.ilp for w in batch])
    mem = np.array([w.mem_boundedness for w in batch])
    fp = np.array([w.fp_intensity for w in batch])
    isa_list = list(Isa)
    aff = np.array([[w.isa_affinity[isa] for isa in isa_list] for w in batch])

    affinity = aff[:, isa_idx]
    base = strength[None, :] * ilp[:, None]
    penalty = mem[:, None] * (1.0 - mem_bw[None, :])
    values = AIPC_MAX * affinity * base * (1.0 - penalty)
    starved = (fp[:, None] > FP_THRESHOLD) & ~has_fp[None, :]
    values = np.where(starved, values * 0.02, values)
    return PerfMatrix(np.clip(values, 0.0, AIPC_MAX))


def build_oracular(
    systems: Sequence[MulticoreSystem], batches: Sequence[WorkloadBatch]
) -> list[ProblemInstance]:
    """Oracular matrices for the full systems x batches cross product."""
    instances = []
    for system in systems:
        arrays = _system_arrays(system)
        for bid, batch in enumerate(batches):
            if len(batch) != system.n:
                raise ValueError(
                    f"batch {bid} has {len(batch)} workloads but system {system.id} has {system.n} cores"
                )
            instances.append(
                ProblemInstance(system.id, bid, system, batch, _batch_matrix(arrays, batch))
            )
    return instances


def _magnitudes(rng: np.random.Generator, mean: float, std: float, size) -> np.ndarray:
    """Nonnegative error magnitudes with exactly the requested mean and std."""
    if mean == 0.0:
        return np.zeros(size)
    if std == 0.0:
        return np.full(size, mean)
    shape = (mean / std) ** 2
    scale = std * std / mean
    return rng.gamma(shape, scale, size)


def _pair_error(spec: ErrorSpec, workload_id: int, core_id: int) -> float:
    """Signed error fixed per (workload, core) pair under a consistent field."""
    rng = _rng(spec.field_seed, workload_id, core_id)
    sign = 1.0 if rng.random() < 0.5 else -1.0
    return sign * float(_magnitudes(rng, spec.mean, spec.std, ()))


def inject_error(
    matrix: PerfMatrix,
    spec: ErrorSpec,
    rng: np.random.Generator | None = None,
    workload_ids: Sequence[int] | None = None,
    core_ids: Sequence[int] | None = None,
) -> PerfMatrix:
    """Apply predictor error to an oracular matrix.

    statistical mode draws fresh signed magnitudes from `rng`; consistent mode
    derives them from (field_seed, workload id, core id), defaulting ids to
    matrix positions when none are given. Results are clamped to [0, AIPC_MAX].
    """
    n = matrix.n
    if spec.mode == "none":
        return PerfMatrix(matrix.values)
    if spec.mode == "statistical":
        if rng is None:
            raise ValueError("statistical error injection needs an rng")
        mags = _magnitudes(rng, spec.mean, spec.std, (n, n))
        signs = np.where(rng.random((n, n)) < 0.5, 1.0, -1.0)
        return PerfMatrix(np.clip(matrix.values + signs * mags, 0.0, AIPC_MAX))
    wids = list(workload_ids) if workload_ids is not None else list(range(n))
    cids = list(core_ids) if core_ids is not None else list(range(n))
    if len(wids) != n or len(cids) != n:
        raise ValueError("workload_ids/core_ids must match the matrix dimension")
    errors = np.array([[_pair_error(spec, w, c) for c in cids] for w in wids])
    return PerfMatrix(np.clip(matrix.values + errors, 0.0, AIPC_MAX))


def add_noise(
    instances: Sequence[ProblemInstance], spec: ErrorSpec, master_seed: int
) -> list[ProblemInstance]:
    """Attach a noisy matrix to every instance per the error spec."""
    out = []
    pair_cache: dict[tuple[int, int], float] = {}
    for inst in instances:
        if spec.mode == "none":
            noisy = inst.oracular
        elif spec.mode == "statistical":
            rng = _rng(master_seed, _NOISE, inst.system_id, inst.batch_id)
            noisy = inject_error(inst.oracular, spec, rng)
        else:
            wids = [w.id for w in inst.batch]
            cids = [c.id for c in inst.system.cores]
            errors = np.empty((inst.oracular.n, inst.oracular.n))
            for i, w in enumerate(wids):
                for j, c in enumerate(cids):
                    key = (w, c)
                    if key not in pair_cache:
                        pair_cache[key] = _pair_error(spec, w, c)
                    errors[i, j] = pair_cache[key]
            noisy = PerfMatrix(np.clip(inst.oracular.values + errors, 0.0, AIPC_MAX))
        out.append(dataclasses.replace(inst, noisy=noisy))
    return out


def _label_one(args) -> LabeledInstance:
    inst, goal, model, kinds, draws, master_seed = args
    seed = _stream_seed(master_seed, _LABEL, inst.system_id, inst.batch_id)
    inp = SchedulerInput(inst.oracular, inst.batch, inst.system, seed)
    scored = label_instance(inst.oracular, inp, goal, model, kinds=kinds, draws=draws)
    noisy = inst.noisy if inst.noisy is not None else inst.oracular
    return LabeledInstance(
        system_id=inst.system_id,
        batch_id=inst.batch_id,
        oracular=inst.oracular,
        noisy=noisy,
        label=scored.winner,
        scores=scored.scores,
    )


def label_dataset(
    instances: Sequence[ProblemInstance],
    goal: SchedulingGoal,
    model: OverheadModel,
    master_seed: int,
    kinds: Sequence[SchedulerKind] = CANONICAL_KINDS,
    draws: int = LABEL_DRAWS,
    workers: int = 1,
) -> list[LabeledInstance]:
    """Label every instance from its oracular matrix.

    Per-instance seeds derive from (master_seed, system_id, batch_id), so the
    result is identical no matter how work is ordered or parallelized.
    """
    jobs = [(inst, goal, model, kinds, draws, master_seed) for inst in instances]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_label_one, jobs, chunksize=64))
    return [_label_one(job) for job in jobs]


def generate_dataset(
    config: GenConfig,
    goal: SchedulingGoal,
    model: OverheadModel,
    error_spec: ErrorSpec = NO_ERROR,
    kinds: Sequence[SchedulerKind] = CANONICAL_KINDS,
    draws: int = LABEL_DRAWS,
    workers: int = 1,
) -> dict[str, list[LabeledInstance]]:
    """Full pipeline: pools -> systems/batches -> oracular -> noise -> labels -> split."""
    cores, workloads = gen_pools(config)
    systems = sample_systems(cores, config.n, config.systems_per_n, _rng(config.master_seed, _SYSTEMS))
    batches = sample_batches(workloads, config.n, config.batches, _rng(config.master_seed, _BATCHES))
    instances = add_noise(build_oracular(systems, batches), error_spec, config.master_seed)
    labeled = label_dataset(
        instances, goal, model, config.master_seed, kinds=kinds, draws=draws, workers=workers
    )
    train, val, test = split_dataset(labeled, rng=_rng(config.master_seed, _SPLIT))
    return {"train": train, "val": val, "test": test}


def upsample_rng(master_seed: int) -> np.random.Generator:
    """Generator for clone-noise regeneration during upsampling."""
    return _rng(master_seed, _CLONES)


def split_dataset(
    instances: Sequence,
    fractions: tuple[float, float, float] = SPLIT_FRACTIONS,
    rng: np.random.Generator | None = None,
) -> tuple[list, list, list]:
    """Disjoint train/validation/test partition by shuffled index.

    Splitting happens before any upsampling so clones never leak across sets.
    """
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise ValueError("need three nonnegative fractions")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {sum(fractions)}")
    if rng is None:
        rng = np.random.default_rng(0)
    order = rng.permutation(len(instances))
    n_train = int(len(instances) * fractions[0])
    n_val = int(len(instances) * fractions[1])
    train = [instances[i] for i in order[:n_train]]
    val = [instances[i] for i in order[n_train : n_train + n_val]]
    test = [instances[i] for i in order[n_train + n_val :]]
    return train, val, test


def upsample(
    train: Sequence[LabeledInstance],
    error_spec: ErrorSpec | None = None,
    rng: np.random.Generator | None = None,
    kinds: Sequence[SchedulerKind] = CANONICAL_KINDS,
) -> list[LabeledInstance]:
    """Clone under-represented classes until every class matches the max count.

    Under statistical error injection each clone gets freshly drawn noise (the
    same oracular entry then never repeats verbatim across clones); other
    modes copy the stored noisy matrix. Classes with zero members cannot be
    cloned and are reported via a warning.
    """
    if not train:
        raise ValueError("training split must be nonempty")
    by_label: dict[SchedulerKind, list[LabeledInstance]] = {}
    for inst in train:
        by_label.setdefault(inst.label, []).append(inst)
    missing = [k.key for k in kinds if k not in by_label]
    if missing:
        warnings.warn(f"classes with zero members cannot be upsampled: {missing}")
    if rng is None:
        rng = np.random.default_rng(0)

    max_count = max(len(members) for members in by_label.values())
    out = list(train)
    for members in by_label.values():
        clone_idx = 0
        while len(members) + clone_idx < max_count:
            source = members[clone_idx % len(members)]
            noisy = source.noisy
            if error_spec is not None and error_spec.mode == "statistical":
                noisy = inject_error(source.oracular, error_spec, rng)
            out.append(dataclasses.replace(source, noisy=noisy, clone=clone_idx + 1))
            clone_idx += 1
    return out


def _matrix_to_list(matrix: PerfMatrix) -> list[float]:
    return [float(x) for x in matrix.values.ravel()]


def _record(inst: LabeledInstance) -> dict:
    return {
        "system_id": inst.system_id,
        "batch_id": inst.batch_id,
        "clone": inst.clone,
        "label": inst.label.key,
        "oracular": _matrix_to_list(inst.oracular),
        "noisy": _matrix_to_list(inst.noisy),
        "scores": {kind.key: float(score) for kind, score in inst.scores.items()},
    }


def _from_record(rec: Mapping, n: int) -> LabeledInstance:
    return LabeledInstance(
        system_id=int(rec["system_id"]),
        batch_id=int(rec["batch_id"]),
        clone=int(rec.get("clone", 0)),
        label=kind_from_key(rec["label"]),
        oracular=PerfMatrix(np.array(rec["oracular"]).reshape(n, n)),
        noisy=PerfMatrix(np.array(rec["noisy"]).reshape(n, n)),
        scores={kind_from_key(k): float(v) for k, v in rec["scores"].items()},
    )


def save_dataset(out_dir, splits: Mapping[str, Sequence[LabeledInstance]], metadata: Mapping) -> None:
    """Write one JSON-lines file per split plus a sidecar meta.json.

    Floats serialize via repr (17 significant digits), so a reload reproduces
    every matrix bit-for-bit and reruns are byte-identical.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, instances in splits.items():
        with open(out / f"{name}.jsonl", "w") as fh:
            for inst in instances:
                fh.write(json.dumps(_record(inst), sort_keys=True, separators=(",", ":")))
                fh.write("\n")
    with open(out / "meta.json", "w") as fh:
        json.dump(dict(metadata), fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_dataset(in_dir) -> tuple[dict[str, list[LabeledInstance]], dict]:
    src = Path(in_dir)
    with open(src / "meta.json") as fh:
        metadata = json.load(fh)
    if metadata.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported dataset format_version {metadata.get('format_version')}")
    n = int(metadata["n"])
    splits: dict[str, list[LabeledInstance]] = {}
    for name in ("train", "val", "test"):
        path = src / f"{name}.jsonl"
        if not path.exists():
            continue
        with open(path) as fh:
            splits[name] = [_from_record(json.loads(line), n) for line in fh if line.strip()]
    return splits, metadata
