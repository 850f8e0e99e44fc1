"""Overhead modeling, goal-aware effective performance, EoS, instance labeling,
and strategy comparison - the ground truth the arbiter is trained against.
"""

from __future__ import annotations

import csv
import math
import time
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .model import (
    AIPC_MAX,
    ALGORITHMS,
    CANONICAL_KINDS,
    CoreDescriptor,
    Isa,
    MulticoreSystem,
    PerfMatrix,
    Schedule,
    SchedulerKind,
    SchedulingGoal,
    WorkloadBatch,
    WorkloadDescriptor,
    schedule_value,
)
from .schedulers import (
    SchedulerInput,
    local_search,
    random_schedule,
    run_scheduler,
    run_scheduler_with_rng,
    smart_random,
)

# Seeded draws used to score a randomized scheduler during labeling.
LABEL_DRAWS = 100

_RANDOMIZED = ("random", "smart_random", "local")
_ALG_TAG = {alg: i for i, alg in enumerate(ALGORITHMS)}
_MASK64 = 0xFFFFFFFFFFFFFFFF


class CalibrationError(RuntimeError):
    """Raised when scheduler timing cannot support a coefficient fit."""


def _form_units(kind: SchedulerKind, n: int) -> float:
    """Size-dependent factor of each scheduler's fitted cost form."""
    alg = kind.algorithm
    if alg == "hungarian":
        return float(n) ** 3
    if alg == "serial_hungarian":
        pods = math.ceil(n / kind.pod_size)
        return pods * float(kind.pod_size) ** 3
    if alg in ("random", "smart_random"):
        return float(n)
    if alg == "local":
        return float(n) ** 2
    if alg == "greedy":
        return n * math.log2(n) if n > 1 else 0.0
    raise ValueError(f"unknown scheduler kind {kind}")


@dataclass(frozen=True)
class OverheadModel:
    """Per-scheduler cost model mapping (scheduler, N) -> cycles.

    coefficients[algorithm] holds cycles per form unit; predicted cycles are
    coefficient * form(N), nonnegative and nondecreasing in N by construction.
    """

    clock_hz: float = 3e9
    coefficients: Mapping[str, float] = field(
        default_factory=lambda: {alg: 50.0 for alg in ALGORITHMS}
    )
    samples: Mapping[str, Mapping[int, float]] = field(default_factory=dict)

    def __post_init__(self):
        if self.clock_hz <= 0:
            raise ValueError("clock_hz must be positive")
        for alg, c in self.coefficients.items():
            if alg not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {alg!r} in coefficients")
            if not (c >= 0 and math.isfinite(c)):
                raise ValueError(f"coefficient for {alg} must be finite and >= 0, got {c}")

    def to_json(self) -> dict:
        return {
            "clock_hz": self.clock_hz,
            "coefficients": dict(sorted(self.coefficients.items())),
            "samples": {
                alg: {str(n): t for n, t in sorted(per.items())}
                for alg, per in sorted(self.samples.items())
            },
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "OverheadModel":
        samples = {
            alg: {int(n): float(t) for n, t in per.items()}
            for alg, per in data.get("samples", {}).items()
        }
        return cls(
            clock_hz=float(data["clock_hz"]),
            coefficients={k: float(v) for k, v in data["coefficients"].items()},
            samples=samples,
        )


def default_overhead_model() -> OverheadModel:
    """Uncalibrated fallback: 50 cycles per form unit for every scheduler."""
    return OverheadModel()


def save_overhead_model(model: OverheadModel, path) -> None:
    import json

    with open(path, "w") as fh:
        json.dump(model.to_json(), fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_overhead_model(path) -> OverheadModel:
    import json

    with open(path) as fh:
        return OverheadModel.from_json(json.load(fh))


def zero_overhead_model() -> OverheadModel:
    return OverheadModel(coefficients={alg: 0.0 for alg in ALGORITHMS})


def overhead_cycles(model: OverheadModel, kind: SchedulerKind, n: int) -> float:
    """Predicted scheduling cost in cycles for an n-core instance."""
    if n < 1:
        raise ValueError("need n >= 1")
    if kind.algorithm not in model.coefficients:
        raise ValueError(f"model has no coefficient for {kind.algorithm!r}")
    return model.coefficients[kind.algorithm] * _form_units(kind, n)


def _timing_input(n: int, rng: np.random.Generator) -> SchedulerInput:
    """Random matrix plus throwaway descriptors for timing runs."""
    isas = [list(Isa)[j % 3] for j in range(n)]
    cores = tuple(
        CoreDescriptor(j, isa, isa is not Isa.THUMB, 1.0 - rng.random(), 1.0 - rng.random())
        for j, isa in enumerate(isas)
    )
    affinity = {isa: 1.0 for isa in Isa}
    workloads = tuple(
        WorkloadDescriptor(i, 1.0 - rng.random(), rng.random(), rng.random(), affinity)
        for i in range(n)
    )
    matrix = PerfMatrix(rng.random((n, n)) * AIPC_MAX)
    return SchedulerInput(matrix, WorkloadBatch(workloads), MulticoreSystem(0, cores), 0)


def calibrate_overhead(
    sizes: Sequence[int],
    reps: int,
    clock_hz: float = 3e9,
    kinds: Sequence[SchedulerKind] = CANONICAL_KINDS,
    seed: int = 0,
) -> OverheadModel:
    """Time every scheduler on random inputs and fit cost coefficients.

    Each scheduler is run `reps` times per size; the mean wall-clock seconds
    are least-squares fitted (through the origin) against the scheduler's
    declared cost form and converted to cycles via clock_hz.
    """
    if not sizes:
        raise ValueError("sizes must be nonempty")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if reps == 1:
        warnings.warn("reps=1 gives high-variance timings; consider reps >= 3")
    rng = np.random.default_rng(seed)
    inputs = {n: _timing_input(n, rng) for n in sorted(set(int(n) for n in sizes))}

    seconds: dict[str, dict[int, float]] = {}
    for kind in kinds:
        per_size: dict[int, float] = {}
        for n, inp in inputs.items():
            t0 = time.perf_counter()
            for rep in range(reps):
                run_scheduler(kind, replace(inp, rng_seed=rep))
            total = time.perf_counter() - t0
            if total <= 0.0:
                raise CalibrationError(
                    f"timer resolution too coarse: zero elapsed time for {kind.key} at n={n}"
                )
            per_size[n] = total / reps
        seconds[kind.algorithm] = per_size

    coefficients: dict[str, float] = {}
    for kind in kinds:
        per_size = seconds[kind.algorithm]
        f = np.array([_form_units(kind, n) for n in per_size])
        t = np.array([per_size[n] for n in per_size])
        c_sec = float((f * t).sum() / (f * f).sum())
        if not (c_sec > 0 and math.isfinite(c_sec)):
            raise CalibrationError(f"degenerate fit for {kind.key}: c={c_sec}")
        coefficients[kind.algorithm] = c_sec * clock_hz
    return OverheadModel(clock_hz=clock_hz, coefficients=coefficients, samples=seconds)


def effective_aipc(
    true_matrix: PerfMatrix,
    schedule: Schedule,
    goal: SchedulingGoal,
    overhead: float,
) -> float:
    """Goal-aware throughput of a schedule once scheduling cost is paid.

    With aggregate rate R = sum of assigned true rates:
      first_w(W): W / (overhead + W / R), i.e. work over total time; 0 if R = 0.
      most_c(C):  R * max(0, C - overhead) / C, the window share left for work.
    """
    if overhead < 0:
        raise ValueError("overhead must be >= 0")
    rate = schedule_value(true_matrix, schedule)
    if goal.mode == "first_w":
        if rate <= 0.0:
            return 0.0
        if overhead == 0.0:
            return rate
        return goal.amount / (overhead + goal.amount / rate)
    useful = max(0.0, goal.amount - overhead)
    return rate * (useful / goal.amount)


@dataclass(frozen=True)
class ScoredLabel:
    """Winner plus the effective-aIPC score of every competing scheduler."""

    winner: SchedulerKind
    scores: Mapping[SchedulerKind, float]
    goal: SchedulingGoal

    def __post_init__(self):
        if self.winner not in self.scores:
            raise ValueError("winner must appear in scores")
        best = max(self.scores.values())
        if self.scores[self.winner] < best:
            raise ValueError("winner does not attain the maximum score")


def _mean_effective(rates: np.ndarray, goal: SchedulingGoal, overhead: float) -> float:
    """Mean effective aIPC over per-draw aggregate rates."""
    if goal.mode == "first_w":
        out = np.zeros_like(rates)
        pos = rates > 0
        if overhead == 0.0:
            out[pos] = rates[pos]
        else:
            out[pos] = goal.amount / (overhead + goal.amount / rates[pos])
        return float(out.mean())
    useful = max(0.0, goal.amount - overhead)
    return float((rates * (useful / goal.amount)).mean())


def label_instance(
    true_matrix: PerfMatrix,
    inp: SchedulerInput,
    goal: SchedulingGoal,
    model: OverheadModel,
    kinds: Sequence[SchedulerKind] = CANONICAL_KINDS,
    draws: int = LABEL_DRAWS,
) -> ScoredLabel:
    """Score every scheduler on oracular data and pick the winner.

    Schedulers run on the oracular matrix (labels stay correct regardless of
    prediction error). Randomized schedulers are scored as the mean effective
    aIPC over `draws` seeded runs. Ties break toward the cheaper scheduler:
    lower overhead_cycles at this N, then the fixed cheapest-first rank.
    """
    n = true_matrix.n
    oracular_inp = replace(inp, matrix=true_matrix)
    base_seed = inp.rng_seed & _MASK64
    scores: dict[SchedulerKind, float] = {}
    for kind in kinds:
        oh = overhead_cycles(model, kind, n)
        if kind.algorithm in _RANDOMIZED:
            rates = np.empty(draws)
            tag = _ALG_TAG[kind.algorithm]
            for d in range(draws):
                rng = np.random.default_rng([base_seed, tag, d])
                sched = run_scheduler_with_rng(kind, oracular_inp, rng)
                rates[d] = schedule_value(true_matrix, sched)
            scores[kind] = _mean_effective(rates, goal, oh)
        else:
            sched = run_scheduler(kind, oracular_inp)
            scores[kind] = effective_aipc(true_matrix, sched, goal, oh)

    winner = max(
        kinds,
        key=lambda k: (scores[k], -overhead_cycles(model, k, n), -k.overhead_rank),
    )
    return ScoredLabel(winner=winner, scores=scores, goal=goal)


def eos(true_matrix: PerfMatrix, samples: int, rng: np.random.Generator) -> float:
    """Ease of scheduling: mean random-schedule value over the optimal value.

    1.0 means any schedule is as good as the optimum (easy); values near 0
    mean random schedules are far from it (hard). Returns 1.0 when the optimal
    value is 0 (nothing to lose by scheduling badly).
    """
    if samples < 1:
        raise ValueError("need samples >= 1")
    from .schedulers import hungarian

    opt = schedule_value(true_matrix, hungarian(true_matrix))
    if opt == 0.0:
        return 1.0
    n = true_matrix.n
    perms = np.argsort(rng.random((samples, n)), axis=1)
    mean_val = float(true_matrix.values[np.arange(n), perms].sum(axis=1).mean())
    return min(1.0, mean_val / opt)


@dataclass(frozen=True)
class StrategyRow:
    strategy: str
    mean_effective_aipc: float
    normalized_to_oracle: float


def compare_strategies(
    dataset: Sequence,
    goal: SchedulingGoal,
    model: OverheadModel,
    arbiters: Mapping[str, Callable[[PerfMatrix], SchedulerKind]] | None = None,
    kinds: Sequence[SchedulerKind] = CANONICAL_KINDS,
) -> list[StrategyRow]:
    """Mean effective aIPC of every strategy over a labeled dataset.

    Strategies: the oracle (per-instance winner), six always-X baselines, and
    one row per supplied arbiter. Arbiters see the noisy matrix and earn the
    stored score of whichever scheduler they pick. All rows are normalized to
    the oracle mean.
    """
    if not dataset:
        raise ValueError("dataset must be nonempty")
    oracle_mean = float(np.mean([inst.scores[inst.label] for inst in dataset]))

    def norm(mean: float) -> float:
        if oracle_mean > 0:
            return mean / oracle_mean
        return 1.0 if mean == oracle_mean else 0.0

    rows = [StrategyRow("oracle", oracle_mean, norm(oracle_mean))]
    for kind in kinds:
        mean = float(np.mean([inst.scores[kind] for inst in dataset]))
        rows.append(StrategyRow(f"always_{kind.key}", mean, norm(mean)))
    for name, pick in (arbiters or {}).items():
        mean = float(np.mean([inst.scores[pick(inst.noisy)] for inst in dataset]))
        rows.append(StrategyRow(name, mean, norm(mean)))
    return rows


def write_report(rows: Sequence[StrategyRow], path) -> None:
    """Comma-separated report with one row per strategy."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "mean_effective_aipc", "normalized_to_oracle"])
        for row in rows:
            writer.writerow(
                [row.strategy, repr(row.mean_effective_aipc), repr(row.normalized_to_oracle)]
            )


def plot_report(rows: Sequence[StrategyRow], path) -> None:
    """Bar chart of normalized performance per strategy (vector output)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(max(6, 0.8 * len(rows)), 4))
    names = [row.strategy for row in rows]
    ax.bar(names, [row.normalized_to_oracle for row in rows], color="steelblue")
    ax.set_ylabel("effective aIPC normalized to oracle")
    ax.set_ylim(0, 1.05)
    ax.tick_params(axis="x", rotation=60)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
