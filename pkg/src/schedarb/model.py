"""Domain types shared across the toolkit, plus elementary schedule arithmetic.

All types are immutable after construction and all operations here are pure
functions, so everything in this module is safe to share across threads.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Mapping, Sequence

import numpy as np

# Generation/validation ceiling for per-pair aIPC. Externally loaded matrices
# may exceed it; out-of-range values only warn, they never hard-fail.
AIPC_MAX = 4.5

# A workload whose fp_intensity exceeds this needs FP hardware; below it the
# FP use is treated as noise-level.
FP_THRESHOLD = 0.05


class Isa(Enum):
    THUMB = "thumb"
    ALPHA = "alpha"
    X86 = "x86"


@dataclass(frozen=True)
class CoreDescriptor:
    """Abstract core: single-thread capability and memory-service capability.

    Thumb cores have no FP hardware; strength and mem_bw are ratings in (0, 1].
    """

    id: int
    isa: Isa
    has_fp: bool
    strength: float
    mem_bw: float

    def __post_init__(self):
        if self.isa is Isa.THUMB and self.has_fp:
            raise ValueError("Thumb cores have no FP hardware (has_fp must be False)")
        if not 0.0 < self.strength <= 1.0:
            raise ValueError(f"strength must be in (0, 1], got {self.strength}")
        if not 0.0 < self.mem_bw <= 1.0:
            raise ValueError(f"mem_bw must be in (0, 1], got {self.mem_bw}")


@dataclass(frozen=True)
class WorkloadDescriptor:
    """Abstract workload ratings plus a per-ISA affinity multiplier."""

    id: int
    ilp: float
    fp_intensity: float
    mem_boundedness: float
    isa_affinity: Mapping[Isa, float]

    def __post_init__(self):
        if not 0.0 < self.ilp <= 1.0:
            raise ValueError(f"ilp must be in (0, 1], got {self.ilp}")
        if not 0.0 <= self.fp_intensity <= 1.0:
            raise ValueError(f"fp_intensity must be in [0, 1], got {self.fp_intensity}")
        if not 0.0 <= self.mem_boundedness <= 1.0:
            raise ValueError(
                f"mem_boundedness must be in [0, 1], got {self.mem_boundedness}"
            )
        for isa in Isa:
            mult = self.isa_affinity.get(isa)
            if mult is None:
                raise ValueError(f"isa_affinity missing entry for {isa}")
            if not 0.5 <= mult <= 1.5:
                raise ValueError(f"isa_affinity[{isa}] must be in [0.5, 1.5], got {mult}")


@dataclass(frozen=True)
class MulticoreSystem:
    """An N-core system (N >= 3).

    Generated systems always contain at least one core of each ISA; hand-built
    systems for experiments (e.g. all-Thumb corner cases) may violate that, so
    the constructor does not enforce it. Use `covers_all_isas` to check.
    """

    id: int
    cores: tuple[CoreDescriptor, ...]

    def __post_init__(self):
        object.__setattr__(self, "cores", tuple(self.cores))
        if len(self.cores) < 3:
            raise ValueError(f"systems need at least 3 cores, got {len(self.cores)}")

    @property
    def n(self) -> int:
        return len(self.cores)

    def covers_all_isas(self) -> bool:
        present = {core.isa for core in self.cores}
        return present == set(Isa)


@dataclass(frozen=True)
class WorkloadBatch:
    """N workloads arriving together; repetition of a workload is allowed."""

    workloads: tuple[WorkloadDescriptor, ...]

    def __post_init__(self):
        object.__setattr__(self, "workloads", tuple(self.workloads))
        if not self.workloads:
            raise ValueError("batch must contain at least one workload")

    def __len__(self) -> int:
        return len(self.workloads)

    def __iter__(self) -> Iterator[WorkloadDescriptor]:
        return iter(self.workloads)


@dataclass(frozen=True, eq=False)
class PerfMatrix:
    """N x N matrix, entry [i][j] = aIPC of workload i on core j.

    Entries of exactly 0 are legal (an FP workload on an FP-less core can make
    no progress). Values outside [0, AIPC_MAX] trigger a warning only, since
    externally supplied matrices may legitimately exceed the synthetic bounds.
    """

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError(f"performance matrix must be square 2-D, got shape {arr.shape}")
        if arr.shape[0] < 2:
            raise ValueError("performance matrix needs n >= 2")
        if not np.all(np.isfinite(arr)):
            raise ValueError("performance matrix entries must be finite")
        if arr.min() < 0.0 or arr.max() > AIPC_MAX:
            warnings.warn(
                f"matrix entries outside [0, {AIPC_MAX}] "
                f"(min={arr.min():.4g}, max={arr.max():.4g})",
                stacklevel=2,
            )
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class Schedule:
    """assignment[i] = index of the core running workload i (a permutation)."""

    assignment: tuple[int, ...]

    def __post_init__(self):
        assign = tuple(int(a) for a in self.assignment)
        object.__setattr__(self, "assignment", assign)
        if sorted(assign) != list(range(len(assign))):
            raise ValueError(f"assignment is not a permutation: {assign}")

    @property
    def n(self) -> int:
        return len(self.assignment)


ALGORITHMS = ("hungarian", "serial_hungarian", "random", "smart_random", "local", "greedy")

# Cheapest-first ranking by algorithmic cost at equal N; used to break ties
# between equally scoring schedulers (the cheaper one strictly dominates under
# any perturbation of the scores).
_OVERHEAD_RANK = {
    "random": 0,
    "smart_random": 1,
    "greedy": 2,
    "local": 3,
    "serial_hungarian": 4,
    "hungarian": 5,
}


@dataclass(frozen=True)
class SchedulerKind:
    """One of the six competing algorithms; serial_hungarian carries a pod size."""

    algorithm: str
    pod_size: int | None = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.algorithm == "serial_hungarian":
            if self.pod_size is None or self.pod_size < 2:
                raise ValueError("serial_hungarian needs pod_size >= 2")
        elif self.pod_size is not None:
            raise ValueError(f"{self.algorithm} takes no pod_size")

    @property
    def key(self) -> str:
        """Stable identifier used in files and reports."""
        if self.pod_size is not None:
            return f"{self.algorithm}_{self.pod_size}"
        return self.algorithm

    @property
    def overhead_rank(self) -> int:
        return _OVERHEAD_RANK[self.algorithm]


def kind_from_key(key: str) -> SchedulerKind:
    if key in ALGORITHMS:
        return SchedulerKind(key)
    stem, _, pod = key.rpartition("_")
    if stem == "serial_hungarian" and pod.isdigit():
        return SchedulerKind(stem, int(pod))
    raise ValueError(f"unknown scheduler key {key!r}")


HUNGARIAN = SchedulerKind("hungarian")
SERIAL_HUNGARIAN_4 = SchedulerKind("serial_hungarian", 4)
SERIAL_HUNGARIAN_32 = SchedulerKind("serial_hungarian", 32)
RANDOM = SchedulerKind("random")
SMART_RANDOM = SchedulerKind("smart_random")
LOCAL = SchedulerKind("local")
GREEDY = SchedulerKind("greedy")

# The catalog the arbiter chooses from; the tuple order defines the class
# index used by classifiers and dataset labels.
CANONICAL_KINDS = (HUNGARIAN, SERIAL_HUNGARIAN_4, RANDOM, SMART_RANDOM, LOCAL, GREEDY)
NUM_CLASSES = len(CANONICAL_KINDS)


def canonical_kinds(pod_size: int = 4) -> tuple[SchedulerKind, ...]:
    """The six-scheduler catalog with a configurable serial pod size."""
    return (
        HUNGARIAN,
        SchedulerKind("serial_hungarian", pod_size),
        RANDOM,
        SMART_RANDOM,
        LOCAL,
        GREEDY,
    )


def kind_to_class(kind: SchedulerKind, kinds: Sequence[SchedulerKind] = CANONICAL_KINDS) -> int:
    try:
        return list(kinds).index(kind)
    except ValueError:
        raise ValueError(f"{kind} is not in the catalog {kinds}") from None


def class_to_kind(label: int, kinds: Sequence[SchedulerKind] = CANONICAL_KINDS) -> SchedulerKind:
    if not 0 <= label < len(kinds):
        raise ValueError(f"class label {label} out of range for {len(kinds)} kinds")
    return kinds[label]


@dataclass(frozen=True)
class SchedulingGoal:
    """Criterion deciding the winner: fixed work (first_w) or fixed window (most_c).

    first_w counts Alpha-equivalent instructions to complete; most_c counts
    cycles available for useful work.
    """

    mode: str
    amount: float

    def __post_init__(self):
        if self.mode not in ("first_w", "most_c"):
            raise ValueError(f"unknown goal mode {self.mode!r}")
        if not self.amount > 0:
            raise ValueError("goal amount must be positive")

    @classmethod
    def first_w(cls, work: float) -> "SchedulingGoal":
        return cls("first_w", float(work))

    @classmethod
    def most_c(cls, window: float) -> "SchedulingGoal":
        return cls("most_c", float(window))


FIRST100 = SchedulingGoal.first_w(100e6)
FIRST400 = SchedulingGoal.first_w(400e6)
MOST50 = SchedulingGoal.most_c(50e6)
MOST200 = SchedulingGoal.most_c(200e6)

GOALS_BY_NAME = {
    "first100": FIRST100,
    "first400": FIRST400,
    "most50": MOST50,
    "most200": MOST200,
}


def goal_name(goal: SchedulingGoal) -> str:
    for name, g in GOALS_BY_NAME.items():
        if g == goal:
            return name
    return f"{goal.mode}:{goal.amount:g}"


def assigned_rates(matrix: PerfMatrix, schedule: Schedule) -> np.ndarray:
    """Per-workload aIPC under the given assignment: result[i] = m[i][sched[i]]."""
    if matrix.n != schedule.n:
        raise ValueError(f"matrix is {matrix.n}x{matrix.n} but schedule has n={schedule.n}")
    idx = np.asarray(schedule.assignment, dtype=np.intp)
    return matrix.values[np.arange(matrix.n), idx]


def schedule_value(matrix: PerfMatrix, schedule: Schedule) -> float:
    """Aggregate aIPC of a schedule (sum of assigned per-pair rates)."""
    return float(assigned_rates(matrix, schedule).sum())
