"""The six competing assignment algorithms, plus a brute-force test oracle.

Every scheduler maps an N x N (predicted) performance matrix to a valid
permutation. All are deterministic given the input and a seed; none reads
anything beyond the provided matrix and descriptors.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .model import (
    FP_THRESHOLD,
    Isa,
    MulticoreSystem,
    PerfMatrix,
    Schedule,
    SchedulerKind,
    WorkloadBatch,
)

BRUTE_FORCE_LIMIT = 9


@dataclass(frozen=True)
class SchedulerInput:
    """Everything a scheduler may look at: the (possibly noisy) prediction
    matrix, the workload/core descriptors, and a seed for randomized kinds."""

    matrix: PerfMatrix
    batch: WorkloadBatch
    system: MulticoreSystem
    rng_seed: int

    def __post_init__(self):
        if not (self.matrix.n == len(self.batch) == self.system.n):
            raise ValueError(
                f"size mismatch: matrix {self.matrix.n}, batch {len(self.batch)}, "
                f"system {self.system.n}"
            )


def _assign_max(values: np.ndarray) -> np.ndarray:
    """Row->column assignment maximizing the assigned sum, O(n^3).

    Shortest-augmenting-path Hungarian with potentials, run on the cost
    matrix (max - values) so the classic minimization finds the argmax.
    """
    n = values.shape[0]
    if n == 1:
        return np.zeros(1, dtype=np.intp)
    cost = values.max() - values

    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.intp)  # p[j] = row matched to column j (1-based, 0 free)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        way = np.zeros(n + 1, dtype=np.intp)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            cur = cost[i0 - 1, :] - u[i0] - v[1:]
            unused = ~used[1:]
            minv1 = minv[1:]
            way1 = way[1:]
            better = unused & (cur < minv1)
            minv1[better] = cur[better]
            way1[better] = j0
            masked = np.where(unused, minv1, np.inf)
            best = int(np.argmin(masked))
            delta = masked[best]
            u[p[used]] += delta
            v[used] -= delta
            minv1[unused] -= delta
            j0 = best + 1
            if p[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1

    assign = np.empty(n, dtype=np.intp)
    assign[p[1:] - 1] = np.arange(n)
    return assign


def hungarian(matrix: PerfMatrix) -> Schedule:
    """Optimal assignment (one of many in case of ties), O(n^3)."""
    return Schedule(tuple(_assign_max(matrix.values)))


def serial_hungarian(matrix: PerfMatrix, pod_size: int) -> Schedule:
    """Hungarian run independently within contiguous index pods.

    Pods cover [0..P), [P..2P), ...; a trailing pod smaller than P is allowed.
    Workloads in a pod are assigned only to cores in the same index range.
    """
    if pod_size < 2:
        raise ValueError(f"pod_size must be >= 2, got {pod_size}")
    n = matrix.n
    assignment = np.empty(n, dtype=np.intp)
    for start in range(0, n, pod_size):
        end = min(start + pod_size, n)
        block = matrix.values[start:end, start:end]
        assignment[start:end] = start + _assign_max(block)
    return Schedule(tuple(assignment))


def random_schedule(n: int, rng: np.random.Generator) -> Schedule:
    """Uniformly random permutation from the seeded generator, O(n)."""
    if n < 1:
        raise ValueError("need n >= 1")
    return Schedule(tuple(rng.permutation(n)))


def smart_random(inp: SchedulerInput, rng: np.random.Generator | None = None) -> Schedule:
    """Random assignment that keeps FP workloads off Thumb cores when possible.

    If there are more FP workloads than non-Thumb cores the constraint is
    unsatisfiable and the result degrades to a plain random permutation. All
    remaining decisions are uniformly random, O(n).
    """
    if rng is None:
        rng = np.random.default_rng(inp.rng_seed)
    n = inp.matrix.n
    fp_workloads = [i for i, w in enumerate(inp.batch) if w.fp_intensity > FP_THRESHOLD]
    non_thumb = [j for j, c in enumerate(inp.system.cores) if c.isa is not Isa.THUMB]
    if len(fp_workloads) > len(non_thumb):
        return random_schedule(n, rng)

    assignment = np.empty(n, dtype=np.intp)
    chosen = rng.choice(np.asarray(non_thumb, dtype=np.intp), size=len(fp_workloads), replace=False)
    assignment[fp_workloads] = chosen
    fp_set = set(fp_workloads)
    chosen_set = {int(c) for c in chosen}
    rest_workloads = [i for i in range(n) if i not in fp_set]
    rest_cores = np.array([j for j in range(n) if j not in chosen_set], dtype=np.intp)
    rng.shuffle(rest_cores)
    assignment[rest_workloads] = rest_cores
    return Schedule(tuple(assignment))


def local_search(matrix: PerfMatrix, start: Schedule, rng: np.random.Generator) -> Schedule:
    """Pairwise-swap improvement over n/2 rounds, O(n^2) total work.

    Each round randomly splits the workload slots into two halves, pairs them
    positionally, and keeps each individual swap only if its pairwise
    predicted value strictly improves. Never decreases the schedule value.
    """
    if start.n != matrix.n:
        raise ValueError(f"start schedule has n={start.n}, matrix has n={matrix.n}")
    values = matrix.values
    n = matrix.n
    assign = np.array(start.assignment, dtype=np.intp)
    half = n // 2
    for _ in range(half):
        order = rng.permutation(n)
        for a, b in zip(order[:half], order[half : 2 * half]):
            cur = values[a, assign[a]] + values[b, assign[b]]
            new = values[a, assign[b]] + values[b, assign[a]]
            if new > cur:
                assign[a], assign[b] = assign[b], assign[a]
    return Schedule(tuple(assign))


def greedy(matrix: PerfMatrix) -> Schedule:
    """Rank workloads by row mean and cores by column mean, match rank-to-rank.

    Row/column means of the input matrix stand in for ILP and core performance
    so the scheduler sees exactly the same information as the others. Ties
    break toward the lower original index. O(n log n).
    """
    row_means = matrix.values.mean(axis=1)
    col_means = matrix.values.mean(axis=0)
    row_order = np.argsort(-row_means, kind="stable")
    col_order = np.argsort(-col_means, kind="stable")
    assignment = np.empty(matrix.n, dtype=np.intp)
    assignment[row_order] = col_order
    return Schedule(tuple(assignment))


_PERM_CACHE: dict[int, np.ndarray] = {}


def _all_perms(n: int) -> np.ndarray:
    if n not in _PERM_CACHE:
        _PERM_CACHE[n] = np.array(list(itertools.permutations(range(n))), dtype=np.intp)
    return _PERM_CACHE[n]


def brute_force_optimal(matrix: PerfMatrix) -> Schedule:
    """Exact maximum over all n! permutations; test oracle only."""
    n = matrix.n
    if n > BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute force is limited to n <= {BRUTE_FORCE_LIMIT}, got {n}")
    perms = _all_perms(n)
    totals = matrix.values[np.arange(n), perms].sum(axis=1)
    return Schedule(tuple(perms[int(np.argmax(totals))]))


def run_scheduler(kind: SchedulerKind, inp: SchedulerInput) -> Schedule:
    """Dispatch to the matching algorithm; randomized kinds draw from rng_seed."""
    rng = np.random.default_rng(inp.rng_seed & 0xFFFFFFFFFFFFFFFF)
    return run_scheduler_with_rng(kind, inp, rng)


def run_scheduler_with_rng(
    kind: SchedulerKind, inp: SchedulerInput, rng: np.random.Generator
) -> Schedule:
    """Dispatch with an explicit generator (labeling uses per-draw streams)."""
    alg = kind.algorithm
    if alg == "hungarian":
        return hungarian(inp.matrix)
    if alg == "serial_hungarian":
        return serial_hungarian(inp.matrix, kind.pod_size)
    if alg == "random":
        return random_schedule(inp.matrix.n, rng)
    if alg == "smart_random":
        return smart_random(inp, rng)
    if alg == "local":
        start = random_schedule(inp.matrix.n, rng)
        return local_search(inp.matrix, start, rng)
    if alg == "greedy":
        return greedy(inp.matrix)
    raise ValueError(f"unknown scheduler kind {kind}")
