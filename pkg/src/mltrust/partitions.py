"""Partitions of the contingency space and the penalized prediction objective.

A partition is stored as a restricted growth string: ``labels[i]`` is the
cell of flat contingency ``i`` and cells are numbered in order of first
appearance. The exhaustive routines work on the whole label table at once
(``partition_labels``), so the per-partition Python overhead only shows up
in the single-partition helpers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations

import numpy as np

from .errors import CeilingError, ConvergenceError
from .trust_game import Contingency, ergodic_distribution

__all__ = [
    "MAX_CONTINGENCIES",
    "V_TOL",
    "Partition",
    "BeliefProfile",
    "MergeCheck",
    "AssignmentCheck",
    "LloydResult",
    "bell_number",
    "enumerate_partitions",
    "partition_labels",
    "representative_strategies",
    "mspe",
    "objective_v",
    "merge_delta_mspe",
    "check_merge_inequality",
    "check_optimal_assignment",
    "is_monotone",
    "lloyd_iteration",
    "objective_values",
    "ml_optimal_partitions",
    "local_search_partition",
    "LocalSearchResult",
]

MAX_CONTINGENCIES = 12
V_TOL = 1e-9


def _canonical(labels):
    relabel = {}
    out = []
    for x in labels:
        if x not in relabel:
            relabel[x] = len(relabel)
        out.append(relabel[x])
    return tuple(out)


@dataclass(frozen=True)
class Partition:
    """Set partition of the ``count`` flat contingencies."""

    labels: tuple

    def __post_init__(self):
        if not self.labels:
            raise ValueError("partition of an empty set")
        object.__setattr__(self, "labels", _canonical(int(x) for x in self.labels))

    @classmethod
    def from_cells(cls, cells, count=None):
        cells = [list(c) for c in cells]
        members = [i for c in cells for i in c]
        count = len(members) if count is None else count
        if any(not c for c in cells):
            raise ValueError("empty cell")
        if sorted(members) != list(range(count)):
            raise ValueError("cells must cover every contingency exactly once")
        labels = [0] * count
        for k, c in enumerate(cells):
            for i in c:
                labels[i] = k
        return cls(tuple(labels))

    @classmethod
    def finest(cls, count):
        return cls(tuple(range(count)))

    @classmethod
    def degenerate(cls, count):
        return cls((0,) * count)

    @property
    def count(self) -> int:
        return len(self.labels)

    @property
    def size(self) -> int:
        return max(self.labels) + 1

    def __len__(self):
        return self.size

    @property
    def cells(self):
        cells = [[] for _ in range(self.size)]
        for i, k in enumerate(self.labels):
            cells[k].append(i)
        return tuple(tuple(c) for c in cells)

    def cell_of(self, i) -> int:
        if isinstance(i, Contingency):
            i = i.flat
        return self.labels[i]

    def merged(self, a, b) -> "Partition":
        if a == b:
            raise ValueError("cannot merge a cell with itself")
        return Partition(tuple(a if k == b else k for k in self.labels))

    def moved(self, i, cell) -> "Partition":
        labels = list(self.labels)
        labels[i] = cell
        return Partition(tuple(labels))

    def tokens(self):
        """Cells as lists of ``"state,h"`` strings."""
        return [[str(Contingency.from_flat(i)) for i in c] for c in self.cells]

    def __str__(self):
        return " | ".join("{" + " ".join(c) + "}" for c in self.tokens())


@dataclass(frozen=True, eq=False)
class BeliefProfile:
    partition: Partition
    values: np.ndarray  # representative strategy per cell
    mass: np.ndarray  # ergodic mass per cell

    @property
    def per_contingency(self) -> np.ndarray:
        return self.values[np.array(self.partition.labels)]

    def at(self, i) -> float:
        return float(self.values[self.partition.cell_of(i)])


def _flat(x):
    return np.asarray(x, dtype=float).ravel()


def representative_strategies(partition: Partition, sigma, p) -> BeliefProfile:
    """Mass-weighted mean of ``sigma`` on each cell.

    Cells without ergodic mass get the plain mean of their members, which
    for a singleton null cell is the member's own value.
    """
    sigma, p = _flat(sigma), _flat(p)
    if sigma.size != partition.count or p.size != partition.count:
        raise ValueError("partition, strategy and distribution disagree on the contingency count")
    labels = np.array(partition.labels)
    K = partition.size
    mass = np.bincount(labels, weights=p, minlength=K)
    wsum = np.bincount(labels, weights=p * sigma, minlength=K)
    usum = np.bincount(labels, weights=sigma, minlength=K)
    cnt = np.bincount(labels, minlength=K)
    values = np.where(mass > 0, wsum / np.where(mass > 0, mass, 1.0), usum / cnt)
    return BeliefProfile(partition, values, mass)


def mspe(partition: Partition, sigma, p) -> float:
    sigma, p = _flat(sigma), _flat(p)
    sighat = representative_strategies(partition, sigma, p).per_contingency
    return float(np.dot(p, (sighat - sigma) ** 2))


def objective_v(partition: Partition, sigma, p, c: float) -> float:
    """Complexity cost ``c * |partition|`` plus prediction error."""
    return c * partition.size + mspe(partition, sigma, p)


def merge_delta_mspe(profile: BeliefProfile, a: int, b: int) -> float:
    """Increase in prediction error from pooling cells ``a`` and ``b``.

    Two cells without mass pool for free and return 0.
    """
    if a == b:
        raise ValueError("cells must differ")
    pa, pb = float(profile.mass[a]), float(profile.mass[b])
    if pa + pb <= 0:
        return 0.0
    gap = float(profile.values[a] - profile.values[b])
    return pa * pb / (pa + pb) * gap * gap


@dataclass
class MergeCheck:
    c: float
    pairs: list = field(default_factory=list)  # (a, b, delta, margin, passes, null_pair)

    @property
    def passes(self) -> bool:
        return all(row[4] for row in self.pairs)

    @property
    def failures(self):
        return [row for row in self.pairs if not row[4]]

    @property
    def min_margin(self) -> float:
        return min((row[3] for row in self.pairs), default=float("inf"))


def check_merge_inequality(partition: Partition, sigma, p, c: float, tol: float = V_TOL) -> MergeCheck:
    """Pairwise test that no merge lowers the objective.

    A pair passes when its prediction-error increase is at least ``c - tol``;
    ``margin`` is ``delta - c``.
    """
    profile = representative_strategies(partition, sigma, p)
    out = MergeCheck(c)
    for a, b in combinations(range(partition.size), 2):
        delta = merge_delta_mspe(profile, a, b)
        null = profile.mass[a] + profile.mass[b] <= 0
        out.pairs.append((a, b, delta, delta - c, delta >= c - tol, bool(null)))
    return out


@dataclass
class AssignmentCheck:
    strong: bool
    rows: list = field(default_factory=list)  # (i, own_distance, best_distance, passes)

    @property
    def passes(self) -> bool:
        return all(r[3] for r in self.rows)

    @property
    def failures(self):
        return [r for r in self.rows if not r[3]]


def check_optimal_assignment(partition: Partition, sigma, p, profile=None, strong=False, eps=V_TOL) -> AssignmentCheck:
    """Is each contingency in a cell with the nearest representative strategy?

    Only positive-mass contingencies are examined unless ``strong``.
    """
    sigma, p = _flat(sigma), _flat(p)
    if profile is None:
        profile = representative_strategies(partition, sigma, p)
    out = AssignmentCheck(strong)
    for i in range(partition.count):
        if not strong and p[i] <= 0:
            continue
        dist = np.abs(profile.values - sigma[i])
        own = float(dist[partition.labels[i]])
        best = float(dist.min())
        out.rows.append((i, own, best, own <= best + eps))
    return out


def is_monotone(partition: Partition, sigma, p, tol: float = V_TOL) -> bool:
    """Beliefs weakly decreasing in the payoff state, for each history."""
    sighat = representative_strategies(partition, sigma, p).per_contingency.reshape(-1, 2)
    return bool(np.all(sighat[:-1] - sighat[1:] >= -tol))


LLOYD_TIE = 1e-12


@dataclass
class LloydResult:
    partition: Partition
    iterations: int
    mspe_history: list
    dropped_cells: int

    @property
    def shrank(self) -> bool:
        return self.dropped_cells > 0


def lloyd_iteration(sigma, p, init: Partition, max_iter: int = 1000) -> LloydResult:
    """Weighted one-dimensional k-means started from ``init``.

    Positive-mass contingencies move to the nearest representative strategy
    (staying put on ties); null contingencies keep their cell. Cells that
    lose every member are dropped.
    """
    sigma, p = _flat(sigma), _flat(p)
    labels = list(init.labels)
    K0 = init.size
    history = [mspe(init, sigma, p)]
    for it in range(1, max_iter + 1):
        part = Partition(tuple(labels))
        labels = list(part.labels)
        values = representative_strategies(part, sigma, p).values
        changed = False
        for i in range(len(labels)):
            if p[i] <= 0:
                continue
            dist = np.abs(values - sigma[i])
            best = dist.min()
            # ties up to rounding keep the member in place, otherwise equal cells can swap it forever
            if dist[labels[i]] <= best + LLOYD_TIE:
                continue
            labels[i] = int(np.flatnonzero(dist == best)[0])
            changed = True
        part = Partition(tuple(labels))
        history.append(mspe(part, sigma, p))
        if not changed:
            return LloydResult(part, it, history, K0 - part.size)
    raise ConvergenceError(f"Lloyd iteration did not settle in {max_iter} steps")


@lru_cache(maxsize=None)
def bell_number(k: int) -> int:
    """Bell number via the Bell triangle."""
    if k < 0:
        raise ValueError("negative size")
    row = [1]
    for _ in range(k):
        nxt = [row[-1]]
        for x in row:
            nxt.append(nxt[-1] + x)
        row = nxt
    return row[0]


def _check_ceiling(count, max_count):
    if count < 1:
        raise ValueError("need at least one contingency")
    if count > max_count:
        raise CeilingError(
            f"{count} contingencies exceed the exhaustive ceiling of {max_count} "
            f"(Bell({count}) = {bell_number(count)} partitions)"
        )


@lru_cache(maxsize=16)
def _label_table(count: int) -> np.ndarray:
    rows = np.zeros((1, 1), dtype=np.int8)
    top = np.zeros(1, dtype=np.int8)  # largest label used so far, per row
    for _ in range(1, count):
        reps = top.astype(np.int64) + 2
        rows = np.repeat(rows, reps, axis=0)
        parent_top = np.repeat(top, reps)
        starts = np.cumsum(reps) - reps
        new = (np.arange(rows.shape[0]) - np.repeat(starts, reps)).astype(np.int8)
        rows = np.concatenate([rows, new[:, None]], axis=1)
        top = np.maximum(parent_top, new)
    rows.setflags(write=False)
    return rows


def partition_labels(count: int, max_count: int = MAX_CONTINGENCIES) -> np.ndarray:
    """Every set partition of ``count`` items as rows of a label table.

    Rows are restricted growth strings in lexicographic order.
    """
    _check_ceiling(count, max_count)
    return _label_table(count)


def enumerate_partitions(count: int, max_count: int = MAX_CONTINGENCIES):
    """Yield each set partition exactly once, in restricted-growth order."""
    _check_ceiling(count, max_count)
    a = [0] * count
    top = [0] * count  # top[i] = max(a[:i+1])
    while True:
        yield Partition(tuple(a))
        i = count - 1
        while i > 0 and a[i] > top[i - 1]:
            i -= 1
        if i == 0:
            return
        a[i] += 1
        top[i] = max(top[i - 1], a[i])
        for j in range(i + 1, count):
            a[j] = 0
            top[j] = top[i]


CHUNK = 1 << 16


def _beliefs_table(labels, sigma, p):
    P, m = labels.shape
    cellvals = np.zeros((P, m))
    ps = p * sigma
    for k in range(m):
        mask = (labels == k).astype(float)
        cnt = mask.sum(1)
        if not cnt.any():
            break
        mass = mask @ p
        wsum = mask @ ps
        usum = mask @ sigma
        with np.errstate(invalid="ignore", divide="ignore"):
            cellvals[:, k] = np.where(mass > 0, wsum / mass, usum / cnt)
    return np.take_along_axis(cellvals, labels.astype(np.intp), axis=1)


def objective_values(labels, sigma, p, c, monotone_tol=None):
    """Objective of every row of ``labels``; optionally also monotonicity flags.

    Returns ``V`` (and, when ``monotone_tol`` is given, a boolean array telling
    which partitions induce beliefs weakly decreasing in the state).
    """
    sigma, p = _flat(sigma), _flat(p)
    P = labels.shape[0]
    V = np.empty(P)
    mono = np.empty(P, dtype=bool) if monotone_tol is not None else None
    for lo in range(0, P, CHUNK):
        block = labels[lo:lo + CHUNK]
        sighat = _beliefs_table(block, sigma, p)
        V[lo:lo + CHUNK] = c * (block.max(1) + 1) + ((sighat - sigma) ** 2) @ p
        if mono is not None:
            s = sighat.reshape(block.shape[0], -1, 2)
            mono[lo:lo + CHUNK] = np.all(s[:, :-1] - s[:, 1:] >= -monotone_tol, axis=(1, 2))
    return V if mono is None else (V, mono)


def ml_optimal_partitions(sigma, theta, c, tol=V_TOL, max_count=MAX_CONTINGENCIES, monotone=False):
    """All partitions attaining the minimal objective (within ``tol``).

    With ``monotone`` the minimum is taken over partitions whose beliefs are
    weakly decreasing in the payoff state. Returns ``(partitions, v_min)``.
    """
    p = ergodic_distribution(sigma, theta).ravel()
    sigma = _flat(sigma)
    labels = partition_labels(sigma.size, max_count)
    if monotone:
        V, mono = objective_values(labels, sigma, p, c, monotone_tol=tol)
        V = np.where(mono, V, np.inf)
    else:
        V = objective_values(labels, sigma, p, c)
    vmin = float(V.min())
    rows = np.flatnonzero(V <= vmin + tol)
    return [Partition(tuple(labels[r].tolist())) for r in rows], vmin


@dataclass
class LocalSearchResult:
    partition: Partition
    v: float
    starts: int
    exhaustive: bool = False  # always False; the global minimum is not certified


def _descend(part, sigma, p, c):
    v = objective_v(part, sigma, p, c)
    while True:
        moves = [part.merged(a, b) for a, b in combinations(range(part.size), 2)]
        moves += [part.moved(i, k) for i in np.flatnonzero(p > 0) for k in range(part.size + 1) if k != part.labels[i]]
        for trial in moves:
            tv = objective_v(trial, sigma, p, c)
            if tv < v - V_TOL:
                part, v = trial, tv
                break
        else:
            return part, v


def local_search_partition(sigma, theta, c, restarts=20, seed=0, max_iter=1000) -> LocalSearchResult:
    """Heuristic minimizer of the objective for contingency spaces above the ceiling.

    Lloyd runs from random starts at every cell count, each followed by
    first-improvement descent over merges and single-contingency moves. Null contingencies
    are then moved to their nearest cell, which leaves the objective
    unchanged. Not exhaustive: the result is an upper bound on the minimum.
    """
    p = ergodic_distribution(sigma, theta).ravel()
    sigma = _flat(sigma)
    m = sigma.size
    rng = np.random.default_rng(seed)
    best, best_v, starts = None, np.inf, 0
    for K in range(1, m + 1):
        for _ in range(restarts if 1 < K < m else 1):
            init = Partition(tuple(rng.permutation(np.arange(m) % K).tolist()))
            part = lloyd_iteration(sigma, p, init, max_iter).partition
            part, v = _descend(part, sigma, p, c)
            starts += 1
            if v < best_v - V_TOL:
                best, best_v = part, v
    values = representative_strategies(best, sigma, p).values
    labels = list(best.labels)
    for i in np.flatnonzero(p <= 0):
        labels[i] = int(np.argmin(np.abs(values - sigma[i])))
    best = Partition(tuple(labels))
    return LocalSearchResult(best, objective_v(best, sigma, p, c), starts)
