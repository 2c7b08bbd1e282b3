"""Two-stage equilibrium search: coarse strategy grid, then exact refinement.

Stage one scores every grid strategy against every partition in one
vectorized pass, keeps the (strategy, partition) pairs where the partition
is objective-minimizing and best replies hold up to a coarse indifference
tolerance. Stage two holds each surviving partition fixed, moves the
interior probabilities of mixing states onto the indifference manifold by
Newton steps (minimum-norm, since the system is underdetermined), and
re-verifies the result at the exact tolerance.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .equilibrium import EquilibriumCandidate, verify_all, verify_mleq
from .errors import BudgetError
from .partitions import MAX_CONTINGENCIES, Partition, partition_labels, representative_strategies
from .trust_game import DEFAULT_EPS, StateSpace, ergodic_distribution

__all__ = ["GridSearchResult", "Approximate", "grid_search", "refine_indifference", "MAX_GRID", "DEFAULT_BUDGET"]

MAX_GRID = 50
DEFAULT_BUDGET = 50_000_000  # strategy-partition pairs scored in stage one
ROOT_TOL = 1e-10


@dataclass(frozen=True)
class Approximate:
    sigma: tuple
    partition: Partition
    reason: str


@dataclass
class GridSearchResult:
    theta: StateSpace
    c: float
    grid: int
    monotone: bool
    equilibria: list = field(default_factory=list)  # (candidate, verdict)
    approximate: list = field(default_factory=list)
    grid_points: int = 0
    survivors: int = 0

    def strong(self):
        return [(cand, v) for cand, v in self.equilibria if v.is_smleq]

    def candidates(self):
        return [cand for cand, _ in self.equilibria]


def _thread_count():
    try:
        return max(1, int(os.environ.get("MLTRUST_THREADS", "1")))
    except ValueError:
        return 1


def _ergodic_batch(sig, n):
    s0, s1 = sig[:, 0::2], sig[:, 1::2]
    ill = (s0 == 0) & (s1 == 1)
    denom = n * np.where(ill, 1.0, s0 + (1.0 - s1))
    p = np.empty_like(sig)
    p[:, 1::2] = np.where(ill, 0.5 / n, s0 / denom)
    p[:, 0::2] = np.where(ill, 0.5 / n, (1.0 - s1) / denom)
    return p


def _scan_chunk(sig, labels, onehot, sizes, theta_vals, c, eps_indiff, tol, monotone):
    """Stage one on a block of grid strategies; returns survivor (row, partition) pairs."""
    S, m = sig.shape
    n = m // 2
    p = _ergodic_batch(sig, n)
    mass = np.einsum("pkm,sm->spk", onehot, p)
    wsum = np.einsum("pkm,sm->spk", onehot, p * sig)
    usum = np.einsum("pkm,sm->spk", onehot, sig)
    cnt = onehot.sum(-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cellval = np.where(mass > 0, wsum / mass, usum / cnt)
    P = labels.shape[0]
    per = cellval[:, np.arange(P)[:, None], labels]  # (S, P, m)
    err = np.einsum("spm,sm->sp", (per - sig[:, None, :]) ** 2, p)
    V = c * sizes[None, :] + err
    if monotone:
        b = per.reshape(S, P, n, 2)
        ok_mono = np.all(b[:, :, :-1] - b[:, :, 1:] >= -tol, axis=(2, 3))
        V = np.where(ok_mono, V, np.inf)
    optimal = V <= V.min(axis=1, keepdims=True) + tol
    gap = per[:, :, 1::2] - per[:, :, 0::2]
    s2 = sig.reshape(S, n, 2)
    plays1 = np.any(s2 > 0, axis=2)[:, None, :]
    plays0 = np.any(s2 < 1, axis=2)[:, None, :]
    th = theta_vals[None, None, :]
    replies = np.all((~plays1 | (gap >= th - eps_indiff)) & (~plays0 | (gap <= th + eps_indiff)), axis=2)
    return np.argwhere(optimal & replies)


def _gap_residual(sigma, theta, partition, mixing):
    p = ergodic_distribution(sigma, theta)
    b = representative_strategies(partition, sigma, p).per_contingency.reshape(-1, 2)
    return (b[:, 1] - b[:, 0] - theta.values)[mixing]


def refine_indifference(sigma, theta: StateSpace, partition: Partition, tol=ROOT_TOL, max_iter=60):
    """Move a strategy onto the indifference manifold with the partition held fixed.

    States that play both actions must have belief gap equal to the state;
    the interior probabilities of those states are the unknowns. Returns
    ``(sigma, residual)``; the residual is the max-norm of the gap error and
    exceeds ``tol`` when refinement failed.
    """
    sigma = np.array(sigma, dtype=float).reshape(-1, 2)
    mixing = ~(np.all(sigma == 0, axis=1) | np.all(sigma == 1, axis=1))
    if not mixing.any():
        return sigma, 0.0
    free = np.argwhere(mixing[:, None] & (sigma > 0) & (sigma < 1))
    r = _gap_residual(sigma, theta, partition, mixing)
    res = float(np.max(np.abs(r)))
    if free.size == 0:
        return sigma, res
    h = 1e-7
    for _ in range(max_iter):
        if res <= tol * 1e-3:
            break
        J = np.empty((r.size, len(free)))
        for j, (k, a) in enumerate(free):
            up, dn = sigma.copy(), sigma.copy()
            up[k, a] = min(1.0, sigma[k, a] + h)
            dn[k, a] = max(0.0, sigma[k, a] - h)
            J[:, j] = (_gap_residual(up, theta, partition, mixing) - _gap_residual(dn, theta, partition, mixing)) / (
                up[k, a] - dn[k, a]
            )
        step = np.linalg.lstsq(J, -r, rcond=None)[0]
        trial = sigma.copy()
        trial[free[:, 0], free[:, 1]] = np.clip(sigma[free[:, 0], free[:, 1]] + step, 0.0, 1.0)
        r_new = _gap_residual(trial, theta, partition, mixing)
        res_new = float(np.max(np.abs(r_new)))
        if not np.isfinite(res_new) or res_new >= res:
            break
        sigma, r, res = trial, r_new, res_new
    return sigma, res


def grid_search(
    theta: StateSpace,
    c: float,
    grid: int = 10,
    eps_indiff: float | None = None,
    eps: float = DEFAULT_EPS,
    monotone: bool = False,
    refine: bool = True,
    max_count: int = MAX_CONTINGENCIES,
    budget: int = DEFAULT_BUDGET,
    workers: int | None = None,
) -> GridSearchResult:
    """Search ``{0, 1/G, ..., 1}^{2n}`` for ML equilibria.

    ``eps_indiff`` (default ``1/G``) is the coarse indifference tolerance used
    to pick survivors; everything returned in ``equilibria`` has been
    re-verified at ``eps``. With ``monotone`` the target concept is monotone
    MLEQ. Survivors that cannot be refined or fail re-verification are listed
    in ``approximate``.
    """
    if not 1 <= grid <= MAX_GRID:
        raise BudgetError(f"grid resolution {grid} outside 1..{MAX_GRID}")
    m = theta.contingency_count
    labels = partition_labels(m, max_count).astype(np.intp)
    P = labels.shape[0]
    total = (grid + 1) ** m
    if total * P > budget:
        raise BudgetError(f"{total} grid strategies x {P} partitions exceeds the budget of {budget}")
    if eps_indiff is None:
        eps_indiff = 1.0 / grid
    onehot = (labels[:, None, :] == np.arange(m)[None, :, None]).astype(float)
    sizes = labels.max(1) + 1.0
    theta_vals = theta.values
    axis = np.arange(grid + 1) / grid
    points = np.array(list(product(axis, repeat=m)))

    chunk = max(1, 2_000_000 // (P * m))
    blocks = [points[lo:lo + chunk] for lo in range(0, total, chunk)]

    def scan(block):
        return _scan_chunk(block, labels, onehot, sizes, theta_vals, c, eps_indiff, eps, monotone)

    workers = workers or _thread_count()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            hits = list(pool.map(scan, blocks))
    else:
        hits = [scan(b) for b in blocks]

    result = GridSearchResult(theta, c, grid, monotone, grid_points=total)
    seen = {}
    approx = {}
    for bi, pairs in enumerate(hits):
        for s, q in pairs:
            result.survivors += 1
            sigma0 = blocks[bi][s].reshape(-1, 2)
            part = Partition(tuple(labels[q].tolist()))
            if refine:
                sigma, res = refine_indifference(sigma0, theta, part)
            else:
                sigma, res = sigma0, 0.0
            if res > ROOT_TOL:
                approx.setdefault((tuple(sigma0.ravel()), part.labels), Approximate(tuple(sigma0.ravel()), part, f"refinement residual {res:.3g}"))
                continue
            cand = EquilibriumCandidate(theta, sigma, part, c, origin=f"grid{grid}")
            key = cand.key()
            if key in seen:
                continue
            verdict = verify_all(cand, eps, max_count) if monotone else verify_mleq(cand, eps, max_count)
            ok = verdict.is_monotone_mleq if monotone else verdict.is_mleq
            seen[key] = (cand, verdict) if ok else None
            if not ok:
                concept = "monotone" if monotone else "mleq"
                reason = ", ".join(sorted({f.condition for f in verdict.failures_for(concept)}))
                approx.setdefault((tuple(sigma0.ravel()), part.labels), Approximate(tuple(sigma0.ravel()), part, reason))
    result.equilibria = sorted((v for v in seen.values() if v is not None), key=lambda cv: cv[0].key())
    result.approximate = [approx[k] for k in sorted(approx)]
    return result
