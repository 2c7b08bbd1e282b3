"""Numerical counterparts of the cooperation bounds.

Covers the auxiliary max-min problem behind the ``2 c m^3 > 1`` bound,
the predicates of the general bounds with optional falsification searches,
the full-cooperation census, the genericity test on payoff states, and an
empirical probe of the monotone-belief threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations, product

import numpy as np

from .equilibrium import EquilibriumCandidate
from .errors import ConvergenceError
from .gridsearch import grid_search
from .trust_game import StateSpace, _as_fraction, format_rational

__all__ = [
    "inner_maxmin",
    "maxmin_objective",
    "outer_objective",
    "outer_maxmin",
    "OuterResult",
    "maxmin_upper_bound",
    "BoundVerdict",
    "prop2_predicate",
    "prop3_predicate",
    "Census",
    "full_cooperation_census",
    "GenericityResult",
    "genericity_check",
    "ProbeReport",
    "monotone_threshold_probe",
]


def _adjacent_weights(p):
    p = np.asarray(p, dtype=float)
    s = p[:-1] + p[1:]
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.sqrt(np.where(s > 0, p[:-1] * p[1:] / s, 0.0))


def maxmin_objective(p, q) -> float:
    """``min_k A_k^2 q_k^2`` for cell masses ``p`` and adjacent belief gaps ``q``."""
    A = _adjacent_weights(p)
    return float(np.min((A * np.asarray(q, dtype=float)) ** 2))


def inner_maxmin(p):
    """Best gap vector for fixed cell masses.

    The optimum equalizes ``A_k q_k``; returns ``(q, value)`` with value
    ``1 / (sum_k 1/A_k)^2``.
    """
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size < 2:
        raise ValueError("need at least two cells")
    if np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
        raise ValueError("cell masses must form a probability vector")
    A = _adjacent_weights(p)
    if np.any(A == 0):
        raise ValueError("an adjacent pair of cells has zero mass product")
    inv = 1.0 / A
    return inv / inv.sum(), float(1.0 / inv.sum() ** 2)


def outer_objective(p) -> float:
    """``sum_k sqrt(1/p_k + 1/p_{k+1})``; the max-min value is its inverse square."""
    p = np.asarray(p, dtype=float)
    return float(np.sum(np.sqrt(1 / p[:-1] + 1 / p[1:])))


def _grad_hess(p):
    K = p.size
    u = 1 / p[:-1] + 1 / p[1:]
    r = np.sqrt(u)
    g = np.zeros(K)
    H = np.zeros((K, K))
    for k in range(K - 1):
        a, b = p[k], p[k + 1]
        g[k] -= 1 / (2 * a * a * r[k])
        g[k + 1] -= 1 / (2 * b * b * r[k])
        u32 = u[k] * r[k]
        H[k, k] += 1 / (a**3 * r[k]) - 1 / (4 * a**4 * u32)
        H[k + 1, k + 1] += 1 / (b**3 * r[k]) - 1 / (4 * b**4 * u32)
        cross = -1 / (4 * a * a * b * b * u32)
        H[k, k + 1] += cross
        H[k + 1, k] += cross
    return g, H


def _newton_simplex(p, grad_tol, max_iter):
    K = p.size
    f = outer_objective(p)
    for _ in range(max_iter):
        g, H = _grad_hess(p)
        pg = g - g.mean()
        if np.linalg.norm(pg) <= grad_tol:
            return p, f, float(np.linalg.norm(pg))
        kkt = np.zeros((K + 1, K + 1))
        kkt[:K, :K] = H
        kkt[:K, K] = kkt[K, :K] = 1.0
        d = np.linalg.solve(kkt, np.concatenate([-g, [0.0]]))[:K]
        if g @ d >= 0:
            d = -pg
        t = 1.0
        neg = d < 0
        if neg.any():
            t = min(1.0, 0.99 * float(np.min(-p[neg] / d[neg])))
        while t > 1e-16:
            trial = p + t * d
            ft = outer_objective(trial)
            if ft <= f + 1e-4 * t * (g @ d):
                break
            t /= 2
        else:
            return p, f, float(np.linalg.norm(pg))
        p = trial / trial.sum()
        f = outer_objective(p)
    g, _ = _grad_hess(p)
    return p, f, float(np.linalg.norm(g - g.mean()))


@dataclass
class OuterResult:
    K: int
    p: np.ndarray
    value: float
    grad_norm: float
    spread: float  # largest distance between start optima
    starts: list


def outer_maxmin(K, starts=10, seed=0, grad_tol=1e-10, max_iter=200, agree_tol=1e-8):
    """Cell masses maximizing the inner max-min value, by multi-start Newton.

    Each start solves the simplex-constrained problem with Newton's method on
    the KKT system. All optima must agree within ``agree_tol``.
    """
    if not 2 <= K <= 10:
        raise ValueError("K must be between 2 and 10")
    rng = np.random.default_rng(seed)
    inits = [np.full(K, 1.0 / K)] + [rng.dirichlet(np.ones(K)) for _ in range(starts)]
    sols = []
    for p0 in inits:
        p, f, gn = _newton_simplex(np.maximum(p0, 1e-6) / np.maximum(p0, 1e-6).sum(), grad_tol, max_iter)
        if gn > grad_tol:
            raise ConvergenceError(f"K={K}: projected gradient {gn:.3g} above {grad_tol}")
        sols.append(p)
    spread = max(float(np.max(np.abs(s - sols[0]))) for s in sols)
    if spread > agree_tol:
        raise ConvergenceError(f"K={K}: starts disagree by {spread:.3g}")
    best = sols[0]
    g, _ = _grad_hess(best)
    return OuterResult(K, best, 1.0 / outer_objective(best) ** 2, float(np.linalg.norm(g - g.mean())), spread, sols)


def maxmin_upper_bound(K) -> float:
    """Upper bound ``1 / (2 (K-1)^3)`` on the max-min value."""
    return 1.0 / (2 * (K - 1) ** 3)


@dataclass
class BoundVerdict:
    name: str
    holds: bool  # the bound's hypothesis is satisfied
    lhs: float
    rhs: float
    searched: bool = False
    counterexamples: list = field(default_factory=list)

    @property
    def falsified(self) -> bool:
        return bool(self.counterexamples)


def _falsify(theta, c, m, grid):
    res = grid_search(theta, c, grid)
    return [cand for cand, v in res.strong() if cand.cooperating_states() >= m]


def prop2_predicate(c, m, theta: StateSpace | None = None, search=False, grid=10) -> BoundVerdict:
    """Does ``2 c m^3 > 1`` hold? If so and asked, look for an SMLEQ cooperating in ``m`` states."""
    if not c > 0 or m < 1:
        raise ValueError("need c > 0 and m >= 1")
    out = BoundVerdict("2cm^3 > 1", 2 * c * m**3 > 1, 2 * c * m**3, 1.0)
    if search and out.holds and theta is not None and m <= theta.n:
        out.searched = True
        out.counterexamples = _falsify(theta, c, m, grid)
    return out


def prop3_predicate(c, m, theta: StateSpace, search=False, grid=10) -> BoundVerdict:
    """Does ``max(theta) < sqrt(2c/m)`` hold? Optional falsification as above."""
    if not c > 0 or m < 1:
        raise ValueError("need c > 0 and m >= 1")
    top = float(max(theta.values))
    out = BoundVerdict("max(theta) < sqrt(2c/m)", top < math.sqrt(2 * c / m), top, math.sqrt(2 * c / m))
    if search and out.holds and m <= theta.n:
        out.searched = True
        out.counterexamples = _falsify(theta, c, m, grid)
    return out


@dataclass
class Census:
    full_states: list
    fraction: float
    pairings: list = field(default_factory=list)
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def full_cooperation_census(cand: EquilibriumCandidate, tol=1e-9) -> Census:
    """Count fully cooperative states and test the partner-state bounds.

    For each fully cooperative state the cell holding its (null) distrust
    contingency must also hold some positive-mass contingency of another
    state, whose trust rate is then capped away from one. Distinct fully
    cooperative states need distinct such cells. Violations are reported,
    not raised; the candidate is assumed to be a strong MLEQ.
    """
    n = cand.theta.n
    th = cand.theta.values
    p = cand.p
    rate = n * p[:, 1]
    full = [k for k in range(n) if abs(p[k, 1] - 1 / n) <= tol]
    out = Census(full, len(full) / n)
    if out.fraction > 0.5 + 1e-12:
        out.violations.append(f"{len(full)} of {n} states fully cooperate")
    labels = cand.partition.labels
    seen_cells = {}
    for k in full:
        top, low = labels[2 * k + 1], labels[2 * k]
        row = {"state": k, "cell": low, "partners": []}
        if top == low:
            out.violations.append(f"state {k}: trust and distrust contingencies share a cell")
        if low in seen_cells:
            out.violations.append(f"states {seen_cells[low]} and {k} share the distrust cell {low}")
        seen_cells[low] = k
        partners = [i for i in range(2 * n) if labels[i] == low and i // 2 != k and p.ravel()[i] > 0]
        if not partners:
            out.violations.append(f"state {k}: no positive-mass partner in cell {low}")
        for i in partners:
            j, h = divmod(i, 2)
            if h == 1:
                bound = 1 - th[k] / 2
                checked = True
                value = max(rate[j], cand.sigma[j, 1])
            elif rate[j] <= 0:
                bound, value, checked = 1.0, 0.0, True
            elif th[j] < th[k]:
                bound = (2 - th[k] + th[j]) / 2
                value = rate[j]
                checked = True
            else:
                bound, value, checked = math.nan, float(rate[j]), False
            row["partners"].append({"contingency": f"{j},{h}", "rate": float(rate[j]), "bound": bound, "checked": checked})
            if checked and value > bound + tol:
                out.violations.append(f"state {k}: partner {j},{h} has rate {value:.6g} above {bound:.6g}")
        out.pairings.append(row)
    return out


@dataclass
class GenericityResult:
    generic: bool
    witnesses: list

    @property
    def witness(self):
        return self.witnesses[0] if self.witnesses else None


def genericity_check(theta, L=None, tol=1e-12) -> GenericityResult:
    """Check that no signed sum of distinct states vanishes or equals another state.

    Combinations use at most ``L`` states. Exact when the states are
    fractions (always the case for a ``StateSpace``); ``tol`` applies to
    float input only.
    """
    if isinstance(theta, StateSpace):
        states = list(theta.states)
    else:
        states = [s if isinstance(s, (float, np.floating)) else _as_fraction(s) for s in theta]
    exact = all(isinstance(s, Fraction) for s in states)
    n = len(states)
    L = n if L is None else L
    if L > 2 * n:
        raise ValueError("combination length exceeds 2n")

    def same(a, b):
        return a == b if exact else abs(a - b) <= tol

    witnesses = []
    # single states are nonzero and distinct, so combinations start at two
    for size in range(2, min(L, n) + 1):
        for idx in combinations(range(n), size):
            for signs in product((1, -1), repeat=size - 1):
                signs = (1,) + signs
                v = sum(s * states[i] for s, i in zip(signs, idx))
                if v < 0:
                    v, signs = -v, tuple(-s for s in signs)
                ordered = sorted(zip(signs, idx), key=lambda t: -t[0])
                terms = "".join(("+" if s > 0 else "-") + format_rational(states[i]) for s, i in ordered).lstrip("+")
                if same(v, 0):
                    witnesses.append(f"{terms}=0")
                    continue
                for j in range(n):
                    if j not in idx and same(v, states[j]):
                        witnesses.append(f"{terms}={format_rational(states[j])}")
    return GenericityResult(not witnesses, witnesses)


@dataclass
class ProbeReport:
    base: StateSpace
    c: float
    rows: list  # (max_theta, equilibria_found, strongly_assigned_found)
    largest_found: float | None
    smallest_empty: float | None


def monotone_threshold_probe(theta: StateSpace, c, maxima, grid=10) -> ProbeReport:
    """Search for monotone MLEQ with trust in every state as the top state rises.

    The largest state is replaced by each value in ``maxima``; emptiness is
    certified by the exhaustive-partition, grid-plus-refinement search.
    """
    rows = []
    others = list(theta.states[:-1])
    for top in maxima:
        space = StateSpace(others + [top])
        res = grid_search(space, c, grid, monotone=True)
        found = [(cand, v) for cand, v in res.equilibria if cand.cooperating_states() == space.n]
        strong = sum(1 for _, v in found if v.is_strong_monotone_mleq)
        rows.append((float(space.values[-1]), len(found), strong))
    hit = [t for t, k, _ in rows if k]
    miss = [t for t, k, _ in rows if not k]
    return ProbeReport(theta, c, rows, max(hit) if hit else None, min(miss) if miss else None)
