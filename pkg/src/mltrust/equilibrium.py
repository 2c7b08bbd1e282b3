"""ML equilibrium: candidates, verification, and closed-form solvers.

Verification follows the definitions literally. A candidate is an MLEQ
when its partition belongs to the (tolerance-widened) argmin set of the
penalized objective and every action played with positive probability is a
best reply to the cell beliefs. Ties in the objective are accepted, because
the binding cases the theory cares about sit exactly on such ties.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import brentq

from .errors import ConvergenceError
from .partitions import (
    MAX_CONTINGENCIES,
    Partition,
    check_merge_inequality,
    check_optimal_assignment,
    ml_optimal_partitions,
    objective_v,
    representative_strategies,
)
from .trust_game import DEFAULT_EPS, StateSpace, best_replies, ergodic_distribution, make_strategy

__all__ = [
    "EquilibriumCandidate",
    "Failure",
    "Verdict",
    "RegimeWarning",
    "N2Result",
    "verify_mleq",
    "verify_smleq",
    "verify_monotone_mleq",
    "verify_all",
    "reciprocity_violations",
    "zero_trust",
    "nash_benchmark",
    "solve_n1",
    "n1_condition",
    "solve_n2",
    "n2_threshold",
    "n2_regime",
    "two_state_bound_violations",
]

COOP_TOL = 1e-12


class RegimeWarning(UserWarning):
    """Inputs fall outside the parameter region where the n=2 bound is proven."""


@dataclass(frozen=True, eq=False)
class EquilibriumCandidate:
    """A strategy-partition pair together with the complexity cost."""

    theta: StateSpace
    sigma: np.ndarray
    partition: Partition
    c: float
    origin: str = ""

    def __post_init__(self):
        sigma = make_strategy(self.sigma, self.theta.n)
        sigma.setflags(write=False)
        object.__setattr__(self, "sigma", sigma)
        if self.partition.count != self.theta.contingency_count:
            raise ValueError("partition does not cover the contingency space")
        if not self.c > 0:
            raise ValueError("complexity cost must be positive")
        object.__setattr__(self, "c", float(self.c))

    @cached_property
    def p(self) -> np.ndarray:
        return ergodic_distribution(self.sigma, self.theta)

    @cached_property
    def profile(self):
        return representative_strategies(self.partition, self.sigma, self.p)

    @property
    def beliefs(self) -> np.ndarray:
        """Representative strategy at every contingency, shape ``(n, 2)``."""
        return self.profile.per_contingency.reshape(-1, 2)

    def reply_sets(self, eps=DEFAULT_EPS):
        b = self.beliefs
        return [best_replies(b[k, 1], b[k, 0], th, eps) for k, th in enumerate(self.theta.values)]

    @property
    def cooperation_rates(self) -> np.ndarray:
        return self.p[:, 1].copy()

    @property
    def overall_cooperation(self) -> float:
        return float(self.p[:, 1].sum())

    def cooperating_states(self, tol=COOP_TOL) -> int:
        return int(np.sum(self.p[:, 1] > tol))

    @property
    def is_trusting(self) -> bool:
        return self.cooperating_states() > 0

    def key(self, digits=9):
        return (tuple(np.round(self.sigma.ravel(), digits).tolist()), self.partition.labels)


@dataclass(frozen=True)
class Failure:
    condition: str
    location: str
    magnitude: float


@dataclass
class Verdict:
    is_mleq: bool
    is_smleq: bool | None = None
    is_monotone_mleq: bool | None = None
    is_strong_monotone_mleq: bool | None = None
    failures: dict = field(default_factory=dict)  # concept -> list[Failure]
    v: float = math.nan
    v_min: float = math.nan
    v_min_monotone: float = math.nan
    optimal_partitions: int = 0

    def failures_for(self, concept):
        return self.failures.get(concept, [])


def _best_reply_failures(cand, eps):
    out = []
    b = cand.beliefs
    for k, th in enumerate(cand.theta.values):
        gap = b[k, 1] - b[k, 0]
        replies = best_replies(b[k, 1], b[k, 0], th, eps)
        for h in (0, 1):
            s = cand.sigma[k, h]
            if s > 0 and 1 not in replies:
                out.append(Failure("best_reply", f"{k},{h}: trust", float(th - gap)))
            if s < 1 and 0 not in replies:
                out.append(Failure("best_reply", f"{k},{h}: distrust", float(gap - th)))
    return out


def _ml_optimality(cand, eps, max_count):
    parts, vmin = ml_optimal_partitions(cand.sigma, cand.theta, cand.c, tol=eps, max_count=max_count)
    v = objective_v(cand.partition, cand.sigma, cand.p, cand.c)
    fails = []
    if v > vmin + eps:
        merge = check_merge_inequality(cand.partition, cand.sigma, cand.p, cand.c, tol=eps)
        for a, b, _, margin, _, _ in merge.failures:
            fails.append(Failure("merge_inequality", f"cells {a}|{b}", float(margin)))
        fails.append(Failure("ml_optimality", "partition", float(v - vmin)))
    return v, vmin, fails, len(parts)


def verify_mleq(cand: EquilibriumCandidate, eps=DEFAULT_EPS, max_count=MAX_CONTINGENCIES) -> Verdict:
    """ML-optimality of the partition plus best-reply consistency.

    The strong flag is filled in as well since it only adds the assignment
    test on top.
    """
    v, vmin, fails, n_opt = _ml_optimality(cand, eps, max_count)
    fails += _best_reply_failures(cand, eps)
    assign = check_optimal_assignment(cand.partition, cand.sigma, cand.p, cand.profile, strong=True, eps=eps)
    strong_fails = list(fails) + [
        Failure("optimal_assignment", str_contingency(i), own - best) for i, own, best, _ in assign.failures
    ]
    verdict = Verdict(
        is_mleq=not fails,
        is_smleq=not strong_fails,
        failures={"mleq": fails, "smleq": strong_fails},
        v=v,
        v_min=vmin,
        optimal_partitions=n_opt,
    )
    return verdict


def verify_smleq(cand: EquilibriumCandidate, eps=DEFAULT_EPS, max_count=MAX_CONTINGENCIES) -> Verdict:
    return verify_mleq(cand, eps, max_count)


def str_contingency(i):
    return f"{i // 2},{i % 2}"


def verify_monotone_mleq(cand: EquilibriumCandidate, eps=DEFAULT_EPS, max_count=MAX_CONTINGENCIES, verdict=None) -> Verdict:
    """Monotone variant: optimality is taken over monotone partitions only."""
    if verdict is None:
        verdict = Verdict(is_mleq=False)
    fails = []
    b = cand.beliefs
    for k in range(cand.theta.n - 1):
        for h in (0, 1):
            drop = b[k, h] - b[k + 1, h]
            if drop < -eps:
                fails.append(Failure("monotonicity", f"{k},{h} < {k + 1},{h}", float(drop)))
    _, vmin_mono = ml_optimal_partitions(cand.sigma, cand.theta, cand.c, tol=eps, max_count=max_count, monotone=True)
    v = objective_v(cand.partition, cand.sigma, cand.p, cand.c)
    if v > vmin_mono + eps:
        fails.append(Failure("monotone_ml_optimality", "partition", float(v - vmin_mono)))
    fails += _best_reply_failures(cand, eps)
    # null contingencies must sit in a nearest cell, as in the strong concept
    assign = check_optimal_assignment(cand.partition, cand.sigma, cand.p, cand.profile, strong=True, eps=eps)
    strong_fails = fails + [
        Failure("optimal_assignment", str_contingency(i), own - best) for i, own, best, _ in assign.failures
    ]
    verdict.is_monotone_mleq = not fails
    verdict.is_strong_monotone_mleq = not strong_fails
    verdict.failures["monotone"] = fails
    verdict.failures["strong_monotone"] = strong_fails
    verdict.v_min_monotone = vmin_mono
    verdict.v = v
    return verdict


def verify_all(cand, eps=DEFAULT_EPS, max_count=MAX_CONTINGENCIES) -> Verdict:
    return verify_monotone_mleq(cand, eps, max_count, verdict=verify_mleq(cand, eps, max_count))


def reciprocity_violations(cand: EquilibriumCandidate, eps=DEFAULT_EPS):
    """States where trust after trust falls below trust after distrust.

    Checked on both the strategy and the beliefs; strong equilibria have none.
    """
    out = []
    b = cand.beliefs
    for k in range(cand.theta.n):
        ds = cand.sigma[k, 1] - cand.sigma[k, 0]
        db = b[k, 1] - b[k, 0]
        if ds < -eps:
            out.append(Failure("strategy_reciprocity", str(k), float(ds)))
        if db < -eps:
            out.append(Failure("belief_reciprocity", str(k), float(db)))
    return out


def zero_trust(theta: StateSpace, c: float) -> EquilibriumCandidate:
    n = theta.n
    return EquilibriumCandidate(theta, np.zeros((n, 2)), Partition.degenerate(2 * n), c, origin="zero-trust")


def nash_benchmark(theta: StateSpace) -> np.ndarray:
    """Full-cooperation Nash strategy: trust after trust, ``1 - theta`` after distrust."""
    th = theta.values
    return np.column_stack([1.0 - th, np.ones_like(th)])


def n1_condition(sigma1, theta, c=0.0):
    """Margin of the single-state fine-partition condition at ``sigma(theta,1)``.

    Nonnegative exactly when the fine partition stays optimal for the
    indifferent strategy with trust probability ``sigma1`` after trust.
    """
    return (sigma1 - theta) * (1 - sigma1) / (1 - theta) ** 2 * theta**2 - c


def _as_state(theta):
    return theta if isinstance(theta, StateSpace) else StateSpace([theta])


def solve_n1(theta, c, eps=DEFAULT_EPS):
    """Most cooperative trusting MLEQ with a single payoff state, or None.

    The trust probability after trust is the larger root of the binding
    fine-partition condition; a trusting equilibrium exists iff
    ``c <= theta**2 / 4``.
    """
    space = _as_state(theta)
    if space.n != 1:
        raise ValueError("solve_n1 needs exactly one payoff state")
    th = float(space.values[0])
    if not c > 0:
        raise ValueError("complexity cost must be positive")
    ratio = 1.0 - 4.0 * c / th**2
    if ratio < 0:
        return None
    s1 = (1 + th) / 2 + (1 - th) / 2 * math.sqrt(ratio)
    cand = EquilibriumCandidate(space, [[s1 - th, s1]], Partition.finest(2), c, origin="n1")
    return cand


def n2_threshold(c):
    """Smallest ``theta**2`` at which one-state cooperation survives for n=2."""
    r = math.sqrt(c)
    return r / (1 - r)


def n2_regime(theta: StateSpace, c) -> bool:
    """Parameter region where the two-state rate bound is proven."""
    return theta.n == 2 and bool(np.all(theta.values > 0.5)) and 0.125 < c < 0.25


def two_state_bound_violations(cand: EquilibriumCandidate, tol=DEFAULT_EPS):
    """Departures of a strong two-state equilibrium from the proven rate bound.

    Inside the regime a trusting equilibrium uses two cells, trusts in one
    state only, keeps ``p(theta,1) <= theta^2/(1+theta^2)`` there, and needs
    ``theta^2 >= n2_threshold(c)``. Returns an empty list outside the regime.
    """
    if not n2_regime(cand.theta, cand.c) or not cand.is_trusting:
        return []
    out = []
    rates = cand.cooperation_rates
    if cand.cooperating_states() > 1:
        out.append(Failure("two_state_bound", "both states trust", float(rates.min())))
    if cand.partition.size != 2:
        out.append(Failure("two_state_bound", "partition size", float(cand.partition.size)))
    for k, th in enumerate(cand.theta.values):
        if rates[k] <= COOP_TOL:
            continue
        cap = th**2 / (1 + th**2)
        if rates[k] > cap + tol:
            out.append(Failure("two_state_bound", f"rate in state {k}", float(rates[k] - cap)))
        if th**2 < n2_threshold(cand.c) - tol:
            out.append(Failure("two_state_bound", f"trust in state {k} below threshold", float(rates[k])))
    return out


@dataclass
class N2Result:
    theta: StateSpace
    c: float
    candidates: list
    in_regime: bool
    notes: dict = field(default_factory=dict)  # state index -> reason


def _n2_construction(th, p1):
    """Strategy in the cooperating state for a given long-run trust rate.

    The other state never trusts, so its mass 1/2 sits at history 0 and is
    pooled with ``(theta, 0)``; indifference and the ergodic formula then
    pin both trust probabilities linearly.
    """
    p0 = 0.5 - p1
    k = p0 / (0.5 + p0)
    s0 = 2 * p1 * (1 - th) / (1 - 2 * p1 + 2 * p1 * k)
    s1 = th + k * s0
    return p0, s0, s1


def _n2_slack(th, p1):
    # prediction-error gain of moving (theta, 0) next to (theta, 1), minus the loss
    p0, s0, s1 = _n2_construction(th, p1)
    stay = 0.5 * p0 / (0.5 + p0) * s0**2
    move = p0 * p1 / (p0 + p1) * (s1 - s0) ** 2
    return move - stay


def solve_n2(theta_lo, theta_hi, c, eps=DEFAULT_EPS, xtol=1e-10):
    """Two-state candidates with trust confined to one state, at the rate bound.

    For each state the two-cell candidate ``{(other,.), (theta,0)} | {(theta,1)}``
    is solved with the reassignment condition binding. Only candidates that
    verify as strong MLEQ are returned.
    """
    space = StateSpace([theta_lo, theta_hi])
    th_vals = space.values
    in_regime = bool(th_vals[0] > 0.5 and 0.125 < c < 0.25)
    if not in_regime:
        warnings.warn("outside the two-state regime (states > 1/2, 1/8 < c < 1/4)", RegimeWarning, stacklevel=2)
    out = N2Result(space, c, [], in_regime)
    for j, th in enumerate(th_vals):
        if th**2 < n2_threshold(c):
            out.notes[j] = "unsustainable: theta^2 below sqrt(c)/(1-sqrt(c))"
            continue
        lo, hi = 1e-12, 0.5 - 1e-12
        if not _n2_slack(th, lo) > 0 > _n2_slack(th, hi):
            raise ConvergenceError(f"no sign change bracketing the binding rate in state {j}")
        p1, info = brentq(lambda x: _n2_slack(th, x), lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, full_output=True)
        if not info.converged or abs(_n2_slack(th, p1)) > xtol:
            raise ConvergenceError(f"binding rate in state {j} not resolved to {xtol}")
        _, s0, s1 = _n2_construction(th, p1)
        if not (0 <= s0 <= 1 and 0 <= s1 <= 1):
            out.notes[j] = "binding strategy leaves [0, 1]"
            continue
        sigma = np.zeros((2, 2))
        sigma[j] = (s0, s1)
        other = 1 - j
        cells = [[2 * other, 2 * other + 1, 2 * j], [2 * j + 1]]
        cand = EquilibriumCandidate(space, sigma, Partition.from_cells(cells), c, origin=f"n2:state{j}")
        verdict = verify_mleq(cand, eps)
        if verdict.is_smleq:
            out.candidates.append(cand)
        else:
            out.notes[j] = "binding candidate fails verification: " + ", ".join(
                f.condition for f in verdict.failures_for("smleq")
            )
    return out
