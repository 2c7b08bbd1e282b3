"""The dynamic trust game with one-period recall.

Contingencies ``(theta_k, h)`` are laid out flat as ``2 * k + h``, so a
strategy stored as an ``(n, 2)`` array and its ``ravel()`` agree on indexing.
Strategies and ergodic distributions are plain float arrays of shape
``(n, 2)``; column ``h`` holds the value at observed history ``h``.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from numbers import Rational

import numpy as np

__all__ = [
    "StateSpace",
    "Contingency",
    "make_strategy",
    "payoff",
    "ergodic_distribution",
    "best_replies",
    "simulate_trajectory",
    "overall_cooperation_rate",
    "cooperation_rates",
    "stationarity_residual",
    "format_rational",
]

DEFAULT_EPS = 1e-9


def _as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, Rational):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    if isinstance(value, (float, np.floating)):
        # shortest round-tripping decimal: 0.3 stays 3/10, not the binary expansion
        return Fraction(repr(float(value)))
    raise TypeError(f"cannot interpret {value!r} as a payoff state")


def format_rational(x) -> str:
    """Decimal string when ``x`` terminates in base ten, else ``num/den``; floats get 12 digits."""
    if isinstance(x, Fraction):
        d = x.denominator
        for f in (2, 5):
            while d % f == 0:
                d //= f
        if d == 1:
            return format(Decimal(x.numerator) / Decimal(x.denominator), "f")
        return f"{x.numerator}/{x.denominator}"
    return f"{x:.12g}"


@dataclass(frozen=True)
class StateSpace:
    """Ordered payoff states ``theta_1 < ... < theta_n`` in (0, 1).

    Each state carries probability ``1/n``. States are held as exact
    fractions; ``values`` gives the double-precision view used in numerics.
    """

    states: tuple

    def __post_init__(self):
        states = tuple(_as_fraction(s) for s in self.states)
        if not states:
            raise ValueError("state space must contain at least one state")
        for s in states:
            if not 0 < s < 1:
                raise ValueError(f"state {s} is not in the open interval (0, 1)")
        for a, b in zip(states, states[1:]):
            if not a < b:
                raise ValueError("states must be strictly increasing without duplicates")
        object.__setattr__(self, "states", states)

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def values(self) -> np.ndarray:
        return np.array([float(s) for s in self.states])

    @property
    def contingency_count(self) -> int:
        return 2 * self.n

    def contingencies(self):
        return [Contingency(k, h) for k in range(self.n) for h in (0, 1)]

    def __len__(self):
        return self.n


@dataclass(frozen=True, order=True)
class Contingency:
    state_index: int
    history: int

    def __post_init__(self):
        if self.history not in (0, 1):
            raise ValueError("history must be 0 or 1")

    @property
    def flat(self) -> int:
        return 2 * self.state_index + self.history

    @classmethod
    def from_flat(cls, i: int) -> "Contingency":
        return cls(i // 2, i % 2)

    def __str__(self):
        return f"{self.state_index},{self.history}"


def make_strategy(values, n: int | None = None) -> np.ndarray:
    """Validate and return a strategy array of shape ``(n, 2)``.

    Accepts anything convertible to a float array with ``2n`` entries,
    either flat or already shaped.
    """
    sigma = np.array(values, dtype=float)
    if sigma.ndim == 1:
        if sigma.size % 2:
            raise ValueError("a strategy needs two entries per state")
        sigma = sigma.reshape(-1, 2)
    if sigma.ndim != 2 or sigma.shape[1] != 2:
        raise ValueError(f"strategy has shape {sigma.shape}, expected (n, 2)")
    if n is not None and sigma.shape[0] != n:
        raise ValueError(f"strategy covers {sigma.shape[0]} states, expected {n}")
    if not np.all(np.isfinite(sigma)) or np.any(sigma < 0) or np.any(sigma > 1):
        raise ValueError("strategy probabilities must lie in [0, 1]")
    return sigma


def payoff(a_t: int, a_next: int, theta: float) -> float:
    """Player t's payoff ``a_{t+1} - theta * a_t``."""
    if a_t not in (0, 1) or a_next not in (0, 1):
        raise ValueError("actions are 0 or 1")
    return a_next - float(theta) * a_t


def ergodic_distribution(sigma, theta: StateSpace) -> np.ndarray:
    """Long-run probability of every contingency under ``sigma``.

    Returns an ``(n, 2)`` array with rows summing to ``1/n``. When the
    per-state chain is not ergodic (``sigma(theta,0) = 0`` and
    ``sigma(theta,1) = 1``) the mass is split evenly.
    """
    n = theta.n
    sigma = make_strategy(sigma, n)
    s0, s1 = sigma[:, 0], sigma[:, 1]
    p = np.empty_like(sigma)
    ill = (s0 == 0) & (s1 == 1)
    denom = n * np.where(ill, 1.0, s0 + (1.0 - s1))
    # both masses from the closed form so that sigma1 == 1 gives an exactly null (theta, 0)
    p[:, 1] = np.where(ill, 0.5 / n, s0 / denom)
    p[:, 0] = np.where(ill, 0.5 / n, (1.0 - s1) / denom)
    return p


def stationarity_residual(sigma, p) -> np.ndarray:
    """Per-state residual of ``p1 = p0*sigma0 + p1*sigma1``."""
    sigma = np.asarray(sigma, dtype=float).reshape(-1, 2)
    p = np.asarray(p, dtype=float).reshape(-1, 2)
    return p[:, 1] - (p[:, 0] * sigma[:, 0] + p[:, 1] * sigma[:, 1])


def best_replies(belief_1: float, belief_0: float, theta: float, eps: float = DEFAULT_EPS) -> frozenset:
    """Actions that are best replies given beliefs about the successor.

    ``belief_h`` is the believed probability that the successor trusts after
    observing ``h``; trusting pays off iff the belief gap reaches ``theta``.
    """
    gap = belief_1 - belief_0 - float(theta)
    if gap > eps:
        return frozenset({1})
    if gap < -eps:
        return frozenset({0})
    return frozenset({0, 1})


def simulate_trajectory(sigma, state_index: int, initial_action: int, T: int, seed: int) -> np.ndarray:
    """Sample actions ``a_1..a_T`` of the per-state Markov chain.

    ``initial_action`` is the dummy player's action ``a_0``. The model does
    not pin down its distribution, so the caller fixes it.
    """
    if T < 1:
        raise ValueError("horizon must be at least 1")
    if initial_action not in (0, 1):
        raise ValueError("initial action is 0 or 1")
    sigma = np.asarray(sigma, dtype=float).reshape(-1, 2)
    s0, s1 = float(sigma[state_index, 0]), float(sigma[state_index, 1])
    u = np.random.default_rng(seed).random(T)
    go0 = (u < s0).tolist()
    go1 = (u < s1).tolist()
    out = bytearray(T)
    a = initial_action
    for t in range(T):
        a = go1[t] if a else go0[t]
        out[t] = a
    return np.frombuffer(bytes(out), dtype=np.uint8).astype(np.int8)


def cooperation_rates(p) -> np.ndarray:
    """Per-state ``p(theta, 1)``."""
    return np.asarray(p, dtype=float).reshape(-1, 2)[:, 1].copy()


def overall_cooperation_rate(p) -> float:
    return float(np.sum(cooperation_rates(p)))
