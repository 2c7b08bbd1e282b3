"""Complexity cost read as sampling noise, single payoff state.

Each history ``h`` yields a noisy reading ``x(h) = sigma(h) + e(h)`` of the
true trust probability, with ``e(h)`` mean zero and variance ``v / p(h)``:
rarer contingencies are observed less often and so estimated worse. The
fine partition estimates each history separately; the coarse one pools the
two readings with weights ``p(h)``. Comparing expected prediction errors
reproduces the merge inequality with ``c = v``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UndefinedModelError
from .partitions import V_TOL

__all__ = [
    "NoisyObservationModel",
    "expected_mspe_fine",
    "expected_mspe_coarse",
    "fine_partition_preferred",
    "preferred_partition",
    "MonteCarloEstimate",
    "monte_carlo_mspe",
]

MIN_SAMPLES = 10_000


@dataclass(frozen=True)
class NoisyObservationModel:
    sigma0: float
    sigma1: float
    v: float

    def __post_init__(self):
        for name in ("sigma0", "sigma1"):
            x = getattr(self, name)
            if not 0.0 <= x <= 1.0:
                raise ValueError(f"{name}={x} is not a probability")
        # v = 0 is the noiseless limit and is allowed
        if not (np.isfinite(self.v) and self.v >= 0):
            raise ValueError("noise variance must be nonnegative")
        if self.sigma0 == 0 and self.sigma1 == 1:
            raise UndefinedModelError("ill-defined kernel: both histories are absorbing")
        p0, p1 = self.p
        if p0 <= 0 or p1 <= 0:
            raise UndefinedModelError(f"history {0 if p0 <= 0 else 1} is never observed")

    @property
    def p(self):
        """Long-run frequencies ``(p(0), p(1))``."""
        denom = self.sigma0 + (1.0 - self.sigma1)
        return (1.0 - self.sigma1) / denom, self.sigma0 / denom

    @property
    def gap(self):
        return self.sigma1 - self.sigma0


def expected_mspe_fine(model: NoisyObservationModel) -> float:
    # sum_h p(h) * v / p(h)
    return 2.0 * model.v


def expected_mspe_coarse(model: NoisyObservationModel) -> float:
    p0, p1 = model.p
    return p0 * p1 * model.gap**2 + model.v


def fine_partition_preferred(model: NoisyObservationModel, tol=V_TOL) -> bool:
    """Whether the fine partition has expected error no larger than the coarse one."""
    return expected_mspe_fine(model) <= expected_mspe_coarse(model) + tol


def preferred_partition(model: NoisyObservationModel, tol=V_TOL) -> str:
    """``"fine"``, ``"coarse"`` or ``"indifferent"`` (errors within ``tol``)."""
    d = expected_mspe_coarse(model) - expected_mspe_fine(model)
    if abs(d) <= tol:
        return "indifferent"
    return "fine" if d > 0 else "coarse"


@dataclass(frozen=True)
class MonteCarloEstimate:
    mean: float
    stderr: float
    samples: int
    closed_form: float

    @property
    def z(self) -> float:
        if self.stderr == 0:
            return 0.0 if self.mean == self.closed_form else float("inf")
        return (self.mean - self.closed_form) / self.stderr


def monte_carlo_mspe(model: NoisyObservationModel, partition: str, samples: int, seed: int, batches: int = 16):
    """Simulated expected prediction error of the fine or coarse estimator.

    Noise is Gaussian. Samples are split into batches with independent
    child seeds, so the result depends only on ``seed`` and ``samples``.
    """
    if partition not in ("fine", "coarse"):
        raise ValueError("partition must be 'fine' or 'coarse'")
    if samples < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples")
    p = np.array(model.p)
    sigma = np.array([model.sigma0, model.sigma1])
    scale = np.sqrt(model.v / p)
    sizes = [samples // batches + (i < samples % batches) for i in range(batches)]
    total = total_sq = 0.0
    for size, child in zip(sizes, np.random.SeedSequence(seed).spawn(batches)):
        x = sigma + np.random.default_rng(child).standard_normal((size, 2)) * scale
        est = x if partition == "fine" else np.repeat(x @ p, 2).reshape(-1, 2)
        err = ((est - sigma) ** 2) @ p
        total += err.sum()
        total_sq += (err**2).sum()
    mean = total / samples
    var = max(total_sq / samples - mean**2, 0.0) * samples / (samples - 1)
    closed = expected_mspe_fine(model) if partition == "fine" else expected_mspe_coarse(model)
    return MonteCarloEstimate(float(mean), float(np.sqrt(var / samples)), samples, closed)
