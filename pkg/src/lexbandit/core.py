"""Ground-truth instances and lexicographic order machinery.

Arms and objectives are 0-indexed everywhere in code. Objective 0 has the
highest priority. Means are stored exactly as given; every comparison that
decides membership in an optimal set uses exact float equality, so instance
builders are expected to produce intentional ties bit-for-bit.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np


class DimensionError(ValueError):
    """Raised when vectors or matrices have incompatible shapes."""


class InfeasibleLambdaError(ValueError):
    """Raised when no finite trade-off parameter fits the instance."""


@dataclass(frozen=True)
class NoiseModel:
    """Per-objective additive Gaussian noise shared by all arms."""

    variance: float = 0.1
    kind: str = "gaussian"

    def __post_init__(self):
        if self.kind != "gaussian":
            raise ValueError(f"unsupported noise kind {self.kind!r}")
        if not self.variance > 0:
            raise ValueError("noise variance must be positive")

    @property
    def sigma(self) -> float:
        return float(np.sqrt(self.variance))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "variance": self.variance}

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseModel":
        return cls(variance=float(d.get("variance", 0.1)), kind=d.get("kind", "gaussian"))


@dataclass(frozen=True, eq=False)
class BanditInstance:
    """K arms by m objectives of true means in [0, 1], plus a noise model."""

    means: np.ndarray
    noise: NoiseModel = field(default_factory=NoiseModel)

    def __post_init__(self):
        means = np.array(self.means, dtype=np.float64)
        if means.ndim != 2:
            raise DimensionError("means must be a K x m matrix")
        if means.shape[0] < 1 or means.shape[1] < 1:
            raise DimensionError("need at least one arm and one objective")
        if np.any(means < 0.0) or np.any(means > 1.0) or not np.all(np.isfinite(means)):
            raise ValueError("means must lie in [0, 1]")
        means.setflags(write=False)
        object.__setattr__(self, "means", means)

    @property
    def K(self) -> int:
        return self.means.shape[0]

    @property
    def m(self) -> int:
        return self.means.shape[1]

    def __eq__(self, other):
        if not isinstance(other, BanditInstance):
            return NotImplemented
        return self.noise == other.noise and np.array_equal(self.means, other.means)

    def __hash__(self):
        return hash((self.means.tobytes(), self.means.shape, self.noise))

    def to_dict(self) -> dict[str, Any]:
        return {
            "K": self.K,
            "m": self.m,
            "means": self.means.tolist(),
            "noise": self.noise.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "BanditInstance":
        means = np.asarray(d["means"], dtype=np.float64)
        if means.ndim != 2 or means.shape != (int(d["K"]), int(d["m"])):
            raise DimensionError(
                f"means shape {means.shape} does not match K={d['K']}, m={d['m']}"
            )
        return cls(means, NoiseModel.from_dict(d.get("noise", {})))


def lex_dominates(u: Sequence[float], v: Sequence[float]) -> bool:
    """True iff u beats v at the first coordinate where they differ."""
    if len(u) != len(v):
        raise DimensionError(f"length mismatch: {len(u)} vs {len(v)}")
    for x, y in zip(u, v):
        if x > y:
            return True
        if x < y:
            return False
    return False


def lex_optimal_arm(instance: BanditInstance) -> int:
    """Index of the lex-optimal arm; the lowest index wins full-vector ties."""
    best = 0
    for a in range(1, instance.K):
        if lex_dominates(instance.means[a], instance.means[best]):
            best = a
    return best


def optimal_set_top(instance: BanditInstance, depth: int) -> set[int]:
    """Arms matching the lex-optimal arm on the top ``depth`` objectives.

    ``depth=0`` returns every arm.
    """
    if not 0 <= depth <= instance.m:
        raise IndexError(f"depth {depth} outside [0, {instance.m}]")
    star = instance.means[lex_optimal_arm(instance)]
    match = np.all(instance.means[:, :depth] == star[:depth], axis=1)
    return {int(a) for a in np.flatnonzero(match)}


def optimal_set_single(instance: BanditInstance, objective: int) -> set[int]:
    """Arms at least as good as the lex-optimal arm on one objective alone."""
    if not 0 <= objective < instance.m:
        raise IndexError(f"objective {objective} outside [0, {instance.m})")
    star = instance.means[lex_optimal_arm(instance), objective]
    return {int(a) for a in np.flatnonzero(instance.means[:, objective] >= star)}


def optimal_set_sizes(instance: BanditInstance) -> list[int]:
    """|O*(1)|, ..., |O*(m)|: the prior knowledge LexElim-Out consumes."""
    return [len(optimal_set_top(instance, d)) for d in range(1, instance.m + 1)]


def gap_matrix(instance: BanditInstance) -> np.ndarray:
    """Delta[a, i] = mu_i(a*) - mu_i(a). Column 0 is nonnegative, others sign-free."""
    star = lex_optimal_arm(instance)
    return instance.means[star][None, :] - instance.means


def compute_lambda(instance: BanditInstance) -> float:
    """Smallest lambda >= 0 bounding lower-priority excess by higher-priority deficit.

    For every arm a and objective i >= 1 (0-indexed) the instance must satisfy
    mu_i(a) - mu_i(a*) <= lambda * max_{j<i} (mu_j(a*) - mu_j(a)).
    """
    gaps = gap_matrix(instance)
    excess = -gaps[:, 1:]
    worst_prior = np.maximum.accumulate(gaps, axis=1)[:, :-1]
    positive = excess > 0
    if not positive.any():
        return 0.0
    denom = worst_prior[positive]
    if np.any(denom <= 0):
        raise InfeasibleLambdaError(
            "an arm exceeds the lex-optimal arm on a lower objective without any "
            "higher-priority deficit; the instance is inconsistent"
        )
    return float(np.max(excess[positive] / denom))


def lambda_series(lam: float, i: int) -> float:
    """1 + lam + ... + lam**(i-1)."""
    if i < 1:
        raise ValueError("the series needs at least one term")
    total, term = 0.0, 1.0
    for _ in range(i):
        total += term
        term *= lam
    return total


def elimination_multipliers(lam: float, m: int) -> np.ndarray:
    """Per-objective width multipliers 2 + 4*lam + ... + 4*lam**i used by LexElim-In."""
    out = np.empty(m)
    acc, term = 2.0, 1.0
    for i in range(m):
        if i > 0:
            term *= lam
            acc += 4.0 * term
        out[i] = acc
    return out


@dataclass(frozen=True, eq=False)
class GapProfile:
    gaps: np.ndarray
    lam: float
    lex_optimal: int

    @classmethod
    def of(cls, instance: BanditInstance, lam: float | None = None) -> "GapProfile":
        lam = compute_lambda(instance) if lam is None else float(lam)
        return cls(gap_matrix(instance), lam, lex_optimal_arm(instance))

    def scaled_gap(self, a: int) -> float:
        return scaled_gap(self, a)


def scaled_gap(profile: GapProfile, a: int) -> float:
    """max_i Delta_i(a) / Lambda_i(lambda) over objectives with a positive gap.

    Raises ValueError for arms with no positive gap (the lex-optimal arm and
    its full-vector twins), which have no elimination target.
    """
    row = profile.gaps[a]
    candidates = [
        row[i] / lambda_series(profile.lam, i + 1) for i in range(row.size) if row[i] > 0
    ]
    if not candidates:
        raise ValueError(f"arm {a} has no positive gap; scaled gap undefined")
    return float(max(candidates))
