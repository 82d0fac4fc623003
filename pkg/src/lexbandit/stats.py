"""Running per-arm statistics: incremental means, pull counts, confidence widths."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .core import DimensionError


@dataclass(frozen=True)
class ConfidenceConfig:
    K: int
    m: int
    delta: float

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.K < 1 or self.m < 1:
            raise ValueError("K and m must be positive")


def confidence_width(n: int, cfg: ConfidenceConfig) -> float:
    """sqrt((4/n) * ln(6*K*m*n/delta)); unpulled arms use +inf instead."""
    if n < 1:
        raise ValueError("width is only defined for n >= 1; use +inf for unpulled arms")
    return math.sqrt(4.0 / n * math.log(6 * cfg.K * cfg.m * n / cfg.delta))


def update_mean(means: np.ndarray, pulls: int, reward: np.ndarray) -> np.ndarray:
    """Incremental average (n * mu + r) / (n + 1); the pull count is not touched."""
    reward = np.asarray(reward, dtype=np.float64)
    if reward.shape != means.shape:
        raise DimensionError(f"reward shape {reward.shape} != means shape {means.shape}")
    return (pulls * means + reward) / (pulls + 1)


@dataclass(frozen=True)
class ArmStats:
    """Snapshot of one arm: pull count, empirical means and confidence width."""

    pulls: int
    means: np.ndarray
    width: float


class StatsTable:
    """Mutable statistics for all K arms of one trial."""

    def __init__(self, cfg: ConfidenceConfig):
        self.cfg = cfg
        self.pulls = np.zeros(cfg.K, dtype=np.int64)
        self.means = np.zeros((cfg.K, cfg.m))

    def width(self, a: int) -> float:
        n = int(self.pulls[a])
        return math.inf if n == 0 else confidence_width(n, self.cfg)

    def __getitem__(self, a: int) -> ArmStats:
        return ArmStats(int(self.pulls[a]), self.means[a].copy(), self.width(a))

    def observe(self, a: int, reward) -> None:
        self.means[a] = update_mean(self.means[a], int(self.pulls[a]), reward)
        self.pulls[a] += 1


def most_uncertain_arm(active: Iterable[int], table: StatsTable) -> int:
    """Active arm with the largest width; lowest index on ties (inf beats finite)."""
    best, best_width = -1, -1.0
    for a in sorted(active):
        w = table.width(a)
        if w > best_width:
            best, best_width = a, w
    if best < 0:
        raise RuntimeError("active set is empty")
    return best
