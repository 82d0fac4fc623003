"""Seeded reward generation and instance construction."""
from __future__ import annotations

import zlib
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import BanditInstance, InfeasibleLambdaError, NoiseModel, compute_lambda

GRID = np.round(np.arange(21) * 0.05, 2)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SeedSpec:
    """Reproducible per-trial RNG substream.

    Substreams are derived through ``SeedSequence`` spawn keys, so adding
    trials or policies never shifts the streams of existing ones.
    """

    master_seed: int
    trial_index: int
    stream: tuple[int, ...] = ()

    def rng(self) -> np.random.Generator:
        ss = np.random.SeedSequence(
            self.master_seed, spawn_key=(self.trial_index, *self.stream)
        )
        return np.random.Generator(np.random.PCG64(ss))


def stream_key(label: str) -> int:
    """Stable integer id for a named substream (e.g. a policy label)."""
    return zlib.crc32(label.encode("utf-8"))


def tripeak_instance(K: int, variance: float = 0.1) -> BanditInstance:
    """The three-objective synthetic instance with lex-optimal arm 0.6K.

    Arm ``a`` (1-based in the formulas, row ``a - 1`` here) has
    mu_1 = 1 - min_p |a/K - p| for p in {0.3, 0.6, 0.9},
    mu_2 = 1 - 2 min_p |a/K - p| for p in {0.5, 0.8},
    mu_3 = 1 - 2 |a/K - 0.5|.
    Means are evaluated in exact rational arithmetic and rounded once, so
    arms that tie mathematically tie bit-for-bit.
    """
    if K < 10 or K % 10:
        raise ConfigError(f"K must be a positive multiple of 10, got {K}")
    rows = []
    for a in range(1, K + 1):
        x = Fraction(a, K)
        mu1 = 1 - min(abs(x - Fraction(p, 10)) for p in (3, 6, 9))
        mu2 = 1 - 2 * min(abs(x - Fraction(p, 10)) for p in (5, 8))
        mu3 = 1 - 2 * abs(x - Fraction(1, 2))
        rows.append([float(mu1), float(mu2), float(mu3)])
    return BanditInstance(np.array(rows), NoiseModel(variance))


def sample_reward(instance: BanditInstance, a: int, rng: np.random.Generator) -> np.ndarray:
    """One reward vector for arm ``a``; consumes exactly m standard normals."""
    z = rng.standard_normal(instance.m)
    return instance.means[a] + instance.noise.sigma * z


def random_instance(
    K: int,
    m: int,
    rng: np.random.Generator,
    ties: str = "grid",
    variance: float = 0.1,
) -> BanditInstance:
    """Random instance with means on the grid {0, 0.05, ..., 1}.

    ``ties="grid"`` lets exact ties occur naturally; ``ties="none"`` rejects
    draws until all K*m means are distinct (requires K*m <= 21).
    """
    if K < 2 or m < 1:
        raise ConfigError("need K >= 2 and m >= 1")
    if ties not in ("grid", "none"):
        raise ConfigError(f"unknown tie structure {ties!r}")
    if ties == "none" and K * m > GRID.size:
        raise ConfigError("not enough grid points for all-distinct means")
    while True:
        if ties == "none":
            means = rng.choice(GRID, size=K * m, replace=False).reshape(K, m)
        else:
            means = rng.choice(GRID, size=(K, m))
        inst = BanditInstance(means, NoiseModel(variance))
        try:
            compute_lambda(inst)
        except InfeasibleLambdaError:
            continue
        return inst
