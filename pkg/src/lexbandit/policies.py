"""Step-wise bandit policies: LexElim-Out, LexElim-In and two baselines.

Every policy exposes the same loop::

    a = policy.select_arm()      # choose, and (for LexElim) eliminate
    policy.observe(a, reward)    # incremental mean, pull count, width

Eliminations happen inside ``select_arm`` using the width of the chosen arm
*before* that round's update, then the chosen arm is played even if it was
itself eliminated in the same round.

These classes are the reference implementation. ``lexbandit.simulate`` runs
the same algorithms in compiled kernels and must reproduce them exactly.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import elimination_multipliers
from .stats import ConfidenceConfig, StatsTable, most_uncertain_arm


@dataclass(frozen=True)
class EliminationRecord:
    round: int
    objective: int
    removed: frozenset[int]
    threshold: float

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "objective": self.objective,
            "removed": sorted(self.removed),
            "threshold": self.threshold,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EliminationRecord":
        return cls(int(d["round"]), int(d["objective"]), frozenset(d["removed"]), float(d["threshold"]))


class Policy(ABC):
    name = "policy"

    def __init__(self, K: int, m: int, delta: float):
        self.cfg = ConfidenceConfig(K, m, delta)
        self.stats = StatsTable(self.cfg)
        self._active = list(range(K))
        self.t = 0
        self.eliminations: list[EliminationRecord] = []
        self.anomalies: list[dict] = []

    @property
    def K(self) -> int:
        return self.cfg.K

    @property
    def m(self) -> int:
        return self.cfg.m

    def active_set(self) -> frozenset[int]:
        return frozenset(self._active)

    @abstractmethod
    def select_arm(self) -> int: ...

    def observe(self, a: int, reward) -> None:
        self.stats.observe(a, reward)
        self.t += 1

    def finished(self) -> bool:
        return False

    def recommend(self) -> int:
        return min(self._active)

    def _eliminate(self, objective: int, threshold: float) -> None:
        """Drop active arms whose empirical gap to the best exceeds ``threshold``."""
        mu = self.stats.means[:, objective]
        best = max(mu[a] for a in self._active)
        keep = [a for a in self._active if not best - mu[a] > threshold]
        removed = frozenset(self._active) - frozenset(keep)
        if removed:
            self.eliminations.append(
                EliminationRecord(self.t + 1, objective, removed, threshold)
            )
        self._active = keep


class LexElimOut(Policy):
    """Outer-layer elimination: one objective at a time, in priority order.

    ``optimal_sizes[i]`` is |O*(i+1)|, the number of arms that tie the
    lex-optimal arm on the top i+1 objectives.
    """

    name = "lexelim-out"

    def __init__(self, K: int, m: int, delta: float, optimal_sizes: Sequence[int]):
        super().__init__(K, m, delta)
        if len(optimal_sizes) != m:
            raise ValueError("need one optimal-set size per objective")
        self.optimal_sizes = [int(s) for s in optimal_sizes]
        self.phase = 0
        self.phase_completed = [-1] * m
        self._advance_phase(0)

    def _advance_phase(self, round_no: int) -> None:
        size = len(self._active)
        while self.phase < self.m and size <= self.optimal_sizes[self.phase]:
            if size < self.optimal_sizes[self.phase]:
                self.anomalies.append(
                    {
                        "kind": "over-elimination",
                        "round": round_no,
                        "objective": self.phase,
                        "activeSize": size,
                        "required": self.optimal_sizes[self.phase],
                    }
                )
            self.phase_completed[self.phase] = round_no
            self.phase += 1

    def finished(self) -> bool:
        return self.phase >= self.m

    def select_arm(self) -> int:
        if self.finished():
            return self.recommend()
        a_t = most_uncertain_arm(self._active, self.stats)
        self._eliminate(self.phase, 2.0 * self.stats.width(a_t))
        self._advance_phase(self.t + 1)
        return a_t


class LexElimIn(Policy):
    """Inner-layer elimination: every round filters through all objectives.

    The filter for objective i (0-based) tolerates a gap of
    (2 + 4*lam + ... + 4*lam**i) times the chosen arm's width.
    """

    name = "lexelim-in"

    def __init__(self, K: int, m: int, delta: float, lam: float):
        super().__init__(K, m, delta)
        if lam < 0:
            raise ValueError("lambda must be nonnegative")
        self.lam = float(lam)
        self.multipliers = elimination_multipliers(self.lam, m)
        self.last_filtration: list[frozenset[int]] = []

    def finished(self) -> bool:
        return len(self._active) <= 1

    def select_arm(self) -> int:
        if self.finished():
            return self.recommend()
        a_t = most_uncertain_arm(self._active, self.stats)
        c = self.stats.width(a_t)
        filtration = [frozenset(self._active)]
        for i in range(self.m):
            self._eliminate(i, self.multipliers[i] * c)
            filtration.append(frozenset(self._active))
        if not self._active:
            raise RuntimeError("elimination emptied the active set")
        self.last_filtration = filtration
        return a_t


class UcbBaseline(Policy):
    """Single-objective optimism on objective 0; never eliminates."""

    name = "ucb"

    def select_arm(self) -> int:
        best, best_index = -1, -np.inf
        for a in self._active:
            index = self.stats.means[a, 0] + self.stats.width(a)
            if index > best_index:
                best, best_index = a, index
        return best


class UniformBaseline(Policy):
    """Round-robin control: arm t mod K."""

    name = "uniform"

    def select_arm(self) -> int:
        return self.t % self.K


POLICY_NAMES = (LexElimOut.name, LexElimIn.name, UcbBaseline.name, UniformBaseline.name)
