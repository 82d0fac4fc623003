"""Regret accounting, confidence-event replay, pull ceilings and bound evaluators."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np

from .core import (
    BanditInstance,
    gap_matrix,
    lambda_series,
    optimal_set_top,
)
from .policies import EliminationRecord
from .stats import ConfidenceConfig


def pow2_checkpoints(limit: int) -> np.ndarray:
    """1, 2, 4, ... up to ``limit``, with ``limit`` itself appended."""
    pts = []
    t = 1
    while t <= limit:
        pts.append(t)
        t *= 2
    if limit >= 1 and (not pts or pts[-1] != limit):
        pts.append(limit)
    return np.asarray(pts, dtype=np.int64)


@dataclass
class RegretTrace:
    """Outcome of one (policy, trial) run.

    ``regret[k, i]`` is the pseudo-regret on objective i after
    ``checkpoints[k]`` plays. ``stopping_time`` is None when the round budget
    ran out before the policy finished.
    """

    policy: str
    checkpoints: np.ndarray
    regret: np.ndarray
    active_sizes: np.ndarray
    pulls: np.ndarray
    rounds: int
    stopping_time: Optional[int]
    recommended: int
    eliminations: list[EliminationRecord] = field(default_factory=list)
    anomalies: list[dict] = field(default_factory=list)
    violations: dict[str, int] = field(default_factory=dict)
    astar_lost_round: Optional[int] = None
    coverage_held: Optional[bool] = None
    coverage_failed_round: Optional[int] = None
    plays: Optional[np.ndarray] = None

    @property
    def budget_exhausted(self) -> bool:
        return self.stopping_time is None

    def elimination_rounds(self, K: int) -> np.ndarray:
        """Per-arm round of elimination, -1 for arms never eliminated."""
        out = np.full(K, -1, dtype=np.int64)
        for rec in self.eliminations:
            for a in rec.removed:
                out[a] = rec.round
        return out

    def checkpoint_rows(self) -> list[dict]:
        return [
            {
                "t": int(t),
                "regret": [float(x) for x in self.regret[k]],
                "activeSize": int(self.active_sizes[k]),
            }
            for k, t in enumerate(self.checkpoints)
        ]

    def summary(self) -> dict:
        return {
            "policy": self.policy,
            "recommended": int(self.recommended),
            "stoppingTime": (
                "budget-exhausted" if self.stopping_time is None else int(self.stopping_time)
            ),
            "rounds": int(self.rounds),
            "coverageHeld": self.coverage_held,
            "coverageFailedRound": self.coverage_failed_round,
            "astarLostRound": self.astar_lost_round,
            "anomalies": list(self.anomalies),
            "violations": dict(self.violations),
            "pulls": [int(x) for x in self.pulls],
            "eliminations": [r.to_dict() for r in self.eliminations],
        }


def regret_from_pulls(pulls: np.ndarray, gaps: np.ndarray) -> np.ndarray:
    """sum_a n(a) * Delta_i(a) for each objective i (rows of pulls may be stacked)."""
    return np.asarray(pulls, dtype=np.float64) @ gaps


def regret_at(plays: np.ndarray, instance: BanditInstance, i: int, t: int) -> float:
    """t * mu_i(a*) - sum of mu_i over the first t plays.

    Summed as per-play gaps so that plays of a* contribute exactly zero.
    """
    plays = np.asarray(plays, dtype=np.int64)
    if not 0 <= t <= plays.size:
        raise IndexError(f"t={t} outside [0, {plays.size}]")
    return float(gap_matrix(instance)[plays[:t], i].sum())


def identification_times(trace: RegretTrace, instance: BanditInstance) -> dict[str, list]:
    """Rounds at which O*(i) and the single-objective sets were isolated.

    ``top[i]`` is the first round by which every arm outside O*(i+1) had been
    eliminated; ``single[i]`` the same for arms with Delta_i(a) > 0. None
    when some such arm was never eliminated; 0 when there was nothing to do.
    """
    rounds = trace.elimination_rounds(instance.K)
    gaps = gap_matrix(instance)

    def latest(arms):
        arms = list(arms)
        if not arms:
            return 0
        r = rounds[arms]
        return None if np.any(r < 0) else int(r.max())

    top = [
        latest(set(range(instance.K)) - optimal_set_top(instance, d))
        for d in range(1, instance.m + 1)
    ]
    single = [latest(np.flatnonzero(gaps[:, i] > 0)) for i in range(instance.m)]
    return {"top": top, "single": single}


@numba.njit(cache=True)
def _coverage_replay(plays, rewards, true_means, sums, counts, K, m, delta, start_round):
    log_scale = 6.0 * K * m / delta
    for r in range(plays.shape[0]):
        a = plays[r]
        counts[a] += 1
        n = counts[a]
        width = math.sqrt(4.0 / n * math.log(log_scale * n))
        for i in range(m):
            sums[a, i] += rewards[r, i]
            if abs(sums[a, i] / n - true_means[a, i]) > width:
                return start_round + r + 1
    return -1


class CoverageReplay:
    """Replays (arm, reward) pairs from scratch and tests the confidence event.

    Statistics are rebuilt as running sums, independently of the policy's own
    incremental means. The event fails at the first play after which some
    arm's empirical mean leaves its width on some objective.
    """

    def __init__(self, instance: BanditInstance, cfg: ConfidenceConfig):
        self.means = np.ascontiguousarray(instance.means)
        self.cfg = cfg
        self.sums = np.zeros((instance.K, instance.m))
        self.counts = np.zeros(instance.K, dtype=np.int64)
        self.rounds = 0
        self.failed_round: Optional[int] = None

    @property
    def held(self) -> bool:
        return self.failed_round is None

    def feed(self, plays, rewards) -> None:
        plays = np.ascontiguousarray(plays, dtype=np.int64)
        rewards = np.ascontiguousarray(rewards, dtype=np.float64).reshape(plays.size, self.means.shape[1])
        if self.failed_round is None and plays.size:
            hit = _coverage_replay(
                plays, rewards, self.means, self.sums, self.counts,
                self.cfg.K, self.cfg.m, self.cfg.delta, self.rounds,
            )
            if hit >= 0:
                self.failed_round = int(hit)
        self.rounds += plays.size


def check_coverage(instance: BanditInstance, cfg: ConfidenceConfig, plays, rewards) -> bool:
    replay = CoverageReplay(instance, cfg)
    replay.feed(plays, rewards)
    return replay.held


# ---------------------------------------------------------------------------
# bound evaluators


def gamma(gap: float, K: int, m: int, delta: float) -> float:
    """64 ln(392 K m / (gap^2 delta)), evaluated per arm."""
    return 64.0 * math.log(392.0 * K * m / (gap * gap * delta))


def elimination_sets(instance: BanditInstance) -> list[set[int]]:
    """S(i) = arms in O*(i-1) with a positive gap on objective i, for i = 1..m."""
    gaps = gap_matrix(instance)
    return [
        {a for a in optimal_set_top(instance, i) if gaps[a, i] > 0}
        for i in range(instance.m)
    ]


def _out_terms(instance: BanditInstance, delta: float, i: int):
    gaps = gap_matrix(instance)
    K, m = instance.K, instance.m
    for j, s in enumerate(elimination_sets(instance)[: i + 1]):
        for a in sorted(s):
            yield j, a, gamma(gaps[a, j], K, m, delta) / gaps[a, j] ** 2, gaps[a, i]


def out_regret_bound(instance: BanditInstance, delta: float, i: int) -> float:
    """LexElim-Out regret ceiling on objective i (0-based)."""
    return float(sum(w * gi for _, _, w, gi in _out_terms(instance, delta, i)))


def out_regret_split(instance: BanditInstance, delta: float, i: int) -> tuple[float, float]:
    """(cross-objective cost from S(1..i-1), single-objective term from S(i))."""
    cross, local = 0.0, 0.0
    for j, _, w, gi in _out_terms(instance, delta, i):
        if j < i:
            cross += w * gi
        else:
            local += w * gi
    return cross, local


def out_sample_bound(instance: BanditInstance, delta: float, i: int) -> float:
    """LexElim-Out sample ceiling for isolating O*(i+1)."""
    return float(sum(w for _, _, w, _ in _out_terms(instance, delta, i)))


def _in_arm_costs(instance: BanditInstance, delta: float, lam: float) -> np.ndarray:
    """Per-arm min over objectives with positive gap of Lambda_j^2 gamma_j / Delta_j^2."""
    gaps = gap_matrix(instance)
    K, m = instance.K, instance.m
    scale = np.array([lambda_series(lam, j + 1) ** 2 for j in range(m)])
    pos = gaps > 0
    safe = np.where(pos, gaps, 1.0)
    g = 64.0 * np.log(392.0 * K * m / (safe * safe * delta))
    per_obj = np.where(pos, scale[None, :] * g / safe**2, np.inf)
    return per_obj.min(axis=1)


def in_regret_bound(instance: BanditInstance, delta: float, lam: float, i: int) -> float:
    """LexElim-In regret ceiling on objective i (0-based)."""
    gaps = gap_matrix(instance)[:, i]
    cost = _in_arm_costs(instance, delta, lam)
    sel = gaps > 0
    assert np.all(np.isfinite(cost[sel]))
    return float(np.sum(cost[sel] * gaps[sel]))


def in_sample_bound(instance: BanditInstance, delta: float, lam: float, i: int) -> float:
    """LexElim-In sample ceiling for isolating the objective-i optimal set."""
    gaps = gap_matrix(instance)[:, i]
    cost = _in_arm_costs(instance, delta, lam)
    sel = gaps > 0
    assert np.all(np.isfinite(cost[sel]))
    return float(np.sum(cost[sel]))


def minimax_bound(K: int, m: int, delta: float, lam: float, i: int, t: int) -> float:
    """Anytime LexElim-In regret ceiling 16 Lambda_i sqrt(K t ln(6 K m t / delta))."""
    return 16.0 * lambda_series(lam, i + 1) * math.sqrt(K * t * math.log(6.0 * K * m * t / delta))


def out_pull_ceilings(instance: BanditInstance, delta: float) -> np.ndarray:
    """Per-arm LexElim-Out pull ceiling for arms in some S(i); +inf otherwise."""
    gaps = gap_matrix(instance)
    K, m = instance.K, instance.m
    out = np.full(K, np.inf)
    for i, s in enumerate(elimination_sets(instance)):
        for a in s:
            out[a] = gamma(gaps[a, i], K, m, delta) / gaps[a, i] ** 2
    return out


def in_pull_ceilings(instance: BanditInstance, delta: float, lam: float) -> np.ndarray:
    """Per-arm LexElim-In pull ceiling (min over objectives); +inf for gapless arms."""
    return _in_arm_costs(instance, delta, lam)


def check_pull_ceilings(
    trace: RegretTrace,
    instance: BanditInstance,
    delta: float,
    algorithm: str,
    lam: float | None = None,
) -> list[dict]:
    """Arms whose final pull count exceeds their ceiling, on covered trials only."""
    if algorithm == "lexelim-out":
        ceil = out_pull_ceilings(instance, delta)
    elif algorithm == "lexelim-in":
        if lam is None:
            raise ValueError("lambda required for the LexElim-In ceiling")
        ceil = in_pull_ceilings(instance, delta, lam)
    else:
        raise ValueError(f"no pull ceiling for {algorithm!r}")
    if trace.coverage_held is False:
        return []
    return [
        {"arm": int(a), "pulls": int(trace.pulls[a]), "ceiling": float(ceil[a])}
        for a in range(instance.K)
        if trace.pulls[a] > ceil[a]
    ]


@dataclass
class BoundReport:
    K: int
    m: int
    delta: float
    lam: float
    regret_out: list[float]
    samples_out: list[float]
    regret_in: list[float]
    samples_in: list[float]
    minimax_prefactor: list[float]
    scaled_gaps: list[Optional[float]]
    first_gaps: list[float]

    @classmethod
    def evaluate(cls, instance: BanditInstance, delta: float, lam: float) -> "BoundReport":
        from .core import GapProfile, scaled_gap

        m = instance.m
        prof = GapProfile.of(instance, lam)
        scaled = []
        for a in range(instance.K):
            try:
                scaled.append(scaled_gap(prof, a))
            except ValueError:
                scaled.append(None)
        return cls(
            K=instance.K,
            m=m,
            delta=delta,
            lam=lam,
            regret_out=[out_regret_bound(instance, delta, i) for i in range(m)],
            samples_out=[out_sample_bound(instance, delta, i) for i in range(m)],
            regret_in=[in_regret_bound(instance, delta, lam, i) for i in range(m)],
            samples_in=[in_sample_bound(instance, delta, lam, i) for i in range(m)],
            minimax_prefactor=[16.0 * lambda_series(lam, i + 1) for i in range(m)],
            scaled_gaps=scaled,
            first_gaps=[float(g) for g in prof.gaps[:, 0]],
        )

    def minimax_bound(self, i: int, t: int) -> float:
        return minimax_bound(self.K, self.m, self.delta, self.lam, i, t)

    def scaled_gap_check(self) -> bool:
        return all(s is None or s >= g for s, g in zip(self.scaled_gaps, self.first_gaps))

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "m": self.m,
            "delta": self.delta,
            "lambda": self.lam,
            "regretBoundOut": self.regret_out,
            "sampleBoundOut": self.samples_out,
            "regretBoundIn": self.regret_in,
            "sampleBoundIn": self.samples_in,
            "minimaxBoundIn": {
                "prefactor": self.minimax_prefactor,
                "form": "prefactor[i] * sqrt(K * t * ln(6 * K * m * t / delta))",
            },
            "scaledGaps": self.scaled_gaps,
            "scaledGapDominatesFirstGap": self.scaled_gap_check(),
        }
