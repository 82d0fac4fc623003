"""Drive policies against an environment and collect a RegretTrace.

Two drivers produce identical traces for identical RNG streams:

* ``run_to_completion`` steps a reference ``Policy`` object round by round
  and checks the round-level invariants on real sets. Slow; use it for
  small runs and audits.
* ``simulate`` runs the compiled kernel in blocks of rounds. This is what
  the experiment harness uses.

In ``"bai"`` mode a run stops as soon as the policy finishes. In ``"rm"``
mode it continues for exactly ``max_rounds`` plays, committing to the
recommended arm after identification.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import _kernels as K_
from .core import BanditInstance, compute_lambda, elimination_multipliers, gap_matrix, lex_optimal_arm, optimal_set_sizes
from .environment import sample_reward
from .metrics import CoverageReplay, RegretTrace, pow2_checkpoints, regret_from_pulls
from .policies import (
    EliminationRecord,
    LexElimIn,
    LexElimOut,
    Policy,
    UcbBaseline,
    UniformBaseline,
)

DEFAULT_BAI_BUDGET = 10**9
BLOCK = 1 << 16

_CODES = {
    LexElimOut.name: K_.OUT,
    LexElimIn.name: K_.IN,
    UcbBaseline.name: K_.UCB,
    UniformBaseline.name: K_.UNIFORM,
}


@dataclass(frozen=True)
class PolicySpec:
    """A policy plus its parameters; unset parameters come from ground truth."""

    name: str
    delta: float = 0.01
    lam: Optional[float] = None
    optimal_sizes: Optional[tuple[int, ...]] = None
    label: Optional[str] = None

    def __post_init__(self):
        if self.name not in _CODES:
            raise ValueError(f"unknown policy {self.name!r}; choose from {sorted(_CODES)}")
        if self.optimal_sizes is not None:
            object.__setattr__(self, "optimal_sizes", tuple(int(s) for s in self.optimal_sizes))

    @property
    def key(self) -> str:
        return self.label or self.name

    @property
    def eliminates(self) -> bool:
        return self.name in (LexElimOut.name, LexElimIn.name)

    def resolve(self, instance: BanditInstance) -> "PolicySpec":
        """Fill in lambda / optimal-set sizes from the instance where unset."""
        spec = self
        if self.name == LexElimIn.name and self.lam is None:
            spec = replace(spec, lam=compute_lambda(instance))
        if self.name == LexElimOut.name and self.optimal_sizes is None:
            spec = replace(spec, optimal_sizes=tuple(optimal_set_sizes(instance)))
        return spec

    def build(self, instance: BanditInstance) -> Policy:
        spec = self.resolve(instance)
        K, m = instance.K, instance.m
        if spec.name == LexElimOut.name:
            return LexElimOut(K, m, spec.delta, spec.optimal_sizes)
        if spec.name == LexElimIn.name:
            return LexElimIn(K, m, spec.delta, spec.lam)
        if spec.name == UcbBaseline.name:
            return UcbBaseline(K, m, spec.delta)
        return UniformBaseline(K, m, spec.delta)


def _grid(mode: str, max_rounds: int, checkpoints=None) -> np.ndarray:
    if checkpoints is not None:
        pts = np.unique(np.asarray(checkpoints, dtype=np.int64))
        pts = pts[(pts >= 1) & (pts <= max_rounds)]
        if mode == "rm" and (pts.size == 0 or pts[-1] != max_rounds):
            pts = np.append(pts, max_rounds)
        return pts
    if mode == "rm":
        return pow2_checkpoints(max_rounds)
    pts = pow2_checkpoints(max_rounds)
    return pts[pts & (pts - 1) == 0]


def _finish_trace(name, instance, grid, ck_pulls, ck_active, pulls, rounds, stop, rec, **kw):
    gaps = gap_matrix(instance)
    n = int(np.searchsorted(grid, rounds, side="right"))
    checkpoints = list(grid[:n])
    pulls_rows = list(ck_pulls[:n])
    active_rows = list(ck_active[:n])
    if not checkpoints or checkpoints[-1] != rounds:
        checkpoints.append(rounds)
        pulls_rows.append(np.asarray(pulls))
        active_rows.append(kw.pop("final_active"))
    else:
        kw.pop("final_active")
    pulls_rows = np.asarray(pulls_rows, dtype=np.int64).reshape(len(checkpoints), instance.K)
    return RegretTrace(
        policy=name,
        checkpoints=np.asarray(checkpoints, dtype=np.int64),
        regret=regret_from_pulls(pulls_rows, gaps),
        active_sizes=np.asarray(active_rows, dtype=np.int64),
        pulls=np.asarray(pulls, dtype=np.int64).copy(),
        rounds=int(rounds),
        stopping_time=stop,
        recommended=int(rec),
        **kw,
    )


def run_to_completion(
    policy: Policy,
    instance: BanditInstance,
    rng: np.random.Generator,
    max_rounds: int,
    mode: str = "bai",
    keep_plays: bool = False,
    coverage: bool = True,
    checkpoints: Optional[Sequence[int]] = None,
) -> RegretTrace:
    """Reference driver: one ``select_arm`` / ``observe`` pair per round."""
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    if mode not in ("bai", "rm"):
        raise ValueError(f"mode must be 'bai' or 'rm', not {mode!r}")
    grid = _grid(mode, max_rounds, checkpoints)
    astar = lex_optimal_arm(instance)
    monitored = isinstance(policy, (LexElimOut, LexElimIn))
    violations = {"balance": 0, "shrink": 0, "nesting": 0} if monitored else {}
    lost = None
    replay = CoverageReplay(instance, policy.cfg) if coverage else None
    plays: list[int] = []
    ck_pulls, ck_active = [], []
    stop = 0 if policy.finished() else None
    t = 0
    while t < max_rounds:
        if policy.finished():
            if stop is None:
                stop = t
            if mode == "bai":
                break
        elif monitored:
            active = policy.active_set()
            counts = policy.stats.pulls[sorted(active)]
            if counts.max() - counts.min() > 1:
                violations["balance"] += 1
        before = policy.active_set()
        was_finished = policy.finished()
        a = policy.select_arm()
        after = policy.active_set()
        if monitored and not was_finished:
            if not after <= before:
                violations["shrink"] += 1
            if isinstance(policy, LexElimIn):
                chain = policy.last_filtration
                if chain[0] != before or chain[-1] != after or any(
                    not (nxt <= cur and nxt) for cur, nxt in zip(chain, chain[1:])
                ):
                    violations["nesting"] += 1
            if lost is None and astar not in after:
                lost = t + 1
        reward = sample_reward(instance, a, rng)
        policy.observe(a, reward)
        if replay is not None:
            replay.feed([a], reward[None, :])
        plays.append(a)
        t += 1
        if len(ck_pulls) < grid.size and grid[len(ck_pulls)] == t:
            ck_pulls.append(policy.stats.pulls.copy())
            ck_active.append(len(policy.active_set()))
    if stop is None and policy.finished():
        stop = t
    return _finish_trace(
        policy.name, instance, grid,
        np.asarray(ck_pulls, dtype=np.int64).reshape(-1, instance.K), np.asarray(ck_active, dtype=np.int64),
        policy.stats.pulls, t, stop, policy.recommend(),
        final_active=len(policy.active_set()),
        eliminations=list(policy.eliminations),
        anomalies=list(policy.anomalies),
        violations=violations,
        astar_lost_round=lost if monitored else None,
        coverage_held=None if replay is None else replay.held,
        coverage_failed_round=None if replay is None else replay.failed_round,
        plays=np.asarray(plays, dtype=np.int64) if keep_plays else None,
    )


def _records_from_arrays(elim_round, elim_obj, elim_thr) -> list[EliminationRecord]:
    groups: dict[tuple[int, int], list[int]] = {}
    thr: dict[tuple[int, int], float] = {}
    for a in np.flatnonzero(elim_round >= 0):
        key = (int(elim_round[a]), int(elim_obj[a]))
        groups.setdefault(key, []).append(int(a))
        thr[key] = float(elim_thr[a])
    return [
        EliminationRecord(r, i, frozenset(groups[(r, i)]), thr[(r, i)])
        for r, i in sorted(groups)
    ]


def simulate(
    spec: PolicySpec,
    instance: BanditInstance,
    rng: np.random.Generator,
    mode: str = "bai",
    max_rounds: Optional[int] = None,
    keep_plays: bool = False,
    coverage: bool = True,
    block: int = BLOCK,
    checkpoints: Optional[Sequence[int]] = None,
) -> RegretTrace:
    """Compiled driver; same contract and output as ``run_to_completion``."""
    if mode not in ("bai", "rm"):
        raise ValueError(f"mode must be 'bai' or 'rm', not {mode!r}")
    if max_rounds is None:
        if mode == "rm":
            raise ValueError("rm mode needs a horizon")
        max_rounds = DEFAULT_BAI_BUDGET
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    spec = spec.resolve(instance)
    policy = spec.build(instance)  # validates parameters, provides cfg
    K, m = instance.K, instance.m
    code = _CODES[spec.name]
    means = np.ascontiguousarray(instance.means)
    sigma = instance.noise.sigma
    mult = elimination_multipliers(spec.lam or 0.0, m)
    sizes = np.asarray(spec.optimal_sizes or [0] * m, dtype=np.int64)
    astar = lex_optimal_arm(instance)
    grid = _grid(mode, max_rounds, checkpoints)

    st = np.zeros(K_.STATE_SIZE, dtype=np.int64)
    st[K_.NACT] = K
    st[K_.STOP] = -1
    st[K_.LOST] = -1
    pulls = np.zeros(K, dtype=np.int64)
    mu = np.zeros((K, m))
    width = np.full(K, np.inf)
    active = np.ones(K, dtype=np.bool_)
    elim_round = np.full(K, -1, dtype=np.int64)
    elim_obj = np.full(K, -1, dtype=np.int64)
    elim_thr = np.zeros(K)
    phase_done = np.full(m, -1, dtype=np.int64)
    anomalies = np.zeros((K * m + m, 4), dtype=np.int64)
    ck_pulls = np.zeros((grid.size, K), dtype=np.int64)
    ck_active = np.zeros(grid.size, dtype=np.int64)
    plays_buf = np.zeros(block, dtype=np.int64)

    if code == K_.OUT:
        K_._advance_phase(st, sizes, phase_done, anomalies, 0, m)
        initially_done = st[K_.PHASE] >= m
    elif code == K_.IN:
        initially_done = K <= 1
    else:
        initially_done = False
    if initially_done:
        st[K_.FINISHED] = 1
        st[K_.STOP] = 0
        st[K_.REC] = 0

    replay = CoverageReplay(instance, policy.cfg) if coverage else None
    kept: list[np.ndarray] = []
    bai = mode == "bai"
    while st[K_.T] < max_rounds and not (bai and st[K_.FINISHED]):
        nb = int(min(block, max_rounds - st[K_.T]))
        z = rng.standard_normal((nb, m))
        used = K_.run_block(
            code, z, sigma, means, spec.delta, mult, sizes, astar, bai,
            st, pulls, mu, width, active, elim_round, elim_obj, elim_thr,
            phase_done, anomalies, grid, ck_pulls, ck_active, plays_buf,
        )
        played = plays_buf[:used]
        if replay is not None and used:
            replay.feed(played, means[played] + sigma * z[:used])
        if keep_plays:
            kept.append(played.copy())

    rounds = int(st[K_.T])
    stop = int(st[K_.STOP]) if st[K_.STOP] >= 0 else None
    rec = int(st[K_.REC]) if st[K_.FINISHED] else int(np.flatnonzero(active)[0])
    monitored = spec.eliminates
    anomaly_list = [
        {
            "kind": "over-elimination",
            "round": int(r), "objective": int(p), "activeSize": int(s), "required": int(q),
        }
        for r, p, s, q in anomalies[: st[K_.NANOM]]
    ]
    return _finish_trace(
        spec.name, instance, grid, ck_pulls, ck_active, pulls, rounds, stop, rec,
        final_active=int(st[K_.NACT]),
        eliminations=_records_from_arrays(elim_round, elim_obj, elim_thr),
        anomalies=anomaly_list,
        violations=(
            {
                "balance": int(st[K_.BALANCE]),
                "shrink": int(st[K_.SHRINK]),
                "nesting": int(st[K_.NESTING]),
            }
            if monitored
            else {}
        ),
        astar_lost_round=(int(st[K_.LOST]) if st[K_.LOST] >= 0 else None) if monitored else None,
        coverage_held=None if replay is None else replay.held,
        coverage_failed_round=None if replay is None else replay.failed_round,
        plays=np.concatenate(kept) if keep_plays and kept else (np.zeros(0, np.int64) if keep_plays else None),
    )
