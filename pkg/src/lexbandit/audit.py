"""Invariant and bound checks over finished traces.

``audit_trace`` inspects one trace; ``AuditTotals`` folds many of them into
counts that the harness reports and the ``verify`` command gates on.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from . import metrics
from .core import BanditInstance, compute_lambda, gap_matrix, lex_optimal_arm
from .metrics import RegretTrace
from .simulate import PolicySpec

# relative slack for comparing stored floats against recomputed ones
REL_TOL = 1e-9


def clopper_pearson(k: int, n: int, level: float = 0.99) -> tuple[float, float]:
    """One-sided exact binomial bounds (lower, upper) at the given level."""
    alpha = 1.0 - level
    lo = 0.0 if k == 0 else float(sps.beta.ppf(alpha, k, n - k + 1))
    hi = 1.0 if k == n else float(sps.beta.ppf(1 - alpha, k + 1, n - k))
    return lo, hi


def audit_trace(trace: RegretTrace, instance: BanditInstance, spec: PolicySpec) -> dict:
    """Findings for one trace. Counts of zero mean the check passed."""
    spec = spec.resolve(instance)
    astar = lex_optimal_arm(instance)
    out: dict = {
        "consistency": _consistency(trace, instance, spec),
        "balance": trace.violations.get("balance", 0),
        "shrink": trace.violations.get("shrink", 0),
        "nesting": trace.violations.get("nesting", 0),
        "covered": bool(trace.coverage_held),
        "correct": trace.recommended == astar and not trace.budget_exhausted,
        "retention": 0,
        "ceilings": [],
        "sampleBound": 0,
        "regretBound": 0,
        "minimaxBound": 0,
    }
    if not spec.eliminates or not trace.coverage_held:
        return out
    finished_wrong = trace.stopping_time is not None and trace.recommended != astar
    if trace.astar_lost_round is not None or finished_wrong:
        out["retention"] = 1
    out["ceilings"] = metrics.check_pull_ceilings(
        trace, instance, spec.delta, spec.name, spec.lam
    )
    final_regret = trace.regret[-1]
    ident = metrics.identification_times(trace, instance)
    for i in range(instance.m):
        if spec.name == "lexelim-out":
            measured = ident["top"][i]
            sample_bound = metrics.out_sample_bound(instance, spec.delta, i)
            regret_bound = metrics.out_regret_bound(instance, spec.delta, i)
        else:
            measured = ident["single"][i]
            sample_bound = metrics.in_sample_bound(instance, spec.delta, spec.lam, i)
            regret_bound = metrics.in_regret_bound(instance, spec.delta, spec.lam, i)
        if measured is not None and measured > sample_bound:
            out["sampleBound"] += 1
        if final_regret[i] > regret_bound * (1 + REL_TOL) + REL_TOL:
            out["regretBound"] += 1
        # the anytime sqrt(t) ceiling is only guaranteed for the joint eliminator
        if spec.name != "lexelim-in":
            continue
        lam = spec.lam if spec.lam is not None else compute_lambda(instance)
        if trace.rounds and final_regret[i] > metrics.minimax_bound(
            instance.K, instance.m, spec.delta, lam, i, trace.rounds
        ):
            out["minimaxBound"] += 1
    return out


def _consistency(trace: RegretTrace, instance: BanditInstance, spec: PolicySpec) -> int:
    """Internal bookkeeping errors in a stored trace (e.g. tampered counts)."""
    bad = 0
    if int(np.sum(trace.pulls)) != trace.rounds:
        bad += 1
    if np.any(trace.pulls < 0):
        bad += 1
    expected = metrics.regret_from_pulls(trace.pulls, gap_matrix(instance))
    if trace.checkpoints.size and trace.checkpoints[-1] == trace.rounds:
        if not np.allclose(trace.regret[-1], expected, rtol=REL_TOL, atol=REL_TOL):
            bad += 1
    if np.any(np.diff(trace.checkpoints) <= 0):
        bad += 1
    if spec.eliminates:
        if np.any(np.diff(trace.active_sizes) > 0):
            bad += 1
        # round-robin selection: final counts of arms never eliminated differ by <= 1
        survivors = [a for a in range(instance.K) if trace.elimination_rounds(instance.K)[a] < 0]
        if trace.stopping_time is not None and trace.rounds == trace.stopping_time and survivors:
            counts = trace.pulls[survivors]
            if counts.max() - counts.min() > 1:
                bad += 1
    return bad


@dataclass
class AuditTotals:
    trials: int = 0
    covered: int = 0
    correct: int = 0
    consistency: int = 0
    balance: int = 0
    shrink: int = 0
    nesting: int = 0
    retention: int = 0
    ceiling_trials: int = 0
    sample_bound: int = 0
    regret_bound: int = 0
    minimax_bound: int = 0
    ceiling_examples: list = field(default_factory=list)

    def add(self, trace: RegretTrace, finding: dict) -> None:
        self.trials += 1
        self.covered += finding["covered"]
        self.correct += finding["correct"]
        for key in ("consistency", "balance", "shrink", "nesting", "retention"):
            setattr(self, key, getattr(self, key) + finding[key])
        self.minimax_bound += finding["minimaxBound"]
        self.sample_bound += finding["sampleBound"]
        self.regret_bound += finding["regretBound"]
        if finding["ceilings"]:
            self.ceiling_trials += 1
            if len(self.ceiling_examples) < 3:
                self.ceiling_examples.append(finding["ceilings"])

    @property
    def exact_violations(self) -> int:
        return self.consistency + self.balance + self.shrink + self.nesting

    @property
    def conditional_violations(self) -> int:
        return (
            self.retention + self.ceiling_trials + self.sample_bound
            + self.regret_bound + self.minimax_bound
        )

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "covered": self.covered,
            "correct": self.correct,
            "exact": {
                "consistency": self.consistency,
                "balance": self.balance,
                "shrink": self.shrink,
                "nesting": self.nesting,
            },
            "conditional": {
                "retention": self.retention,
                "ceilingTrials": self.ceiling_trials,
                "sampleBound": self.sample_bound,
                "regretBound": self.regret_bound,
                "minimaxBound": self.minimax_bound,
            },
            "ceilingExamples": self.ceiling_examples,
        }
