"""Experiment orchestration: config files, the trial pool, aggregation and outputs.

A run fans out one task per (instance, policy, trial). Each task seeds its
own generator from ``(seed, trial, crc32(policy label), K)``, so results do
not depend on scheduling, and the reduce step walks tasks in a fixed order.

Output directory layout::

    config.yaml                             resolved configuration
    instances/<label>.json                  instance serialization
    traces/<label>/<policy>/trial_0000.jsonl          checkpoint rows
    traces/<label>/<policy>/trial_0000.summary.json   per-trial summary
    summary.json                            aggregate over trials
    regret.csv                              mean regret curves
    stopping.csv                            stopping-time table
"""
from __future__ import annotations

import csv
import io
import json
import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import yaml

from . import audit, metrics
from .core import BanditInstance, compute_lambda, lex_optimal_arm
from .environment import ConfigError, SeedSpec, tripeak_instance, stream_key
from .metrics import RegretTrace
from .policies import EliminationRecord
from .simulate import PolicySpec, simulate

THREADS_ENV = "LEXBANDIT_THREADS"
MODES = ("rm", "bai")
REGRET_CSV_HEADER = ["instance", "t", "policy", "objective", "meanRegret", "stdRegret"]
STOPPING_CSV_HEADER = [
    "instance", "policy", "trials", "successes", "budgetExhausted",
    "meanStoppingTime", "stdStoppingTime",
]


@dataclass(frozen=True)
class InstanceSource:
    """Either the builtin synthetic family (one entry per K) or a JSON file."""

    builtin: Optional[str] = "tripeak"
    K: tuple[int, ...] = (10,)
    variance: float = 0.1
    path: Optional[str] = None

    def __post_init__(self):
        if (self.builtin is None) == (self.path is None):
            raise ConfigError("instance needs exactly one of 'builtin' or 'path'")
        if self.builtin is not None and self.builtin != "tripeak":
            raise ConfigError(f"unknown builtin instance {self.builtin!r}")
        object.__setattr__(self, "K", tuple(int(k) for k in self.K))

    def resolve(self, base: Path = Path(".")) -> list[tuple[str, BanditInstance]]:
        if self.path is not None:
            p = Path(self.path)
            if not p.is_absolute():
                p = base / p
            try:
                data = json.loads(p.read_text())
            except OSError as exc:
                raise ConfigError(f"cannot read instance file {p}: {exc}") from exc
            return [(p.stem, BanditInstance.from_dict(data))]
        return [(f"K{k}", tripeak_instance(k, self.variance)) for k in self.K]

    def to_dict(self) -> dict:
        if self.path is not None:
            return {"path": self.path}
        return {"builtin": self.builtin, "K": list(self.K), "variance": self.variance}

    @classmethod
    def from_dict(cls, d: dict) -> "InstanceSource":
        if not isinstance(d, dict):
            raise ConfigError("'instance' must be a mapping")
        unknown = set(d) - {"builtin", "K", "variance", "path"}
        if unknown:
            raise ConfigError(f"unknown instance keys: {sorted(unknown)}")
        if "path" in d:
            return cls(builtin=None, path=str(d["path"]))
        k = d.get("K", 10)
        ks = tuple(k) if isinstance(k, (list, tuple)) else (k,)
        return cls(builtin=d.get("builtin", "tripeak"), K=ks, variance=float(d.get("variance", 0.1)))


def _policy_to_dict(p: PolicySpec) -> dict:
    d: dict = {"name": p.name, "delta": p.delta}
    if p.lam is not None:
        d["lambda"] = p.lam
    if p.optimal_sizes is not None:
        d["optimalSizes"] = list(p.optimal_sizes)
    if p.label is not None:
        d["label"] = p.label
    return d


def _policy_from_dict(d, default_delta: float) -> PolicySpec:
    if isinstance(d, str):
        d = {"name": d}
    unknown = set(d) - {"name", "delta", "lambda", "optimalSizes", "label"}
    if unknown:
        raise ConfigError(f"unknown policy keys: {sorted(unknown)}")
    try:
        return PolicySpec(
            name=d["name"],
            delta=float(d.get("delta", default_delta)),
            lam=None if d.get("lambda") is None else float(d["lambda"]),
            optimal_sizes=d.get("optimalSizes"),
            label=d.get("label"),
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad policy entry {d!r}: {exc}") from exc


@dataclass(frozen=True)
class ExperimentConfig:
    instance: InstanceSource = field(default_factory=InstanceSource)
    policies: tuple[PolicySpec, ...] = (PolicySpec("lexelim-out"), PolicySpec("lexelim-in"))
    mode: str = "rm"
    horizon: Optional[int] = 10_000
    trials: int = 10
    seed: int = 0
    delta: float = 0.01
    output: str = "runs/out"
    checkpoints: object = "pow2"  # "pow2" or a tuple of rounds
    keep_plays: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "rm" and not self.horizon:
            raise ConfigError("mode=rm requires a horizon")
        if self.horizon is not None and int(self.horizon) < 1:
            raise ConfigError("horizon must be positive")
        if int(self.trials) < 1:
            raise ConfigError("trials must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        if not 0 < self.delta < 1:
            raise ConfigError("delta must lie in (0, 1)")
        if not self.policies:
            raise ConfigError("at least one policy is required")
        keys = [p.key for p in self.policies]
        if len(set(keys)) != len(keys):
            raise ConfigError("policy labels must be unique; set 'label' to run a policy twice")
        if self.checkpoints != "pow2":
            object.__setattr__(self, "checkpoints", tuple(int(t) for t in self.checkpoints))

    @property
    def checkpoint_grid(self):
        return None if self.checkpoints == "pow2" else self.checkpoints

    def to_dict(self) -> dict:
        return {
            "instance": self.instance.to_dict(),
            "mode": self.mode,
            "horizon": self.horizon,
            "trials": self.trials,
            "seed": self.seed,
            "delta": self.delta,
            "policies": [_policy_to_dict(p) for p in self.policies],
            "checkpoints": self.checkpoints if self.checkpoints == "pow2" else list(self.checkpoints),
            "keepPlays": self.keep_plays,
            "output": self.output,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping")
        allowed = {"instance", "mode", "horizon", "trials", "seed", "delta",
                   "policies", "checkpoints", "keepPlays", "output"}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        delta = float(d.get("delta", 0.01))
        policies = d.get("policies", ["lexelim-out", "lexelim-in"])
        if not isinstance(policies, list):
            raise ConfigError("'policies' must be a list")
        return cls(
            instance=InstanceSource.from_dict(d.get("instance", {})),
            mode=d.get("mode", "rm"),
            horizon=None if d.get("horizon", 10_000) is None else int(d.get("horizon", 10_000)),
            trials=int(d.get("trials", 10)),
            seed=int(d.get("seed", 0)),
            delta=delta,
            policies=tuple(_policy_from_dict(p, delta) for p in policies),
            checkpoints=d.get("checkpoints", "pow2"),
            keep_plays=bool(d.get("keepPlays", False)),
            output=str(d.get("output", "runs/out")),
        )

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML: {exc}") from exc
        return cls.from_dict(data or {})

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.loads(text)


def worker_count(requested: Optional[int] = None) -> int:
    cap = os.environ.get(THREADS_ENV)
    n = requested or os.cpu_count() or 1
    if cap:
        try:
            limit = int(cap)
        except ValueError as exc:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {cap!r}") from exc
        if limit < 1:
            raise ConfigError(f"{THREADS_ENV} must be >= 1")
        n = min(n, limit)
    return max(1, n)


@dataclass(frozen=True)
class _Task:
    label: str
    instance: BanditInstance
    spec: PolicySpec
    trial: int
    seed: int
    mode: str
    horizon: Optional[int]
    checkpoints: Optional[tuple]
    keep_plays: bool


def trial_seed(seed: int, trial: int, spec: PolicySpec, instance: BanditInstance) -> SeedSpec:
    return SeedSpec(seed, trial, (stream_key(spec.key), instance.K))


def _run_task(task: _Task) -> tuple[RegretTrace, dict]:
    rng = trial_seed(task.seed, task.trial, task.spec, task.instance).rng()
    trace = simulate(
        task.spec, task.instance, rng, mode=task.mode, max_rounds=task.horizon,
        keep_plays=task.keep_plays, checkpoints=task.checkpoints,
    )
    return trace, audit.audit_trace(trace, task.instance, task.spec)


@dataclass
class PolicyResult:
    spec: PolicySpec
    traces: list[RegretTrace]
    findings: list[dict]


@dataclass
class InstanceResult:
    label: str
    instance: BanditInstance
    policies: dict[str, PolicyResult]


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    instances: list[InstanceResult]

    def policy(self, label: str, key: str) -> PolicyResult:
        for r in self.instances:
            if r.label == label:
                return r.policies[key]
        raise KeyError(label)


def run_experiment(
    config: ExperimentConfig,
    workers: Optional[int] = None,
    base: Path = Path("."),
    progress: Optional[Callable[[str], None]] = None,
) -> ExperimentResult:
    """Run every (instance, policy, trial) task and group results in order."""
    resolved = config.instance.resolve(base)
    tasks = [
        _Task(label, inst, spec.resolve(inst), t, config.seed, config.mode,
              config.horizon, config.checkpoint_grid, config.keep_plays)
        for label, inst in resolved
        for spec in config.policies
        for t in range(config.trials)
    ]
    n = min(worker_count(workers), len(tasks))
    if n <= 1:
        outputs = []
        for task in tasks:
            outputs.append(_run_task(task))
            if progress and task.trial == config.trials - 1:
                progress(f"{task.label} {task.spec.key}: {config.trials} trials done")
    else:
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=n, mp_context=ctx) as pool:
            outputs = list(pool.map(_run_task, tasks))
        if progress:
            progress(f"{len(tasks)} runs done on {n} workers")
    results = []
    it = iter(zip(tasks, outputs))
    for label, inst in resolved:
        by_policy = {}
        for spec in config.policies:
            traces, findings = [], []
            for _ in range(config.trials):
                task, (trace, finding) = next(it)
                traces.append(trace)
                findings.append(finding)
            by_policy[spec.key] = PolicyResult(spec.resolve(inst), traces, findings)
        results.append(InstanceResult(label, inst, by_policy))
    return ExperimentResult(config, results)


# ---------------------------------------------------------------- aggregation

def _std(x: np.ndarray, axis=0):
    return np.std(x, axis=axis, ddof=1) if x.shape[axis] > 1 else np.zeros(np.delete(x.shape, axis))


def mean_curves(traces: list[RegretTrace]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(checkpoints, mean, std) over the checkpoints every trace reached."""
    common = traces[0].checkpoints
    for tr in traces[1:]:
        common = np.intersect1d(common, tr.checkpoints)
    stacked = np.stack(
        [tr.regret[np.searchsorted(tr.checkpoints, common)] for tr in traces]
    )
    return common, stacked.mean(axis=0), _std(stacked)


def policy_summary(res: PolicyResult, instance: BanditInstance) -> dict:
    astar = lex_optimal_arm(instance)
    totals = audit.AuditTotals()
    for tr, f in zip(res.traces, res.findings):
        totals.add(tr, f)
    stops = np.array([tr.stopping_time for tr in res.traces if tr.stopping_time is not None], dtype=float)
    ck, mean, std = mean_curves(res.traces)
    return {
        "policy": res.spec.name,
        "parameters": _policy_to_dict(res.spec),
        "trials": len(res.traces),
        "successes": sum(
            tr.recommended == astar and tr.stopping_time is not None for tr in res.traces
        ),
        "budgetExhausted": sum(tr.budget_exhausted for tr in res.traces),
        "meanStoppingTime": float(stops.mean()) if stops.size else None,
        "stdStoppingTime": float(_std(stops)) if stops.size else None,
        "coverageHeld": sum(bool(tr.coverage_held) for tr in res.traces),
        "anomalies": sum(len(tr.anomalies) for tr in res.traces),
        "checkpoints": [int(t) for t in ck],
        "meanRegret": mean.tolist(),
        "stdRegret": std.tolist(),
        "audit": totals.to_dict(),
    }


def bound_comparison(instance: BanditInstance, res: PolicyResult) -> Optional[dict]:
    """Measured vs theoretical, over covered trials of an eliminating policy."""
    spec = res.spec
    if not spec.eliminates:
        return None
    covered = [tr for tr in res.traces if tr.coverage_held]
    m = instance.m
    if spec.name == "lexelim-out":
        regret_bound = [metrics.out_regret_bound(instance, spec.delta, i) for i in range(m)]
        sample_bound = [metrics.out_sample_bound(instance, spec.delta, i) for i in range(m)]
        which = "top"
    else:
        regret_bound = [metrics.in_regret_bound(instance, spec.delta, spec.lam, i) for i in range(m)]
        sample_bound = [metrics.in_sample_bound(instance, spec.delta, spec.lam, i) for i in range(m)]
        which = "single"
    final = np.array([tr.regret[-1] for tr in covered]).reshape(-1, m)
    ident = [metrics.identification_times(tr, instance)[which] for tr in covered]
    rows = []
    for i in range(m):
        times = [x[i] for x in ident if x[i] is not None]
        rows.append({
            "objective": i,
            "maxFinalRegret": float(final[:, i].max()) if final.size else None,
            "regretBound": regret_bound[i],
            "maxSamples": max(times) if times else None,
            "sampleBound": sample_bound[i],
            "regretWithinBound": bool(final.size == 0 or final[:, i].max() <= regret_bound[i]),
            "samplesWithinBound": bool(not times or max(times) <= sample_bound[i]),
        })
    return {"coveredTrials": len(covered), "objectives": rows}


def _instance_lambda(config: ExperimentConfig, instance: BanditInstance) -> float:
    for p in config.policies:
        if p.name == "lexelim-in" and p.lam is not None:
            return p.lam
    return compute_lambda(instance)


def aggregate(result: ExperimentResult) -> dict:
    cfg = result.config
    out = {"config": _portable(cfg), "instances": {}}
    for r in result.instances:
        lam = _instance_lambda(cfg, r.instance)
        report = metrics.BoundReport.evaluate(r.instance, cfg.delta, lam)
        out["instances"][r.label] = {
            "K": r.instance.K,
            "m": r.instance.m,
            "lexOptimal": lex_optimal_arm(r.instance),
            "lambda": lam,
            "policies": {k: policy_summary(p, r.instance) for k, p in r.policies.items()},
            "bounds": report.to_dict(),
            "boundComparison": {
                k: c for k, p in r.policies.items()
                if (c := bound_comparison(r.instance, p)) is not None
            },
        }
    return out


# ---------------------------------------------------------------- file output

def _portable(cfg: ExperimentConfig) -> dict:
    # the output location is excluded so reruns elsewhere stay byte-identical
    d = cfg.to_dict()
    d.pop("output")
    return d


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def trace_paths(root: Path, label: str, key: str, trial: int) -> tuple[Path, Path]:
    d = root / "traces" / label / key
    return d / f"trial_{trial:04d}.jsonl", d / f"trial_{trial:04d}.summary.json"


def write_trace(trace: RegretTrace, jsonl: Path, summary: Path) -> None:
    jsonl.parent.mkdir(parents=True, exist_ok=True)
    jsonl.write_text("".join(json.dumps(row) + "\n" for row in trace.checkpoint_rows()))
    s = trace.summary()
    if trace.plays is not None:
        s["plays"] = [int(a) for a in trace.plays]
    summary.write_text(_dump_json(s))


def read_trace(jsonl: Path, summary: Path) -> RegretTrace:
    rows = [json.loads(line) for line in jsonl.read_text().splitlines() if line.strip()]
    s = json.loads(summary.read_text())
    stop = s["stoppingTime"]
    return RegretTrace(
        policy=s["policy"],
        checkpoints=np.array([r["t"] for r in rows], dtype=np.int64),
        regret=np.array([r["regret"] for r in rows], dtype=np.float64),
        active_sizes=np.array([r["activeSize"] for r in rows], dtype=np.int64),
        pulls=np.array(s["pulls"], dtype=np.int64),
        rounds=int(s["rounds"]),
        stopping_time=None if stop == "budget-exhausted" else int(stop),
        recommended=int(s["recommended"]),
        eliminations=[EliminationRecord.from_dict(e) for e in s["eliminations"]],
        anomalies=list(s["anomalies"]),
        violations=dict(s["violations"]),
        astar_lost_round=s["astarLostRound"],
        coverage_held=s["coverageHeld"],
        coverage_failed_round=s["coverageFailedRound"],
        plays=np.array(s["plays"], dtype=np.int64) if "plays" in s else None,
    )


def regret_csv(summary: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REGRET_CSV_HEADER)
    for label, inst in summary["instances"].items():
        for key, ps in inst["policies"].items():
            for k, t in enumerate(ps["checkpoints"]):
                for i in range(inst["m"]):
                    w.writerow([label, t, key, i, repr(ps["meanRegret"][k][i]), repr(ps["stdRegret"][k][i])])
    return buf.getvalue()


def stopping_csv(summary: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STOPPING_CSV_HEADER)
    for label, inst in summary["instances"].items():
        for key, ps in inst["policies"].items():
            mean, std = ps["meanStoppingTime"], ps["stdStoppingTime"]
            w.writerow([label, key, ps["trials"], ps["successes"], ps["budgetExhausted"],
                        "" if mean is None else repr(mean), "" if std is None else repr(std)])
    return buf.getvalue()


def write_outputs(result: ExperimentResult, out: Path) -> dict:
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    (out / "config.yaml").write_text(yaml.safe_dump(_portable(result.config), sort_keys=False))
    for r in result.instances:
        p = out / "instances" / f"{r.label}.json"
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(_dump_json(r.instance.to_dict()))
        for key, pr in r.policies.items():
            for t, tr in enumerate(pr.traces):
                write_trace(tr, *trace_paths(out, r.label, key, t))
    summary = aggregate(result)
    (out / "summary.json").write_text(_dump_json(summary))
    (out / "regret.csv").write_text(regret_csv(summary))
    (out / "stopping.csv").write_text(stopping_csv(summary))
    return summary


def load_result(config: ExperimentConfig, root: Path, base: Path = Path(".")) -> Optional[ExperimentResult]:
    """Rebuild results from trace files under ``root``; None if none exist."""
    root = Path(root)
    instances = []
    found = False
    for label, inst in config.instance.resolve(base):
        by_policy = {}
        for spec in config.policies:
            spec = spec.resolve(inst)
            traces = []
            for t in range(config.trials):
                jsonl, summ = trace_paths(root, label, spec.key, t)
                if not (jsonl.exists() and summ.exists()):
                    break
                traces.append(read_trace(jsonl, summ))
            if traces:
                found = True
                by_policy[spec.key] = PolicyResult(
                    spec, traces, [audit.audit_trace(tr, inst, spec) for tr in traces]
                )
        instances.append(InstanceResult(label, inst, by_policy))
    return ExperimentResult(config, instances) if found else None


# ---------------------------------------------------------------- bounds / verify

def bounds_report(config: ExperimentConfig, traces_root: Optional[Path], base: Path = Path(".")) -> dict:
    loaded = load_result(config, traces_root, base) if traces_root is not None else None
    out = {"delta": config.delta, "instances": {}}
    for label, inst in config.instance.resolve(base):
        lam = _instance_lambda(config, inst)
        entry = {"bounds": metrics.BoundReport.evaluate(inst, config.delta, lam).to_dict()}
        if loaded is not None:
            pols = next(r.policies for r in loaded.instances if r.label == label)
            entry["comparison"] = {
                k: c for k, p in pols.items() if (c := bound_comparison(inst, p)) is not None
            }
        out["instances"][label] = entry
    return out


def verify_result(result: ExperimentResult, level: float = 0.99) -> dict:
    """Run the invariant battery; ``passed`` is False on any finding."""
    cfg = result.config
    checks = []

    def add(name, ok, detail):
        checks.append({"check": name, "passed": bool(ok), "detail": detail})

    for r in result.instances:
        for key, pr in r.policies.items():
            totals = audit.AuditTotals()
            for tr, f in zip(pr.traces, pr.findings):
                totals.add(tr, f)
            tag = f"{r.label}/{key}"
            add(f"{tag} consistency", totals.consistency == 0, totals.consistency)
            if not pr.spec.eliminates:
                continue
            for name in ("balance", "shrink", "nesting"):
                v = getattr(totals, name)
                add(f"{tag} {name}", v == 0, v)
            add(f"{tag} retention", totals.retention == 0, totals.retention)
            add(f"{tag} pull ceilings", totals.ceiling_trials == 0,
                {"trials": totals.ceiling_trials, "examples": totals.ceiling_examples})
            add(f"{tag} sample bound", totals.sample_bound == 0, totals.sample_bound)
            add(f"{tag} regret bound", totals.regret_bound == 0, totals.regret_bound)
            if pr.spec.name == "lexelim-in":
                add(f"{tag} minimax bound", totals.minimax_bound == 0, totals.minimax_bound)
            n = totals.trials
            fails = n - totals.covered
            lo, hi = audit.clopper_pearson(fails, n, level)
            add(f"{tag} coverage frequency", lo <= pr.spec.delta,
                {"failures": fails, "trials": n, "lower": lo, "upper": hi, "delta": pr.spec.delta})
            if cfg.mode == "bai":
                wrong = n - totals.correct
                lo, hi = audit.clopper_pearson(wrong, n, level)
                add(f"{tag} identification frequency", lo <= pr.spec.delta,
                    {"failures": wrong, "trials": n, "lower": lo, "upper": hi, "delta": pr.spec.delta})
    return {"passed": all(c["passed"] for c in checks), "checks": checks}
