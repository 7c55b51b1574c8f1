"""Macroscopic diagnostics: two-replica stability probe and fixed-point summaries."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .detector import DetectorConfig, as_channel, iterate
from .exceptions import EmptySummaryError, ParameterError
from .trace import MacroTrace, record_trace

VERDICTS = ("converging", "diverging", "inconclusive")

# D below this is rounding noise, above it the replicas have decorrelated
DISTANCE_FLOOR = 1e-30
DISTANCE_SATURATION = 1e-3


@dataclass
class StabilityEntry:
    """Outcome of one two-replica probe."""

    sigma: float
    mode: str
    x: float
    lambda_hat: float
    verdict: str
    epsilon: float
    seed: int
    distances: np.ndarray = field(repr=False, default=None)
    diagnostic: str = ""


@dataclass
class StabilityReport:
    entries: list

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([e.sigma for e in self.entries])

    @property
    def verdicts(self) -> list:
        return [e.verdict for e in self.entries]

    def majority(self) -> dict:
        """Majority verdict per sigma; ties resolve to ``inconclusive``."""
        out = {}
        for s in sorted({e.sigma for e in self.entries}):
            votes = [e.verdict for e in self.entries if e.sigma == s]
            counts = {v: votes.count(v) for v in VERDICTS}
            best = max(counts.values())
            winners = [v for v in VERDICTS if counts[v] == best]
            out[s] = winners[0] if len(winners) == 1 else "inconclusive"
        return out

    def crossover(self):
        """``(lo, hi)``: largest diverging sigma and the next converging one above it.

        Uses the majority verdicts.  Returns ``None`` when there is no
        diverging-to-converging flip along increasing sigma.
        """
        maj = self.majority()
        sig = sorted(maj)
        for i in range(len(sig) - 1, -1, -1):
            if maj[sig[i]] == "diverging":
                above = [s for s in sig[i + 1:] if maj[s] == "converging"]
                return (sig[i], above[0]) if above else None
        return None


def fit_growth_rate(distances, burn_in: int = 5, stop: int | None = None):
    """Least-squares slope of ``log D^t`` per iteration.

    The fit starts at ``burn_in`` and ends at the first point that reaches the
    rounding floor or the saturation level (that point included).  When fewer
    than two points remain, the fit restarts from ``t = 0``.  Returns ``nan``
    if ``D`` is identically zero.
    """
    dist = np.asarray(distances, dtype=np.float64)
    stop = len(dist) if stop is None else min(stop, len(dist))
    if not np.any(dist[:stop] > 0):
        return float("nan")

    def window(start):
        ts = []
        for t in range(start, stop):
            ts.append(t)
            if dist[t] <= DISTANCE_FLOOR or dist[t] >= DISTANCE_SATURATION:
                break
        return ts

    ts = window(burn_in)
    if len(ts) < 2:
        ts = window(0)
    if len(ts) < 2:
        return float("nan")
    logd = np.log(np.maximum(dist[ts], DISTANCE_FLOOR))
    slope, _ = np.polyfit(np.asarray(ts, dtype=np.float64), logd, 1)
    return float(slope)


def classify(lambda_hat: float, threshold: float = 0.05) -> str:
    if not math.isfinite(lambda_hat):
        return "inconclusive"
    if lambda_hat > threshold:
        return "diverging"
    if lambda_hat < -threshold:
        return "converging"
    return "inconclusive"


def two_replica_probe(instance, config: DetectorConfig, epsilon: float = 1e-8,
                      window=(5, 60), threshold: float = 0.05, seed: int = 0) -> StabilityEntry:
    """Measure how fast two nearby trajectories on one instance separate.

    Replica A starts from ``m = 0``; replica B from ``m = epsilon * U(-1, 1)``.
    Both run ``window[1]`` iterations without early stopping and
    ``D^t = mean((m_A - m_B)^2)`` is recorded.
    """
    if not (epsilon >= 0 and math.isfinite(epsilon)):
        raise ParameterError(f"epsilon must be a finite non-negative number, got {epsilon}")
    burn_in, steps = int(window[0]), int(window[1])
    if not 0 <= burn_in < steps:
        raise ParameterError(f"window must satisfy 0 <= burn_in < steps, got {window}")
    ch = as_channel(instance)
    rng = np.random.default_rng(seed)
    kick = epsilon * rng.uniform(-1.0, 1.0, size=ch.k)
    run_a = iterate(ch, config, stop_on_convergence=False, steps=steps)
    run_b = iterate(ch, config, m0=kick, stop_on_convergence=False, steps=steps)
    dist = np.array([np.mean((sa.m - sb.m) ** 2) for sa, sb in zip(run_a, run_b)])
    lam = fit_growth_rate(dist, burn_in, steps + 1)
    diagnostic = ""
    if not np.any(dist > 0):
        diagnostic = "replicas identical at every step"
    verdict = classify(lam, threshold)
    return StabilityEntry(sigma=config.sigma, mode=config.mode, x=config.x, lambda_hat=lam,
                          verdict=verdict, epsilon=epsilon, seed=seed, distances=dist,
                          diagnostic=diagnostic)


def stability_scan(instances, config: DetectorConfig, sigmas, **probe_kw) -> StabilityReport:
    """Probe every ``(instance, sigma)`` pair; ``instances`` is a list of (seed, instance)."""
    entries = []
    for s in sigmas:
        cfg = replace(config, sigma=float(s))
        for seed, inst in instances:
            entries.append(two_replica_probe(inst, cfg, seed=seed, **probe_kw))
    return StabilityReport(entries)


SUMMARY_FIELDS = ("q0", "q1", "overlap", "ber")


@dataclass
class GroupSummary:
    label: object
    runs: int
    mean: dict
    se: dict


@dataclass
class FixedPointSummary:
    groups: list
    agreement: dict

    def group(self, label) -> GroupSummary:
        for g in self.groups:
            if g.label == label:
                return g
        raise KeyError(label)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["label", "runs"]
        for f in SUMMARY_FIELDS:
            header += [f"{f}_mean", f"{f}_se"]
        w.writerow(header)
        for g in self.groups:
            row = [g.label, g.runs]
            for f in SUMMARY_FIELDS:
                row += [repr(g.mean[f]), repr(g.se[f])]
            w.writerow(row)
        return buf.getvalue()


def _terminal(run):
    """Final record and convergence flag of a DetectionResult or (trace, converged)."""
    if isinstance(run, tuple):
        trace, converged = run
    else:
        trace, converged = run.trace, run.converged
    if not isinstance(trace, MacroTrace):
        raise ParameterError("runs must carry a MacroTrace")
    return trace.final, bool(converged)


def agreement_statistic(mean_a: float, se_a: float, mean_b: float, se_b: float) -> float:
    """``|mean_a - mean_b| / sqrt(se_a^2 + se_b^2)``, with 0/0 taken as 0."""
    diff = abs(mean_a - mean_b)
    pooled = math.hypot(se_a, se_b)
    if pooled == 0.0:
        return 0.0 if diff == 0.0 else math.inf
    return diff / pooled


def fixed_point_summary(runs_by_group: dict, min_runs: int = 20) -> FixedPointSummary:
    """Mean and standard error of terminal observables per group (system size).

    Only converged runs count.  ``agreement`` maps each observable to the
    statistic between the first and last group in key order.
    """
    if len(runs_by_group) < 2:
        raise ParameterError("need at least two groups to compare")
    groups = []
    for label, runs in runs_by_group.items():
        finals = [rec for rec, ok in map(_terminal, runs) if ok]
        if not finals:
            raise EmptySummaryError(f"group {label!r} has no converged runs")
        if len(finals) < min_runs:
            raise ParameterError(f"group {label!r} has {len(finals)} converged runs, need {min_runs}")
        mean, se = {}, {}
        for f in SUMMARY_FIELDS:
            vals = np.array([getattr(r, f) for r in finals])
            if np.all(vals == vals[0]):
                # constant column: report it exactly rather than with rounding residue
                mean[f], se[f] = float(vals[0]), 0.0
                continue
            mean[f] = float(np.mean(vals))
            se[f] = float(np.std(vals, ddof=1) / np.sqrt(len(vals)))
        groups.append(GroupSummary(label=label, runs=len(finals), mean=mean, se=se))
    first, last = groups[0], groups[-1]
    agreement = {f: agreement_statistic(first.mean[f], first.se[f], last.mean[f], last.se[f])
                 for f in SUMMARY_FIELDS}
    return FixedPointSummary(groups=groups, agreement=agreement)


__all__ = [
    "FixedPointSummary", "StabilityEntry", "StabilityReport", "agreement_statistic", "classify",
    "fit_growth_rate", "fixed_point_summary", "record_trace", "stability_scan", "two_replica_probe",
]
