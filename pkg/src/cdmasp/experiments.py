"""Seeded Monte Carlo harness behind the command-line tools."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .detector import DetectorConfig, run_detector
from .exceptions import CapacityError, ParameterError
from .model import BRUTE_FORCE_CAP, PosteriorQuery, exhaustive_mpm, generate_instance

SEED_STRIDE = 10007

BER_SWEEP_HEADER = ("n", "k", "beta", "sigma0", "sigma", "x", "mode", "seeds",
                    "ber_mean", "ber_se", "iters_mean", "conv_rate")
ORACLE_TRIAL_HEADER = ("trial", "seed", "ber_mpm", "ber_sp", "ber_bp", "ber_mf",
                       "mad_sp", "mad_bp", "agree_sp", "agree_bp")
STABILITY_HEADER = ("sigma", "mode", "x", "lambda_hat", "verdict", "epsilon", "seed")

_DETECTOR_KEYS = {"max_iters", "tol", "damping", "quad_order", "init_q1", "freeze_delta"}


class SpecError(ParameterError):
    """Invalid experiment specification; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def trial_seed(seed_base: int, point_index: int, trial: int) -> int:
    return seed_base + point_index * SEED_STRIDE + trial


def fmt(v) -> str:
    """Round-trip text for CSV cells."""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_rows(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(r[h]) for h in header])
    return buf.getvalue()


def mean_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return float("nan"), float("nan")
    se = float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return float(np.mean(v)), se


@dataclass
class ExperimentSpec:
    """A Cartesian grid of detection experiments.

    Either ``k`` or ``beta`` lists the user counts; ``sigma`` may be the
    string ``"matched"`` to set the assumed noise equal to ``sigma0``.
    """

    n: list
    sigma0: list
    k: list | None = None
    beta: list | None = None
    sigma: list | str = "matched"
    x: list = field(default_factory=lambda: [0.5])
    mode: list = field(default_factory=lambda: ["sp"])
    seeds: int = 10
    seed_base: int = 0
    detector: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc) -> "ExperimentSpec":
        if not isinstance(doc, dict):
            raise SpecError("<root>", "spec must be a JSON object")
        known = {f.name for f in fields(cls)}
        for key in doc:
            if key not in known:
                raise SpecError(key, "unknown field")
        for key in ("n", "sigma0"):
            if key not in doc:
                raise SpecError(key, "required field missing")
        spec = cls(**doc)
        spec.validate()
        return spec

    @classmethod
    def from_json(cls, text: str) -> "ExperimentSpec":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecError(f"line {exc.lineno} column {exc.colno}", exc.msg) from exc
        return cls.from_dict(doc)

    def validate(self) -> None:
        def grid(name, value, check, what):
            if not isinstance(value, list) or not value:
                raise SpecError(name, "must be a non-empty array")
            for i, v in enumerate(value):
                if isinstance(v, bool) or not check(v):
                    raise SpecError(f"{name}[{i}]", f"{v!r} is not {what}")

        def is_int(v):
            return isinstance(v, int)

        def is_num(v):
            return isinstance(v, (int, float)) and math.isfinite(v)

        grid("n", self.n, lambda v: is_int(v) and v >= 1, "an integer >= 1")
        grid("sigma0", self.sigma0, lambda v: is_num(v) and v >= 0, "a number >= 0")
        if (self.k is None) == (self.beta is None):
            raise SpecError("k", "give exactly one of 'k' and 'beta'")
        if self.k is not None:
            grid("k", self.k, lambda v: is_int(v) and v >= 1, "an integer >= 1")
        else:
            grid("beta", self.beta, lambda v: is_num(v) and v > 0, "a number > 0")
        if self.sigma != "matched":
            grid("sigma", self.sigma, lambda v: is_num(v) and v > 0, "a number > 0 (or use \"matched\")")
        grid("x", self.x, lambda v: is_num(v) and 0 <= v <= 1, "a number in [0, 1]")
        grid("mode", self.mode, lambda v: v in ("sp", "bp", "mf"), "one of sp, bp, mf")
        if not is_int(self.seeds) or isinstance(self.seeds, bool) or self.seeds < 1:
            raise SpecError("seeds", "must be an integer >= 1")
        if not is_int(self.seed_base) or isinstance(self.seed_base, bool):
            raise SpecError("seed_base", "must be an integer")
        if not isinstance(self.detector, dict):
            raise SpecError("detector", "must be an object")
        for key in self.detector:
            if key not in _DETECTOR_KEYS:
                raise SpecError(f"detector.{key}", "unknown detector setting")
        for p in self.points():
            if p["k"] < 1:
                raise SpecError("beta", f"beta={p['beta']} with n={p['n']} gives no users")
            if p["sigma"] <= 0:
                raise SpecError("sigma", "matched noise needs sigma0 > 0; list explicit sigma values")
        try:
            self.base_config()
        except ParameterError as exc:
            raise SpecError("detector", str(exc)) from exc

    def base_config(self) -> DetectorConfig:
        return DetectorConfig(**self.detector)

    def points(self) -> list:
        """Grid points in deterministic Cartesian order."""
        users = self.k if self.k is not None else self.beta
        sigmas = [None] if self.sigma == "matched" else self.sigma
        out = []
        for n, u, s0, s, x, mode in itertools.product(self.n, users, self.sigma0, sigmas, self.x, self.mode):
            k = u if self.k is not None else int(round(u * n))
            out.append({"n": n, "k": k, "beta": k / n, "sigma0": float(s0),
                        "sigma": float(s0) if s is None else float(s), "x": float(x), "mode": mode})
        return out


def run_point(point: dict, seeds, base: DetectorConfig) -> dict:
    """Monte Carlo over ``seeds`` at one grid point."""
    cfg = replace(base, sigma=point["sigma"], x=point["x"], mode="bp" if point["mode"] == "bp" else "sp")
    bers, iters, conv = [], [], []
    for seed in seeds:
        inst = generate_instance(point["n"], point["k"], point["sigma0"], seed)
        res = run_detector(inst, cfg, point["mode"])
        bers.append(float(np.mean(res.decisions != inst.bits)))
        iters.append(res.iterations_used)
        conv.append(res.converged)
    ber_mean, ber_se = mean_se(bers)
    return {**point, "seeds": len(bers), "ber_mean": ber_mean, "ber_se": ber_se,
            "iters_mean": float(np.mean(iters)), "conv_rate": float(np.mean(conv))}


def run_ber_sweep(spec: ExperimentSpec) -> list:
    base = spec.base_config()
    rows = []
    for idx, point in enumerate(spec.points()):
        seeds = [trial_seed(spec.seed_base, idx, t) for t in range(spec.seeds)]
        rows.append(run_point(point, seeds, base))
    return rows


@dataclass
class OracleComparison:
    trials: list
    summary: dict
    optimality: dict

    def trials_csv(self) -> str:
        return write_rows(ORACLE_TRIAL_HEADER, self.trials)

    def summary_csv(self) -> str:
        rows = [{"metric": k, "mean": v[0], "se": v[1]} for k, v in self.summary.items()]
        return write_rows(("metric", "mean", "se"), rows)


def oracle_compare(n: int, k: int, trials: int, sigma0: float, sigma: float, x: float = 0.5,
                   seed: int = 0, base: DetectorConfig | None = None, cap: int = BRUTE_FORCE_CAP) -> OracleComparison:
    """Compare SP, BP and matched filter with the exhaustive MPM detector.

    ``optimality`` holds, per approximate detector, whether the paired BER
    difference ``mpm - det`` is at most two standard errors above zero; it is
    only meaningful when ``sigma == sigma0``.
    """
    if k > cap:
        raise CapacityError(f"K={k} exceeds the brute-force cap of {cap} users")
    base = DetectorConfig() if base is None else base
    cfg = replace(base, sigma=sigma, x=x)
    rows = []
    for t in range(trials):
        s = trial_seed(seed, 0, t)
        inst = generate_instance(n, k, sigma0, s)
        m_star, dec_star = exhaustive_mpm(PosteriorQuery(inst, sigma), cap)
        sp = run_detector(inst, cfg, "sp")
        bp = run_detector(inst, cfg, "bp")
        mf = run_detector(inst, cfg, "mf")
        rows.append({
            "trial": t, "seed": s,
            "ber_mpm": float(np.mean(dec_star != inst.bits)),
            "ber_sp": float(np.mean(sp.decisions != inst.bits)),
            "ber_bp": float(np.mean(bp.decisions != inst.bits)),
            "ber_mf": float(np.mean(mf.decisions != inst.bits)),
            "mad_sp": float(np.mean(np.abs(sp.soft - m_star))),
            "mad_bp": float(np.mean(np.abs(bp.soft - m_star))),
            "agree_sp": float(np.mean(sp.decisions == dec_star)),
            "agree_bp": float(np.mean(bp.decisions == dec_star)),
        })
    summary = {h: mean_se([r[h] for r in rows]) for h in ORACLE_TRIAL_HEADER[2:]}
    optimality = {}
    for det in ("sp", "bp", "mf"):
        diff_mean, diff_se = mean_se([r["ber_mpm"] - r[f"ber_{det}"] for r in rows])
        optimality[det] = bool(diff_mean <= 2.0 * diff_se)
    return OracleComparison(trials=rows, summary=summary, optimality=optimality)
