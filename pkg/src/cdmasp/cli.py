"""Command-line front end.

Subcommands: ``simulate``, ``ber-sweep``, ``oracle-compare``, ``stability``.
Exit status is 0 on success (a non-converged run is still a success), 1 on
runtime or I/O failure and 2 on usage or specification errors.  When
``--out`` is omitted, results go to ``$CDMASP_OUTPUT_DIR/<command>.csv``
(current directory if unset).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import stability_scan
from .detector import DetectorConfig, run_detector
from .exceptions import CdmaspError
from .experiments import (
    BER_SWEEP_HEADER,
    STABILITY_HEADER,
    ExperimentSpec,
    fmt,
    oracle_compare,
    run_ber_sweep,
    write_rows,
)
from .model import BRUTE_FORCE_CAP, generate_instance
from .trace import MacroRecord, MacroTrace

SPEC_SCHEMA_VERSION = 1
OUTPUT_DIR_ENV = "CDMASP_OUTPUT_DIR"


class UsageError(Exception):
    pass


def _default_out(name: str) -> Path:
    return Path(os.environ.get(OUTPUT_DIR_ENV, ".")) / f"{name}.csv"


def _write(path, text: str) -> Path:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def _float_list(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _add_detector_flags(p, with_mode=True):
    p.add_argument("--sigma", type=float, required=True, help="noise level assumed by the detector")
    p.add_argument("--x", type=float, default=0.5, help="RSB parameter in [0, 1]")
    if with_mode:
        p.add_argument("--mode", choices=("sp", "bp", "mf"), default="sp")
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--damping", type=float, default=0.0)
    p.add_argument("--quad-order", type=int, default=40)
    p.add_argument("--init-q1", type=float, default=0.0, help="initial second moment M_k (SP only)")


def _config(args, **over) -> DetectorConfig:
    mode = getattr(args, "mode", "sp")
    kw = dict(sigma=getattr(args, "sigma", 1.0), x=args.x, max_iters=args.max_iter, tol=args.tol, damping=args.damping,
              quad_order=args.quad_order, init_q1=args.init_q1, mode="bp" if mode == "bp" else "sp")
    kw.update(over)
    return DetectorConfig(**kw)


def _mf_trace(res, bits) -> MacroTrace:
    nan = float("nan")
    overlap = float(np.mean(bits * res.soft))
    ber = float(np.mean(res.decisions != bits))
    return MacroTrace([MacroRecord(1, nan, nan, nan, nan, nan, overlap, ber, nan)])


def cmd_simulate(args) -> int:
    cfg = _config(args)
    inst = generate_instance(args.n, args.k, args.sigma0, args.seed)
    res = run_detector(inst, cfg, args.mode)
    trace = res.trace if res.trace is not None else _mf_trace(res, inst.bits)
    out = _write(args.out or _default_out("simulate"), trace.to_csv())
    if args.instance_out:
        inst.save(args.instance_out)
    ber = float(np.mean(res.decisions != inst.bits))
    print(f"ber={fmt(ber)} converged={str(res.converged).lower()} iterations={res.iterations_used} trace={out}")
    return 0


def cmd_ber_sweep(args) -> int:
    try:
        text = Path(args.spec).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read spec file: {exc}") from exc
    spec = ExperimentSpec.from_json(text)
    rows = run_ber_sweep(spec)
    out = _write(args.out or _default_out("ber-sweep"), write_rows(BER_SWEEP_HEADER, rows))
    print(f"points={len(rows)} results={out}")
    return 0


def cmd_oracle_compare(args) -> int:
    if args.k > args.cap:
        raise UsageError(f"--k {args.k} exceeds the brute-force cap {args.cap}")
    cfg = _config(args)
    cmp = oracle_compare(args.n, args.k, args.trials, args.sigma0, args.sigma, args.x, args.seed, cfg, args.cap)
    out = _write(args.out or _default_out("oracle-compare"), cmp.trials_csv())
    if args.summary_out:
        _write(args.summary_out, cmp.summary_csv())
    for metric, (mean, se) in cmp.summary.items():
        print(f"{metric}: mean={fmt(mean)} se={fmt(se)}")
    status = 0
    if args.sigma == args.sigma0:
        for det, ok in cmp.optimality.items():
            print(f"mpm_optimality_vs_{det}: {'PASS' if ok else 'FAIL'}")
            status |= 0 if ok else 1
    print(f"trials={out}")
    return status


def cmd_stability(args) -> int:
    k = int(round(args.beta * args.n))
    if k < 1:
        raise UsageError("--beta * --n must give at least one user")
    cfg = _config(args, sigma=1.0)
    instances = [(args.seed + s, generate_instance(args.n, k, args.sigma0, args.seed + s)) for s in range(args.seeds)]
    report = stability_scan(instances, cfg, args.sigma_grid, epsilon=args.epsilon,
                            window=(args.burn_in, args.steps), threshold=args.threshold)
    rows = [{"sigma": e.sigma, "mode": e.mode, "x": e.x, "lambda_hat": e.lambda_hat, "verdict": e.verdict,
             "epsilon": e.epsilon, "seed": e.seed} for e in report.entries]
    majority = report.majority()
    for s, verdict in majority.items():
        lams = [e.lambda_hat for e in report.entries if e.sigma == s]
        rows.append({"sigma": s, "mode": cfg.mode, "x": cfg.x, "lambda_hat": float(np.nanmedian(lams))
                     if np.any(np.isfinite(lams)) else float("nan"),
                     "verdict": verdict, "epsilon": args.epsilon, "seed": "majority"})
    out = _write(args.out or _default_out("stability"), write_rows(STABILITY_HEADER, rows))
    for s, verdict in majority.items():
        print(f"sigma={fmt(s)} verdict={verdict}")
    cross = report.crossover()
    print("crossover=" + ("none" if cross is None else f"{fmt(cross[0])}..{fmt(cross[1])}") + f" report={out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cdmasp", description="CDMA multiuser detection by survey propagation")
    parser.add_argument("--version", action="version",
                        version=f"cdmasp {__version__} (spec-schema {SPEC_SCHEMA_VERSION})")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one detection and write its macroscopic trace")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--sigma0", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_detector_flags(p)
    p.add_argument("--out")
    p.add_argument("--instance-out", help="also save the generated instance as JSON")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ber-sweep", help="BER over a grid described by a JSON spec file")
    p.add_argument("spec")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ber_sweep)

    p = sub.add_parser("oracle-compare", help="compare detectors with the exhaustive MPM oracle")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--sigma0", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cap", type=int, default=BRUTE_FORCE_CAP)
    _add_detector_flags(p, with_mode=False)
    p.add_argument("--out")
    p.add_argument("--summary-out")
    p.set_defaults(func=cmd_oracle_compare)

    p = sub.add_parser("stability", help="two-replica divergence probe over a sigma grid")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--sigma0", type=float, default=1.0)
    p.add_argument("--sigma-grid", type=_float_list, required=True)
    p.add_argument("--mode", choices=("sp", "bp"), default="bp")
    p.add_argument("--x", type=float, default=0.5)
    p.add_argument("--epsilon", type=float, default=1e-8)
    p.add_argument("--seeds", type=int, default=1, help="number of instances per grid point")
    p.add_argument("--seed", type=int, default=0, help="first instance seed")
    p.add_argument("--steps", type=int, default=60)
    p.add_argument("--burn-in", type=int, default=5)
    p.add_argument("--threshold", type=float, default=0.05)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--damping", type=float, default=0.0)
    p.add_argument("--quad-order", type=int, default=40)
    p.add_argument("--init-q1", type=float, default=0.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_stability)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, CdmaspError) as exc:
        print(f"cdmasp {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cdmasp {args.command}: I/O error: {exc}", file=sys.stderr)
        return 1
    except RuntimeError as exc:
        print(f"cdmasp {args.command}: runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
