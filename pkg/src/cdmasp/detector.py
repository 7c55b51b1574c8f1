"""Gaussian-approximated survey-propagation detector and its relatives.

One iteration of the SP detector runs

    a   <- [sigma^2 (y - S m / sqrt(N)) + Xi a] / (sigma^2 + Xi)
    d   <- S^T a / sqrt(N) + Gamma m
    m, M <- tilted moments of tanh(h / sigma^2), h = d + sqrt(Delta) z

and then refreshes ``Q0 = mean(m^2)``, ``Q1 = mean(M)`` and the coefficients
``Delta``, ``Gamma``, ``Xi`` that the next iteration uses.  All updates are
synchronous.  Setting ``Delta = 0`` gives the BP detector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import ConsistencyError, DataError, DimensionError, ParameterError
from .model import Instance, open_unit, sgn
from .quadrature import DEFAULT_ORDER, build_rule, tanh_moments, tilted_moments_array
from .trace import MacroTrace, macro_record

MODES = ("sp", "bp")
_NEG_TOL = 1e-12


@dataclass(frozen=True)
class DetectorConfig:
    """Settings of one detection run.

    ``init_q1`` is the initial per-user second moment ``M_k``.  At its default
    of 0 the state starts with ``Q1 = Q0`` and, because ``Delta`` then stays
    exactly 0, the SP recursion follows the BP trajectory.  A positive value
    starts SP off the replica-symmetric manifold.  ``freeze_delta`` holds
    ``Delta`` at 0 regardless of ``Q1 - Q0``.
    """

    sigma: float = 1.0
    x: float = 0.5
    max_iters: int = 100
    tol: float = 1e-6
    damping: float = 0.0
    quad_order: int = DEFAULT_ORDER
    mode: str = "sp"
    init_q1: float = 0.0
    freeze_delta: bool = False

    def __post_init__(self):
        mode = str(self.mode).lower()
        object.__setattr__(self, "mode", mode)
        if mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ParameterError(f"sigma must be positive, got {self.sigma}")
        if not 0.0 <= self.x <= 1.0:
            raise ParameterError(f"x must lie in [0, 1], got {self.x}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ParameterError(f"max_iters must be a positive integer, got {self.max_iters}")
        if not self.tol > 0:
            raise ParameterError(f"tol must be positive, got {self.tol}")
        if not 0.0 <= self.damping < 1.0:
            raise ParameterError(f"damping must lie in [0, 1), got {self.damping}")
        if int(self.quad_order) != self.quad_order or self.quad_order < 2:
            raise ParameterError(f"quad_order must be an integer >= 2, got {self.quad_order}")
        if not 0.0 <= self.init_q1 <= 1.0:
            raise ParameterError(f"init_q1 must lie in [0, 1], got {self.init_q1}")


class Channel:
    """Detector-side view of a transmission: scaled codes, signal, optional truth."""

    def __init__(self, codes, y, truth=None):
        codes = np.asarray(codes)
        y = np.asarray(y, dtype=np.float64)
        if codes.ndim != 2 or y.shape != (codes.shape[0],):
            raise DimensionError(f"codes {codes.shape} and y {y.shape} are inconsistent")
        if not np.all(np.isfinite(y)):
            raise DataError("received signal contains non-finite values")
        self.n, self.k = codes.shape
        self.y = y
        self.truth = truth
        self.scaled = np.ascontiguousarray(codes, dtype=np.float64) / np.sqrt(self.n)

    @property
    def beta(self) -> float:
        return self.k / self.n


def as_channel(obj) -> Channel:
    if isinstance(obj, Channel):
        return obj
    if isinstance(obj, Instance):
        return _instance_channel(obj)
    raise TypeError(f"expected Instance or Channel, got {type(obj).__name__}")


def _instance_channel(inst: Instance) -> Channel:
    ch = inst.__dict__.get("_channel")
    if ch is None:
        ch = Channel(inst.codes, inst.y, inst.bits)
        inst.__dict__["_channel"] = ch
    return ch


@dataclass
class DetectorState:
    t: int
    a: np.ndarray
    m: np.ndarray
    m_prev: np.ndarray
    M: np.ndarray
    d: np.ndarray
    Q0: float
    Q1: float
    Delta: float
    Gamma: float
    Xi: float
    beta: float
    residual: float = float("nan")

    def copy(self) -> "DetectorState":
        return replace(self, a=self.a.copy(), m=self.m.copy(), m_prev=self.m_prev.copy(),
                       M=self.M.copy(), d=self.d.copy())


@dataclass
class DetectionResult:
    decisions: np.ndarray
    soft: np.ndarray
    iterations_used: int
    converged: bool
    trace: MacroTrace | None = None
    states: list = field(default_factory=list)


def coefficients(q0: float, q1: float, beta: float, sigma: float, x: float, freeze_delta: bool = False):
    """``(Delta, Gamma, Xi)`` from the order parameters ``Q0 <= Q1``."""
    spread = q1 - q0
    if spread < -_NEG_TOL:
        raise ConsistencyError(f"Q1 < Q0 beyond rounding (Q0={q0!r}, Q1={q1!r})")
    spread = max(spread, 0.0)
    s2 = sigma * sigma
    xi = beta * (1.0 - q1 + x * spread)
    gamma = s2 / (s2 + xi)
    if freeze_delta:
        delta = 0.0
    else:
        delta = beta * spread * s2 / ((s2 + beta * (1.0 - q1)) * (s2 + xi))
    return delta, gamma, xi


def _order_parameters(m, M):
    return float(np.mean(m * m)), float(np.mean(M))


def init_state(n: int, k: int, config: DetectorConfig, m0=None) -> DetectorState:
    """Unbiased start ``a = 0``, ``m = 0`` (or ``m0``), with coefficients from ``Q``."""
    if n < 1 or k < 1:
        raise DimensionError(f"need n >= 1 and k >= 1, got n={n}, k={k}")
    m = np.zeros(k) if m0 is None else open_unit(np.array(m0, dtype=np.float64))
    if m.shape != (k,):
        raise DimensionError(f"initial m has shape {m.shape}, expected ({k},)")
    if not np.all(np.isfinite(m)):
        raise DataError("initial m contains non-finite values")
    if config.mode == "bp":
        M = m * m
    else:
        M = np.maximum(m * m, config.init_q1)
    beta = k / n
    q0, q1 = _order_parameters(m, M)
    delta, gamma, xi = coefficients(q0, q1, beta, config.sigma, config.x,
                                    config.freeze_delta or config.mode == "bp")
    return DetectorState(t=0, a=np.zeros(n), m=m, m_prev=np.zeros(k), M=M, d=np.zeros(k),
                         Q0=q0, Q1=q1, Delta=delta, Gamma=gamma, Xi=xi, beta=beta)


def horizontal_update(state: DetectorState, channel, config: DetectorConfig) -> np.ndarray:
    """Chip-side messages for the next time step; ``state`` is not modified."""
    ch = as_channel(channel)
    s2 = config.sigma ** 2
    residual = ch.y - ch.scaled @ state.m
    return (s2 * residual + state.Xi * state.a) / (s2 + state.Xi)


def vertical_update(state: DetectorState, channel, config: DetectorConfig, a: np.ndarray) -> DetectorState:
    """User-side update given fresh chip messages ``a``; returns a new state."""
    ch = as_channel(channel)
    d = ch.scaled.T @ a + state.Gamma * state.m
    if not np.all(np.isfinite(d)):
        raise ConsistencyError(f"non-finite field at t={state.t + 1}")
    bp = config.mode == "bp"
    if bp:
        m_new, M_new = tanh_moments(d / config.sigma ** 2)
    else:
        m_new, M_new = tilted_moments_array(d, state.Delta, config.sigma, config.x,
                                            build_rule(config.quad_order))
    g = config.damping
    if g > 0.0:
        m_new = (1.0 - g) * m_new + g * state.m
        M_new = m_new * m_new if bp else (1.0 - g) * M_new + g * state.M
    q0, q1 = _order_parameters(m_new, M_new)
    delta, gamma, xi = coefficients(q0, q1, state.beta, config.sigma, config.x,
                                    config.freeze_delta or bp)
    residual = float(np.max(np.abs(m_new - state.m)))
    return DetectorState(t=state.t + 1, a=a, m=m_new, m_prev=state.m, M=M_new, d=d,
                         Q0=q0, Q1=q1, Delta=delta, Gamma=gamma, Xi=xi, beta=state.beta,
                         residual=residual)


def step(state: DetectorState, channel, config: DetectorConfig) -> DetectorState:
    a = horizontal_update(state, channel, config)
    return vertical_update(state, channel, config, a)


def _check_finite(state: DetectorState) -> None:
    scalars = (state.Q0, state.Q1, state.Delta, state.Gamma, state.Xi, state.residual)
    if not (np.all(np.isfinite(state.m)) and np.all(np.isfinite(state.a)) and all(map(math.isfinite, scalars))):
        raise ConsistencyError(f"non-finite detector state at t={state.t}")


def iterate(channel, config: DetectorConfig, m0=None, *, stop_on_convergence: bool = True,
            steps: int | None = None):
    """Yield the states of a run, starting with the initial one."""
    ch = as_channel(channel)
    state = init_state(ch.n, ch.k, config, m0)
    yield state
    for _ in range(config.max_iters if steps is None else steps):
        state = step(state, ch, config)
        _check_finite(state)
        yield state
        if stop_on_convergence and state.residual < config.tol:
            return


def detect(instance, config: DetectorConfig, *, keep_states: bool = False, m0=None) -> DetectionResult:
    """Run the iterative detector until ``residual < tol`` or ``max_iters``.

    Non-convergence is reported through ``converged=False``, not raised.
    """
    ch = as_channel(instance)
    records, states = [], []
    last = None
    for st in iterate(ch, config, m0):
        records.append(macro_record(st, ch.truth))
        if keep_states:
            states.append(st)
        last = st
    converged = last.t > 0 and last.residual < config.tol
    return DetectionResult(decisions=sgn(last.m), soft=last.m, iterations_used=last.t,
                           converged=bool(converged), trace=MacroTrace(records), states=states)


def bp_detect(instance, config: DetectorConfig, **kwargs) -> DetectionResult:
    """BP detector: the SP loop with deterministic fields (``Delta = 0``, ``M = m^2``)."""
    return detect(instance, replace(config, mode="bp"), **kwargs)


def matched_filter(instance, config: DetectorConfig | None = None) -> DetectionResult:
    """Conventional single-user detector: correlate ``y`` with each code."""
    ch = as_channel(instance)
    soft = ch.scaled.T @ ch.y
    return DetectionResult(decisions=sgn(soft), soft=soft, iterations_used=1, converged=True)


def run_detector(instance, config: DetectorConfig, mode: str | None = None, **kwargs) -> DetectionResult:
    """Dispatch on ``mode`` in {"sp", "bp", "mf"} (defaults to ``config.mode``)."""
    mode = (mode or config.mode).lower()
    if mode == "mf":
        return matched_filter(instance, config)
    if mode == "bp":
        return bp_detect(instance, config, **kwargs)
    if mode == "sp":
        return detect(instance, replace(config, mode="sp"), **kwargs)
    raise ParameterError(f"unknown detector mode {mode!r}")
