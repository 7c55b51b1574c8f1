"""Per-iteration macroscopic observables of a detection run."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import DimensionError
from .model import sgn

CSV_HEADER = ("t", "q0", "q1", "delta", "gamma", "xi", "overlap", "ber", "residual")


class MacroRecord(NamedTuple):
    t: int
    q0: float
    q1: float
    delta: float
    gamma: float
    xi: float
    overlap: float
    ber: float
    residual: float


def overlap_and_ber(m: np.ndarray, truth) -> tuple[float, float]:
    """Overlap ``mean(b0 * m)`` and the fraction of sign errors.

    Returns NaNs when the true bits are unknown.
    """
    if truth is None:
        return float("nan"), float("nan")
    truth = np.asarray(truth)
    if truth.shape != m.shape:
        raise DimensionError(f"true bits have shape {truth.shape}, soft outputs {m.shape}")
    overlap = float(np.mean(truth * m))
    ber = float(np.mean(sgn(m) != truth))
    return overlap, ber


def macro_record(state, truth=None) -> MacroRecord:
    overlap, ber = overlap_and_ber(state.m, truth)
    return MacroRecord(
        t=int(state.t),
        q0=float(state.Q0),
        q1=float(state.Q1),
        delta=float(state.Delta),
        gamma=float(state.Gamma),
        xi=float(state.Xi),
        overlap=overlap,
        ber=ber,
        residual=float(state.residual),
    )


@dataclass
class MacroTrace:
    """Time series of :class:`MacroRecord`, one per iteration including ``t = 0``."""

    records: list

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def __iter__(self):
        return iter(self.records)

    @property
    def final(self) -> MacroRecord:
        return self.records[-1]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self, fh=None) -> str:
        """Write the trace as CSV; returns the text when ``fh`` is None."""
        buf = io.StringIO() if fh is None else fh
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.records:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])
        return buf.getvalue() if fh is None else ""


def record_trace(states, instance) -> MacroTrace:
    """Build a trace from detector states of one run, in order."""
    truth = instance.bits
    records = []
    for st in states:
        if st.m.shape != truth.shape:
            raise DimensionError(f"state has K={st.m.size}, instance has K={truth.size}")
        records.append(macro_record(st, truth))
    return MacroTrace(records)

