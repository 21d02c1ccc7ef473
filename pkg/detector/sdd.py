"""Sparse double descent detection over a pruning curve.

The online detector is a small state machine fed one validation accuracy
per pruning iteration. A move counts as "up"/"down" only when it exceeds the
tolerance delta; anything within delta is flat and leaves the state alone.
SDD is flagged when a direction that has already been seen comes back after
the curve went the other way, i.e. at the second reversal.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import asdict, dataclass

import numpy as np

DEFAULT_DELTA = 0.005


@dataclass(frozen=True, slots=True)
class CurvePoint:
    prune_iter: int
    sparsity: float
    val_acc: float
    train_acc: float = float("nan")
    train_loss: float = float("nan")
    val_loss: float = float("nan")

    def to_dict(self) -> dict:
        return asdict(self)


Curve = list[CurvePoint]


@dataclass(frozen=True, slots=True)
class SDDState:
    p_prev: float | None = None
    prev_increasing: bool = False
    prev_decreasing: bool = False
    already_increased: bool = False
    already_decreased: bool = False
    sdd_flag: bool = False
    delta: float = DEFAULT_DELTA


def step(state: SDDState, p: float) -> SDDState:
    """One transition of the detector for performance value ``p``."""
    if state.p_prev is None:
        return SDDState(p, False, False, False, False, state.sdd_flag, state.delta)
    if p < state.p_prev - state.delta:
        flag = state.sdd_flag or (state.already_decreased and not state.prev_decreasing)
        return SDDState(p, False, True, state.already_increased, True, flag, state.delta)
    if p > state.p_prev + state.delta:
        flag = state.sdd_flag or (state.already_increased and not state.prev_increasing)
        return SDDState(p, True, False, True, state.already_decreased, flag, state.delta)
    return state


@dataclass(frozen=True)
class SDDVerdict:
    sdd: bool
    trigger_index: int | None
    delta: float
    smoothing_window: int = 1
    trigger_sparsity: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _values(curve) -> list[float]:
    return [pt.val_acc if isinstance(pt, CurvePoint) else float(pt) for pt in curve]


def smooth(values: Sequence[float], window: int = 1) -> list[float]:
    """Centered moving average; windows shrink symmetrically at the edges."""
    if window <= 1:
        return list(values)
    half = window // 2
    n = len(values)
    arr = np.asarray(values, dtype=np.float64)
    out = []
    for i in range(n):
        r = min(half, i, n - 1 - i)
        out.append(float(arr[i - r:i + r + 1].mean()))
    return out


def detect_sdd_curve(curve, delta: float = DEFAULT_DELTA, smoothing_window: int = 1) -> SDDVerdict:
    """Fold ``step`` over the curve (CurvePoints or plain performance values)."""
    values = _values(curve)
    if smoothing_window > 1:
        values = smooth(values, smoothing_window)
    state = SDDState(delta=delta)
    trigger = None
    for i, p in enumerate(values):
        state = step(state, p)
        if state.sdd_flag:
            trigger = i
            break
    trigger_sparsity = None
    if trigger is not None and trigger < len(curve) and isinstance(curve[trigger], CurvePoint):
        trigger_sparsity = curve[trigger].sparsity
    return SDDVerdict(trigger is not None, trigger, delta, smoothing_window, trigger_sparsity)


@dataclass(frozen=True)
class PhaseSegmentation:
    """Four contiguous half-open index ranges, in order; some may be empty."""

    phases: tuple[tuple[int, int], tuple[int, int], tuple[int, int], tuple[int, int]]
    dip_index: int | None = None
    peak_index: int | None = None

    def phase(self, k: int) -> range:
        start, stop = self.phases[k - 1]
        return range(start, stop)

    def nonempty(self) -> list[int]:
        return [k for k in range(1, 5) if len(self.phase(k))]

    def to_dict(self) -> dict:
        return {
            "phases": {str(k): list(self.phases[k - 1]) for k in range(1, 5)},
            "dip_index": self.dip_index,
            "peak_index": self.peak_index,
        }


def segment_phases(curve, delta: float = DEFAULT_DELTA, dense_ref: float | None = None) -> PhaseSegmentation:
    """Split a curve into the four phases of sparse double descent.

    Phase 1 is the prefix within delta of the dense performance. The dip is
    the lowest later point that is followed by a rise of more than delta;
    phase 2 runs up to the dip, phase 3 up to the highest point after it,
    phase 4 is the rest. Without such a dip, phases 2 and 3 are empty.
    """
    p = _values(curve)
    n = len(p)
    if n == 0:
        return PhaseSegmentation(((0, 0), (0, 0), (0, 0), (0, 0)))
    ref = p[0] if dense_ref is None else dense_ref

    end1 = next((i for i in range(n) if p[i] < ref - delta), n)
    if end1 == n:
        return PhaseSegmentation(((0, n), (n, n), (n, n), (n, n)))

    suffix_max = [float("-inf")] * (n + 1)
    for i in range(n - 1, -1, -1):
        suffix_max[i] = max(p[i], suffix_max[i + 1])
    candidates = [i for i in range(end1, n - 1) if suffix_max[i + 1] > p[i] + delta]
    if not candidates:
        return PhaseSegmentation(((0, end1), (end1, end1), (end1, end1), (end1, n)))

    dip = min(candidates, key=lambda i: (p[i], i))
    peak = max(range(dip + 1, n), key=lambda i: (p[i], -i))
    return PhaseSegmentation(((0, end1), (end1, dip + 1), (dip + 1, peak + 1), (peak + 1, n)), dip, peak)


def bump_magnitude(loss_curve: Sequence[float]) -> float:
    """Largest excess of an interior loss over the dense loss, floored at 0."""
    losses = [float(v) for v in loss_curve]
    if len(losses) < 3:
        return 0.0
    return max(0.0, max(v - losses[0] for v in losses[1:-1]))


def collapse_sparsity(curve: Curve, chance: float, factor: float = 1.5) -> float | None:
    """First sparsity after the dense point whose validation accuracy is below factor * chance."""
    for pt in curve[1:]:
        if pt.val_acc < factor * chance:
            return pt.sparsity
    return None
