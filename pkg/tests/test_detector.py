"""Online SDD detector, phase segmentation and curve statistics."""

import itertools
from functools import reduce

import pytest

from detector import (
    CurvePoint,
    SDDState,
    bump_magnitude,
    collapse_sparsity,
    detect_sdd_curve,
    segment_phases,
    smooth,
    step,
)

LEVELS = (0.0, 0.1, 0.2, 0.3)
FOUR_PHASE = [0.8, 0.8, 0.8, 0.7, 0.6, 0.7, 0.78, 0.5, 0.3, 0.25]


def _direction_runs(values, delta) -> int:
    """Count maximal runs of equal direction, ignoring moves within delta."""
    runs, last, prev = 0, None, None
    for p in values:
        if prev is not None:
            if p < prev - delta:
                d = -1
            elif p > prev + delta:
                d = 1
            else:
                continue
            if d != last:
                runs += 1
                last = d
        prev = p
    return runs


def _curve(values) -> list[CurvePoint]:
    return [CurvePoint(i, 1.0 - 0.8 ** i, v) for i, v in enumerate(values)]


def test_step_matches_run_count_exhaustively() -> None:
    """Depth-first over every sequence of up to 10 levels, sharing prefixes."""
    delta = 0.0
    checked = 0

    def visit(prefix, state, runs, last, prev) -> None:
        nonlocal checked
        assert state.sdd_flag == (runs >= 3), prefix
        checked += 1
        if len(prefix) == 10:
            return
        for p in LEVELS:
            r, d, q = runs, last, p
            if prev is not None:
                move = -1 if p < prev - delta else 1 if p > prev + delta else 0
                if move == 0:
                    q = prev
                elif move != last:
                    r, d = runs + 1, move
            visit(prefix + [p], step(state, p), r, d, q)

    visit([], SDDState(delta=delta), 0, None, None)
    assert checked == sum(4 ** n for n in range(11))


def test_detect_curve_trigger_is_first_flag() -> None:
    delta = 0.0
    for n in range(1, 8):
        for values in itertools.product(LEVELS, repeat=n):
            verdict = detect_sdd_curve(list(values), delta)
            runs = [_direction_runs(values[: i + 1], delta) for i in range(n)]
            expected = next((i for i, r in enumerate(runs) if r >= 3), None)
            assert verdict.sdd == (expected is not None)
            assert verdict.trigger_index == expected, values


def test_larger_tolerance_never_creates_a_detection() -> None:
    # tolerances off the level grid so no move sits on a comparison boundary
    deltas = (0.0, 0.05, 0.15, 0.25)
    for values in itertools.product(LEVELS, repeat=7):
        flags = [reduce(step, values, SDDState(delta=d)).sdd_flag for d in deltas]
        assert flags == sorted(flags, reverse=True), (values, flags)


def test_appending_never_clears_a_detection() -> None:
    for delta in (0.0, 0.15):
        for values in itertools.product(LEVELS, repeat=7):
            state, seen = SDDState(delta=delta), False
            for p in values:
                state = step(state, p)
                assert state.sdd_flag or not seen, values
                seen = state.sdd_flag


def test_flat_moves_keep_previous_value() -> None:
    state = step(SDDState(delta=0.01), 0.5)
    for p in (0.505, 0.508, 0.495):
        state = step(state, p)
    assert state.p_prev == 0.5
    assert not (state.prev_increasing or state.prev_decreasing)


def test_four_phase_curve() -> None:
    curve = _curve(FOUR_PHASE)
    verdict = detect_sdd_curve(curve, 0.005)
    assert verdict.sdd and verdict.trigger_index == 7
    assert verdict.trigger_sparsity == pytest.approx(1.0 - 0.8 ** 7)

    seg = segment_phases(curve, 0.005)
    assert seg.phases == ((0, 3), (3, 5), (5, 7), (7, 10))
    assert seg.dip_index == 4 and seg.peak_index == 6
    assert seg.nonempty() == [1, 2, 3, 4]


def test_monotone_curve_has_no_sdd() -> None:
    curve = _curve([0.9, 0.9, 0.85, 0.7, 0.5, 0.2, 0.1])
    assert not detect_sdd_curve(curve).sdd
    seg = segment_phases(curve)
    assert seg.phases == ((0, 2), (2, 2), (2, 2), (2, 7))
    assert seg.dip_index is None


def test_segment_flat_and_empty_curves() -> None:
    assert segment_phases([0.5, 0.5, 0.501]).phases == ((0, 3), (3, 3), (3, 3), (3, 3))
    assert segment_phases([]).phases == ((0, 0), (0, 0), (0, 0), (0, 0))


def test_smoothing() -> None:
    assert smooth([1.0, 2.0, 3.0], 1) == [1.0, 2.0, 3.0]
    assert smooth([0.0, 3.0, 0.0, 3.0, 0.0], 3) == pytest.approx([0.0, 1.0, 2.0, 1.0, 0.0])
    # a single spike is absorbed by the window
    noisy = [0.8, 0.8, 0.7, 0.6, 0.62, 0.5, 0.4]
    assert detect_sdd_curve(noisy, 0.005).sdd
    assert not detect_sdd_curve(noisy, 0.005, smoothing_window=3).sdd


def test_bump_magnitude_and_collapse() -> None:
    assert bump_magnitude([1.0, 1.2, 0.9, 1.5, 2.0]) == pytest.approx(0.5)
    assert bump_magnitude([1.0, 0.8, 0.7]) == 0.0
    assert bump_magnitude([1.0, 5.0]) == 0.0

    curve = _curve([0.9, 0.8, 0.3, 0.1, 0.12])
    assert collapse_sparsity(curve, chance=0.1) == pytest.approx(1.0 - 0.8 ** 3)
    assert collapse_sparsity(curve, chance=0.01) is None
