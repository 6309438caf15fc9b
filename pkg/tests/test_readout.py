import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stno_logic.encoding import DEFAULT_CARRIER, Carrier, Gate
from stno_logic.errors import IndeterminateReadoutError, UnpairableEventsError, WindowTooShortError
from stno_logic.forcing import multiplex_forcing
from stno_logic.network import LOGIC_PARAMS, NetworkState, integrate, run_logic_gate
from stno_logic.readout import (
    BurstEvent,
    analysis_window,
    burst_events,
    correlate,
    decode_gate_run,
    decode_multiplex,
    phase_lock_offset,
    readout_threshold,
)

P = DEFAULT_CARRIER
T = np.arange(0.0, 1600.0 + 1e-9, 0.1)


def test_correlate_matched_harmonic():
    r = correlate(1 + np.cos(2 * np.pi * P.frequency * T), T, P)
    assert r.integral == pytest.approx(0.5, abs=1e-6)
    assert r.digit == 1
    r = correlate(1 + np.cos(2 * np.pi * P.frequency * T + np.pi), T, P)
    assert r.integral == pytest.approx(-0.5, abs=1e-6)
    assert r.digit == 0


def test_correlate_constant_is_indeterminate():
    r = correlate(np.full_like(T, 3.0), T, P)
    assert r.integral == pytest.approx(0.0, abs=1e-9)
    assert r.digit is None
    assert not r.determinate


def test_window_trimmed_to_whole_periods():
    r = correlate(np.ones_like(T), T, P, window=(0.0, 1000.0))
    assert r.window == (200.0, 1000.0)
    with pytest.raises(WindowTooShortError):
        correlate(np.ones_like(T), T, P, window=(0.0, 700.0))


def test_threshold():
    assert readout_threshold(P) == pytest.approx(0.025)
    assert readout_threshold(P, r_ref=2.0) == pytest.approx(0.05)
    # sub-threshold drives have a vanishing nominal amplitude; the floor keeps the bar at unit height
    assert readout_threshold(P, r_ref=1e-3) == pytest.approx(0.025)


@given(st.floats(0.1, 10.0), st.floats(-math.pi, math.pi))
def test_linearity_and_phase_flip(alpha, phi):
    signal = 1 + np.cos(2 * np.pi * P.frequency * T + phi)
    base = correlate(signal, T, P)
    scaled = correlate(alpha * signal, T, P)
    assert scaled.integral == pytest.approx(alpha * base.integral, rel=1e-9, abs=1e-12)
    # the threshold is absolute, so shrinking the signal may drop it below the bar
    assert np.sign(scaled.integral) == np.sign(base.integral)
    if base.digit is not None and scaled.digit is not None:
        assert scaled.digit == base.digit
    flipped = correlate(signal, T, P.antiphase())
    assert flipped.integral == pytest.approx(-base.integral, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("gate", list(Gate))
def test_gate_runs_decode_truth_table(gate):
    for a in (0, 1):
        for b in (0, 1):
            assert decode_gate_run(run_logic_gate(gate, a, b)) == gate.boolean(a, b)


def test_examples_from_truth_table():
    assert decode_gate_run(run_logic_gate(Gate.NAND, 0, 0)) == 1
    assert decode_gate_run(run_logic_gate(Gate.AND, 1, 0)) == 0


def test_zero_trajectory_is_indeterminate():
    traj = run_logic_gate(Gate.OR, 1, 1)
    traj.u[:] = 0
    with pytest.raises(IndeterminateReadoutError):
        decode_gate_run(traj)


def test_short_run_rejected():
    traj = run_logic_gate(Gate.OR, 1, 1)
    traj.t = traj.t[: len(traj.t) // 2]
    with pytest.raises(WindowTooShortError):
        decode_gate_run(traj)


def _mux(gates, a, b, periods=15):
    carriers = [P, Carrier(frequency=P.frequency * math.sqrt(2))]
    f = multiplex_forcing([(c, g, a, b) for c, g in zip(carriers, gates)])
    traj = integrate(NetworkState.initial(1, tau=2 * P.period), LOGIC_PARAMS, [f], periods * P.period)
    return traj, carriers


def test_multiplex_examples():
    traj, carriers = _mux((Gate.NAND, Gate.OR), 0, 0)
    assert decode_multiplex(traj, carriers) == [1, 0]
    traj, carriers = _mux((Gate.NAND, Gate.OR), 1, 1)
    assert decode_multiplex(traj, carriers) == [0, 1]
    traj, carriers = _mux((Gate.NAND, Gate.OR), 1, 0)
    assert decode_multiplex(traj, carriers) == [1, 1]


def test_multiplex_needs_long_window():
    traj, carriers = _mux((Gate.NAND, Gate.OR), 0, 0, periods=8)
    with pytest.raises(WindowTooShortError):
        decode_multiplex(traj, carriers)


def test_burst_events_phase():
    t = np.arange(100.0, 2100.0, 0.5)
    ev = burst_events(np.maximum(0, np.cos(2 * np.pi * P.frequency * t)), t, P)
    assert len(ev) == 5
    assert all(abs(e.phase) < 1e-9 for e in ev)
    ev = burst_events(np.maximum(0, -np.cos(2 * np.pi * P.frequency * t)), t, P)
    assert len(ev) == 5
    assert [e.time for e in ev] == [200.0, 600.0, 1000.0, 1400.0, 1800.0]
    assert all(abs(abs(e.phase) - math.pi) < 1e-9 for e in ev)
    assert burst_events(np.zeros_like(t), t, P) == []
    with pytest.raises(ValueError):
        burst_events(t, t, P, threshold_fraction=1.0)


def test_burst_events_separation():
    # two peaks a quarter period apart count once
    t = np.arange(0.0, 800.0, 1.0)
    u = np.exp(-((t - 100) / 5) ** 2) + 0.9 * np.exp(-((t - 200) / 5) ** 2)
    assert [e.time for e in burst_events(u, t, P)] == [100.0]


def test_phase_lock_offset():
    events = [BurstEvent(400.0 * k, 1.0, 0.0) for k in range(5)]
    assert phase_lock_offset(events, events) == (0.0, 0.0)
    shifted = [BurstEvent(e.time + 200.0, 1.0, math.pi) for e in events]
    dphi, delay = phase_lock_offset(events, shifted)
    assert abs(dphi) == pytest.approx(math.pi)
    assert delay == pytest.approx(200.0)
    with pytest.raises(UnpairableEventsError):
        phase_lock_offset([], events)
    with pytest.raises(UnpairableEventsError):
        phase_lock_offset(events[:2], events)


def test_phase_lock_drops_unmatched_end():
    a = [BurstEvent(400.0 * k, 1.0, 0.0) for k in range(4)]
    b = [BurstEvent(400.0 * k + 10.0, 1.0, 0.1) for k in range(1, 4)]
    dphi, delay = phase_lock_offset(a, b)
    assert delay == pytest.approx(10.0)
    assert dphi == pytest.approx(0.1)


@settings(max_examples=25)
@given(st.lists(st.floats(0, 1), min_size=10, max_size=10))
def test_analysis_window_drops_first_third(values):
    t = np.sort(np.array(values) * 900.0)
    lo, hi = analysis_window(t)
    assert lo == pytest.approx(t[0] + (t[-1] - t[0]) / 3)
    assert hi == t[-1]
