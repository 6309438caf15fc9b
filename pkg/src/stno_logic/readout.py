"""Digit readout from oscillator amplitudes.

The decoded digit is the sign of the time average of ``|u(t)| * p(t)`` over
an integer number of carrier periods.  Bursts that ride the positive carrier
excursions give a positive average (digit 1); bursts on the negative
excursions give digit 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.signal import find_peaks

from .encoding import Carrier
from .errors import IndeterminateReadoutError, UnpairableEventsError, WindowTooShortError

THRESHOLD_FRACTION = 0.05
TRANSIENT_FRACTION = 1.0 / 3.0
BURST_FRACTION = 0.5


@dataclass(frozen=True)
class CorrelationResult:
    integral: float
    digit: int | None
    confidence: float
    threshold: float
    window: tuple[float, float]

    @property
    def determinate(self) -> bool:
        return self.digit is not None


@dataclass(frozen=True)
class BurstEvent:
    time: float
    height: float
    phase: float


def readout_threshold(carrier: Carrier, r_ref: float = 1.0) -> float:
    """5% of the largest correlation a clean burst train of height ``r_ref`` can give.

    ``r_ref`` is floored at unit amplitude so that sub-threshold drives, whose
    nominal saturation amplitude is zero, are not judged against a vanishing
    threshold.
    """
    return THRESHOLD_FRACTION * 0.5 * carrier.amplitude * max(r_ref, 1.0)


def _trapezoid_window(t, y, lo, hi):
    """Trapezoid integral of samples over [lo, hi], interpolating the endpoints."""
    inside = (t > lo) & (t < hi)
    tt = np.concatenate(([lo], t[inside], [hi]))
    yy = np.concatenate(([np.interp(lo, t, y)], y[inside], [np.interp(hi, t, y)]))
    return float(np.trapezoid(yy, tt))


def correlate(abs_u, t, carrier: Carrier, window: tuple[float, float] | None = None,
              threshold: float | None = None, r_ref: float = 1.0) -> CorrelationResult:
    """Time-averaged ``|u| * p`` over the window trimmed to whole carrier periods.

    The window keeps its end point and drops the partial period at its start.
    """
    abs_u = np.asarray(abs_u, dtype=float)
    t = np.asarray(t, dtype=float)
    if abs_u.shape != t.shape:
        raise ValueError("abs_u and t must have the same shape")
    lo, hi = (float(t[0]), float(t[-1])) if window is None else map(float, window)
    lo, hi = max(lo, float(t[0])), min(hi, float(t[-1]))
    period = carrier.period
    n_periods = math.floor((hi - lo) / period + 1e-9)
    if n_periods < 2:
        raise WindowTooShortError(
            f"window [{lo:g}, {hi:g}] spans {(hi - lo) / period:.3g} carrier periods; need at least 2")
    lo = hi - n_periods * period
    integral = _trapezoid_window(t, abs_u * carrier(t), lo, hi) / (hi - lo)
    if threshold is None:
        threshold = readout_threshold(carrier, r_ref)
    if integral > threshold:
        digit = 1
    elif integral < -threshold:
        digit = 0
    else:
        digit = None
    return CorrelationResult(integral, digit, abs(integral) / threshold, threshold, (lo, hi))


def analysis_window(t) -> tuple[float, float]:
    """Drop the first third of a run as start-up transient."""
    t0, t1 = float(t[0]), float(t[-1])
    return t0 + TRANSIENT_FRACTION * (t1 - t0), t1


def correlate_node(traj, carrier: Carrier | None = None, node: int = 0) -> CorrelationResult:
    if carrier is None:
        carrier = traj.carriers[node]
    return correlate(traj.abs_u(node), traj.t, carrier, analysis_window(traj.t), r_ref=traj.r_ref[node])


def decode_gate_run(traj, carrier: Carrier | None = None, node: int = 0) -> int:
    if carrier is None:
        carrier = traj.carriers[node]
    if traj.t[-1] - traj.t[0] < 3 * carrier.period * (1 - 1e-9):
        raise WindowTooShortError("a gate run must cover at least 3 carrier periods")
    result = correlate_node(traj, carrier, node)
    if result.digit is None:
        raise IndeterminateReadoutError(
            f"node {node}: correlation {result.integral:.3g} is within the threshold {result.threshold:.3g}",
            node=node, integral=result.integral)
    return result.digit


def decode_multiplex(traj, carriers: Sequence[Carrier], node: int = 0) -> list[int]:
    slowest = min(c.frequency for c in carriers)
    if (traj.t[-1] - traj.t[0]) * slowest < 10 * (1 - 1e-9):
        raise WindowTooShortError("multiplex readout needs at least 10 periods of the slowest carrier")
    window = analysis_window(traj.t)
    digits = []
    for k, carrier in enumerate(carriers):
        result = correlate(traj.abs_u(node), traj.t, carrier, window, r_ref=traj.r_ref[node])
        if result.digit is None:
            raise IndeterminateReadoutError(
                f"channel {k}: correlation {result.integral:.3g} is within the threshold {result.threshold:.3g}",
                node=node, integral=result.integral)
        digits.append(result.digit)
    return digits


def burst_events(abs_u, t, carrier: Carrier, threshold_fraction: float = BURST_FRACTION) -> list[BurstEvent]:
    """Interior local maxima above ``threshold_fraction * max|u|``, at least half a period apart."""
    if not 0 < threshold_fraction < 1:
        raise ValueError("threshold_fraction must lie in (0, 1)")
    abs_u = np.asarray(abs_u, dtype=float)
    t = np.asarray(t, dtype=float)
    top = float(abs_u.max()) if abs_u.size else 0.0
    if top <= 0:
        return []
    dt = float(np.median(np.diff(t)))
    distance = max(1, int(math.ceil(0.5 * carrier.period / dt)))
    # record end points are never peaks: a burst cut off by the window edge has no known maximum
    peaks, _ = find_peaks(abs_u, height=threshold_fraction * top, distance=distance)
    return [BurstEvent(float(t[i]), float(abs_u[i]), float(carrier.phase_at(t[i]))) for i in peaks]


def phase_lock_offset(events_a: Sequence[BurstEvent], events_b: Sequence[BurstEvent]) -> tuple[float, float]:
    """Circular-mean phase difference and mean delay of ``b`` relative to ``a``.

    Events are paired in time order; when one list has an extra event, the
    end that is dropped is the one that leaves the closer pairing.
    """
    na, nb = len(events_a), len(events_b)
    if na == 0 or nb == 0 or abs(na - nb) > 1:
        raise UnpairableEventsError(f"cannot pair {na} events with {nb} events")
    ta = np.array([e.time for e in events_a])
    tb = np.array([e.time for e in events_b])
    pa = np.array([e.phase for e in events_a])
    pb = np.array([e.phase for e in events_b])
    if na == nb:
        ia, ib = np.arange(na), np.arange(nb)
    else:
        n = min(na, nb)
        longer = np.arange(max(na, nb))
        options = [longer[:n], longer[1:]]
        if na > nb:
            costs = [np.abs(ta[o] - tb).sum() for o in options]
            ia, ib = options[int(np.argmin(costs))], np.arange(n)
        else:
            costs = [np.abs(tb[o] - ta).sum() for o in options]
            ia, ib = np.arange(n), options[int(np.argmin(costs))]
    dphi = np.angle(np.mean(np.exp(1j * (pb[ib] - pa[ia]))))
    delay = float(np.mean(tb[ib] - ta[ia]))
    return float(dphi), delay

