"""Binary digits as carrier phases and the sign-threshold gate functions.

A digit ``a`` rides on the reference carrier ``p(t) = A_p cos(2 pi f t + phi)``
as the amplitude ``A = -cos(a pi)``: digit 1 is the carrier itself, digit 0 is
the carrier shifted by half a period.  Each gate is the sign of an affine form
``c0 + cA*A + cB*B`` whose value is always an odd integer on valid inputs.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import IndeterminateAmplitudeError, ZeroArgumentError

DECODE_TOLERANCE = 1e-9

DEFAULT_FREQUENCY = 0.0025


class Gate(enum.Enum):
    OR = (1.0, 1.0, 1.0)
    AND = (-1.0, 1.0, 1.0)
    NAND = (1.0, -2.0, -2.0)

    @property
    def coefficients(self) -> tuple[float, float, float]:
        return self.value

    def boolean(self, a: int, b: int) -> int:
        if self is Gate.OR:
            return int(a or b)
        if self is Gate.AND:
            return int(a and b)
        return int(not (a and b))

    @classmethod
    def parse(cls, name: str) -> "Gate":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown gate {name!r}; choose from OR, AND, NAND") from None


@dataclass(frozen=True)
class Carrier:
    """Reference signal ``amplitude * cos(2 pi frequency t + phase)``."""

    amplitude: float = 1.0
    frequency: float = DEFAULT_FREQUENCY
    phase: float = 0.0

    def __post_init__(self):
        if not self.amplitude > 0:
            raise ValueError(f"carrier amplitude must be positive, got {self.amplitude}")
        if not self.frequency > 0:
            raise ValueError(f"carrier frequency must be positive, got {self.frequency}")

    @property
    def period(self) -> float:
        return 1.0 / self.frequency

    def __call__(self, t):
        return carrier_value(self, t)

    def antiphase(self) -> "Carrier":
        """The digit-0 signal n(t): same carrier shifted by pi."""
        return replace(self, phase=self.phase + math.pi)

    def unit(self) -> "Carrier":
        return replace(self, amplitude=1.0)

    def phase_at(self, t):
        """Carrier phase wrapped to (-pi, pi]."""
        return wrap_phase(2.0 * math.pi * self.frequency * np.asarray(t) + self.phase)


DEFAULT_CARRIER = Carrier()


def wrap_phase(theta):
    wrapped = -np.mod(-np.asarray(theta, dtype=float) + math.pi, 2.0 * math.pi) + math.pi
    return float(wrapped) if np.ndim(wrapped) == 0 else wrapped


def encode_digit(a: int) -> float:
    if a not in (0, 1):
        raise ValueError(f"digit must be 0 or 1, got {a!r}")
    return -math.cos(a * math.pi)


def decode_amplitude(A: float, tol: float = DECODE_TOLERANCE) -> int:
    if not -1.0 - tol <= A <= 1.0 + tol:
        raise ValueError(f"encoded amplitude must lie in [-1, 1], got {A}")
    if abs(A) < tol:
        raise IndeterminateAmplitudeError(f"amplitude {A} carries no digit")
    A = min(1.0, max(-1.0, A))
    return int(round(1.0 - math.acos(A) / math.pi))


def carrier_value(carrier: Carrier, t):
    out = carrier.amplitude * np.cos(2.0 * math.pi * carrier.frequency * np.asarray(t, dtype=float) + carrier.phase)
    return float(out) if np.ndim(out) == 0 else out


def sign_threshold(coefficients, A: float, B: float) -> float:
    c0, cA, cB = coefficients
    arg = c0 + cA * A + cB * B
    if arg == 0:
        raise ZeroArgumentError(f"gate argument {c0} + {cA}*{A} + {cB}*{B} is zero")
    return 1.0 if arg > 0 else -1.0


def gate_value(gate: Gate, A: float, B: float) -> float:
    for x in (A, B):
        if x not in (-1.0, 1.0):
            raise ValueError(f"gate inputs must be +1 or -1, got {x}")
    return sign_threshold(gate.coefficients, A, B)


def truth_table(gate: Gate) -> list[tuple[int, int, int]]:
    """Rows ``(a, b, out)`` in the order (0,0), (1,0), (0,1), (1,1)."""
    rows = []
    for a, b in ((0, 0), (1, 0), (0, 1), (1, 1)):
        out = gate_value(gate, encode_digit(a), encode_digit(b))
        rows.append((a, b, decode_amplitude(out)))
    return rows
