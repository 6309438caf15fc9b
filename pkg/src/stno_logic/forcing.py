"""Drive terms C_j(t, v) built from carriers and gate functions.

A :class:`ForcingTerm` is a sum of channels, each one
``gain * carrier(t) * L(left, right)``.  Gate inputs are :class:`Const`
encoded amplitudes or references to another node's filtered output,
resolved through ``sign(v_k)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .encoding import DEFAULT_CARRIER, Carrier, Gate, encode_digit, sign_threshold
from .errors import FrequencyCollisionError, UnresolvedReferenceError

DEFAULT_GAIN = 0.2
SIGN_TOLERANCE = 1e-6
MIN_FREQUENCY_RATIO = 1.2


@dataclass(frozen=True)
class Const:
    value: float

    def __post_init__(self):
        if self.value not in (-1.0, 1.0):
            raise ValueError(f"constant gate input must be +1 or -1, got {self.value}")

    def negated(self) -> "Const":
        return Const(-self.value)


@dataclass(frozen=True)
class Node:
    index: int

    def negated(self) -> "NegatedNode":
        return NegatedNode(self.index)


@dataclass(frozen=True)
class NegatedNode:
    index: int

    def negated(self) -> Node:
        return Node(self.index)


InputRef = Union[Const, Node, NegatedNode]


@dataclass(frozen=True)
class Channel:
    carrier: Carrier
    gate: Gate
    left: InputRef
    right: InputRef

    @property
    def is_static(self) -> bool:
        return isinstance(self.left, Const) and isinstance(self.right, Const)

    def node_indices(self) -> list[int]:
        return [r.index for r in (self.left, self.right) if not isinstance(r, Const)]


@dataclass(frozen=True)
class ForcingTerm:
    """Sum of gated carrier channels plus an optional constant bias.

    A term with no channels is a constant drive ``bias``; it is used for the
    bifurcation checks and for detector biasing in the film model.
    """

    channels: tuple[Channel, ...]
    gain: float = DEFAULT_GAIN
    bias: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        if not self.gain >= 0:
            raise ValueError(f"gain must be non-negative, got {self.gain}")
        freqs = [c.carrier.frequency for c in self.channels]
        if len(set(freqs)) != len(freqs):
            raise FrequencyCollisionError(f"channel frequencies must be distinct, got {freqs}")

    @property
    def max_amplitude(self) -> float:
        """Upper bound of ``|C(t, v)|`` over all t and v."""
        return self.gain * sum(c.carrier.amplitude for c in self.channels) + abs(self.bias)

    @property
    def reference_carrier(self) -> Carrier | None:
        return self.channels[0].carrier if self.channels else None

    def node_indices(self) -> list[int]:
        return sorted({i for c in self.channels for i in c.node_indices()})

    def __call__(self, t, v=None):
        return eval_forcing(self, t, v)

    def to_dict(self) -> dict:
        return {
            "gain": self.gain,
            "bias": self.bias,
            "channels": [
                {
                    "carrier": {
                        "amplitude": c.carrier.amplitude,
                        "frequency": c.carrier.frequency,
                        "phase": c.carrier.phase,
                    },
                    "gate": c.gate.name,
                    "left": ref_to_dict(c.left),
                    "right": ref_to_dict(c.right),
                }
                for c in self.channels
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ForcingTerm":
        channels = [
            Channel(
                carrier=Carrier(**ch.get("carrier", {})),
                gate=Gate.parse(ch["gate"]),
                left=ref_from_dict(ch["left"]),
                right=ref_from_dict(ch["right"]),
            )
            for ch in data.get("channels", [])
        ]
        return cls(tuple(channels), gain=data.get("gain", DEFAULT_GAIN), bias=data.get("bias", 0.0))


def ref_to_dict(ref: InputRef) -> dict:
    if isinstance(ref, Const):
        return {"const": ref.value}
    if isinstance(ref, Node):
        return {"node": ref.index}
    return {"negated_node": ref.index}


def ref_from_dict(data: dict) -> InputRef:
    if len(data) != 1:
        raise ValueError(f"input reference needs exactly one key, got {sorted(data)}")
    (key, value), = data.items()
    if key == "const":
        return Const(float(value))
    if key == "node":
        return Node(int(value))
    if key == "negated_node":
        return NegatedNode(int(value))
    raise ValueError(f"unknown input reference kind {key!r}")


def constant_forcing(value: float) -> ForcingTerm:
    return ForcingTerm((), gain=0.0, bias=value)


def gate_forcing(gate: Gate, a: int, b: int, carrier: Carrier = DEFAULT_CARRIER,
                 gain: float = DEFAULT_GAIN) -> ForcingTerm:
    if not gain > 0:
        raise ValueError(f"gain must be positive, got {gain}")
    channel = Channel(carrier, gate, Const(encode_digit(a)), Const(encode_digit(b)))
    return ForcingTerm((channel,), gain=gain)


def dynamic_gate_forcing(gate: Gate, left: InputRef, right: InputRef,
                         carrier: Carrier = DEFAULT_CARRIER, gain: float = DEFAULT_GAIN) -> ForcingTerm:
    if not gain > 0:
        raise ValueError(f"gain must be positive, got {gain}")
    return ForcingTerm((Channel(carrier, gate, left, right),), gain=gain)


def multiplex_forcing(channels: Sequence[tuple[Carrier, Gate, int, int]],
                      gain: float = DEFAULT_GAIN,
                      min_ratio: float = MIN_FREQUENCY_RATIO) -> ForcingTerm:
    """Superpose gate forcings on separate carrier frequencies."""
    channels = list(channels)
    if len(channels) < 2:
        raise ValueError("multiplexing needs at least two channels")
    if not gain > 0:
        raise ValueError(f"gain must be positive, got {gain}")
    for (c1, *_), (c2, *_) in itertools.combinations(channels, 2):
        lo, hi = sorted((c1.frequency, c2.frequency))
        if hi / lo < min_ratio:
            raise FrequencyCollisionError(
                f"carrier frequencies {lo:g} and {hi:g} are closer than ratio {min_ratio}")
    built = tuple(
        Channel(carrier, gate, Const(encode_digit(a)), Const(encode_digit(b)))
        for carrier, gate, a, b in channels
    )
    return ForcingTerm(built, gain=gain)


def resolve_ref(ref: InputRef, v, tol: float = SIGN_TOLERANCE) -> float:
    """Map an input reference to +1/-1, raising if the source node is unsettled."""
    if isinstance(ref, Const):
        return ref.value
    if v is None:
        raise ValueError(f"filtered outputs required to resolve {ref}")
    value = float(v[ref.index])
    if abs(value) < tol:
        raise UnresolvedReferenceError(ref.index, value)
    s = 1.0 if value > 0 else -1.0
    return -s if isinstance(ref, NegatedNode) else s


def eval_forcing(f: ForcingTerm, t: float, v=None, tol: float = SIGN_TOLERANCE) -> float:
    total = f.bias
    for ch in f.channels:
        A = resolve_ref(ch.left, v, tol)
        B = resolve_ref(ch.right, v, tol)
        p = ch.carrier.amplitude * math.cos(2.0 * math.pi * ch.carrier.frequency * t + ch.carrier.phase)
        total += f.gain * p * sign_threshold(ch.gate.coefficients, A, B)
    return total


REF_CONST, REF_NODE, REF_NEGATED = 0, 1, 2


@dataclass
class PackedForcing:
    """Flat arrays describing every channel of a network, for the compiled kernels."""

    start: np.ndarray            # (N+1,) channel offsets per node
    carrier: np.ndarray          # (M, 3) amplitude, frequency, phase
    coef: np.ndarray             # (M, 3)
    gain: np.ndarray             # (M,)
    ref_kind: np.ndarray         # (M, 2) int
    ref_value: np.ndarray        # (M, 2) const value or node index
    bias: np.ndarray             # (N,)
    ref_carrier: np.ndarray      # (N, 3) unit carrier used for the v correlation, zeros if none
    r_ref: np.ndarray            # (N,)


def _pack_ref(ref: InputRef, n_nodes: int) -> tuple[int, float]:
    if isinstance(ref, Const):
        return REF_CONST, ref.value
    if not 0 <= ref.index < n_nodes:
        raise IndexError(f"input reference to node {ref.index} outside network of size {n_nodes}")
    return (REF_NODE if isinstance(ref, Node) else REF_NEGATED), float(ref.index)


def reference_amplitude(lam: float, b: float, drive: float, eps: float = 1e-6) -> float:
    return math.sqrt(max(eps, (lam + drive) / b))


def pack_forcings(forcings: Sequence[ForcingTerm], lam: float, b: float) -> PackedForcing:
    n = len(forcings)
    start = np.zeros(n + 1, dtype=np.int64)
    rows = []
    bias = np.zeros(n)
    ref_carrier = np.zeros((n, 3))
    r_ref = np.zeros(n)
    for j, f in enumerate(forcings):
        start[j + 1] = start[j] + len(f.channels)
        bias[j] = f.bias
        rows.extend((f, ch) for ch in f.channels)
        if f.channels:
            c = f.channels[0].carrier
            ref_carrier[j] = (1.0, c.frequency, c.phase)
        drive = f.gain if f.channels else f.bias
        r_ref[j] = reference_amplitude(lam, b, drive)
    m = len(rows)
    carrier = np.zeros((m, 3))
    coef = np.zeros((m, 3))
    gain = np.zeros(m)
    ref_kind = np.zeros((m, 2), dtype=np.int64)
    ref_value = np.zeros((m, 2))
    for i, (f, ch) in enumerate(rows):
        carrier[i] = (ch.carrier.amplitude, ch.carrier.frequency, ch.carrier.phase)
        coef[i] = ch.gate.coefficients
        gain[i] = f.gain
        for side, ref in enumerate((ch.left, ch.right)):
            ref_kind[i, side], ref_value[i, side] = _pack_ref(ref, n)
    return PackedForcing(start, carrier, coef, gain, ref_kind, ref_value, bias, ref_carrier, r_ref)
