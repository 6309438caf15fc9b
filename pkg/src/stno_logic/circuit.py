"""Boolean expressions to NAND networks of oscillators.

Pipeline: :func:`parse_expr` -> :func:`to_nand` -> :func:`compile_dag` ->
:func:`evaluate_staged` or :func:`evaluate_coupled`.  Every gate becomes one
oscillator node whose forcing reads its inputs either as constants (circuit
inputs, or upstream digits frozen by the staged evaluator) or as the sign of
another node's filtered output.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence, Union

from .encoding import DEFAULT_CARRIER, Carrier, Gate, encode_digit
from .errors import (IndeterminateReadoutError, ParseError, UnboundVariableError,
                     UnsettledOutputError)
from .forcing import (DEFAULT_GAIN, SIGN_TOLERANCE, Const, ForcingTerm, InputRef, NegatedNode, Node,
                      dynamic_gate_forcing)
from .network import DEFAULT_DT, DEFAULT_STRIDE, DEFAULT_U0, LOGIC_PARAMS, NetworkState, StnoParams, integrate
from .readout import decode_gate_run

STAGE_PERIODS = 3
COUPLED_PERIODS_PER_STAGE = 4

FULL_ADDER_SUM = "a ^ b ^ c"
FULL_ADDER_CARRY = "a & b | c & (a ^ b)"


# --- expressions ----------------------------------------------------------------

@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Lit:
    value: int


@dataclass(frozen=True)
class Not:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str            # "and", "or", "nand", "xor"
    left: "Expr"
    right: "Expr"


Expr = Union[Var, Lit, Not, BinOp]

_SYMBOLS = {"and": "&", "or": "|", "nand": "!&", "xor": "^"}
_PRECEDENCE = {"or": 1, "xor": 2, "and": 3, "nand": 3}


def format_expr(expr: Expr) -> str:
    """Render with minimal parentheses; ``parse_expr(format_expr(e)) == e``."""

    def fmt(e, parent_prec, right_side):
        if isinstance(e, Var):
            return e.name
        if isinstance(e, Lit):
            return str(e.value)
        if isinstance(e, Not):
            return "~" + fmt(e.operand, 4, False)
        prec = _PRECEDENCE[e.op]
        text = f"{fmt(e.left, prec, False)} {_SYMBOLS[e.op]} {fmt(e.right, prec, True)}"
        if prec < parent_prec or (prec == parent_prec and right_side):
            return f"({text})"
        return text

    return fmt(expr, 0, False)


def variables(expr: Expr) -> list[str]:
    """Variable names in order of first appearance."""
    seen: dict[str, None] = {}

    def walk(e):
        if isinstance(e, Var):
            seen.setdefault(e.name)
        elif isinstance(e, Not):
            walk(e.operand)
        elif isinstance(e, BinOp):
            walk(e.left)
            walk(e.right)

    walk(expr)
    return list(seen)


_TOKEN = re.compile(r"\s*(?:(?P<var>[a-z][a-z0-9_]*)|(?P<lit>[01])|(?P<op>!&|[&|^~()]))")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def binary(self, sub, ops):
        left = sub()
        while self.peek()[0] == "op" and self.peek()[1] in ops:
            op = ops[self.take()[1]]
            left = BinOp(op, left, sub())
        return left

    def or_expr(self):
        return self.binary(self.xor_expr, {"|": "or"})

    def xor_expr(self):
        return self.binary(self.and_expr, {"^": "xor"})

    def and_expr(self):
        return self.binary(self.unary, {"&": "and", "!&": "nand"})

    def unary(self):
        kind, value, pos = self.peek()
        if kind == "op" and value == "~":
            self.take()
            return Not(self.unary())
        if kind == "var":
            self.take()
            return Var(value)
        if kind == "lit":
            self.take()
            return Lit(int(value))
        if kind == "op" and value == "(":
            self.take()
            inner = self.or_expr()
            kind, value, pos = self.peek()
            if not (kind == "op" and value == ")"):
                raise ParseError(f"unexpected {value or 'end of input'!r}", pos, ["')'"])
            self.take()
            return inner
        raise ParseError(f"unexpected {value or 'end of input'!r}", pos, ["variable", "0", "1", "'~'", "'('"])


def parse_expr(text: str) -> Expr:
    """Parse ``& | ^ ~ !&`` expressions; precedence ``~ > & = !& > ^ > |``, left-associative."""
    parser = _Parser(text)
    expr = parser.or_expr()
    kind, value, pos = parser.peek()
    if kind != "end":
        raise ParseError(f"unexpected {value!r}", pos, ["operator", "end of input"])
    return expr


def oracle_evaluate(expr: Expr, inputs: Mapping[str, int]) -> int:
    if isinstance(expr, Var):
        if expr.name not in inputs:
            raise UnboundVariableError(expr.name)
        return int(inputs[expr.name])
    if isinstance(expr, Lit):
        return expr.value
    if isinstance(expr, Not):
        return 1 - oracle_evaluate(expr.operand, inputs)
    a = oracle_evaluate(expr.left, inputs)
    b = oracle_evaluate(expr.right, inputs)
    if expr.op == "and":
        return a & b
    if expr.op == "or":
        return a | b
    if expr.op == "xor":
        return a ^ b
    return 1 - (a & b)


def random_expression(rng: random.Random, names: Sequence[str], max_depth: int) -> Expr:
    """Random expression over ``names`` of depth at most ``max_depth``."""
    if max_depth <= 0 or rng.random() < 0.25:
        return Var(rng.choice(list(names)))
    op = rng.choice(["not", "and", "or", "nand", "xor"])
    if op == "not":
        return Not(random_expression(rng, names, max_depth - 1))
    return BinOp(op, random_expression(rng, names, max_depth - 1), random_expression(rng, names, max_depth - 1))


def depth(expr: Expr) -> int:
    if isinstance(expr, (Var, Lit)):
        return 0
    if isinstance(expr, Not):
        return 1 + depth(expr.operand)
    return 1 + max(depth(expr.left), depth(expr.right))


# --- NAND synthesis -----------------------------------------------------------------

class Ref(NamedTuple):
    kind: str          # "input", "const" or "gate"
    key: Union[str, int]

    def __str__(self):
        if self.kind == "gate":
            return f"g{self.key}"
        return str(self.key)


@dataclass(frozen=True)
class NandDag:
    inputs: tuple[str, ...]
    gates: tuple[tuple[Ref, Ref], ...]
    output: Ref

    def __post_init__(self):
        for i, pair in enumerate(self.gates):
            for ref in pair:
                if ref.kind == "gate" and not 0 <= ref.key < i:
                    raise ValueError(f"gate {i} references g{ref.key}, which is not an earlier gate")
                if ref.kind == "input" and ref.key not in self.inputs:
                    raise ValueError(f"gate {i} references undeclared input {ref.key!r}")

    def evaluate(self, inputs: Mapping[str, int]) -> int:
        """Direct boolean evaluation of the NAND network."""
        values: list[int] = []

        def value(ref):
            if ref.kind == "gate":
                return values[ref.key]
            if ref.kind == "const":
                return ref.key
            if ref.key not in inputs:
                raise UnboundVariableError(ref.key)
            return int(inputs[ref.key])

        for left, right in self.gates:
            values.append(1 - (value(left) & value(right)))
        return value(self.output)

    def levels(self) -> list[int]:
        """Topological level of every gate; gates fed only by inputs are level 1."""
        lv: list[int] = []
        for pair in self.gates:
            lv.append(1 + max((lv[r.key] for r in pair if r.kind == "gate"), default=0))
        return lv


def to_nand(expr: Expr) -> NandDag:
    """Rewrite into NAND gates, sharing structurally identical subterms."""
    gates: list[tuple[Ref, Ref]] = []
    index: dict[tuple[Ref, Ref], int] = {}

    def nand(x: Ref, y: Ref) -> Ref:
        key = (x, y) if (x.kind, str(x.key)) <= (y.kind, str(y.key)) else (y, x)
        if key not in index:
            index[key] = len(gates)
            gates.append((x, y))
        return Ref("gate", index[key])

    def build(e) -> Ref:
        if isinstance(e, Var):
            return Ref("input", e.name)
        if isinstance(e, Lit):
            return Ref("const", e.value)
        if isinstance(e, Not):
            x = build(e.operand)
            return nand(x, x)
        x = build(e.left)
        y = build(e.right)
        if e.op == "nand":
            return nand(x, y)
        if e.op == "and":
            g = nand(x, y)
            return nand(g, g)
        if e.op == "or":
            return nand(nand(x, x), nand(y, y))
        g = nand(x, y)
        return nand(nand(x, g), nand(y, g))

    out = build(expr)
    return NandDag(tuple(variables(expr)), tuple(gates), out)


def to_netlist(dag: NandDag) -> str:
    lines = ["inputs " + " ".join(dag.inputs)]
    for i, (left, right) in enumerate(dag.gates):
        lines.append(f"g{i} = {left} NAND {right}")
    lines.append(f"output {dag.output}")
    return "\n".join(lines) + "\n"


def _parse_ref(token: str, inputs) -> Ref:
    if token in ("0", "1"):
        return Ref("const", int(token))
    if re.fullmatch(r"g\d+", token) and token not in inputs:
        return Ref("gate", int(token[1:]))
    return Ref("input", token)


def from_netlist(text: str) -> NandDag:
    inputs: tuple[str, ...] = ()
    gates = []
    output = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("inputs"):
            inputs = tuple(line.split()[1:])
        elif line.startswith("output"):
            output = _parse_ref(line.split()[1], inputs)
        else:
            m = re.fullmatch(r"g(\d+)\s*=\s*(\S+)\s+NAND\s+(\S+)", line)
            if m is None or int(m.group(1)) != len(gates):
                raise ValueError(f"malformed netlist line: {raw!r}")
            gates.append((_parse_ref(m.group(2), inputs), _parse_ref(m.group(3), inputs)))
    if output is None:
        raise ValueError("netlist has no output line")
    return NandDag(inputs, tuple(gates), output)


# --- oscillator circuits -----------------------------------------------------------

@dataclass(frozen=True)
class Wire:
    """A gate input in a compiled circuit: a circuit input, a constant digit, or another node."""

    kind: str                    # "input", "const" or "node"
    key: Union[str, int]
    negated: bool = False


@dataclass(frozen=True)
class GateNode:
    gate: Gate
    left: Wire
    right: Wire


@dataclass(frozen=True)
class CircuitConfig:
    inputs: tuple[str, ...]
    nodes: tuple[GateNode, ...]
    schedule: tuple[tuple[int, ...], ...]
    output: Wire
    params: StnoParams = LOGIC_PARAMS
    carrier: Carrier = DEFAULT_CARRIER
    gain: float = DEFAULT_GAIN
    tau: float = field(default=None)

    def __post_init__(self):
        if self.tau is None:
            object.__setattr__(self, "tau", 2 * self.carrier.period)
        seen: set[int] = set()
        for stage in self.schedule:
            for j in stage:
                for w in (self.nodes[j].left, self.nodes[j].right):
                    if w.kind == "node" and w.key not in seen:
                        raise ValueError(f"node {j} is scheduled before its input node {w.key}")
            seen.update(stage)
        if seen != set(range(len(self.nodes))):
            raise ValueError("schedule must cover every node exactly once")

    @property
    def size(self) -> int:
        return len(self.nodes)

    def forcings(self, inputs: Mapping[str, int], frozen: Mapping[int, int] | None = None) -> list[ForcingTerm]:
        """Per-node forcing terms; nodes listed in ``frozen`` are read as constant digits."""
        return [dynamic_gate_forcing(n.gate, self._ref(n.left, inputs, frozen),
                                     self._ref(n.right, inputs, frozen), self.carrier, self.gain)
                for n in self.nodes]

    def _ref(self, wire: Wire, inputs, frozen) -> InputRef:
        if wire.kind == "node" and (frozen is None or wire.key not in frozen):
            return NegatedNode(wire.key) if wire.negated else Node(wire.key)
        digit = self.wire_digit(wire, inputs, frozen or {})
        return Const(encode_digit(digit))

    def wire_digit(self, wire: Wire, inputs: Mapping[str, int], node_digits: Mapping[int, int]) -> int:
        if wire.kind == "input":
            if wire.key not in inputs:
                raise UnboundVariableError(wire.key)
            d = int(inputs[wire.key])
        elif wire.kind == "const":
            d = int(wire.key)
        else:
            d = node_digits[wire.key]
        return 1 - d if wire.negated else d


def _wire(ref: Ref) -> Wire:
    kind = "node" if ref.kind == "gate" else ref.kind
    return Wire(kind, ref.key)


def _schedule(nodes: Sequence[GateNode]) -> tuple[tuple[int, ...], ...]:
    level: list[int] = []
    for n in nodes:
        level.append(1 + max((level[w.key] for w in (n.left, n.right) if w.kind == "node"), default=0))
    stages: dict[int, list[int]] = {}
    for j, lv in enumerate(level):
        stages.setdefault(lv, []).append(j)
    return tuple(tuple(stages[k]) for k in sorted(stages))


def compile_dag(dag: NandDag, params: StnoParams = LOGIC_PARAMS, carrier: Carrier = DEFAULT_CARRIER,
                gain: float = DEFAULT_GAIN, tau: float | None = None) -> CircuitConfig:
    nodes = tuple(GateNode(Gate.NAND, _wire(l), _wire(r)) for l, r in dag.gates)
    return CircuitConfig(dag.inputs, nodes, _schedule(nodes), _wire(dag.output), params, carrier, gain, tau)


def compile_xor_paper(params: StnoParams = LOGIC_PARAMS, carrier: Carrier = DEFAULT_CARRIER,
                      gain: float = DEFAULT_GAIN, tau: float | None = None) -> CircuitConfig:
    """Three-node XOR: AND(~a, b), AND(a, ~b) feeding an OR node."""
    nodes = (
        GateNode(Gate.AND, Wire("input", "a", negated=True), Wire("input", "b")),
        GateNode(Gate.AND, Wire("input", "a"), Wire("input", "b", negated=True)),
        GateNode(Gate.OR, Wire("node", 0), Wire("node", 1)),
    )
    return CircuitConfig(("a", "b"), nodes, _schedule(nodes), Wire("node", 2), params, carrier, gain, tau)


def compile_expr(text_or_expr, **kwargs) -> CircuitConfig:
    expr = parse_expr(text_or_expr) if isinstance(text_or_expr, str) else text_or_expr
    return compile_dag(to_nand(expr), **kwargs)


def _check_bound(config: CircuitConfig, inputs: Mapping[str, int]):
    for name in config.inputs:
        if name not in inputs:
            raise UnboundVariableError(name)
        if inputs[name] not in (0, 1):
            raise ValueError(f"input {name} must be 0 or 1, got {inputs[name]!r}")


def evaluate_staged_many(config: CircuitConfig, assignments: Sequence[Mapping[str, int]],
                         dt: float = DEFAULT_DT, stride: int = DEFAULT_STRIDE) -> list[dict[int, int]]:
    """Decoded digit of every node, for each input assignment.

    Each stage runs all of its nodes, for all assignments at once, as one
    network of independent oscillators driven by constant gate inputs.
    """
    for inputs in assignments:
        _check_bound(config, inputs)
    digits: list[dict[int, int]] = [{} for _ in assignments]
    t_end = STAGE_PERIODS * config.carrier.period
    for stage in config.schedule:
        jobs = [(k, j) for k in range(len(assignments)) for j in stage]
        forcings = []
        for k, j in jobs:
            node = config.nodes[j]
            A = encode_digit(config.wire_digit(node.left, assignments[k], digits[k]))
            B = encode_digit(config.wire_digit(node.right, assignments[k], digits[k]))
            forcings.append(dynamic_gate_forcing(node.gate, Const(A), Const(B), config.carrier, config.gain))
        state = NetworkState.initial(len(jobs), u0=DEFAULT_U0, tau=config.tau)
        traj = integrate(state, config.params, forcings, t_end, dt=dt, stride=stride)
        for i, (k, j) in enumerate(jobs):
            try:
                digits[k][j] = decode_gate_run(traj, config.carrier, node=i)
            except IndeterminateReadoutError as exc:
                raise IndeterminateReadoutError(f"node {j}: {exc}", node=j, integral=exc.integral) from None
    return digits


def evaluate_staged(config: CircuitConfig, inputs: Mapping[str, int], **kwargs) -> int:
    return evaluate_staged_all(config, [inputs], **kwargs)[0]


def evaluate_staged_all(config: CircuitConfig, assignments: Sequence[Mapping[str, int]], **kwargs) -> list[int]:
    node_digits = evaluate_staged_many(config, assignments, **kwargs)
    return [config.wire_digit(config.output, inputs, nd) for inputs, nd in zip(assignments, node_digits)]


def coupled_duration(config: CircuitConfig) -> float:
    return len(config.schedule) * COUPLED_PERIODS_PER_STAGE * config.carrier.period


def evaluate_coupled(config: CircuitConfig, inputs: Mapping[str, int], t_end: float | None = None,
                     dt: float = DEFAULT_DT, stride: int = DEFAULT_STRIDE, return_trajectory: bool = False):
    """Integrate all nodes and outputs together; the result is ``sign(v_output)`` at ``t_end``."""
    _check_bound(config, inputs)
    if config.output.kind != "node":
        return config.wire_digit(config.output, inputs, {})
    if t_end is None:
        t_end = coupled_duration(config)
    forcings = config.forcings(inputs)
    state = NetworkState.initial(config.size, u0=DEFAULT_U0, tau=config.tau)
    traj = integrate(state, config.params, forcings, t_end, dt=dt, stride=stride, unsettled="zero")
    v_out = float(traj.final.v[config.output.key])
    if abs(v_out) < SIGN_TOLERANCE:
        raise UnsettledOutputError(f"output node {config.output.key} unsettled at t={t_end:g} (v={v_out:.3g})")
    digit = 1 if v_out > 0 else 0
    if config.output.negated:
        digit = 1 - digit
    return (digit, traj) if return_trajectory else digit


def truth_table_rows(names: Sequence[str]) -> list[dict[str, int]]:
    n = len(names)
    return [{name: (k >> (n - 1 - i)) & 1 for i, name in enumerate(names)} for k in range(2 ** n)]

