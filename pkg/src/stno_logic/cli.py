"""Command-line entry point: ``stno gate|mux|circuit|xor|film|sweep``.

Every command reads its parameters from module defaults, then an optional
JSON ``--config`` file, then explicit flags (later wins).  Exit codes: 0 on
success, 1 on a runtime or physics failure (indeterminate readout,
instability, frequency collision), 2 on a usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import os
import random
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import circuit as circ
from . import film
from .encoding import Carrier, Gate
from .errors import ConfigError, LayoutOverflowError, ParseError, StnoError, UnboundVariableError
from .forcing import DEFAULT_GAIN, multiplex_forcing
from .network import DEFAULT_DT, DEFAULT_STRIDE, DEFAULT_U0, NetworkState, StnoParams, integrate, run_logic_gate
from .readout import analysis_window, correlate, decode_gate_run, decode_multiplex

USAGE_ERRORS = (ConfigError, ParseError, UnboundVariableError, LayoutOverflowError, FileNotFoundError)


@dataclass(frozen=True)
class Param:
    type: type
    default: object
    help: str


def _physics(omega=0.15, lam=-0.1, saturation=0.1, floor=1e-5):
    return {
        "omega": Param(float, omega, "natural frequency"),
        "lam": Param(float, lam, "linear growth rate"),
        "saturation": Param(float, saturation, "cubic saturation coefficient b"),
        "floor": Param(float, floor, "phase-preserving amplitude floor"),
    }


def _integration():
    return {
        "dt": Param(float, DEFAULT_DT, "RK4 step"),
        "stride": Param(int, DEFAULT_STRIDE, "steps between stored samples"),
    }


PARAMS: dict[str, dict[str, Param]] = {
    "gate": {
        "gate": Param(str, "NAND", "OR, AND or NAND"),
        "a": Param(int, 0, "first input digit"),
        "b": Param(int, 0, "second input digit"),
        "gain": Param(float, DEFAULT_GAIN, "forcing gain"),
        "frequency": Param(float, 0.0025, "carrier frequency"),
        "amplitude": Param(float, 1.0, "carrier amplitude"),
        "periods": Param(int, 3, "carrier periods to simulate"),
        **_integration(),
        **_physics(),
    },
    "mux": {
        "a": Param(int, 0, "first input digit"),
        "b": Param(int, 0, "second input digit"),
        "gates": Param(str, "NAND,OR", "gate on the first and second carrier"),
        "frequency": Param(float, 0.0025, "first carrier frequency"),
        "ratio": Param(float, math.sqrt(2), "second/first carrier frequency ratio"),
        "gain": Param(float, DEFAULT_GAIN, "forcing gain"),
        "periods": Param(int, 15, "periods of the first carrier to simulate"),
        **_integration(),
        **_physics(),
    },
    "circuit": {
        "expr": Param(str, None, "boolean expression, e.g. 'a ^ b'"),
        "inputs": Param(dict, {}, "input bindings name=digit"),
        "mode": Param(str, "staged", "staged or coupled"),
        "seed": Param(int, None, "draw a random expression from this seed when no expr is given"),
        "variables": Param(int, 3, "variable count for random expressions"),
        "depth": Param(int, 3, "maximum depth of random expressions"),
        "gain": Param(float, DEFAULT_GAIN, "forcing gain"),
        "frequency": Param(float, 0.0025, "carrier frequency"),
        **_integration(),
        **_physics(),
    },
    "xor": {
        "a": Param(int, 0, "first input digit"),
        "b": Param(int, 0, "second input digit"),
        "stencil": Param(str, "paper", "paper (3 nodes) or nand (4 NAND gates)"),
        "mode": Param(str, "staged", "staged or coupled"),
        "gain": Param(float, DEFAULT_GAIN, "forcing gain"),
        "frequency": Param(float, 0.0025, "carrier frequency"),
        **_integration(),
        **_physics(),
    },
    "film": {
        "layout": Param(str, None, "layout JSON file; default is the built-in eight-contact layout"),
        "points": Param(int, film.FILM_POINTS, "grid points per side (power of two)"),
        "size": Param(float, film.FILM_SIZE, "domain side length"),
        "radius": Param(float, film.CONTACT_RADIUS, "contact radius of the built-in layout"),
        "source_gap": Param(float, 12.0, "spacing of each source pair"),
        "source_offset": Param(float, 20.0, "vertical offset of the source pairs from the centre"),
        "detector_x": Param(float, 18.0, "horizontal offset of the detectors from the centre"),
        "detector_y": Param(float, 12.0, "vertical offset of the detectors from the centre"),
        "sponge_width": Param(float, film.SPONGE_WIDTH, "absorbing boundary width (0 disables)"),
        "sponge_depth": Param(float, film.SPONGE_DEPTH, "absorbing boundary depth"),
        "gain": Param(float, film.FILM_GAIN, "source forcing gain"),
        "frequency": Param(float, film.FILM_CARRIER.frequency, "carrier frequency"),
        "periods": Param(int, film.FILM_PERIODS, "carrier periods to simulate"),
        "dt": Param(float, film.FILM_DT, "time step"),
        "probe_stride": Param(int, 5, "steps between probe samples"),
        "snapshot_every": Param(int, 0, "steps between field snapshots (0 = none)"),
        "snapshot_format": Param(str, "pgm", "pgm or csv"),
        "detector_bias": Param(float, 0.0, "constant drive on detector contacts, in [0, 0.09]"),
        "u0": Param(float, 0.01, "uniform initial field"),
        "d_re": Param(float, 1.0, "real part of the dispersion coefficient"),
        "d_im": Param(float, 0.01, "imaginary part of the dispersion coefficient"),
        **_physics(),
    },
}

SCHEMAS = {
    "gate": "gate_trajectory.csv: t, re_u_0, im_u_0, abs_u_0, v_0, abs_u_0_p",
    "mux": "mux_channel_<k>_<gate>.csv: t, abs_u, p, abs_u_p",
    "circuit": "circuit.net: netlist (inputs line, gN = x NAND y lines, output line)",
    "xor": "no files",
    "film": "probe_<id>.csv: t, re_u, im_u, abs_u; summary.csv: site, source, digit, phase_offset, "
            "delay, distance, flags; snapshot_<step>.pgm|csv: |u| map or i, j, re_u, im_u",
    "sweep": "sweep.csv: swept parameters (sorted by name), status, digits, diagnostic",
}


# --- parameter handling ------------------------------------------------------

def _coerce(kind: str, name: str, value):
    spec = PARAMS[kind][name]
    if value is None:
        return None
    if spec.type is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{name} must be an object of name: digit pairs")
        return {str(k): int(v) for k, v in value.items()}
    if spec.type is int and isinstance(value, float) and not value.is_integer():
        raise ConfigError(f"{name} must be an integer, got {value}")
    try:
        return spec.type(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: cannot interpret {value!r} as {spec.type.__name__}") from None


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise FileNotFoundError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


def resolve(kind: str, config: dict, flags: dict) -> dict:
    """Defaults, then config keys, then explicit flags.  Unknown config keys are rejected."""
    config = dict(config)
    experiment = config.pop("experiment", kind)
    if experiment != kind:
        raise ConfigError(f"config is for experiment {experiment!r}, not {kind!r}")
    config.pop("out", None)
    unknown = sorted(set(config) - set(PARAMS[kind]))
    if unknown:
        raise ConfigError(f"unknown config keys for {kind}: {', '.join(unknown)}")
    params = {name: spec.default for name, spec in PARAMS[kind].items()}
    params.update({k: _coerce(kind, k, v) for k, v in config.items()})
    params.update({k: _coerce(kind, k, v) for k, v in flags.items() if v is not None})
    return params


def _digit(name, value):
    if value not in (0, 1):
        raise ConfigError(f"{name} must be 0 or 1, got {value}")
    return value


def _gate(name):
    try:
        return Gate.parse(name)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _stno(p) -> StnoParams:
    return StnoParams(omega=p["omega"], lam=p["lam"], b=p["saturation"], floor=p["floor"])


def _mode(p):
    if p["mode"] not in ("staged", "coupled"):
        raise ConfigError(f"mode must be staged or coupled, got {p['mode']!r}")
    return p["mode"]


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


# --- experiments ---------------------------------------------------------------
# Each returns (stdout text, exit code, diagnostic number).

def run_gate(p, out: Path | None):
    gate = _gate(p["gate"])
    a, b = _digit("a", p["a"]), _digit("b", p["b"])
    carrier = Carrier(amplitude=p["amplitude"], frequency=p["frequency"])
    traj = run_logic_gate(gate, a, b, _stno(p), carrier, p["gain"], p["periods"], p["dt"], p["stride"])
    if out is not None:
        traj.write_csv(out / "gate_trajectory.csv", carrier)
    result = correlate(traj.abs_u(0), traj.t, carrier, analysis_window(traj.t), r_ref=traj.r_ref[0])
    digit = decode_gate_run(traj, carrier)
    return str(digit), 0, result.integral


def run_mux(p, out: Path | None):
    names = [g.strip() for g in p["gates"].split(",")]
    if len(names) != 2:
        raise ConfigError("gates must name exactly two gates, e.g. NAND,OR")
    gates = [_gate(g) for g in names]
    a, b = _digit("a", p["a"]), _digit("b", p["b"])
    carriers = [Carrier(frequency=p["frequency"]), Carrier(frequency=p["frequency"] * p["ratio"])]
    forcing = multiplex_forcing([(c, g, a, b) for c, g in zip(carriers, gates)], gain=p["gain"])
    slow = min(carriers, key=lambda c: c.frequency)
    state = NetworkState.initial(1, u0=DEFAULT_U0, tau=2 * slow.period)
    traj = integrate(state, _stno(p), [forcing], p["periods"] * carriers[0].period, dt=p["dt"], stride=p["stride"])
    if out is not None:
        abs_u = traj.abs_u(0)
        for k, (c, g) in enumerate(zip(carriers, gates)):
            pk = c(traj.t)
            rows = [[_fmt(float(t)), _fmt(float(u)), _fmt(float(q)), _fmt(float(u * q))]
                    for t, u, q in zip(traj.t, abs_u, pk)]
            _write_rows(out / f"mux_channel_{k}_{g.name}.csv", ["t", "abs_u", "p", "abs_u_p"], rows)
    digits = decode_multiplex(traj, carriers)
    window = analysis_window(traj.t)
    smallest = min(abs(correlate(traj.abs_u(0), traj.t, c, window).integral) for c in carriers)
    return " ".join(f"{g.name}:{d}" for g, d in zip(gates, digits)), 0, smallest


def _circuit_kwargs(p):
    return dict(params=_stno(p), carrier=Carrier(frequency=p["frequency"]), gain=p["gain"])


def _evaluate(config, inputs, mode, p):
    if mode == "staged":
        return circ.evaluate_staged(config, inputs, dt=p["dt"], stride=p["stride"])
    return circ.evaluate_coupled(config, inputs, dt=p["dt"], stride=p["stride"])


def run_circuit(p, out: Path | None):
    mode = _mode(p)
    text = p["expr"]
    if text is None:
        if p["seed"] is None:
            raise ConfigError("circuit needs an expression or a seed")
        names = [chr(ord("a") + i) for i in range(p["variables"])]
        text = circ.format_expr(circ.random_expression(random.Random(p["seed"]), names, p["depth"]))
        print(f"expression: {text}", file=sys.stderr)
    expr = circ.parse_expr(text)
    inputs = {k: _digit(k, v) for k, v in p["inputs"].items()}
    for name in circ.variables(expr):
        if name not in inputs:
            raise UnboundVariableError(name)
    dag = circ.to_nand(expr)
    if out is not None:
        path = out / "circuit.net"
        path.write_text(circ.to_netlist(dag))
        print(f"netlist: {path}", file=sys.stderr)
    digit = _evaluate(circ.compile_dag(dag, **_circuit_kwargs(p)), inputs, mode, p)
    expected = circ.oracle_evaluate(expr, inputs)
    return str(digit), 0, float(digit == expected)


def run_xor(p, out: Path | None):
    mode = _mode(p)
    inputs = {"a": _digit("a", p["a"]), "b": _digit("b", p["b"])}
    if p["stencil"] == "paper":
        config = circ.compile_xor_paper(**_circuit_kwargs(p))
    elif p["stencil"] == "nand":
        config = circ.compile_expr("a ^ b", **_circuit_kwargs(p))
    else:
        raise ConfigError(f"stencil must be paper or nand, got {p['stencil']!r}")
    return str(_evaluate(config, inputs, mode, p)), 0, float("nan")


def _film_setup(p):
    params = film.FilmParams(D=complex(p["d_re"], p["d_im"]), omega=p["omega"], lam=p["lam"],
                             b=p["saturation"], floor=p["floor"])
    grid = film.FilmGrid.make(p["points"], lx=p["size"], u0=p["u0"], sponge_width=p["sponge_width"],
                              sponge_depth=p["sponge_depth"])
    if p["layout"] is not None:
        contacts = film.read_layout(p["layout"])
    else:
        contacts = film.fig3_layout(p["size"], radius=p["radius"], sponge_width=p["sponge_width"],
                                    source_gap=p["source_gap"], source_offset=p["source_offset"],
                                    detector_offset=(p["detector_x"], p["detector_y"]))
    if p["snapshot_format"] not in ("pgm", "csv"):
        raise ConfigError("snapshot_format must be pgm or csv")
    return params, grid, contacts, Carrier(frequency=p["frequency"])


def run_film(p, out: Path | None):
    params, grid, contacts, carrier = _film_setup(p)
    run = film.simulate_film(grid, params, contacts, carrier, p["gain"], p["periods"] * carrier.period, p["dt"],
                             probe_stride=p["probe_stride"], snapshot_stride=p["snapshot_every"] or None,
                             detector_bias=p["detector_bias"])
    reports = film.lock_reports(run)
    rows = []
    failed = False
    worst = 0.0
    for r in reports:
        flags = []
        if p["sponge_width"] == 0:
            flags.append("no-sponge")
        if r.digit is None:
            flags.append("indeterminate")
            failed = True
        if math.isnan(r.phase_offset):
            flags.append("unpaired")
            failed = True
        elif abs(r.phase_offset) >= math.pi / 4:
            flags.append("unlocked")
        if not r.delay > 0:
            flags.append("non-positive-delay")
        worst = max(worst, abs(r.phase_offset)) if not math.isnan(r.phase_offset) else worst
        rows.append([r.detector, r.source, "" if r.digit is None else r.digit,
                     r.phase_offset, r.delay, r.distance, ";".join(flags)])
    header = ["site", "source", "digit", "phase_offset", "delay", "distance", "flags"]
    if out is not None:
        for cid, probe in run.probes.items():
            film.write_probe_csv(out / f"probe_{cid}.csv", probe)
        _write_rows(out / "summary.csv", header, [[_fmt(c) for c in row] for row in rows])
        for k, (t, u) in enumerate(run.snapshots):
            step = k * p["snapshot_every"]
            if p["snapshot_format"] == "pgm":
                film.write_pgm(out / f"snapshot_{step:07d}.pgm", u)
            else:
                film.write_snapshot_csv(out / f"snapshot_{step:07d}.csv", u)
    lines = ["  ".join(f"{h:>12}" for h in header)]
    lines += ["  ".join(f"{c:>12.4g}" if isinstance(c, float) else f"{str(c):>12}" for c in row) for row in rows]
    digits = " ".join(f"{r.detector}:{'?' if r.digit is None else r.digit}" for r in reports)
    return "\n".join(lines) + "\n" + digits, (1 if failed else 0), worst


RUNNERS = {"gate": run_gate, "mux": run_mux, "circuit": run_circuit, "xor": run_xor, "film": run_film}


# --- sweeps ------------------------------------------------------------------

def _sweep_job(job):
    kind, params = job
    try:
        text, code, diag = RUNNERS[kind](params, None)
        status = "ok" if code == 0 else "failed"
        digits = text.splitlines()[-1]
    except StnoError as exc:
        status, digits, diag = type(exc).__name__, "indeterminate", getattr(exc, "integral", None)
    return status, digits, diag


def sweep_jobs(config: dict):
    config = dict(config)
    config.pop("experiment", None)
    config.pop("out", None)
    base = config.pop("base", None)
    if base not in RUNNERS:
        raise ConfigError(f"sweep needs base set to one of {', '.join(sorted(RUNNERS))}")
    axes = config.pop("sweep", None)
    if not isinstance(axes, dict) or not axes:
        raise ConfigError("sweep needs a non-empty 'sweep' object of parameter: [values]")
    for name, values in axes.items():
        if name not in PARAMS[base]:
            raise ConfigError(f"unknown sweep parameter {name!r} for {base}")
        if not isinstance(values, list) or not values:
            raise ConfigError(f"sweep list for {name!r} is empty")
    fixed = resolve(base, config, {})
    names = sorted(axes)
    combos = sorted({tuple(_coerce(base, n, v) for n, v in zip(names, combo))
                     for combo in itertools.product(*(axes[n] for n in names))})
    jobs = [(base, {**fixed, **dict(zip(names, combo))}) for combo in combos]
    # validate every run before starting any
    for _, params in jobs:
        _validate(base, params)
    return names, combos, jobs


def _validate(kind, p):
    """Build the parameter objects a run needs, so bad values fail before any simulation."""
    if kind in ("gate", "mux", "circuit", "xor"):
        _stno(p)
        Carrier(frequency=p["frequency"])
    if kind == "gate":
        _gate(p["gate"])
        Carrier(amplitude=p["amplitude"], frequency=p["frequency"])
    if kind in ("gate", "mux", "xor"):
        _digit("a", p["a"])
        _digit("b", p["b"])
    if kind in ("circuit", "xor"):
        _mode(p)
    if kind == "mux":
        for g in p["gates"].split(","):
            _gate(g.strip())
    if kind == "film":
        _film_setup(p)
    if p.get("dt") is not None and not p["dt"] > 0:
        raise ConfigError("dt must be positive")
    if p.get("gain") is not None and p["gain"] < 0:
        raise ConfigError("gain must be non-negative")


def run_sweep(config: dict, out: Path | None):
    names, combos, jobs = sweep_jobs(config)
    try:
        workers = max(1, int(os.environ.get("STNO_THREADS", os.cpu_count() or 1)))
    except ValueError:
        raise ConfigError("STNO_THREADS must be an integer") from None
    workers = min(workers, len(jobs))
    if workers == 1:
        results = [_sweep_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_job, jobs))
    rows = [[_fmt(v) for v in combo] + [status, digits, _fmt(diag)]
            for combo, (status, digits, diag) in zip(combos, results)]
    header = names + ["status", "digits", "diagnostic"]
    if out is not None:
        _write_rows(out / "sweep.csv", header, rows)
    lines = [",".join(header)] + [",".join(r) for r in rows]
    return "\n".join(lines), 0, float("nan")


# --- argument parsing --------------------------------------------------------

def _bindings(tokens):
    inputs = {}
    for tok in tokens:
        name, sep, value = tok.partition("=")
        if not sep or value not in ("0", "1"):
            raise ConfigError(f"input binding must look like name=0 or name=1, got {tok!r}")
        inputs[name] = int(value)
    return inputs


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stno", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for kind, params in PARAMS.items():
        sp = sub.add_parser(kind, help=f"run the {kind} experiment", epilog=f"outputs: {SCHEMAS[kind]}",
                            formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        sp.add_argument("--config", help="JSON file of parameters")
        sp.add_argument("--out", help="output directory (default: stno_out)")
        for name, spec in params.items():
            if spec.type is dict:
                continue
            sp.add_argument(f"--{name.replace('_', '-')}", dest=name, type=spec.type, default=None,
                            help=f"{spec.help} (default {spec.default})")
        if kind == "circuit":
            sp.add_argument("bindings", nargs="*", help="input bindings such as a=1 b=0")
    sp = sub.add_parser("sweep", help="cartesian parameter sweep", epilog=f"outputs: {SCHEMAS['sweep']}")
    sp.add_argument("--config", required=True,
                    help='JSON file: {"base": "gate", "sweep": {"gain": [0.05, 0.2]}, ...fixed parameters}')
    sp.add_argument("--out", help="output directory (default: stno_out)")
    return parser


def _run(args) -> tuple[str, int]:
    config = load_config(args.config) if args.config else {}
    out = Path(args.out or config.get("out") or "stno_out")
    if args.command == "sweep":
        if config.get("experiment", "sweep") != "sweep":
            raise ConfigError(f"config is for experiment {config['experiment']!r}, not 'sweep'")
        out.mkdir(parents=True, exist_ok=True)
        text, code, _ = run_sweep(config, out)
        return text, code
    flags = {name: getattr(args, name, None) for name in PARAMS[args.command] if PARAMS[args.command][name].type is not dict}
    params = resolve(args.command, config, flags)
    if args.command == "circuit" and args.bindings:
        params["inputs"] = {**params["inputs"], **_bindings(args.bindings)}
    if params.get("layout") is not None and not Path(params["layout"]).is_file():
        raise FileNotFoundError(f"layout file not found: {params['layout']}")
    _validate(args.command, params)
    out.mkdir(parents=True, exist_ok=True)
    text, code, _ = RUNNERS[args.command](params, out)
    return text, code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        text, code = _run(args)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StnoError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
