"""Phase-encoded logic on driven nonlinear oscillators and spin-wave films."""

from .circuit import (
    CircuitConfig,
    NandDag,
    compile_dag,
    compile_expr,
    compile_xor_paper,
    evaluate_coupled,
    evaluate_staged,
    evaluate_staged_all,
    from_netlist,
    oracle_evaluate,
    parse_expr,
    to_nand,
    to_netlist,
)
from .encoding import (
    DEFAULT_CARRIER,
    Carrier,
    Gate,
    carrier_value,
    decode_amplitude,
    encode_digit,
    gate_value,
    sign_threshold,
    truth_table,
)
from .errors import StnoError
from .film import (
    Contact,
    FilmGrid,
    FilmParams,
    Polarity,
    decode_detectors,
    dispersion_frequency,
    fig3_layout,
    simulate_film,
    step_film,
)
from .forcing import ForcingTerm, constant_forcing, dynamic_gate_forcing, gate_forcing, multiplex_forcing
from .network import LOGIC_PARAMS, PAPER_PARAMS, NetworkState, StnoParams, Trajectory, integrate, run_logic_gate
from .readout import burst_events, correlate, decode_gate_run, decode_multiplex, phase_lock_offset

__version__ = "0.1.0"
