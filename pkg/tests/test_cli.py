import csv
import json

import pytest

from stno_logic import cli
from stno_logic.errors import ConfigError
from stno_logic.film import Contact, Polarity, write_layout


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out.strip(), err


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.mark.parametrize("gate, a, b, digit", [("NAND", 0, 0, "1"), ("AND", 1, 0, "0")])
def test_gate(capsys, tmp_path, gate, a, b, digit):
    code, out, _ = run(capsys, "gate", "--gate", gate, "--a", a, "--b", b, "--out", tmp_path)
    assert (code, out) == (0, digit)
    rows = read_csv(tmp_path / "gate_trajectory.csv")
    assert rows[0][-1] == "abs_u_0_p"


def test_gate_bad_name(capsys, tmp_path):
    code, _, err = run(capsys, "gate", "--gate", "XNOR", "--out", tmp_path)
    assert code == 2
    assert "XNOR" in err


def test_mux(capsys, tmp_path):
    code, out, _ = run(capsys, "mux", "--out", tmp_path)
    assert (code, out) == (0, "NAND:1 OR:0")
    code, out, _ = run(capsys, "mux", "--a", 1, "--b", 1, "--out", tmp_path)
    assert (code, out) == (0, "NAND:0 OR:1")
    assert read_csv(tmp_path / "mux_channel_1_OR.csv")[0] == ["t", "abs_u", "p", "abs_u_p"]


def test_mux_frequency_collision(capsys, tmp_path):
    code, _, err = run(capsys, "mux", "--ratio", 1.0, "--out", tmp_path)
    assert code == 1
    assert "FrequencyCollisionError" in err


def test_circuit(capsys, tmp_path):
    code, out, err = run(capsys, "circuit", "--expr", "a ^ b", "a=1", "b=0", "--out", tmp_path)
    assert (code, out) == (0, "1")
    assert str(tmp_path / "circuit.net") in err
    assert (tmp_path / "circuit.net").read_text().endswith("output g3\n")
    code, out, _ = run(capsys, "circuit", "--expr", "a&b | c&(a^b)", "a=1", "b=1", "c=0", "--out", tmp_path)
    assert (code, out) == (0, "1")


def test_circuit_unbound(capsys, tmp_path):
    code, _, err = run(capsys, "circuit", "--expr", "a & zed", "a=1", "--out", tmp_path)
    assert code == 2
    assert "zed" in err


def test_circuit_parse_error(capsys, tmp_path):
    code, _, err = run(capsys, "circuit", "--expr", "a & & b", "a=1", "b=1", "--out", tmp_path)
    assert code == 2
    assert "position 4" in err


def test_circuit_coupled_from_config(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"experiment": "circuit", "expr": "a ^ b", "inputs": {"a": 1, "b": 1},
                               "mode": "coupled"}))
    code, out, _ = run(capsys, "circuit", "--config", cfg, "--out", tmp_path)
    assert (code, out) == (0, "0")


@pytest.mark.parametrize("stencil", ["paper", "nand"])
def test_xor(capsys, tmp_path, stencil):
    for a in (0, 1):
        for b in (0, 1):
            code, out, _ = run(capsys, "xor", "--stencil", stencil, "--a", a, "--b", b, "--out", tmp_path)
            assert (code, out) == (0, str(a ^ b))


def test_flags_override_config(capsys, tmp_path):
    cfg = tmp_path / "g.json"
    cfg.write_text(json.dumps({"gate": "OR", "a": 0, "b": 0}))
    code, out, _ = run(capsys, "gate", "--config", cfg, "--out", tmp_path)
    assert out == "0"
    code, out, _ = run(capsys, "gate", "--config", cfg, "--gate", "NAND", "--out", tmp_path)
    assert out == "1"


def test_resolve_precedence():
    p = cli.resolve("gate", {"gain": 0.3, "a": 1}, {"gain": 0.25, "b": None})
    assert (p["gain"], p["a"], p["b"], p["gate"]) == (0.25, 1, 0, "NAND")


def test_unknown_config_key(capsys, tmp_path):
    cfg = tmp_path / "g.json"
    cfg.write_text(json.dumps({"gate": "OR", "gian": 0.2}))
    code, _, err = run(capsys, "gate", "--config", cfg, "--out", tmp_path)
    assert code == 2
    assert "gian" in err
    with pytest.raises(ConfigError):
        cli.resolve("gate", {"experiment": "film"}, {})


def test_invalid_physics_rejected_before_run(capsys, tmp_path):
    code, _, _ = run(capsys, "gate", "--saturation", 0.0, "--out", tmp_path)
    assert code == 2
    code, _, _ = run(capsys, "gate", "--a", 2, "--out", tmp_path)
    assert code == 2


def test_missing_config(capsys, tmp_path):
    code, _, _ = run(capsys, "gate", "--config", tmp_path / "nope.json", "--out", tmp_path)
    assert code == 2


def test_film_missing_layout(capsys, tmp_path):
    code, _, err = run(capsys, "film", "--layout", tmp_path / "nope.json", "--out", tmp_path)
    assert code == 2
    assert "nope.json" in err


def test_film_layout_overflow(capsys, tmp_path):
    code, _, _ = run(capsys, "film", "--size", 30, "--points", 64, "--out", tmp_path)
    assert code == 2


def _tiny_layout(tmp_path):
    contacts = [Contact(1, (8.0, 12.0), 2.0, Polarity.POSITIVE), Contact(2, (16.0, 12.0), 2.0, Polarity.DETECTOR)]
    path = tmp_path / "layout.json"
    write_layout(path, contacts)
    return path


def test_film_small_layout(capsys, tmp_path):
    layout = _tiny_layout(tmp_path)
    code, out, _ = run(capsys, "film", "--layout", layout, "--points", 64, "--size", 24, "--sponge-width", 4,
                       "--periods", 4, "--dt", 0.05, "--snapshot-every", 4000, "--out", tmp_path)
    rows = read_csv(tmp_path / "summary.csv")
    assert rows[0] == ["site", "source", "digit", "phase_offset", "delay", "distance", "flags"]
    assert [r[:2] for r in rows[1:]] == [["2", "1"]]
    assert read_csv(tmp_path / "probe_2.csv")[0] == ["t", "re_u", "im_u", "abs_u"]
    assert (tmp_path / "snapshot_0000000.pgm").read_bytes().startswith(b"P5")
    assert code in (0, 1)
    assert out.splitlines()[-1].startswith("2:")


def test_film_without_sponge_is_flagged(capsys, tmp_path):
    layout = _tiny_layout(tmp_path)
    run(capsys, "film", "--layout", layout, "--points", 64, "--size", 24, "--sponge-width", 0,
        "--periods", 4, "--dt", 0.05, "--out", tmp_path)
    rows = read_csv(tmp_path / "summary.csv")
    assert all("no-sponge" in r[-1] for r in rows[1:])


def _sweep(tmp_path, name, body):
    cfg = tmp_path / f"{name}.json"
    cfg.write_text(json.dumps(body))
    return cfg


def test_sweep_threshold(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("STNO_THREADS", "2")
    cfg = _sweep(tmp_path, "s", {"base": "gate", "gate": "NAND", "a": 0, "b": 0, "sweep": {"gain": [0.2, 0.05, 0.1]}})
    code, _, _ = run(capsys, "sweep", "--config", cfg, "--out", tmp_path / "one")
    assert code == 0
    rows = read_csv(tmp_path / "one" / "sweep.csv")
    assert rows[0] == ["gain", "status", "digits", "diagnostic"]
    assert [r[0] for r in rows[1:]] == ["0.05", "0.1", "0.2"]
    assert [r[2] for r in rows[1:]] == ["indeterminate", "indeterminate", "1"]


def test_sweep_is_reproducible(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("STNO_THREADS", "3")
    cfg = _sweep(tmp_path, "s", {"base": "xor", "sweep": {"a": [1, 0], "b": [0, 1]}})
    for name in ("one", "two"):
        assert run(capsys, "sweep", "--config", cfg, "--out", tmp_path / name)[0] == 0
    first = (tmp_path / "one" / "sweep.csv").read_bytes()
    assert first == (tmp_path / "two" / "sweep.csv").read_bytes()
    rows = read_csv(tmp_path / "one" / "sweep.csv")
    assert [(r[0], r[1], r[3]) for r in rows[1:]] == [("0", "0", "0"), ("0", "1", "1"), ("1", "0", "1"),
                                                     ("1", "1", "0")]


@pytest.mark.parametrize("body", [
    {"base": "gate", "sweep": {"gain": []}},
    {"base": "gate", "sweep": {}},
    {"base": "gate"},
    {"base": "nope", "sweep": {"gain": [0.2]}},
    {"base": "gate", "sweep": {"gian": [0.2]}},
    {"base": "gate", "sweep": {"gain": [0.2]}, "extra": 1},
])
def test_sweep_usage_errors(capsys, tmp_path, body):
    code, _, _ = run(capsys, "sweep", "--config", _sweep(tmp_path, "bad", body), "--out", tmp_path)
    assert code == 2


def test_help_documents_columns(capsys):
    with pytest.raises(SystemExit):
        cli.build_parser().parse_args(["film", "--help"])
    assert "summary.csv" in capsys.readouterr().out
