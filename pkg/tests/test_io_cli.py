import json
import math
from importlib import resources

import pytest

from qbs_sim.cli import main
from qbs_sim.dynamics import HardwareParams
from qbs_sim.errors import CutoffExceededError, ValidationError
from qbs_sim.experiments import RunOptions, delayed_choice_run, fringe_scan
from qbs_sim.hilbert import SpaceLayout
from qbs_sim.io import (
    RunConfig,
    Table,
    parse_program,
    render,
    sidecar_path,
    validate_document,
    write_program,
)
from qbs_sim.stateprep import CatSpec, PulseProgram, Swap, law_eberly_program, run_program

HEADER = "theta,pe,pe_e,pe_g,p_branch_e,p_branch_g"
FIG_S2 = resources.files("qbs_sim").joinpath("data", "fig_s2.json")


def run_cli(capsys, *argv):
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_program_round_trip(tmp_path):
    program = law_eberly_program([0.6, 0.0, 0.8j], HardwareParams())
    path = tmp_path / "p.json"
    write_program(program, path)
    assert parse_program(path) == program


def test_unknown_step_kind_names_index(tmp_path):
    doc = {"steps": [
        {"kind": "drive", "qubit": "ancilla", "angle": 1.0},
        {"kind": "swapp", "qubit": "ancilla", "duration": 2.0},
    ]}
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc, indent=1))
    with pytest.raises(ValidationError, match="step 1") as info:
        parse_program(path)
    assert "line" in str(info.value)


def test_malformed_program_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"steps": [\n  {"kind": "swap",}\n]}')
    with pytest.raises(ValidationError, match="line 2"):
        parse_program(path)


def test_negative_duration_rejected(tmp_path):
    path = tmp_path / "neg.json"
    path.write_text(json.dumps({"steps": [{"kind": "swap", "qubit": "test", "duration": -3}]}))
    with pytest.raises(ValidationError):
        parse_program(path)


def test_layout_mismatch(tmp_path):
    path = tmp_path / "p.json"
    write_program(PulseProgram((Swap("ancilla", 1.0),)), path)
    with pytest.raises(ValidationError, match="ancilla"):
        parse_program(path, SpaceLayout(4, ("test",)))


def test_swap_budget(tmp_path):
    path = tmp_path / "p.json"
    write_program(PulseProgram(tuple(Swap("ancilla", 5.0) for _ in range(4))), path)
    assert len(parse_program(path, SpaceLayout(4, ("ancilla",)))) == 4
    with pytest.raises(CutoffExceededError):
        parse_program(path, SpaceLayout(3, ("ancilla",)))


def test_fig_s2_matches_pipeline():
    layout = SpaceLayout(20)
    program = parse_program(FIG_S2, layout)
    theta = json.loads(FIG_S2.read_text())["metadata"]["theta"]
    result = run_program(program, layout, HardwareParams())
    point = delayed_choice_run(CatSpec(math.pi / 4, 2.0), theta, RunOptions(prep="synthesized", n_cutoff=20))
    assert result.measured == ("test", "ancilla")
    for (t, a), p in result.outcomes.items():
        assert abs(p - point.joint[t, a]) < 1e-9


def test_config_rejects_unknown_keys():
    with pytest.raises(ValidationError, match="colour"):
        RunConfig.from_dict({"colour": 1})
    with pytest.raises(ValidationError):
        RunConfig.from_dict({"theta_steps": 4})


def test_config_round_trip():
    cfg = RunConfig.from_dict({"cat": {"alpha": 3.0}, "seed": 9, "delays": [0, 10]})
    assert cfg.cat.alpha == 3.0 and cfg.cat.phi == pytest.approx(math.pi / 4)
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


def test_json_record_validates():
    rec = fringe_scan(CatSpec(math.pi / 4, 2.0), 8)
    doc = json.loads(render(rec, "json"))
    validate_document(doc, "experiment_record")


def test_table_render():
    text = render(Table(("a", "b"), [(1.0, "x"), (1 / 3, "y")]), "csv")
    assert text == "a,b\n1,x\n0.333333333,y\n"


def test_fringe_csv_contract(tmp_path, capsys):
    out = tmp_path / "fringe.csv"
    code, _, _ = run_cli(capsys, "fringe", "--alpha", 2, "--phi", 0.7853981634, "--theta-steps", 64, "--out", out)
    assert code == 0
    lines = out.read_bytes().decode().split("\n")
    assert lines[0] == HEADER
    assert len(lines) == 66 and lines[-1] == ""
    assert b"\r" not in out.read_bytes()
    side = json.loads(sidecar_path(out).read_text())
    assert side["command"] == "fringe" and side["seed"] == 0


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_determinism(tmp_path, capsys, fmt):
    outs = []
    for k in range(2):
        path = tmp_path / f"c{k}.{fmt}"
        code, _, _ = run_cli(capsys, "conditional", "--theta-steps", 8, "--shots", 100, "--seed", 5,
                             "--format", fmt, "--out", path)
        assert code == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_replay_reproduces(tmp_path, capsys):
    out = tmp_path / "w.json"
    code, _, _ = run_cli(capsys, "wigner", "--format", "json", "--bounds", "0,1.5,-0.5,0.5",
                         "--resolution", "7,5", "--out", out)
    assert code == 0
    validate_document(json.loads(out.read_text()), "wigner_grid")
    again = tmp_path / "again.json"
    code, _, _ = run_cli(capsys, "replay", sidecar_path(out), "--out", again)
    assert code == 0
    assert again.read_bytes() == out.read_bytes()


def test_wigner_minimum_near_one(capsys):
    code, out, _ = run_cli(capsys, "wigner", "--phi", 0.7853981634, "--theta", 1.5707963268,
                           "--condition", "none", "--resolution", "51,31")
    assert code == 0
    rows = [tuple(map(float, line.split(","))) for line in out.splitlines()[1:]]
    re, im, w = min(rows, key=lambda r: r[2])
    assert w < 0 and abs(complex(re, im) - 1) < 0.3


def test_decay_coherence_ratio(capsys):
    code, out, _ = run_cli(capsys, "decay", "--delays", "0,1000", "--theta-steps", 8,
                           "--bounds", "0.3,1.5,-0.3,0.3", "--resolution", "7,3")
    assert code == 0
    lines = out.splitlines()
    header = lines[0].split(",")
    last = dict(zip(header, lines[-1].split(",")))
    assert abs(float(last["coherence_ratio"]) - 0.51) < 0.03


def test_prep_emit_and_verify(tmp_path, capsys):
    program = tmp_path / "prog.json"
    code, _, _ = run_cli(capsys, "prep", "--format", "json", "--out", program)
    assert code == 0
    doc = json.loads(program.read_text())
    validate_document(doc, "pulse_program")
    assert doc["metadata"]["fidelity"] > 0.99
    code, out, _ = run_cli(capsys, "prep", "--verify", program)
    assert code == 0 and "fidelity" in out


def test_run_subcommand(capsys):
    code, out, _ = run_cli(capsys, "run", FIG_S2)
    assert code == 0
    assert len(out.splitlines()) == 5


def test_tomography_subcommand(capsys):
    code, out, _ = run_cli(capsys, "tomography", "--chi", "1,0", "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert doc["columns"] == ["re", "im", "w_direct", "w_tomography"]
    _, _, direct, tomo = doc["rows"][0]
    assert abs(direct - tomo) < 1e-6 and direct < 0


def test_validation_error_exit_code(capsys):
    code, _, err = run_cli(capsys, "fringe", "--theta-steps", 4)
    assert code == 1 and "error[" in err
    code, _, err = run_cli(capsys, "fringe", "--bogus")
    assert code == 1


def test_missing_file_exit_code(tmp_path, capsys):
    code, _, err = run_cli(capsys, "run", tmp_path / "none.json")
    assert code == 1 and "none.json" in err


def test_numerical_violation_exit_code(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"prep": "synthesized", "decoherence": True, "delay_ns": 100,
                               "rates": {"gamma_res": 1.0}, "dt": 10, "theta_steps": 8}))
    code, _, err = run_cli(capsys, "fringe", "--config", cfg)
    assert code == 2 and "E_NUMERIC" in err


def test_flags_override_config(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"theta_steps": 16}))
    code, out, _ = run_cli(capsys, "fringe", "--config", cfg, "--theta-steps", 8)
    assert code == 0 and len(out.splitlines()) == 9
