import json
from pathlib import Path

import pytest

from mech import cli
from mech.errors import ParseError
from mech.modelfile import parse_model

MODELS = Path(__file__).resolve().parent.parent / "models"


def run(tmp_path, command, model, *extra):
    code = cli.main([command, str(model), "--out", str(tmp_path), "--seed", "3", *extra])
    stem = Path(model).stem
    path = tmp_path / f"{stem}.report.json"
    return code, (json.loads(path.read_text()) if path.exists() else None)


def write(tmp_path, name, text):
    path = tmp_path / f"{name}.toml"
    path.write_text(text)
    return path


def test_lagrangian_command(tmp_path):
    code, rep = run(tmp_path, "lagrangian", MODELS / "oscillator.toml")
    assert code == 0 and rep["schema"] == 1 and rep["seed"] == 3
    sec = rep["analyses"]["lagrangian"]
    assert sec["regular"] == "yes"
    assert "v_q" in sec["theta"]
    assert sec["trajectory"]["energy_drift"] < 1e-8
    lines = (tmp_path / "oscillator.lagrangian.csv").read_text().splitlines()
    assert lines[0] == "t,q,v_q"


def test_constraints_command(tmp_path):
    code, rep = run(tmp_path, "constraints", MODELS / "singular_xy.toml")
    sec = rep["analyses"]["constraints"]
    assert code == 0
    assert sec["generations"] == [["v_x"]] and sec["status"] == "stabilized"


def test_noether_command(tmp_path):
    code, rep = run(tmp_path, "noether", MODELS / "central_force.toml")
    assert code == 0
    first, second = rep["analyses"]["noether"]["symmetries"]
    assert first["G"] == "q1*v_q2 - q2*v_q1" and first["verdict"] == "symmetry"
    assert float(first["drift"]) < 1e-8
    assert second["verdict"] == "symmetry"


def test_kl_command(tmp_path):
    code, rep = run(tmp_path, "kl", MODELS / "singular_xy.toml")
    (transfer,) = rep["analyses"]["kl"]["primary_constraints"]
    assert code == 0 and rep["analyses"]["kl"]["residuals_zero"]
    assert transfer["kl"] == "-v_x" and transfer["pullback"] == "0"


def test_geodesic_command(tmp_path):
    code, rep = run(tmp_path, "geodesic", MODELS / "sphere.toml")
    sec = rep["analyses"]["geodesic"]
    assert code == 0
    assert float(sec["geodesic"]["speed_drift"]) < 1e-7
    assert float(sec["geodesic"]["sode_agreement"]) < 1e-9
    assert abs(float(sec["transport"]["norm_change"])) < 1e-6


def test_control_command_and_csv(tmp_path):
    code, rep = run(tmp_path, "control", MODELS / "heisenberg.toml")
    sec = rep["analyses"]["control"]
    assert code == 0
    assert sec["lie_rank"]["rank"] == 3 and sec["involutive"] is False
    assert sec["reachability"]["reached"]
    header = (tmp_path / "heisenberg.control.csv").read_text().splitlines()[0]
    assert header == "t_start,t_end,u1,u2"
    code, rep = run(tmp_path, "control", MODELS / "double_integrator.toml")
    assert rep["analyses"]["control"]["kalman"]["rank"] == 2


def test_json_only_prints_report(tmp_path, capsys):
    code, rep = run(tmp_path, "lagrangian", MODELS / "oscillator.toml", "--json-only")
    assert code == 0
    assert json.loads(capsys.readouterr().out) == rep
    assert not (tmp_path / "oscillator.lagrangian.csv").exists()


def test_exit_code_parse_error(tmp_path, capsys):
    bad = write(tmp_path, "bad", '[manifold]\ncoords = ["q"]\n[lagrangian]\nL = "v_q^2 +"\n')
    assert cli.main(["lagrangian", str(bad), "--out", str(tmp_path)]) == 1
    assert "ParseError" in capsys.readouterr().err
    undeclared = write(tmp_path, "undeclared", '[manifold]\ncoords = ["q"]\n[lagrangian]\nL = "v_z^2"\n')
    assert cli.main(["lagrangian", str(undeclared), "--out", str(tmp_path)]) == 1
    with pytest.raises(ParseError):
        parse_model("[manifold]\ncoords = [")


def test_exit_code_singular_noether(tmp_path, capsys):
    model = write(tmp_path, "sing", '[manifold]\ncoords = ["x", "y"]\n[lagrangian]\nL = "v_x^2/2 + x*v_y"\n'
                                    '[[symmetries]]\nkind = "along_tau"\ncomponents = ["0", "1"]\n')
    assert cli.main(["noether", str(model), "--out", str(tmp_path)]) == 2
    assert "SingularLagrangian" in capsys.readouterr().err


def test_exit_code_chart_singularity(tmp_path, capsys):
    text = (MODELS / "sphere.toml").read_text().replace("x0 = [1.5707963267948966, 0.0, 0.0, 1.0]",
                                                         "x0 = [0.5, 0.0, -1.0, 0.0]")
    model = write(tmp_path, "pole", text)
    assert cli.main(["geodesic", str(model), "--out", str(tmp_path)]) == 3
    assert "ChartSingularity" in capsys.readouterr().err


def test_missing_section_is_precondition(tmp_path):
    assert cli.main(["geodesic", str(MODELS / "oscillator.toml"), "--out", str(tmp_path)]) == 2


def test_deterministic_reports(tmp_path):
    for model in ("central_force", "singular_xy", "heisenberg"):
        a, b = tmp_path / "a", tmp_path / "b"
        cli.main(["all", str(MODELS / f"{model}.toml"), "--out", str(a), "--seed", "5"])
        cli.main(["all", str(MODELS / f"{model}.toml"), "--out", str(b), "--seed", "5"])
        assert (a / f"{model}.report.json").read_bytes() == (b / f"{model}.report.json").read_bytes()


@pytest.mark.parametrize("model", ["central_force", "singular_xy", "sphere", "heisenberg"])
def test_all_is_union_of_commands(tmp_path, model):
    path = MODELS / f"{model}.toml"
    _, full = run(tmp_path / "all", "all", path)
    assert set(full["analyses"]) == set(cli.applicable(parse_model(path.read_text(), model)))
    for name, section in full["analyses"].items():
        _, single = run(tmp_path / name, name, path)
        assert single["analyses"] == {name: section}
