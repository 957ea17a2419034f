import io
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from shape_pde import cli

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _run(cfg_path, out, check=False, threads=None):
    err = io.StringIO()
    code = cli.run(cfg_path, check, threads, out, stderr=err)
    return code, err.getvalue()


def _summary(out):
    return dict(line.split("=", 1) for line in (Path(out) / "summary.txt").read_text().splitlines())


def _write(tmp_path, text, name="study.cfg"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


BALL_CFG = """[study]
kind = distance

[shape]
type = ball
center = 0, 0
radius = {radius}

[grid]
box = -2, 2
n = 65

[params]
a = 1e-1, 5e-2

[output]
dir = out
"""


# parsing -------------------------------------------------------------------------------

def test_parse_config_basics():
    secs = cli.parse_config("# c\n[Study]\nKind = distance  # trailing\n\n[params]\na = 1, 0.5\n")
    assert [s.name for s in secs] == ["study", "params"]
    assert secs[0].text("kind") == "distance"
    assert secs[1].decreasing("a") == [1.0, 0.5]
    assert secs[1].line_of("a") == 6


@pytest.mark.parametrize("text, line", [
    ("[study]\nkind = distance\nkind = distance\n", 3),
    ("[study\nkind = distance\n", 1),
    ("kind = distance\n", 1),
    ("[study]\nkind distance\n", 2),
])
def test_parse_errors_name_the_line(text, line):
    with pytest.raises(cli.ConfigError) as exc:
        cli.parse_config(text)
    assert exc.value.line == line


def test_points_and_lists():
    sec = cli.parse_config("[params]\npoints = 0, 0; 0.3, 0\nt = 1e-2, 1e-3\nbad = 1e-3, 1e-2\n")[0]
    assert sec.points("points").shape == (2, 2)
    with pytest.raises(cli.ConfigError):
        sec.decreasing("bad")


# exit codes -----------------------------------------------------------------------------

def test_malformed_radius_is_config_error(tmp_path):
    cfg = _write(tmp_path, BALL_CFG.format(radius="abc"))
    code, err = _run(cfg, tmp_path / "o")
    assert code == 2
    assert "line 7" in err


def test_missing_file_is_config_error(tmp_path):
    assert _run(tmp_path / "nope.cfg", tmp_path / "o")[0] == 2


@pytest.mark.parametrize("edit, line", [
    (("kind = distance", "kind = magic"), 2),
    (("a = 1e-1, 5e-2", "a = 5e-2, 1e-1"), 14),
    (("a = 1e-1, 5e-2", "a = 1e-1, 5e-2\ntol = 0.5"), 15),
    (("a = 1e-1, 5e-2", "a = 1e-1, 5e-2\nsolver = gmres"), 15),
    (("n = 65", "n = 65\nsupersample = 0"), 12),
    (("[output]", "[extras]\nx = 1\n[output]"), 16),
])
def test_config_errors(tmp_path, edit, line):
    cfg = _write(tmp_path, BALL_CFG.format(radius=1).replace(*edit))
    code, err = _run(cfg, tmp_path / "o")
    assert code == 2
    assert f"line {line}:" in err


def test_solver_failure_exit_code(tmp_path):
    text = BALL_CFG.format(radius=1).replace("a = 1e-1, 5e-2", "a = 1e-1, 5e-2\nsolver = cg\nmaxit = 2")
    code, err = _run(_write(tmp_path, text), tmp_path / "o")
    assert code == 3
    assert "did not converge" in err


def test_loose_tolerance_fails_oracle_check(tmp_path):
    code, err = _run(CONFIGS / "oracle_1d_loose.cfg", tmp_path / "o", check=True)
    assert code == 4
    s = _summary(tmp_path / "o")
    assert s["check_11"] == "fail"
    assert float(s["oracle_max_rel_diff"]) > 5e-3


def test_tight_tolerance_passes_oracle_check(tmp_path):
    code, _ = _run(CONFIGS / "oracle_1d.cfg", tmp_path / "o", check=True)
    assert code == 0
    s = _summary(tmp_path / "o")
    assert s["check_11"] == "pass" and s["check_9"] == "pass"


# outputs ----------------------------------------------------------------------------------

def test_distance_study_outputs(tmp_path):
    code, _ = _run(_write(tmp_path, BALL_CFG.format(radius=1)), None)
    assert code == 0
    out = tmp_path / "out"
    rows = (out / "rate.csv").read_text().splitlines()
    assert rows[0] == "a,h,sup_err,flagged_nodes" and len(rows) == 3
    s = _summary(out)
    assert s["study"] == "distance" and s["max_principle"] == "true"
    assert "check_9" not in s  # checks appear only under --check


def test_disc_distance_example_reports_best_model(tmp_path):
    code, _ = _run(CONFIGS / "disc_distance.cfg", tmp_path / "o")
    assert code == 0
    assert _summary(tmp_path / "o")["best_model"] == "sqrt_a_log"


def test_union_shape_from_repeated_sections(tmp_path):
    text = BALL_CFG.format(radius=0.4).replace(
        "[grid]", "[shape]\ntype = box\nlo = 0.6, -0.3\nhi = 1.2, 0.3\n\n[grid]")
    code, _ = _run(_write(tmp_path, text), tmp_path / "o")
    assert code == 0


def test_reruns_are_byte_identical(tmp_path):
    for cfg in ("heat_halfspace.cfg", "square_corners.cfg"):
        _run(CONFIGS / cfg, tmp_path / "r1")
        _run(CONFIGS / cfg, tmp_path / "r2", threads=2)
        for f in (tmp_path / "r1").glob("*.csv"):
            assert f.read_bytes() == (tmp_path / "r2" / f.name).read_bytes()
        shutil.rmtree(tmp_path / "r1")
        shutil.rmtree(tmp_path / "r2")


def test_heat_halfspace_check(tmp_path):
    code, _ = _run(CONFIGS / "heat_halfspace.cfg", tmp_path / "o", check=True)
    assert code == 0
    s = _summary(tmp_path / "o")
    assert s["check_1"] == "pass"
    assert float(s["rotation_equivariance_err"]) < 1e-8
    header = (tmp_path / "o" / "asymptote.csv").read_text().splitlines()[0]
    assert header == "t,x,y,gx,gy,mag_scaled,angle_deg_to_minus_n"


def test_main_entry_point(tmp_path):
    out = tmp_path / "o"
    proc = subprocess.run([sys.executable, "-m", "shape_pde.cli", "run", str(CONFIGS / "square_corners.cfg"),
                           "--check", "--out", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert _summary(out)["check_3"] == "pass"
    assert (out / "corners.csv").exists()


def test_main_requires_command():
    with pytest.raises(SystemExit):
        cli.main([])
