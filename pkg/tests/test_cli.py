import subprocess
import sys

import pytest

from polyvem.cli import main
from polyvem.convergence import CSV_HEADER
from polyvem.mesh import generate, write_mesh


def test_stdout_csv(capsys):
    assert main(["--mesh", "squares", "--n0", "4", "--levels", "2"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == 3
    assert lines[1].split(",")[:2] == ["0", "9"]


def test_out_file(tmp_path, capsys):
    out = tmp_path / "t.csv"
    assert main(["--mesh", "quads", "--n0", "4", "--levels", "2", "--solver", "fp",
                 "--out", str(out)]) == 0
    assert capsys.readouterr().out == ""
    rows = out.read_text().splitlines()
    assert rows[0] == "level,ndof,h,err_l2_rel,err_h1_rel,eoc_l2,eoc_h1,fp_iters,nr_iters"
    assert rows[2].endswith(",")


def test_all_flags(tmp_path):
    out = tmp_path / "t.csv"
    dumps = tmp_path / "d"
    code = main(["--mesh", "triangles", "--n0", "2", "--levels", "2", "--degree", "2",
                 "--solver", "newton", "--tol", "1e-9", "--max-iter", "20", "--seed", "3",
                 "--problem", "patch:2", "--out", str(out), "--dump-matrices", str(dumps),
                 "--absolute-errors"])
    assert code == 0
    assert (dumps / "level1" / "matrix_newton.txt").exists()
    err = float(out.read_text().splitlines()[1].split(",")[3])
    assert err <= 1e-9


def test_file_mesh(tmp_path, capsys):
    path = tmp_path / "m.pmesh"
    write_mesh(generate("voronoi", 4, 0), path)
    assert main(["--mesh", f"file={path}"]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 2


@pytest.mark.parametrize("argv", [
    ["--mesh", "hexagons"],
    ["--degree", "0"],
    ["--tol", "-1"],
    ["--n0", "abc"],
    ["--levels", "1", "--mesh", "squares"],
    ["--problem", "nope", "--mesh", "squares", "--n0", "2", "--levels", "2"],
    ["--solver", "gmres"],
])
def test_input_errors_exit_1(argv, capsys):
    assert main(argv) == 1


def test_missing_mesh_file_exit_1(tmp_path):
    assert main(["--mesh", f"file={tmp_path / 'none.pmesh'}"]) == 1


def test_malformed_mesh_file_exit_1(tmp_path):
    path = tmp_path / "bad.pmesh"
    path.write_text("3 1\n0 0\n1 0\n")
    assert main(["--mesh", f"file={path}"]) == 1


def test_nonconvergence_exit_2(capsys):
    assert main(["--mesh", "squares", "--n0", "4", "--levels", "2", "--max-iter", "2"]) == 2
    captured = capsys.readouterr()
    assert "no convergence" in captured.err
    assert captured.out.splitlines()[0] == ",".join(CSV_HEADER)


def test_help_exit_0(capsys):
    assert main(["--help"]) == 0
    assert "--dump-matrices" in capsys.readouterr().out


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "polyvem", "--mesh", "squares", "--n0", "2",
                        "--levels", "2", "--solver", "fp"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("level,ndof")
