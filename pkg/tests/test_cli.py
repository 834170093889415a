import json
import subprocess
import sys

import pytest

from bloch_homog import config as cfgmod
from bloch_homog.cli import main


def emit(tmp_path, name, task, **kw):
    path = tmp_path / f"{name}.toml"
    assert main(["gallery", name, "--emit-config", "--task", task, "--out", str(path)]) == 0
    return path


def test_gallery_list(capsys):
    assert main(["gallery", "list"]) == 0
    out = capsys.readouterr().out
    assert "example_8_7" in out and "magnetic_schrodinger" in out


def test_emitted_config_reproduces_crossing_model(tmp_path):
    path = emit(tmp_path, "example_8_7", "effective")
    out = tmp_path / "o"
    assert main(["run", str(path), "--output.dir", str(out)]) == 0
    s = json.loads((out / "summary.json").read_text())
    g0 = [[c[0] for c in row] for row in s["effective"]["g0"]]
    assert all(abs(g0[i][j] - [[1, 0, 0], [0, 4, 0], [0, 0, 1]][i][j]) < 1e-8 for i in range(3) for j in range(3))
    assert s["config"]["task"]["name"] == "effective"
    assert (out / "effective.json").exists()


def test_gallery_task(tmp_path):
    path = emit(tmp_path, "scalar_1d", "effective")
    out = tmp_path / "g"
    assert main(["run", str(path), "--task", "gallery", "--name", "example_8_7", "--output.dir", str(out)]) == 0
    s = json.loads((out / "gallery.json").read_text())
    assert s["deviations"]["g0"] < 1e-8


def test_validate_task_sphere_samples(tmp_path):
    path = emit(tmp_path, "example_8_7", "validate")
    out = tmp_path / "v"
    assert main(["run", str(path), "--n_theta", "128", "--output.dir", str(out)]) == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["validation"]["passed"] and s["config"]["task"]["n_theta"] == 128
    assert main(["run", str(path), "--n_theta", "16", "--output.dir", str(out)]) == 2


def test_error_sweep_outputs_and_determinism(tmp_path):
    path = emit(tmp_path, "scalar_1d", "error-sweep")
    runs = []
    for i in range(2):
        out = tmp_path / f"s{i}"
        code = main(["run", str(path), "--s", "3", "--tau", "1", "--n_k", "8", "--output.dir", str(out),
                     "--output.svg", "true"])
        assert code == 0
        runs.append((out / "sweep.csv").read_bytes())
    assert runs[0] == runs[1]
    assert runs[0].startswith(b"epsilon,eta,bound_shape\r\n")
    s = json.loads((tmp_path / "s0" / "summary.json").read_text())
    assert s["verdict"] == "pass" and 0.85 <= s["slope"] <= 1.15
    assert (tmp_path / "s0" / "plot.svg").read_text().startswith("<svg")


def test_other_tasks_run(tmp_path):
    path = emit(tmp_path, "example_15_1", "germ-sweep")
    for task, extra, artefact in (("germ-sweep", ["--n_theta", "16"], "germ.csv"),
                                  ("bands", ["--n_k", "3", "--K", "3"], "bands.csv"),
                                  ("validate", [], "summary.json"),
                                  ("sharpness", ["--K", "4", "--theta0", "[0.0, 1.0]"], "sharpness.csv")):
        out = tmp_path / task
        assert main(["run", str(path), "--task", task, *extra, "--output.dir", str(out)]) == 0
        assert (out / artefact).exists()
    path1 = emit(tmp_path, "scalar_1d", "cauchy")
    assert main(["run", str(path1), "--n_xi", "16", "--output.dir", str(tmp_path / "c")]) == 0
    assert (tmp_path / "c" / "cauchy.csv").exists()


def test_invalid_model_exit_2(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text('[model]\nlattice = [[6.283185307179586]]\nsymbol = [[[1.0, 0.0]]]\n'
                   '[model.g]\nconstant = [[1.0]]\n[task]\nname = "effective"\n'
                   f'[output]\ndir = "{tmp_path / "ob"}"\n')
    assert main(["run", str(bad)]) == 2
    s = json.loads((tmp_path / "ob" / "summary.json").read_text())
    assert s["exit_status"] == 2 and "m=1 < n=2" in s["error"]


def test_parse_error_has_line_context(tmp_path, capsys):
    broken = tmp_path / "broken.toml"
    broken.write_text('[task]\nname = "effective"\nK = = 3\n')
    assert main(["run", str(broken)]) == 2
    err = capsys.readouterr().err
    assert "line 3" in err and "K = = 3" in err


def test_unknown_keys_rejected():
    with pytest.raises(cfgmod.ConfigError, match="unknown keys"):
        cfgmod.resolve({"model": {"gallery": "scalar_1d"}, "task": {"name": "effective", "Kk": 3}})
    with pytest.raises(cfgmod.ConfigError, match="unknown model keys"):
        cfgmod.resolve({"model": {"lattice": [[1.0]], "colour": 1}, "task": {"name": "effective"}})
    with pytest.raises(cfgmod.ConfigError, match="task.name"):
        cfgmod.resolve({"model": {"gallery": "scalar_1d"}, "task": {"name": "wibble"}})


def test_numerical_quality_exit_3(tmp_path):
    path = emit(tmp_path, "scalar_1d", "effective")
    text = path.read_text() + "\n[tolerances]\nresidual = 1e-30\n"
    path.write_text(text)
    assert main(["run", str(path), "--output.dir", str(tmp_path / "q")]) == 3


def test_thread_variable(monkeypatch):
    from bloch_homog.propagate import worker_count

    monkeypatch.setenv("BLOCH_HOMOG_THREADS", "3")
    assert worker_count(1) == 3


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "bloch_homog", "gallery", "list"], capture_output=True, text=True)
    assert r.returncode == 0 and "scalar_1d" in r.stdout
