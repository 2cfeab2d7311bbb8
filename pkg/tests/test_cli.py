import pytest
import yaml

import irlab

YFS_LEGS = [
    {"velocity": [0.0, 0.0, 0.0], "charge": 0.3, "direction": "in"},
    {"velocity": [0.0, 0.0, 0.5], "charge": 0.3, "direction": "out"},
]


@pytest.fixture
def run(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    lab_app = irlab.create_lab()

    def invoke(command, data, *extra):
        config = tmp_path / f"{command}.yml"
        config.write_text(yaml.safe_dump(data), encoding="utf-8")
        out = tmp_path / "out" / command
        code = lab_app.run([command, "--config", str(config), "--out", str(out), *extra], tmp_path / "cache")
        return code, out

    return invoke


def read_rows(path):
    return [line.split(",") for line in path.read_text(encoding="utf-8").splitlines()]


def test_list_commands(capsys):
    assert irlab.create_lab().run(["--list"]) == 0
    names = [line.split()[0] for line in capsys.readouterr().out.splitlines()]
    assert names == ["cfp", "dispersion", "dollard", "irscan", "phase", "yfs"]


def test_yfs_run_is_cached(run):
    data = {"yfs": {"legs": YFS_LEGS, "ir_cutoffs": [0.01, 0.001], "resolution": 0.1, "n_max": 40}}
    code, out = run("yfs", data)
    assert code == 0
    rows = read_rows(out / "yfs.csv")
    assert rows[0] == ["lambda", "exclusive", "inclusive", "soft_norm", "n_required", "tail"]
    assert len(rows) == 4
    assert rows[-1][0] == "fit:" and "a" in rows[-1] and "exclusive_power" in rows[-1]
    assert float(rows[2][1]) < float(rows[1][1])
    assert float(rows[1][2]) == pytest.approx(float(rows[2][2]), rel=1e-10)
    assert (out.parent.parent / "irlab.log").is_file()

    first = (out / "yfs.csv").read_bytes()
    (out / "yfs.csv").unlink()
    code, out = run("yfs", data, "--threads", "2")
    assert code == 0
    assert (out / "yfs.csv").read_bytes() == first


@pytest.mark.parametrize(
    "command,data",
    [
        ("yfs", {"yfs": {"legs": YFS_LEGS, "ir_cutoffs": [0.01, 0.001, 0.0001], "resolution": 0.1, "n_max": 40}}),
        (
            "dispersion",
            {
                "grid": {"dimension": 1, "ir_cutoff": 0.1, "uv_cutoff": 1.0, "max_total": 2, "max_per_mode": 2},
                "model": {"coupling": 0.1},
                "scan": {"momenta": [[0.0], [0.1], [0.2]]},
            },
        ),
    ],
)
def test_thread_count_does_not_change_bytes(run, command, data):
    code, out = run(command, data)
    assert code == 0
    first = (out / f"{command}.csv").read_bytes()
    (out / f"{command}.csv").unlink()

    code, out = run(command, data, "--threads", "3", "--force")
    assert code == 0
    assert (out / f"{command}.csv").read_bytes() == first


def test_phase_run(run):
    data = {
        "model": {"coupling": 0.3},
        "yfs": {
            "legs": [
                {"velocity": [0.0, 0.0, 0.5], "charge": 0.3},
                {"velocity": [0.0, 0.0, -0.5], "charge": -0.3},
            ],
            "scales": [0.125, 0.0625],
        },
    }
    code, out = run("phase", data, "--svg")
    assert code == 0
    rows = read_rows(out / "phase.csv")
    assert rows[0] == ["eps", "coulomb_phase", "phase_step", "vacuum_overlap"]
    assert rows[1][2] == "nan"
    assert rows[-1][:2] == ["fit:", "expected_step"]
    assert read_rows(out / "propagator.csv")[-1][:2] == ["fit:", "exponent"]
    assert (out / "phase.svg").is_file()


def test_dispersion_run(run):
    data = {
        "grid": {"dimension": 1, "ir_cutoff": 0.1, "uv_cutoff": 1.0, "max_total": 2, "max_per_mode": 2},
        "model": {"coupling": 0.1},
        "scan": {"momenta": [[0.0], [0.1]]},
    }
    code, out = run("dispersion", data)
    assert code == 0
    rows = read_rows(out / "dispersion.csv")
    assert rows[0] == ["p0", "E", "residual", "v0", "v_bound", "E_rs2"]
    assert len(rows) == 3
    assert float(rows[1][5]) < 0.0
    assert not (out / "errors.csv").exists()


def test_cfp_run(run):
    data = {
        "grid": {"dimension": 1, "ir_cutoff": 0.1, "uv_cutoff": 1.0, "max_total": 2, "max_per_mode": 2},
        "model": {"coupling": 0.02},
        "scan": {"momenta": [[0.3]], "times": [1.0, 2.0, 4.0], "ir_schedule": [0.1, 0.01]},
    }
    code, out = run("cfp", data)
    assert code == 0
    rows = read_rows(out / "cfp.csv")
    assert rows[0][:3] == ["t", "cfp_residual", "bdg_residual"]
    assert len(rows) == 4
    assert rows[-1][1] == "nan"
    norms = read_rows(out / "cloudnorm.csv")
    assert norms[0] == ["lambda", "f_norm", "bdg_norm_t1", "bdg_norm_t2", "bdg_norm_t4"]
    assert float(norms[2][1]) > float(norms[1][1])


def test_dollard_run(run):
    data = {
        "dollard": {
            "points": 512,
            "extent": 512.0,
            "dt": 0.1,
            "width": 5.0,
            "times": [8.0, 16.0, 32.0, 64.0, 128.0],
        }
    }
    code, out = run("dollard", data)
    assert code == 0
    rows = read_rows(out / "dollard.csv")
    assert rows[0] == ["t", "plain_residual", "modified_residual", "plain_phase", "modified_phase"]
    assert len(rows) == 7
    assert rows[5][1] == "nan"
    assert rows[-1][:2] == ["fit:", "slope"]


def test_irscan_run(run):
    data = {
        "grid": {"ir_cutoff": 0.01},
        "model": {"coupling": 0.05},
        "scan": {"momenta": [[0.0, 0.0, 0.0]], "ir_schedule": [0.1, 0.01]},
    }
    code, out = run("irscan", data)
    assert code == 0
    rows = read_rows(out / "irscan.csv")
    assert rows[0] == ["lambda", "E", "meanN", "vac_overlap", "dressedN", "residual"]
    assert float(rows[2][2]) > float(rows[1][2])
    assert rows[-1][0] == "fit:"


def test_unknown_key_is_a_config_error(run, capsys):
    code, out = run("yfs", {"yfs": {"ir_cutof": [0.01]}})
    assert code == 2
    assert "Did you mean ir_cutoffs?" in capsys.readouterr().err
    assert not out.exists()


def test_missing_config_file(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    code = irlab.create_lab().run(["yfs", "--config", str(tmp_path / "nope.yml")], tmp_path / "cache")
    assert code == 2


def test_oversized_basis_is_a_config_error(run):
    data = {
        "grid": {"ir_cutoff": 1e-6, "points_per_decade": 4, "max_total": 40, "max_per_mode": 40},
        "scan": {"momenta": [[0.0, 0.0, 0.0]]},
    }
    code, _ = run("irscan", data)
    assert code == 2


def test_inconsistent_yfs_config(run):
    code, _ = run("yfs", {"yfs": {"legs": YFS_LEGS, "ir_cutoffs": [0.5], "resolution": 0.1}})
    assert code == 2
