import types

import pytest
import yaml

import common.utils as utils
from common.const import *
from common.models import RunConfig
from lab.errors import ConfigError, DomainError


def write_config(path, data):
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


class Recorder(utils.Command):
    name = "recorder"
    help = "Writes one CSV row per call."

    def __init__(self, lab_app, fail_prepare=False):
        self.calls = 0
        self.fail_prepare = fail_prepare
        super().__init__(lab_app)

    def prepare(self, config):
        if self.fail_prepare:
            raise DomainError("prepare refused the config")
        return config.seed

    def compute(self, config, prepared, out_dir):
        self.calls += 1
        path = utils.write_csv(out_dir / "recorder.csv", ("seed", "calls"), [(prepared, self.calls)])
        return utils.CommandOutcome([path], 1, 0)


@pytest.fixture
def fake_lab():
    commands = {}
    return types.SimpleNamespace(commands=commands, add_command=lambda c: commands.__setitem__(c.name, c))


def test_extensions_are_discovered():
    found = list(utils.get_all_extensions(SRC_PATH))
    assert found == sorted(found)
    assert {"exts.irscan", "exts.dispersion", "exts.cfp", "exts.dollard", "exts.yfs", "exts.phase"} <= set(found)
    assert "exts._fiber" not in found


def test_file_to_ext():
    assert utils.file_to_ext("/src/exts/yfs.py", "/src/") == "exts.yfs"


def test_empty_config_gives_defaults(tmp_path):
    path = tmp_path / "empty.yml"
    path.write_text("", encoding="utf-8")
    config = utils.load_config(path)
    assert config == RunConfig()
    assert config.threads == 1 and config.output.formats == ["csv"]


def test_overrides(tmp_path):
    path = write_config(tmp_path / "run.yml", {"seed": 3, "output": {"directory": "a"}})
    config = utils.load_config(path, {"directory": "b", "threads": 4, "seed": None, "svg": True})
    assert config.seed == 3
    assert config.threads == 4
    assert config.output.directory == "b"
    assert config.output.formats == ["csv", "svg"]


def test_unknown_key_gets_a_suggestion(tmp_path):
    path = write_config(tmp_path / "run.yml", {"grid": {"ir_cutof": 0.1}})
    with pytest.raises(ConfigError) as exc:
        utils.load_config(path)
    assert exc.value.key == "grid.ir_cutof"
    assert exc.value.suggestion == "ir_cutoff"
    assert "Did you mean ir_cutoff?" in str(exc.value)


def test_unknown_section_gets_a_suggestion(tmp_path):
    path = write_config(tmp_path / "run.yml", {"grids": {}})
    with pytest.raises(ConfigError) as exc:
        utils.load_config(path)
    assert exc.value.suggestion == "grid"


def test_unrelated_key_has_no_suggestion(tmp_path):
    path = write_config(tmp_path / "run.yml", {"model": {"zzz": 1}})
    with pytest.raises(ConfigError) as exc:
        utils.load_config(path)
    assert exc.value.suggestion is None
    assert "Did you mean" not in str(exc.value)


@pytest.mark.parametrize(
    "data,key",
    [
        ({"grid": {"ir_cutoff": -1.0}}, "grid.ir_cutoff"),
        ({"grid": {"ir_cutoff": 2.0, "uv_cutoff": 1.0}}, "grid"),
        ({"scan": {"ir_schedule": [0.01, 0.1]}}, "scan.ir_schedule"),
        ({"grid": {"max_per_mode": 0}}, "grid.max_per_mode"),
        ({"threads": 0}, "threads"),
        ({"output": {"formats": ["pdf"]}}, "output.formats.0"),
    ],
)
def test_invalid_values_name_their_key(tmp_path, data, key):
    path = write_config(tmp_path / "run.yml", data)
    with pytest.raises(ConfigError) as exc:
        utils.load_config(path)
    assert exc.value.key == key
    assert f"Config key {key} is invalid" in str(exc.value)


def test_missing_and_broken_files(tmp_path):
    with pytest.raises(ConfigError, match="does not exist"):
        utils.load_config(tmp_path / "nope.yml")

    broken = tmp_path / "broken.yml"
    broken.write_text("grid:\n  ir_cutoff: [0.1\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="line"):
        utils.load_config(broken)

    listing = tmp_path / "list.yml"
    listing.write_text("- 1\n- 2\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="mapping"):
        utils.load_config(listing)


def test_config_hash_ignores_threads_and_directory():
    base = RunConfig()
    same = RunConfig(threads=8, output={"directory": "elsewhere"})
    assert utils.config_hash("yfs", base) == utils.config_hash("yfs", same)
    assert utils.config_hash("yfs", base) != utils.config_hash("phase", base)
    assert utils.config_hash("yfs", base) != utils.config_hash("yfs", RunConfig(seed=1))
    assert len(utils.config_hash("yfs", base)) == 64


@pytest.mark.parametrize(
    "value,text",
    [(0.1, "0.10000000000000001"), (float("nan"), "nan"), (3, "3"), (True, "true"), (1e-20, "9.9999999999999995e-21")],
)
def test_format_value(value, text):
    assert utils.format_value(value) == text


def test_write_csv_with_fit(tmp_path):
    path = utils.write_csv(tmp_path / "out.csv", ("x", "y"), [(1, 0.5), (2, float("nan"))], fit={"a": 0.25})
    assert path.read_text(encoding="utf-8") == "x,y\n1,0.5\n2,nan\nfit:,a,0.25\n"


def test_write_svg_is_reproducible(tmp_path):
    series = {"one": ([1.0, 10.0, 100.0], [1.0, 2.0, 3.0]), "two": ([1.0, 10.0, 100.0], [3.0, 2.0, 1.0])}
    first = utils.write_svg(tmp_path / "a.svg", series, "x", "y", logx=True)
    second = utils.write_svg(tmp_path / "b.svg", series, "x", "y", logx=True)
    assert first.read_bytes() == second.read_bytes()
    assert b"<svg" in first.read_bytes()


def failing():
    raise DomainError("no such point")


def broken():
    raise ValueError("unexpected")


@pytest.mark.parametrize("threads", [1, 3])
def test_scan_executor_keeps_order_and_failures(threads):
    tasks = [lambda: 1, failing, lambda: 3, broken]
    results = utils.scan_executor(tasks, threads)
    assert [r.index for r in results] == [0, 1, 2, 3]
    assert [r.ok for r in results] == [True, False, True, False]
    assert results[2].value == 3
    assert results[1].error_type == "DomainError"
    assert results[1].error == "no such point"
    assert results[3].error_type == "ValueError"


def test_scan_executor_needs_a_thread():
    with pytest.raises(ConfigError):
        utils.scan_executor([lambda: 1], 0)


@pytest.mark.parametrize("ok,failed,code", [(3, 0, 0), (2, 1, 1), (0, 2, 3)])
def test_exit_codes(ok, failed, code):
    assert utils.CommandOutcome([], ok, failed).exit_code == code


def test_failures_are_recorded(tmp_path, fake_lab):
    command = Recorder(fake_lab)
    results = utils.scan_executor([lambda: 1, failing], 1)
    files = command.record_failures(tmp_path, ["p=0", "p=1"], results)
    assert files == [tmp_path / METADATA["output"]["errors_file"]]
    lines = files[0].read_text(encoding="utf-8").splitlines()
    assert lines == ["command,row,parameter,error_type,message", "recorder,1,p=1,DomainError,no such point"]
    assert command.record_failures(tmp_path, ["p=0"], results[:1]) == []


def test_execute_caches_results(tmp_path, fake_lab):
    command = Recorder(fake_lab)
    assert fake_lab.commands["recorder"] is command
    cache = tmp_path / "cache"
    config = RunConfig(seed=5, output={"directory": str(tmp_path / "out")})

    first = command.execute(config, cache)
    assert not first.cached and command.calls == 1
    text = (tmp_path / "out" / "recorder.csv").read_text(encoding="utf-8")
    assert text == "seed,calls\n5,1\n"

    (tmp_path / "out" / "recorder.csv").unlink()
    second = command.execute(config, cache)
    assert second.cached and command.calls == 1
    assert (tmp_path / "out" / "recorder.csv").read_text(encoding="utf-8") == text

    manifest = utils.cache_lookup(cache, utils.config_hash("recorder", config))
    assert manifest.files == ["recorder.csv"]
    assert manifest.rows_ok == 1 and manifest.command == "recorder"

    command.execute(config, cache, force=True)
    assert command.calls == 2


def test_execute_clears_stale_errors(tmp_path, fake_lab):
    out = tmp_path / "out"
    out.mkdir()
    stale = out / METADATA["output"]["errors_file"]
    stale.write_text("old\n", encoding="utf-8")
    Recorder(fake_lab).execute(RunConfig(output={"directory": str(out)}), tmp_path / "cache")
    assert not stale.exists()


def test_prepare_errors_become_config_errors(tmp_path, fake_lab):
    command = Recorder(fake_lab, fail_prepare=True)
    with pytest.raises(ConfigError, match="prepare refused"):
        command.execute(RunConfig(output={"directory": str(tmp_path)}), tmp_path / "cache")
