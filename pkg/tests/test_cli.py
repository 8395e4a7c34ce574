"""Command line behavior: config layering, subcommands, exit codes."""

from __future__ import annotations

import argparse
import json
from pathlib import Path

import pytest
import yaml

from forge.cli import GlobalConfig, load_config, main
from forge.devrun import HostEnvironment
from forge.engine import EngineResult, RecordingDriver
from forge.errors import ConfigError

from conftest import FIXTURE_ROOT

MINIMAL = str(FIXTURE_ROOT / "minimal")
MULTI = str(FIXTURE_ROOT / "multi_repo")
UNRESOLVED = str(FIXTURE_ROOT / "unresolved")


def ns(**kwargs) -> argparse.Namespace:
    return argparse.Namespace(**kwargs)


# --- configuration layering ------------------------------------------------


def test_config_defaults(monkeypatch, tmp_path) -> None:
    monkeypatch.chdir(tmp_path)
    cfg = load_config(ns(), None)
    assert cfg == GlobalConfig()
    assert cfg.registry == "localhost"
    assert cfg.default_distro == "humble"
    assert cfg.parallelism == 2


def test_config_file_layer(tmp_path) -> None:
    path = tmp_path / "forge.yaml"
    path.write_text(
        yaml.safe_dump(
            {"registry": "reg.file", "default_distro": "iron", "parallelism": 4}
        ),
        encoding="utf-8",
    )
    cfg = load_config(ns(config=str(path)), None)
    assert cfg.registry == "reg.file"
    assert cfg.default_distro == "iron"
    assert cfg.parallelism == 4
    assert cfg.config_path == path


def test_config_env_overrides_file(tmp_path, monkeypatch) -> None:
    path = tmp_path / "forge.yaml"
    path.write_text("registry: reg.file\n", encoding="utf-8")
    monkeypatch.setenv("FORGE_REGISTRY", "reg.env")
    monkeypatch.setenv("FORGE_STRICT", "yes")
    cfg = load_config(ns(config=str(path)), None)
    assert cfg.registry == "reg.env"
    assert cfg.strict is True


def test_config_flag_overrides_env(monkeypatch, tmp_path) -> None:
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("FORGE_REGISTRY", "reg.env")
    cfg = load_config(ns(registry="reg.flag"), None)
    assert cfg.registry == "reg.flag"


def test_config_workspace_file_discovered(tmp_path) -> None:
    (tmp_path / "forge.yaml").write_text("registry: reg.ws\n", encoding="utf-8")
    cfg = load_config(ns(), tmp_path)
    assert cfg.registry == "reg.ws"


@pytest.mark.parametrize(
    "doc",
    ["- a list\n", "default_distro: jazzy\n", "parallelism: 0\n", "rosdep_dbs: x\n"],
)
def test_config_rejects_bad_values(tmp_path, doc: str) -> None:
    path = tmp_path / "forge.yaml"
    path.write_text(doc, encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(ns(config=str(path)), None)


def test_config_missing_explicit_file() -> None:
    with pytest.raises(ConfigError):
        load_config(ns(config="/does/not/exist.yaml"), None)


def test_config_bad_env_parallelism(monkeypatch, tmp_path) -> None:
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("FORGE_PARALLELISM", "many")
    with pytest.raises(ConfigError):
        load_config(ns(), None)


# --- analyze ---------------------------------------------------------------


def test_analyze_table_output(capsys, monkeypatch, tmp_path) -> None:
    monkeypatch.chdir(tmp_path)
    code = main(["analyze", MULTI])
    out = capsys.readouterr().out
    assert code == 0
    assert "nav_core" not in out.split("internal")[0]  # header first
    assert "internal (1): sensor_common" in out
    assert "ros-humble-rclcpp" in out
    assert "libeigen3-dev" in out
    assert "transforms3d" in out
    assert "private_tools" in out
    assert "unresolved (0)" in out


def test_analyze_json_output(capsys, monkeypatch, tmp_path) -> None:
    monkeypatch.chdir(tmp_path)
    code = main(["analyze", MULTI, "--format", "json"])
    doc = json.loads(capsys.readouterr().out)
    assert code == 0
    assert doc["distro"] == "humble"
    assert doc["all"]["internal"] == ["sensor_common"]
    assert "libeigen3-dev" in doc["all"]["system_pkgs"]
    assert doc["exec_only"]["system_pkgs"] == []
    assert doc["source_repos"][1]["name"] == "private_tools"


def test_analyze_strict_unresolved_exits_2(capsys, monkeypatch, tmp_path) -> None:
    monkeypatch.chdir(tmp_path)
    code = main(["analyze", UNRESOLVED, "--strict"])
    captured = capsys.readouterr()
    assert code == 2
    assert "forge: error: UnresolvedDependencies" in captured.err
    assert "no_such_thing" in captured.err


def test_analyze_missing_workspace_exits_2(capsys, monkeypatch, tmp_path) -> None:
    monkeypatch.chdir(tmp_path)
    code = main(["analyze", str(tmp_path / "nowhere")])
    assert code == 2
    assert "forge: error:" in capsys.readouterr().err


def test_analyze_noetic_distro_flag(capsys, monkeypatch, tmp_path) -> None:
    monkeypatch.chdir(tmp_path)
    code = main(["analyze", str(FIXTURE_ROOT / "catkin_noetic"), "--distro", "noetic"])
    out = capsys.readouterr().out
    assert code == 0
    assert "ROS 1" in out
    assert "ros-noetic-roscpp" in out


# --- generate --------------------------------------------------------------


def test_generate_dockerfile_stdout(capsys, monkeypatch, tmp_path) -> None:
    monkeypatch.chdir(tmp_path)
    code = main(["generate", "dockerfile", MINIMAL, "--output", "-"])
    out = capsys.readouterr().out
    assert code == 0
    assert out.startswith("# syntax=docker/dockerfile:1")
    assert "FROM ${BASE_IMAGE} AS base" in out


def test_generate_dockerfile_writes_file(capsys, monkeypatch, tmp_path) -> None:
    monkeypatch.chdir(tmp_path)
    target = tmp_path / "out" / "Dockerfile"
    code = main(["generate", "dockerfile", MINIMAL, "--output", str(target)])
    assert code == 0
    assert "wrote" in capsys.readouterr().out
    assert target.read_text(encoding="utf-8").startswith("# syntax=")


def test_generate_ci_writes_file(capsys, monkeypatch, tmp_path) -> None:
    monkeypatch.chdir(tmp_path)
    out_path = tmp_path / "ci.yml"
    code = main(
        [
            "generate",
            "ci",
            "--platform",
            "gitlab",
            "--image-name",
            "stack",
            "--output",
            str(out_path),
        ]
    )
    assert code == 0
    doc = yaml.safe_load(out_path.read_text(encoding="utf-8"))
    assert "build-dev-amd64" in doc


# --- build -----------------------------------------------------------------


def test_build_dry_run_prints_command(capsys, monkeypatch, tmp_path) -> None:
    monkeypatch.chdir(tmp_path)
    code = main(["build", MINIMAL, "--dry-run", "--tag", "reg/app:run"])
    out = capsys.readouterr().out
    assert code == 0
    assert "[dry-run] docker build" in out
    assert "--tag reg/app:run" in out
    dockerfile = Path(MINIMAL) / ".forge" / "Dockerfile"
    assert dockerfile.is_file()


def test_build_executes_through_driver(capsys, monkeypatch, tmp_path) -> None:
    monkeypatch.chdir(tmp_path)
    driver = RecordingDriver()
    code = main(["build", MINIMAL, "--tag", "reg/app:run"], driver=driver)
    assert code == 0
    assert len(driver.commands) == 1
    assert driver.commands[0].verb == "build"
    assert "built reg/app:run" in capsys.readouterr().out


def test_build_missing_credential_exits_2(capsys, monkeypatch, tmp_path) -> None:
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("GIT_TOKEN", raising=False)
    code = main(["build", MULTI, "--dry-run"])
    captured = capsys.readouterr()
    assert code == 2
    assert "MissingCredential" in captured.err
    assert "GIT_TOKEN" in captured.err


def test_build_dry_run_redacts_credentials(capsys, monkeypatch, tmp_path) -> None:
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("GIT_TOKEN", "sup3rs3cret")
    code = main(["build", MULTI, "--dry-run"])
    out = capsys.readouterr().out
    assert code == 0
    assert "sup3rs3cret" not in out
    assert "***" in out


def test_build_failure_exits_1(capsys, monkeypatch, tmp_path) -> None:
    monkeypatch.chdir(tmp_path)
    driver = RecordingDriver(scripted={"build": EngineResult(125, "", "boom")})
    code = main(["build", MINIMAL], driver=driver)
    captured = capsys.readouterr()
    assert code == 1
    assert "forge: error: NonZeroExit" in captured.err


# --- matrix ----------------------------------------------------------------


def test_matrix_list_cardinality(capsys, monkeypatch, tmp_path) -> None:
    monkeypatch.chdir(tmp_path)
    code = main(["matrix", "list"])
    lines = capsys.readouterr().out.strip().splitlines()
    assert code == 0
    assert len(lines) == 180
    assert len(set(lines)) == 180
    assert all(line.startswith("localhost/") for line in lines)


def test_matrix_list_filtered_json(capsys, monkeypatch, tmp_path) -> None:
    monkeypatch.chdir(tmp_path)
    code = main(
        ["matrix", "list", "--distro", "humble", "--component", "core", "--format", "json"]
    )
    doc = json.loads(capsys.readouterr().out)
    assert code == 0
    assert len(doc) == 6
    assert doc[0]["tag"] == "localhost/ros2:humble-core"


def test_matrix_build_dry_run(capsys, monkeypatch, tmp_path) -> None:
    monkeypatch.chdir(tmp_path)
    plan_path = tmp_path / "plan.yaml"
    code = main(
        [
            "matrix",
            "build",
            "--distro",
            "noetic",
            "--component",
            "core",
            "--dry-run",
            "--plan-out",
            str(plan_path),
        ]
    )
    out = capsys.readouterr().out
    assert code == 0
    assert out.count("[dry-run] docker buildx build") == 6
    plan = yaml.safe_load(plan_path.read_text(encoding="utf-8"))
    assert len(plan["images"]) == 6


def test_matrix_build_executes(monkeypatch, tmp_path) -> None:
    monkeypatch.chdir(tmp_path)
    driver = RecordingDriver()
    code = main(
        ["matrix", "build", "--distro", "humble", "--ml", "none"], driver=driver
    )
    assert code == 0
    assert len(driver.commands) == 6


def test_matrix_unknown_filter_exits_2(capsys, monkeypatch, tmp_path) -> None:
    monkeypatch.chdir(tmp_path)
    code = main(["matrix", "list", "--distro", "jazzy"])
    assert code == 2
    assert "InvalidSpec" in capsys.readouterr().err


# --- run -------------------------------------------------------------------


@pytest.fixture
def fake_host(monkeypatch) -> HostEnvironment:
    probed = HostEnvironment(
        display=":1",
        x11_socket_dir="/tmp/.X11-unix",
        gpu_count=1,
        uid=1000,
        gid=1000,
        cwd=Path("/home/dev/ws"),
        detected_workspace=None,
        tty_available=True,
    )
    monkeypatch.setattr("forge.cli.probe_host", lambda overrides=None: probed)
    return probed


def test_run_dry_run_full_argv(capsys, monkeypatch, tmp_path, fake_host) -> None:
    monkeypatch.chdir(tmp_path)
    code = main(
        ["run", "--dry-run", "--name", "box", "img", "--", "--ipc=host", "--", "bash"]
    )
    out = capsys.readouterr().out
    assert code == 0
    assert "[dry-run] docker run --rm -it --name box" in out
    assert "--env DISPLAY=:1" in out
    assert "--gpus all" in out
    assert "--user 1000:1000" in out
    assert "--ipc=host img bash" in out


def test_run_unknown_flags_become_passthrough(capsys, monkeypatch, tmp_path, fake_host) -> None:
    monkeypatch.chdir(tmp_path)
    code = main(["run", "--dry-run", "img", "--privileged"])
    out = capsys.readouterr().out
    assert code == 0
    assert "--privileged img" in out


def test_run_feature_suppression_flags(capsys, monkeypatch, tmp_path, fake_host) -> None:
    monkeypatch.chdir(tmp_path)
    code = main(["run", "--dry-run", "--no-gpu", "--no-x11", "--no-user-map", "img"])
    out = capsys.readouterr().out
    assert code == 0
    assert "--gpus" not in out
    assert "DISPLAY" not in out
    assert "--user" not in out


# --- bench -----------------------------------------------------------------


def test_bench_startup_reports(capsys, monkeypatch, tmp_path) -> None:
    monkeypatch.chdir(tmp_path)
    driver = RecordingDriver()
    code = main(["bench", "startup", "img", "--runs", "3"], driver=driver)
    out = capsys.readouterr().out
    assert code == 0
    assert len(driver.commands) == 3
    assert "runs: 3" in out
    assert "mean startup overhead" in out
    assert "no threshold" in out


def test_bench_startup_dry_run(capsys, monkeypatch, tmp_path) -> None:
    monkeypatch.chdir(tmp_path)
    code = main(["bench", "startup", "img", "--dry-run"])
    out = capsys.readouterr().out
    assert code == 0
    assert "[dry-run] docker run --rm img true" in out


# --- misc ------------------------------------------------------------------


def test_version_flag(capsys) -> None:
    code = main(["--version"])
    assert code == 0
    assert "forge" in capsys.readouterr().out


def test_no_subcommand_exits_2(capsys) -> None:
    assert main([]) == 2
