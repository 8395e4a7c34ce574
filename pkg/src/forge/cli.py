"""Command line frontend.

Subcommands: ``analyze`` (dependency report), ``generate dockerfile`` and
``generate ci`` (emit files), ``build`` (generate plus engine build),
``matrix`` (list or build the prebuilt base image matrix), ``run``
(ergonomic development container) and ``bench startup`` (container
startup overhead report).

Exit codes: 0 on success, 1 for engine or internal failures, 2 for user
or input errors. Every subcommand accepts ``--dry-run``, which prints the
engine commands that would execute and runs nothing.
"""

from __future__ import annotations

import argparse
import json
import os
import shlex
import subprocess
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import __version__
from .cigen import PipelineSpec, default_output_path, generate_pipeline
from .depgraph import (
    DeclaredKeys,
    DistroIndex,
    KNOWN_DISTROS,
    ResolvedDependencies,
    RosdepDatabase,
    load_distro_index,
    load_rosdep_db,
    packaged_distro_index,
    packaged_rosdep_documents,
    resolve,
    runtime_subset,
)
from .devrun import (
    UserArgs,
    apply_plugins,
    attach_or_run,
    load_plugins,
    probe_host,
    synthesize_invocation,
)
from .dockergen import ImageSpec, plan_stages, render, spec_for_workspace, validate_plan
from .engine import (
    BuildRequest,
    EngineCommand,
    EngineDriver,
    SubprocessDriver,
    build_argv,
    execute,
    inspect_container,
    run_builds,
    run_argv,
)
from .errors import ConfigError, ForgeError, MissingCredential, UnresolvedDependencies
from .manifest import Workspace, internal_package_names, scan_workspace
from .matrix import (
    build_plan_document,
    base_dockerfile_args,
    enumerate_matrix,
    load_base_image_table,
    tag_of,
)
from .sources import (
    ReposList,
    clone_plan,
    combine_repos,
    parse_repos,
    required_credential_vars,
)

DEFAULT_REGISTRY = "localhost"
DEFAULT_DISTRO = "humble"
DEFAULT_PARALLELISM = 2
GENERATED_DIR = ".forge"


@dataclass
class GlobalConfig:
    """Layered configuration: flags beat environment beat file beat defaults."""

    registry: str = DEFAULT_REGISTRY
    default_distro: str = DEFAULT_DISTRO
    rosdep_db_paths: tuple[str, ...] = ()
    distro_index_path: str | None = None
    parallelism: int = DEFAULT_PARALLELISM
    strict: bool = False
    config_path: Path | None = None


def _env_flag(value: str) -> bool:
    return value.strip().lower() in ("1", "true", "yes", "on")


def load_config(args: argparse.Namespace, workspace_root: Path | None) -> GlobalConfig:
    cfg = GlobalConfig()

    explicit = getattr(args, "config", None)
    candidates = []
    if explicit:
        candidates.append(Path(explicit))
    elif workspace_root is not None:
        candidates.append(workspace_root / "forge.yaml")
    else:
        candidates.append(Path("forge.yaml"))
    config_path = next((p for p in candidates if p.is_file()), None)
    if explicit and config_path is None:
        raise ConfigError(f"config file {explicit!r} not found")

    if config_path is not None:
        try:
            doc = yaml.safe_load(config_path.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file {config_path} is not valid YAML: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"config file {config_path} must hold a mapping")
        cfg.config_path = config_path
        if "registry" in doc:
            cfg.registry = str(doc["registry"])
        if "default_distro" in doc:
            cfg.default_distro = str(doc["default_distro"])
        if "rosdep_dbs" in doc:
            raw = doc["rosdep_dbs"]
            if not isinstance(raw, list):
                raise ConfigError("config key rosdep_dbs must be a list of paths")
            cfg.rosdep_db_paths = tuple(str(p) for p in raw)
        if "distro_index" in doc:
            cfg.distro_index_path = str(doc["distro_index"])
        if "parallelism" in doc:
            cfg.parallelism = int(doc["parallelism"])
        if "strict" in doc:
            cfg.strict = bool(doc["strict"])

    env = os.environ
    if "FORGE_REGISTRY" in env:
        cfg.registry = env["FORGE_REGISTRY"]
    if "FORGE_DISTRO" in env:
        cfg.default_distro = env["FORGE_DISTRO"]
    if "FORGE_ROSDEP_DBS" in env:
        cfg.rosdep_db_paths = tuple(
            p for p in env["FORGE_ROSDEP_DBS"].split(os.pathsep) if p
        )
    if "FORGE_DISTRO_INDEX" in env:
        cfg.distro_index_path = env["FORGE_DISTRO_INDEX"]
    if "FORGE_PARALLELISM" in env:
        try:
            cfg.parallelism = int(env["FORGE_PARALLELISM"])
        except ValueError as exc:
            raise ConfigError("FORGE_PARALLELISM must be an integer") from exc
    if "FORGE_STRICT" in env:
        cfg.strict = _env_flag(env["FORGE_STRICT"])

    if getattr(args, "registry", None):
        cfg.registry = args.registry
    # Matrix subcommands reuse --distro as a repeatable filter; only a
    # scalar value is a config override.
    if isinstance(getattr(args, "distro", None), str):
        cfg.default_distro = args.distro
    if getattr(args, "rosdep_db", None):
        cfg.rosdep_db_paths = cfg.rosdep_db_paths + tuple(args.rosdep_db)
    if getattr(args, "distro_index", None):
        cfg.distro_index_path = args.distro_index
    if getattr(args, "parallelism", None):
        cfg.parallelism = args.parallelism
    if getattr(args, "strict", False):
        cfg.strict = True

    if not cfg.registry:
        raise ConfigError("registry must be non-empty")
    if cfg.default_distro not in KNOWN_DISTROS:
        raise ConfigError(f"unknown distro {cfg.default_distro!r}")
    if cfg.parallelism < 1:
        raise ConfigError("parallelism must be at least 1")
    for path in (*cfg.rosdep_db_paths, cfg.distro_index_path):
        if path is not None and not Path(path).is_file():
            raise ConfigError(f"referenced file {path!r} does not exist")
    return cfg


@dataclass
class WorkspaceAnalysis:
    """Everything derived from one workspace scan and resolution."""

    root: Path
    workspace: Workspace
    distro: str
    index: DistroIndex
    db: RosdepDatabase
    repos: ReposList = ()
    declared: DeclaredKeys = field(default_factory=lambda: DeclaredKeys(frozenset(), frozenset()))
    resolved: ResolvedDependencies | None = None
    resolved_exec: ResolvedDependencies | None = None


def analyze_workspace(
    root: Path, cfg: GlobalConfig, repos_paths: tuple[str, ...] = ()
) -> WorkspaceAnalysis:
    distro = cfg.default_distro
    if cfg.distro_index_path:
        index = load_distro_index(Path(cfg.distro_index_path).read_text(encoding="utf-8"))
        distro = index.distro
    else:
        index = packaged_distro_index(distro)

    documents = packaged_rosdep_documents()
    for path in cfg.rosdep_db_paths:
        documents.append(Path(path).read_text(encoding="utf-8"))
    db = load_rosdep_db(documents)

    condition_env = {"ROS_VERSION": str(index.ros_version), "ROS_DISTRO": distro}
    workspace = scan_workspace(root, condition_env)

    repo_lists = []
    for path in sorted(root.glob("*.repos")):
        repo_lists.append(parse_repos(path.read_text(encoding="utf-8")))
    for path in repos_paths:
        repo_lists.append(parse_repos(Path(path).read_text(encoding="utf-8")))
    repos = combine_repos(repo_lists)

    declared = DeclaredKeys.from_workspace(workspace)
    internal = internal_package_names(workspace)
    resolved = resolve(declared, db, index, internal, repos)
    resolved_exec = runtime_subset(resolved, declared, db, index, internal, repos)
    return WorkspaceAnalysis(
        root=root,
        workspace=workspace,
        distro=distro,
        index=index,
        db=db,
        repos=repos,
        declared=declared,
        resolved=resolved,
        resolved_exec=resolved_exec,
    )


def _resolution_doc(analysis: WorkspaceAnalysis) -> dict[str, object]:
    resolved = analysis.resolved
    resolved_exec = analysis.resolved_exec
    assert resolved is not None and resolved_exec is not None

    def bucket_doc(r: ResolvedDependencies) -> dict[str, object]:
        return {
            "internal": list(r.internal),
            "ros_distro_pkgs": list(r.ros_distro_pkgs),
            "system_pkgs": list(r.system_pkgs),
            "python_pkgs": list(r.python_pkgs),
            "source_keys": list(r.source_keys),
            "unresolved": list(r.unresolved),
        }

    return {
        "workspace": str(analysis.root),
        "distro": analysis.distro,
        "ros_version": analysis.index.ros_version,
        "packages": [p.name for p in analysis.workspace.packages],
        "source_repos": [
            {"name": r.local_name, "url": r.url, "version": r.version}
            for r in analysis.repos
        ],
        "all": bucket_doc(resolved),
        "exec_only": bucket_doc(resolved_exec),
    }


def _print_bucket(label: str, items: tuple[str, ...]) -> None:
    if items:
        print(f"{label} ({len(items)}): " + ", ".join(items))
    else:
        print(f"{label} (0)")


def cmd_analyze(args: argparse.Namespace, driver: EngineDriver | None) -> int:
    root = Path(args.workspace)
    cfg = load_config(args, root if root.is_dir() else None)
    analysis = analyze_workspace(root, cfg, tuple(args.repos or ()))
    resolved = analysis.resolved
    assert resolved is not None

    if args.format == "json":
        print(json.dumps(_resolution_doc(analysis), indent=2, sort_keys=True))
    elif args.format == "yaml":
        print(yaml.safe_dump(_resolution_doc(analysis), sort_keys=True), end="")
    else:
        version = "ROS 1" if analysis.index.ros_version == 1 else "ROS 2"
        print(
            f"workspace: {analysis.root} "
            f"({len(analysis.workspace.packages)} packages)"
        )
        print(f"distro: {analysis.distro} ({version})")
        _print_bucket("internal", resolved.internal)
        _print_bucket("ros packages", resolved.ros_distro_pkgs)
        _print_bucket("system packages", resolved.system_pkgs)
        _print_bucket("python packages", resolved.python_pkgs)
        _print_bucket("source-satisfied keys", resolved.source_keys)
        if analysis.repos:
            print(
                f"source repos ({len(analysis.repos)}): "
                + ", ".join(r.local_name for r in analysis.repos)
            )
        _print_bucket("unresolved", resolved.unresolved)

    if cfg.strict and resolved.unresolved:
        raise UnresolvedDependencies(list(resolved.unresolved))
    return 0


def _image_spec_from_args(
    args: argparse.Namespace, analysis: WorkspaceAnalysis, cfg: GlobalConfig
) -> ImageSpec:
    launch_command: tuple[str, ...] = ("bash",)
    if getattr(args, "command", None):
        launch_command = tuple(shlex.split(args.command))
    return spec_for_workspace(
        analysis.workspace,
        analysis.distro,
        base_image=getattr(args, "base", None) or f"ros:{analysis.distro}",
        target=args.target,
        launch_command=launch_command,
        workspace_dir=getattr(args, "workspace_dir", None) or "/ws",
        repos_files=tuple(
            sorted(p.name for p in analysis.root.glob("*.repos"))
        ),
        source_repos=analysis.repos,
        custom_script_pre=getattr(args, "script_pre", None),
        custom_script_post=getattr(args, "script_post", None),
        extra_apt=tuple(getattr(args, "extra_apt", None) or ()),
        extra_pip=tuple(getattr(args, "extra_pip", None) or ()),
        platforms=tuple(getattr(args, "platform", None) or ("amd64",)),
        slim_runtime=bool(getattr(args, "slim_runtime", False)),
        strict=cfg.strict,
        nonroot_run=bool(getattr(args, "nonroot_run", False)),
    )


def _render_for_workspace(
    args: argparse.Namespace, analysis: WorkspaceAnalysis, cfg: GlobalConfig
) -> str:
    spec = _image_spec_from_args(args, analysis, cfg)
    assert analysis.resolved is not None and analysis.resolved_exec is not None
    plan = plan_stages(
        spec, analysis.resolved, analysis.resolved_exec, context_root=analysis.root
    )
    violations = validate_plan(plan)
    if violations:
        details = "; ".join(f"{v.stage}: {v.rule}" for v in violations)
        raise ForgeError(f"generated plan violates its invariants: {details}")
    return render(plan)


def cmd_generate_dockerfile(args: argparse.Namespace, driver: EngineDriver | None) -> int:
    root = Path(args.workspace)
    cfg = load_config(args, root if root.is_dir() else None)
    analysis = analyze_workspace(root, cfg, tuple(args.repos or ()))
    text = _render_for_workspace(args, analysis, cfg)

    output = args.output or str(root / "Dockerfile")
    if output == "-":
        print(text, end="")
    else:
        path = Path(output)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        print(f"wrote {path}")
    return 0


def cmd_generate_ci(args: argparse.Namespace, driver: EngineDriver | None) -> int:
    cfg = load_config(args, None)
    spec = PipelineSpec(
        platform=args.platform,
        image_name=args.image_name,
        registry=cfg.registry,
        platforms=tuple(args.arch or ("amd64",)),
        enable_test_stage=bool(args.enable_test),
        push_on_branch=args.push_branch,
        base_image=args.base or "",
        target_stages=tuple(args.targets.split(",")) if args.targets else ("dev", "run"),
    )
    text = generate_pipeline(spec)
    output = args.output or default_output_path(args.platform)
    if output == "-":
        print(text, end="")
    else:
        path = Path(output)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        print(f"wrote {path}")
    return 0


def _print_dry_run(
    commands: list[EngineCommand], binary: str, secrets: tuple[str, ...] = ()
) -> None:
    for command in commands:
        line = f"[dry-run] {binary} {shlex.join(command.argv)}"
        for value in secrets:
            if value:
                line = line.replace(value, "***")
        print(line)


def _make_driver(args: argparse.Namespace, driver: EngineDriver | None) -> EngineDriver:
    if driver is not None:
        return driver
    return SubprocessDriver(getattr(args, "engine", None) or "docker")


def cmd_build(args: argparse.Namespace, driver: EngineDriver | None) -> int:
    root = Path(args.workspace)
    cfg = load_config(args, root if root.is_dir() else None)
    analysis = analyze_workspace(root, cfg, tuple(args.repos or ()))
    text = _render_for_workspace(args, analysis, cfg)

    dockerfile = Path(args.dockerfile_out or root / GENERATED_DIR / "Dockerfile")
    dockerfile.parent.mkdir(parents=True, exist_ok=True)
    dockerfile.write_text(text, encoding="utf-8")

    build_args: list[tuple[str, str]] = []
    secrets: tuple[str, ...] = ()
    if analysis.repos:
        needed = required_credential_vars(analysis.repos)
        missing = [name for name in needed if name not in os.environ]
        if missing:
            raise MissingCredential(
                "credential variables not set: " + ", ".join(missing)
            )
        credential_env = {name: os.environ[name] for name in needed}
        plan = clone_plan(analysis.repos, credential_env)
        for line in plan.redacted_log_form:
            print(line)
        build_args = [(name, credential_env[name]) for name in needed]
        secrets = tuple(credential_env.values())

    tags = tuple(args.tag or (f"{cfg.registry}/{root.resolve().name}:{args.target}",))
    request = BuildRequest(
        context=str(root),
        dockerfile_path=str(dockerfile),
        target=args.target,
        tags=tags,
        platforms=tuple(args.platform or ("amd64",)),
        build_args=tuple(build_args),
        push=bool(args.push),
    )
    command = build_argv(request)

    binary = getattr(args, "engine", None) or "docker"
    if args.dry_run:
        _print_dry_run([command], binary, secrets)
        return 0
    engine = _make_driver(args, driver)
    execute(command, engine)
    print(f"built {', '.join(tags)}")
    return 0


def cmd_matrix_list(args: argparse.Namespace, driver: EngineDriver | None) -> int:
    cfg = load_config(args, None)
    entries = enumerate_matrix(
        distros=args.distro or None,
        components=args.component or None,
        ml_flavors=args.ml or None,
        architectures=args.arch or None,
    )
    if args.format in ("json", "yaml"):
        table = load_base_image_table()
        doc = [
            {
                "tag": tag_of(entry, cfg.registry),
                "distro": entry.distro,
                "component": entry.component,
                "ml_flavor": entry.ml_flavor,
                "architectures": list(entry.architectures),
                "build_args": base_dockerfile_args(entry, table),
            }
            for entry in entries
        ]
        if args.format == "json":
            print(json.dumps(doc, indent=2))
        else:
            print(yaml.safe_dump(doc, sort_keys=False), end="")
    else:
        for entry in entries:
            print(tag_of(entry, cfg.registry))
    return 0


def cmd_matrix_build(args: argparse.Namespace, driver: EngineDriver | None) -> int:
    cfg = load_config(args, None)
    entries = enumerate_matrix(
        distros=args.distro or None,
        components=args.component or None,
        ml_flavors=args.ml or None,
        architectures=args.arch or None,
    )
    table = load_base_image_table()

    if args.plan_out:
        text = build_plan_document(entries, cfg.registry, args.dockerfile, table)
        Path(args.plan_out).write_text(text, encoding="utf-8")
        print(f"wrote {args.plan_out}")

    tagged: list[tuple[str, EngineCommand]] = []
    for entry in entries:
        tag = tag_of(entry, cfg.registry)
        request = BuildRequest(
            context=args.context,
            dockerfile_path=args.dockerfile,
            target="run",
            tags=(tag,),
            platforms=entry.architectures,
            build_args=tuple(sorted(base_dockerfile_args(entry, table).items())),
            push=bool(args.push),
        )
        tagged.append((tag, build_argv(request)))

    binary = getattr(args, "engine", None) or "docker"
    if args.dry_run:
        _print_dry_run([command for _, command in tagged], binary)
        return 0
    engine = _make_driver(args, driver)
    run_builds(tagged, engine, max_workers=cfg.parallelism)
    print(f"built {len(tagged)} images")
    return 0


def _split_run_argv(tokens: list[str]) -> tuple[list[str], list[str], list[str]]:
    """Split ``run`` arguments at ``--`` into head, passthrough, command."""

    sections: list[list[str]] = [[]]
    for token in tokens:
        if token == "--" and len(sections) < 3:
            sections.append([])
        else:
            sections[-1].append(token)
    head = sections[0]
    passthrough = sections[1] if len(sections) > 1 else []
    command = sections[2] if len(sections) > 2 else []
    return head, passthrough, command


def cmd_run(args: argparse.Namespace, driver: EngineDriver | None) -> int:
    overrides: dict[str, object] = {}
    host = probe_host(overrides)
    user_args = UserArgs(
        image=args.image,
        command=tuple(args.run_command),
        name=args.name,
        no_x11=args.no_x11,
        no_gpu=args.no_gpu,
        no_user_map=args.no_user_map,
        mount_workspace=not args.no_workspace,
        passthrough=tuple(args.passthrough),
    )
    invocation = synthesize_invocation(host, user_args, workspace_dir=args.workspace_dir)

    if args.plugin_dir:
        plugins = load_plugins(Path(args.plugin_dir))
        invocation = apply_plugins(invocation, plugins)

    binary = getattr(args, "engine", None) or "docker"
    if args.dry_run:
        commands = attach_or_run(
            invocation.name or "", invocation,
            state=_dry_run_state(invocation.name or ""),
        )
        _print_dry_run(list(commands), binary)
        return 0

    engine = _make_driver(args, driver)
    state = inspect_container(invocation.name or "", engine)
    commands = attach_or_run(invocation.name or "", invocation, state)

    # All but the last command are housekeeping (container removal); the
    # final run/exec inherits this terminal.
    for command in commands[:-1]:
        execute(command, engine)
    final = commands[-1]
    completed = subprocess.run([binary, *final.argv], check=False)
    return completed.returncode


def _dry_run_state(name: str):
    from .engine import ContainerState

    return ContainerState(name=name, exists=False, running=False)


def cmd_bench_startup(args: argparse.Namespace, driver: EngineDriver | None) -> int:
    binary = getattr(args, "engine", None) or "docker"
    command = EngineCommand(
        verb="run",
        argv=("run", "--rm", args.image, "true"),
        description="startup overhead probe",
    )
    if args.dry_run:
        _print_dry_run([command], binary)
        return 0
    engine = _make_driver(args, driver)
    timings: list[float] = []
    for _ in range(args.runs):
        started = time.perf_counter()
        execute(command, engine)
        timings.append(time.perf_counter() - started)
    mean = sum(timings) / len(timings)
    print(f"runs: {len(timings)}")
    print(f"mean startup overhead: {mean:.3f}s")
    print(f"fastest: {min(timings):.3f}s  slowest: {max(timings):.3f}s")
    print("note: reported for information only; no threshold is enforced")
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="path to a forge.yaml config file")
    parser.add_argument("--registry", help="registry prefix for image tags")
    parser.add_argument(
        "--parallelism", type=int, help="bounded parallelism for matrix builds"
    )
    parser.add_argument(
        "--strict",
        action="store_true",
        help="fail (exit 2) when any dependency key is unresolved",
    )
    parser.add_argument(
        "--dry-run",
        action="store_true",
        help="print the engine commands that would run, execute nothing",
    )
    parser.add_argument("--engine", help="container engine binary (default: docker)")


def _add_workspace_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("workspace", help="workspace root directory")
    parser.add_argument("--distro", help="ROS distro (default from config)")
    parser.add_argument(
        "--rosdep-db",
        action="append",
        help="additional rosdep database YAML (repeatable, later wins)",
    )
    parser.add_argument("--distro-index", help="distro index YAML override")
    parser.add_argument(
        "--repos", action="append", help="additional .repos file (repeatable)"
    )


def _add_image_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--target", choices=("dev", "run"), default="run", help="image flavor"
    )
    parser.add_argument("--base", help="base image (default: ros:<distro>)")
    parser.add_argument(
        "--command", help="deployment launch command (shell-style string)"
    )
    parser.add_argument("--workspace-dir", help="workspace path inside the image")
    parser.add_argument(
        "--platform", action="append", help="target platform (repeatable)"
    )
    parser.add_argument(
        "--slim-runtime",
        action="store_true",
        help="install only exec-scope dependencies in the shared stage",
    )
    parser.add_argument(
        "--nonroot-run", action="store_true", help="run stage uses the ros user"
    )
    parser.add_argument("--extra-apt", action="append", help="extra OS package")
    parser.add_argument("--extra-pip", action="append", help="extra pip package")
    parser.add_argument("--script-pre", help="custom script before source clones")
    parser.add_argument("--script-post", help="custom script after source clones")


def _add_matrix_filters(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--distro", action="append", help="restrict distros")
    parser.add_argument("--component", action="append", help="restrict components")
    parser.add_argument("--ml", action="append", help="restrict ML flavors")
    parser.add_argument("--arch", action="append", help="restrict architectures")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="forge",
        description="Container images and CI pipelines for ROS workspaces.",
    )
    parser.add_argument("--version", action="version", version=f"forge {__version__}")
    subparsers = parser.add_subparsers(dest="subcommand", required=True)

    p = subparsers.add_parser("analyze", help="report resolved dependencies")
    _add_common(p)
    _add_workspace_options(p)
    p.add_argument("--format", choices=("table", "json", "yaml"), default="table")
    p.set_defaults(handler=cmd_analyze)

    generate = subparsers.add_parser("generate", help="emit files")
    generate_sub = generate.add_subparsers(dest="generate_what", required=True)

    p = generate_sub.add_parser("dockerfile", help="write a multi-stage Dockerfile")
    _add_common(p)
    _add_workspace_options(p)
    _add_image_options(p)
    p.add_argument("--output", "-o", help="output path ('-' for stdout)")
    p.set_defaults(handler=cmd_generate_dockerfile)

    p = generate_sub.add_parser("ci", help="write a CI pipeline configuration")
    _add_common(p)
    p.add_argument(
        "--platform", choices=("github", "gitlab"), required=True, help="CI platform"
    )
    p.add_argument("--image-name", required=True, help="image repository name")
    p.add_argument("--arch", action="append", help="build architecture (repeatable)")
    p.add_argument(
        "--enable-test", action="store_true", help="run workspace tests in CI"
    )
    p.add_argument("--push-branch", default="main", help="branch that may push")
    p.add_argument("--base", help="base image forwarded to builds")
    p.add_argument("--targets", help="comma list of target stages (dev,run)")
    p.add_argument("--output", "-o", help="output path ('-' for stdout)")
    p.set_defaults(handler=cmd_generate_ci)

    p = subparsers.add_parser("build", help="generate and build an image")
    _add_common(p)
    _add_workspace_options(p)
    _add_image_options(p)
    p.add_argument("--tag", action="append", help="image tag (repeatable)")
    p.add_argument("--push", action="store_true", help="push after building")
    p.add_argument("--dockerfile-out", help="where to write the generated Dockerfile")
    p.set_defaults(handler=cmd_build)

    matrix = subparsers.add_parser("matrix", help="prebuilt base image matrix")
    matrix_sub = matrix.add_subparsers(dest="matrix_what", required=True)

    p = matrix_sub.add_parser("list", help="list matrix tags")
    _add_common(p)
    _add_matrix_filters(p)
    p.add_argument("--format", choices=("text", "json", "yaml"), default="text")
    p.set_defaults(handler=cmd_matrix_list)

    p = matrix_sub.add_parser("build", help="build matrix images")
    _add_common(p)
    _add_matrix_filters(p)
    p.add_argument(
        "--dockerfile",
        default="Dockerfile.base-matrix",
        help="generic base image Dockerfile the plan references",
    )
    p.add_argument("--context", default=".", help="build context for matrix images")
    p.add_argument("--plan-out", help="also write the machine-readable build plan")
    p.add_argument("--push", action="store_true", help="push after building")
    p.set_defaults(handler=cmd_matrix_build)

    p = subparsers.add_parser(
        "run", help="run a development container with host integration"
    )
    _add_common(p)
    p.add_argument("image", help="image reference")
    p.add_argument("--name", help="container name (default derived)")
    p.add_argument("--no-x11", action="store_true", help="disable X11 forwarding")
    p.add_argument("--no-gpu", action="store_true", help="disable GPU access")
    p.add_argument(
        "--no-user-map", action="store_true", help="do not map the host user"
    )
    p.add_argument(
        "--no-workspace", action="store_true", help="do not mount the workspace"
    )
    p.add_argument("--workspace-dir", default="/ws", help="workspace path in image")
    p.add_argument("--plugin-dir", help="directory of executable run plugins")
    p.set_defaults(handler=cmd_run, passthrough=[], run_command=[])

    bench = subparsers.add_parser("bench", help="measurement harnesses")
    bench_sub = bench.add_subparsers(dest="bench_what", required=True)
    p = bench_sub.add_parser("startup", help="report container startup overhead")
    _add_common(p)
    p.add_argument("image", help="image reference")
    p.add_argument("--runs", type=int, default=5, help="number of timed runs")
    p.set_defaults(handler=cmd_bench_startup)

    return parser


def main(argv: list[str] | None = None, driver: EngineDriver | None = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()

    passthrough: list[str] = []
    run_command: list[str] = []
    if argv and argv[0] == "run":
        head, passthrough, run_command = _split_run_argv(argv[1:])
        argv = ["run", *head]
        try:
            args, unknown = parser.parse_known_args(argv)
        except SystemExit as exc:
            return int(exc.code or 0)
        # Unrecognized flags are forwarded to the engine, ahead of the
        # explicit passthrough section.
        args.passthrough = [*unknown, *passthrough]
        args.run_command = run_command
    else:
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            return int(exc.code or 0)

    try:
        return int(args.handler(args, driver))
    except ForgeError as exc:
        print(f"forge: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
