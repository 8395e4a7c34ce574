"""Multi-stage container build planning and rendering.

A build is planned as a semantic stage graph first and rendered to
Dockerfile text second. The graph is fixed: ``base`` (external parent,
guarded ROS core install), ``dependencies`` (manifests and repository
lists only, emits dependency artifacts), ``dependencies-install`` (shared
by development and deployment lineages), ``dev`` (full source), ``build``
(compiles the workspace), ``run`` (copies only the install space).

Deployment images therefore never receive the workspace source tree; the
single cross-stage copy into ``run`` is the compiled install space.
"""

from __future__ import annotations

import hashlib
import json
import shlex
from dataclasses import dataclass, field
from typing import Iterable, Union

from .depgraph import KNOWN_DISTROS, ResolvedDependencies
from .errors import InvalidSpec, UnresolvedDependencies
from .manifest import Workspace
from .sources import RepoSpec, required_credential_vars

ARTIFACT_DIR = "/opt/forge"
APT_LIST = f"{ARTIFACT_DIR}/apt-packages.txt"
PIP_LIST = f"{ARTIFACT_DIR}/pip-packages.txt"
REPOS_LIST = f"{ARTIFACT_DIR}/repos.txt"
ENTRYPOINT_PATH = "/forge-entrypoint.sh"

STAGE_ORDER = ("base", "dependencies", "dependencies-install", "dev", "build", "run")

ROS_APT_KEY_URL = "https://raw.githubusercontent.com/ros/rosdistro/master/ros.key"
ROS_KEYRING = "/usr/share/keyrings/ros-archive-keyring.gpg"


# --- semantic instructions -------------------------------------------------


@dataclass(frozen=True)
class BuildArg:
    name: str
    default: str | None = None


@dataclass(frozen=True)
class EnvSet:
    name: str
    value: str


@dataclass(frozen=True)
class Workdir:
    path: str


@dataclass(frozen=True)
class CopyContext:
    src: str
    dst: str
    chown: str | None = None


@dataclass(frozen=True)
class CopyFromStage:
    stage: str
    src: str
    dst: str


@dataclass(frozen=True)
class RunShell:
    """One shell command; ``category`` tags its role for plan validation.

    ``packages`` carries the OS or pip package set of a transaction so the
    development/deployment superset law can be checked on the plan without
    re-parsing shell text.
    """

    command: str
    category: str = "shell"
    packages: tuple[str, ...] = ()


@dataclass(frozen=True)
class UserSet:
    user: str


@dataclass(frozen=True)
class Entrypoint:
    argv: tuple[str, ...]


@dataclass(frozen=True)
class DefaultCommand:
    argv: tuple[str, ...]


Instruction = Union[
    BuildArg,
    EnvSet,
    Workdir,
    CopyContext,
    CopyFromStage,
    RunShell,
    UserSet,
    Entrypoint,
    DefaultCommand,
]


@dataclass(frozen=True)
class Stage:
    name: str
    parent: str
    instructions: tuple[Instruction, ...]


@dataclass(frozen=True)
class DockerfilePlan:
    stages: tuple[Stage, ...]
    base_image: str
    ros_distro: str
    target: str
    workspace_dir: str
    slim_runtime: bool

    def stage(self, name: str) -> Stage:
        for stage in self.stages:
            if stage.name == name:
                return stage
        raise KeyError(name)


@dataclass(frozen=True)
class Violation:
    """One broken plan invariant, naming the stage and the rule."""

    stage: str
    rule: str
    detail: str


@dataclass(frozen=True)
class PackageLocation:
    """Where one package lives, relative to the workspace root."""

    name: str
    source_dir: str


@dataclass
class ImageSpec:
    """Everything needed to plan one image build."""

    ros_distro: str
    base_image: str = ""
    target: str = "run"
    launch_command: tuple[str, ...] = ("bash",)
    workspace_dir: str = "/ws"
    packages: tuple[PackageLocation, ...] = ()
    repos_files: tuple[str, ...] = ()
    source_repos: tuple[RepoSpec, ...] = ()
    custom_script_pre: str | None = None
    custom_script_post: str | None = None
    extra_apt: tuple[str, ...] = ()
    extra_pip: tuple[str, ...] = ()
    platforms: tuple[str, ...] = ("amd64",)
    slim_runtime: bool = False
    strict: bool = False
    nonroot_run: bool = False

    def __post_init__(self) -> None:
        if not self.base_image:
            self.base_image = f"ros:{self.ros_distro}"

    @property
    def ros_version(self) -> int:
        return KNOWN_DISTROS[self.ros_distro]

    @property
    def build_tool(self) -> str:
        return "catkin" if self.ros_version == 1 else "colcon"


def spec_for_workspace(workspace: Workspace, ros_distro: str, **kwargs: object) -> ImageSpec:
    """Convenience constructor taking package locations from a scan."""

    packages = tuple(
        PackageLocation(name=pkg.name, source_dir=str(pkg.source_dir))
        for pkg in workspace.packages
    )
    return ImageSpec(ros_distro=ros_distro, packages=packages, **kwargs)  # type: ignore[arg-type]


def _check_spec(spec: ImageSpec, context_root: object = None) -> None:
    if spec.ros_distro not in KNOWN_DISTROS:
        raise InvalidSpec(f"unknown ROS distro {spec.ros_distro!r}")
    if spec.target not in ("dev", "run"):
        raise InvalidSpec(f"target must be dev or run, not {spec.target!r}")
    if not spec.platforms:
        raise InvalidSpec("at least one platform is required")
    for platform in spec.platforms:
        if platform not in ("amd64", "arm64"):
            raise InvalidSpec(f"unsupported platform {platform!r}")
    if spec.target == "run" and not spec.launch_command:
        raise InvalidSpec("target=run requires a launch command")
    if not spec.workspace_dir.startswith("/"):
        raise InvalidSpec("workspace_dir must be an absolute path")
    for extra in (*spec.extra_apt, *spec.extra_pip):
        if not extra or any(c.isspace() for c in extra):
            raise InvalidSpec(f"invalid extra package name {extra!r}")
    if context_root is not None:
        from pathlib import Path

        root = Path(str(context_root))
        for script in (spec.custom_script_pre, spec.custom_script_post):
            if script is not None and not (root / script).is_file():
                raise InvalidSpec(f"custom script {script!r} not found in build context")


def _container_rel_dir(location: PackageLocation) -> str:
    """Package directory below the container workspace, always under src/."""

    rel = location.source_dir
    if rel in (".", ""):
        return f"src/{location.name}"
    if rel == "src" or rel.startswith("src/"):
        return rel
    return f"src/{rel}"


def _q(token: str) -> str:
    return shlex.quote(token)


def _write_lines_cmd(path: str, lines: Iterable[str]) -> str:
    items = list(lines)
    if not items:
        return f": > {path}"
    return "printf '%s\\n' " + " ".join(_q(line) for line in items) + f" > {path}"


def _apt_cleanup() -> str:
    return "rm -rf /var/lib/apt/lists/*"


def _apt_install(args: str) -> str:
    return (
        "apt-get update && DEBIAN_FRONTEND=noninteractive "
        f"apt-get install -y --no-install-recommends {args} && " + _apt_cleanup()
    )


def _ros_core_guard(ros_version: int) -> RunShell:
    suite = "ros" if ros_version == 1 else "ros2"
    repo_line = (
        f'echo "deb [signed-by={ROS_KEYRING}] http://packages.ros.org/{suite}/ubuntu '
        '$(. /etc/os-release; echo ${UBUNTU_CODENAME}) main" '
        f"> /etc/apt/sources.list.d/{suite}.list"
    )
    command = (
        'if [ ! -d "/opt/ros/${ROS_DISTRO}" ]; then '
        + _apt_install("ca-certificates curl")
        + f" && curl -fsSL {ROS_APT_KEY_URL} -o {ROS_KEYRING}"
        + f" && {repo_line}"
        + " && "
        + _apt_install("ros-${ROS_DISTRO}-ros-core")
        + "; fi"
    )
    return RunShell(command=command, category="ros-core-guard")


def _entrypoint_script_cmd(workspace_dir: str) -> RunShell:
    lines = [
        "#!/bin/sh",
        "set -e",
        'if [ -f "/opt/ros/${ROS_DISTRO}/setup.sh" ]; then . "/opt/ros/${ROS_DISTRO}/setup.sh"; fi',
        f'if [ -f "{workspace_dir}/install/setup.sh" ]; then . "{workspace_dir}/install/setup.sh"; fi',
        'if [ "$#" -gt 0 ]; then exec "$@"; fi',
        'if [ -n "${FORGE_COMMAND:-}" ]; then exec /bin/sh -c "${FORGE_COMMAND}"; fi',
        "exec /bin/sh",
    ]
    command = (
        _write_lines_cmd(ENTRYPOINT_PATH, lines) + f" && chmod 0755 {ENTRYPOINT_PATH}"
    )
    return RunShell(command=command, category="entrypoint-setup")


def _user_setup() -> RunShell:
    command = (
        "{ getent group ros >/dev/null || groupadd --gid 1000 ros; } && "
        "{ id -u ros >/dev/null 2>&1 || "
        "useradd --uid 1000 --gid ros --non-unique --create-home --shell /bin/bash ros; }"
    )
    return RunShell(command=command, category="user-setup")


def _os_transaction_from_file(packages: tuple[str, ...]) -> RunShell:
    command = (
        "apt-get update && DEBIAN_FRONTEND=noninteractive "
        f"xargs -a {APT_LIST} apt-get install -y --no-install-recommends && "
        + _apt_cleanup()
    )
    return RunShell(command=command, category="pkg-os", packages=packages)


def _pip_transaction_from_file(packages: tuple[str, ...]) -> RunShell:
    bootstrap = (
        "if ! command -v pip3 >/dev/null; then " + _apt_install("python3-pip") + "; fi"
    )
    command = bootstrap + f" && pip3 install --no-cache-dir -r {PIP_LIST}"
    return RunShell(command=command, category="pkg-pip", packages=packages)


def _os_transaction_inline(packages: tuple[str, ...]) -> RunShell:
    command = _apt_install(" ".join(packages))
    return RunShell(command=command, category="pkg-os", packages=packages)


def _pip_transaction_inline(packages: tuple[str, ...]) -> RunShell:
    bootstrap = (
        "if ! command -v pip3 >/dev/null; then " + _apt_install("python3-pip") + "; fi"
    )
    command = bootstrap + " && pip3 install --no-cache-dir " + " ".join(packages)
    return RunShell(command=command, category="pkg-pip", packages=packages)


def _clone_transaction(workspace_dir: str) -> RunShell:
    bootstrap = (
        "if ! command -v git >/dev/null; then "
        + _apt_install("git ca-certificates")
        + "; fi"
    )
    loop = (
        "while read -r name url version; do "
        'eval "u=\\"$url\\"" && '
        f'git clone --recurse-submodules "$u" "{workspace_dir}/src/$name" && '
        "if [ -n \"$version\" ]; then "
        f'git -C "{workspace_dir}/src/$name" checkout --recurse-submodules "$version"; fi '
        "|| exit 1; "
        f"done < {REPOS_LIST}"
    )
    return RunShell(command=bootstrap + " && " + loop, category="clone")


def _repos_lines(repos: tuple[RepoSpec, ...]) -> list[str]:
    lines = []
    for repo in repos:
        parts = [repo.local_name, repo.url]
        if repo.version:
            parts.append(repo.version)
        lines.append(" ".join(parts))
    return lines


def _merged_os_packages(resolved: ResolvedDependencies, extra: tuple[str, ...]) -> tuple[str, ...]:
    return tuple(sorted({*resolved.ros_distro_pkgs, *resolved.system_pkgs, *extra}))


def _merged_pip_packages(resolved: ResolvedDependencies, extra: tuple[str, ...]) -> tuple[str, ...]:
    return tuple(sorted({*resolved.python_pkgs, *extra}))


def plan_stages(
    spec: ImageSpec,
    resolved: ResolvedDependencies,
    resolved_exec: ResolvedDependencies,
    context_root: object = None,
) -> DockerfilePlan:
    """Plan the stage graph for one image build.

    With ``slim_runtime`` the shared ``dependencies-install`` stage only
    installs exec-scope dependencies and the ``dev`` stage adds the
    build-only remainder; otherwise the shared stage installs everything
    and both lineages are identical up to tooling.
    """

    _check_spec(spec, context_root)
    if spec.strict and resolved.unresolved:
        raise UnresolvedDependencies(list(resolved.unresolved))

    ws = spec.workspace_dir
    packages = tuple(sorted(spec.packages, key=lambda p: p.name))
    repos = resolved.source_repos

    shared = resolved_exec if spec.slim_runtime else resolved
    shared_os = _merged_os_packages(shared, spec.extra_apt)
    shared_pip = _merged_pip_packages(shared, spec.extra_pip)
    all_os = _merged_os_packages(resolved, spec.extra_apt)
    all_pip = _merged_pip_packages(resolved, spec.extra_pip)
    delta_os = tuple(sorted(set(all_os) - set(shared_os)))
    delta_pip = tuple(sorted(set(all_pip) - set(shared_pip)))

    stages: list[Stage] = []

    # base: external parent plus the guarded ROS core install shared by
    # every lineage.
    base_instructions: list[Instruction] = [
        BuildArg("ROS_DISTRO", spec.ros_distro),
        EnvSet("ROS_DISTRO", "${ROS_DISTRO}"),
        _ros_core_guard(spec.ros_version),
    ]
    stages.append(Stage("base", "${BASE_IMAGE}", tuple(base_instructions)))

    # dependencies: manifests and repository lists only, then the three
    # dependency artifact files consumed by dependencies-install.
    dep_instructions: list[Instruction] = [Workdir(ws)]
    for location in packages:
        rel = _container_rel_dir(location)
        src = (
            "package.xml"
            if location.source_dir in (".", "")
            else f"{location.source_dir}/package.xml"
        )
        dep_instructions.append(CopyContext(src=src, dst=f"{ws}/{rel}/package.xml"))
    for repos_file in sorted(spec.repos_files):
        dep_instructions.append(CopyContext(src=repos_file, dst=f"{ws}/{repos_file}"))
    artifact_cmd = (
        f"mkdir -p {ARTIFACT_DIR} && "
        + _write_lines_cmd(APT_LIST, shared_os)
        + " && "
        + _write_lines_cmd(PIP_LIST, shared_pip)
        + " && "
        + _write_lines_cmd(REPOS_LIST, _repos_lines(repos))
    )
    dep_instructions.append(RunShell(command=artifact_cmd, category="dep-artifacts"))
    stages.append(Stage("dependencies", "base", tuple(dep_instructions)))

    # dependencies-install: consume the artifacts; shared by dev and run.
    install_instructions: list[Instruction] = [
        Workdir(ws),
        CopyFromStage("dependencies", ARTIFACT_DIR, ARTIFACT_DIR),
    ]
    if shared_os:
        install_instructions.append(_os_transaction_from_file(shared_os))
    if shared_pip:
        install_instructions.append(_pip_transaction_from_file(shared_pip))
    if spec.custom_script_pre is not None:
        install_instructions.append(
            CopyContext(src=spec.custom_script_pre, dst=f"{ARTIFACT_DIR}/custom-pre.sh")
        )
        install_instructions.append(
            RunShell(command=f"sh {ARTIFACT_DIR}/custom-pre.sh", category="custom-script")
        )
    if repos:
        for var in required_credential_vars(repos):
            install_instructions.append(BuildArg(var))
        install_instructions.append(_clone_transaction(ws))
    if spec.custom_script_post is not None:
        install_instructions.append(
            CopyContext(src=spec.custom_script_post, dst=f"{ARTIFACT_DIR}/custom-post.sh")
        )
        install_instructions.append(
            RunShell(command=f"sh {ARTIFACT_DIR}/custom-post.sh", category="custom-script")
        )
    install_instructions.append(_entrypoint_script_cmd(ws))
    stages.append(Stage("dependencies-install", "base", tuple(install_instructions)))

    # dev: the build-only dependency remainder (slim mode), build tooling,
    # full source, and a non-root user.
    dev_instructions: list[Instruction] = [_user_setup()]
    if delta_os:
        dev_instructions.append(_os_transaction_inline(delta_os))
    if delta_pip:
        dev_instructions.append(_pip_transaction_inline(delta_pip))
    tooling = ["build-essential", "git"]
    if spec.build_tool == "colcon":
        tooling.append("python3-colcon-common-extensions")
    dev_instructions.append(
        RunShell(command=_apt_install(" ".join(sorted(tooling))), category="tooling")
    )
    for location in packages:
        rel = _container_rel_dir(location)
        src = "./" if location.source_dir in (".", "") else f"{location.source_dir}/"
        dev_instructions.append(
            CopyContext(src=src, dst=f"{ws}/{rel}/", chown="1000:1000")
        )
    dev_instructions.append(
        RunShell(
            command=(
                f"install -d -o 1000 -g 1000 {ws}/build {ws}/install {ws}/log && "
                f"chown 1000:1000 {ws} {ws}/src"
            ),
            category="user-setup",
        )
    )
    dev_instructions.append(UserSet("ros"))
    dev_instructions.append(Entrypoint((ENTRYPOINT_PATH,)))
    dev_instructions.append(DefaultCommand(("bash",)))
    stages.append(Stage("dev", "dependencies-install", tuple(dev_instructions)))

    if spec.target == "run":
        if spec.build_tool == "catkin":
            build_cmd = (
                '. "/opt/ros/${ROS_DISTRO}/setup.sh" && '
                f"catkin_make_isolated --install --install-space {ws}/install"
            )
        else:
            build_cmd = (
                '. "/opt/ros/${ROS_DISTRO}/setup.sh" && '
                f"colcon build --install-base {ws}/install"
            )
        stages.append(
            Stage("build", "dev", (RunShell(command=build_cmd, category="build"),))
        )

        run_instructions: list[Instruction] = [
            CopyFromStage("build", f"{ws}/install", f"{ws}/install"),
        ]
        if spec.nonroot_run:
            run_instructions.append(_user_setup())
            run_instructions.append(
                RunShell(command=f"chown -R 1000:1000 {ws}", category="user-setup")
            )
            run_instructions.append(UserSet("ros"))
        run_instructions.append(Entrypoint((ENTRYPOINT_PATH,)))
        run_instructions.append(DefaultCommand(spec.launch_command))
        stages.append(Stage("run", "dependencies-install", tuple(run_instructions)))

    return DockerfilePlan(
        stages=tuple(stages),
        base_image=spec.base_image,
        ros_distro=spec.ros_distro,
        target=spec.target,
        workspace_dir=ws,
        slim_runtime=spec.slim_runtime,
    )


# --- validation ------------------------------------------------------------

_EXPECTED_PARENTS = {
    "base": "${BASE_IMAGE}",
    "dependencies": "base",
    "dependencies-install": "base",
    "dev": "dependencies-install",
    "build": "dev",
    "run": "dependencies-install",
}


def _lineage(plan: DockerfilePlan, name: str) -> list[Stage]:
    """Stages from the root of the parent chain down to ``name``."""

    chain: list[Stage] = []
    by_name = {stage.name: stage for stage in plan.stages}
    current: str | None = name
    while current in by_name:
        stage = by_name[current]
        chain.append(stage)
        parent = stage.parent
        current = parent if parent in by_name else None
    chain.reverse()
    return chain


def _lineage_packages(plan: DockerfilePlan, name: str, category: str) -> set[str]:
    packages: set[str] = set()
    for stage in _lineage(plan, name):
        for instruction in stage.instructions:
            if isinstance(instruction, RunShell) and instruction.category == category:
                packages.update(instruction.packages)
    return packages


def validate_plan(plan: DockerfilePlan) -> list[Violation]:
    """Check the stage graph invariants; an empty list means conformant."""

    violations: list[Violation] = []
    names = [stage.name for stage in plan.stages]
    expected = list(STAGE_ORDER[:4]) if plan.target == "dev" else list(STAGE_ORDER)
    if names != expected:
        violations.append(
            Violation(
                stage=",".join(names),
                rule="stage-order",
                detail=f"expected stages {expected}, found {names}",
            )
        )
        return violations

    for stage in plan.stages:
        if stage.parent != _EXPECTED_PARENTS[stage.name]:
            violations.append(
                Violation(
                    stage=stage.name,
                    rule="stage-parent",
                    detail=f"parent is {stage.parent!r}, expected {_EXPECTED_PARENTS[stage.name]!r}",
                )
            )

    dependencies = plan.stage("dependencies")
    for instruction in dependencies.instructions:
        if isinstance(instruction, CopyContext):
            if not (
                instruction.src.endswith("package.xml")
                or instruction.src.endswith(".repos")
            ):
                violations.append(
                    Violation(
                        stage="dependencies",
                        rule="manifests-only",
                        detail=f"copies {instruction.src!r}, not a manifest or repository list",
                    )
                )

    if plan.target == "run":
        run = plan.stage("run")
        cross = [i for i in run.instructions if isinstance(i, CopyFromStage)]
        context = [i for i in run.instructions if isinstance(i, CopyContext)]
        for instruction in context:
            violations.append(
                Violation(
                    stage="run",
                    rule="no-source-leak",
                    detail=f"copies {instruction.src!r} from the build context",
                )
            )
        install_path = f"{plan.workspace_dir}/install"
        if len(cross) != 1 or cross[0].stage != "build" or cross[0].src != install_path:
            violations.append(
                Violation(
                    stage="run",
                    rule="install-space-copy",
                    detail=(
                        "expected exactly one cross-stage copy of "
                        f"{install_path!r} from build, found "
                        + str([(c.stage, c.src) for c in cross])
                    ),
                )
            )

        for category in ("pkg-os", "pkg-pip"):
            dev_packages = _lineage_packages(plan, "dev", category)
            run_packages = _lineage_packages(plan, "run", category)
            if not dev_packages >= run_packages:
                violations.append(
                    Violation(
                        stage="dev",
                        rule="install-superset",
                        detail=(
                            f"{category} packages {sorted(run_packages - dev_packages)} "
                            "in run lineage but not dev lineage"
                        ),
                    )
                )
            if not plan.slim_runtime and dev_packages != run_packages:
                violations.append(
                    Violation(
                        stage="dev",
                        rule="install-equality",
                        detail=(
                            f"{category} packages differ without slim_runtime: "
                            f"{sorted(dev_packages ^ run_packages)}"
                        ),
                    )
                )

    return violations


# --- rendering -------------------------------------------------------------


def plan_fingerprint(plan: DockerfilePlan) -> str:
    """Stable content hash of the semantic plan."""

    def encode(value: object) -> object:
        if isinstance(value, Stage):
            return {
                "name": value.name,
                "parent": value.parent,
                "instructions": [encode(i) for i in value.instructions],
            }
        if isinstance(value, tuple):
            return [encode(v) for v in value]
        if hasattr(value, "__dataclass_fields__"):
            return {
                "kind": type(value).__name__,
                **{
                    name: encode(getattr(value, name))
                    for name in value.__dataclass_fields__
                },
            }
        return value

    payload = {
        "stages": [encode(stage) for stage in plan.stages],
        "base_image": plan.base_image,
        "ros_distro": plan.ros_distro,
        "target": plan.target,
        "workspace_dir": plan.workspace_dir,
        "slim_runtime": plan.slim_runtime,
    }
    digest = hashlib.sha256(
        json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    )
    return digest.hexdigest()


def _render_run(command: str) -> list[str]:
    segments = command.split(" && ")
    if len(segments) == 1:
        return [f"RUN {command}"]
    lines = [f"RUN {segments[0]} && \\"]
    for segment in segments[1:-1]:
        lines.append(f"    {segment} && \\")
    lines.append(f"    {segments[-1]}")
    return lines


def _render_value(value: str) -> str:
    if value == "" or any(c.isspace() for c in value):
        return '"' + value.replace('"', '\\"') + '"'
    return value


def _json_array(argv: tuple[str, ...]) -> str:
    return json.dumps(list(argv))


def _render_instruction(instruction: Instruction) -> list[str]:
    if isinstance(instruction, BuildArg):
        if instruction.default is None:
            return [f"ARG {instruction.name}"]
        return [f"ARG {instruction.name}={_render_value(instruction.default)}"]
    if isinstance(instruction, EnvSet):
        return [f"ENV {instruction.name}={_render_value(instruction.value)}"]
    if isinstance(instruction, Workdir):
        return [f"WORKDIR {instruction.path}"]
    if isinstance(instruction, CopyContext):
        chown = f"--chown={instruction.chown} " if instruction.chown else ""
        return [f"COPY {chown}{instruction.src} {instruction.dst}"]
    if isinstance(instruction, CopyFromStage):
        return [f"COPY --from={instruction.stage} {instruction.src} {instruction.dst}"]
    if isinstance(instruction, RunShell):
        return _render_run(instruction.command)
    if isinstance(instruction, UserSet):
        return [f"USER {instruction.user}"]
    if isinstance(instruction, Entrypoint):
        return [f"ENTRYPOINT {_json_array(instruction.argv)}"]
    if isinstance(instruction, DefaultCommand):
        joined = shlex.join(instruction.argv)
        return [
            f"ARG COMMAND={_render_value(joined)}",
            'ENV FORGE_COMMAND="${COMMAND}"',
            "CMD []",
        ]
    raise TypeError(f"unknown instruction {instruction!r}")


def render(plan: DockerfilePlan) -> str:
    """Render a plan to Dockerfile text, byte-deterministic for equal plans."""

    from . import GENERATOR_NAME, __version__

    lines = [
        "# syntax=docker/dockerfile:1",
        f"# Generated by {GENERATOR_NAME} {__version__} "
        f"(plan sha256 {plan_fingerprint(plan)})",
        "# Regenerate instead of editing by hand.",
        "",
        f"ARG BASE_IMAGE={plan.base_image}",
        f"ARG TARGET={plan.target}",
    ]
    for stage in plan.stages:
        lines.append("")
        lines.append(f"FROM {stage.parent} AS {stage.name}")
        for instruction in stage.instructions:
            lines.extend(_render_instruction(instruction))
    return "\n".join(lines) + "\n"
