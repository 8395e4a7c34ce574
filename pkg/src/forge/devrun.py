"""Ergonomic development runs: probe the host, synthesize the run.

The host probe gathers display, GPU, identity and workspace facts; the
synthesizer turns those plus user wishes into a :class:`RunInvocation`
with X11 forwarding, GPU access, user mapping and a source mount, each
individually suppressible. Attach logic reuses a running container of
the same name instead of starting a second one.

Plugins are pure invocation transforms. External plugins are executable
files in a configuration directory; they receive the invocation as a
versioned JSON document on stdin and print the transformed document.
"""

from __future__ import annotations

import json
import os
import re
import shutil
import subprocess
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

from .engine import (
    ContainerState,
    EngineCommand,
    Mount,
    RunInvocation,
    exec_argv,
    rm_argv,
    run_argv,
)
from .errors import InvalidArgs, PluginViolation

X11_SOCKET_DIR = "/tmp/.X11-unix"
SCHEMA_ID = "forge.run-invocation/1"

_NAME_OK_RE = re.compile(r"^[a-zA-Z0-9][a-zA-Z0-9_.-]*$")

PluginTransform = tuple[str, Callable[[RunInvocation], RunInvocation]]


@dataclass(frozen=True)
class HostEnvironment:
    """Facts about the machine a development container will run on."""

    display: str | None
    x11_socket_dir: str | None
    gpu_count: int
    uid: int
    gid: int
    cwd: Path
    detected_workspace: Path | None
    tty_available: bool


@dataclass(frozen=True)
class UserArgs:
    """What the user asked for on the command line."""

    image: str
    command: tuple[str, ...] = ()
    name: str | None = None
    no_x11: bool = False
    no_gpu: bool = False
    no_user_map: bool = False
    mount_workspace: bool = True
    passthrough: tuple[str, ...] = ()


def _count_gpus() -> int:
    binary = shutil.which("nvidia-smi")
    if binary is None:
        return 0
    try:
        completed = subprocess.run(
            [binary, "--list-gpus"],
            capture_output=True,
            text=True,
            timeout=5,
            check=False,
        )
    except (OSError, subprocess.TimeoutExpired):
        return 0
    if completed.returncode != 0:
        return 0
    return sum(1 for line in completed.stdout.splitlines() if line.strip())


def _find_workspace(start: Path) -> Path | None:
    """Nearest ancestor (or start itself) whose src/ holds a manifest."""

    for candidate in (start, *start.parents):
        src = candidate / "src"
        if src.is_dir():
            try:
                found = next(src.rglob("package.xml"), None)
            except OSError:
                found = None
            if found is not None:
                return candidate
    return None


def probe_host(overrides: dict[str, object] | None = None) -> HostEnvironment:
    """Inspect the host; explicit overrides win over probed values.

    Overriding ``display`` re-derives the X11 socket directory unless that
    is overridden too, so the pairing invariant holds either way.
    """

    overrides = dict(overrides or {})
    cwd = Path(overrides.get("cwd", Path.cwd()))  # type: ignore[arg-type]

    display = overrides.get("display", os.environ.get("DISPLAY") or None)
    if "x11_socket_dir" in overrides:
        x11_socket_dir = overrides["x11_socket_dir"]
    else:
        x11_socket_dir = X11_SOCKET_DIR if display else None

    gpu_count = overrides.get("gpu_count", _count_gpus())
    uid = overrides.get("uid", os.getuid())
    gid = overrides.get("gid", os.getgid())
    if "detected_workspace" in overrides:
        raw = overrides["detected_workspace"]
        detected = Path(raw) if raw is not None else None  # type: ignore[arg-type]
    else:
        detected = _find_workspace(cwd)
    tty = overrides.get(
        "tty_available", sys.stdin.isatty() and sys.stdout.isatty()
    )

    return HostEnvironment(
        display=display,  # type: ignore[arg-type]
        x11_socket_dir=x11_socket_dir,  # type: ignore[arg-type]
        gpu_count=int(gpu_count),  # type: ignore[call-overload]
        uid=int(uid),  # type: ignore[call-overload]
        gid=int(gid),  # type: ignore[call-overload]
        cwd=cwd,
        detected_workspace=detected,
        tty_available=bool(tty),
    )


def default_container_name(image: str, cwd: Path) -> str:
    """Container name derived from the image and directory, sanitized."""

    repo = image.split("@", 1)[0]
    repo = repo.rsplit("/", 1)[-1]
    repo = repo.split(":", 1)[0]
    raw = f"{repo}-{cwd.name}" if cwd.name else repo
    cleaned = re.sub(r"[^a-zA-Z0-9_.-]", "-", raw)
    cleaned = cleaned.lstrip("-._")
    return cleaned or "forge-dev"


def synthesize_invocation(
    host: HostEnvironment, args: UserArgs, workspace_dir: str = "/ws"
) -> RunInvocation:
    """Fold host facts and user wishes into one run invocation.

    Feature rules: X11 forwarding iff a display exists and was not
    suppressed; GPU access iff GPUs exist and were not suppressed; user
    mapping unless suppressed; the workspace source mount iff requested
    and a workspace was detected.
    """

    if not args.image:
        raise InvalidArgs("an image reference is required")
    name = args.name or default_container_name(args.image, host.cwd)
    if not _NAME_OK_RE.match(name):
        raise InvalidArgs(f"invalid container name {name!r}")

    env: list[tuple[str, str]] = []
    mounts: list[Mount] = []
    workdir: str | None = None

    if host.display is not None and not args.no_x11:
        env.append(("DISPLAY", host.display))
        socket_dir = host.x11_socket_dir or X11_SOCKET_DIR
        mounts.append(Mount(host=socket_dir, container=socket_dir, mode="rw"))

    gpu_all = host.gpu_count > 0 and not args.no_gpu
    user_map = (host.uid, host.gid) if not args.no_user_map else None

    if args.mount_workspace and host.detected_workspace is not None:
        source = host.detected_workspace / "src"
        mounts.append(
            Mount(host=str(source), container=f"{workspace_dir}/src", mode="rw")
        )
        workdir = workspace_dir

    return RunInvocation(
        image=args.image,
        name=name,
        env=tuple(sorted(env)),
        mounts=tuple(mounts),
        gpu_all=gpu_all,
        user_map=user_map,
        workdir=workdir,
        interactive_tty=host.tty_available,
        remove_on_exit=True,
        passthrough=tuple(args.passthrough),
        command=tuple(args.command),
    )


def check_invocation(invocation: RunInvocation) -> list[str]:
    """Invariant problems of an invocation; empty means valid."""

    problems: list[str] = []
    if not invocation.image:
        problems.append("image is empty")
    if invocation.name is not None and not _NAME_OK_RE.match(invocation.name):
        problems.append(f"container name {invocation.name!r} is invalid")
    containers = [mount.container for mount in invocation.mounts]
    for duplicate in sorted({c for c in containers if containers.count(c) > 1}):
        problems.append(f"duplicate mount target {duplicate!r}")
    keys = [key for key, _ in invocation.env]
    for duplicate in sorted({k for k in keys if keys.count(k) > 1}):
        problems.append(f"duplicate environment key {duplicate!r}")
    for mount in invocation.mounts:
        if mount.mode not in ("rw", "ro"):
            problems.append(f"invalid mount mode {mount.mode!r}")
    return problems


def _is_contiguous_subsequence(needle: tuple[str, ...], haystack: tuple[str, ...]) -> bool:
    if not needle:
        return True
    for start in range(len(haystack) - len(needle) + 1):
        if tuple(haystack[start : start + len(needle)]) == needle:
            return True
    return False


def apply_plugins(
    invocation: RunInvocation, plugins: Sequence[PluginTransform]
) -> RunInvocation:
    """Left-fold plugin transforms over the invocation.

    Invariants are re-checked after every step; passthrough tokens must
    survive in order and contiguously. A failure names the plugin.
    """

    current = invocation
    for name, transform in plugins:
        candidate = transform(current)
        problems = check_invocation(candidate)
        if not _is_contiguous_subsequence(current.passthrough, candidate.passthrough):
            problems.append("passthrough tokens were reordered or rewritten")
        if problems:
            raise PluginViolation(name, problems)
        current = candidate
    return current


def attach_or_run(
    name: str, invocation: RunInvocation, state: ContainerState
) -> tuple[EngineCommand, ...]:
    """Commands realizing the attach decision.

    Running container: exec an interactive shell under the same user
    mapping. Stopped container of the same name: remove, then run. No
    container: run.
    """

    if invocation.name != name or state.name != name:
        raise InvalidArgs("container name mismatch between invocation and state")
    if state.running:
        return (
            exec_argv(
                name,
                ("bash",),
                interactive=invocation.interactive_tty,
                user_map=invocation.user_map,
            ),
        )
    if state.exists:
        return (rm_argv(name), run_argv(invocation))
    return (run_argv(invocation),)


# --- external plugin interface --------------------------------------------


def invocation_to_doc(invocation: RunInvocation) -> dict[str, object]:
    """Serialize an invocation to the versioned plugin document."""

    return {
        "schema": SCHEMA_ID,
        "image": invocation.image,
        "name": invocation.name,
        "env": {key: value for key, value in invocation.env},
        "mounts": [
            {"host": m.host, "container": m.container, "mode": m.mode}
            for m in invocation.mounts
        ],
        "gpu_all": invocation.gpu_all,
        "user_map": list(invocation.user_map) if invocation.user_map else None,
        "workdir": invocation.workdir,
        "interactive_tty": invocation.interactive_tty,
        "remove_on_exit": invocation.remove_on_exit,
        "passthrough": list(invocation.passthrough),
        "command": list(invocation.command),
    }


def invocation_from_doc(doc: dict[str, object]) -> RunInvocation:
    """Parse the plugin document back into an invocation."""

    if not isinstance(doc, dict) or doc.get("schema") != SCHEMA_ID:
        raise InvalidArgs(f"plugin document must declare schema {SCHEMA_ID!r}")
    try:
        env = doc.get("env") or {}
        mounts = tuple(
            Mount(host=m["host"], container=m["container"], mode=m.get("mode", "rw"))
            for m in doc.get("mounts") or []
        )
        user_map_raw = doc.get("user_map")
        user_map = (
            (int(user_map_raw[0]), int(user_map_raw[1]))  # type: ignore[index]
            if user_map_raw is not None
            else None
        )
        return RunInvocation(
            image=str(doc["image"]),
            name=doc.get("name"),  # type: ignore[arg-type]
            env=tuple(sorted((str(k), str(v)) for k, v in env.items())),  # type: ignore[union-attr]
            mounts=mounts,
            gpu_all=bool(doc.get("gpu_all", False)),
            user_map=user_map,
            workdir=doc.get("workdir"),  # type: ignore[arg-type]
            interactive_tty=bool(doc.get("interactive_tty", True)),
            remove_on_exit=bool(doc.get("remove_on_exit", True)),
            passthrough=tuple(str(t) for t in doc.get("passthrough") or []),  # type: ignore[union-attr]
            command=tuple(str(t) for t in doc.get("command") or []),  # type: ignore[union-attr]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidArgs(f"malformed plugin document: {exc}") from exc


def _external_transform(path: Path) -> Callable[[RunInvocation], RunInvocation]:
    def transform(invocation: RunInvocation) -> RunInvocation:
        payload = json.dumps(invocation_to_doc(invocation))
        try:
            completed = subprocess.run(
                [str(path)],
                input=payload,
                capture_output=True,
                text=True,
                timeout=30,
                check=False,
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise PluginViolation(path.name, [f"could not execute: {exc}"]) from exc
        if completed.returncode != 0:
            raise PluginViolation(
                path.name,
                [f"exited {completed.returncode}: {completed.stderr.strip()}"],
            )
        try:
            doc = json.loads(completed.stdout)
        except json.JSONDecodeError as exc:
            raise PluginViolation(path.name, [f"emitted invalid JSON: {exc}"]) from exc
        try:
            return invocation_from_doc(doc)
        except InvalidArgs as exc:
            raise PluginViolation(path.name, [str(exc)]) from exc

    return transform


def load_plugins(config_dir: Path) -> list[PluginTransform]:
    """Executable plugin files in ``config_dir``, ordered by file name."""

    if not config_dir.is_dir():
        return []
    plugins: list[PluginTransform] = []
    for path in sorted(config_dir.iterdir()):
        if path.is_file() and os.access(path, os.X_OK):
            plugins.append((path.name, _external_transform(path)))
    return plugins
