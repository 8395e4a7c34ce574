"""Parsing of ROS package manifests and workspace discovery.

A workspace is any directory tree holding one or more ``package.xml``
manifests. Manifest formats 1 through 3 are accepted uniformly; the
dependency tags of each format are folded into three scopes (build, exec,
test). Elements outside the supported subset are ignored so that newer
manifest additions do not break scanning.
"""

from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from pathlib import Path, PurePosixPath

from .errors import (
    DuplicatePackageName,
    EmptyWorkspace,
    MalformedManifest,
    UnsupportedFormat,
)

PACKAGE_NAME_RE = re.compile(r"^[a-zA-Z][a-zA-Z0-9_]*$")
VERSION_RE = re.compile(r"^\d+(\.\d+)*$")

IGNORE_MARKERS = ("COLCON_IGNORE", "CATKIN_IGNORE")

# Dependency tag -> scopes it contributes to. ``depend`` expands to both
# build and exec; ``build_export_depend`` and ``buildtool_depend`` count as
# build-scope because both are needed to compile against the package.
_DEP_TAG_SCOPES = {
    "depend": ("build", "exec"),
    "build_depend": ("build",),
    "build_export_depend": ("build",),
    "buildtool_depend": ("build",),
    "exec_depend": ("exec",),
    "run_depend": ("exec",),
    "test_depend": ("test",),
}

_CONDITION_TOKEN_RE = re.compile(
    r"\s*(\$\w+|==|!=|\(|\)|'[^']*'|\"[^\"]*\"|[^\s()'\"]+)"
)


@dataclass
class PackageManifest:
    """One parsed ``package.xml``.

    ``source_dir`` is the package directory relative to the workspace root;
    a manifest parsed from bare text uses ``.``.
    """

    name: str
    version: str
    manifest_format: int = 1
    build_type: str = "ament_cmake"
    deps_build: frozenset[str] = frozenset()
    deps_exec: frozenset[str] = frozenset()
    deps_test: frozenset[str] = frozenset()
    source_dir: PurePosixPath = PurePosixPath(".")


@dataclass
class Workspace:
    """A scanned workspace: root directory plus discovered packages."""

    root: Path
    packages: list[PackageManifest] = field(default_factory=list)
    ignored_dirs: list[Path] = field(default_factory=list)


def evaluate_condition(expression: str, env: dict[str, str]) -> bool:
    """Evaluate a manifest ``condition`` attribute.

    Supports ``$VAR == literal`` and ``$VAR != literal`` comparisons joined
    by ``and`` / ``or`` with optional parentheses. A comparison referencing
    a variable absent from ``env`` is false. Syntax outside this subset
    raises :class:`MalformedManifest`.
    """

    tokens = []
    pos = 0
    while pos < len(expression):
        match = _CONDITION_TOKEN_RE.match(expression, pos)
        if match is None:
            break
        tokens.append(match.group(1))
        pos = match.end()
    if expression[pos:].strip():
        raise MalformedManifest(f"invalid condition syntax: {expression!r}")

    def strip_quotes(token: str) -> str:
        if len(token) >= 2 and token[0] == token[-1] and token[0] in "'\"":
            return token[1:-1]
        return token

    def parse_operand(index: int) -> tuple[str, bool, int]:
        """Return (value, defined, next_index) for one comparison operand."""
        if index >= len(tokens):
            raise MalformedManifest(f"truncated condition: {expression!r}")
        token = tokens[index]
        if token.startswith("$"):
            var = token[1:]
            return env.get(var, ""), var in env, index + 1
        if token in ("(", ")", "==", "!=", "and", "or"):
            raise MalformedManifest(f"invalid condition syntax: {expression!r}")
        return strip_quotes(token), True, index + 1

    def parse_primary(index: int) -> tuple[bool, int]:
        if index < len(tokens) and tokens[index] == "(":
            value, index = parse_or(index + 1)
            if index >= len(tokens) or tokens[index] != ")":
                raise MalformedManifest(f"unbalanced parentheses: {expression!r}")
            return value, index + 1
        left, left_defined, index = parse_operand(index)
        if index >= len(tokens) or tokens[index] not in ("==", "!="):
            raise MalformedManifest(f"expected comparison in condition: {expression!r}")
        op = tokens[index]
        right, right_defined, index = parse_operand(index + 1)
        # A comparison over an unset variable is false regardless of operator.
        if not (left_defined and right_defined):
            return False, index
        return (left == right) if op == "==" else (left != right), index

    def parse_and(index: int) -> tuple[bool, int]:
        value, index = parse_primary(index)
        while index < len(tokens) and tokens[index] == "and":
            rhs, index = parse_primary(index + 1)
            value = value and rhs
        return value, index

    def parse_or(index: int) -> tuple[bool, int]:
        value, index = parse_and(index)
        while index < len(tokens) and tokens[index] == "or":
            rhs, index = parse_and(index + 1)
            value = value or rhs
        return value, index

    if not tokens:
        raise MalformedManifest("empty condition attribute")
    result, index = parse_or(0)
    if index != len(tokens):
        raise MalformedManifest(f"trailing tokens in condition: {expression!r}")
    return result


def _element_active(element: ET.Element, env: dict[str, str]) -> bool:
    condition = element.get("condition")
    if condition is None:
        return True
    return evaluate_condition(condition, env)


def parse_manifest(
    xml_text: str,
    condition_env: dict[str, str] | None = None,
    source_dir: PurePosixPath = PurePosixPath("."),
) -> PackageManifest:
    """Parse one manifest document into a :class:`PackageManifest`.

    ``condition_env`` supplies the variables (conventionally ROS_VERSION
    and ROS_DISTRO) against which ``condition`` attributes are evaluated.
    """

    env = condition_env or {}
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        raise MalformedManifest(f"not well formed XML: {exc}") from exc
    if root.tag != "package":
        raise MalformedManifest(f"root element is <{root.tag}>, expected <package>")

    fmt_attr = root.get("format", "1")
    try:
        manifest_format = int(fmt_attr)
    except ValueError:
        raise UnsupportedFormat(f"non-numeric manifest format {fmt_attr!r}") from None
    if manifest_format not in (1, 2, 3):
        raise UnsupportedFormat(f"manifest format {manifest_format} is not supported")

    name_el = root.find("name")
    if name_el is None or not (name_el.text or "").strip():
        raise MalformedManifest("manifest has no <name>")
    name = (name_el.text or "").strip()
    if not PACKAGE_NAME_RE.match(name):
        raise MalformedManifest(f"invalid package name {name!r}")

    version_el = root.find("version")
    if version_el is None or not (version_el.text or "").strip():
        raise MalformedManifest(f"package {name!r} has no <version>")
    version = (version_el.text or "").strip()
    if not VERSION_RE.match(version):
        raise MalformedManifest(f"package {name!r} has invalid version {version!r}")

    scopes: dict[str, set[str]] = {"build": set(), "exec": set(), "test": set()}
    for element in root:
        targets = _DEP_TAG_SCOPES.get(element.tag)
        if targets is None:
            continue
        if not _element_active(element, env):
            continue
        key = (element.text or "").strip()
        if not key:
            raise MalformedManifest(f"package {name!r} has an empty <{element.tag}>")
        for scope in targets:
            scopes[scope].add(key)

    build_type = None
    export = root.find("export")
    if export is not None:
        for bt in export.findall("build_type"):
            if _element_active(bt, env) and (bt.text or "").strip():
                build_type = (bt.text or "").strip()
    if build_type is None:
        build_type = "catkin" if env.get("ROS_VERSION") == "1" else "ament_cmake"

    return PackageManifest(
        name=name,
        version=version,
        manifest_format=manifest_format,
        build_type=build_type,
        deps_build=frozenset(scopes["build"]),
        deps_exec=frozenset(scopes["exec"]),
        deps_test=frozenset(scopes["test"]),
        source_dir=source_dir,
    )


def render_manifest(manifest: PackageManifest) -> str:
    """Serialize a manifest back to canonical XML.

    Keys in both build and exec scope are emitted as ``<depend>``; the
    remainder use their narrowest tag. ``parse_manifest`` applied to the
    output reproduces the input manifest.
    """

    lines = [
        '<?xml version="1.0"?>',
        f'<package format="{manifest.manifest_format}">',
        f"  <name>{manifest.name}</name>",
        f"  <version>{manifest.version}</version>",
    ]
    both = sorted(manifest.deps_build & manifest.deps_exec)
    build_only = sorted(manifest.deps_build - manifest.deps_exec)
    exec_only = sorted(manifest.deps_exec - manifest.deps_build)
    for key in both:
        lines.append(f"  <depend>{key}</depend>")
    for key in build_only:
        lines.append(f"  <build_depend>{key}</build_depend>")
    for key in exec_only:
        lines.append(f"  <exec_depend>{key}</exec_depend>")
    for key in sorted(manifest.deps_test):
        lines.append(f"  <test_depend>{key}</test_depend>")
    lines.append("  <export>")
    lines.append(f"    <build_type>{manifest.build_type}</build_type>")
    lines.append("  </export>")
    lines.append("</package>")
    return "\n".join(lines) + "\n"


def _has_ignore_marker(directory: Path) -> bool:
    return any((directory / marker).exists() for marker in IGNORE_MARKERS)


def scan_workspace(
    root: Path, condition_env: dict[str, str] | None = None
) -> Workspace:
    """Discover every package under ``root``.

    Any subtree containing a COLCON_IGNORE or CATKIN_IGNORE marker is
    skipped. Packages are returned sorted by name; duplicate names and
    package-less trees are hard errors.
    """

    root = Path(root)
    if not root.is_dir():
        raise EmptyWorkspace(f"workspace root {root} is not a directory")

    packages: list[PackageManifest] = []
    ignored: list[Path] = []

    def walk(directory: Path) -> None:
        if _has_ignore_marker(directory):
            ignored.append(directory)
            return
        manifest_path = directory / "package.xml"
        if manifest_path.is_file():
            rel = PurePosixPath(directory.relative_to(root).as_posix())
            packages.append(
                parse_manifest(
                    manifest_path.read_text(encoding="utf-8"),
                    condition_env,
                    source_dir=rel,
                )
            )
        for child in sorted(directory.iterdir()):
            if child.is_dir() and not child.is_symlink():
                walk(child)

    walk(root)

    if not packages:
        raise EmptyWorkspace(f"no package manifests found under {root}")

    seen: dict[str, PurePosixPath] = {}
    for pkg in packages:
        if pkg.name in seen:
            raise DuplicatePackageName(
                f"package {pkg.name!r} appears in both {seen[pkg.name]} and {pkg.source_dir}"
            )
        seen[pkg.name] = pkg.source_dir

    packages.sort(key=lambda p: p.name)
    return Workspace(root=root, packages=packages, ignored_dirs=sorted(ignored))


def internal_package_names(workspace: Workspace) -> set[str]:
    """Names of all packages in the workspace, for self-dependency checks."""

    return {pkg.name for pkg in workspace.packages}


def with_source_dir(manifest: PackageManifest, source_dir: PurePosixPath) -> PackageManifest:
    """Copy of ``manifest`` relocated to ``source_dir``."""

    return replace(manifest, source_dir=source_dir)
