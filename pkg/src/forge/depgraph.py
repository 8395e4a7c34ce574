"""Dependency key resolution against pinned databases.

Declared manifest keys are classified into buckets with a fixed
precedence: workspace-internal packages first, then keys satisfied by
source repository clones, then ROS distro packages from a distro index,
then a rosdep-style database, and finally the unresolved remainder.

Both the rosdep snapshot and the distro indexes ship with the package as
versioned YAML fixtures and can be overridden from the command line.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Literal, Sequence

import yaml

from .errors import MalformedDatabase
from .manifest import Workspace
from .sources import RepoSpec

KNOWN_DISTROS: dict[str, int] = {
    "noetic": 1,
    "foxy": 2,
    "humble": 2,
    "iron": 2,
    "rolling": 2,
}

_INDEX_PACKAGE_RE = re.compile(r"^[a-z][a-z0-9_]*$")


@dataclass(frozen=True)
class RosdepEntry:
    """Resolution record for one key: OS packages or pip packages."""

    kind: Literal["system", "python"]
    packages: tuple[str, ...]


@dataclass(frozen=True)
class RosdepDatabase:
    """Key to record mapping for one target OS."""

    entries: dict[str, RosdepEntry]
    os_target: str = "ubuntu"


@dataclass(frozen=True)
class DistroIndex:
    """Names of released packages for one ROS distribution."""

    distro: str
    ros_version: int
    packages: frozenset[str]


@dataclass(frozen=True)
class DeclaredKeys:
    """Dependency keys aggregated over a workspace, by scope."""

    build: frozenset[str]
    exec: frozenset[str]

    @classmethod
    def from_workspace(cls, workspace: Workspace) -> "DeclaredKeys":
        build: set[str] = set()
        exec_: set[str] = set()
        for pkg in workspace.packages:
            build.update(pkg.deps_build)
            exec_.update(pkg.deps_exec)
        return cls(build=frozenset(build), exec=frozenset(exec_))

    @property
    def all(self) -> frozenset[str]:
        return self.build | self.exec


@dataclass(frozen=True)
class ResolvedDependencies:
    """Outcome of classifying declared keys.

    ``source_repos`` carries every repository in the clone plan;
    ``source_keys`` records which declared keys those repositories
    satisfy. All name lists are sorted and duplicate free.
    """

    internal: tuple[str, ...]
    ros_distro_pkgs: tuple[str, ...]
    system_pkgs: tuple[str, ...]
    python_pkgs: tuple[str, ...]
    source_repos: tuple[RepoSpec, ...]
    source_keys: tuple[str, ...]
    unresolved: tuple[str, ...]
    scope: Literal["all", "exec_only"]


def distro_package_name(distro: str, key: str) -> str:
    """OS package name of a released ROS package (underscores become dashes)."""

    return f"ros-{distro}-{key.replace('_', '-')}"


def load_rosdep_db(
    documents: Iterable[str], os_target: str = "ubuntu"
) -> RosdepDatabase:
    """Build a database from YAML documents, later documents winning key-wise.

    Two record shapes are accepted under the target OS: a bare list of OS
    packages, or ``{pip: {packages: [...]}}`` for pip-installed keys. A key
    without an entry for the target OS is skipped (it simply cannot be
    resolved here); any other shape raises :class:`MalformedDatabase`.
    """

    entries: dict[str, RosdepEntry] = {}
    for n, text in enumerate(documents):
        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise MalformedDatabase(f"database document {n} is not valid YAML: {exc}") from exc
        if doc is None:
            continue
        if not isinstance(doc, dict):
            raise MalformedDatabase(f"database document {n} is not a mapping")
        for key, per_os in doc.items():
            if not isinstance(key, str) or not key:
                raise MalformedDatabase(f"database document {n} has a non-string key")
            if per_os is None:
                continue
            if not isinstance(per_os, dict):
                raise MalformedDatabase(f"key {key!r} does not map OS names to records")
            if os_target not in per_os:
                continue
            record = per_os[os_target]
            entries[key] = _parse_record(key, record)
    return RosdepDatabase(entries=entries, os_target=os_target)


def _parse_record(key: str, record: object) -> RosdepEntry:
    if isinstance(record, list):
        packages = _string_list(key, record)
        return RosdepEntry(kind="system", packages=packages)
    if isinstance(record, dict):
        if set(record) == {"pip"} and isinstance(record["pip"], dict):
            pip = record["pip"]
            if set(pip) == {"packages"} and isinstance(pip["packages"], list):
                packages = _string_list(key, pip["packages"])
                return RosdepEntry(kind="python", packages=packages)
    raise MalformedDatabase(f"key {key!r} has an unsupported record shape")


def _string_list(key: str, raw: list[object]) -> tuple[str, ...]:
    if not raw:
        raise MalformedDatabase(f"key {key!r} has an empty package list")
    for item in raw:
        if not isinstance(item, str) or not item:
            raise MalformedDatabase(f"key {key!r} lists a non-string package")
    return tuple(raw)  # type: ignore[arg-type]


def load_distro_index(text: str) -> DistroIndex:
    """Parse a distro index file: ``distro: {name, ros_version, packages}``."""

    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise MalformedDatabase(f"distro index is not valid YAML: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("distro"), dict):
        raise MalformedDatabase("distro index must be a mapping with a 'distro' entry")
    body = doc["distro"]
    name = body.get("name")
    ros_version = body.get("ros_version")
    packages = body.get("packages")
    if not isinstance(name, str) or name not in KNOWN_DISTROS:
        raise MalformedDatabase(f"unknown distro name {name!r}")
    if ros_version != KNOWN_DISTROS[name]:
        raise MalformedDatabase(
            f"distro {name!r} must declare ros_version {KNOWN_DISTROS[name]}"
        )
    if not isinstance(packages, list):
        raise MalformedDatabase(f"distro {name!r} has no package list")
    for pkg in packages:
        if not isinstance(pkg, str) or not _INDEX_PACKAGE_RE.match(pkg):
            raise MalformedDatabase(f"distro {name!r} lists invalid package {pkg!r}")
    return DistroIndex(
        distro=name, ros_version=ros_version, packages=frozenset(packages)
    )


def packaged_distro_index(distro: str) -> DistroIndex:
    """Load the distro index fixture shipped with this package."""

    if distro not in KNOWN_DISTROS:
        raise MalformedDatabase(f"unknown distro name {distro!r}")
    text = (
        resources.files("forge.data").joinpath(f"distros/{distro}.yaml").read_text("utf-8")
    )
    return load_distro_index(text)


def packaged_rosdep_documents() -> list[str]:
    """YAML text of the rosdep snapshot shipped with this package."""

    return [
        resources.files("forge.data").joinpath("rosdep/base.yaml").read_text("utf-8")
    ]


def resolve(
    keys: DeclaredKeys,
    db: RosdepDatabase,
    index: DistroIndex,
    internal: set[str] | frozenset[str],
    repos: Sequence[RepoSpec] = (),
    scope: Literal["all", "exec_only"] = "all",
) -> ResolvedDependencies:
    """Classify declared keys into buckets.

    Precedence per key: internal, then source repositories (matched by
    repository local name), then the distro index, then the rosdep
    database, else unresolved. ``scope`` selects which declared keys take
    part: build plus exec, or exec only.
    """

    declared = keys.all if scope == "all" else keys.exec
    repo_names = {repo.local_name for repo in repos}

    internal_hits: set[str] = set()
    source_hits: set[str] = set()
    distro_keys: set[str] = set()
    system_pkgs: set[str] = set()
    python_pkgs: set[str] = set()
    unresolved: set[str] = set()

    for key in declared:
        if key in internal:
            internal_hits.add(key)
        elif key in repo_names:
            source_hits.add(key)
        elif key in index.packages:
            distro_keys.add(key)
        elif key in db.entries:
            entry = db.entries[key]
            if entry.kind == "system":
                system_pkgs.update(entry.packages)
            else:
                python_pkgs.update(entry.packages)
        else:
            unresolved.add(key)

    return ResolvedDependencies(
        internal=tuple(sorted(internal_hits)),
        ros_distro_pkgs=tuple(
            sorted(distro_package_name(index.distro, key) for key in distro_keys)
        ),
        system_pkgs=tuple(sorted(system_pkgs)),
        python_pkgs=tuple(sorted(python_pkgs)),
        source_repos=tuple(sorted(repos, key=lambda r: r.local_name)),
        source_keys=tuple(sorted(source_hits)),
        unresolved=tuple(sorted(unresolved)),
        scope=scope,
    )


def runtime_subset(
    resolved: ResolvedDependencies,
    keys: DeclaredKeys,
    db: RosdepDatabase,
    index: DistroIndex,
    internal: set[str] | frozenset[str],
    repos: Sequence[RepoSpec] = (),
) -> ResolvedDependencies:
    """Exec-scope re-resolution, for runtime images without build-only deps."""

    if resolved.scope != "all":
        raise ValueError("runtime_subset expects an all-scope resolution")
    return resolve(keys, db, index, internal, repos, scope="exec_only")
