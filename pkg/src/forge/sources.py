"""Source repository lists and clone planning.

Repository lists follow the vcstool file convention: a ``repositories``
mapping of local names to ``{type, url, version}`` entries. Only git is
supported. URLs may embed credential placeholders (``${VAR}``) which are
substituted from an environment mapping when a concrete clone plan is
produced; log output always uses a redacted form.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import PurePosixPath
from typing import Iterable, Mapping, Sequence

import yaml

from .errors import MalformedReposFile, MissingCredential, UnsupportedVcsType

_SEGMENT_RE = re.compile(r"^[A-Za-z0-9_.-]+$")
_PLACEHOLDER_RE = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")

ReposList = tuple["RepoSpec", ...]


@dataclass(frozen=True)
class RepoSpec:
    """One repository entry from a ``.repos`` file."""

    local_name: str
    vcs_type: str
    url: str
    version: str | None = None


@dataclass(frozen=True)
class CloneStep:
    """A single planned clone: repository, destination, concrete URL."""

    repo: RepoSpec
    destination: str
    url: str


@dataclass(frozen=True)
class ClonePlan:
    """Ordered clone steps plus a form safe to print or log."""

    steps: tuple[CloneStep, ...]
    redacted_log_form: tuple[str, ...]


def _check_local_name(name: str) -> None:
    parts = PurePosixPath(name).parts
    if not parts or name.startswith("/"):
        raise MalformedReposFile(f"invalid repository name {name!r}")
    for part in parts:
        if part in (".", "..") or not _SEGMENT_RE.match(part):
            raise MalformedReposFile(f"invalid repository name {name!r}")


def parse_repos(yaml_text: str) -> ReposList:
    """Parse one repository list file, sorted by local name."""

    try:
        doc = yaml.safe_load(yaml_text)
    except yaml.YAMLError as exc:
        raise MalformedReposFile(f"not valid YAML: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("repositories"), dict):
        raise MalformedReposFile("expected a top-level 'repositories' mapping")

    repos: list[RepoSpec] = []
    for name, body in doc["repositories"].items():
        if not isinstance(name, str):
            raise MalformedReposFile(f"repository name {name!r} is not a string")
        _check_local_name(name)
        if not isinstance(body, dict):
            raise MalformedReposFile(f"repository {name!r} is not a mapping")
        vcs_type = body.get("type")
        if not isinstance(vcs_type, str) or not vcs_type:
            raise MalformedReposFile(f"repository {name!r} is missing a vcs type")
        if vcs_type != "git":
            raise UnsupportedVcsType(
                f"repository {name!r} uses {vcs_type!r}, only git is supported"
            )
        url = body.get("url")
        if not isinstance(url, str) or not url or re.search(r"\s", url):
            raise MalformedReposFile(f"repository {name!r} has an invalid url")
        version = body.get("version")
        if version is not None:
            if not isinstance(version, str) or not version or re.search(r"\s", version):
                raise MalformedReposFile(f"repository {name!r} has an invalid version")
        repos.append(RepoSpec(local_name=name, vcs_type="git", url=url, version=version))

    repos.sort(key=lambda r: r.local_name)
    return tuple(repos)


def combine_repos(lists: Iterable[ReposList]) -> ReposList:
    """Merge several repository lists; duplicate local names are an error."""

    merged: dict[str, RepoSpec] = {}
    for repos in lists:
        for repo in repos:
            if repo.local_name in merged:
                raise MalformedReposFile(
                    f"repository {repo.local_name!r} appears in more than one list"
                )
            merged[repo.local_name] = repo
    return tuple(sorted(merged.values(), key=lambda r: r.local_name))


def credential_vars(url: str) -> set[str]:
    """Names of ``${VAR}`` placeholders in a URL."""

    return set(_PLACEHOLDER_RE.findall(url))


def required_credential_vars(repos: Sequence[RepoSpec]) -> list[str]:
    """Sorted credential variable names referenced by any repository."""

    names: set[str] = set()
    for repo in repos:
        names.update(credential_vars(repo.url))
    return sorted(names)


def substitute_url(url: str, credential_env: Mapping[str, str]) -> str:
    """Replace every placeholder from ``credential_env``; missing is an error."""

    def replace(match: re.Match[str]) -> str:
        var = match.group(1)
        if var not in credential_env:
            raise MissingCredential(f"credential variable {var!r} is not set")
        return credential_env[var]

    return _PLACEHOLDER_RE.sub(replace, url)


def redact_url(url: str, credential_env: Mapping[str, str]) -> str:
    """Substituted URL with every credential value replaced by ``***``."""

    redacted = substitute_url(url, credential_env)
    for value in credential_env.values():
        if value:
            redacted = redacted.replace(value, "***")
    return redacted


def clone_plan(
    repos: Sequence[RepoSpec],
    credential_env: Mapping[str, str],
    dest_root: str = "/ws/src",
) -> ClonePlan:
    """Concrete clone steps for ``repos`` under ``dest_root``.

    Substitutes credentials into each URL and pairs every step with a
    redacted line suitable for logs. Order follows the repository list.
    """

    steps: list[CloneStep] = []
    redacted: list[str] = []
    root = PurePosixPath(dest_root)
    for repo in repos:
        destination = str(root / repo.local_name)
        url = substitute_url(repo.url, credential_env)
        steps.append(CloneStep(repo=repo, destination=destination, url=url))
        shown = redact_url(repo.url, credential_env)
        version = repo.version or "(default branch)"
        redacted.append(f"clone {shown} @ {version} -> {destination}")
    return ClonePlan(steps=tuple(steps), redacted_log_form=tuple(redacted))
