"""Container image and CI pipeline generation for ROS workspaces.

The package turns a ROS or ROS 2 workspace into reproducible multi-stage
container builds: it scans package manifests, resolves dependency keys
against pinned databases, plans and renders Dockerfiles, enumerates a
matrix of ML-ready base images, emits CI pipeline configurations, and
wraps a container engine for building and for ergonomic development runs.
"""

from __future__ import annotations

__version__ = "0.1.0"

GENERATOR_NAME = "forge"
