"""Workspace path mapping and confinement.

Agents see a canonical ``/workplace`` root regardless of where the run
directory lives on the host. Keeping the agent-visible form stable matters
beyond tidiness: prompts embed these paths, and transcript keys are content
hashes, so host-specific paths would break replay across machines.
"""

from __future__ import annotations

import os
from pathlib import Path, PurePosixPath

from ..errors import PathEscape

AGENT_ROOT = PurePosixPath("/workplace")
PROJECT_DIRNAME = "project"


class Workspace:
    def __init__(self, host_root: str | Path) -> None:
        self.host_root = Path(host_root).resolve()
        self.host_root.mkdir(parents=True, exist_ok=True)

    @property
    def project_dir(self) -> Path:
        return self.host_root / PROJECT_DIRNAME

    @property
    def agent_project_dir(self) -> PurePosixPath:
        return AGENT_ROOT / PROJECT_DIRNAME

    def resolve(self, path: str | PurePosixPath) -> Path:
        """Map an agent-supplied path to a confined host path.

        Accepts paths relative to the workspace root or absolute paths under
        ``/workplace``. Anything that resolves outside the root, including
        through ``..`` segments or symlinks, raises :class:`PathEscape`.
        """
        raw = str(path)
        posix = PurePosixPath(raw)
        if posix.is_absolute():
            try:
                rel = posix.relative_to(AGENT_ROOT)
            except ValueError:
                raise PathEscape(f"absolute path outside the workspace: {raw}")
        else:
            rel = posix
        candidate = self.host_root / Path(*rel.parts)
        # realpath rather than resolve(): follows symlinks in existing
        # ancestors without requiring the leaf to exist yet
        resolved = Path(os.path.realpath(candidate))
        root = Path(os.path.realpath(self.host_root))
        if resolved != root and root not in resolved.parents:
            raise PathEscape(f"path escapes the workspace: {raw}")
        return resolved

    def agent_path(self, host: str | Path) -> str:
        """Inverse of :meth:`resolve`: render a host path in agent form."""
        rel = Path(host).resolve().relative_to(self.host_root)
        return str(AGENT_ROOT / PurePosixPath(*rel.parts))

    def ensure_project(self) -> Path:
        self.project_dir.mkdir(parents=True, exist_ok=True)
        return self.project_dir
