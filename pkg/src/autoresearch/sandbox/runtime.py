"""Command execution against a workspace, local or containerized.

The default backend runs commands as local subprocesses with the workspace
as the working directory; the ``docker`` backend mounts the workspace at
``/workplace`` inside a container. Both capture interleaved stdout/stderr
into a paged :class:`TerminalBuffer`.
"""

from __future__ import annotations

import logging
import shutil
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from ..config import ContainerConfig
from ..errors import ContainerUnavailable, ExecTimeout
from .terminal import TerminalBuffer
from .workspace import AGENT_ROOT, Workspace

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SandboxHandle:
    workspace: Workspace
    config: ContainerConfig = field(default_factory=ContainerConfig)

    @property
    def runtime(self) -> str:
        return self.config.runtime


@dataclass(frozen=True)
class ExecOutcome:
    exit_code: int
    buffer: TerminalBuffer
    wall_time_s: float

    @property
    def ok(self) -> bool:
        return self.exit_code == 0


def provision(workspace: Workspace, config: ContainerConfig | None = None) -> SandboxHandle:
    config = config or ContainerConfig()
    if config.runtime == "docker" and shutil.which("docker") is None:
        raise ContainerUnavailable("docker runtime requested but no docker binary found")
    if config.runtime not in ("local", "docker"):
        raise ContainerUnavailable(f"unknown runtime backend: {config.runtime}")
    workspace.ensure_project()
    return SandboxHandle(workspace, config)


def exec_command(
    handle: SandboxHandle,
    cmd: str,
    timeout_s: float | None = None,
    *,
    env: Mapping[str, str] | None = None,
    cwd: str | Path | None = None,
    page_len: int = 50,
) -> ExecOutcome:
    """Run one shell command and capture its output into a paged buffer.

    On timeout raises :class:`ExecTimeout` with whatever output had arrived,
    so callers can still surface partial logs.
    """
    if timeout_s is None:
        timeout_s = handle.config.wall_time_limit_s
    if handle.runtime == "docker":
        argv = _docker_argv(handle, cmd, env)
        run_cwd: Path | None = None
        run_env = None
    else:
        argv = ["/bin/sh", "-c", cmd]
        run_cwd = handle.workspace.resolve(cwd) if cwd else handle.workspace.host_root
        import os

        run_env = dict(os.environ)
        if env:
            run_env.update(env)
    start = time.monotonic()
    try:
        proc = subprocess.run(
            argv,
            stdout=subprocess.PIPE,
            stderr=subprocess.STDOUT,
            cwd=run_cwd,
            env=run_env,
            timeout=timeout_s,
        )
    except subprocess.TimeoutExpired as exc:
        partial = exc.stdout or b""
        if isinstance(partial, bytes):
            partial = partial.decode("utf-8", errors="replace")
        raise ExecTimeout(
            f"command exceeded {timeout_s:g}s: {cmd!r}", partial_output=partial
        ) from exc
    except FileNotFoundError as exc:
        raise ContainerUnavailable(str(exc)) from exc
    elapsed = time.monotonic() - start
    output = proc.stdout.decode("utf-8", errors="replace")
    if handle.runtime == "docker" and proc.returncode == 125:
        raise ContainerUnavailable(output.strip()[:300])
    return ExecOutcome(
        exit_code=proc.returncode,
        buffer=TerminalBuffer(output, page_len=page_len),
        wall_time_s=elapsed,
    )


def _docker_argv(handle: SandboxHandle, cmd: str, env: Mapping[str, str] | None) -> list[str]:
    cfg = handle.config
    argv = [
        "docker",
        "run",
        "--rm",
        "-v",
        f"{handle.workspace.host_root}:{AGENT_ROOT}",
        "-w",
        str(AGENT_ROOT),
        f"--cpus={cfg.cpu_limit:g}",
        f"--memory={cfg.memory_limit_mb}m",
    ]
    for key, value in (env or {}).items():
        argv += ["-e", f"{key}={value}"]
    argv += [cfg.image, "/bin/sh", "-c", cmd]
    return argv
