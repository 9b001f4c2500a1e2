"""Confined workspace, paged terminal, container runtime, and agent tools."""

from .browser import DocumentBrowser
from .runtime import ExecOutcome, SandboxHandle, exec_command, provision
from .terminal import TerminalBuffer, viewport
from .tools import HANDOFF_TOOLS, TOOL_REGISTRY, ToolContext, code_tree, invoke_tool, schemas_for
from .workspace import AGENT_ROOT, Workspace

__all__ = [
    "AGENT_ROOT",
    "DocumentBrowser",
    "ExecOutcome",
    "HANDOFF_TOOLS",
    "SandboxHandle",
    "TOOL_REGISTRY",
    "TerminalBuffer",
    "ToolContext",
    "Workspace",
    "code_tree",
    "exec_command",
    "invoke_tool",
    "provision",
    "schemas_for",
    "viewport",
]
