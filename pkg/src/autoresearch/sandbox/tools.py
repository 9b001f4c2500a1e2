"""Agent tool registry: file ops, execution, viewports, browsing, planning.

Each tool renders its result as text for the agent transcript. Control-flow
tools (handoffs and case termination) are registered so schema checks pass,
but the agent loop intercepts them before dispatch; their handlers only
echo a marker.
"""

from __future__ import annotations

import shlex
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

from ..errors import PathMissing, ToolBudgetExceeded, ToolFailure, UnknownTool, VideoUnsupported
from ..gateway import Gateway, ToolSchema, chat_request
from .browser import IMAGE_SUFFIXES, VIDEO_SUFFIXES, DocumentBrowser
from .runtime import SandboxHandle, exec_command
from .terminal import TerminalBuffer
from .workspace import Workspace

VCS_DIRS = {".git", ".hg", ".svn"}


def code_tree(workspace: Workspace, path: str = ".", max_depth: int | None = None) -> str:
    """Deterministic tree listing: directories first, lexicographic, no VCS dirs."""
    root = workspace.resolve(path)
    if not root.exists():
        raise PathMissing(f"no such path: {path}")
    if root.is_file():
        return root.name
    lines = [root.name + "/"]

    def walk(directory: Path, prefix: str, depth: int) -> None:
        if max_depth is not None and depth >= max_depth:
            return
        entries = sorted(
            (e for e in directory.iterdir() if e.name not in VCS_DIRS),
            key=lambda e: (e.is_file(), e.name),
        )
        for pos, entry in enumerate(entries):
            last = pos == len(entries) - 1
            connector = "└── " if last else "├── "
            lines.append(prefix + connector + entry.name + ("/" if entry.is_dir() else ""))
            if entry.is_dir():
                walk(entry, prefix + ("    " if last else "│   "), depth + 1)

    walk(root, "", 0)
    return "\n".join(lines)


@dataclass
class ToolContext:
    """Mutable per-conversation state shared by every tool invocation."""

    workspace: Workspace
    handle: SandboxHandle
    gateway: Gateway | None = None
    page_len: int = 50
    budget: int | None = None
    calls_used: int = 0
    terminal: TerminalBuffer | None = None
    browser: DocumentBrowser = field(init=False)
    plans: dict[str, str] = field(default_factory=dict)
    exec_timeout_s: float | None = None

    def __post_init__(self) -> None:
        self.browser = DocumentBrowser(self.workspace, page_len=self.page_len)

    def charge(self) -> None:
        self.calls_used += 1
        if self.budget is not None and self.calls_used > self.budget:
            raise ToolBudgetExceeded(
                f"tool budget of {self.budget} calls exhausted"
            )

    def _capture(self, cmd: str, env: Mapping[str, str] | None = None) -> str:
        outcome = exec_command(
            self.handle,
            cmd,
            timeout_s=self.exec_timeout_s,
            env=env,
            page_len=self.page_len,
        )
        self.terminal = outcome.buffer
        return f"exit code {outcome.exit_code}\n{outcome.buffer.render()}"


# --- file tools -----------------------------------------------------------


# newline="" on both sides: round-trips must be bit-exact, including \r


def _read_file(ctx: ToolContext, args: Mapping[str, Any]) -> str:
    host = ctx.workspace.resolve(args["path"])
    if not host.is_file():
        raise ToolFailure(f"no such file: {args['path']}")
    with open(host, encoding="utf-8", errors="replace", newline="") as fh:
        return fh.read()


def _write_text(host: Path, content: str) -> None:
    host.parent.mkdir(parents=True, exist_ok=True)
    with open(host, "w", encoding="utf-8", newline="") as fh:
        fh.write(content)


def _write_file(ctx: ToolContext, args: Mapping[str, Any]) -> str:
    _write_text(ctx.workspace.resolve(args["path"]), args.get("content", ""))
    return f"wrote {args['path']}"


def _create_file(ctx: ToolContext, args: Mapping[str, Any]) -> str:
    host = ctx.workspace.resolve(args["path"])
    if host.exists():
        raise ToolFailure(f"already exists: {args['path']}")
    _write_text(host, args.get("content", ""))
    return f"created {args['path']}"


def _create_directory(ctx: ToolContext, args: Mapping[str, Any]) -> str:
    ctx.workspace.resolve(args["path"]).mkdir(parents=True, exist_ok=True)
    return f"created directory {args['path']}"


def _list_files(ctx: ToolContext, args: Mapping[str, Any]) -> str:
    host = ctx.workspace.resolve(args.get("path", "."))
    if not host.is_dir():
        raise ToolFailure(f"not a directory: {args.get('path', '.')}")
    entries = sorted(
        (e for e in host.iterdir() if e.name not in VCS_DIRS),
        key=lambda e: (e.is_file(), e.name),
    )
    if not entries:
        return "(empty)"
    return "\n".join(e.name + ("/" if e.is_dir() else "") for e in entries)


def _gen_code_tree_structure(ctx: ToolContext, args: Mapping[str, Any]) -> str:
    return code_tree(ctx.workspace, args.get("path", "."), args.get("max_depth"))


# --- execution tools ------------------------------------------------------


def _run_python(ctx: ToolContext, args: Mapping[str, Any]) -> str:
    script = args["path"]
    ctx.workspace.resolve(script)  # confinement check before shelling out
    extra = args.get("args", "")
    cmd = f"python3 {shlex.quote(script)}"
    if extra:
        cmd = f"{cmd} {extra}"
    return ctx._capture(cmd)


def _execute_command(ctx: ToolContext, args: Mapping[str, Any]) -> str:
    return ctx._capture(args["command"])


def _require_terminal(ctx: ToolContext) -> TerminalBuffer:
    if ctx.terminal is None:
        raise ToolFailure("no terminal output captured yet")
    return ctx.terminal


def _terminal_page_down(ctx: ToolContext, args: Mapping[str, Any]) -> str:
    ctx.terminal = _require_terminal(ctx).page_down()
    return ctx.terminal.render()


def _terminal_page_up(ctx: ToolContext, args: Mapping[str, Any]) -> str:
    ctx.terminal = _require_terminal(ctx).page_up()
    return ctx.terminal.render()


def _terminal_page_to(ctx: ToolContext, args: Mapping[str, Any]) -> str:
    ctx.terminal = _require_terminal(ctx).to(int(args["page"]))
    return ctx.terminal.render()


# --- document tools -------------------------------------------------------


def _open_local_file(ctx: ToolContext, args: Mapping[str, Any]) -> str:
    return ctx.browser.open_local_file(args["path"])


def _page_down_markdown(ctx: ToolContext, args: Mapping[str, Any]) -> str:
    return ctx.browser.page_down()


def _page_up_markdown(ctx: ToolContext, args: Mapping[str, Any]) -> str:
    return ctx.browser.page_up()


def _find_on_page_ctrl_f(ctx: ToolContext, args: Mapping[str, Any]) -> str:
    return ctx.browser.find(args["query"])


def _find_next(ctx: ToolContext, args: Mapping[str, Any]) -> str:
    return ctx.browser.find_next()


def _question_answer_on_whole_page(ctx: ToolContext, args: Mapping[str, Any]) -> str:
    if ctx.gateway is None:
        raise ToolFailure("document question answering needs a chat gateway")
    document = ctx.browser.whole_text()
    request = chat_request(
        "You answer questions about the document supplied by the user, "
        "grounded only in its text.",
        f"Document:\n{document}\n\nQuestion: {args['question']}",
        agent="doc-qa",
    )
    response = ctx.gateway.complete(request)
    return response.text or ""


def _visual_question_answering(ctx: ToolContext, args: Mapping[str, Any]) -> str:
    path = args["path"]
    host = ctx.workspace.resolve(path)
    suffix = host.suffix.lower()
    if suffix in VIDEO_SUFFIXES:
        raise VideoUnsupported(f"video input is not supported: {path}")
    if suffix not in IMAGE_SUFFIXES:
        raise ToolFailure(f"unsupported visual input: {path}")
    if not host.is_file():
        raise ToolFailure(f"no such file: {path}")
    if ctx.gateway is None:
        raise ToolFailure("visual question answering needs a chat gateway")
    request = chat_request(
        "You describe and answer questions about a still image referenced by path.",
        f"Image: {ctx.workspace.agent_path(host)}\nQuestion: {args['question']}",
        agent="visual-qa",
    )
    response = ctx.gateway.complete(request)
    return response.text or ""


# --- planning tools -------------------------------------------------------


def _plan(kind: str) -> Callable[[ToolContext, Mapping[str, Any]], str]:
    def handler(ctx: ToolContext, args: Mapping[str, Any]) -> str:
        ctx.plans[kind] = args.get("plan", args.get("content", ""))
        return f"{kind} plan recorded"

    return handler


# --- control-flow markers -------------------------------------------------


def _marker(name: str) -> Callable[[ToolContext, Mapping[str, Any]], str]:
    def handler(ctx: ToolContext, args: Mapping[str, Any]) -> str:
        return f"[{name}]"

    return handler


HANDOFF_TOOLS = (
    "case_resolved",
    "case_not_resolved",
    "transfer_back_to_orchestrate_agent",
    "transfer_to_code_survey_agent",
    "transfer_back_to_survey_agent",
    "transfer_to_code_review_agent",
    "transfer_to_judge_agent",
    "visualizer",
)

_PATH_ARG = {
    "type": "object",
    "properties": {"path": {"type": "string"}},
    "required": ["path"],
}
_PATH_CONTENT_ARGS = {
    "type": "object",
    "properties": {"path": {"type": "string"}, "content": {"type": "string"}},
    "required": ["path"],
}
_NO_ARGS = {"type": "object", "properties": {}}
_PLAN_ARGS = {
    "type": "object",
    "properties": {"plan": {"type": "string"}, "content": {"type": "string"}},
}

# name -> (handler, parameter schema, description)
TOOL_REGISTRY: dict[str, tuple[Callable[[ToolContext, Mapping[str, Any]], str], dict, str]] = {
    "read_file": (_read_file, _PATH_ARG, "Read a file from the workspace."),
    "write_file": (_write_file, _PATH_CONTENT_ARGS, "Overwrite a workspace file with new content."),
    "create_file": (_create_file, _PATH_CONTENT_ARGS, "Create a new workspace file."),
    "create_directory": (_create_directory, _PATH_ARG, "Create a directory (parents included)."),
    "list_files": (
        _list_files,
        {"type": "object", "properties": {"path": {"type": "string"}}},
        "List the entries of a directory.",
    ),
    "gen_code_tree_structure": (
        _gen_code_tree_structure,
        {
            "type": "object",
            "properties": {"path": {"type": "string"}, "max_depth": {"type": "integer"}},
        },
        "Generate a tree listing of a directory.",
    ),
    "run_python": (
        _run_python,
        {
            "type": "object",
            "properties": {"path": {"type": "string"}, "args": {"type": "string"}},
            "required": ["path"],
        },
        "Run a Python script and capture its output.",
    ),
    "execute_command": (
        _execute_command,
        {
            "type": "object",
            "properties": {"command": {"type": "string"}},
            "required": ["command"],
        },
        "Run a shell command and capture its output.",
    ),
    "terminal_page_down": (_terminal_page_down, _NO_ARGS, "Scroll the terminal viewport down one page."),
    "terminal_page_up": (_terminal_page_up, _NO_ARGS, "Scroll the terminal viewport up one page."),
    "terminal_page_to": (
        _terminal_page_to,
        {
            "type": "object",
            "properties": {"page": {"type": "integer"}},
            "required": ["page"],
        },
        "Move the terminal viewport to a specific 1-based page.",
    ),
    "open_local_file": (_open_local_file, _PATH_ARG, "Open a document for paged reading."),
    "page_down_markdown": (_page_down_markdown, _NO_ARGS, "Next page of the open document."),
    "page_up_markdown": (_page_up_markdown, _NO_ARGS, "Previous page of the open document."),
    "find_on_page_ctrl_f": (
        _find_on_page_ctrl_f,
        {
            "type": "object",
            "properties": {"query": {"type": "string"}},
            "required": ["query"],
        },
        "Search the open document and jump to the first match.",
    ),
    "find_next": (_find_next, _NO_ARGS, "Jump to the next search match."),
    "question_answer_on_whole_page": (
        _question_answer_on_whole_page,
        {
            "type": "object",
            "properties": {"question": {"type": "string"}},
            "required": ["question"],
        },
        "Answer a question about the whole open document.",
    ),
    "visual_question_answering": (
        _visual_question_answering,
        {
            "type": "object",
            "properties": {"path": {"type": "string"}, "question": {"type": "string"}},
            "required": ["path", "question"],
        },
        "Answer a question about a still image.",
    ),
    "plan_dataset": (_plan("dataset"), _PLAN_ARGS, "Record the dataset preparation plan."),
    "plan_training": (_plan("training"), _PLAN_ARGS, "Record the training plan."),
    "plan_testing": (_plan("testing"), _PLAN_ARGS, "Record the testing plan."),
}

for _name in HANDOFF_TOOLS:
    TOOL_REGISTRY[_name] = (
        _marker(_name),
        {"type": "object", "properties": {"message": {"type": "string"}}},
        f"Control-flow signal: {_name.replace('_', ' ')}.",
    )


def schemas_for(names: Sequence[str]) -> tuple[ToolSchema, ...]:
    out = []
    for name in names:
        if name not in TOOL_REGISTRY:
            raise UnknownTool(f"no such tool: {name}")
        _, params, description = TOOL_REGISTRY[name]
        out.append(ToolSchema(name, description, params))
    return tuple(out)


def invoke_tool(name: str, args: Mapping[str, Any], ctx: ToolContext) -> str:
    if name not in TOOL_REGISTRY:
        raise UnknownTool(f"no such tool: {name}")
    ctx.charge()
    handler, _, _ = TOOL_REGISTRY[name]
    try:
        return handler(ctx, args)
    except KeyError as exc:
        raise ToolFailure(f"{name}: missing argument {exc}") from exc
    except OSError as exc:
        raise ToolFailure(f"{name}: {exc}") from exc
