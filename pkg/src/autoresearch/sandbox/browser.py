"""Paged document browser for papers and notes inside the workspace.

Documents are rendered to plain text on open (LaTeX and markdown get a
best-effort conversion, logged when lossy) and then browsed with the same
1-based paging discipline as the terminal viewport. Question-answering
tools hand the rendered text to the chat gateway, which keeps them
fixture-backed and offline in replay mode.
"""

from __future__ import annotations

import logging
import re
from pathlib import Path

from ..errors import PageOutOfRange, ToolFailure, VideoUnsupported
from .terminal import TerminalBuffer
from .workspace import Workspace

logger = logging.getLogger(__name__)

VIDEO_SUFFIXES = {".mp4", ".avi", ".mov", ".mkv", ".webm"}
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".gif", ".bmp", ".svg", ".pdf"}

_LATEX_DROP = re.compile(
    r"\\(documentclass|usepackage|bibliography|bibliographystyle|input|include|label|maketitle|newcommand|renewcommand)\b[^\n]*"
)
_LATEX_SECTION = re.compile(r"\\(sub)*section\*?\{([^}]*)\}")
_LATEX_WRAP = re.compile(r"\\(textbf|textit|emph|texttt|cite[tp]?|ref|eqref)\{([^}]*)\}")
_LATEX_ENV = re.compile(r"\\(begin|end)\{[^}]*\}")


def latex_to_text(source: str) -> str:
    """Flatten LaTeX to readable text; fidelity is best-effort."""
    out: list[str] = []
    for line in source.splitlines():
        line = re.sub(r"(?<!\\)%.*", "", line)
        line = _LATEX_DROP.sub("", line)
        line = _LATEX_SECTION.sub(lambda m: "#" * (1 + (m.group(1) or "").count("sub")) + " " + m.group(2), line)
        line = _LATEX_WRAP.sub(lambda m: m.group(2), line)
        line = _LATEX_ENV.sub("", line)
        out.append(line.rstrip())
    text = "\n".join(out)
    return re.sub(r"\n{3,}", "\n\n", text).strip("\n")


class DocumentBrowser:
    """Holds the currently open document, its viewport, and search state."""

    def __init__(self, workspace: Workspace, page_len: int = 50) -> None:
        self.workspace = workspace
        self.page_len = page_len
        self.buffer: TerminalBuffer | None = None
        self.path: Path | None = None
        self._query: str | None = None
        self._match_line: int = -1

    def open_local_file(self, path: str) -> str:
        host = self.workspace.resolve(path)
        if not host.is_file():
            raise ToolFailure(f"no such document: {path}")
        if host.suffix.lower() in VIDEO_SUFFIXES:
            raise VideoUnsupported(f"video input is not supported: {path}")
        if host.suffix.lower() == ".pdf":
            text = self._pdf_to_text(host)
        else:
            raw = host.read_text(encoding="utf-8", errors="replace")
            text = latex_to_text(raw) if host.suffix.lower() == ".tex" else raw
        self.buffer = TerminalBuffer(text, page_len=self.page_len)
        self.path = host
        self._query = None
        self._match_line = -1
        return self.buffer.render()

    @staticmethod
    def _pdf_to_text(host: Path) -> str:
        import shutil
        import subprocess

        if shutil.which("pdftotext") is None:
            raise ToolFailure(f"no PDF converter available for {host.name}")
        proc = subprocess.run(
            ["pdftotext", str(host), "-"], stdout=subprocess.PIPE, stderr=subprocess.DEVNULL
        )
        if proc.returncode != 0:
            raise ToolFailure(f"PDF conversion failed for {host.name}")
        logger.info("converted %s via pdftotext (best effort)", host.name)
        return proc.stdout.decode("utf-8", errors="replace")

    def _require_open(self) -> TerminalBuffer:
        if self.buffer is None:
            raise ToolFailure("no document is open; call open_local_file first")
        return self.buffer

    def page_down(self) -> str:
        self.buffer = self._require_open().page_down()
        return self.buffer.render()

    def page_up(self) -> str:
        self.buffer = self._require_open().page_up()
        return self.buffer.render()

    def find(self, query: str) -> str:
        """Search the whole document; jump the viewport to the first hit."""
        self._require_open()
        self._query = query
        self._match_line = -1
        return self.find_next()

    def find_next(self) -> str:
        buffer = self._require_open()
        if not self._query:
            raise ToolFailure("no active search; call the search tool with a query first")
        lines = buffer.lines
        needle = self._query.lower()
        for idx in range(self._match_line + 1, len(lines)):
            if needle in lines[idx].lower():
                self._match_line = idx
                page = idx // self.page_len + 1
                self.buffer = buffer.to(page)
                return f'match for "{self._query}" on line {idx + 1}\n' + self.buffer.render()
        return f'no further match for "{self._query}"'

    def whole_text(self) -> str:
        return self._require_open().text

    def to_page(self, index: int) -> str:
        buffer = self._require_open()
        try:
            self.buffer = buffer.to(index)
        except PageOutOfRange:
            raise
        return self.buffer.render()
