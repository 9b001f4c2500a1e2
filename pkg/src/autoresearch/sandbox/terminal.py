"""Immutable paged view over captured terminal output.

Long command output is never handed to an agent whole. It is captured once
into a :class:`TerminalBuffer` and browsed page by page, with 1-based page
indices and a cursor that clamps at both ends for relative moves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from ..errors import PageOutOfRange


@dataclass(frozen=True)
class TerminalBuffer:
    text: str
    page_len: int = 50
    cursor: int = 1

    def __post_init__(self) -> None:
        if self.page_len < 1:
            raise ValueError("page_len must be at least 1")
        if not 1 <= self.cursor <= self.page_count:
            raise ValueError(f"cursor {self.cursor} outside 1..{self.page_count}")

    @property
    def lines(self) -> list[str]:
        return self.text.splitlines()

    @property
    def page_count(self) -> int:
        return max(1, math.ceil(len(self.text.splitlines()) / self.page_len))

    def page_lines(self, index: int) -> list[str]:
        if not 1 <= index <= self.page_count:
            raise PageOutOfRange(f"page {index} outside 1..{self.page_count}")
        start = (index - 1) * self.page_len
        return self.lines[start : start + self.page_len]

    def render(self) -> str:
        header = f"[page {self.cursor} of {self.page_count}]"
        body = "\n".join(self.page_lines(self.cursor))
        return f"{header}\n{body}" if body else header

    # relative moves clamp; absolute moves range-check
    def page_down(self) -> "TerminalBuffer":
        return replace(self, cursor=min(self.cursor + 1, self.page_count))

    def page_up(self) -> "TerminalBuffer":
        return replace(self, cursor=max(self.cursor - 1, 1))

    def to(self, index: int) -> "TerminalBuffer":
        if not 1 <= index <= self.page_count:
            raise PageOutOfRange(f"page {index} outside 1..{self.page_count}")
        return replace(self, cursor=index)


def viewport(buffer: TerminalBuffer, move: str | int) -> tuple[TerminalBuffer, str]:
    """Apply one viewport move and return (new buffer, rendered page).

    ``move`` is ``"down"``, ``"up"``, or a 1-based absolute page index.
    """
    if move == "down":
        moved = buffer.page_down()
    elif move == "up":
        moved = buffer.page_up()
    elif isinstance(move, int) and not isinstance(move, bool):
        moved = buffer.to(move)
    else:
        raise ValueError(f"unknown viewport move: {move!r}")
    return moved, moved.render()
