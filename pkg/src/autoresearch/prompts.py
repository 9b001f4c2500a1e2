"""Editable text assets: writing templates, checklist, reviewer guidelines.

Steering text ships as plain files under ``assets/`` so it can be tuned
without touching code. Every loader falls back to its in-module default when
the file is absent, keeping the package importable from a bare checkout.
Placeholders use ``<<name>>`` markers; single braces would collide with both
LaTeX and JSON content.
"""

from __future__ import annotations

import re
from pathlib import Path

from .writing import Checklist, DEFAULT_CHECKLIST, DEFAULT_TEMPLATE

ASSETS_DIRNAME = "assets"
TEMPLATES_DIRNAME = "templates"

_MARKER = re.compile(r"<<([a-z][a-z0-9_]*)>>")


def assets_root(override: str | Path | None = None) -> Path:
    """The assets directory: an explicit override, else ``assets/`` at repo root."""
    if override is not None:
        return Path(override)
    return Path(__file__).resolve().parents[2] / ASSETS_DIRNAME


def load_asset(relpath: str, assets_dir: str | Path | None = None) -> str | None:
    path = assets_root(assets_dir) / relpath
    if not path.is_file():
        return None
    return path.read_text(encoding="utf-8")


def render(template: str, **values: str) -> str:
    """Substitute every ``<<name>>`` marker; leftovers are an error, not noise."""
    out = template
    for name, value in values.items():
        out = out.replace(f"<<{name}>>", value)
    leftover = _MARKER.search(out)
    if leftover:
        raise ValueError(f"unresolved template marker <<{leftover.group(1)}>>")
    return out


def writing_template(assets_dir: str | Path | None = None) -> str:
    text = load_asset(f"{TEMPLATES_DIRNAME}/subsection_style.txt", assets_dir)
    return text.strip() if text else DEFAULT_TEMPLATE


def revision_checklist(assets_dir: str | Path | None = None) -> Checklist:
    text = load_asset(f"{TEMPLATES_DIRNAME}/revision_checklist.txt", assets_dir)
    if not text:
        return DEFAULT_CHECKLIST
    items = tuple(line.strip() for line in text.splitlines() if line.strip())
    return Checklist(items) if items else DEFAULT_CHECKLIST


def review_guidelines(assets_dir: str | Path | None = None) -> str:
    return load_asset("guidelines_iclr.md", assets_dir) or ""
