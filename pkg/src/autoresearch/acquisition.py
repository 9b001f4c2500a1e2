"""Repository discovery, scoring, selection, and source fetching.

The deterministic substrate under the acquisition agent: candidates are
ranked by a weighted criterion score with a total tie-break order, the
agent may confirm or edit the shortlist through the gateway, and the
final selection cardinality is enforced no matter what the agent says.
Source bundles and repository snapshots come from fixture directories in
offline runs, so the whole stage is replayable without network access.
"""

from __future__ import annotations

import datetime as dt
import json
import logging
import math
import re
import shutil
import tarfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .config import RunConfig
from .errors import ArchiveCorrupt, BadWeights, InsufficientCandidates, SourceUnavailable
from .gateway import Gateway, chat_request

logger = logging.getLogger(__name__)

CRITERIA = ("recency", "stars", "readme_quality", "relevance", "citation_impact")
RECENCY_HORIZON_DAYS = 5 * 365.25


@dataclass(frozen=True)
class PaperRef:
    title: str
    external_id: str = ""
    source_path: str | None = None

    def __post_init__(self) -> None:
        if not self.title.strip():
            raise ValueError("paper title must be non-empty")

    @property
    def resolved(self) -> bool:
        return self.source_path is not None


@dataclass(frozen=True)
class RepoCandidate:
    url: str
    stars: int
    created_at: dt.date
    readme_quality: float
    relevance: float
    citation_impact: float

    def __post_init__(self) -> None:
        if self.stars < 0:
            raise ValueError("stars must be non-negative")
        for name in ("readme_quality", "relevance", "citation_impact"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")

    @property
    def name(self) -> str:
        return self.url.rstrip("/").rsplit("/", 1)[-1]


@dataclass(frozen=True)
class RepoSelection:
    chosen: tuple[RepoCandidate, ...]
    rationales: Mapping[str, str]  # url -> why it was kept

    def __post_init__(self) -> None:
        if not 5 <= len(self.chosen) <= 8:
            raise ValueError(f"selection must keep 5-8 repositories, got {len(self.chosen)}")


def recency_score(created_at: dt.date, now: dt.date | None = None) -> float:
    """1.0 for a brand-new repo, linearly down to 0.0 at five years old."""
    now = now or dt.date.today()
    age_days = max(0, (now - created_at).days)
    return max(0.0, 1.0 - age_days / RECENCY_HORIZON_DAYS)


def star_score(stars: int, max_stars: int) -> float:
    # log-normalized against the pool: raw star counts are heavy-tailed
    if max_stars <= 0:
        return 0.0
    return math.log10(1 + stars) / math.log10(1 + max_stars)


def component_scores(
    candidate: RepoCandidate, *, max_stars: int, now: dt.date | None = None
) -> dict[str, float]:
    return {
        "recency": recency_score(candidate.created_at, now),
        "stars": star_score(candidate.stars, max_stars),
        "readme_quality": candidate.readme_quality,
        "relevance": candidate.relevance,
        "citation_impact": candidate.citation_impact,
    }


def check_weights(weights: Mapping[str, float]) -> None:
    if set(weights) != set(CRITERIA):
        raise BadWeights(f"weights must cover exactly {sorted(CRITERIA)}")
    if any(w < 0 for w in weights.values()):
        raise BadWeights("weights must be non-negative")
    if abs(sum(weights.values()) - 1.0) > 1e-9:
        raise BadWeights(f"weights must sum to 1, got {sum(weights.values())}")


def score_repo(
    candidate: RepoCandidate,
    weights: Mapping[str, float],
    *,
    max_stars: int,
    now: dt.date | None = None,
) -> float:
    check_weights(weights)
    components = component_scores(candidate, max_stars=max_stars, now=now)
    return sum(weights[name] * components[name] for name in CRITERIA)


@dataclass
class AgentContext:
    """What repo selection needs from its surroundings."""

    gateway: Gateway | None = None
    config: RunConfig = field(default_factory=RunConfig)
    now: dt.date | None = None
    topic: str = ""


def rank_candidates(
    candidates: Sequence[RepoCandidate], ctx: AgentContext
) -> list[tuple[RepoCandidate, float]]:
    """Total order: score desc, then stars desc, created_at desc, url lex."""
    max_stars = max((c.stars for c in candidates), default=0)
    scored = [
        (c, score_repo(c, ctx.config.criterion_weights, max_stars=max_stars, now=ctx.now))
        for c in candidates
    ]
    scored.sort(key=lambda pair: (-pair[1], -pair[0].stars, -pair[0].created_at.toordinal(), pair[0].url))
    return scored


def _selection_prompt(ranked: Sequence[tuple[RepoCandidate, float]], ctx: AgentContext) -> str:
    lines = [
        "Candidate repositories, best first:",
    ]
    for pos, (c, score) in enumerate(ranked, start=1):
        lines.append(
            f"{pos}. {c.url} stars={c.stars} created={c.created_at.isoformat()} score={score:.3f}"
        )
    lines.append("")
    lines.append(
        "Choose 5-8 repositories you really need"
        + (f" for: {ctx.topic}" if ctx.topic else "")
        + ". Reply with JSON only: "
        '{"keep": ["<url>", ...], "rationales": {"<url>": "<why>", ...}}'
    )
    return "\n".join(lines)


def _parse_keep(text: str, known: set[str]) -> tuple[list[str], dict[str, str]] | None:
    match = re.search(r"\{.*\}", text, re.DOTALL)
    if not match:
        return None
    try:
        data = json.loads(match.group(0))
        keep = [url for url in data["keep"] if url in known]
    except (json.JSONDecodeError, KeyError, TypeError):
        return None
    seen: list[str] = []
    for url in keep:
        if url not in seen:
            seen.append(url)
    return seen, dict(data.get("rationales", {}))


def select_repos(candidates: Sequence[RepoCandidate], ctx: AgentContext) -> RepoSelection:
    """Prefilter, optional agent confirmation, hard cardinality enforcement."""
    if len(candidates) < ctx.config.min_repos:
        raise InsufficientCandidates(
            f"need at least {ctx.config.min_repos} candidates, got {len(candidates)}"
        )
    ranked = rank_candidates(candidates, ctx)
    by_url = {c.url: c for c in candidates}
    default_keep = [c.url for c, _ in ranked[: ctx.config.max_repos]]

    keep = default_keep
    rationales: dict[str, str] = {}
    if ctx.gateway is not None:
        parsed = _confirm_with_agent(ctx, ranked)
        if parsed is not None:
            keep, rationales = parsed

    # enforce [min, max] regardless of agent output
    keep = keep[: ctx.config.max_repos]
    for url in default_keep:
        if len(keep) >= ctx.config.min_repos:
            break
        if url not in keep:
            keep.append(url)

    score_of = dict((c.url, s) for c, s in ranked)
    chosen = tuple(by_url[url] for url in keep)
    final_rationales = {
        url: rationales.get(url, f"ranked by criterion score {score_of[url]:.3f}")
        for url in keep
    }
    return RepoSelection(chosen=chosen, rationales=final_rationales)


def _confirm_with_agent(
    ctx: AgentContext, ranked: Sequence[tuple[RepoCandidate, float]]
) -> tuple[list[str], dict[str, str]] | None:
    """Ask the agent once; re-prompt once on malformed or out-of-bounds output."""
    assert ctx.gateway is not None
    known = {c.url for c, _ in ranked}
    system = (
        "You are a knowledge acquisition assistant. You pick which of the "
        "candidate repositories to keep for the project, within the stated bounds."
    )
    prompt = _selection_prompt(ranked, ctx)
    lo, hi = ctx.config.min_repos, ctx.config.max_repos
    for round_no in range(2):
        response = ctx.gateway.complete(chat_request(system, prompt, agent="acquisition"))
        parsed = _parse_keep(response.text or "", known)
        if parsed is not None and lo <= len(parsed[0]) <= hi:
            return parsed
        if parsed is not None and round_no == 1:
            return parsed  # bounds get clamped by the caller
        prompt = (
            f"Your previous reply was invalid or kept an out-of-range number of "
            f"repositories. Keep between {lo} and {hi}. "
            + _selection_prompt(ranked, ctx)
        )
    return None


# --- source bundles -------------------------------------------------------


def fetch_sources(
    refs: Sequence[PaperRef],
    *,
    workspace_root: str | Path,
    fixtures_dir: str | Path | None = None,
) -> list[PaperRef]:
    """Resolve each reference to an unpacked source bundle where possible.

    Resolution failures are per-item and non-fatal: the ref comes back with
    no source path and the failure is logged. Corrupt archives are a hard
    error because they indicate a broken fixture, not a missing one.
    """
    workspace_root = Path(workspace_root)
    out_dir = workspace_root / "sources"
    out_dir.mkdir(parents=True, exist_ok=True)
    resolved: list[PaperRef] = []
    for ref in refs:
        try:
            bundle = _resolve_bundle(ref, out_dir, fixtures_dir)
        except SourceUnavailable as exc:
            logger.warning("source unavailable for %s: %s", ref.external_id or ref.title, exc)
            resolved.append(ref)
            continue
        resolved.append(PaperRef(ref.title, ref.external_id, str(bundle)))
    return resolved


def _resolve_bundle(
    ref: PaperRef, out_dir: Path, fixtures_dir: str | Path | None
) -> Path:
    if ref.source_path and Path(ref.source_path).exists():
        return Path(ref.source_path)
    if not ref.external_id:
        raise SourceUnavailable("no external id to resolve")
    if fixtures_dir is None:
        raise SourceUnavailable("no fixture directory and live fetching is disabled")
    fixtures_dir = Path(fixtures_dir)
    bundle_dir = fixtures_dir / "sources" / ref.external_id
    target = out_dir / ref.external_id
    if bundle_dir.is_dir():
        if not target.exists():
            shutil.copytree(bundle_dir, target)
        return target
    archive = fixtures_dir / "sources" / f"{ref.external_id}.tar.gz"
    if archive.is_file():
        try:
            with tarfile.open(archive, "r:gz") as tar:
                _safe_extract(tar, target)
        except (tarfile.TarError, OSError, EOFError) as exc:
            raise ArchiveCorrupt(f"cannot unpack {archive.name}: {exc}") from exc
        return target
    raise SourceUnavailable(f"no bundle for id {ref.external_id}")


def _safe_extract(tar: tarfile.TarFile, target: Path) -> None:
    target.mkdir(parents=True, exist_ok=True)
    base = target.resolve()
    for member in tar.getmembers():
        dest = (target / member.name).resolve()
        if dest != base and base not in dest.parents:
            raise ArchiveCorrupt(f"archive entry escapes target dir: {member.name}")
    tar.extractall(target)


def clone_repos(
    selection: RepoSelection,
    *,
    workspace_root: str | Path,
    fixtures_dir: str | Path | None = None,
) -> dict[str, Path]:
    """Place each chosen repo under the workspace root; fixture copies first."""
    workspace_root = Path(workspace_root)
    placed: dict[str, Path] = {}
    for candidate in selection.chosen:
        target = workspace_root / candidate.name
        if target.exists():
            placed[candidate.url] = target
            continue
        fixture = Path(fixtures_dir) / "repos" / candidate.name if fixtures_dir else None
        if fixture is not None and fixture.is_dir():
            shutil.copytree(fixture, target)
            placed[candidate.url] = target
        else:
            logger.warning("no local snapshot for %s; skipping clone", candidate.url)
    return placed


def readme_quality_score(gateway: Gateway, readme_text: str) -> float:
    """Rubric score in [0,1] from the gateway; clamped, never heuristic."""
    request = chat_request(
        "You grade README documentation quality. Consider setup instructions, "
        "usage examples, and stated requirements. Reply with one number "
        "between 0 and 1.",
        readme_text[:8000],
        agent="readme-rubric",
    )
    response = gateway.complete(request)
    match = re.search(r"\d+(?:\.\d+)?", response.text or "")
    if not match:
        return 0.0
    return min(1.0, max(0.0, float(match.group(0))))


def load_candidates(path: str | Path) -> list[RepoCandidate]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return [
        RepoCandidate(
            url=item["url"],
            stars=int(item["stars"]),
            created_at=dt.date.fromisoformat(item["created_at"]),
            readme_quality=float(item["readme_quality"]),
            relevance=float(item["relevance"]),
            citation_impact=float(item["citation_impact"]),
        )
        for item in data
    ]
