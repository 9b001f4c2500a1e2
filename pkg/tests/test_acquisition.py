"""Repo scoring, selection bounds, tie-breaking, and source fetching."""

from __future__ import annotations

import datetime as dt
import json
import tarfile

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autoresearch.acquisition import (
    AgentContext,
    PaperRef,
    RepoCandidate,
    RepoSelection,
    clone_repos,
    component_scores,
    fetch_sources,
    rank_candidates,
    readme_quality_score,
    recency_score,
    score_repo,
    select_repos,
    star_score,
)
from autoresearch.config import RunConfig
from autoresearch.errors import ArchiveCorrupt, BadWeights, InsufficientCandidates
from autoresearch.gateway import CallableProvider, ChatResponse, Gateway, Mode

TODAY = dt.date(2026, 8, 22)
EQUAL = {k: 0.2 for k in ("recency", "stars", "readme_quality", "relevance", "citation_impact")}


def cand(url="https://example.org/org/repo", stars=100, created=TODAY, **kw) -> RepoCandidate:
    fields = dict(readme_quality=0.5, relevance=0.5, citation_impact=0.5)
    fields.update(kw)
    return RepoCandidate(url=url, stars=stars, created_at=created, **fields)


def make_pool(n: int) -> list[RepoCandidate]:
    return [
        cand(url=f"https://example.org/org/repo{i:02d}", stars=10 * (i + 1), relevance=(i % 10) / 10)
        for i in range(n)
    ]


class TestScoring:
    def test_all_ones_scores_one(self):
        c = cand(created=TODAY, readme_quality=1.0, relevance=1.0, citation_impact=1.0, stars=500)
        assert score_repo(c, EQUAL, max_stars=500, now=TODAY) == pytest.approx(1.0)

    def test_all_zeros_scores_zero(self):
        old = TODAY - dt.timedelta(days=3000)
        c = cand(created=old, stars=0, readme_quality=0.0, relevance=0.0, citation_impact=0.0)
        assert score_repo(c, EQUAL, max_stars=100, now=TODAY) == 0.0

    def test_hand_computed_equal_weight_example(self):
        # components (recency, stars, readme, relevance, impact) = (1.0, 0.5, 0.5, 1.0, 0.0)
        c = cand(created=TODAY, stars=99, readme_quality=0.5, relevance=1.0, citation_impact=0.0)
        parts = component_scores(c, max_stars=9999, now=TODAY)
        assert parts["recency"] == pytest.approx(1.0)
        assert parts["stars"] == pytest.approx(0.5)
        assert score_repo(c, EQUAL, max_stars=9999, now=TODAY) == pytest.approx(0.6)

    def test_star_normalization_is_log10(self):
        assert star_score(0, 1000) == 0.0
        assert star_score(1000, 1000) == pytest.approx(1.0)
        assert star_score(99, 9999) == pytest.approx(0.5)

    def test_recency_linear_to_five_years(self):
        assert recency_score(TODAY, TODAY) == pytest.approx(1.0)
        assert recency_score(TODAY - dt.timedelta(days=3000), TODAY) == 0.0
        mid = recency_score(TODAY - dt.timedelta(days=913), TODAY)
        assert 0.4 < mid < 0.6

    def test_bad_weights_rejected(self):
        with pytest.raises(BadWeights):
            score_repo(cand(), {"recency": 1.0}, max_stars=10)
        skewed = dict(EQUAL)
        skewed["stars"] = 0.5
        with pytest.raises(BadWeights):
            score_repo(cand(), skewed, max_stars=10)
        negative = dict(EQUAL)
        negative["stars"] = -0.2
        negative["recency"] = 0.6
        with pytest.raises(BadWeights):
            score_repo(cand(), negative, max_stars=10)

    @given(
        st.integers(min_value=0, max_value=10**6),
        st.floats(min_value=0, max_value=1),
        st.floats(min_value=0, max_value=1),
        st.floats(min_value=0, max_value=1),
        st.integers(min_value=0, max_value=3650),
    )
    @settings(max_examples=100)
    def test_score_always_in_unit_interval(self, stars, readme, rel, impact, age):
        c = cand(
            stars=stars,
            created=TODAY - dt.timedelta(days=age),
            readme_quality=readme,
            relevance=rel,
            citation_impact=impact,
        )
        score = score_repo(c, EQUAL, max_stars=max(stars, 10**6), now=TODAY)
        assert 0.0 <= score <= 1.0


class TestCandidateInvariants:
    def test_negative_stars_rejected(self):
        with pytest.raises(ValueError):
            cand(stars=-1)

    def test_out_of_range_quality_rejected(self):
        with pytest.raises(ValueError):
            cand(readme_quality=1.5)

    def test_selection_bounds(self):
        pool = make_pool(4)
        with pytest.raises(ValueError):
            RepoSelection(tuple(pool), {})
        with pytest.raises(ValueError):
            RepoSelection(tuple(make_pool(9)), {})


class TestSelection:
    def test_fewer_than_five_candidates_fails(self):
        with pytest.raises(InsufficientCandidates):
            select_repos(make_pool(4), AgentContext(now=TODAY))

    def test_prefilter_keeps_top_eight_without_agent(self):
        selection = select_repos(make_pool(12), AgentContext(now=TODAY))
        assert len(selection.chosen) == 8

    def test_agent_keeps_six(self):
        pool = make_pool(12)
        keep = [c.url for c in pool[:6]]
        reply = json.dumps({"keep": keep, "rationales": {keep[0]: "core baseline"}})
        gw = Gateway(CallableProvider(lambda r: ChatResponse.from_text(reply)), mode=Mode.LIVE, sleeper=None)
        selection = select_repos(pool, AgentContext(gateway=gw, now=TODAY))
        assert {c.url for c in selection.chosen} == set(keep)
        assert selection.rationales[keep[0]] == "core baseline"

    def test_agent_overshoot_clamped_to_eight(self):
        pool = make_pool(12)
        keep = [c.url for c in pool[:9]]
        reply = json.dumps({"keep": keep, "rationales": {}})
        gw = Gateway(CallableProvider(lambda r: ChatResponse.from_text(reply)), mode=Mode.LIVE, sleeper=None)
        selection = select_repos(pool, AgentContext(gateway=gw, now=TODAY))
        assert len(selection.chosen) == 8

    def test_agent_undershoot_padded_to_five(self):
        pool = make_pool(10)
        keep = [pool[0].url, pool[1].url]
        reply = json.dumps({"keep": keep})
        gw = Gateway(CallableProvider(lambda r: ChatResponse.from_text(reply)), mode=Mode.LIVE, sleeper=None)
        selection = select_repos(pool, AgentContext(gateway=gw, now=TODAY))
        assert len(selection.chosen) >= 5
        assert {pool[0].url, pool[1].url} <= {c.url for c in selection.chosen}

    def test_garbage_agent_reply_falls_back_to_prefilter(self):
        pool = make_pool(7)
        gw = Gateway(CallableProvider(lambda r: ChatResponse.from_text("not json")), mode=Mode.LIVE, sleeper=None)
        selection = select_repos(pool, AgentContext(gateway=gw, now=TODAY))
        assert 5 <= len(selection.chosen) <= 8

    def test_every_chosen_repo_has_a_rationale(self):
        selection = select_repos(make_pool(9), AgentContext(now=TODAY))
        assert set(selection.rationales) == {c.url for c in selection.chosen}

    def test_tie_break_total_order(self):
        base = dict(stars=100, created_at=TODAY, readme_quality=0.5, relevance=0.5, citation_impact=0.5)
        twins = [
            RepoCandidate(url=f"https://example.org/z/{name}", **base)
            for name in ("beta", "alpha")
        ]
        ranked = rank_candidates(twins, AgentContext(now=TODAY))
        assert ranked[0][0].url.endswith("alpha")

    def test_stars_break_score_ties_before_url(self):
        # identical component scores except star count
        a = cand(url="https://example.org/a", stars=50, readme_quality=0.0, relevance=0.0, citation_impact=0.0)
        b = cand(url="https://example.org/b", stars=500, readme_quality=0.0, relevance=0.0, citation_impact=0.0)
        ranked = rank_candidates([a, b], AgentContext(now=TODAY))
        assert ranked[0][0].stars == 500

    @given(st.integers(min_value=5, max_value=20), st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=50)
    def test_selection_cardinality_always_in_bounds(self, n, seed):
        import random

        rng = random.Random(seed)
        pool = [
            cand(
                url=f"https://example.org/r/{i}",
                stars=rng.randrange(0, 5000),
                created=TODAY - dt.timedelta(days=rng.randrange(0, 2500)),
                relevance=rng.random(),
            )
            for i in range(n)
        ]
        selection = select_repos(pool, AgentContext(now=TODAY))
        assert 5 <= len(selection.chosen) <= 8


class TestSources:
    def test_fixture_dir_resolves_bundle(self, tmp_path):
        fixtures = tmp_path / "fixtures"
        (fixtures / "sources" / "2401.00001").mkdir(parents=True)
        (fixtures / "sources" / "2401.00001" / "main.tex").write_text("\\section{A}")
        refs = [PaperRef("Known paper", "2401.00001")]
        out = fetch_sources(refs, workspace_root=tmp_path / "ws", fixtures_dir=fixtures)
        assert out[0].resolved
        assert (tmp_path / "ws" / "sources" / "2401.00001" / "main.tex").is_file()

    def test_unresolvable_is_non_fatal(self, tmp_path):
        fixtures = tmp_path / "fixtures"
        (fixtures / "sources").mkdir(parents=True)
        refs = [PaperRef("Ghost paper", "9999.99999"), PaperRef("No id at all")]
        out = fetch_sources(refs, workspace_root=tmp_path / "ws", fixtures_dir=fixtures)
        assert len(out) == 2
        assert not out[0].resolved and not out[1].resolved

    def test_tarball_bundle_unpacks(self, tmp_path):
        fixtures = tmp_path / "fixtures" / "sources"
        fixtures.mkdir(parents=True)
        payload = tmp_path / "payload"
        payload.mkdir()
        (payload / "main.tex").write_text("x")
        with tarfile.open(fixtures / "2402.00002.tar.gz", "w:gz") as tar:
            tar.add(payload / "main.tex", arcname="main.tex")
        refs = [PaperRef("Tarred paper", "2402.00002")]
        out = fetch_sources(refs, workspace_root=tmp_path / "ws", fixtures_dir=tmp_path / "fixtures")
        assert out[0].resolved

    def test_corrupt_archive_raises(self, tmp_path):
        fixtures = tmp_path / "fixtures" / "sources"
        fixtures.mkdir(parents=True)
        (fixtures / "2403.00003.tar.gz").write_bytes(b"this is not a tarball")
        refs = [PaperRef("Broken paper", "2403.00003")]
        with pytest.raises(ArchiveCorrupt):
            fetch_sources(refs, workspace_root=tmp_path / "ws", fixtures_dir=tmp_path / "fixtures")

    def test_clone_repos_copies_fixtures(self, tmp_path):
        fixtures = tmp_path / "fixtures"
        (fixtures / "repos" / "repo00").mkdir(parents=True)
        (fixtures / "repos" / "repo00" / "train.py").write_text("pass")
        pool = make_pool(5)
        selection = select_repos(pool, AgentContext(now=TODAY))
        placed = clone_repos(selection, workspace_root=tmp_path / "ws", fixtures_dir=fixtures)
        cloned = tmp_path / "ws" / "repo00"
        if pool[0].url in placed:
            assert cloned.is_dir()


class TestReadmeRubric:
    def test_score_parsed_and_clamped(self):
        gw = Gateway(CallableProvider(lambda r: ChatResponse.from_text("0.85")), mode=Mode.LIVE, sleeper=None)
        assert readme_quality_score(gw, "Install with pip.") == pytest.approx(0.85)
        gw2 = Gateway(CallableProvider(lambda r: ChatResponse.from_text("score: 7")), mode=Mode.LIVE, sleeper=None)
        assert readme_quality_score(gw2, "x") == 1.0

    def test_unparsable_reply_scores_zero(self):
        gw = Gateway(CallableProvider(lambda r: ChatResponse.from_text("no idea")), mode=Mode.LIVE, sleeper=None)
        assert readme_quality_score(gw, "x") == 0.0
