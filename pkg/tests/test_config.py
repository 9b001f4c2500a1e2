"""Run configuration: defaults, layering precedence, content hashing."""

from __future__ import annotations

import dataclasses

import pytest

from autoresearch.config import RunConfig, load_config


class TestDefaults:
    def test_core_defaults(self):
        cfg = RunConfig()
        assert cfg.max_attempts == 3
        assert cfg.page_len == 50
        assert cfg.tool_call_budget == 200
        assert cfg.retry_limit == 3
        assert cfg.code_temperature == 0.2
        assert cfg.review_temperature == 1.0
        assert cfg.min_repos == 5 and cfg.max_repos == 8
        assert cfg.retrieval_top_k == 6
        assert cfg.prototype_max_epochs == 2
        assert cfg.prototype_subset_fraction == 0.1
        assert cfg.structure_iterations == 2
        assert cfg.revision_passes == 2
        assert len(cfg.panel_judges) == 5
        assert cfg.assessments_per_judge == 16

    def test_criterion_weights_are_equal_and_sum_to_one(self):
        weights = RunConfig().criterion_weights
        assert set(weights) == {
            "recency",
            "stars",
            "readme_quality",
            "relevance",
            "citation_impact",
        }
        assert all(w == pytest.approx(0.2) for w in weights.values())
        assert sum(weights.values()) == pytest.approx(1.0)

    def test_config_is_frozen(self):
        with pytest.raises(dataclasses.FrozenInstanceError):
            RunConfig().seed = 9  # type: ignore[misc]


class TestLayering:
    def test_file_overrides_defaults(self, tmp_path):
        path = tmp_path / "researcher.toml"
        path.write_text("seed = 7\nmax_attempts = 5\n")
        cfg = load_config(path, env={})
        assert cfg.seed == 7
        assert cfg.max_attempts == 5
        assert cfg.page_len == 50

    def test_env_overrides_file(self, tmp_path):
        path = tmp_path / "researcher.toml"
        path.write_text("seed = 7\n")
        cfg = load_config(path, env={"RESEARCHER_SEED": "11"})
        assert cfg.seed == 11

    def test_flags_override_env(self, tmp_path):
        path = tmp_path / "researcher.toml"
        path.write_text("seed = 7\n")
        cfg = load_config(path, env={"RESEARCHER_SEED": "11"}, overrides={"seed": 13})
        assert cfg.seed == 13

    def test_env_parses_floats_and_bools(self):
        cfg = load_config(
            None,
            env={
                "RESEARCHER_CODE_TEMPERATURE": "0.7",
                "RESEARCHER_PROTOTYPE_SUBSET_FRACTION": "0.25",
            },
        )
        assert cfg.code_temperature == pytest.approx(0.7)
        assert cfg.prototype_subset_fraction == pytest.approx(0.25)

    def test_unknown_file_key_rejected(self, tmp_path):
        path = tmp_path / "researcher.toml"
        path.write_text("does_not_exist = 1\n")
        with pytest.raises(ValueError, match="does_not_exist"):
            load_config(path, env={})

    def test_container_table_is_nested(self, tmp_path):
        path = tmp_path / "researcher.toml"
        path.write_text("[container]\nruntime = 'docker'\nmemory_limit_mb = 1024\n")
        cfg = load_config(path, env={})
        assert cfg.container.runtime == "docker"
        assert cfg.container.memory_limit_mb == 1024


class TestContentHash:
    def test_hash_is_stable_for_equal_configs(self):
        assert RunConfig().content_hash() == RunConfig().content_hash()

    def test_hash_changes_with_any_field(self):
        assert RunConfig().content_hash() != RunConfig(seed=1).content_hash()

    def test_hash_ignores_local_asset_paths(self):
        a = RunConfig(assets_dir=None)
        b = RunConfig(assets_dir="/somewhere/else/assets")
        assert a.content_hash() == b.content_hash()
