"""Tests for configuration models and YAML loading."""

import pytest

from dgcca.config import RunConfig, SelectionConfig, StudyConfig, build, load_yaml
from dgcca.errors import ConfigError


class TestSelectionConfig:
    def test_defaults(self):
        config = SelectionConfig()
        assert config.alpha == 0.05
        assert config.bootstrap == 2000

    def test_stage_levels_fall_back_to_alpha(self):
        config = SelectionConfig(alpha=0.1, alpha_map={"sign": 0.01})
        assert config.level("sign") == 0.01
        assert config.level("L") == 0.1

    @pytest.mark.parametrize(
        "data",
        [
            {"alpha": 0.0},
            {"alpha": 1.0},
            {"alpha_map": {"sign": 1.5}},
            {"alpha_map": {"bogus": 0.1}},
            {"bootstrap": 0},
            {"unknown": 1},
        ],
    )
    def test_invalid(self, data):
        with pytest.raises(ConfigError):
            build(SelectionConfig, data)

    def test_frozen_copy(self):
        config = SelectionConfig(seed=1)
        assert config.model_copy(update={"seed": 2}).seed == 2
        assert config.seed == 1


class TestStudyConfig:
    def test_nested_selection(self):
        study = build(StudyConfig, {"reps": 5, "selection": {"alpha": 0.1, "seed": 4}})
        assert study.selection.alpha == 0.1
        assert study.selection.seed == 4
        assert study.use_true_params

    def test_reps_positive(self):
        with pytest.raises(ConfigError):
            build(StudyConfig, {"reps": 0})


class TestRunConfig:
    def test_selection_carries_flags(self):
        run = RunConfig(subcommand="decompose", alpha=0.1, bootstrap=300, threads=2)
        selection = run.selection(seed=42)
        assert (selection.alpha, selection.bootstrap, selection.seed, selection.threads) == (0.1, 300, 42, 2)

    def test_output_dir_required(self):
        with pytest.raises(ConfigError):
            RunConfig(subcommand="decompose").ensure_output_dir()

    def test_output_dir_created(self, tmp_path):
        out = tmp_path / "nested" / "out"
        assert RunConfig(subcommand="simulate", out=out).ensure_output_dir() == out
        assert out.is_dir()

    def test_output_path_is_a_file(self, tmp_path):
        target = tmp_path / "taken"
        target.write_text("x")
        with pytest.raises(ConfigError):
            RunConfig(subcommand="decompose", out=target).ensure_output_dir()

    def test_unknown_format(self):
        with pytest.raises(ConfigError):
            build(RunConfig, {"subcommand": "decompose", "format": "xlsx"})


class TestLoadYaml:
    def test_sections(self, tmp_path):
        path = tmp_path / "dgcca.yaml"
        path.write_text("decompose:\n  alpha: 0.1\n  ranks: [1, 2]\nsimulate:\n  reps: 10\n")
        data = load_yaml(path)
        assert data["decompose"] == {"alpha": 0.1, "ranks": [1, 2]}
        assert data["simulate"]["reps"] == 10

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.yaml"
        path.write_text("")
        assert load_yaml(path) == {}

    def test_not_a_mapping(self, tmp_path):
        path = tmp_path / "list.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigError):
            load_yaml(path)

    def test_missing(self, tmp_path):
        with pytest.raises(ConfigError):
            load_yaml(tmp_path / "absent.yaml")
