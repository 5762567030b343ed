"""
Tests for layered run configuration.
"""
import json

import pytest

from app.config import ConfigError, RunConfig, load_config, read_config_file, read_environment
from app.tactics import DEFAULT_FUEL


def write_config(tmp_path, data):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


class TestDefaults:
    """Test cases for built-in values."""

    def test_defaults(self):
        config = load_config(environ={})
        assert config == RunConfig()
        assert config.budget == 50
        assert config.fuel == DEFAULT_FUEL
        assert config.max_args == 5
        assert config.lr == 5e-5
        assert config.gamma == 0.99

    def test_derived_configs(self):
        config = RunConfig(budget=7, max_args=2, dim=4, lr=1e-3, seed=9)
        assert config.episode.budget == 7
        assert config.episode.max_args == 2
        assert config.policy.dim == 4
        assert config.learner.learning_rate == 1e-3
        assert config.learner.seed == 9
        assert config.learner.episode == config.episode

    @pytest.mark.parametrize("field, value", [
        ("budget", 0), ("fuel", 0), ("gamma", 1.5), ("lr", 0.0), ("dim", 0),
        ("workers", 0), ("train_ratio", 1.0), ("checkpoint_every", 0),
    ])
    def test_validation(self, field, value):
        with pytest.raises(ConfigError):
            RunConfig(**{field: value})


class TestLayers:
    """Test cases for file, environment and override precedence."""

    def test_file_values(self, tmp_path):
        path = write_config(tmp_path, {"budget": 20, "baseline": True, "corpus": "data.jsonl"})
        config = load_config(path, environ={})
        assert (config.budget, config.baseline, config.corpus) == (20, True, "data.jsonl")

    def test_environment_beats_file(self, tmp_path):
        path = write_config(tmp_path, {"budget": 20})
        config = load_config(path, environ={"FRINGE_PROVER_BUDGET": "30"})
        assert config.budget == 30

    def test_overrides_beat_environment(self, tmp_path):
        path = write_config(tmp_path, {"budget": 20})
        config = load_config(path, {"budget": 40}, environ={"FRINGE_PROVER_BUDGET": "30"})
        assert config.budget == 40

    def test_none_overrides_are_ignored(self):
        config = load_config(overrides={"budget": None, "seed": 3}, environ={"FRINGE_PROVER_BUDGET": "30"})
        assert (config.budget, config.seed) == (30, 3)

    def test_dotenv_file(self, tmp_path, monkeypatch, clean_environment):
        (tmp_path / ".env").write_text("FRINGE_PROVER_ITERATIONS=12\n", encoding="utf-8")
        monkeypatch.chdir(tmp_path)
        assert load_config().iterations == 12

    def test_unknown_override(self):
        with pytest.raises(ConfigError):
            load_config(overrides={"colour": "red"}, environ={})

    def test_invalid_merged_value(self):
        with pytest.raises(ConfigError):
            load_config(environ={"FRINGE_PROVER_WORKERS": "0"})


class TestCoercion:
    """Test cases for typed values from text sources."""

    def test_environment_types(self):
        values = read_environment({
            "FRINGE_PROVER_GAMMA": "0.9",
            "FRINGE_PROVER_SEED": "4",
            "FRINGE_PROVER_RECORD_WALLCLOCK": "yes",
            "FRINGE_PROVER_CHECKPOINT": "run.npz",
            "OTHER": "ignored",
        })
        assert values == {"gamma": 0.9, "seed": 4, "record_wallclock": True, "checkpoint": "run.npz"}

    def test_bad_boolean(self):
        with pytest.raises(ConfigError) as exc_info:
            read_environment({"FRINGE_PROVER_BASELINE": "maybe"})
        assert "FRINGE_PROVER_BASELINE" in str(exc_info.value)

    def test_bad_integer(self):
        with pytest.raises(ConfigError):
            read_environment({"FRINGE_PROVER_BUDGET": "many"})

    def test_fractional_integer(self, tmp_path):
        with pytest.raises(ConfigError):
            read_config_file(write_config(tmp_path, {"budget": 2.5}))


class TestConfigFile:
    """Test cases for reading JSON configuration files."""

    def test_unknown_keys(self, tmp_path):
        with pytest.raises(ConfigError) as exc_info:
            read_config_file(write_config(tmp_path, {"budget": 5, "colour": "red"}))
        assert "colour" in str(exc_info.value)

    def test_not_an_object(self, tmp_path):
        with pytest.raises(ConfigError):
            read_config_file(write_config(tmp_path, [1, 2]))

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{budget: 5", encoding="utf-8")
        with pytest.raises(ConfigError):
            read_config_file(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            read_config_file(tmp_path / "absent.json")
