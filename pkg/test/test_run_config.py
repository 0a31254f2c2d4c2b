"""
Tests for run configuration parsing and precedence.
"""

import argparse
import tempfile
from pathlib import Path

import pytest

from sindeblur.errors import ConfigError
from sindeblur.run_config import ECHO_FILE, RunConfig, parse_config_text


def _write(directory: str, text: str) -> Path:
    path = Path(directory) / "run.conf"
    path.write_text(text)
    return path


class TestParseConfigText:
    """Tests for the key = value format."""

    def test_types_comments_and_blank_lines(self) -> None:
        """Test value types, comments and blank lines in config text."""
        values = parse_config_text(
            "# pyramid\n"
            "scale_factor_r = 0.8\n"
            "\n"
            "min_size = 30   # floor\n"
            "warm_start = off\n"
            "train_image = images/balloons.png\n"
        )
        assert values == {
            "scale_factor_r": 0.8,
            "min_size": 30,
            "warm_start": False,
            "train_image": "images/balloons.png",
        }

    def test_unknown_key_rejected(self) -> None:
        """Test that an unknown key is rejected."""
        with pytest.raises(ConfigError, match="bogus"):
            parse_config_text("bogus = 1")

    def test_missing_equals_rejected(self) -> None:
        """Test that a line without '=' is rejected."""
        with pytest.raises(ConfigError, match="Line 2"):
            parse_config_text("seed = 1\nmin_size 30\n")

    @pytest.mark.parametrize("line", ["min_size = big", "warm_start = maybe", "seed = 1.5"])
    def test_bad_values_rejected(self, line: str) -> None:
        """Test that values of the wrong type are rejected."""
        with pytest.raises(ConfigError):
            parse_config_text(line)


class TestResolve:
    """Tests for defaults, file, environment and flag precedence."""

    def test_defaults(self) -> None:
        """Test the default settings."""
        config = RunConfig.resolve(environ={})
        assert config.scale_factor_r == 0.75
        assert config.min_size == 25
        assert config.max_size == 250
        assert config.rec_weight_alpha == 10.0
        assert config.gp_weight_lambda == 0.1
        assert config.learning_rate == 5e-4
        assert config.iters_per_scale == 2000
        assert config.warm_start is False
        assert config.train_config().warm_start is False

    def test_precedence(self) -> None:
        """Test that flags beat environment variables, which beat the file."""
        with tempfile.TemporaryDirectory() as tmp:
            path = _write(tmp, "seed = 1\nmin_size = 30\nmax_size = 200\n")
            config = RunConfig.resolve(
                path,
                environ={"SIN_DEBLUR_SEED": "2", "SIN_DEBLUR_MIN_SIZE": "40", "HOME": "/root"},
                overrides={"seed": 3, "k_iterations": None},
            )
        assert config.seed == 3
        assert config.min_size == 40
        assert config.max_size == 200
        assert config.k_iterations == 3

    def test_unknown_environment_key_rejected(self) -> None:
        """Test that an unknown environment key is rejected."""
        with pytest.raises(ConfigError, match="SIN_DEBLUR_COLOUR"):
            RunConfig.resolve(environ={"SIN_DEBLUR_COLOUR": "red"})

    def test_unknown_override_rejected(self) -> None:
        """Test that an unknown override is rejected."""
        with pytest.raises(ConfigError):
            RunConfig.resolve(environ={}, overrides={"colour": "red"})

    def test_missing_file_rejected(self) -> None:
        """Test that a missing config file is rejected."""
        with pytest.raises(ConfigError):
            RunConfig.resolve("/nonexistent/run.conf", environ={})

    @pytest.mark.parametrize(
        "overrides",
        [
            {"scale_factor_r": 1.0},
            {"min_size": 300},
            {"num_blocks": 2},
            {"iters_per_scale": 0},
            {"k_iterations": -1},
            {"blur_kind": "gaussian"},
            {"blur_kind": "file"},
            {"eval_workers": 0},
        ],
    )
    def test_validation_errors_are_config_errors(self, overrides: dict[str, object]) -> None:
        """Test that invalid values raise ConfigError."""
        with pytest.raises(ConfigError):
            RunConfig.resolve(environ={}, overrides=overrides)

    def test_from_args_with_set_pairs(self) -> None:
        """Test building a config from parsed flags and --set pairs."""
        args = argparse.Namespace(
            config=None,
            seed=5,
            command="train",
            set=["iters_per_scale = 10", "base_channels=8"],
        )
        config = RunConfig.from_args(args)
        assert config.seed == 5
        assert config.iters_per_scale == 10
        assert config.base_channels == 8

    def test_require(self) -> None:
        """Test that require names the missing settings."""
        config = RunConfig.resolve(environ={}, overrides={"input": "a.png"})
        config.require("input")
        with pytest.raises(ConfigError, match="checkpoint_dir"):
            config.require("input", "checkpoint_dir")


class TestDerivedConfigs:
    """Tests for the component configs built from a RunConfig."""

    def test_component_configs(self) -> None:
        """Test the network, training and deblur configs derived from a run config."""
        config = RunConfig.resolve(
            environ={},
            overrides={"num_blocks": 4, "base_channels": 16, "k_iterations": 2, "seed": 9},
        )
        assert config.network_config().num_blocks == 4
        assert config.network_config().base_channels == 16
        assert config.train_config().seed == 9
        assert config.deblur_spec().k_iterations == 2
        assert config.deblur_spec().seed == 9


class TestEcho:
    """Tests for the resolved-config echo file."""

    def test_echo_round_trip(self) -> None:
        """Test that the echo file reloads to the same config."""
        config = RunConfig.resolve(
            environ={},
            overrides={"seed": 7, "warm_start": True, "train_image": "x.png", "min_size": 20},
        )
        with tempfile.TemporaryDirectory() as tmp:
            path = config.write_echo(Path(tmp) / "run")
            assert path.name == ECHO_FILE
            reread = RunConfig.resolve(path, environ={})
        assert reread == config

    def test_str_mentions_key_settings(self) -> None:
        """Test that the summary string names the key settings."""
        text = str(RunConfig.resolve(environ={}, overrides={"checkpoint_dir": "ck"}))
        assert "r=0.75" in text
        assert "Checkpoint: ck" in text
