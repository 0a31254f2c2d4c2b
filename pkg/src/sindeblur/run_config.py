"""Resolved settings for one command-line run.

A run is configured from four sources, highest precedence first: command-line
flags, ``SIN_DEBLUR_<KEY>`` environment variables, a ``key = value`` config file,
and the defaults below. Every key is a field of RunConfig, spelled the same in all
sources (upper-cased after the prefix for environment variables).
"""

import argparse
import os
import pathlib
import typing
from collections.abc import Mapping
from dataclasses import dataclass, fields
from typing import Any

from .errors import ConfigError, InvalidInputError
from .inference import DeblurSpec
from .networks import GeneratorConfig
from .training import TrainConfig

ENV_PREFIX = "SIN_DEBLUR_"
ECHO_FILE = "run_config.txt"
BLUR_KINDS = ("linear", "trajectory", "file")

_TRUE = frozenset({"1", "true", "yes", "on"})
_FALSE = frozenset({"0", "false", "no", "off"})


@dataclass
class RunConfig:
    """Every setting a command can read.

    Paths default to None and are only required by the commands that use them.
    """

    # Reproducibility and output
    seed: int = 0
    out: str = "runs/latest"

    # Pyramid
    scale_factor_r: float = 0.75
    min_size: int = 25
    max_size: int = 250

    # Networks
    num_blocks: int = 5
    base_channels: int = 32
    min_channels: int = 32

    # Optimization
    iters_per_scale: int = 2000
    d_steps: int = 3
    g_steps: int = 3
    learning_rate: float = 5e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    rec_weight_alpha: float = 10.0
    gp_weight_lambda: float = 0.1
    lr_decay_at: float = 0.8
    lr_decay_gamma: float = 0.1
    noise_base: float = 0.1
    warm_start: bool = False
    log_every: int = 100

    # Deblurring
    k_iterations: int = 3
    inference_noise_scale: float = 0.0
    output_match_input_dims: bool = True

    # Sampling
    start_scale: int = -1  # -1 means the coarsest scale
    num_samples: int = 1

    # Blur simulation
    blur_kind: str = "linear"
    blur_length_px: float = 5.0
    blur_angle_deg: float = 0.0
    blur_kernel_size: int = 5
    blur_kernel_file: str | None = None
    blur_noise_sigma: float = 0.0

    # Evaluation
    eval_workers: int = 4
    eval_limit: int = 0  # 0 means every pair

    # Paths
    train_image: str | None = None
    input: str | None = None
    output: str | None = None
    checkpoint_dir: str | None = None
    restored_dir: str | None = None
    reference_dir: str | None = None
    dataset_root: str | None = None

    def __post_init__(self) -> None:
        """Validate cross-field constraints and the derived component configs."""
        if not 0.0 < self.scale_factor_r < 1.0:
            msg = f"scale_factor_r must lie in (0, 1), got {self.scale_factor_r}"
            raise ConfigError(msg)
        if self.max_size < self.min_size:
            msg = f"max_size ({self.max_size}) must not be below min_size ({self.min_size})"
            raise ConfigError(msg)
        if self.blur_kind not in BLUR_KINDS:
            msg = f"blur_kind must be one of {', '.join(BLUR_KINDS)}, got {self.blur_kind!r}"
            raise ConfigError(msg)
        if self.blur_kind == "file" and not self.blur_kernel_file:
            msg = "blur_kind = file requires blur_kernel_file"
            raise ConfigError(msg)
        for name in ("num_samples", "eval_workers"):
            if getattr(self, name) < 1:
                msg = f"{name} must be at least 1, got {getattr(self, name)}"
                raise ConfigError(msg)
        if self.eval_limit < 0 or self.blur_noise_sigma < 0:
            msg = "eval_limit and blur_noise_sigma must be >= 0"
            raise ConfigError(msg)
        try:
            self.train_config()
            self.network_config()
            self.deblur_spec()
        except InvalidInputError as e:
            raise ConfigError(str(e)) from e

    def train_config(self) -> TrainConfig:
        """The optimization settings."""
        return TrainConfig(
            iters_per_scale=self.iters_per_scale,
            d_steps=self.d_steps,
            g_steps=self.g_steps,
            learning_rate=self.learning_rate,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            rec_weight_alpha=self.rec_weight_alpha,
            gp_weight_lambda=self.gp_weight_lambda,
            lr_decay_at=self.lr_decay_at,
            lr_decay_gamma=self.lr_decay_gamma,
            noise_base=self.noise_base,
            warm_start=self.warm_start,
            log_every=self.log_every,
            seed=self.seed,
        )

    def network_config(self) -> GeneratorConfig:
        """The architecture settings."""
        return GeneratorConfig(
            num_blocks=self.num_blocks,
            base_channels=self.base_channels,
            min_channels=self.min_channels,
        )

    def deblur_spec(self) -> DeblurSpec:
        """The inference settings."""
        return DeblurSpec(
            k_iterations=self.k_iterations,
            inference_noise_scale=self.inference_noise_scale,
            output_match_input_dims=self.output_match_input_dims,
            seed=self.seed,
        )

    def require(self, *names: str) -> None:
        """Raise ConfigError unless every named path setting is present."""
        missing = [name for name in names if not getattr(self, name)]
        if missing:
            msg = f"Missing required setting(s): {', '.join(missing)}"
            raise ConfigError(msg)

    @classmethod
    def resolve(
        cls,
        config_file: str | pathlib.Path | None = None,
        environ: Mapping[str, str] | None = None,
        overrides: Mapping[str, Any] | None = None,
    ) -> "RunConfig":
        """Merge defaults, file, environment and flag values, in rising precedence.

        Args:
        ----
            config_file: Optional ``key = value`` file
            environ: Environment mapping; defaults to ``os.environ``
            overrides: Values from command-line flags; None entries are ignored

        Returns:
        -------
            The validated RunConfig

        Raises:
        ------
            ConfigError: For unknown keys, unparsable values or failed validation

        """
        values: dict[str, Any] = {}
        if config_file is not None:
            values.update(parse_config_text(_read_config_file(config_file)))
        values.update(_from_environment(os.environ if environ is None else environ))
        for key, value in (overrides or {}).items():
            if value is None:
                continue
            if key not in _field_types():
                msg = f"Unknown config key {key!r}"
                raise ConfigError(msg)
            values[key] = value
        return cls(**values)

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        """Resolve from parsed CLI arguments.

        Every namespace attribute that names a config key is a flag override; ``--set``
        pairs are parsed like config-file lines.
        """
        keys = _field_types()
        overrides = {k: v for k, v in vars(args).items() if k in keys and v is not None}
        for item in getattr(args, "set", None) or []:
            overrides.update(parse_config_text(item))
        return cls.resolve(getattr(args, "config", None), overrides=overrides)

    def to_dict(self) -> dict[str, Any]:
        """Convert the configuration to a plain dictionary."""
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def to_text(self) -> str:
        """Render as a config file that ``resolve`` reads back to an equal RunConfig."""
        lines = ["# Fully resolved sin-deblur run configuration"]
        for key, value in self.to_dict().items():
            if value is None:
                continue
            lines.append(f"{key} = {str(value).lower() if isinstance(value, bool) else value}")
        return "\n".join(lines) + "\n"

    def write_echo(self, directory: str | pathlib.Path) -> pathlib.Path:
        """Write ``run_config.txt`` into ``directory``."""
        root = pathlib.Path(directory)
        root.mkdir(parents=True, exist_ok=True)
        path = root / ECHO_FILE
        path.write_text(self.to_text())
        return path

    def __str__(self) -> str:
        """Create string representation of the configuration."""
        lines = [
            "RunConfig:",
            f"  Seed: {self.seed}",
            f"  Pyramid: r={self.scale_factor_r}, min_size={self.min_size}, "
            f"max_size={self.max_size}",
            f"  Training: {self.iters_per_scale} iters/scale, alpha={self.rec_weight_alpha}, "
            f"lambda={self.gp_weight_lambda}",
            f"  Deblur: k={self.k_iterations}, noise scale={self.inference_noise_scale}",
        ]
        if self.checkpoint_dir:
            lines.append(f"  Checkpoint: {self.checkpoint_dir}")
        lines.append(f"  Output: {self.out}")
        return "\n".join(lines)


def _field_types() -> dict[str, Any]:
    return typing.get_type_hints(RunConfig)


def _coerce(key: str, raw: str) -> Any:
    hint = _field_types()[key]
    text = raw.strip()
    try:
        if hint is bool:
            lowered = text.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            msg = f"expected a boolean, got {raw!r}"
            raise ValueError(msg)
        if hint is int:
            return int(text)
        if hint is float:
            return float(text)
    except ValueError as e:
        msg = f"Invalid value for {key}: {e}"
        raise ConfigError(msg) from e
    if hint is str:
        return text
    return text or None


def parse_config_text(text: str) -> dict[str, Any]:
    """Parse ``key = value`` lines; ``#`` starts a comment and blank lines are ignored.

    Raises
    ------
        ConfigError: For lines without ``=``, unknown keys or unparsable values

    """
    values: dict[str, Any] = {}
    keys = _field_types()
    for number, line in enumerate(text.splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        key, sep, raw = content.partition("=")
        key = key.strip()
        if not sep:
            msg = f"Line {number}: expected 'key = value', got {line.strip()!r}"
            raise ConfigError(msg)
        if key not in keys:
            msg = f"Line {number}: unknown config key {key!r}"
            raise ConfigError(msg)
        values[key] = _coerce(key, raw)
    return values


def _read_config_file(path: str | pathlib.Path) -> str:
    try:
        return pathlib.Path(path).read_text()
    except OSError as e:
        msg = f"Cannot read config file {path}: {e}"
        raise ConfigError(msg) from e


def _from_environment(environ: Mapping[str, str]) -> dict[str, Any]:
    values: dict[str, Any] = {}
    keys = _field_types()
    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        key = name.removeprefix(ENV_PREFIX).lower()
        if key not in keys:
            msg = f"Unknown config key {key!r} from environment variable {name}"
            raise ConfigError(msg)
        values[key] = _coerce(key, raw)
    return values
