"""Per-scale residual generator and Markovian patch discriminator."""

import logging
from collections.abc import Callable
from dataclasses import dataclass
from typing import TypeVar

import torch
import torch.nn.functional as F
from torch import nn

from .errors import InvalidInputError
from .imaging import Image, check_image

logger = logging.getLogger("networks")

IMAGE_CHANNELS = 3
MIN_BLOCKS = 3
MIN_BASE_CHANNELS = 8
MAX_CHANNELS = 128
SCALES_PER_WIDTH_GROUP = 4
LEAKY_SLOPE = 0.2
INIT_STD = 0.02

ModuleT = TypeVar("ModuleT", bound=nn.Module)


@dataclass(frozen=True)
class GeneratorConfig:
    """Architecture shared by the generator and discriminator of every scale.

    Attributes
    ----------
        num_blocks: Convolution blocks per network
        base_channels: Width at scale indices 0-3
        kernel_size: Convolution kernel side
        min_channels: Lower bound on any block's width

    """

    num_blocks: int = 5
    base_channels: int = 32
    kernel_size: int = 3
    min_channels: int = 32

    def __post_init__(self) -> None:
        """Validate block count and widths."""
        if self.num_blocks < MIN_BLOCKS:
            msg = f"num_blocks must be at least {MIN_BLOCKS}, got {self.num_blocks}"
            raise InvalidInputError(msg)
        if self.base_channels < MIN_BASE_CHANNELS:
            msg = f"base_channels must be at least {MIN_BASE_CHANNELS}, got {self.base_channels}"
            raise InvalidInputError(msg)
        if self.kernel_size != 3:  # noqa: PLR2004
            msg = f"Only 3x3 convolutions are supported, got kernel_size={self.kernel_size}"
            raise InvalidInputError(msg)
        if self.min_channels < 1:
            msg = f"min_channels must be positive, got {self.min_channels}"
            raise InvalidInputError(msg)


def channels_for_scale(config: GeneratorConfig, scale_index: int) -> int:
    """Network width at one scale: base * 2**(scale_index // 4), capped at 128."""
    width = config.base_channels * 2 ** (scale_index // SCALES_PER_WIDTH_GROUP)
    return max(config.min_channels, min(width, MAX_CHANNELS))


class ConvBlock(nn.Sequential):
    """Unpadded 3x3 convolution, batch normalization, leaky rectifier."""

    def __init__(self, in_channels: int, out_channels: int) -> None:
        """Build the block."""
        super().__init__(
            nn.Conv2d(in_channels, out_channels, kernel_size=3, stride=1, padding=0),
            nn.BatchNorm2d(out_channels),
            nn.LeakyReLU(LEAKY_SLOPE),
        )


def _conv_stack(channels: int, num_blocks: int, out_channels: int) -> list[nn.Module]:
    layers: list[nn.Module] = [ConvBlock(IMAGE_CHANNELS, channels)]
    layers += [ConvBlock(channels, channels) for _ in range(num_blocks - 2)]
    layers.append(nn.Conv2d(channels, out_channels, kernel_size=3, stride=1, padding=0))
    return layers


class ScaleGenerator(nn.Module):
    """G_n: adds a learned residual to the upsampled coarser output.

    The body sees ``z + prev_up`` zero-padded by ``num_blocks`` pixels per side, so its
    unpadded convolutions return an image of the input size. In training mode the
    normalization uses the statistics of the current image; once the scale is frozen it
    uses the statistics recorded by ``calibrate_normalization``, so every later input goes
    through the same per-channel affine map.
    """

    def __init__(self, channels: int, num_blocks: int, scale_index: int = 0) -> None:
        """Build the generator body and tanh head."""
        super().__init__()
        if num_blocks < 2:  # noqa: PLR2004
            msg = f"A generator needs at least 2 blocks, got {num_blocks}"
            raise InvalidInputError(msg)
        self.channels = channels
        self.num_blocks = num_blocks
        self.scale_index = scale_index
        self.body = nn.Sequential(
            *_conv_stack(channels, num_blocks, IMAGE_CHANNELS), nn.Tanh()
        )

    def forward(self, z: torch.Tensor, prev_up: torch.Tensor) -> torch.Tensor:
        """Return ``prev_up + body(z + prev_up)`` without clipping."""
        x = F.pad(z + prev_up, (self.num_blocks,) * 4, mode="constant", value=0.0)
        return prev_up + self.body(x)


class ScaleDiscriminator(nn.Module):
    """D_n: fully convolutional critic producing a patch score map.

    Each score depends on a (2 * num_blocks + 1)^2 input patch. In evaluation mode the
    normalization uses running statistics and the critic is strictly patch-local.
    """

    def __init__(self, channels: int, num_blocks: int, scale_index: int = 0) -> None:
        """Build the critic."""
        super().__init__()
        if num_blocks < 2:  # noqa: PLR2004
            msg = f"A discriminator needs at least 2 blocks, got {num_blocks}"
            raise InvalidInputError(msg)
        self.channels = channels
        self.num_blocks = num_blocks
        self.scale_index = scale_index
        self.body = nn.Sequential(*_conv_stack(channels, num_blocks, 1))

    @property
    def patch_size(self) -> int:
        """Side of the input patch that determines one score."""
        return 2 * self.num_blocks + 1

    def forward(self, img: torch.Tensor) -> torch.Tensor:
        """Return the (1, 1, H - 2b, W - 2b) score map."""
        return self.body(img)


def _init_weights(module: nn.Module) -> None:
    if isinstance(module, nn.Conv2d):
        nn.init.normal_(module.weight, 0.0, INIT_STD)
        nn.init.zeros_(module.bias)
    elif isinstance(module, nn.BatchNorm2d):
        nn.init.normal_(module.weight, 1.0, INIT_STD)
        nn.init.zeros_(module.bias)


def _seeded(build: Callable[[], ModuleT], seed: int) -> ModuleT:
    # Construction draws default initializations too, so it runs on the forked RNG.
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = build()
        model.apply(_init_weights)
    return model


def init_generator(config: GeneratorConfig, scale_index: int, seed: int) -> ScaleGenerator:
    """Create G_n with seeded N(0, 0.02) convolutions and N(1, 0.02) normalization scales.

    Args:
    ----
        config: Architecture
        scale_index: Pyramid index n (0 is the finest scale)
        seed: Initialization seed; equal seeds give identical parameters

    Returns:
    -------
        A freshly initialized ScaleGenerator

    """
    if scale_index < 0:
        msg = f"scale_index must be >= 0, got {scale_index}"
        raise InvalidInputError(msg)
    channels = channels_for_scale(config, scale_index)
    return _seeded(lambda: ScaleGenerator(channels, config.num_blocks, scale_index), seed)


def init_discriminator(config: GeneratorConfig, scale_index: int, seed: int) -> ScaleDiscriminator:
    """Create D_n with the same initialization and width rule as ``init_generator``."""
    if scale_index < 0:
        msg = f"scale_index must be >= 0, got {scale_index}"
        raise InvalidInputError(msg)
    channels = channels_for_scale(config, scale_index)
    return _seeded(lambda: ScaleDiscriminator(channels, config.num_blocks, scale_index), seed)


@dataclass
class NoiseMap:
    """Unit Gaussian noise z_n with its amplitude sigma_n.

    Attributes
    ----------
        data: (1, 3, H, W) unit-variance samples
        amplitude_sigma: Multiplier applied before the noise enters the generator

    """

    data: torch.Tensor
    amplitude_sigma: float = 1.0

    def __post_init__(self) -> None:
        """Validate layout and amplitude."""
        check_image(self.data, "noise map")
        if self.amplitude_sigma < 0:
            msg = f"Noise amplitude must be >= 0, got {self.amplitude_sigma}"
            raise InvalidInputError(msg)

    @classmethod
    def sample(
        cls,
        height: int,
        width: int,
        amplitude_sigma: float,
        generator: torch.Generator,
        dtype: torch.dtype = torch.float32,
    ) -> "NoiseMap":
        """Draw fresh noise from a seeded torch generator."""
        data = torch.randn((1, IMAGE_CHANNELS, height, width), generator=generator, dtype=dtype)
        return cls(data=data, amplitude_sigma=amplitude_sigma)

    @classmethod
    def zeros(cls, height: int, width: int, dtype: torch.dtype = torch.float32) -> "NoiseMap":
        """Zero noise, used on the reconstruction path below the coarsest scale."""
        return cls(data=torch.zeros((1, IMAGE_CHANNELS, height, width), dtype=dtype))

    def scaled(self) -> torch.Tensor:
        """The noise as it enters the generator, sigma_n * z_n."""
        return self.amplitude_sigma * self.data


def generator_forward(g: ScaleGenerator, z: NoiseMap | torch.Tensor, prev_up: Image) -> Image:
    """Run G_n on noise and the upsampled coarser image, clipping to [-1, 1].

    Args:
    ----
        g: The scale's generator
        z: Noise map (its amplitude is applied) or an already scaled noise tensor
        prev_up: The coarser output resampled to this scale (zeros at the coarsest)

    Returns:
    -------
        ``clip(prev_up + body(z + prev_up))``

    """
    noise = z.scaled() if isinstance(z, NoiseMap) else z
    if noise.shape != prev_up.shape:
        msg = f"Noise {tuple(noise.shape)} does not match image {tuple(prev_up.shape)}"
        raise InvalidInputError(msg)
    check_image(prev_up, "prev_up")
    return g(noise.to(prev_up.dtype), prev_up).clamp(-1.0, 1.0)


def calibrate_normalization(g: ScaleGenerator, z: NoiseMap | torch.Tensor, prev_up: Image) -> None:
    """Record normalization statistics from one forward pass and switch G_n to eval mode.

    Every batch-norm layer's running mean and variance are reset and then set to the
    statistics of ``z + prev_up`` flowing through the body, so the frozen generator
    reproduces its training-mode output on that input and applies the same fixed
    affine map to any other input, whatever its size.

    Args:
    ----
        g: The trained generator of one scale
        z: The reconstruction noise of that scale
        prev_up: The reconstruction input from the coarser scale

    """
    norms = [m for m in g.modules() if isinstance(m, nn.BatchNorm2d)]
    momenta = [m.momentum for m in norms]
    for norm in norms:
        norm.reset_running_stats()
        norm.momentum = None
    g.train()
    with torch.no_grad():
        generator_forward(g, z, prev_up)
    for norm, momentum in zip(norms, momenta, strict=True):
        norm.momentum = momentum
    g.eval()
    logger.debug("Calibrated %d normalization layers at scale %d", len(norms), g.scale_index)


def discriminator_forward(d: ScaleDiscriminator, img: Image) -> torch.Tensor:
    """Score every (2b + 1)^2 patch of ``img``; returns an (H - 2b) x (W - 2b) grid.

    Args:
    ----
        d: The scale's discriminator
        img: Image whose smaller side exceeds 2 * num_blocks

    Returns:
    -------
        The 2-D score map

    """
    height, width = check_image(img)
    if min(height, width) <= 2 * d.num_blocks:
        msg = (
            f"Image {height}x{width} is too small for a {d.num_blocks}-block discriminator "
            f"(needs more than {2 * d.num_blocks} px per side)"
        )
        raise InvalidInputError(msg)
    return d(img)[0, 0]
