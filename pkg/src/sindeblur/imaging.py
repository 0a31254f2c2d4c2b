"""Image I/O, resampling and pyramid construction.

Images live in memory as ``torch.Tensor`` objects of shape ``(1, 3, H, W)`` with
samples in [-1, 1]. Files on disk stay 8-bit.
"""

import io
import logging
import math
import pathlib
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image as PILImage
from PIL import UnidentifiedImageError

from .errors import ImageDecodeError, InvalidInputError

logger = logging.getLogger("imaging")

# A (1, 3, H, W) tensor with samples in [-1, 1].
Image = torch.Tensor

MIN_PYRAMID_SIZE = 8


def check_image(img: Image, name: str = "image") -> tuple[int, int]:
    """Validate the in-memory image layout and return its (height, width)."""
    if img.dim() != 4 or img.shape[0] != 1 or img.shape[1] != 3:  # noqa: PLR2004
        msg = f"{name} must have shape (1, 3, H, W), got {tuple(img.shape)}"
        raise InvalidInputError(msg)
    height, width = int(img.shape[2]), int(img.shape[3])
    if height < 1 or width < 1:
        msg = f"{name} has zero dimension: {height}x{width}"
        raise InvalidInputError(msg)
    return height, width


def _from_pil(pil: PILImage.Image, name: str) -> Image:
    if pil.width == 0 or pil.height == 0:
        msg = f"{name} has zero dimension: {pil.height}x{pil.width}"
        raise InvalidInputError(msg)
    # Grayscale is replicated and alpha dropped by the RGB conversion.
    rgb = np.asarray(pil.convert("RGB"), dtype=np.float32)
    data = 2.0 * (rgb / 255.0) - 1.0
    return torch.from_numpy(np.ascontiguousarray(data.transpose(2, 0, 1))).unsqueeze(0)


def load_image(path: str | pathlib.Path) -> Image:
    """Load an 8-bit PNG or JPEG file into the [-1, 1] representation.

    Args:
    ----
        path: The image file to read

    Returns:
    -------
        A (1, 3, H, W) float32 tensor

    Raises:
    ------
        ImageDecodeError: If the file is missing, unreadable or corrupt
        InvalidInputError: If the decoded image has a zero dimension

    """
    try:
        with PILImage.open(path) as pil:
            pil.load()
            return _from_pil(pil, str(path))
    except (OSError, UnidentifiedImageError, SyntaxError, ValueError) as e:
        if isinstance(e, InvalidInputError):
            raise
        raise ImageDecodeError(str(path), str(e)) from e


def load_image_bytes(data: bytes, name: str = "<bytes>") -> Image:
    """Decode an in-memory PNG or JPEG buffer into the [-1, 1] representation."""
    try:
        with PILImage.open(io.BytesIO(data)) as pil:
            pil.load()
            return _from_pil(pil, name)
    except (OSError, UnidentifiedImageError, SyntaxError, ValueError) as e:
        if isinstance(e, InvalidInputError):
            raise
        raise ImageDecodeError(name, str(e)) from e


def to_unit_range(img: Image) -> np.ndarray:
    """Return the image as an (H, W, 3) float64 array mapped to [0, 1]."""
    check_image(img)
    data = img.detach().to(torch.float64).cpu().numpy()[0].transpose(1, 2, 0)
    return (data + 1.0) / 2.0


def from_unit_range(data: np.ndarray) -> Image:
    """Build a float32 image from an (H, W, 3) array in [0, 1]."""
    samples = 2.0 * np.asarray(data, dtype=np.float32) - 1.0
    return torch.from_numpy(np.ascontiguousarray(samples.transpose(2, 0, 1))).unsqueeze(0)


def save_image(img: Image, path: str | pathlib.Path) -> None:
    """Write an image as an 8-bit PNG, clipping out-of-range samples.

    Args:
    ----
        img: The image to write
        path: Destination file; its parent directory must exist

    """
    check_image(img)
    data = img.detach().to(torch.float64).cpu().numpy()[0].transpose(1, 2, 0)
    pixels = np.clip(np.round(255.0 * (data + 1.0) / 2.0), 0, 255).astype(np.uint8)
    PILImage.fromarray(pixels).save(path, format="PNG")


def resample(img: Image, target_h: int, target_w: int) -> Image:
    """Resize with bicubic interpolation, anti-aliased when shrinking.

    Args:
    ----
        img: Source image
        target_h: Output height in pixels
        target_w: Output width in pixels

    Returns:
    -------
        The resized image clipped to [-1, 1]

    """
    height, width = check_image(img)
    if target_h < 1 or target_w < 1:
        msg = f"Resample target must be at least 1x1, got {target_h}x{target_w}"
        raise InvalidInputError(msg)
    if (target_h, target_w) == (height, width):
        return img.clone()
    out = F.interpolate(
        img, size=(target_h, target_w), mode="bicubic", align_corners=False, antialias=True
    )
    return out.clamp(-1.0, 1.0)


def scaled_dims(height: int, width: int, factor: float) -> tuple[int, int]:
    """Scale both dimensions by ``factor`` with rounding, never below one pixel."""
    return max(1, round(height * factor)), max(1, round(width * factor))


@dataclass
class ImagePyramid:
    """Downsampled copies of one training image, finest (index 0) to coarsest.

    Attributes
    ----------
        levels: Images x_0 ... x_N
        scale_factor: Ratio r between consecutive levels
        min_size: Floor on the coarsest level's smaller side
        max_size: Cap on the finest level's larger side

    """

    levels: list[Image]
    scale_factor: float
    min_size: int
    max_size: int
    shapes: list[tuple[int, int]] = field(init=False)

    def __post_init__(self) -> None:
        """Record level dimensions."""
        self.shapes = [check_image(level) for level in self.levels]

    @property
    def num_scales(self) -> int:
        """Number of levels, N + 1."""
        return len(self.levels)

    @property
    def coarsest(self) -> int:
        """Index N of the coarsest level."""
        return len(self.levels) - 1


def pyramid_depth(min_dim: int, scale_factor: float, min_size: int) -> int:
    """Count the levels a pyramid gets for a finest level whose smaller side is ``min_dim``.

    The depth is the largest L >= 1 with ``min_dim * r**L >= min_size``, so even the
    coarsest level could be shrunk once more without crossing the floor.
    """
    depth = 1
    while min_dim * scale_factor ** (depth + 1) >= min_size - 1e-9:
        depth += 1
    return depth


def pyramid_shapes(
    height: int, width: int, scale_factor: float, num_scales: int
) -> list[tuple[int, int]]:
    """Level dimensions computed from level 0 as round(dim_0 * r**n)."""
    return [scaled_dims(height, width, scale_factor**n) for n in range(num_scales)]


def build_pyramid(
    img: Image, scale_factor_r: float = 0.75, min_size: int = 25, max_size: int = 250
) -> ImagePyramid:
    """Build the training pyramid for one image.

    Args:
    ----
        img: The sharp training image
        scale_factor_r: Ratio between consecutive levels, in (0, 1)
        min_size: Floor on the coarsest level's smaller side (at least 8)
        max_size: Cap on the finest level's larger side

    Returns:
    -------
        An ImagePyramid whose level n is level 0 resampled to round(dim_0 * r**n)

    """
    height, width = check_image(img)
    if not 0.0 < scale_factor_r < 1.0:
        msg = f"scale factor must lie in (0, 1), got {scale_factor_r}"
        raise InvalidInputError(msg)
    if min_size < MIN_PYRAMID_SIZE:
        msg = f"min_size must be at least {MIN_PYRAMID_SIZE}, got {min_size}"
        raise InvalidInputError(msg)
    if max_size < min_size:
        msg = f"max_size ({max_size}) must not be smaller than min_size ({min_size})"
        raise InvalidInputError(msg)
    if min(height, width) < min_size:
        msg = f"Image {height}x{width} is smaller than min_size={min_size}"
        raise InvalidInputError(msg)

    finest = img
    if max(height, width) > max_size:
        height, width = scaled_dims(height, width, max_size / max(height, width))
        if min(height, width) < min_size:
            msg = f"Image capped to {height}x{width} falls below min_size={min_size}"
            raise InvalidInputError(msg)
        finest = resample(img, height, width)

    num_scales = pyramid_depth(min(height, width), scale_factor_r, min_size)
    shapes = pyramid_shapes(height, width, scale_factor_r, num_scales)
    levels = [finest.clone()] + [resample(finest, h, w) for h, w in shapes[1:]]
    logger.info(
        "Built %d-level pyramid from %dx%d (r=%.3f): %s",
        num_scales,
        height,
        width,
        scale_factor_r,
        ", ".join(f"{h}x{w}" for h, w in shapes),
    )
    return ImagePyramid(
        levels=levels, scale_factor=scale_factor_r, min_size=min_size, max_size=max_size
    )


def upscale_dims(height: int, width: int, scale_factor: float) -> tuple[int, int]:
    """Dimensions one pyramid step finer, i.e. dims / r rounded."""
    return scaled_dims(height, width, 1.0 / scale_factor)


def rmse(a: Image, b: Image) -> float:
    """Root-mean-square difference of two equally sized images."""
    if a.shape != b.shape:
        msg = f"Shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}"
        raise InvalidInputError(msg)
    return math.sqrt(float(torch.mean((a.detach() - b.detach()) ** 2)))
