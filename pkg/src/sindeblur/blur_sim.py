"""Synthetic motion blur: I_blur = kernel * I_sharp + N with a spatially uniform kernel."""

import logging
import math
import pathlib
from dataclasses import dataclass

import numpy as np
import torch
from scipy import ndimage

from .errors import InvalidInputError
from .imaging import Image, check_image

logger = logging.getLogger("blur_sim")

# Subsamples per pixel side when rasterizing a segment. Even, so no subsample
# ever lies exactly on a pixel border.
_SUPERSAMPLE = 16
_NORMALIZATION_TOLERANCE = 1e-9


@dataclass(frozen=True)
class MotionKernel:
    """Normalized point-spread function on a square odd-sized support.

    Attributes
    ----------
        weights: (size, size) float64 array, nonnegative, summing to 1

    """

    weights: np.ndarray

    def __post_init__(self) -> None:
        """Validate shape, sign and normalization."""
        w = self.weights
        if w.ndim != 2 or w.shape[0] != w.shape[1]:  # noqa: PLR2004
            msg = f"Kernel must be square, got shape {w.shape}"
            raise InvalidInputError(msg)
        if w.shape[0] % 2 == 0:
            msg = f"Kernel size must be odd, got {w.shape[0]}"
            raise InvalidInputError(msg)
        if (w < 0).any():
            msg = "Kernel weights must be nonnegative"
            raise InvalidInputError(msg)
        if abs(float(w.sum()) - 1.0) > _NORMALIZATION_TOLERANCE:
            msg = f"Kernel weights must sum to 1, got {float(w.sum())!r}"
            raise InvalidInputError(msg)

    @property
    def size(self) -> int:
        """Side length k of the k x k support."""
        return int(self.weights.shape[0])


@dataclass(frozen=True)
class BlurSpec:
    """One degradation: a kernel plus additive Gaussian noise.

    Attributes
    ----------
        kernel: The motion kernel
        noise_sigma: Standard deviation of the additive noise, in [-1, 1] units
        seed: Seed for the noise draw

    """

    kernel: MotionKernel
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        """Reject negative noise."""
        if self.noise_sigma < 0:
            msg = f"noise_sigma must be >= 0, got {self.noise_sigma}"
            raise InvalidInputError(msg)


def _check_size(size: int) -> None:
    if size < 1 or size % 2 == 0:
        msg = f"Kernel size must be a positive odd number, got {size}"
        raise InvalidInputError(msg)


def _normalize(weights: np.ndarray) -> MotionKernel:
    weights = np.clip(weights, 0.0, None)
    return MotionKernel(weights / weights.sum())


def delta_kernel(size: int = 1) -> MotionKernel:
    """Identity kernel: a single unit tap at the center."""
    _check_size(size)
    weights = np.zeros((size, size))
    weights[size // 2, size // 2] = 1.0
    return MotionKernel(weights)


def linear_motion_kernel(length_px: float, angle_deg: float, size: int) -> MotionKernel:
    """Rasterize a centered straight motion segment with anti-aliased coverage.

    The segment is treated as a one-pixel-wide bar of the given length; each tap
    receives the fraction of its pixel area the bar covers, measured on a
    supersampled grid, and the result is normalized. A length of one pixel or less is
    no motion at all and gives the delta kernel at any angle.

    Args:
    ----
        length_px: Motion length in pixels, at least 1 and at most ``size``
        angle_deg: Direction of motion, counter-clockwise from the +x (column) axis
        size: Odd side length of the kernel support

    Returns:
    -------
        The normalized MotionKernel

    """
    _check_size(size)
    if length_px < 1:
        msg = f"Motion length must be at least 1 px, got {length_px}"
        raise InvalidInputError(msg)
    if length_px > size:
        msg = f"Motion length {length_px} exceeds kernel size {size}"
        raise InvalidInputError(msg)
    if length_px <= 1:
        return delta_kernel(size)

    theta = math.radians(angle_deg)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    half = size // 2
    sub = (np.arange(_SUPERSAMPLE) + 0.5) / _SUPERSAMPLE - 0.5
    offsets = np.arange(-half, half + 1)
    # Fine grid of subsample centers, rows = y (down), columns = x.
    ys = (offsets[:, None] + sub[None, :]).reshape(-1)
    xs = ys.copy()
    grid_y, grid_x = np.meshgrid(ys, xs, indexing="ij")
    along = grid_x * cos_t + grid_y * sin_t
    across = -grid_x * sin_t + grid_y * cos_t
    inside = (np.abs(along) <= length_px / 2.0) & (np.abs(across) <= 0.5)
    coverage = inside.reshape(size, _SUPERSAMPLE, size, _SUPERSAMPLE).sum(axis=(1, 3))
    if coverage.sum() == 0:
        return delta_kernel(size)
    return _normalize(coverage.astype(np.float64))


def random_trajectory_kernel(
    seed: int, size: int, steps: int = 30, jitter: float = 0.5
) -> MotionKernel:
    """Rasterize a seeded random camera-shake trajectory.

    The trajectory is a walk of ``steps`` points with unit step length whose heading
    drifts by Gaussian increments of ``jitter`` radians. It is centered on its mean,
    shrunk to fit the support and splatted bilinearly onto the grid.

    Args:
    ----
        seed: Random seed; equal seeds give identical kernels
        size: Odd side length of the kernel support
        steps: Number of trajectory points (1 gives the identity kernel)
        jitter: Standard deviation of the per-step heading change, in radians

    Returns:
    -------
        The normalized MotionKernel

    """
    _check_size(size)
    if steps < 1:
        msg = f"steps must be at least 1, got {steps}"
        raise InvalidInputError(msg)
    rng = np.random.default_rng(seed)
    heading = rng.uniform(0.0, 2.0 * math.pi)
    turns = rng.normal(0.0, jitter, size=max(steps - 1, 0))
    headings = heading + np.concatenate([[0.0], np.cumsum(turns)])[: steps - 1]
    moves = np.stack([np.cos(headings), np.sin(headings)], axis=1)
    points = np.vstack([np.zeros((1, 2)), np.cumsum(moves, axis=0)])
    points -= points.mean(axis=0)

    half = size // 2
    extent = float(np.abs(points).max()) if steps > 1 else 0.0
    if extent > half:
        points *= half / extent

    weights = np.zeros((size, size))
    cols = points[:, 0] + half
    rows = points[:, 1] + half
    c0 = np.clip(np.floor(cols).astype(int), 0, size - 1)
    r0 = np.clip(np.floor(rows).astype(int), 0, size - 1)
    fc = cols - c0
    fr = rows - r0
    c1 = np.clip(c0 + 1, 0, size - 1)
    r1 = np.clip(r0 + 1, 0, size - 1)
    np.add.at(weights, (r0, c0), (1 - fr) * (1 - fc))
    np.add.at(weights, (r0, c1), (1 - fr) * fc)
    np.add.at(weights, (r1, c0), fr * (1 - fc))
    np.add.at(weights, (r1, c1), fr * fc)
    return _normalize(weights)


def apply_blur(img: Image, spec: BlurSpec) -> Image:
    """Degrade a sharp image: convolve each channel, add seeded noise, clip.

    Args:
    ----
        img: The sharp image
        spec: Kernel, noise level and noise seed

    Returns:
    -------
        The blurry observation, same dimensions as ``img``

    """
    height, width = check_image(img)
    k = spec.kernel.size
    if k > height or k > width:
        msg = f"Kernel {k}x{k} is larger than the {height}x{width} image"
        raise InvalidInputError(msg)

    data = img.detach().to(torch.float64).cpu().numpy()[0]
    # Symmetric (half-sample) reflection keeps constant images fixed.
    blurred = np.stack(
        [ndimage.convolve(channel, spec.kernel.weights, mode="reflect") for channel in data]
    )
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        blurred = blurred + rng.normal(0.0, spec.noise_sigma, size=blurred.shape)
    blurred = np.clip(blurred, -1.0, 1.0)
    logger.debug(
        "Blurred %dx%d image with %dx%d kernel, noise sigma %.4f",
        height,
        width,
        k,
        k,
        spec.noise_sigma,
    )
    return torch.from_numpy(blurred).unsqueeze(0).to(img.dtype)


def gaussian_noise_only(noise_sigma: float, seed: int = 0) -> BlurSpec:
    """BlurSpec that adds noise without blurring (identity kernel)."""
    return BlurSpec(kernel=delta_kernel(1), noise_sigma=noise_sigma, seed=seed)


def save_kernel_text(kernel: MotionKernel, path: str | pathlib.Path) -> None:
    """Write a kernel as a plain-text grid: one row per line, space-separated decimals."""
    np.savetxt(path, kernel.weights, fmt="%.17g", delimiter=" ")


def load_kernel_text(path: str | pathlib.Path) -> MotionKernel:
    """Read a kernel written by ``save_kernel_text`` (or by hand) and validate it."""
    weights = np.atleast_2d(np.loadtxt(path, dtype=np.float64, ndmin=2))
    return MotionKernel(weights)
