"""Deblurring and sampling with a trained checkpoint.

Deblurring treats the blurry input as if it were a coarse rendering of the sharp
image: the input is shrunk by ``r**k`` and then pushed back up ``k`` times through the
finest generator, each pass adding detail at one scale step.
"""

import logging
import pathlib
from dataclasses import dataclass

import torch

from .errors import InadmissibleIterationsError, InvalidInputError
from .imaging import (
    Image,
    check_image,
    load_image,
    resample,
    save_image,
    scaled_dims,
    upscale_dims,
)
from .networks import IMAGE_CHANNELS, generator_forward
from .training import Checkpoint, run_cascade

logger = logging.getLogger("inference")

# Sanity bound on the iteration search; r < 1 makes the real limit much smaller.
_MAX_ITERATION_SEARCH = 1_000


@dataclass(frozen=True)
class DeblurSpec:
    """Options for one deblurring run.

    Attributes
    ----------
        k_iterations: Number of generator passes (0 returns the input unchanged)
        inference_noise_scale: Multiplier on sigma_0 for the injected noise (0 is deterministic)
        output_match_input_dims: Resample the result back to the input's dimensions
        seed: Seed for the injected noise

    """

    k_iterations: int = 3
    inference_noise_scale: float = 0.0
    output_match_input_dims: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        """Reject negative counts and noise scales."""
        if self.k_iterations < 0:
            msg = f"k_iterations must be >= 0, got {self.k_iterations}"
            raise InvalidInputError(msg)
        if self.inference_noise_scale < 0:
            msg = f"inference_noise_scale must be >= 0, got {self.inference_noise_scale}"
            raise InvalidInputError(msg)


def max_admissible_iterations(checkpoint: Checkpoint, height: int, width: int) -> int:
    """Largest k whose downscaled start image keeps its smaller side >= the training floor.

    k = 0 is always admissible.
    """
    r = checkpoint.scale_factor
    k = 0
    while k < _MAX_ITERATION_SEARCH and min(scaled_dims(height, width, r ** (k + 1))) >= (
        checkpoint.min_size
    ):
        k += 1
    return k


def deblur(checkpoint: Checkpoint, blurry: Image, spec: DeblurSpec | None = None) -> Image:
    """Restore a blurry image by iterated upsampling through the finest generator.

    Args:
    ----
        checkpoint: Trained pyramid; only G_0 and sigma_0 are used
        blurry: The blurred observation
        spec: Iteration count, noise and output options

    Returns:
    -------
        The restored image, at the input's dimensions unless disabled in ``spec``

    Raises:
    ------
        InadmissibleIterationsError: If ``spec.k_iterations`` exceeds the admissible maximum

    """
    spec = spec or DeblurSpec()
    height, width = check_image(blurry)
    k = spec.k_iterations
    if k == 0:
        return blurry.clone()
    max_k = max_admissible_iterations(checkpoint, height, width)
    if k > max_k:
        raise InadmissibleIterationsError(k, max_k)

    r = checkpoint.scale_factor
    g = checkpoint.generator(0)
    sigma = spec.inference_noise_scale * checkpoint.noise_schedule.sigma(0)
    rng = torch.Generator().manual_seed(spec.seed)

    y = resample(blurry, *scaled_dims(height, width, r**k))
    logger.debug("Deblur start %dx%d, %d passes", y.shape[2], y.shape[3], k)
    with torch.no_grad():
        for _ in range(k):
            h, w = upscale_dims(int(y.shape[2]), int(y.shape[3]), r)
            y_up = resample(y, h, w)
            if sigma > 0:
                z = sigma * torch.randn(y_up.shape, generator=rng, dtype=y_up.dtype)
            else:
                z = torch.zeros_like(y_up)
            y = generator_forward(g, z, y_up)

    if spec.output_match_input_dims and tuple(y.shape[2:]) != (height, width):
        y = resample(y, height, width)
    logger.info(
        "Deblurred %dx%d input with k=%d (output %dx%d)",
        height,
        width,
        k,
        y.shape[2],
        y.shape[3],
    )
    return y


def generate_sample(
    checkpoint: Checkpoint, start_scale: int, seed: int, *, fresh_noise: bool = True
) -> Image:
    """Draw a random image from the trained pyramid.

    Scales coarser than ``start_scale`` follow the reconstruction path, so the layout
    of the training image is kept; from ``start_scale`` down to the finest level fresh
    noise of amplitude sigma_n is injected.

    Args:
    ----
        checkpoint: Trained pyramid
        start_scale: Coarsest level that receives fresh noise (N samples freely)
        seed: Noise seed
        fresh_noise: With False every level uses the reconstruction noise

    Returns:
    -------
        An image of the finest level's dimensions

    """
    if not 0 <= start_scale <= checkpoint.coarsest:
        msg = f"start_scale must lie in [0, {checkpoint.coarsest}], got {start_scale}"
        raise InvalidInputError(msg)
    rng = torch.Generator().manual_seed(seed)
    dtype = checkpoint.z_star.dtype

    def noise(n: int, height: int, width: int) -> torch.Tensor:
        if fresh_noise and n <= start_scale:
            sigma = checkpoint.noise_schedule.sigma(n)
            return sigma * torch.randn(
                (1, IMAGE_CHANNELS, height, width), generator=rng, dtype=dtype
            )
        return checkpoint.reconstruction_noise(n, height, width)

    generators = [model.generator for model in checkpoint.scale_models]
    return run_cascade(generators, checkpoint.shapes, noise, dtype=dtype)


def reconstruct(checkpoint: Checkpoint) -> Image:
    """Regenerate the training image from the fixed reconstruction noise."""
    generators = [model.generator for model in checkpoint.scale_models]
    return run_cascade(
        generators,
        checkpoint.shapes,
        checkpoint.reconstruction_noise,
        dtype=checkpoint.z_star.dtype,
    )


def deblur_file(
    checkpoint: Checkpoint,
    input_path: str | pathlib.Path,
    output_path: str | pathlib.Path,
    spec: DeblurSpec | None = None,
) -> Image:
    """Load, deblur and save one image; returns the restored image."""
    restored = deblur(checkpoint, load_image(input_path), spec)
    save_image(restored, output_path)
    return restored
