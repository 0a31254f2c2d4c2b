"""
Synthetic images and tiny trained checkpoints shared by the tests.
"""

import numpy as np
import torch

from sindeblur.imaging import Image, build_pyramid
from sindeblur.networks import GeneratorConfig
from sindeblur.training import Checkpoint, TrainConfig, train_all_scales

# Smallest architecture GeneratorConfig accepts; keeps CPU training in the seconds range.
TINY_NETWORK = GeneratorConfig(num_blocks=3, base_channels=8, min_channels=8)
# 32x32 with r = 0.75 and min_size 18 gives two levels: 32 and 24.
TINY_MIN_SIZE = 18


def synthetic_scene(height: int, width: int, seed: int = 0) -> Image:
    """Smooth gradients, a bright square and mild texture, with samples in [-0.9, 0.9]."""
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    base = 0.5 * np.sin(x / max(width, 1) * 2 * np.pi) * np.cos(y / max(height, 1) * np.pi)
    channels = [base + 0.2 * c - 0.2 for c in range(3)]
    img = np.stack(channels)
    img[:, height // 4 : height // 2, width // 4 : width // 2] = 0.8
    img += 0.05 * rng.standard_normal(img.shape)
    img = np.clip(img, -0.9, 0.9)
    return torch.from_numpy(img.astype(np.float32)).unsqueeze(0)


def random_image(height: int, width: int, seed: int = 0) -> Image:
    """Uniform random samples in [-1, 1]."""
    gen = torch.Generator().manual_seed(seed)
    return torch.rand((1, 3, height, width), generator=gen) * 2.0 - 1.0


def tiny_train_config(iters: int = 5, seed: int = 0) -> TrainConfig:
    return TrainConfig(iters_per_scale=iters, d_steps=1, g_steps=1, log_every=iters, seed=seed)


def tiny_checkpoint(iters: int = 5, seed: int = 0) -> Checkpoint:
    """Two-scale checkpoint trained for a handful of iterations on a 32x32 scene."""
    pyramid = build_pyramid(synthetic_scene(32, 32), 0.75, TINY_MIN_SIZE, 250)
    return train_all_scales(pyramid, tiny_train_config(iters, seed), TINY_NETWORK)
