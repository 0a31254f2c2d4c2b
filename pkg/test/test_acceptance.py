"""
Desk-scale end-to-end runs: multi-scale training on a 64x64 scene, reconstruction
fidelity, loss trends and a deblurring floor. Deselected by default; run with
``pytest -m slow``.
"""

import pytest

from sindeblur.blur_sim import BlurSpec, apply_blur, linear_motion_kernel
from sindeblur.imaging import build_pyramid, rmse
from sindeblur.inference import DeblurSpec, deblur, reconstruct
from sindeblur.metrics import psnr
from sindeblur.networks import GeneratorConfig
from sindeblur.training import Checkpoint, TrainConfig, train_all_scales

from .image_fixtures import synthetic_scene
from .logging_config import configure_logging

pytestmark = [pytest.mark.slow, pytest.mark.timeout(3600)]

ITERATIONS = 800
WINDOW = 100


@pytest.fixture(scope="module")
def scene():
    return synthetic_scene(64, 64, seed=0)


@pytest.fixture(scope="module")
def trained(scene) -> Checkpoint:
    configure_logging()
    pyramid = build_pyramid(scene, 0.75, 12, 250)
    config = TrainConfig(iters_per_scale=ITERATIONS, d_steps=3, g_steps=3, seed=0)
    return train_all_scales(pyramid, config, GeneratorConfig(num_blocks=5, base_channels=32))


def test_pyramid_has_five_scales(trained: Checkpoint) -> None:
    """Test that a 64x64 scene with a 12 px floor gives five levels."""
    assert trained.num_scales == 5
    assert trained.shapes[0] == (64, 64)


def test_reconstruction_fidelity(trained: Checkpoint, scene) -> None:
    """Test that the fixed reconstruction noise regenerates the training scene."""
    assert rmse(reconstruct(trained), scene) <= 0.15


def test_losses_fall_at_every_scale(trained: Checkpoint) -> None:
    """Test that total and reconstruction losses fall over training at every scale."""
    for n in range(trained.num_scales):
        records = [r for r in trained.history if r.scale == n]
        assert len(records) == ITERATIONS
        first = records[:WINDOW]
        last = records[-WINDOW:]
        first_total = sum(r.g_total for r in first) / WINDOW
        last_total = sum(r.g_total for r in last) / WINDOW
        first_rec = sum(r.g_rec for r in first) / WINDOW
        last_rec = sum(r.g_rec for r in last) / WINDOW
        assert last_total < first_total, f"scale {n}"
        assert last_rec <= 0.5 * first_rec, f"scale {n}"


def test_deblur_floor(trained: Checkpoint, scene) -> None:
    """Test that deblurring a blurred copy of the training scene loses at most 0.5 dB."""
    sharp = scene
    blurry = apply_blur(
        sharp, BlurSpec(kernel=linear_motion_kernel(5.0, 0.0, 5), noise_sigma=0.01, seed=0)
    )
    restored = deblur(trained, blurry, DeblurSpec(k_iterations=3))
    assert psnr(restored, sharp) >= psnr(blurry, sharp) - 0.5
