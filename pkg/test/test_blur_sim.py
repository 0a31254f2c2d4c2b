"""
Tests for motion kernels and the blur degradation.
"""

import tempfile
from pathlib import Path

import numpy as np
import pytest
import torch

from sindeblur.blur_sim import (
    BlurSpec,
    MotionKernel,
    apply_blur,
    delta_kernel,
    gaussian_noise_only,
    linear_motion_kernel,
    load_kernel_text,
    random_trajectory_kernel,
    save_kernel_text,
)
from sindeblur.errors import InvalidInputError

from .image_fixtures import random_image


def _reflect(idx: int, n: int) -> int:
    # Half-sample symmetric: d c b a | a b c d | d c b a
    while idx < 0 or idx >= n:
        idx = -idx - 1 if idx < 0 else 2 * n - idx - 1
    return idx


def _loop_convolve(img: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Direct quadruple-loop convolution with symmetric reflection at the borders."""
    _, h, w = img.shape
    k = weights.shape[0]
    c = k // 2
    out = np.zeros_like(img)
    for ch in range(img.shape[0]):
        for i in range(h):
            for j in range(w):
                total = 0.0
                for u in range(k):
                    for v in range(k):
                        src = img[ch, _reflect(i + c - u, h), _reflect(j + c - v, w)]
                        total += weights[u, v] * src
                out[ch, i, j] = total
    return out


class TestMotionKernel:
    """Tests for kernel construction and validation."""

    @pytest.mark.parametrize("angle", [0.0, 10.0, 33.0, 45.0, 90.0, 135.0, 217.5])
    def test_length_one_is_delta(self, angle: float) -> None:
        """Test that a one-pixel motion gives the delta kernel at any angle."""
        kernel = linear_motion_kernel(1.0, angle, 5)
        assert np.array_equal(kernel.weights, delta_kernel(5).weights)

    def test_horizontal_five_taps(self) -> None:
        """Test the taps of a horizontal five-pixel motion."""
        kernel = linear_motion_kernel(5.0, 0.0, 7)
        expected = np.zeros((7, 7))
        expected[3, 1:6] = 0.2
        assert np.allclose(kernel.weights, expected, atol=1e-12)

    @pytest.mark.parametrize("length", [2.0, 3.0, 4.5, 7.0])
    def test_vertical_is_transpose_of_horizontal(self, length: float) -> None:
        """Test that vertical motion is the transpose of horizontal motion."""
        horizontal = linear_motion_kernel(length, 0.0, 9)
        vertical = linear_motion_kernel(length, 90.0, 9)
        assert np.allclose(vertical.weights, horizontal.weights.T, atol=1e-12)

    @pytest.mark.parametrize(("length", "angle"), [(3.0, 10.0), (6.5, 45.0), (9.0, 123.0)])
    def test_normalized(self, length: float, angle: float) -> None:
        """Test that linear kernels are non-negative and sum to one."""
        kernel = linear_motion_kernel(length, angle, 9)
        assert abs(kernel.weights.sum() - 1.0) <= 1e-9
        assert (kernel.weights >= 0).all()

    def test_even_size_rejected(self) -> None:
        """Test that an even kernel size is rejected."""
        with pytest.raises(InvalidInputError):
            linear_motion_kernel(3.0, 0.0, 6)
        with pytest.raises(InvalidInputError):
            random_trajectory_kernel(0, 8)

    def test_length_larger_than_size_rejected(self) -> None:
        """Test that a motion longer than the support is rejected."""
        with pytest.raises(InvalidInputError):
            linear_motion_kernel(9.0, 0.0, 7)

    def test_unnormalized_weights_rejected(self) -> None:
        """Test that weights not summing to one are rejected."""
        with pytest.raises(InvalidInputError):
            MotionKernel(np.full((3, 3), 0.2))

    def test_negative_weights_rejected(self) -> None:
        """Test that negative weights are rejected."""
        weights = np.zeros((3, 3))
        weights[1, 1] = 1.5
        weights[0, 0] = -0.5
        with pytest.raises(InvalidInputError):
            MotionKernel(weights)

    def test_trajectory_is_deterministic(self) -> None:
        """Test that equal seeds give equal trajectory kernels."""
        a = random_trajectory_kernel(42, 11)
        b = random_trajectory_kernel(42, 11)
        assert np.array_equal(a.weights, b.weights)
        assert not np.array_equal(a.weights, random_trajectory_kernel(43, 11).weights)

    def test_trajectory_single_step_is_delta(self) -> None:
        """Test that a single-step trajectory is the delta kernel."""
        kernel = random_trajectory_kernel(5, 9, steps=1)
        assert np.array_equal(kernel.weights, delta_kernel(9).weights)

    def test_trajectory_structure(self) -> None:
        """Test the support and normalization of trajectory kernels."""
        kernel = random_trajectory_kernel(7, 15, steps=30, jitter=0.5)
        assert abs(kernel.weights.sum() - 1.0) <= 1e-9
        assert np.count_nonzero(kernel.weights) >= 2

    def test_text_round_trip(self) -> None:
        """Test saving and reloading a kernel as text."""
        kernel = random_trajectory_kernel(3, 7)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "kernel.txt"
            save_kernel_text(kernel, path)
            lines = path.read_text().strip().splitlines()
            loaded = load_kernel_text(path)
        assert len(lines) == 7
        assert all(len(line.split(" ")) == 7 for line in lines)
        assert np.array_equal(loaded.weights, kernel.weights)


class TestApplyBlur:
    """Tests for the convolution-plus-noise degradation."""

    def test_delta_kernel_is_identity(self) -> None:
        """Test that blurring with the delta kernel leaves the image unchanged."""
        img = random_image(16, 12, seed=2)
        out = apply_blur(img, BlurSpec(kernel=delta_kernel(3)))
        assert torch.equal(out, img)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_constant_image_is_fixed_point(self, seed: int) -> None:
        """Test that a constant image is unchanged by any kernel."""
        img = torch.full((1, 3, 20, 20), -0.3)
        kernel = random_trajectory_kernel(seed, 9)
        out = apply_blur(img, BlurSpec(kernel=kernel))
        assert float((out - img).abs().max()) <= 1e-6

    def test_linearity(self) -> None:
        """Test that the blur is linear in the image."""
        img = random_image(24, 24, seed=5)
        spec = BlurSpec(kernel=linear_motion_kernel(5.0, 30.0, 7))
        lhs = apply_blur(0.5 * img, spec)
        rhs = 0.5 * apply_blur(img, spec)
        assert float((lhs - rhs).abs().max()) <= 1e-6

    def test_mean_preserved_for_symmetric_kernel(self) -> None:
        """Test that a symmetric kernel keeps the image mean."""
        y, x = np.mgrid[0:24, 0:32].astype(np.float64)
        ramp = 0.02 * x - 0.015 * y - 0.1
        img = torch.from_numpy(np.stack([ramp, -ramp, 0.5 * ramp]).astype(np.float32))
        img = img.unsqueeze(0)
        spec = BlurSpec(kernel=linear_motion_kernel(5.0, 45.0, 7))
        out = apply_blur(img, spec)
        assert abs(float(out.mean()) - float(img.mean())) <= 1e-4

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_loop_oracle(self, seed: int) -> None:
        """Test the convolution against a direct loop with symmetric borders."""
        rng = np.random.default_rng(seed)
        h, w = (int(v) for v in rng.integers(6, 17, size=2))
        k = int(rng.choice([1, 3, 5]))
        weights = rng.random((k, k))
        kernel = MotionKernel(weights / weights.sum())
        img = torch.from_numpy(rng.uniform(-1, 1, (1, 3, h, w))).to(torch.float64)
        out = apply_blur(img, BlurSpec(kernel=kernel))
        expected = _loop_convolve(img[0].numpy(), kernel.weights)
        assert np.abs(out[0].numpy() - expected).max() <= 1e-6

    def test_noise_is_seeded(self) -> None:
        """Test that equal seeds give equal noise."""
        img = random_image(16, 16)
        a = apply_blur(img, gaussian_noise_only(0.05, seed=9))
        b = apply_blur(img, gaussian_noise_only(0.05, seed=9))
        c = apply_blur(img, gaussian_noise_only(0.05, seed=10))
        assert torch.equal(a, b)
        assert not torch.equal(a, c)

    def test_output_is_clipped(self) -> None:
        """Test that blurred and noisy output stays in [-1, 1]."""
        img = torch.full((1, 3, 16, 16), 0.99)
        out = apply_blur(img, gaussian_noise_only(0.5, seed=1))
        assert float(out.max()) <= 1.0
        assert float(out.min()) >= -1.0

    def test_dimensions_and_dtype_preserved(self) -> None:
        """Test that blurring keeps the image shape and dtype."""
        img = random_image(13, 29)
        out = apply_blur(img, BlurSpec(kernel=linear_motion_kernel(3.0, 0.0, 5)))
        assert out.shape == img.shape
        assert out.dtype == img.dtype

    def test_kernel_larger_than_image_rejected(self) -> None:
        """Test that a kernel wider than the image is rejected."""
        with pytest.raises(InvalidInputError):
            apply_blur(random_image(5, 20), BlurSpec(kernel=delta_kernel(7)))

    def test_negative_noise_rejected(self) -> None:
        """Test that a negative noise level is rejected."""
        with pytest.raises(InvalidInputError):
            BlurSpec(kernel=delta_kernel(1), noise_sigma=-0.1)
