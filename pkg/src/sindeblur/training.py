"""Coarse-to-fine adversarial training of the scale pyramid on one sharp image.

Each scale n minimizes ``L_adv(G_n, D_n) + alpha * L_rec(G_n)``. The adversarial term is
the WGAN-GP critic objective; the reconstruction term asks the cascade driven by the
fixed noise (z*, 0, ..., 0) to reproduce x_n.
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field, fields

import torch
import torch.nn.functional as F
from torch import nn

from .errors import InvalidInputError, TrainingDivergedError
from .imaging import Image, ImagePyramid, check_image, resample, rmse
from .networks import (
    IMAGE_CHANNELS,
    GeneratorConfig,
    ScaleDiscriminator,
    ScaleGenerator,
    calibrate_normalization,
    generator_forward,
    init_discriminator,
    init_generator,
)

logger = logging.getLogger("training")

# Noise for scale n at (height, width); returns an already scaled tensor.
NoiseFn = Callable[[int, int, int], torch.Tensor]


@dataclass
class TrainConfig:
    """Optimization schedule for one training run.

    Attributes
    ----------
        iters_per_scale: Iterations per pyramid level
        d_steps: Critic updates per iteration
        g_steps: Generator updates per iteration
        learning_rate: Adam step size for both networks
        adam_beta1: Adam first-moment decay
        adam_beta2: Adam second-moment decay
        rec_weight_alpha: Weight of the reconstruction term
        gp_weight_lambda: Weight of the gradient penalty
        lr_decay_at: Fraction of iterations after which the learning rate is decayed
        lr_decay_gamma: Learning-rate multiplier applied at that point
        noise_base: sigma_n = noise_base * RMSE of the upsampled reconstruction
        warm_start: Initialize a scale from the next coarser one when widths match (off by default)
        log_every: Iterations between INFO loss lines
        seed: Seed for initialization and every noise draw

    """

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
    seed: int = 0

    def __post_init__(self) -> None:
        """Validate counts and weights."""
        for name in ("iters_per_scale", "d_steps", "g_steps", "log_every"):
            if getattr(self, name) < 1:
                msg = f"{name} must be at least 1, got {getattr(self, name)}"
                raise InvalidInputError(msg)
        for name in ("learning_rate", "rec_weight_alpha", "gp_weight_lambda", "noise_base"):
            if getattr(self, name) < 0:
                msg = f"{name} must be >= 0, got {getattr(self, name)}"
                raise InvalidInputError(msg)
        if not 0.0 <= self.adam_beta1 < 1.0 or not 0.0 <= self.adam_beta2 < 1.0:
            msg = "Adam betas must lie in [0, 1)"
            raise InvalidInputError(msg)
        if not 0.0 < self.lr_decay_at <= 1.0:
            msg = f"lr_decay_at must lie in (0, 1], got {self.lr_decay_at}"
            raise InvalidInputError(msg)

    def to_dict(self) -> dict[str, object]:
        """Plain-dict snapshot for checkpoint metadata."""
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict[str, object]) -> "TrainConfig":
        """Rebuild from ``to_dict`` output, ignoring unknown keys."""
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})  # type: ignore[arg-type]


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-scale noise amplitudes, indexed by pyramid level (``sigmas[n]`` is sigma_n).

    The coarsest amplitude is 1 by convention.
    """

    sigmas: tuple[float, ...]

    def __post_init__(self) -> None:
        """Reject negative amplitudes."""
        if any(s < 0 for s in self.sigmas):
            msg = f"Noise amplitudes must be >= 0, got {self.sigmas}"
            raise InvalidInputError(msg)

    @classmethod
    def empty(cls, num_scales: int) -> "NoiseSchedule":
        """Schedule with every amplitude still zero."""
        return cls(tuple(0.0 for _ in range(num_scales)))

    def sigma(self, n: int) -> float:
        """Amplitude sigma_n."""
        return self.sigmas[n]

    def coarse_to_fine(self) -> list[float]:
        """Amplitudes in training order, sigma_N ... sigma_0."""
        return list(reversed(self.sigmas))


@dataclass
class ScaleModel:
    """Generator and discriminator trained for one pyramid level."""

    scale_index: int
    generator: ScaleGenerator
    discriminator: ScaleDiscriminator

    def freeze(self) -> None:
        """Switch both networks to evaluation mode and stop gradient tracking."""
        for net in (self.generator, self.discriminator):
            net.eval()
            net.requires_grad_(False)


@dataclass
class LossRecord:
    """Decomposed losses of one training iteration."""

    scale: int
    iteration: int
    d_loss: float
    g_adv: float
    g_rec: float
    g_total: float
    sigma: float


@dataclass
class Checkpoint:
    """Everything needed to regenerate, sample from, or deblur with a trained pyramid.

    Attributes
    ----------
        scale_models: One ScaleModel per level, indexed by n (0 is the finest)
        z_star: Fixed coarsest-scale reconstruction noise
        noise_schedule: sigma_n per level
        shapes: (height, width) per level
        scale_factor: Pyramid ratio r
        min_size: Pyramid floor used in training
        max_size: Pyramid cap used in training
        config_snapshot: The TrainConfig the run used
        network: Architecture of every scale
        history: Per-iteration loss decomposition (written as CSV, not reloaded)

    """

    scale_models: list[ScaleModel]
    z_star: torch.Tensor
    noise_schedule: NoiseSchedule
    shapes: list[tuple[int, int]]
    scale_factor: float
    min_size: int
    max_size: int
    config_snapshot: TrainConfig
    network: GeneratorConfig = field(default_factory=GeneratorConfig)
    history: list[LossRecord] = field(default_factory=list)
    format_version: int = 2

    def __post_init__(self) -> None:
        """Check the structural invariants."""
        if not self.scale_models:
            msg = "A checkpoint needs at least one trained scale"
            raise InvalidInputError(msg)
        if len(self.scale_models) != len(self.shapes) or len(self.noise_schedule.sigmas) != len(
            self.shapes
        ):
            msg = "scale_models, shapes and noise schedule must have one entry per scale"
            raise InvalidInputError(msg)
        if tuple(self.z_star.shape[2:]) != tuple(self.shapes[-1]):
            msg = f"z_star {tuple(self.z_star.shape)} does not match coarsest {self.shapes[-1]}"
            raise InvalidInputError(msg)

    @property
    def num_scales(self) -> int:
        """Number of trained levels, N + 1."""
        return len(self.scale_models)

    @property
    def coarsest(self) -> int:
        """Index N of the coarsest level."""
        return len(self.scale_models) - 1

    def generator(self, n: int) -> ScaleGenerator:
        """G_n."""
        return self.scale_models[n].generator

    def reconstruction_noise(self, n: int, height: int, width: int) -> torch.Tensor:
        """z^rec at level n: z* at the coarsest level, zeros elsewhere."""
        if n == self.coarsest:
            return self.z_star
        return torch.zeros((1, IMAGE_CHANNELS, height, width), dtype=self.z_star.dtype)


def reconstruction_loss(gen_out: Image, x_n: Image) -> torch.Tensor:
    """Mean squared error between the reconstruction-path output and x_n."""
    if gen_out.shape != x_n.shape:
        msg = f"Shape mismatch: {tuple(gen_out.shape)} vs {tuple(x_n.shape)}"
        raise InvalidInputError(msg)
    return F.mse_loss(gen_out, x_n)


def interpolate(real: Image, fake: Image, seed: int) -> Image:
    """Random points on the segments between real and fake samples, one epsilon per sample."""
    if real.shape != fake.shape:
        msg = f"Shape mismatch: {tuple(real.shape)} vs {tuple(fake.shape)}"
        raise InvalidInputError(msg)
    rng = torch.Generator().manual_seed(seed)
    eps = torch.rand((real.shape[0], 1, 1, 1), generator=rng, dtype=real.dtype)
    return eps * real.detach() + (1.0 - eps) * fake.detach()


def gradient_penalty(d: nn.Module, real: Image, fake: Image, seed: int) -> torch.Tensor:
    """Mean of (||grad D(x_hat)||_2 - 1)^2 over the interpolates x_hat.

    The gradient is taken of the summed score map, so every patch score contributes.
    """
    x_hat = interpolate(real, fake, seed).requires_grad_(True)
    scores = d(x_hat)
    (grads,) = torch.autograd.grad(
        outputs=scores,
        inputs=x_hat,
        grad_outputs=torch.ones_like(scores),
        create_graph=True,
        allow_unused=True,
    )
    if grads is None:
        grads = torch.zeros_like(x_hat)
    norms = grads.reshape(grads.shape[0], -1).norm(2, dim=1)
    return ((norms - 1.0) ** 2).mean()


def adversarial_d_loss(
    d: nn.Module, real: Image, fake: Image, gp_weight: float, seed: int
) -> torch.Tensor:
    """WGAN-GP critic loss: mean D(fake) - mean D(real) + gp_weight * penalty."""
    if real.shape != fake.shape:
        msg = f"Shape mismatch: {tuple(real.shape)} vs {tuple(fake.shape)}"
        raise InvalidInputError(msg)
    fake = fake.detach()
    loss = d(fake).mean() - d(real).mean()
    return loss + gp_weight * gradient_penalty(d, real, fake, seed)


def adversarial_g_loss(d: nn.Module, fake: Image) -> torch.Tensor:
    """Generator side of the critic objective: -mean D(fake)."""
    return -d(fake).mean()


@dataclass
class GeneratorLoss:
    """Decomposition of the generator objective."""

    adv: torch.Tensor
    rec: torch.Tensor
    weighted_rec: torch.Tensor
    total: torch.Tensor


def generator_losses(
    d: nn.Module, fake: Image, rec_out: Image, x_n: Image, alpha: float
) -> GeneratorLoss:
    """Adversarial term on a random sample plus alpha-weighted reconstruction term."""
    adv = adversarial_g_loss(d, fake)
    rec = reconstruction_loss(rec_out, x_n)
    weighted = alpha * rec
    return GeneratorLoss(adv=adv, rec=rec, weighted_rec=weighted, total=adv + weighted)


def update_noise_schedule(
    schedule: NoiseSchedule,
    n: int,
    x_n: Image,
    rec_prev_up: Image | None,
    noise_base: float,
) -> NoiseSchedule:
    """Set sigma_n before scale n is trained.

    Args:
    ----
        schedule: Amplitudes so far
        n: Level about to be trained
        x_n: Training image at that level
        rec_prev_up: Coarser reconstruction upsampled to level n, or None at the coarsest
        noise_base: Proportionality constant

    Returns:
    -------
        A new schedule with sigma_n = 1 at the coarsest level, otherwise
        noise_base * RMSE(rec_prev_up, x_n)

    """
    sigma = 1.0 if rec_prev_up is None else noise_base * rmse(rec_prev_up, x_n)
    sigmas = list(schedule.sigmas)
    sigmas[n] = sigma
    return NoiseSchedule(tuple(sigmas))


def run_cascade(
    generators: dict[int, ScaleGenerator] | list[ScaleGenerator],
    shapes: list[tuple[int, int]],
    noise: NoiseFn,
    down_to: int = 0,
    dtype: torch.dtype = torch.float32,
) -> Image:
    """Run frozen generators from the coarsest level down to ``down_to``.

    Args:
    ----
        generators: G_n by level; every level from ``down_to`` to the coarsest must exist
        shapes: (height, width) by level
        noise: Returns the scaled noise for (level, height, width)
        down_to: Finest level to evaluate
        dtype: Sample dtype

    Returns:
    -------
        The output of G_down_to

    """
    coarsest = len(shapes) - 1
    height, width = shapes[coarsest]
    prev = torch.zeros((1, IMAGE_CHANNELS, height, width), dtype=dtype)
    out = prev
    with torch.no_grad():
        for n in range(coarsest, down_to - 1, -1):
            height, width = shapes[n]
            prev_up = prev if n == coarsest else resample(prev, height, width)
            out = generator_forward(generators[n], noise(n, height, width), prev_up)
            prev = out
    return out


def _derive_seed(seed: int, n: int, role: int) -> int:
    return seed * 1_000 + 2 * n + role


def _check_finite(value: torch.Tensor, scale: int, iteration: int, term: str) -> None:
    if not math.isfinite(value.detach().item()):
        raise TrainingDivergedError(scale, iteration, term)


def _prev_sampler(
    n: int,
    shapes: list[tuple[int, int]],
    generators: dict[int, ScaleGenerator],
    schedule: NoiseSchedule,
    rng: torch.Generator,
    dtype: torch.dtype,
) -> Callable[[], Image]:
    """Return a callable drawing a fresh coarser-cascade sample upsampled to level n."""
    height, width = shapes[n]
    coarsest = len(shapes) - 1

    def fresh(k: int, h: int, w: int) -> torch.Tensor:
        return schedule.sigma(k) * torch.randn(
            (1, IMAGE_CHANNELS, h, w), generator=rng, dtype=dtype
        )

    def sample() -> Image:
        if n == coarsest:
            return torch.zeros((1, IMAGE_CHANNELS, height, width), dtype=dtype)
        coarse = run_cascade(generators, shapes, fresh, down_to=n + 1, dtype=dtype)
        return resample(coarse, height, width)

    return sample


def _train_scale(
    n: int,
    model: ScaleModel,
    x_n: Image,
    rec_noise: torch.Tensor,
    rec_prev_up: Image,
    sample_prev_up: Callable[[], Image],
    sigma: float,
    config: TrainConfig,
    rng: torch.Generator,
    history: list[LossRecord],
) -> None:
    g, d = model.generator, model.discriminator
    g.train()
    d.train()
    betas = (config.adam_beta1, config.adam_beta2)
    opt_d = torch.optim.Adam(d.parameters(), lr=config.learning_rate, betas=betas)
    opt_g = torch.optim.Adam(g.parameters(), lr=config.learning_rate, betas=betas)
    milestone = [max(1, int(config.lr_decay_at * config.iters_per_scale))]
    sched_d = torch.optim.lr_scheduler.MultiStepLR(opt_d, milestone, config.lr_decay_gamma)
    sched_g = torch.optim.lr_scheduler.MultiStepLR(opt_g, milestone, config.lr_decay_gamma)

    for it in range(1, config.iters_per_scale + 1):
        for _ in range(config.d_steps):
            prev_up = sample_prev_up()
            noise = sigma * torch.randn(x_n.shape, generator=rng, dtype=x_n.dtype)
            with torch.no_grad():
                fake = g(noise, prev_up)
            gp_seed = int(torch.randint(0, 2**31 - 1, (1,), generator=rng))
            d_loss = adversarial_d_loss(d, x_n, fake, config.gp_weight_lambda, gp_seed)
            _check_finite(d_loss, n, it, "discriminator loss")
            opt_d.zero_grad()
            d_loss.backward()
            opt_d.step()

        for _ in range(config.g_steps):
            fake = g(noise, prev_up)
            rec_out = g(rec_noise, rec_prev_up)
            losses = generator_losses(d, fake, rec_out, x_n, config.rec_weight_alpha)
            _check_finite(losses.total, n, it, "generator loss")
            opt_g.zero_grad()
            losses.total.backward()
            opt_g.step()

        sched_d.step()
        sched_g.step()
        record = LossRecord(
            scale=n,
            iteration=it,
            d_loss=d_loss.detach().item(),
            g_adv=losses.adv.detach().item(),
            g_rec=losses.rec.detach().item(),
            g_total=losses.total.detach().item(),
            sigma=sigma,
        )
        history.append(record)
        if it % config.log_every == 0 or it == config.iters_per_scale:
            logger.info(
                "Scale %d iter %d/%d: d=%.4f g_adv=%.4f g_rec=%.5f",
                n,
                it,
                config.iters_per_scale,
                record.d_loss,
                record.g_adv,
                record.g_rec,
            )
        else:
            logger.debug(
                "Scale %d iter %d: d=%.4f g_adv=%.4f g_rec=%.5f",
                n,
                it,
                record.d_loss,
                record.g_adv,
                record.g_rec,
            )


def train_all_scales(
    pyramid: ImagePyramid,
    config: TrainConfig,
    network: GeneratorConfig | None = None,
) -> Checkpoint:
    """Train every level from the coarsest to the finest and return the checkpoint.

    Scales already trained are frozen before the next one starts, with their generator
    normalization calibrated on the reconstruction input. Given the same
    pyramid, config and network, the result is deterministic on one platform.

    Args:
    ----
        pyramid: The training image's pyramid
        config: Optimization schedule and seed
        network: Architecture; defaults to GeneratorConfig()

    Returns:
    -------
        The trained Checkpoint, including the loss history

    Raises:
    ------
        TrainingDivergedError: If any loss becomes non-finite
        InvalidInputError: If a level is too small for the discriminator

    """
    network = network or GeneratorConfig()
    for level in pyramid.levels:
        check_image(level)
    too_small = [s for s in pyramid.shapes if min(s) <= 2 * network.num_blocks]
    if too_small:
        msg = (
            f"Pyramid levels {too_small} are too small for {network.num_blocks}-block "
            "discriminators; raise min_size"
        )
        raise InvalidInputError(msg)

    shapes = pyramid.shapes
    coarsest = pyramid.coarsest
    dtype = pyramid.levels[0].dtype
    rng = torch.Generator().manual_seed(config.seed)
    z_star = torch.randn((1, IMAGE_CHANNELS, *shapes[coarsest]), generator=rng, dtype=dtype)

    schedule = NoiseSchedule.empty(pyramid.num_scales)
    models: dict[int, ScaleModel] = {}
    generators: dict[int, ScaleGenerator] = {}
    history: list[LossRecord] = []
    rec_prev: Image | None = None

    for n in range(coarsest, -1, -1):
        x_n = pyramid.levels[n]
        height, width = shapes[n]
        rec_prev_up = None if rec_prev is None else resample(rec_prev, height, width)
        schedule = update_noise_schedule(schedule, n, x_n, rec_prev_up, config.noise_base)
        sigma = schedule.sigma(n)
        if rec_prev_up is None:
            rec_prev_up = torch.zeros_like(x_n)

        generator = init_generator(network, n, _derive_seed(config.seed, n, 0))
        discriminator = init_discriminator(network, n, _derive_seed(config.seed, n, 1))
        coarser = models.get(n + 1)
        if config.warm_start and coarser is not None:
            if coarser.generator.channels == generator.channels:
                generator.load_state_dict(coarser.generator.state_dict())
            if coarser.discriminator.channels == discriminator.channels:
                discriminator.load_state_dict(coarser.discriminator.state_dict())
        model = ScaleModel(scale_index=n, generator=generator, discriminator=discriminator)
        logger.info(
            "Training scale %d (%dx%d, %d channels), sigma=%.4f",
            n,
            height,
            width,
            generator.channels,
            sigma,
        )

        rec_noise = z_star if n == coarsest else torch.zeros_like(x_n)

        sample_prev_up = _prev_sampler(n, shapes, generators, schedule, rng, dtype)
        _train_scale(
            n,
            model,
            x_n,
            rec_noise,
            rec_prev_up,
            sample_prev_up,
            sigma,
            config,
            rng,
            history,
        )
        calibrate_normalization(generator, rec_noise, rec_prev_up)
        model.freeze()
        models[n] = model
        generators[n] = generator
        with torch.no_grad():
            rec_prev = generator_forward(generator, rec_noise, rec_prev_up)
        logger.info("Scale %d done: reconstruction RMSE %.4f", n, rmse(rec_prev, x_n))

    return Checkpoint(
        scale_models=[models[n] for n in range(pyramid.num_scales)],
        z_star=z_star,
        noise_schedule=schedule,
        shapes=list(shapes),
        scale_factor=pyramid.scale_factor,
        min_size=pyramid.min_size,
        max_size=pyramid.max_size,
        config_snapshot=config,
        network=network,
        history=history,
    )
