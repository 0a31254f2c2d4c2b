"""sin-deblur main entry point.

Train a single-image multi-scale GAN on one sharp picture, then use its finest
generator to deblur images; plus blur simulation, sampling and evaluation helpers.

Exit codes: 0 on success, 1 when training diverges or the requested deblurring
iterations are inadmissible, 2 for input, configuration and I/O errors.
"""

import argparse
import asyncio
import logging
import pathlib
import sys
from collections.abc import Awaitable, Callable

from . import __version__
from .blur_sim import (
    BlurSpec,
    MotionKernel,
    apply_blur,
    linear_motion_kernel,
    load_kernel_text,
    random_trajectory_kernel,
    save_kernel_text,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .cli_utils import (
    AnsiColors,
    colorize,
    print_error,
    print_loss_summary,
    print_metric_report,
)
from .dataset import discover_pairs, match_directories, sample_pairs
from .errors import (
    ConfigError,
    InadmissibleIterationsError,
    InvalidInputError,
    TrainingDivergedError,
)
from .imaging import Image, build_pyramid, load_image, rmse, save_image
from .inference import deblur, deblur_file, generate_sample, reconstruct
from .metrics import evaluate_pairs_async, write_report
from .run_config import RunConfig
from .training import Checkpoint, train_all_scales

logger = logging.getLogger("sin_deblur")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_INPUT = 2


def _out_dir(config: RunConfig) -> pathlib.Path:
    out = pathlib.Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    config.write_echo(out)
    return out


def _checkpoint_dir(config: RunConfig, out: pathlib.Path) -> pathlib.Path:
    return pathlib.Path(config.checkpoint_dir) if config.checkpoint_dir else out / "checkpoint"


def _train_on(image: Image, config: RunConfig) -> tuple[Checkpoint, Image]:
    pyramid = build_pyramid(image, config.scale_factor_r, config.min_size, config.max_size)
    checkpoint = train_all_scales(pyramid, config.train_config(), config.network_config())
    return checkpoint, pyramid.levels[0]


async def cmd_train(config: RunConfig) -> int:
    """Build the pyramid for ``train_image``, train every scale and save the checkpoint."""
    config.require("train_image")
    image = load_image(config.train_image)  # type: ignore[arg-type]
    out = _out_dir(config)
    checkpoint, finest = _train_on(image, config)
    ck_dir = save_checkpoint(checkpoint, _checkpoint_dir(config, out))

    rec = reconstruct(checkpoint)
    save_image(rec, out / "reconstruction.png")
    print_loss_summary(checkpoint.history)
    print(f"Trained {checkpoint.num_scales} scales; checkpoint written to {ck_dir}")
    print(f"Reconstruction RMSE: {rmse(rec, finest):.4f}")
    return EXIT_OK


async def cmd_deblur(config: RunConfig) -> int:
    """Deblur ``input`` with the checkpoint's finest generator."""
    config.require("checkpoint_dir", "input")
    checkpoint = load_checkpoint(config.checkpoint_dir)  # type: ignore[arg-type]
    out = _out_dir(config)
    output = pathlib.Path(config.output) if config.output else out / "deblurred.png"
    spec = config.deblur_spec()
    restored = deblur_file(checkpoint, config.input, output, spec)  # type: ignore[arg-type]
    height, width = int(restored.shape[2]), int(restored.shape[3])
    print(f"Deblurred with k={spec.k_iterations}: {height}x{width} -> {output}")
    return EXIT_OK


def _kernel(config: RunConfig) -> MotionKernel:
    if config.blur_kind == "file":
        return load_kernel_text(config.blur_kernel_file)  # type: ignore[arg-type]
    if config.blur_kind == "trajectory":
        return random_trajectory_kernel(config.seed, config.blur_kernel_size)
    return linear_motion_kernel(
        config.blur_length_px, config.blur_angle_deg, config.blur_kernel_size
    )


async def cmd_simulate_blur(config: RunConfig) -> int:
    """Blur ``input`` with a synthetic motion kernel and optional noise."""
    config.require("input")
    image = load_image(config.input)  # type: ignore[arg-type]
    kernel = _kernel(config)
    blurred = apply_blur(
        image, BlurSpec(kernel=kernel, noise_sigma=config.blur_noise_sigma, seed=config.seed)
    )
    out = _out_dir(config)
    output = pathlib.Path(config.output) if config.output else out / "blurred.png"
    save_image(blurred, output)
    save_kernel_text(kernel, out / "kernel.txt")
    print(f"Blurred image written to {output} ({kernel.size}x{kernel.size} kernel)")
    return EXIT_OK


async def cmd_evaluate(config: RunConfig) -> int:
    """Score restored images against references matched by relative path."""
    config.require("restored_dir", "reference_dir")
    index = match_directories(config.restored_dir, config.reference_dir)  # type: ignore[arg-type]
    if not index.pairs:
        msg = f"No matching images between {config.restored_dir} and {config.reference_dir}"
        raise InvalidInputError(msg)
    out = _out_dir(config)
    report = await evaluate_pairs_async(
        [(p.blur, p.sharp) for p in index.pairs],
        ids=[p.pair_id for p in index.pairs],
        max_workers=config.eval_workers,
    )
    print_metric_report(report)
    csv_path, json_path = write_report(report, out)
    print(f"Report: {csv_path} {json_path}")
    return EXIT_OK


async def cmd_reconstruct(config: RunConfig) -> int:
    """Regenerate the training image from the reconstruction noise."""
    config.require("checkpoint_dir")
    checkpoint = load_checkpoint(config.checkpoint_dir)  # type: ignore[arg-type]
    out = _out_dir(config)
    output = pathlib.Path(config.output) if config.output else out / "reconstruction.png"
    save_image(reconstruct(checkpoint), output)
    print(f"Reconstruction written to {output}")
    return EXIT_OK


async def cmd_sample(config: RunConfig) -> int:
    """Draw ``num_samples`` random images, seeds ``seed`` upward."""
    config.require("checkpoint_dir")
    checkpoint = load_checkpoint(config.checkpoint_dir)  # type: ignore[arg-type]
    start = checkpoint.coarsest if config.start_scale < 0 else config.start_scale
    out = _out_dir(config)
    for i in range(config.num_samples):
        seed = config.seed + i
        path = out / f"sample_{seed}.png"
        save_image(generate_sample(checkpoint, start, seed), path)
        print(f"Sample (start scale {start}, seed {seed}) written to {path}")
    return EXIT_OK


async def cmd_benchmark(config: RunConfig) -> int:
    """Deblur dataset pairs and score restored and blurry images against the sharp ones.

    With ``checkpoint_dir`` set every pair is deblurred by that checkpoint; otherwise a
    fresh pyramid is trained on each pair's sharp image first.
    """
    config.require("dataset_root")
    shared = load_checkpoint(config.checkpoint_dir) if config.checkpoint_dir else None
    index = discover_pairs(config.dataset_root)  # type: ignore[arg-type]
    if not index.pairs:
        msg = f"No blurry/sharp pairs found under {config.dataset_root}"
        raise InvalidInputError(msg)
    pairs = sample_pairs(index, config.eval_limit or len(index.pairs), config.seed)
    out = _out_dir(config)
    spec = config.deblur_spec()

    restored_paths = []
    for pair in pairs:
        target = (out / "restored" / pair.pair_id).with_suffix(".png")
        target.parent.mkdir(parents=True, exist_ok=True)
        if shared is None:
            logger.info("Training on %s", pair.sharp)
            checkpoint, _ = _train_on(load_image(pair.sharp), config)
        else:
            checkpoint = shared
        save_image(deblur(checkpoint, load_image(pair.blur), spec), target)
        restored_paths.append(target)
        logger.info("Deblurred %s", pair.pair_id)

    ids = [p.pair_id for p in pairs]
    restored = await evaluate_pairs_async(
        list(zip(restored_paths, [p.sharp for p in pairs], strict=True)),
        ids=ids,
        max_workers=config.eval_workers,
    )
    blurry = await evaluate_pairs_async(
        [(p.blur, p.sharp) for p in pairs], ids=ids, max_workers=config.eval_workers
    )
    print_metric_report(blurry, "Blurry input vs sharp")
    print_metric_report(restored, f"Deblurred (k={spec.k_iterations}) vs sharp")
    write_report(blurry, out, "metrics_blurry")
    csv_path, json_path = write_report(restored, out, "metrics_restored")
    print(f"Report: {csv_path} {json_path}")
    return EXIT_OK


COMMANDS: dict[str, Callable[[RunConfig], Awaitable[int]]] = {
    "train": cmd_train,
    "deblur": cmd_deblur,
    "simulate-blur": cmd_simulate_blur,
    "evaluate": cmd_evaluate,
    "reconstruct": cmd_reconstruct,
    "sample": cmd_sample,
    "benchmark": cmd_benchmark,
}


async def main_async(argv: list[str] | None = None) -> int:
    """Run the subcommand named in ``argv`` and return its exit code."""
    args = _parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        config = RunConfig.from_args(args)
        logger.debug("%s", config)
        return await COMMANDS[args.command](config)
    except (TrainingDivergedError, InadmissibleIterationsError) as e:
        print_error(str(e))
        return EXIT_RUNTIME
    except (ConfigError, InvalidInputError, OSError) as e:
        print_error(str(e))
        return EXIT_INPUT
    except KeyboardInterrupt:
        print(colorize("Interrupted", AnsiColors.YELLOW), file=sys.stderr)
        return EXIT_RUNTIME


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="Config file of 'key = value' lines")
    common.add_argument("--seed", type=int, help="Seed for every random draw (default: 0)")
    common.add_argument("--out", help="Output directory (default: runs/latest)")
    common.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="Override any config key; may be repeated",
    )
    common.add_argument(
        "--verbose", "-v", action="store_true", help="Log per-iteration training losses"
    )
    return common


def _parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="sin-deblur",
        parents=[common],
        argument_default=argparse.SUPPRESS,
        description="Single-image multi-scale GAN training and blind motion deblurring",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        return sub.add_parser(
            name, parents=[common], help=help_text, argument_default=argparse.SUPPRESS
        )

    train = add("train", "Train a checkpoint on one sharp image")
    train.add_argument("--image", dest="train_image", help="The sharp training image")
    train.add_argument("--checkpoint-dir", help="Where to write the checkpoint")
    train.add_argument("--iters", dest="iters_per_scale", type=int, help="Iterations per scale")
    train.add_argument("--scale-factor", dest="scale_factor_r", type=float, help="Pyramid r")
    train.add_argument("--min-size", type=int, help="Coarsest level's smaller side")
    train.add_argument("--max-size", type=int, help="Finest level's larger side")

    deblur_cmd = add("deblur", "Deblur one image with a trained checkpoint")
    deblur_cmd.add_argument("--checkpoint-dir", help="A trained checkpoint directory")
    deblur_cmd.add_argument("--input", help="The blurry image")
    deblur_cmd.add_argument("--output", help="Where to write the restored PNG")
    deblur_cmd.add_argument("-k", dest="k_iterations", type=int, help="Generator passes")
    deblur_cmd.add_argument(
        "--noise-scale", dest="inference_noise_scale", type=float, help="Multiplier on sigma_0"
    )

    simulate = add("simulate-blur", "Apply a synthetic motion blur to an image")
    simulate.add_argument("--input", help="The sharp image")
    simulate.add_argument("--output", help="Where to write the blurred PNG")
    simulate.add_argument("--kind", dest="blur_kind", help="linear, trajectory or file")
    simulate.add_argument("--length", dest="blur_length_px", type=float, help="Motion length")
    simulate.add_argument("--angle", dest="blur_angle_deg", type=float, help="Motion angle")
    simulate.add_argument("--kernel-size", dest="blur_kernel_size", type=int, help="Odd size")
    simulate.add_argument("--kernel-file", dest="blur_kernel_file", help="Text kernel grid")
    simulate.add_argument("--noise-sigma", dest="blur_noise_sigma", type=float, help="Noise")

    evaluate = add("evaluate", "Compute PSNR and SSIM of restored images")
    evaluate.add_argument("--restored-dir", help="Restored images")
    evaluate.add_argument("--reference-dir", help="Reference images (same relative paths)")
    evaluate.add_argument("--workers", dest="eval_workers", type=int, help="Concurrent pairs")

    rec = add("reconstruct", "Regenerate the training image from a checkpoint")
    rec.add_argument("--checkpoint-dir", help="A trained checkpoint directory")
    rec.add_argument("--output", help="Where to write the PNG")

    sample = add("sample", "Draw random images from a checkpoint")
    sample.add_argument("--checkpoint-dir", help="A trained checkpoint directory")
    sample.add_argument("--start-scale", type=int, help="Coarsest scale with fresh noise")
    sample.add_argument("--num-samples", type=int, help="How many images to draw")

    bench = add("benchmark", "Deblur and score pairs from a GoPro-style dataset")
    bench.add_argument("--checkpoint-dir", help="Checkpoint to reuse (default: train per pair)")
    bench.add_argument("--dataset-root", help="Folder with blur/ and sharp/ (or sequences)")
    bench.add_argument("--limit", dest="eval_limit", type=int, help="Random subset size")
    bench.add_argument("-k", dest="k_iterations", type=int, help="Generator passes")
    bench.add_argument("--workers", dest="eval_workers", type=int, help="Concurrent pairs")

    args = parser.parse_args(argv)
    if not hasattr(args, "verbose"):
        args.verbose = False
    return args


def main() -> None:
    """Launch async main function and exit with its code."""
    sys.exit(asyncio.run(main_async()))


if __name__ == "__main__":
    main()
