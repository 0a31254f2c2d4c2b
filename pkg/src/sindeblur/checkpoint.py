"""Checkpoint directories: JSON metadata, per-scale weights and the training log.

Layout::

    <dir>/checkpoint.json   format version, pyramid geometry, noise schedule, configs
    <dir>/scale_<n>.pt      {"generator": ..., "discriminator": ...} (+ "z_star" at N)
    <dir>/train_log.csv     one row per training iteration
"""

import csv
import json
import logging
import pathlib
import pickle
from collections.abc import Callable
from dataclasses import asdict, fields
from typing import Any

import torch

from .errors import CheckpointError, CheckpointVersionError
from .networks import GeneratorConfig, ScaleDiscriminator, ScaleGenerator
from .training import Checkpoint, LossRecord, NoiseSchedule, ScaleModel, TrainConfig

logger = logging.getLogger("checkpoint")

FORMAT_VERSION = 2
METADATA_FILE = "checkpoint.json"
LOG_FILE = "train_log.csv"
LOG_COLUMNS = [f.name for f in fields(LossRecord)]


def scale_file(n: int) -> str:
    """File name holding the weights of scale n."""
    return f"scale_{n}.pt"


def _atomic_write(path: pathlib.Path, write: Callable[[pathlib.Path], None]) -> None:
    temp_path = path.with_name(path.name + ".tmp")
    write(temp_path)
    temp_path.replace(path)


def checkpoint_metadata(checkpoint: Checkpoint) -> dict[str, Any]:
    """JSON-serializable description of everything except tensors."""
    return {
        "format_version": checkpoint.format_version,
        "num_scales": checkpoint.num_scales,
        "shapes": [list(shape) for shape in checkpoint.shapes],
        "scale_factor": checkpoint.scale_factor,
        "min_size": checkpoint.min_size,
        "max_size": checkpoint.max_size,
        "noise_schedule": list(checkpoint.noise_schedule.sigmas),
        "scales": [
            {
                "index": model.scale_index,
                "channels": model.generator.channels,
                "num_blocks": model.generator.num_blocks,
                "discriminator_channels": model.discriminator.channels,
            }
            for model in checkpoint.scale_models
        ],
        "network": asdict(checkpoint.network),
        "train_config": checkpoint.config_snapshot.to_dict(),
    }


def save_checkpoint(checkpoint: Checkpoint, directory: str | pathlib.Path) -> pathlib.Path:
    """Write a checkpoint directory, creating it if needed.

    Weights are written first and the metadata file last, so a directory with a
    readable ``checkpoint.json`` always has all its scale files.

    Args:
    ----
        checkpoint: The trained pyramid
        directory: Destination directory

    Returns:
    -------
        The checkpoint directory

    """
    root = pathlib.Path(directory)
    root.mkdir(parents=True, exist_ok=True)

    for model in checkpoint.scale_models:
        payload: dict[str, Any] = {
            "generator": model.generator.state_dict(),
            "discriminator": model.discriminator.state_dict(),
        }
        if model.scale_index == checkpoint.coarsest:
            payload["z_star"] = checkpoint.z_star
        _atomic_write(root / scale_file(model.scale_index), lambda p, d=payload: torch.save(d, p))

    def write_log(path: pathlib.Path) -> None:
        with path.open("w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=LOG_COLUMNS)
            writer.writeheader()
            for record in checkpoint.history:
                writer.writerow(asdict(record))

    _atomic_write(root / LOG_FILE, write_log)

    def write_metadata(path: pathlib.Path) -> None:
        with path.open("w") as f:
            json.dump(checkpoint_metadata(checkpoint), f, indent=2)

    _atomic_write(root / METADATA_FILE, write_metadata)
    logger.info("Saved %d-scale checkpoint to %s", checkpoint.num_scales, root)
    return root


def _read_metadata(root: pathlib.Path) -> dict[str, Any]:
    meta_path = root / METADATA_FILE
    if not meta_path.is_file():
        msg = f"No checkpoint found in {root} (missing {METADATA_FILE})"
        raise CheckpointError(msg)
    try:
        with meta_path.open() as f:
            meta = json.load(f)
    except json.JSONDecodeError as e:
        msg = f"Corrupt checkpoint metadata {meta_path}: {e}"
        raise CheckpointError(msg) from e
    found = meta.get("format_version")
    if found != FORMAT_VERSION:
        raise CheckpointVersionError(found, FORMAT_VERSION)
    return meta


def _read_history(path: pathlib.Path) -> list[LossRecord]:
    if not path.is_file():
        return []
    with path.open(newline="") as f:
        return [
            LossRecord(
                scale=int(row["scale"]),
                iteration=int(row["iteration"]),
                d_loss=float(row["d_loss"]),
                g_adv=float(row["g_adv"]),
                g_rec=float(row["g_rec"]),
                g_total=float(row["g_total"]),
                sigma=float(row["sigma"]),
            )
            for row in csv.DictReader(f)
        ]


def load_checkpoint(directory: str | pathlib.Path) -> Checkpoint:
    """Read a checkpoint directory written by ``save_checkpoint``.

    Loaded networks are frozen (evaluation mode, no gradients).

    Raises
    ------
        CheckpointVersionError: If the format version differs from this library's
        CheckpointError: If the directory, metadata or a scale file is missing or corrupt

    """
    root = pathlib.Path(directory)
    meta = _read_metadata(root)
    try:
        network = GeneratorConfig(**meta["network"])
        config = TrainConfig.from_dict(meta["train_config"])
        shapes = [(int(h), int(w)) for h, w in meta["shapes"]]
        scales = meta["scales"]
        sigmas = tuple(float(s) for s in meta["noise_schedule"])
    except (KeyError, TypeError, ValueError) as e:
        msg = f"Malformed checkpoint metadata in {root}: {e}"
        raise CheckpointError(msg) from e

    models: list[ScaleModel] = []
    z_star: torch.Tensor | None = None
    for entry in scales:
        try:
            n = int(entry["index"])
        except (AttributeError, KeyError, TypeError, ValueError) as e:
            msg = f"Malformed scale entry {entry!r} in {root}: {e}"
            raise CheckpointError(msg) from e
        path = root / scale_file(n)
        if not path.is_file():
            msg = f"Checkpoint {root} is missing {scale_file(n)}"
            raise CheckpointError(msg)
        try:
            payload = torch.load(path, map_location="cpu", weights_only=True)
            if not isinstance(payload, dict):
                msg = f"expected a dict of state dicts, got {type(payload).__name__}"
                raise TypeError(msg)
            generator = ScaleGenerator(int(entry["channels"]), int(entry["num_blocks"]), n)
            discriminator = ScaleDiscriminator(
                int(entry.get("discriminator_channels", entry["channels"])),
                int(entry["num_blocks"]),
                n,
            )
            generator.load_state_dict(payload["generator"])
            discriminator.load_state_dict(payload["discriminator"])
        except (
            RuntimeError, KeyError, EOFError, TypeError, ValueError, pickle.UnpicklingError
        ) as e:
            msg = f"Corrupt scale file {path}: {e}"
            raise CheckpointError(msg) from e
        if n == len(scales) - 1:
            z_star = payload.get("z_star")
        model = ScaleModel(scale_index=n, generator=generator, discriminator=discriminator)
        model.freeze()
        models.append(model)

    if z_star is None:
        msg = f"Checkpoint {root} has no coarsest-scale reconstruction noise"
        raise CheckpointError(msg)

    models.sort(key=lambda m: m.scale_index)
    checkpoint = Checkpoint(
        scale_models=models,
        z_star=z_star,
        noise_schedule=NoiseSchedule(sigmas),
        shapes=shapes,
        scale_factor=float(meta["scale_factor"]),
        min_size=int(meta["min_size"]),
        max_size=int(meta["max_size"]),
        config_snapshot=config,
        network=network,
        history=_read_history(root / LOG_FILE),
        format_version=FORMAT_VERSION,
    )
    logger.info("Loaded %d-scale checkpoint from %s", checkpoint.num_scales, root)
    return checkpoint
