"""PSNR and SSIM on [0, 1]-mapped images, and batch evaluation of restored/reference pairs."""

import asyncio
import csv
import json
import logging
import math
import pathlib
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

import aiofiles
from skimage.metrics import peak_signal_noise_ratio, structural_similarity

from .errors import InvalidInputError
from .imaging import Image, check_image, load_image_bytes, to_unit_range

logger = logging.getLogger("metrics")

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DEFAULT_WORKERS = 4


def _unit_pair(a: Image, b: Image) -> tuple[Any, Any]:
    if check_image(a, "a") != check_image(b, "b"):
        msg = f"Image dimensions differ: {tuple(a.shape)} vs {tuple(b.shape)}"
        raise InvalidInputError(msg)
    return to_unit_range(a), to_unit_range(b)


def psnr(a: Image, b: Image) -> float:
    """Peak signal-to-noise ratio in dB with peak 1 on [0, 1] data, capped at 100 dB."""
    ua, ub = _unit_pair(a, b)
    if not (ua != ub).any():
        return PSNR_CAP_DB
    value = float(peak_signal_noise_ratio(ub, ua, data_range=1.0))
    return min(value, PSNR_CAP_DB)


def ssim(a: Image, b: Image) -> float:
    """Mean structural similarity over an 11x11 Gaussian window (sigma 1.5), channels averaged.

    Raises
    ------
        InvalidInputError: If the dimensions differ or either side is below 11 px

    """
    ua, ub = _unit_pair(a, b)
    if min(ua.shape[:2]) < SSIM_WINDOW:
        msg = f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {ua.shape[:2]}"
        raise InvalidInputError(msg)
    value = structural_similarity(
        ua,
        ub,
        data_range=1.0,
        channel_axis=-1,
        gaussian_weights=True,
        sigma=SSIM_SIGMA,
        use_sample_covariance=False,
        K1=SSIM_K1,
        K2=SSIM_K2,
    )
    return float(max(-1.0, min(1.0, value)))


@dataclass
class ImageScore:
    """Metrics for one restored/reference pair."""

    image_id: str
    psnr_db: float
    ssim: float


@dataclass
class SkippedPair:
    """A pair that could not be evaluated and why."""

    image_id: str
    reason: str


@dataclass
class MetricReport:
    """Per-image scores and their means.

    Attributes
    ----------
        per_image: Scores sorted by image id
        skipped: Pairs that could not be evaluated
        mean_psnr_db: Arithmetic mean of the per-image PSNR (NaN when empty)
        mean_ssim: Arithmetic mean of the per-image SSIM (NaN when empty)

    """

    per_image: list[ImageScore] = field(default_factory=list)
    skipped: list[SkippedPair] = field(default_factory=list)
    mean_psnr_db: float = field(init=False)
    mean_ssim: float = field(init=False)

    def __post_init__(self) -> None:
        """Sort entries and compute the aggregates."""
        self.per_image.sort(key=lambda s: s.image_id)
        self.skipped.sort(key=lambda s: s.image_id)
        if self.per_image:
            self.mean_psnr_db = math.fsum(s.psnr_db for s in self.per_image) / self.count
            self.mean_ssim = math.fsum(s.ssim for s in self.per_image) / self.count
        else:
            self.mean_psnr_db = math.nan
            self.mean_ssim = math.nan

    @property
    def count(self) -> int:
        """Number of evaluated pairs."""
        return len(self.per_image)

    @property
    def partial(self) -> bool:
        """True when at least one pair was skipped."""
        return bool(self.skipped)

    def summary(self) -> dict[str, Any]:
        """JSON-serializable aggregate view."""
        return {
            "count": self.count,
            "mean_psnr_db": None if math.isnan(self.mean_psnr_db) else self.mean_psnr_db,
            "mean_ssim": None if math.isnan(self.mean_ssim) else self.mean_ssim,
            "partial": self.partial,
            "skipped": [{"id": s.image_id, "reason": s.reason} for s in self.skipped],
        }


async def _read_bytes(path: pathlib.Path) -> bytes:
    async with aiofiles.open(path, "rb") as f:
        return await f.read()


def _score(image_id: str, restored: bytes, reference: bytes) -> ImageScore:
    a = load_image_bytes(restored, f"{image_id} (restored)")
    b = load_image_bytes(reference, f"{image_id} (reference)")
    return ImageScore(image_id=image_id, psnr_db=psnr(a, b), ssim=ssim(a, b))


async def _evaluate_one(
    image_id: str,
    restored: pathlib.Path,
    reference: pathlib.Path,
    limit: asyncio.Semaphore,
) -> ImageScore | SkippedPair:
    async with limit:
        try:
            data_a, data_b = await asyncio.gather(_read_bytes(restored), _read_bytes(reference))
            return await asyncio.to_thread(_score, image_id, data_a, data_b)
        except (OSError, ValueError) as e:
            logger.warning("Skipping %s: %s", image_id, e)
            return SkippedPair(image_id=image_id, reason=str(e))


async def evaluate_pairs_async(
    pairs: Sequence[tuple[str | pathlib.Path, str | pathlib.Path]],
    ids: Sequence[str] | None = None,
    max_workers: int = DEFAULT_WORKERS,
) -> MetricReport:
    """Score (restored, reference) file pairs concurrently.

    Args:
    ----
        pairs: Restored and reference image paths
        ids: Identifier per pair; defaults to the restored file's name
        max_workers: Pairs decoded and scored at the same time

    Returns:
    -------
        A MetricReport; unreadable or mismatched pairs are listed as skipped

    """
    if ids is not None and len(ids) != len(pairs):
        msg = f"Got {len(ids)} ids for {len(pairs)} pairs"
        raise InvalidInputError(msg)
    if max_workers < 1:
        msg = f"max_workers must be at least 1, got {max_workers}"
        raise InvalidInputError(msg)
    names = list(ids) if ids is not None else [pathlib.Path(a).name for a, _ in pairs]
    limit = asyncio.Semaphore(max_workers)
    results = await asyncio.gather(
        *(
            _evaluate_one(name, pathlib.Path(a), pathlib.Path(b), limit)
            for name, (a, b) in zip(names, pairs, strict=True)
        )
    )
    report = MetricReport(
        per_image=[r for r in results if isinstance(r, ImageScore)],
        skipped=[r for r in results if isinstance(r, SkippedPair)],
    )
    logger.info(
        "Evaluated %d pairs (%d skipped): mean PSNR %.3f dB, mean SSIM %.4f",
        report.count,
        len(report.skipped),
        report.mean_psnr_db,
        report.mean_ssim,
    )
    return report


def evaluate_pairs(
    pairs: Sequence[tuple[str | pathlib.Path, str | pathlib.Path]],
    ids: Sequence[str] | None = None,
    max_workers: int = DEFAULT_WORKERS,
) -> MetricReport:
    """Blocking wrapper around ``evaluate_pairs_async``."""
    return asyncio.run(evaluate_pairs_async(pairs, ids, max_workers))


def write_report(
    report: MetricReport, directory: str | pathlib.Path, stem: str = "metrics"
) -> tuple[pathlib.Path, pathlib.Path]:
    """Write ``<stem>.csv`` (id, psnr_db, ssim) and ``<stem>.json`` (means, count, skipped).

    Returns
    -------
        The CSV and JSON paths

    """
    root = pathlib.Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    csv_path = root / f"{stem}.csv"
    json_path = root / f"{stem}.json"
    with csv_path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["id", "psnr_db", "ssim"])
        writer.writerows([s.image_id, repr(s.psnr_db), repr(s.ssim)] for s in report.per_image)
    with json_path.open("w") as f:
        json.dump(report.summary(), f, indent=2)
    return csv_path, json_path
