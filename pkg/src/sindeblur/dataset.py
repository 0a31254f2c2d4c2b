"""Discovery of blurry/sharp image pairs in GoPro-style folders."""

import logging
import pathlib
import random
from dataclasses import dataclass, field

from .errors import InvalidInputError

logger = logging.getLogger("dataset")

BLUR_DIR = "blur"
SHARP_DIR = "sharp"
IMAGE_SUFFIXES = frozenset({".png", ".jpg", ".jpeg"})


@dataclass(frozen=True)
class ImagePair:
    """One blurry observation and its sharp ground truth.

    Attributes
    ----------
        pair_id: ``<sequence>/<file name>``, or just the file name for a flat layout
        blur: The blurry image
        sharp: The sharp image

    """

    pair_id: str
    blur: pathlib.Path
    sharp: pathlib.Path


@dataclass
class DatasetIndex:
    """Matched pairs in lexicographic id order plus files with no counterpart."""

    root: pathlib.Path
    pairs: list[ImagePair] = field(default_factory=list)
    unmatched: list[pathlib.Path] = field(default_factory=list)

    def __len__(self) -> int:
        """Number of matched pairs."""
        return len(self.pairs)


def _images(directory: pathlib.Path) -> dict[str, pathlib.Path]:
    return {
        p.name: p
        for p in directory.iterdir()
        if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
    }


def _pair_folder(
    folder: pathlib.Path, prefix: str, pairs: list[ImagePair], unmatched: list[pathlib.Path]
) -> None:
    blurs = _images(folder / BLUR_DIR)
    sharps = _images(folder / SHARP_DIR)
    for name in sorted(blurs.keys() | sharps.keys()):
        if name in blurs and name in sharps:
            pairs.append(ImagePair(pair_id=prefix + name, blur=blurs[name], sharp=sharps[name]))
        else:
            orphan = blurs.get(name) or sharps[name]
            logger.warning("No counterpart for %s", orphan)
            unmatched.append(orphan)


def _has_pair_dirs(folder: pathlib.Path) -> bool:
    return (folder / BLUR_DIR).is_dir() and (folder / SHARP_DIR).is_dir()


def discover_pairs(root: str | pathlib.Path) -> DatasetIndex:
    """Index ``<root>/{blur,sharp}`` or, GoPro style, ``<root>/<sequence>/{blur,sharp}``.

    Files are matched by identical file name within a folder. Unmatched files are
    logged as warnings and listed in the index.

    Raises
    ------
        InvalidInputError: If ``root`` holds neither layout

    """
    root = pathlib.Path(root)
    if not root.is_dir():
        msg = f"Dataset root {root} is not a directory"
        raise InvalidInputError(msg)

    pairs: list[ImagePair] = []
    unmatched: list[pathlib.Path] = []
    if _has_pair_dirs(root):
        _pair_folder(root, "", pairs, unmatched)
    else:
        sequences = sorted(p for p in root.iterdir() if p.is_dir() and _has_pair_dirs(p))
        if not sequences:
            msg = f"{root} has no {BLUR_DIR}/ and {SHARP_DIR}/ folders (directly or per sequence)"
            raise InvalidInputError(msg)
        for sequence in sequences:
            _pair_folder(sequence, f"{sequence.name}/", pairs, unmatched)

    pairs.sort(key=lambda p: p.pair_id)
    logger.info("Found %d pairs under %s (%d unmatched files)", len(pairs), root, len(unmatched))
    return DatasetIndex(root=root, pairs=pairs, unmatched=sorted(unmatched))


def sample_pairs(index: DatasetIndex, limit: int, seed: int = 0) -> list[ImagePair]:
    """Seeded random subset of at most ``limit`` pairs, returned in id order."""
    if limit < 1:
        msg = f"limit must be at least 1, got {limit}"
        raise InvalidInputError(msg)
    if limit >= len(index.pairs):
        return list(index.pairs)
    chosen = random.Random(seed).sample(index.pairs, limit)  # noqa: S311
    return sorted(chosen, key=lambda p: p.pair_id)


def _images_recursive(directory: pathlib.Path) -> dict[str, pathlib.Path]:
    return {
        p.relative_to(directory).as_posix(): p
        for p in directory.rglob("*")
        if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
    }


def match_directories(
    restored_dir: str | pathlib.Path, reference_dir: str | pathlib.Path
) -> DatasetIndex:
    """Pair images under two directory trees by identical relative path.

    The resulting pairs hold the restored image in ``blur`` and the reference in
    ``sharp``; ids are the relative POSIX paths.
    """
    restored_root = pathlib.Path(restored_dir)
    reference_root = pathlib.Path(reference_dir)
    for directory in (restored_root, reference_root):
        if not directory.is_dir():
            msg = f"{directory} is not a directory"
            raise InvalidInputError(msg)
    restored = _images_recursive(restored_root)
    reference = _images_recursive(reference_root)
    pairs = [
        ImagePair(pair_id=key, blur=restored[key], sharp=reference[key])
        for key in sorted(restored.keys() & reference.keys())
    ]
    unmatched = sorted(
        [restored[k] for k in restored.keys() - reference.keys()]
        + [reference[k] for k in reference.keys() - restored.keys()]
    )
    for orphan in unmatched:
        logger.warning("No counterpart for %s", orphan)
    return DatasetIndex(root=restored_root, pairs=pairs, unmatched=unmatched)
