"""
Tests for writing and reading checkpoint directories.
"""

import json
import tempfile
from pathlib import Path

import pytest
import torch

from sindeblur.checkpoint import (
    FORMAT_VERSION,
    LOG_FILE,
    METADATA_FILE,
    load_checkpoint,
    save_checkpoint,
    scale_file,
)
from sindeblur.errors import CheckpointError, CheckpointVersionError
from sindeblur.inference import reconstruct

from .image_fixtures import TINY_NETWORK, tiny_checkpoint


@pytest.fixture(scope="module")
def trained():
    return tiny_checkpoint(iters=2)


class TestCheckpointRoundTrip:
    """Tests for save followed by load."""

    def test_layout(self, trained) -> None:
        """Test the files and metadata a saved checkpoint contains."""
        with tempfile.TemporaryDirectory() as tmp:
            root = save_checkpoint(trained, Path(tmp) / "ck")
            names = sorted(p.name for p in root.iterdir())
            meta = json.loads((root / METADATA_FILE).read_text())
        assert names == sorted([METADATA_FILE, LOG_FILE, scale_file(0), scale_file(1)])
        assert meta["format_version"] == FORMAT_VERSION
        assert meta["num_scales"] == 2
        assert meta["shapes"] == [[32, 32], [24, 24]]
        assert meta["noise_schedule"][1] == 1.0

    def test_round_trip_preserves_everything(self, trained) -> None:
        """Test that loading returns the saved geometry, schedule, configs and weights."""
        with tempfile.TemporaryDirectory() as tmp:
            save_checkpoint(trained, tmp)
            loaded = load_checkpoint(tmp)
        assert loaded.num_scales == trained.num_scales
        assert loaded.shapes == trained.shapes
        assert loaded.scale_factor == trained.scale_factor
        assert loaded.min_size == trained.min_size
        assert loaded.noise_schedule == trained.noise_schedule
        assert loaded.network == TINY_NETWORK
        assert loaded.config_snapshot == trained.config_snapshot
        assert torch.equal(loaded.z_star, trained.z_star)
        assert len(loaded.history) == len(trained.history)
        for a, b in zip(loaded.scale_models, trained.scale_models, strict=True):
            sa, sb = a.generator.state_dict(), b.generator.state_dict()
            assert all(torch.equal(sa[key], sb[key]) for key in sb)

    def test_loaded_checkpoint_reconstructs_identically(self, trained) -> None:
        """Test that a reloaded checkpoint reconstructs exactly as before saving."""
        with tempfile.TemporaryDirectory() as tmp:
            save_checkpoint(trained, tmp)
            loaded = load_checkpoint(tmp)
        assert torch.equal(reconstruct(loaded), reconstruct(trained))

    def test_loaded_networks_are_frozen(self, trained) -> None:
        """Test that loaded networks are in eval mode without gradients."""
        with tempfile.TemporaryDirectory() as tmp:
            save_checkpoint(trained, tmp)
            loaded = load_checkpoint(tmp)
        for model in loaded.scale_models:
            assert not model.generator.training
            assert not any(p.requires_grad for p in model.generator.parameters())

    def test_no_temporary_files_left(self, trained) -> None:
        """Test that saving leaves no temporary files behind."""
        with tempfile.TemporaryDirectory() as tmp:
            save_checkpoint(trained, tmp)
            leftovers = list(Path(tmp).glob("*.tmp"))
        assert leftovers == []


class TestCheckpointErrors:
    """Tests for missing and incompatible checkpoint directories."""

    def test_empty_directory(self) -> None:
        """Test that an empty directory is not a checkpoint."""
        with tempfile.TemporaryDirectory() as tmp, pytest.raises(CheckpointError):
            load_checkpoint(tmp)

    def test_missing_directory_is_os_error(self) -> None:
        """Test that a missing directory raises an OSError."""
        with pytest.raises(OSError):
            load_checkpoint("/nonexistent/checkpoint")

    def test_version_mismatch(self, trained) -> None:
        """Test that a newer format version is refused."""
        with tempfile.TemporaryDirectory() as tmp:
            save_checkpoint(trained, tmp)
            meta_path = Path(tmp) / METADATA_FILE
            meta = json.loads(meta_path.read_text())
            meta["format_version"] = FORMAT_VERSION + 1
            meta_path.write_text(json.dumps(meta))
            with pytest.raises(CheckpointVersionError):
                load_checkpoint(tmp)

    def test_missing_scale_file(self, trained) -> None:
        """Test that a missing scale file is named in the error."""
        with tempfile.TemporaryDirectory() as tmp:
            save_checkpoint(trained, tmp)
            (Path(tmp) / scale_file(0)).unlink()
            with pytest.raises(CheckpointError, match=scale_file(0)):
                load_checkpoint(tmp)

    def test_corrupt_metadata(self, trained) -> None:
        """Test that unparsable metadata is a CheckpointError."""
        with tempfile.TemporaryDirectory() as tmp:
            save_checkpoint(trained, tmp)
            (Path(tmp) / METADATA_FILE).write_text("{not json")
            with pytest.raises(CheckpointError):
                load_checkpoint(tmp)

    def test_corrupt_scale_file(self, trained) -> None:
        """Test that a scale file holding garbage bytes is reported as a CheckpointError."""
        with tempfile.TemporaryDirectory() as tmp:
            save_checkpoint(trained, tmp)
            (Path(tmp) / scale_file(0)).write_bytes(b"definitely not a torch archive")
            with pytest.raises(CheckpointError, match="Corrupt scale file"):
                load_checkpoint(tmp)

    def test_scale_file_with_non_dict_payload(self, trained) -> None:
        """Test that a readable scale file of the wrong shape is a CheckpointError."""
        with tempfile.TemporaryDirectory() as tmp:
            save_checkpoint(trained, tmp)
            torch.save([1, 2, 3], Path(tmp) / scale_file(1))
            with pytest.raises(CheckpointError, match="Corrupt scale file"):
                load_checkpoint(tmp)

    def test_scale_entry_without_index(self, trained) -> None:
        """Test that a metadata scale entry lacking its index is a CheckpointError."""
        with tempfile.TemporaryDirectory() as tmp:
            save_checkpoint(trained, tmp)
            meta_path = Path(tmp) / METADATA_FILE
            meta = json.loads(meta_path.read_text())
            del meta["scales"][0]["index"]
            meta_path.write_text(json.dumps(meta))
            with pytest.raises(CheckpointError, match="Malformed scale entry"):
                load_checkpoint(tmp)

    def test_previous_format_version_rejected(self, trained) -> None:
        """Test that a checkpoint written before normalization statistics were saved is refused."""
        with tempfile.TemporaryDirectory() as tmp:
            save_checkpoint(trained, tmp)
            meta_path = Path(tmp) / METADATA_FILE
            meta = json.loads(meta_path.read_text())
            meta["format_version"] = 1
            meta_path.write_text(json.dumps(meta))
            with pytest.raises(CheckpointVersionError):
                load_checkpoint(tmp)


class TestNormalizationState:
    """Tests for the generator normalization statistics stored with each scale."""

    def test_running_statistics_are_saved(self, trained) -> None:
        """Test that every generator's running mean and variance survive a round trip."""
        with tempfile.TemporaryDirectory() as tmp:
            save_checkpoint(trained, tmp)
            loaded = load_checkpoint(tmp)
        for a, b in zip(loaded.scale_models, trained.scale_models, strict=True):
            state = a.generator.state_dict()
            running = [key for key in state if key.endswith("running_var")]
            assert running
            for key in running:
                assert torch.equal(state[key], b.generator.state_dict()[key])
