import json

import pytest
import transformers

from helpers import four_image_layout
from trainer_adapter import (
    EPOCH_LOG_HEADER,
    LayoutError,
    TrainRunConfig,
    TrainerError,
    run_training,
)
from trainer_adapter.cli import main as cli_main


def tiny_config(layout_dir, out_dir, **kw):
    defaults = dict(epochs=1, image_size=32, batch_size=2, seed=0)
    defaults.update(kw)
    return TrainRunConfig(layout_dir=layout_dir, out_dir=out_dir, **defaults)


def read_rows(epoch_log):
    lines = epoch_log.read_text(encoding="utf-8").splitlines()
    assert lines[0] == EPOCH_LOG_HEADER
    return [line.split(",") for line in lines[1:]]


class TestRunTraining:
    def test_one_epoch_smoke_writes_one_row(self, tmp_path):
        out = tmp_path / "run"
        outcome = run_training(tiny_config(four_image_layout(tmp_path / "lay"), out))
        rows = read_rows(outcome.epoch_log)
        assert len(rows) == 1
        assert rows[0][0] == "0"
        # loss cells are numbers, map cells deliberately empty
        assert all(float(cell) >= 0 for cell in rows[0][1:7])
        assert rows[0][7] == "" and rows[0][8] == ""
        assert outcome.weights.is_file()
        assert outcome.trainer_log.is_file()
        assert "epoch 0" in outcome.trainer_log.read_text()

    def test_three_epochs_strictly_increasing(self, tmp_path):
        outcome = run_training(
            tiny_config(four_image_layout(tmp_path / "lay"), tmp_path / "run", epochs=3)
        )
        epochs = [int(row[0]) for row in read_rows(outcome.epoch_log)]
        assert epochs == [0, 1, 2]

    def test_malformed_layout_aborts_before_any_output(self, tmp_path):
        layout = four_image_layout(tmp_path / "lay")
        (layout / "labels" / "tr_0.txt").unlink()
        out = tmp_path / "run"
        with pytest.raises(LayoutError):
            run_training(tiny_config(layout, out))
        assert not out.exists()

    def test_unreadable_train_image_is_a_trainer_failure(self, tmp_path):
        layout = four_image_layout(tmp_path / "lay")
        (layout / "images" / "tr_1.png").write_bytes(b"junk, not an image")
        with pytest.raises(TrainerError) as excinfo:
            run_training(tiny_config(layout, tmp_path / "run"))
        assert excinfo.value.log_tail  # the log tail travels with the error

    def test_metadata_records_pinned_versions_and_defaults(self, tmp_path):
        outcome = run_training(
            tiny_config(four_image_layout(tmp_path / "lay"), tmp_path / "run")
        )
        meta = json.loads(outcome.metadata.read_text())
        assert meta["backend"] == "transformers.YolosForObjectDetection"
        assert meta["transformers_version"] == transformers.__version__
        assert meta["class_names"] == ["Fox", "Wolf"]
        assert meta["optimizer"]["name"] == "AdamW"
        assert meta["optimizer"]["overridden"] == []

    def test_override_passes_through_and_is_recorded(self, tmp_path):
        outcome = run_training(
            tiny_config(
                four_image_layout(tmp_path / "lay"),
                tmp_path / "run",
                overrides={"lr": 0.01},
            )
        )
        meta = json.loads(outcome.metadata.read_text())
        assert meta["optimizer"]["lr"] == 0.01
        assert meta["optimizer"]["overridden"] == ["lr"]


class TestConfigValidation:
    def test_zero_epochs(self, tmp_path):
        with pytest.raises(ValueError, match="epochs"):
            tiny_config(tmp_path, tmp_path / "o", epochs=0)

    def test_image_size_not_multiple_of_patch(self, tmp_path):
        with pytest.raises(ValueError, match="image_size"):
            tiny_config(tmp_path, tmp_path / "o", image_size=30)

    def test_unknown_override(self, tmp_path):
        with pytest.raises(ValueError, match="unknown override"):
            tiny_config(tmp_path, tmp_path / "o", overrides={"momentum": 0.9})

    def test_nonpositive_override(self, tmp_path):
        with pytest.raises(ValueError, match="positive"):
            tiny_config(tmp_path, tmp_path / "o", overrides={"lr": 0.0})

    def test_unknown_checkpoint_identifier(self, tmp_path):
        config = tiny_config(
            four_image_layout(tmp_path / "lay"), tmp_path / "run",
            checkpoint="not-a-thing",
        )
        with pytest.raises(ValueError, match="checkpoint identifier"):
            run_training(config)


class TestCli:
    def test_train_and_failure_exit_codes(self, tmp_path, capsys):
        layout = four_image_layout(tmp_path / "lay")
        code = cli_main([
            "train", "--layout", str(layout), "--out", str(tmp_path / "run"),
            "--epochs", "1", "--image-size", "32", "--batch-size", "2",
        ])
        assert code == 0
        assert "weights at" in capsys.readouterr().out

        (layout / "images" / "tr_0.png").write_bytes(b"junk")
        code = cli_main([
            "train", "--layout", str(layout), "--out", str(tmp_path / "run2"),
            "--epochs", "1", "--image-size", "32",
        ])
        assert code == 1
        assert "trainer failed" in capsys.readouterr().err

    def test_bad_layout_is_input_error(self, tmp_path, capsys):
        code = cli_main([
            "train", "--layout", str(tmp_path / "missing"), "--out",
            str(tmp_path / "run"), "--epochs", "1", "--image-size", "32",
        ])
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_bad_override_syntax(self, tmp_path, capsys):
        code = cli_main([
            "train", "--layout", str(tmp_path), "--out", str(tmp_path / "run"),
            "--override", "lr", "--image-size", "32",
        ])
        assert code == 2
        assert "key=value" in capsys.readouterr().err
