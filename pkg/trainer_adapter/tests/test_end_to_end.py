"""The whole loop: export a split with the pipeline CLI, train, infer,
then feed everything back to the pipeline for evaluation and reporting.

The pipeline is only touched through its command line and files; nothing
from it is imported here.
"""

import json
import shutil
import subprocess

import pytest
import yaml

from helpers import write_image
from trainer_adapter import TrainRunConfig, run_inference, run_training

pytestmark = pytest.mark.skipif(
    shutil.which("trapkit") is None, reason="pipeline CLI not installed"
)


def trapkit(*args):
    return subprocess.run(["trapkit", *args], capture_output=True, text=True)


@pytest.fixture(scope="module")
def toy_dataset(tmp_path_factory):
    """20 images, 2 classes, one box each."""
    root = tmp_path_factory.mktemp("toy")
    data = root / "data"
    images = []
    for i in range(20):
        name = f"img_{i:02d}"
        write_image(data / "media" / f"{name}.png", color=(30 + i * 5, 60, 90))
        species = "Wolf" if i % 2 == 0 else "Fox"
        images.append({
            "image_id": name,
            "path": f"media/{name}.png",
            "width": 64,
            "height": 48,
            "annotations": [{
                "class": species,
                "box": {"x_min": 8, "y_min": 6, "x_max": 40, "y_max": 36},
                "coords": "pixel",
            }],
        })
    manifest = data / "manifest.json"
    manifest.write_text(json.dumps(
        {"schema_version": 1, "classes": ["Fox", "Wolf"], "images": images}, indent=2
    ), encoding="utf-8")
    return root, manifest


def test_two_epoch_round_trip(toy_dataset):
    root, manifest = toy_dataset

    split = trapkit("split", "--manifest", str(manifest),
                    "--out", str(root / "splits"), "--k", "2", "--seed", "0")
    assert split.returncode == 0, split.stderr
    layout = root / "splits" / "fold_0"

    # class indices follow the exported descriptor, which follows the manifest
    descriptor = yaml.safe_load((layout / "data.yaml").read_text())
    assert descriptor["names"] == ["Fox", "Wolf"]

    outcome = run_training(TrainRunConfig(
        layout_dir=layout, out_dir=root / "run",
        epochs=2, image_size=32, batch_size=4, seed=0,
    ))
    log_lines = outcome.epoch_log.read_text().splitlines()
    assert len(log_lines) == 3  # header + one row per epoch
    assert [line.split(",")[0] for line in log_lines[1:]] == ["0", "1"]

    preds = root / "preds.jsonl"
    inference = run_inference(outcome.weights, layout / "val.txt", preds,
                              conf_floor=0.01)
    assert inference.failed == 0
    assert inference.detections > 0
    val_ids = {line.split("/")[-1].split(".")[0]
               for line in (layout / "val.txt").read_text().split()}
    for line in preds.read_text().splitlines():
        obj = json.loads(line)
        assert obj["image_id"] in val_ids
        assert obj["class"] in (0, 1)

    evaluate = trapkit("evaluate", "--manifest", str(manifest),
                       "--preds", str(preds), "--out", str(root / "eval"))
    assert evaluate.returncode == 0, evaluate.stderr
    assert evaluate.stderr == ""  # parsed with zero warnings
    metrics = (root / "eval" / "metrics.csv").read_text().splitlines()
    assert metrics[0] == "class,targets,f1,precision,recall,map50,map50_95"
    assert metrics[1].startswith("all,20,")
    assert (root / "eval" / "confusion.csv").is_file()

    report = trapkit("report", "--epoch-log", str(outcome.epoch_log),
                     "--metrics", str(root / "eval" / "metrics.csv"),
                     "--out", str(root / "report"), "--window", "1")
    assert report.returncode == 0, report.stderr
    assert report.stderr == ""
    summary = (root / "report" / "summary.md").read_text()
    assert summary.startswith("# Training report")
    assert (root / "report" / "losses.csv").read_text().count("\n") == 3
