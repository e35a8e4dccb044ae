import json
import subprocess
import sys

import numpy as np
import pytest
from PIL import Image

from changediff import cli
from changediff.data.formats import write_png, write_xbd_tile
from changediff.model import Checkpoint

from conftest import oracle_model, oracle_record

TINY_DOC = {
    "model": {"levels": 3, "channels": [4, 8, 16], "transformer_depth": 1, "attention_heads": 2,
              "image_size": 32, "token_budget": 1024},
    "train": {"epochs": 2, "batch_size": 4, "val_fraction": 0.25, "learning_rate": 1e-3},
    "finetune": {"epochs": 1, "batch_size": 4, "val_fraction": 0.25},
    "data": {"n_tiles": 6, "size": 32, "style": "A"},
    "ablation": {"axis": "transformer_depth", "values": [0, 1]},
}


@pytest.fixture
def doc_path(tmp_path):
    p = tmp_path / "run.json"
    p.write_text(json.dumps(TINY_DOC))
    return p


@pytest.fixture
def dataset(tmp_path, doc_path):
    assert cli.main(["synth", "--config", str(doc_path), "--out", str(tmp_path / "ds")]) == 0
    return tmp_path / "ds"


def files(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_synth_layout_and_determinism(tmp_path):
    args = ["synth", "--n-tiles", "4", "--size", "128", "--seed", "3"]
    assert cli.main(args + ["--out", str(tmp_path / "a")]) == 0
    assert cli.main(args + ["--out", str(tmp_path / "b")]) == 0
    a = files(tmp_path / "a")
    assert a == files(tmp_path / "b")
    assert sum(1 for k in a if k.endswith("_pre_disaster.png")) == 4
    assert sum(1 for k in a if k.endswith("_post_disaster.json")) == 4
    man = json.loads(a["manifest.json"])
    assert len(man["tiles"]) == 4 and man["size"] == 128


def test_synth_binary_writes_levir_layout(tmp_path):
    assert cli.main(["synth", "--n-tiles", "2", "--size", "64", "--num-classes", "2", "--out", str(tmp_path)]) == 0
    assert len(list((tmp_path / "A").glob("*.png"))) == 2
    assert len(cli.load_dataset(tmp_path)) == 2


def test_usage_errors(tmp_path, capsys):
    assert cli.main(["synth", "--size", "100", "--out", str(tmp_path)]) == 64
    assert cli.main(["finetune", "--dataset", str(tmp_path), "--out", str(tmp_path)]) == 64
    assert cli.main(["eval", "--checkpoint", str(tmp_path / "none"), "--dataset", str(tmp_path),
                     "--out", str(tmp_path)]) == 64
    with pytest.raises(SystemExit) as exc:
        cli.main(["train"])
    assert exc.value.code == 64


def test_train_eval_finetune_ablate(tmp_path, doc_path, dataset):
    run = tmp_path / "run"
    assert cli.main(["train", "--config", str(doc_path), "--dataset", str(dataset), "--out", str(run)]) == 0
    hist = (run / "history.csv").read_text().splitlines()
    assert hist[0] == "epoch,train_loss,val_loss,val_score,lr" and len(hist) == 3
    ckpt = run / "checkpoint.safetensors"
    assert cli.main(["eval", "--checkpoint", str(ckpt), "--dataset", str(dataset), "--out", str(tmp_path / "ev")]) == 0
    assert (tmp_path / "ev" / "report.txt").exists()
    ft = tmp_path / "ft"
    assert cli.main(["finetune", "--config", str(doc_path), "--checkpoint", str(ckpt), "--dataset", str(dataset),
                     "--out", str(ft)]) == 0
    assert Checkpoint.load(ft / "checkpoint.safetensors").model_config.num_classes == 4
    ab = tmp_path / "ab"
    assert cli.main(["ablate", "--config", str(doc_path), "--dataset", str(dataset), "--out", str(ab)]) == 0
    lines = (ab / "ablation.csv").read_text().splitlines()
    assert lines[0] == "transformer_depth,iou,f1" and len(lines) == 3
    assert cli.main(["ablate", "--config", str(doc_path), "--dataset", str(dataset), "--out", str(ab),
                     "--values"]) == 64


def oracle_fixture(tmp_path, num_classes):
    ckpt = tmp_path / "oracle.safetensors"
    Checkpoint.from_model(oracle_model(num_classes)).save(ckpt)
    rec, polys = oracle_record(num_classes)
    ds = tmp_path / "ds"
    if num_classes == 2:
        for sub, arr in (("A", rec.pre_image), ("B", rec.post_image), ("label", rec.label_mask * 255)):
            (ds / sub).mkdir(parents=True, exist_ok=True)
            write_png(ds / sub / "t.png", arr.astype(np.uint8))
    else:
        write_xbd_tile(ds, rec, polys)
    return ckpt, ds, rec


def test_eval_perfect_prediction_fixture(tmp_path):
    ckpt, ds, _ = oracle_fixture(tmp_path, 5)
    out = tmp_path / "ev"
    assert cli.main(["eval", "--checkpoint", str(ckpt), "--dataset", str(ds), "--out", str(out)]) == 0
    rows = (out / "report.csv").read_text().splitlines()
    assert rows[0] == "class,f1,iou"
    assert [r.split(",")[0] for r in rows[1:]] == ["0", "1", "2", "3", "4", "f1_loc", "f1_class", "score", "iou_macro"]
    assert "score,1.000000," in rows


def test_eval_empty_dataset_is_an_error(tmp_path):
    ckpt, _, _ = oracle_fixture(tmp_path, 5)
    empty = tmp_path / "empty"
    (empty / "images").mkdir(parents=True)
    assert cli.main(["eval", "--checkpoint", str(ckpt), "--dataset", str(empty), "--out", str(tmp_path / "o")]) == 1


@pytest.mark.parametrize("num_classes", [5, 2])
def test_predict_overlay(tmp_path, num_classes):
    ckpt, _, rec = oracle_fixture(tmp_path, num_classes)
    Image.fromarray(rec.pre_image).save(tmp_path / "pre.png")
    Image.fromarray(rec.post_image).save(tmp_path / "post.png")
    out = tmp_path / "pred"
    assert cli.main(["predict", "--checkpoint", str(ckpt), "--pre", str(tmp_path / "pre.png"),
                     "--post", str(tmp_path / "post.png"), "--out", str(out)]) == 0
    mask = np.asarray(Image.open(out / "mask.png"))
    over = np.asarray(Image.open(out / "overlay.png"))
    np.testing.assert_array_equal(mask, rec.label_mask)
    assert over.shape == rec.pre_image.shape
    assert len(np.unique(over.reshape(-1, 3), axis=0)) == num_classes
    np.testing.assert_array_equal(cli.mask_from_overlay(over), mask)


def test_palette_is_fixed():
    assert cli.PALETTE.tolist() == [[0, 0, 0], [0, 255, 0], [255, 255, 0], [255, 128, 0], [255, 0, 0]]
    m = np.arange(5).reshape(1, 5)
    np.testing.assert_array_equal(cli.mask_from_overlay(cli.overlay(m)), m)


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "changediff.cli", "synth", "--size", "30", "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 64 and "usage error" in r.stderr


def test_divergence_exit_code(tmp_path, doc_path, dataset, monkeypatch):
    from changediff.errors import DivergenceError

    def diverge(*a, **k):
        raise DivergenceError("non-finite loss nan at epoch 0")

    monkeypatch.setattr(cli, "train", diverge)
    assert cli.main(["train", "--config", str(doc_path), "--dataset", str(dataset), "--out", str(tmp_path / "r")]) == 2
