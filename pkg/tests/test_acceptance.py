"""Acceptance criteria; each test carries a ``criterion`` marker and the run summary
prints one PASS/FAIL line per criterion."""
import json
import time

import numpy as np
import pytest
import shapely
import torch
import torch.nn.functional as F

from changediff import cli
from changediff.config import (
    DAMAGE_CLASS_WEIGHTS,
    FineTuneConfig,
    LossConfig,
    ModelConfig,
    TrainConfig,
    reduced_model_config,
)
from changediff.data import (
    DOMAIN_A,
    DOMAIN_B,
    PolygonLabel,
    derive_class_weights,
    rasterize_polygons,
    synth_dataset,
)
from changediff.data.raster import polygon_wkt
from changediff.data.synth import DAMAGE_MIX_A, IDA_DISTRIBUTION
from changediff.losses import combined_loss, dice_loss, focal_loss
from changediff.metrics import aggregate_f1, evaluate_masks, f1_loc, oracle
from changediff.model import Checkpoint, build_model
from changediff.training import ablation_run, evaluate_model, fine_tune, train
from changediff.training.finetune import prepare_target, target_loss_config


def criterion(number, title):
    return pytest.mark.criterion(number, title)


# ------------------------------------------------------------------ 1


@criterion(1, "metrics match the per-pixel oracle on 200 random pairs")
def test_metric_oracle_equivalence():
    r = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for i in range(200):
        k = 2 if i % 4 == 0 else 5
        gt = r.integers(0, k, (16, 16))
        # mix exact copies, noise and sparse masks so zero denominators occur
        pred = np.where(r.random((16, 16)) < r.random(), gt, r.integers(0, k, (16, 16)))
        if i % 10 == 1:
            gt = np.where(r.random((16, 16)) < 0.05, gt, 0)
        rep = evaluate_masks([(pred, gt)], k)
        ref = oracle.report(pred, gt, k)
        assert np.array_equal(rep.confusion, ref["confusion"])
        diffs = [abs(a - b) for a, b in zip(rep.class_f1, ref["class_f1"])]
        diffs += [abs(a - b) for a, b in zip(rep.iou_per_class, ref["iou_per_class"])]
        diffs += [abs(rep.iou_macro - ref["iou_macro"]), abs(rep.f1_loc - ref["f1_loc"]),
                  abs(rep.f1_class - ref["f1_class"]), abs(rep.score - ref["score"]),
                  abs(f1_loc(pred > 0, gt > 0) - oracle.loc_f1(pred, gt))]
        worst = max(worst, max(diffs))
    elapsed = time.perf_counter() - start
    assert worst < 1e-9
    assert elapsed < 10.0


# ------------------------------------------------------------------ 2


@criterion(2, "published aggregates reproduce")
def test_published_aggregates():
    assert abs(aggregate_f1((0.978, 0.711, 0.765, 0.772), "harmonic") - 0.795) <= 0.002
    assert abs(aggregate_f1((0.925, 0.616, 0.788, 0.876), "harmonic") - 0.782) <= 0.001
    assert abs(aggregate_f1((0.991, 0.825), "arithmetic") - 0.908) <= 0.0005


# ------------------------------------------------------------------ 3


@criterion(3, "class weights derived from the xBD pixel distribution")
def test_weight_derivation_golden():
    assert derive_class_weights((96.1, 2.7, 0.1, 0.1, 0.1)) == [0.01, 0.1, 0.7, 0.7, 0.7]


# ------------------------------------------------------------------ 4


@criterion(4, "loss identities and gradient check")
def test_loss_identities_and_gradient():
    start = time.perf_counter()
    r = np.random.default_rng(4)

    probs = torch.softmax(torch.tensor(r.normal(size=(2, 5, 8, 8))), dim=1)
    target = torch.tensor(r.integers(0, 5, (2, 8, 8)))
    for k in range(5):
        ce = F.binary_cross_entropy(probs[:, k], (target == k).double())
        assert abs(focal_loss(probs, target, k, gamma=0).item() - ce.item()) < 1e-9

    for _ in range(500):
        c = int(r.integers(2, 6))
        p = torch.softmax(torch.tensor(r.normal(scale=3, size=(c, 6, 6))), dim=0)
        t = torch.tensor(r.integers(0, c, (6, 6)))
        assert 0.0 <= dice_loss(p, t, int(r.integers(0, c))).item() <= 1.0

    logits = torch.tensor(r.normal(size=(2, 5, 8, 8)), requires_grad=True)
    zero = combined_loss(logits, target, LossConfig(class_weights=(0.0,) * 5))
    assert zero.item() == 0.0

    cfg = ModelConfig(levels=3, channels=(4, 8, 16), token_dim=8, transformer_depth=1, attention_heads=2,
                      image_size=16, token_budget=1024)
    model = build_model(cfg, seed=0).double().eval()
    g = torch.Generator().manual_seed(9)
    pre = torch.randn(1, 3, 16, 16, generator=g, dtype=torch.float64)
    post = torch.randn(1, 3, 16, 16, generator=g, dtype=torch.float64)
    tgt = torch.randint(0, 5, (1, 16, 16), generator=g)
    loss_cfg = LossConfig(class_weights=(0.2, 0.4, 0.6, 0.8, 1.0))
    params = [p for p in model.parameters() if p.requires_grad]

    def value():
        return combined_loss(model(pre, post), tgt, loss_cfg)

    model.zero_grad()
    value().backward()
    grads = [p.grad.detach().clone() for p in params]
    # below the ReLU / max-pool switching scale, above float64 roundoff
    h = 1e-6

    def directional(direction):
        with torch.no_grad():
            for p, v in zip(params, direction):
                p.add_(h * v)
            up = value().item()
            for p, v in zip(params, direction):
                p.sub_(2 * h * v)
            down = value().item()
            for p, v in zip(params, direction):
                p.add_(h * v)
        return (up - down) / (2 * h)

    for _ in range(5):
        direction = [torch.randn(p.shape, generator=g, dtype=p.dtype) for p in params]
        analytic = sum(float((gr * v).sum()) for gr, v in zip(grads, direction))
        numeric = directional(direction)
        assert abs(analytic - numeric) / abs(numeric) < 1e-4
    assert time.perf_counter() - start < 120.0


# ------------------------------------------------------------------ 5


@criterion(5, "architecture invariants")
def test_architecture_invariants():
    start = time.perf_counter()
    model = build_model(reduced_model_config(), seed=1).eval()
    g = torch.Generator().manual_seed(5)
    pre, post = torch.randn(1, 3, 64, 64, generator=g), torch.randn(1, 3, 64, 64, generator=g)
    active = model.config.active_transformer_levels
    assert active
    with torch.no_grad():
        diffs, tokens = model.difference_pyramid(pre, pre.clone(), return_tokens=True)
        for k in range(model.config.levels):
            if k not in active:
                assert torch.count_nonzero(diffs[k]) == 0
        for k in active:
            assert torch.count_nonzero(tokens[k]) == 0

        a_d, a_t = model.difference_pyramid(pre, post, return_tokens=True)
        b_d, b_t = model.difference_pyramid(post, pre, return_tokens=True)
        assert all(torch.equal(a_t[k], b_t[k]) for k in active)
        assert all(torch.equal(x, y) for x, y in zip(a_d, b_d))

        for hw in [(64, 64), (32, 96), (128, 64), (96, 32)]:
            x = torch.randn(2, 3, *hw, generator=g)
            y = torch.randn(2, 3, *hw, generator=g)
            assert model(x, y).shape == (2, 5, *hw)

        plain = build_model(reduced_model_config(transformer_depth=0), seed=0).eval()
        assert len(plain.diff_blocks) == 0
        for d, fa, fb in zip(plain.difference_pyramid(pre, post), plain.encode(pre), plain.encode(post)):
            assert torch.equal(d, torch.abs(fa - fb))
    assert time.perf_counter() - start < 60.0


# ------------------------------------------------------------------ 6


@pytest.mark.slow
@criterion(6, "overfit 8 tiles at 128px to training F1 > 0.95 within 200 epochs")
def test_overfit_sanity():
    start = time.perf_counter()
    records = synth_dataset(0, 8, 128, style=DOMAIN_A)
    model = build_model(reduced_model_config(image_size=128), seed=0)
    tc = TrainConfig(learning_rate=2e-3, epochs=200, batch_size=4, val_fraction=0.0, seed=0)
    best = 0.0

    def watch(record, m):
        nonlocal best
        if record.epoch % 20 == 19:
            report, _ = evaluate_model(m, records, 8)
            best = max(best, report.f1_class)

    train(model, records, tc, LossConfig(), callback=watch)
    print(f"overfit: best training f1_class {best:.4f} in {time.perf_counter() - start:.0f} s")
    assert best > 0.95
    assert time.perf_counter() - start < 15 * 60


# ------------------------------------------------------------------ 7


@pytest.mark.slow
@criterion(7, "transformer depth 2 and 3 beat depth 0 by at least 0.03 validation F1")
def test_ablation_direction():
    records = synth_dataset(7, 60, 64, style=DOMAIN_A)
    tc = TrainConfig(learning_rate=1e-3, epochs=80, batch_size=8, val_fraction=0.2, seed=0)
    loss = LossConfig(DAMAGE_CLASS_WEIGHTS, variant="focal_dice")
    rows = ablation_run(reduced_model_config(image_size=64), loss, tc, "transformer_depth", [0, 2, 3], records)
    f1 = {row.value: row.f1 for row in rows}
    print("ablation f1 by depth:", {k: round(v, 4) for k, v in f1.items()})
    assert f1[2] - f1[0] >= 0.03
    assert f1[3] - f1[0] >= 0.03


# ------------------------------------------------------------------ 8


DA_SIZE = 64
DA_EPOCHS = 80


@pytest.fixture(scope="module")
def source_checkpoint():
    src = synth_dataset(100, 60, DA_SIZE, class_mix=DAMAGE_MIX_A, style=DOMAIN_A)
    tc = TrainConfig(learning_rate=1e-3, epochs=DA_EPOCHS, batch_size=8, val_fraction=0.2, seed=0)
    ckpt, _ = train(build_model(reduced_model_config(image_size=DA_SIZE), seed=0), src, tc, LossConfig())
    return ckpt


def adaptation_scores(ckpt, seed):
    tiles = synth_dataset(200 + seed, 36, DA_SIZE, class_mix=IDA_DISTRIBUTION, style=DOMAIN_B)
    target_train, target_val = tiles[:12], tiles[12:]
    merged_cfg = FineTuneConfig(val_fraction=0.0)
    zero_shot_ckpt, val = prepare_target(ckpt, target_val, merged_cfg)
    zero_shot, _ = evaluate_model(zero_shot_ckpt.build_model(), val, 8)

    tuned_ckpt, _ = fine_tune(ckpt, target_train, FineTuneConfig(val_fraction=0.0, seed=seed))
    assert tuned_ckpt.train_config["epochs"] == 10 and tuned_ckpt.train_config["learning_rate"] == 1e-6
    tuned, _ = evaluate_model(tuned_ckpt.build_model(), val, 8)

    _, train_merged = prepare_target(ckpt, target_train, merged_cfg)
    scratch_model = build_model(reduced_model_config(image_size=DA_SIZE, num_classes=4), seed=seed)
    tc = TrainConfig(learning_rate=1e-3, epochs=DA_EPOCHS, batch_size=8, val_fraction=0.0, seed=seed)
    train(scratch_model, train_merged, tc, target_loss_config(train_merged, 4))
    scratch, _ = evaluate_model(scratch_model, val, 8)
    return tuned.score, zero_shot.score, scratch.score


@pytest.mark.slow
@criterion(8, "fine-tuned > zero-shot > scratch on domain B for at least 4 of 5 seeds")
def test_domain_adaptation_ordering(source_checkpoint):
    wins = 0
    for seed in range(5):
        tuned, zero_shot, scratch = adaptation_scores(source_checkpoint, seed)
        ok = tuned > zero_shot > scratch
        wins += ok
        print(f"seed {seed}: fine-tuned {tuned:.4f} zero-shot {zero_shot:.4f} scratch {scratch:.4f} {ok}")
    assert wins >= 4


# ------------------------------------------------------------------ 9


def _star(r):
    n = int(r.integers(3, 9))
    cx, cy = r.uniform(4, 12, 2)
    angles = np.sort(r.uniform(0, 2 * np.pi, n))
    radii = r.uniform(1.0, 7.0, n)
    return cx + radii * np.cos(angles), cy + radii * np.sin(angles)


@criterion(9, "rasterization matches point-in-polygon and the overlap rule")
def test_rasterization_oracle():
    r = np.random.default_rng(99)
    yy, xx = np.mgrid[0:16, 0:16] + 0.5
    for _ in range(50):
        xs, ys = _star(r)
        mask = rasterize_polygons([PolygonLabel(polygon_wkt(xs, ys))], 16, 16)
        inside = shapely.contains_xy(shapely.Polygon(np.column_stack([xs, ys])), xx, yy)
        assert np.array_equal(mask == 1, inside)

    def square(x0, y0, side, subtype):
        return PolygonLabel(polygon_wkt([x0, x0 + side, x0 + side, x0], [y0, y0, y0 + side, y0 + side]), subtype)

    layers = [square(0, 0, 6, "no-damage"), square(2, 2, 6, "destroyed"), square(4, 4, 6, "minor-damage")]
    for order in ([0, 1, 2], [2, 1, 0], [1, 2, 0]):
        m = rasterize_polygons([layers[i] for i in order], 12, 12)
        assert (m[:2, :2] == 1).all()
        assert (m[2:8, 2:8] == 4).all()
        assert (m[8:10, 8:10] == 2).all()


# ------------------------------------------------------------------ 10


REPRO_DOC = {
    "model": {"levels": 3, "channels": [4, 8, 16], "transformer_depth": 1, "attention_heads": 2,
              "image_size": 32, "token_budget": 1024},
    "train": {"epochs": 2, "batch_size": 4, "val_fraction": 0.25, "learning_rate": 1e-3},
    "finetune": {"epochs": 1, "batch_size": 4, "val_fraction": 0.25},
    "data": {"n_tiles": 8, "size": 32, "style": "A"},
    "ablation": {"axis": "transformer_depth", "values": [0, 1]},
}


def _run_all(root, doc):
    ds, run = root / "ds", root / "run"
    assert cli.main(["synth", "--config", str(doc), "--out", str(ds)]) == 0
    assert cli.main(["train", "--config", str(doc), "--dataset", str(ds), "--out", str(run)]) == 0
    ckpt = str(run / "checkpoint.safetensors")
    assert cli.main(["eval", "--checkpoint", ckpt, "--dataset", str(ds), "--out", str(root / "eval")]) == 0
    assert cli.main(["finetune", "--config", str(doc), "--checkpoint", ckpt, "--dataset", str(ds),
                     "--out", str(root / "ft")]) == 0
    assert cli.main(["ablate", "--config", str(doc), "--dataset", str(ds), "--out", str(root / "ab")]) == 0
    pre = next((ds / "images").glob("*_pre_disaster.png"))
    post = pre.with_name(pre.name.replace("_pre_", "_post_"))
    assert cli.main(["predict", "--checkpoint", ckpt, "--pre", str(pre), "--post", str(post),
                     "--out", str(root / "pred")]) == 0


@criterion(10, "CLI reruns are byte-identical and checkpoints round-trip")
def test_reproducibility(tmp_path):
    doc = tmp_path / "run.json"
    doc.write_text(json.dumps(REPRO_DOC))
    _run_all(tmp_path / "a", doc)
    _run_all(tmp_path / "b", doc)
    outputs = ["ds/manifest.json", "run/history.csv", "eval/report.csv", "ft/history.csv", "ab/ablation.csv",
               "pred/mask.png", "pred/overlay.png"]
    for rel in outputs:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes(), rel

    records = cli.load_dataset(tmp_path / "a" / "ds")
    model = build_model(reduced_model_config(image_size=32), seed=0)
    tc = TrainConfig(learning_rate=1e-3, epochs=3, batch_size=4, val_fraction=0.25, seed=0)
    ckpt, _ = train(model, records, tc, LossConfig())
    path = tmp_path / "model.safetensors"
    ckpt.save(path)
    _, before = evaluate_model(model, records[:2], 2, LossConfig())
    _, after = evaluate_model(Checkpoint.load(path).build_model(), records[:2], 2, LossConfig())
    assert abs(before - after) < 1e-6
