"""``changediff`` command line: synth, train, finetune, eval, predict, ablate.

Every command reads an optional JSON run document (``--config``) with the
sections ``model``, ``loss``, ``train``, ``finetune``, ``data`` and
``ablation``; flags override document fields.  Outputs land under ``--out``.

Exit codes: 0 success, 1 I/O or data error, 2 numeric divergence, 64 usage error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from .config import FineTuneConfig, LossConfig, ModelConfig, TrainConfig, load_run_document
from .data import synth as synth_mod
from .data.formats import load_levir_directory, load_xbd_directory, read_rgb, write_png, write_xbd_tile
from .errors import ChangeDiffError, ConfigError, DataFormatError, DivergenceError
from .metrics import report_to_csv, report_to_text
from .model import Checkpoint, build_model, normalize_image, predict_masks
from .training import ablation_run, ablation_to_csv, evaluate_model, fine_tune, train
from .training.finetune import target_loss_config

log = logging.getLogger("changediff")

EXIT_OK = 0
EXIT_IO = 1
EXIT_DIVERGED = 2
EXIT_USAGE = 64

PALETTE = np.array(
    [(0, 0, 0), (0, 255, 0), (255, 255, 0), (255, 128, 0), (255, 0, 0)],
    dtype=np.uint8,
)

STYLES = {"P": synth_mod.PLAIN, "A": synth_mod.DOMAIN_A, "B": synth_mod.DOMAIN_B}

CHECKPOINT_NAME = "checkpoint.safetensors"
BEST_NAME = "best.safetensors"


class UsageError(ChangeDiffError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------- helpers


def _existing(path, what):
    if path is None:
        raise UsageError(f"--{what} is required")
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} path does not exist: {p}")
    return p


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _document(args):
    return load_run_document(_existing(args.config, "config")) if args.config else {}


def _device(name):
    try:
        dev = torch.device(name)
    except RuntimeError as exc:
        raise UsageError(f"unknown device {name!r}") from exc
    if dev.type == "cuda" and not torch.cuda.is_available():
        raise UsageError("CUDA requested but not available")
    return dev


def _train_config(doc, seed):
    tc = TrainConfig.from_dict(doc.get("train") or {})
    if seed is not None:
        tc = dataclasses.replace(tc, seed=seed)
    return tc


def _style(spec):
    if spec is None:
        return synth_mod.PLAIN
    if isinstance(spec, str):
        if spec not in STYLES:
            raise ConfigError(f"unknown synthetic style {spec!r}; expected one of {sorted(STYLES)}")
        return STYLES[spec]
    return synth_mod.SynthStyle.from_dict(spec)


def _loss_config(doc, model_config, records):
    """Document loss section, else the damage defaults, else weights derived from the data."""
    if doc.get("loss"):
        return LossConfig.from_dict(doc["loss"])
    if model_config.num_classes == 5:
        return LossConfig()
    return target_loss_config(records, model_config.num_classes)


def load_dataset(root, crop=None):
    """Records from an xBD-layout (``images/``) or LEVIR-layout (``A/``, ``B/``, ``label/``) directory."""
    root = _existing(root, "dataset")
    if (root / "images").is_dir():
        records = load_xbd_directory(root, crop=crop)
    elif (root / "A").is_dir():
        records = load_levir_directory(root, crop=crop)
    else:
        raise DataFormatError(f"{root}: neither xBD (images/) nor LEVIR (A/, B/, label/) layout")
    if not records:
        raise DataFormatError(f"{root}: no tiles found")
    return records


def overlay(mask):
    """Palette image of an integer mask; a bijection on the classes 0..4."""
    mask = np.asarray(mask)
    if mask.min() < 0 or mask.max() >= len(PALETTE):
        raise ValueError(f"mask values outside 0..{len(PALETTE) - 1}")
    return PALETTE[mask]


def mask_from_overlay(rgb):
    rgb = np.asarray(rgb, dtype=np.uint8)
    codes = rgb[..., 0].astype(np.int64) << 16 | rgb[..., 1].astype(np.int64) << 8 | rgb[..., 2]
    lut = {int(r) << 16 | int(g) << 8 | int(b): k for k, (r, g, b) in enumerate(PALETTE)}
    out = np.full(codes.shape, -1, dtype=np.int64)
    for code, k in lut.items():
        out[codes == code] = k
    if (out < 0).any():
        raise ValueError("overlay contains colours outside the palette")
    return out


# --------------------------------------------------------------------------- commands


def cmd_synth(args):
    doc = _document(args)
    data = dict(doc.get("data") or {})
    for key in ("n_tiles", "size", "num_classes", "style"):
        v = getattr(args, key)
        if v is not None:
            data[key] = v
    seed = args.seed if args.seed is not None else int(data.get("seed", 0))
    n_tiles = int(data.get("n_tiles", 4))
    size = int(data.get("size", 128))
    num_classes = int(data.get("num_classes", 5))
    class_mix = data.get("class_mix")
    style = _style(data.get("style"))
    stride = ModelConfig.from_dict(doc["model"]).stride if doc.get("model") else ModelConfig().stride
    if n_tiles < 1:
        raise UsageError("n_tiles must be >= 1")
    if size <= 0 or size % stride:
        raise UsageError(f"size {size} is not a positive multiple of the network stride {stride}")
    if num_classes not in (2, 5):
        raise UsageError("num_classes must be 2 (change) or 5 (damage)")
    out = _out_dir(args)
    records, polygons = synth_mod.synth_dataset(seed, n_tiles, size, num_classes, class_mix, style,
                                                return_polygons=True)
    for rec, polys in zip(records, polygons):
        if num_classes == 2:
            for sub, arr in (("A", rec.pre_image), ("B", rec.post_image), ("label", rec.label_mask * 255)):
                (out / sub).mkdir(exist_ok=True)
                write_png(out / sub / f"{rec.tile_id}.png", arr.astype(np.uint8))
        else:
            write_xbd_tile(out, rec, polys)
    doc_out = synth_mod.manifest(seed, n_tiles, size, num_classes, class_mix, style)
    (out / "manifest.json").write_text(json.dumps(doc_out, sort_keys=True, indent=1) + "\n")
    print(f"wrote {n_tiles} tiles to {out}")
    return EXIT_OK


def _write_history(out, history):
    (out / "history.csv").write_text(history.to_csv())
    (out / "timings.json").write_text(json.dumps(history.timings(), indent=1) + "\n")


def cmd_train(args):
    doc = _document(args)
    tc = _train_config(doc, args.seed)
    mc = ModelConfig.from_dict(doc.get("model") or {})
    crop = (doc.get("data") or {}).get("crop")
    records = load_dataset(args.dataset, crop)
    lc = _loss_config(doc, mc, records)
    out = _out_dir(args)
    model = build_model(mc, seed=tc.seed).to(_device(args.device))
    final, history = train(model, records, tc, lc)
    final.save(out / CHECKPOINT_NAME)
    history.best_checkpoint.save(out / BEST_NAME)
    _write_history(out, history)
    print(f"trained {len(history)} epochs; best epoch {history.best_epoch}")
    return EXIT_OK


def cmd_finetune(args):
    ckpt_path = _existing(args.checkpoint, "checkpoint")
    doc = _document(args)
    ft = FineTuneConfig.from_dict(doc.get("finetune") or {})
    if args.seed is not None:
        ft = dataclasses.replace(ft, seed=args.seed)
    lc = LossConfig.from_dict(doc["loss"]) if doc.get("loss") else None
    crop = (doc.get("data") or {}).get("crop")
    records = load_dataset(args.dataset, crop)
    out = _out_dir(args)
    ckpt = Checkpoint.load(ckpt_path)
    final, history = fine_tune(ckpt, records, ft, lc, device=_device(args.device))
    final.save(out / CHECKPOINT_NAME)
    if history.best_checkpoint is not None:
        history.best_checkpoint.save(out / BEST_NAME)
    _write_history(out, history)
    print(f"fine-tuned {len(history)} epochs")
    return EXIT_OK


def cmd_eval(args):
    ckpt = Checkpoint.load(_existing(args.checkpoint, "checkpoint"))
    doc = _document(args)
    crop = (doc.get("data") or {}).get("crop")
    records = load_dataset(args.dataset, crop)
    k = ckpt.model_config.num_classes
    bad = [r.tile_id for r in records if r.num_classes > k]
    if bad:
        raise UsageError(f"dataset has {records[0].num_classes} classes, checkpoint predicts {k}")
    out = _out_dir(args)
    model = ckpt.build_model().to(_device(args.device))
    report, _ = evaluate_model(model, records, batch_size=4)
    (out / "report.csv").write_text(report_to_csv(report))
    text = report_to_text(report)
    (out / "report.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_predict(args):
    ckpt = Checkpoint.load(_existing(args.checkpoint, "checkpoint"))
    pre = read_rgb(_existing(args.pre, "pre"))
    post = read_rgb(_existing(args.post, "post"))
    if pre.shape != post.shape:
        raise UsageError(f"pre {pre.shape} and post {post.shape} images differ in size")
    stride = ckpt.model_config.stride
    if pre.shape[0] % stride or pre.shape[1] % stride:
        raise UsageError(f"image size {pre.shape[:2]} is not a multiple of the network stride {stride}")
    out = _out_dir(args)
    dev = _device(args.device)
    model = ckpt.build_model().to(dev).eval()
    with torch.no_grad():
        logits = model(normalize_image(pre).to(dev), normalize_image(post).to(dev))
    damage, _ = predict_masks(logits[0])
    write_png(out / "mask.png", damage.astype(np.uint8))
    write_png(out / "overlay.png", overlay(damage))
    print(f"wrote {out / 'mask.png'} and {out / 'overlay.png'}")
    return EXIT_OK


def _parse_values(axis, raw):
    values = []
    for item in raw:
        if axis == "transformer_levels":
            values.append(tuple(int(v) for v in item.split(",") if v != "") if isinstance(item, str) else tuple(item))
        elif axis == "transformer_depth":
            values.append(int(item))
        elif axis == "conv_after_merge":
            values.append(item if isinstance(item, bool) else str(item).lower() in ("1", "true", "yes"))
        else:
            values.append(str(item))
    return values


def cmd_ablate(args):
    doc = _document(args)
    abl = dict(doc.get("ablation") or {})
    axis = args.axis or abl.get("axis")
    raw = args.values if args.values is not None else abl.get("values")
    if axis is None:
        raise UsageError("ablation axis missing (--axis or ablation.axis)")
    if not raw:
        raise UsageError("ablation grid is empty")
    values = _parse_values(axis, raw)
    tc = _train_config(doc, args.seed)
    mc = ModelConfig.from_dict(doc.get("model") or {})
    crop = (doc.get("data") or {}).get("crop")
    records = load_dataset(args.dataset, crop)
    lc = _loss_config(doc, mc, records)
    out = _out_dir(args)
    rows = ablation_run(mc, lc, tc, axis, values, records, device=_device(args.device))
    text = ablation_to_csv(axis, rows)
    (out / "ablation.csv").write_text(text)
    print(text, end="")
    return EXIT_OK


# --------------------------------------------------------------------------- entry point


def build_parser():
    parser = _Parser(prog="changediff", description="Bi-temporal building change and damage mapping.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, dataset=False, checkpoint=False):
        p.add_argument("--config", help="JSON run document")
        p.add_argument("--out", required=True, help="output directory (created if absent)")
        p.add_argument("--seed", type=int, help="overrides the document seed")
        p.add_argument("--device", default="cpu")
        if dataset:
            p.add_argument("--dataset", required=True, help="xBD- or LEVIR-layout directory")
        if checkpoint:
            p.add_argument("--checkpoint", help="checkpoint file (.safetensors)")
        return p

    p = common(sub.add_parser("synth", help="write a deterministic synthetic dataset"))
    p.add_argument("--n-tiles", dest="n_tiles", type=int)
    p.add_argument("--size", type=int)
    p.add_argument("--num-classes", dest="num_classes", type=int)
    p.add_argument("--style", choices=sorted(STYLES))
    p.set_defaults(func=cmd_synth)

    common(sub.add_parser("train", help="train from scratch"), dataset=True).set_defaults(func=cmd_train)
    common(sub.add_parser("finetune", help="fine-tune a checkpoint on a target domain"),
           dataset=True, checkpoint=True).set_defaults(func=cmd_finetune)
    common(sub.add_parser("eval", help="score a checkpoint on a dataset"),
           dataset=True, checkpoint=True).set_defaults(func=cmd_eval)

    p = common(sub.add_parser("predict", help="damage mask and colour overlay for one image pair"), checkpoint=True)
    p.add_argument("--pre", required=True)
    p.add_argument("--post", required=True)
    p.set_defaults(func=cmd_predict)

    p = common(sub.add_parser("ablate", help="one training run per value of a design axis"), dataset=True)
    p.add_argument("--axis")
    p.add_argument("--values", nargs="*", help="grid values; transformer_levels entries are comma lists")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"changediff: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"changediff: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, DataFormatError, ChangeDiffError, ValueError) as exc:
        print(f"changediff: error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
