"""Readers for xBD-style and LEVIR-CD-style datasets on disk.

xBD layout::

    images/{event}_{tile:08d}_{pre|post}_disaster.png
    labels/{event}_{tile:08d}_{pre|post}_disaster.json

Label documents hold ``features.xy``: a list of ``{"wkt": ..., "properties":
{"subtype": ...}}`` entries in pixel coordinates (a bare ``features`` list is
accepted too). Footprints come from the pre-disaster document when available;
damage subtypes always come from the post-disaster one.

LEVIR layout: ``A/`` (before), ``B/`` (after), ``label/`` (binary masks), with
matching file names.
"""
from __future__ import annotations

import json
import logging
import re
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from PIL import Image

from ..errors import DataFormatError, DimensionError
from .raster import SUBTYPE_TO_CLASS, SUBTYPES, PolygonLabel, rasterize_polygons
from .records import TileRecord, crop_tiles

log = logging.getLogger(__name__)

XBD_NAME = re.compile(r"^(?P<event>.+)_(?P<tile>\d{8})_(?P<phase>pre|post)_disaster$")

XBD_RESOLUTION = 0.8
LEVIR_RESOLUTION = 0.5


def read_rgb(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def read_gray(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.ndim == 3:
        arr = arr[..., 0]
    return arr


def _features(doc, path):
    feats = doc.get("features") if isinstance(doc, dict) else None
    if isinstance(feats, dict):
        feats = feats.get("xy", [])
    if not isinstance(feats, list):
        raise DataFormatError(f"{path}: no feature list")
    return feats


def read_label_document(path, default_subtype=None) -> Tuple[List[Dict], Dict]:
    """Features as dicts with ``wkt``, ``subtype`` (possibly None) and ``uid``, plus the metadata block."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON ({exc})") from exc
    out = []
    for i, feat in enumerate(_features(doc, path)):
        if not isinstance(feat, dict) or not isinstance(feat.get("wkt"), str):
            raise DataFormatError(f"{path}: feature {i} has no WKT string")
        props = feat.get("properties") or {}
        subtype = props.get("subtype", default_subtype)
        if subtype is not None and subtype not in SUBTYPES:
            raise DataFormatError(f"{path}: feature {i} has unknown subtype {subtype!r}")
        out.append({"wkt": feat["wkt"], "subtype": subtype, "uid": props.get("uid", f"#{i}")})
    meta = doc.get("metadata", {}) if isinstance(doc, dict) else {}
    return out, meta


def xbd_polygons(post_label_path, pre_label_path=None) -> List[PolygonLabel]:
    post, _ = read_label_document(post_label_path)
    if pre_label_path is None:
        return [PolygonLabel(f["wkt"], f["subtype"] or "un-classified") for f in post]
    pre, _ = read_label_document(pre_label_path)
    damage = {f["uid"]: f["subtype"] for f in post}
    polys = []
    for f in pre:
        # post-disaster subtype wins; pre documents normally carry none
        subtype = damage.get(f["uid"]) or f["subtype"] or "un-classified"
        polys.append(PolygonLabel(f["wkt"], subtype))
    return polys


def load_xbd_tile(pre_image_path, post_image_path, label_path, pre_label_path=None,
                  subtype_map=SUBTYPE_TO_CLASS) -> TileRecord:
    pre = read_rgb(pre_image_path)
    post = read_rgb(post_image_path)
    if pre.shape != post.shape:
        raise DimensionError(f"pre {pre.shape} and post {post.shape} images differ")
    _, meta = read_label_document(label_path)
    h, w = pre.shape[:2]
    mh, mw = meta.get("height"), meta.get("width")
    if (mh is not None and int(mh) != h) or (mw is not None and int(mw) != w):
        raise DimensionError(f"{label_path}: label size {mw}x{mh} does not match image {w}x{h}")
    polys = xbd_polygons(label_path, pre_label_path)
    mask = rasterize_polygons(polys, h, w, mapping=subtype_map)
    stem = Path(post_image_path).stem
    m = XBD_NAME.match(stem)
    event, tile = (m.group("event"), m.group("tile")) if m else ("unknown", stem)
    return TileRecord(
        tile_id=f"{event}_{tile}",
        event_id=event,
        pre_image=pre,
        post_image=post,
        label_mask=mask,
        resolution_m_per_px=XBD_RESOLUTION,
        num_classes=5,
    )


def load_xbd_directory(root, crop: Optional[int] = None) -> List[TileRecord]:
    root = Path(root)
    images, labels = root / "images", root / "labels"
    records = []
    for post_path in sorted(images.glob("*_post_disaster.png")):
        m = XBD_NAME.match(post_path.stem)
        if not m:
            continue
        base = f"{m.group('event')}_{m.group('tile')}"
        pre_path = images / f"{base}_pre_disaster.png"
        pre_label = labels / f"{base}_pre_disaster.json"
        rec = load_xbd_tile(
            pre_path,
            post_path,
            labels / f"{base}_post_disaster.json",
            pre_label_path=pre_label if pre_label.exists() else None,
        )
        records.extend(crop_tiles(rec, crop) if crop else [rec])
    return records


def load_levir_pair(a_path, b_path, label_path) -> TileRecord:
    a = read_rgb(a_path)
    b = read_rgb(b_path)
    lab = read_gray(label_path)
    if a.shape != b.shape or lab.shape != a.shape[:2]:
        raise DimensionError(f"LEVIR pair sizes differ: A {a.shape}, B {b.shape}, label {lab.shape}")
    values = np.unique(lab)
    if set(values.tolist()) <= {0, 1}:
        mask = lab.astype(np.int64)
    elif set(values.tolist()) <= {0, 255}:
        mask = (lab == 255).astype(np.int64)
    else:
        raise DataFormatError(f"{label_path}: non-binary label values {values[:8].tolist()}")
    name = Path(a_path).stem
    return TileRecord(
        tile_id=name,
        event_id="levir",
        pre_image=a,
        post_image=b,
        label_mask=mask,
        resolution_m_per_px=LEVIR_RESOLUTION,
        num_classes=2,
    )


def load_levir_directory(root, crop: Optional[int] = 256) -> List[TileRecord]:
    root = Path(root)
    records = []
    for a_path in sorted((root / "A").glob("*.png")):
        rec = load_levir_pair(a_path, root / "B" / a_path.name, root / "label" / a_path.name)
        records.extend(crop_tiles(rec, crop) if crop else [rec])
    return records


def write_png(path, array):
    Image.fromarray(np.asarray(array)).save(path, format="PNG", optimize=False)


def write_xbd_tile(root, record: TileRecord, polygons: Optional[List[PolygonLabel]] = None):
    """Materialize a record in xBD layout; the label mask is also written as ``masks/*.png``."""
    root = Path(root)
    for sub in ("images", "labels", "masks"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    base = record.tile_id
    write_png(root / "images" / f"{base}_pre_disaster.png", record.pre_image)
    write_png(root / "images" / f"{base}_post_disaster.png", record.post_image)
    write_png(root / "masks" / f"{base}.png", record.label_mask.astype(np.uint8))
    if polygons is not None:
        h, w = record.shape
        for phase in ("pre", "post"):
            feats = []
            for i, p in enumerate(polygons):
                props = {"feature_type": "building", "uid": f"{base}-{i}"}
                if phase == "post":
                    props["subtype"] = p.subtype
                feats.append({"wkt": p.wkt, "properties": props})
            doc = {"features": {"xy": feats}, "metadata": {"width": w, "height": h}}
            (root / "labels" / f"{base}_{phase}_disaster.json").write_text(json.dumps(doc, sort_keys=True, indent=1))
