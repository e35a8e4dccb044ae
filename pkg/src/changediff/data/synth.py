"""Deterministic synthetic bi-temporal tiles for desk-scale experiments.

Each tile is a textured ground plane with non-overlapping (rotated) rectangular
buildings. In damage mode the post-disaster image transforms every building
according to its class:

* 1 no damage: unchanged
* 2 minor: mild roof brightening with a few bright spots
* 3 major: strong colour shift and a debris patch occluding part of the roof
* 4 destroyed: roof replaced by ground texture with debris speckle

In binary (change) mode, class-1 buildings are new construction (absent from
the pre image) while unchanged buildings stay labelled 0.

Every tile derives its own seed from ``(seed, index)`` so any tile can be
regenerated in isolation from the manifest.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Tuple

import numpy as np

from .. import kernels
from ..errors import ChangeDiffError
from .raster import PolygonLabel, polygon_wkt
from .records import TileRecord

XBD_DISTRIBUTION = (96.1, 2.7, 0.1, 0.1, 0.1)
IDA_DISTRIBUTION = (81.7, 11.9, 4.6, 1.6, 0.05)

SUBTYPE_OF_CLASS = {1: "no-damage", 2: "minor-damage", 3: "major-damage", 4: "destroyed"}


class PackingError(ChangeDiffError):
    """Requested building coverage could not be placed."""


@dataclass(frozen=True)
class SynthStyle:
    """Sensor and scene appearance of a synthetic domain."""

    name: str = "P"
    resolution_m_per_px: float = 0.8
    building_side_m: Tuple[float, float] = (6.0, 14.0)
    ground_rgb: Tuple[int, int, int] = (96, 118, 72)
    roof_palette: Tuple[Tuple[int, int, int], ...] = ((178, 172, 165), (150, 92, 80), (120, 128, 140), (200, 196, 180))
    debris_rgb: Tuple[int, int, int] = (128, 104, 82)
    texture_amplitude: float = 22.0
    rotate: bool = True
    noise_std: float = 3.0
    # acquisition differences between the two dates (off: identical up to noise)
    illumination_shift: float = 0.0
    sun_shift: bool = False
    # binary mode only: coverage of unchanged buildings (label 0)
    static_coverage: float = 0.08

    def to_dict(self):
        d = asdict(self)
        d["roof_palette"] = [list(c) for c in self.roof_palette]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k in ("building_side_m", "ground_rgb", "debris_rgb"):
            if k in d:
                d[k] = tuple(d[k])
        if "roof_palette" in d:
            d["roof_palette"] = tuple(tuple(c) for c in d["roof_palette"])
        return cls(**d)


PLAIN = SynthStyle(name="P")

# two acquisition domains; both vary sun direction and illumination between dates
DOMAIN_A = SynthStyle(name="A", sun_shift=True, illumination_shift=0.1)

DOMAIN_B = SynthStyle(
    name="B",
    sun_shift=True,
    illumination_shift=0.1,
    resolution_m_per_px=0.5,
    ground_rgb=(112, 104, 84),
    roof_palette=((210, 205, 198), (96, 96, 104), (168, 120, 96), (140, 150, 160)),
    debris_rgb=(150, 124, 100),
    texture_amplitude=16.0,
)

# Class mixes (pixel fractions) used for desk-scale experiments. They keep the
# ordering of the reference distributions while leaving enough damaged pixels
# to learn from on small tiles.
DAMAGE_MIX_A = (0.80, 0.11, 0.035, 0.03, 0.025)
DAMAGE_MIX_B = (0.80, 0.12, 0.05, 0.025, 0.005)
CHANGE_MIX = (0.90, 0.10)


def tile_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def _normalize_mix(class_mix, num_classes):
    mix = np.asarray(class_mix, dtype=np.float64)
    if mix.shape != (num_classes,) or (mix < 0).any() or mix.sum() <= 0:
        raise ValueError(f"class_mix must hold {num_classes} nonnegative values")
    return mix / mix.sum()


def _smooth_noise(rng, size, cells, channels=1):
    """Bilinearly upsampled coarse noise in roughly [-1, 1]."""
    coarse = rng.uniform(-1, 1, size=(cells + 1, cells + 1, channels))
    pos = np.linspace(0, cells, size, endpoint=False) + cells / (2 * size)
    i0 = np.floor(pos).astype(int)
    t = (pos - i0)[:, None]
    i1 = np.minimum(i0 + 1, cells)
    rows = coarse[i0] * (1 - t[..., None]) + coarse[i1] * t[..., None]
    cols = rows[:, i0] * (1 - t[None, :, :]) + rows[:, i1] * t[None, :, :]
    return cols


def _ground(rng, size, style):
    low = _smooth_noise(rng, size, max(2, size // 16), 1)
    tint = _smooth_noise(rng, size, max(2, size // 32), 3)
    fine = rng.normal(0, 1, size=(size, size, 1))
    base = np.asarray(style.ground_rgb, dtype=np.float64)
    amp = style.texture_amplitude
    return base + amp * low + 0.4 * amp * tint + 0.25 * amp * fine


def _rect_polygon(rng, cx, cy, w, h, rotate):
    ang = rng.uniform(0, math.pi / 2) if rotate else 0.0
    c, s = math.cos(ang), math.sin(ang)
    pts = [(-w / 2, -h / 2), (w / 2, -h / 2), (w / 2, h / 2), (-w / 2, h / 2)]
    xs = [round(cx + x * c - y * s, 3) for x, y in pts]
    ys = [round(cy + x * s + y * c, 3) for x, y in pts]
    return xs, ys


def _place_buildings(rng, size, target_px, style, max_attempts=400):
    """Non-overlapping building footprints until ``target_px`` pixels are covered."""
    lo, hi = (v / style.resolution_m_per_px for v in style.building_side_m)
    occupied = np.zeros((size, size), dtype=bool)
    buildings = []
    covered = 0
    attempts = 0
    while covered < target_px - 0.5 * lo * lo and attempts < max_attempts:
        attempts += 1
        w = rng.uniform(lo, hi)
        h = rng.uniform(lo, hi)
        half = 0.5 * math.hypot(w, h)
        cx = rng.uniform(half, size - half) if size > 2 * half else size / 2
        cy = rng.uniform(half, size - half) if size > 2 * half else size / 2
        xs, ys = _rect_polygon(rng, cx, cy, w, h, style.rotate)
        fp = kernels.even_odd_fill([(np.array(xs), np.array(ys))], size, size)
        n = int(fp.sum())
        if n == 0:
            continue
        # one-pixel gap between buildings
        grown = fp.copy()
        grown[1:] |= fp[:-1]
        grown[:-1] |= fp[1:]
        grown[:, 1:] |= fp[:, :-1]
        grown[:, :-1] |= fp[:, 1:]
        if (grown & occupied).any():
            continue
        occupied |= fp
        buildings.append((xs, ys, fp))
        covered += n
    if covered < 0.5 * target_px:
        raise PackingError(f"placed {covered} of {target_px:.0f} building pixels after {attempts} attempts")
    return buildings, occupied


def _assign_classes(rng, buildings, mix_fg, classes):
    """Draw one class per building, steering toward the target pixel shares."""
    areas = np.array([b[2].sum() for b in buildings], dtype=np.float64)
    total = areas.sum()
    assigned = np.zeros(len(classes))
    out = []
    for i in rng.permutation(len(buildings)):
        deficit = np.maximum(mix_fg * total - assigned, 0.0) + 1e-9 * mix_fg
        p = deficit * (mix_fg > 0)
        k = rng.choice(len(classes), p=p / p.sum())
        assigned[k] += areas[i]
        out.append((i, classes[k]))
    out.sort()
    return [c for _, c in out]


def _damage(rng, img, fp, cls, style):
    ys, xs = np.nonzero(fp)
    if cls == 2:
        img[fp] = img[fp] * 1.12 + 18
        spots = rng.random(len(ys)) < 0.08
        img[ys[spots], xs[spots]] = 235
    elif cls == 3:
        shift = np.array([40.0, -10.0, -45.0])
        img[fp] = 0.55 * img[fp] + 0.45 * np.asarray(style.debris_rgb) + shift
        # debris band occluding the lower part of the roof
        cut = ys.min() + int(rng.uniform(0.35, 0.6) * (ys.max() + 1 - ys.min()))
        band = fp.copy()
        band[:cut] = False
        img[band] = np.asarray(style.debris_rgb) + rng.normal(0, 12, size=(int(band.sum()), 3))
    elif cls == 4:
        speck = rng.random(len(ys)) < 0.3
        img[ys[speck], xs[speck]] = np.asarray(style.debris_rgb) + rng.normal(0, 25, size=(int(speck.sum()), 3))


SUN_OFFSETS = ((2, 2), (2, -2), (-2, 2), (-2, -2), (0, 3), (3, 0))


def _roof(rng, fp, style):
    color = np.asarray(style.roof_palette[rng.integers(len(style.roof_palette))], dtype=np.float64)
    ys, xs = np.nonzero(fp)
    grad = (xs - xs.mean()) / max(1.0, float(np.ptp(xs)))
    return color + 10.0 * grad[:, None]


def _shadow_of(fp, offset=(2, 2)):
    """Footprint translated by ``offset`` (rows, cols), minus the footprint itself."""
    dy, dx = offset
    h, w = fp.shape
    shadow = np.zeros_like(fp)
    shadow[max(dy, 0):h + min(dy, 0), max(dx, 0):w + min(dx, 0)] = fp[max(-dy, 0):h - max(dy, 0), max(-dx, 0):w - max(dx, 0)]
    return shadow & ~fp


def _render(ground, footprints, roofs, offset):
    img = ground.copy()
    occupied = np.zeros(ground.shape[:2], dtype=bool)
    for fp in footprints:
        occupied |= fp
    for fp in footprints:
        img[_shadow_of(fp, offset) & ~occupied] *= 0.55
    for fp, roof in zip(footprints, roofs):
        img[fp] = roof
    return img


def _finish(rng, img, style, shift=None):
    if shift is not None:
        gain, offset = shift
        img = img * gain + offset
    if style.noise_std > 0:
        img = img + rng.normal(0, style.noise_std, size=img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def synth_tile(seed, size, num_classes=5, class_mix=None, style: SynthStyle = PLAIN, tile_id="synth_00000000"):
    """One synthetic record plus its building polygons."""
    if num_classes < 2:
        raise ValueError("num_classes must be >= 2")
    if class_mix is None:
        class_mix = DAMAGE_MIX_A if num_classes == 5 else CHANGE_MIX if num_classes == 2 else [1.0] * num_classes
    mix = _normalize_mix(class_mix, num_classes)
    rng = np.random.default_rng(seed)
    ground = _ground(rng, size, style)
    mask = np.zeros((size, size), dtype=np.int64)
    polys: List[PolygonLabel] = []

    fg = 1.0 - mix[0]
    static = style.static_coverage if num_classes == 2 else 0.0
    target = (fg + static) * size * size
    buildings, _ = _place_buildings(rng, size, target, style) if target > 0 else ([], None)
    if num_classes == 2:
        mix_fg = np.array([static, fg]) / max(fg + static, 1e-12)
        classes = _assign_classes(rng, buildings, mix_fg, [0, 1]) if buildings else []
    else:
        mix_fg = mix[1:] / fg if fg > 0 else np.zeros(num_classes - 1)
        classes = _assign_classes(rng, buildings, mix_fg, list(range(1, num_classes))) if buildings else []

    sun_pre = SUN_OFFSETS[0]
    sun_post = SUN_OFFSETS[rng.integers(1, len(SUN_OFFSETS))] if style.sun_shift else sun_pre
    roofs = [_roof(rng, fp, style) for _, _, fp in buildings]
    if num_classes == 2:
        # class 1 is new construction: only present after
        pre_idx = [i for i, c in enumerate(classes) if c == 0]
        post_idx = list(range(len(buildings)))
    else:
        pre_idx = list(range(len(buildings)))
        post_idx = [i for i, c in enumerate(classes) if c != 4]
    pre = _render(ground, [buildings[i][2] for i in pre_idx], [roofs[i] for i in pre_idx], sun_pre)
    post = _render(ground, [buildings[i][2] for i in post_idx], [roofs[i] for i in post_idx], sun_post)

    for (xs, ys, fp), cls in zip(buildings, classes):
        if num_classes > 2:
            if cls > 1:
                _damage(rng, post, fp, cls, style)
            polys.append(PolygonLabel(polygon_wkt(xs, ys), SUBTYPE_OF_CLASS.get(cls, "no-damage")))
        mask[fp] = cls

    shift = None
    if style.illumination_shift > 0:
        s = style.illumination_shift
        gain = rng.uniform(1 - s, 1 + s, size=3) * rng.uniform(1 - s, 1 + s)
        offset = rng.uniform(-60 * s, 60 * s, size=3)
        shift = (gain, offset)
    pre_u8 = _finish(rng, pre, style)
    post_u8 = _finish(rng, post, style, shift)
    rec = TileRecord(
        tile_id=tile_id,
        event_id=f"synth-{style.name}",
        pre_image=pre_u8,
        post_image=post_u8,
        label_mask=mask,
        resolution_m_per_px=style.resolution_m_per_px,
        num_classes=num_classes,
        meta={"seed": int(seed)},
    )
    return rec, polys


def synth_dataset(seed, n_tiles, size, num_classes=5, class_mix=None, style: SynthStyle = PLAIN,
                  return_polygons=False):
    """``n_tiles`` deterministic records; identical arguments give identical bytes."""
    if n_tiles < 0:
        raise ValueError("n_tiles must be >= 0")
    records, polygons = [], []
    for i in range(n_tiles):
        rec, polys = synth_tile(
            tile_seed(seed, i), size, num_classes, class_mix, style, tile_id=f"synth{style.name}_{i:08d}"
        )
        records.append(rec)
        polygons.append(polys)
    return (records, polygons) if return_polygons else records


def manifest(seed, n_tiles, size, num_classes, class_mix, style: SynthStyle) -> Dict:
    """Index sufficient to regenerate the dataset bit-exactly."""
    mix = None if class_mix is None else [float(v) for v in class_mix]
    return {
        "generator": "changediff.synth",
        "version": 1,
        "seed": int(seed),
        "size": int(size),
        "num_classes": int(num_classes),
        "style": style.to_dict(),
        "tiles": [
            {"tile_id": f"synth{style.name}_{i:08d}", "seed": tile_seed(seed, i), "class_mix": mix}
            for i in range(n_tiles)
        ],
    }


def from_manifest(doc) -> List[TileRecord]:
    style = SynthStyle.from_dict(doc["style"])
    return [
        synth_tile(t["seed"], doc["size"], doc["num_classes"], t["class_mix"], style, tile_id=t["tile_id"])[0]
        for t in doc["tiles"]
    ]
