"""Building polygons to label masks.

A pixel belongs to a polygon iff its centre ``(c + 0.5, r + 0.5)`` lies inside
under the even-odd rule. Polygons are drawn in ascending class order, so where
footprints overlap the higher damage level wins.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
import shapely
import shapely.wkt
from shapely.geometry import MultiPolygon, Polygon

from .. import kernels
from ..errors import DataFormatError

log = logging.getLogger(__name__)

SUBTYPES = ("no-damage", "minor-damage", "major-damage", "destroyed", "un-classified")

SUBTYPE_TO_CLASS = {
    "no-damage": 1,
    "minor-damage": 2,
    "major-damage": 3,
    "destroyed": 4,
    "un-classified": 1,
}


@dataclass(frozen=True)
class PolygonLabel:
    wkt: str
    subtype: str = "no-damage"

    def __post_init__(self):
        if self.subtype not in SUBTYPES:
            raise DataFormatError(f"unknown damage subtype {self.subtype!r}")

    def class_index(self, mapping=SUBTYPE_TO_CLASS) -> int:
        return mapping[self.subtype]

    def rings(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        return wkt_rings(self.wkt)


def wkt_rings(wkt: str) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Exterior and interior rings of a (multi)polygon WKT string as vertex arrays."""
    try:
        geom = shapely.wkt.loads(wkt)
    except shapely.errors.ShapelyError as exc:
        raise DataFormatError(f"malformed polygon text: {wkt[:60]!r}") from exc
    if isinstance(geom, Polygon):
        parts = [geom]
    elif isinstance(geom, MultiPolygon):
        parts = list(geom.geoms)
    else:
        raise DataFormatError(f"expected POLYGON or MULTIPOLYGON, got {geom.geom_type}")
    rings = []
    for poly in parts:
        for ring in [poly.exterior, *poly.interiors]:
            xy = np.asarray(ring.coords, dtype=np.float64)
            if len(xy) > 1 and np.array_equal(xy[0], xy[-1]):
                xy = xy[:-1]
            rings.append((xy[:, 0], xy[:, 1]))
    return rings


def polygon_wkt(xs: Sequence[float], ys: Sequence[float]) -> str:
    pts = list(zip(xs, ys))
    pts.append(pts[0])
    return "POLYGON ((" + ", ".join(f"{float(x)!r} {float(y)!r}" for x, y in pts) + "))"


def rasterize_polygons(polygons: Sequence[PolygonLabel], height: int, width: int,
                       mapping=SUBTYPE_TO_CLASS, use_numba=None) -> np.ndarray:
    """Label mask with background 0. Degenerate polygons are skipped with a warning."""
    mask, _ = rasterize_with_report(polygons, height, width, mapping=mapping, use_numba=use_numba)
    return mask


def rasterize_with_report(polygons, height, width, mapping=SUBTYPE_TO_CLASS, use_numba=None):
    mask = np.zeros((height, width), dtype=np.int64)
    skipped = 0
    keyed = []
    for i, poly in enumerate(polygons):
        rings = [r for r in poly.rings() if len(r[0]) >= 3]
        if not rings:
            skipped += 1
            continue
        keyed.append((poly.class_index(mapping), i, rings))
    # stable: equal classes keep document order
    for cls, _, rings in sorted(keyed, key=lambda t: (t[0], t[1])):
        inside = kernels.even_odd_fill(rings, height, width, use_numba=use_numba)
        mask[inside] = cls
    if skipped:
        log.warning("skipped %d degenerate polygon(s) with fewer than 3 vertices", skipped)
    return mask, skipped
