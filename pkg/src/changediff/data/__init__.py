from .augment import augment
from .formats import (
    load_levir_directory,
    load_levir_pair,
    load_xbd_directory,
    load_xbd_tile,
    write_xbd_tile,
)
from .raster import PolygonLabel, rasterize_polygons
from .records import TileRecord, crop_tiles
from .split import stratified_split
from .stats import class_pixel_distribution, derive_class_weights
from .synth import DOMAIN_A, DOMAIN_B, PLAIN, SynthStyle, synth_dataset
