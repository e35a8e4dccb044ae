from .checkpoint import FORMAT_VERSION, Checkpoint
from .network import (
    ChangeNet,
    HierarchicalDecoder,
    TransformerDifference,
    UNetEncoder,
    build_model,
    normalize_image,
    predict_masks,
)
