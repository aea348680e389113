"""Quality control for neuron reconstructions.

Find the points where a wrong tracing diverges from a correct one, cut
labeled image patches around them, and package everything for classifier
training and evaluation.
"""

from .errors import (
    DataError,
    DatasetFormatError,
    NeuroQcError,
    SwcParseError,
    SwcValidationError,
    VolumeFormatError,
)
from .matching import (
    DEFAULT_THRESHOLD,
    MatchConfig,
    MatchMap,
    SpatialIndex,
    build_spatial_index,
    find_match,
    match_map,
    match_map_brute,
)
from .poi import PoiLabelSet, label_pois, sample_controls
from .swc import (
    NeuronPoint,
    NeuronReconstruction,
    load_swc,
    parse_swc,
    save_swc,
    serialize_swc,
)
from .volume import Patch, Volume, crop_patch, load_volume, rasterize, save_volume
from .dataset import (
    FoldSplit,
    NqcdReader,
    SampleRecord,
    build_pairs,
    build_pool,
    export_dataset,
    import_dataset,
    split_folds,
)
from .metrics import MetricsReport, ScoreTable, confusion_at, report, roc_auc
from .synthetic import (
    ErrorSpec,
    SynthParams,
    direct_label,
    generate_neuron,
    inject_errors,
    render_volume,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_THRESHOLD",
    "DataError",
    "DatasetFormatError",
    "ErrorSpec",
    "FoldSplit",
    "MatchConfig",
    "MatchMap",
    "MetricsReport",
    "NeuroQcError",
    "NeuronPoint",
    "NeuronReconstruction",
    "NqcdReader",
    "Patch",
    "PoiLabelSet",
    "SampleRecord",
    "ScoreTable",
    "SpatialIndex",
    "SwcParseError",
    "SwcValidationError",
    "SynthParams",
    "Volume",
    "VolumeFormatError",
    "build_pairs",
    "build_pool",
    "build_spatial_index",
    "confusion_at",
    "crop_patch",
    "direct_label",
    "export_dataset",
    "find_match",
    "generate_neuron",
    "import_dataset",
    "inject_errors",
    "label_pois",
    "load_swc",
    "load_volume",
    "match_map",
    "match_map_brute",
    "parse_swc",
    "rasterize",
    "render_volume",
    "report",
    "roc_auc",
    "sample_controls",
    "save_swc",
    "save_volume",
    "serialize_swc",
    "split_folds",
]
