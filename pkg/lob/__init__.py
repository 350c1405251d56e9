from .book import LobSnapshot, LobEventSeries, feature_names, mid_price, validate_book
from .labeling import Direction, smoothed_future_mid, direction_label, label_series, class_distribution
from .windows import (
    LabeledWindow, WindowSet, NormalizationMode, NormalizationStats,
    build_windows, normalize, denormalize, permute_features, inverse_permutation, random_permutation,
)
from .splits import DatasetSplit, split, split_windows
from .synth import SynthConfig, synth_generate
from .ingest import IngestFormat, ingest, write_canonical_csv, write_labels, read_labels

__all__ = [
    'LobSnapshot', 'LobEventSeries', 'feature_names', 'mid_price', 'validate_book',
    'Direction', 'smoothed_future_mid', 'direction_label', 'label_series', 'class_distribution',
    'LabeledWindow', 'WindowSet', 'NormalizationMode', 'NormalizationStats',
    'build_windows', 'normalize', 'denormalize', 'permute_features', 'inverse_permutation', 'random_permutation',
    'DatasetSplit', 'split', 'split_windows',
    'SynthConfig', 'synth_generate',
    'IngestFormat', 'ingest', 'write_canonical_csv', 'write_labels', 'read_labels',
]
