from .dataset import (
    DatasetMeta,
    SplitSpec,
    WindowedDataset,
    load_dataset_file,
    make_split,
    save_dataset,
    sliding_windows,
    window_count,
)
from .loaders import DataError, load_dataset
from .synthetic import PlantedTruth, SyntheticSpec, generate_synthetic, shift_benchmark

__all__ = [
    "DataError",
    "DatasetMeta",
    "PlantedTruth",
    "SplitSpec",
    "SyntheticSpec",
    "WindowedDataset",
    "generate_synthetic",
    "load_dataset",
    "load_dataset_file",
    "make_split",
    "save_dataset",
    "shift_benchmark",
    "sliding_windows",
    "window_count",
]
