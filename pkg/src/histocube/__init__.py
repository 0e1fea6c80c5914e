"""Local histogram transforms, occlusion texture models, and classification."""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .grid import (Grid, HistCube, Image, LabelMap, Quantization, ValueSpace,
                   WeightingFunction, characteristic_cube, quantize_values,
                   reverse_weights, translate_image, translate_labels)
from .localhist import (FilterPlan, LevelFilter, bin_histcube, local_histogram,
                        local_histogram_level, noncyclic_local_histogram,
                        tensor_convolve_check)
from .windows import (box_window, center_weighted_window, delta_window,
                      window_from_spec)

__all__ = [
    "BACKEND", "Grid", "HistCube", "Image", "LabelMap", "Quantization",
    "ValueSpace", "WeightingFunction", "characteristic_cube", "quantize_values",
    "reverse_weights", "translate_image", "translate_labels", "FilterPlan",
    "LevelFilter", "bin_histcube", "local_histogram", "local_histogram_level",
    "noncyclic_local_histogram", "tensor_convolve_check", "box_window",
    "center_weighted_window", "delta_window", "window_from_spec", "__version__",
]
