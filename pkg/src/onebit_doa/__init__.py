"""One-bit direction-of-arrival estimation toolkit.

Simulates uniform-linear-array snapshots, quantizes them to one bit with
uniform dithering, recovers the signal covariance from the sign streams,
and estimates sparse source powers on an angle grid with a trainable
unrolled shrinkage network, validated against ISTA, a MUSIC baseline,
and evaluated theoretical error bounds.
"""

from .arrays import (
    ArrayConfig,
    LinearModel,
    SnapshotSet,
    SourceScene,
    build_dictionary,
    build_linear_model,
    generate_snapshots,
    stack_covariance,
    steering_vector,
    true_covariance,
)
from .bounds import BoundParams, covariance_error_norms, per_layer_error_curve, layer_error_bound
from .kernels import BACKEND
from .music import Spectrum, find_peaks, hermitian_eig, match_peaks, music_spectrum, power_spectrum
from .quantization import (
    CovarianceEstimate,
    DitherParams,
    DynamicRangeError,
    DynamicRangeWarning,
    OneBitSet,
    complex_sign,
    estimate_covariance,
    pick_dither_scale,
    quantize,
)
from .solvers import (
    ListaParams,
    TrainingDiverged,
    TrainingSet,
    TrainOptions,
    TrainReport,
    ista_solve,
    lista_backward,
    lista_forward,
    make_scene_sampler,
    make_training_set,
    soft_threshold,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "ArrayConfig",
    "BACKEND",
    "BoundParams",
    "CovarianceEstimate",
    "DitherParams",
    "DynamicRangeError",
    "DynamicRangeWarning",
    "LinearModel",
    "ListaParams",
    "OneBitSet",
    "SnapshotSet",
    "SourceScene",
    "Spectrum",
    "TrainOptions",
    "TrainReport",
    "TrainingDiverged",
    "TrainingSet",
    "build_dictionary",
    "build_linear_model",
    "complex_sign",
    "covariance_error_norms",
    "estimate_covariance",
    "find_peaks",
    "generate_snapshots",
    "hermitian_eig",
    "ista_solve",
    "lista_backward",
    "lista_forward",
    "make_scene_sampler",
    "make_training_set",
    "match_peaks",
    "music_spectrum",
    "per_layer_error_curve",
    "pick_dither_scale",
    "power_spectrum",
    "quantize",
    "soft_threshold",
    "stack_covariance",
    "steering_vector",
    "layer_error_bound",
    "train",
    "true_covariance",
    "__version__",
]
