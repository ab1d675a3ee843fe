"""Class-decomposition classification pipeline.

Decompose each class of a labeled feature dataset into sub-classes by
clustering in a PCA-projected space, train a softmax head on the decomposed
labels, then compose sub-class predictions back onto the original classes.
"""

from .classifier import (
    SoftmaxHead,
    TrainConfig,
    TrainHistory,
    cross_entropy,
    gradient_check,
    predict_proba,
    train,
)
from .dataset import (
    DecomposedSet,
    LabelSpace,
    ParentMap,
    SampleSet,
    load_manifest,
    raw_pixel_features,
    read_features,
    split,
    write_features,
)
from .decomposition import (
    COMPOSE_ARGMAX,
    COMPOSE_SUM,
    DecompositionConfig,
    KMeansModel,
    compose,
    decompose,
    kmeans_fit,
)
from .errors import DataError, DetracError, FormatError, TrainingDiverged
from .evaluation import ConfusionMatrix, MetricsReport, confusion, metrics, per_class_counts
from .imaging import (
    AugmentationSpec,
    GrayImage,
    augment,
    flip,
    histogram_modify,
    load_image,
    rotate,
    translate,
)
from .kernels import BACKEND
from .projection import PcaModel, fit_pca, project, reconstruct

__version__ = "0.1.0"

__all__ = [
    "AugmentationSpec",
    "BACKEND",
    "COMPOSE_ARGMAX",
    "COMPOSE_SUM",
    "ConfusionMatrix",
    "DataError",
    "DecomposedSet",
    "DecompositionConfig",
    "DetracError",
    "FormatError",
    "GrayImage",
    "KMeansModel",
    "LabelSpace",
    "MetricsReport",
    "ParentMap",
    "PcaModel",
    "SampleSet",
    "SoftmaxHead",
    "TrainConfig",
    "TrainHistory",
    "TrainingDiverged",
    "augment",
    "compose",
    "confusion",
    "cross_entropy",
    "decompose",
    "fit_pca",
    "flip",
    "gradient_check",
    "histogram_modify",
    "kmeans_fit",
    "load_image",
    "load_manifest",
    "metrics",
    "per_class_counts",
    "predict_proba",
    "project",
    "raw_pixel_features",
    "read_features",
    "reconstruct",
    "rotate",
    "split",
    "train",
    "translate",
    "write_features",
]
