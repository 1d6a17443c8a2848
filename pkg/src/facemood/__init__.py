"""facemood: facial-expression recognition engine with a real-time
affective game service."""

from .convnet import FeatureVector, LayerTap, extract_features
from .engine import EmotionEngine, EmotionWindow, FrameResult, process_frame, smooth
from .errors import FacemoodError
from .facedetect import Cascade, DetectParams, FaceBox, detect, parse_cascade
from .image import ImagePlane, load_image
from .svm import (
    EMOTIONS,
    MulticlassModel,
    Strategy,
    SvmConfig,
    TrainingSet,
    predict,
    train_multiclass,
)
from .tensorio import Tensor, WeightBundle, load_bundle, save_bundle

__version__ = "0.1.0"

__all__ = [
    "Cascade",
    "DetectParams",
    "EMOTIONS",
    "EmotionEngine",
    "EmotionWindow",
    "FaceBox",
    "FacemoodError",
    "FeatureVector",
    "FrameResult",
    "ImagePlane",
    "LayerTap",
    "MulticlassModel",
    "Strategy",
    "SvmConfig",
    "Tensor",
    "TrainingSet",
    "WeightBundle",
    "detect",
    "extract_features",
    "load_bundle",
    "load_image",
    "parse_cascade",
    "predict",
    "process_frame",
    "save_bundle",
    "smooth",
    "train_multiclass",
    "__version__",
]
