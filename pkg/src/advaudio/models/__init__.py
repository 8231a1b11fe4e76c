"""Miniature classifiers, training and checkpoints."""
from .checkpoint import load_checkpoint, model_from_bytes, model_to_bytes, save_checkpoint
from .classifier import AudioClassifier, Prediction, QueryOnly, as_batch, build_model, predict
from .losses import ClassScore, Constant, CrossEntropy, Margin
from .networks import ARCHITECTURES
from .training import TrainingReport, train

__all__ = [
    "ARCHITECTURES", "AudioClassifier", "Prediction", "QueryOnly", "as_batch", "build_model", "predict",
    "train", "TrainingReport", "CrossEntropy", "ClassScore", "Margin", "Constant",
    "save_checkpoint", "load_checkpoint", "model_to_bytes", "model_from_bytes",
]
