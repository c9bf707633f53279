"""Fingerprint dataset construction, source classifiers and evaluation."""
from .dataset import FingerprintDataset, FingerprintSample, NoiseConfig, build_dataset, stratified_split
from .features import FEATURE_NAMES, path_features
from .models import (
    FEED_FORWARD,
    NEAREST_CENTROID,
    AccuracyReport,
    ClassifierModel,
    SyntheticClassifier,
    confusion_report,
    evaluate,
    fit,
    make_synthetic,
    predict,
    train,
)

__all__ = [
    "AccuracyReport",
    "ClassifierModel",
    "FEATURE_NAMES",
    "FEED_FORWARD",
    "FingerprintDataset",
    "FingerprintSample",
    "NEAREST_CENTROID",
    "NoiseConfig",
    "SyntheticClassifier",
    "build_dataset",
    "confusion_report",
    "evaluate",
    "fit",
    "make_synthetic",
    "path_features",
    "predict",
    "stratified_split",
    "train",
]
