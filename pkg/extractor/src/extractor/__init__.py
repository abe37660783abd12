"""Companion extractor: labeled image folders in, wire-format embedding
files out."""

from .jobs import (
    ExtractionJob,
    extract_features,
    extract_gradients,
    extract_probs,
    load_folder,
    train_probe,
)
from .models import SUPPORTED, build_adapter

__version__ = "0.1.0"

__all__ = [
    "ExtractionJob",
    "SUPPORTED",
    "build_adapter",
    "extract_features",
    "extract_gradients",
    "extract_probs",
    "load_folder",
    "train_probe",
]
