"""Writer for the engine's binary interchange format.

Layout (little-endian): magic "MZE1", u32 version=1, u8 kind
(0=features, 1=gradients, 2=probabilities), u64 n, u64 d, u32 num_classes,
then n*d float32 row-major vectors and n u32 labels. Kept independent of
the engine package on purpose: the bytes are the contract.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"MZE1"
VERSION = 1
_HEADER = struct.Struct("<4sIBQQI")

KIND_FEATURES = 0
KIND_GRADIENTS = 1
KIND_PROBABILITIES = 2


def write_embeddings(path, kind: int, vectors: np.ndarray, labels: np.ndarray,
                     num_classes: int) -> None:
    vectors = np.ascontiguousarray(vectors, dtype="<f4")
    labels = np.ascontiguousarray(labels, dtype="<u4")
    if vectors.ndim != 2 or labels.shape != (vectors.shape[0],):
        raise ValueError("vectors must be (n, d) with one label per row")
    n, d = vectors.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, kind, n, d, num_classes))
        fh.write(vectors.tobytes())
        fh.write(labels.tobytes())
