"""Domain types, the binary wire format, and stratified subsampling.

The wire format is a fixed little-endian layout chosen for bit-exact
cross-language interchange:

    magic  "MZE1"        4 bytes
    version u32          currently 1
    kind    u8           0=features, 1=gradients, 2=probabilities, 3=kernel
    n       u64          sample count (kernel files: matrix size, n == d)
    d       u64          vector dimension
    num_classes u32
    vectors n*d float32  row-major
    labels  n u32

Files are strict: short files raise TruncatedFile with the failing byte
offset, trailing bytes raise InvariantViolation.
"""

from __future__ import annotations

import enum
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    InvariantViolation,
    IoError,
    ManifestError,
    TruncatedFile,
    VersionMismatch,
)
from .rng import SplitMix64

MAGIC = b"MZE1"
WIRE_VERSION = 1
_HEADER = struct.Struct("<4sIBQQI")

PROB_ROW_SUM_TOL = 1e-4


class Kind(enum.IntEnum):
    FEATURES = 0
    GRADIENTS = 1
    PROBABILITIES = 2


@dataclass(frozen=True)
class EmbeddingSet:
    """n per-sample vectors (features, gradients, or source-model
    probabilities) with integer class labels. Immutable once built."""

    kind: Kind
    vectors: np.ndarray  # (n, d) float32
    labels: np.ndarray   # (n,) uint32
    num_classes: int

    def __post_init__(self):
        vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        labels = np.ascontiguousarray(self.labels, dtype=np.uint32)
        if vectors.ndim != 2:
            raise InvariantViolation("vectors must be a 2-d array")
        if labels.ndim != 1 or labels.shape[0] != vectors.shape[0]:
            raise InvariantViolation("labels must be one per sample")
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "num_classes", int(self.num_classes))
        self._validate()
        vectors.setflags(write=False)
        labels.setflags(write=False)

    def _validate(self):
        n, d = self.vectors.shape
        if n < 1:
            raise InvariantViolation("need at least one sample")
        if d < 1:
            raise InvariantViolation("need at least one dimension")
        if self.num_classes < 1:
            raise InvariantViolation("num_classes must be >= 1")
        bad = np.flatnonzero(self.labels >= self.num_classes)
        if bad.size:
            raise InvariantViolation(
                f"label {int(self.labels[bad[0]])} >= num_classes {self.num_classes}",
                row=int(bad[0]),
            )
        finite = np.isfinite(self.vectors).all(axis=1)
        if not finite.all():
            row = int(np.flatnonzero(~finite)[0])
            raise InvariantViolation("non-finite vector entry", row=row)
        if self.kind == Kind.PROBABILITIES:
            neg = (self.vectors < 0.0).any(axis=1)
            if neg.any():
                raise InvariantViolation("negative probability entry",
                                         row=int(np.flatnonzero(neg)[0]))
            sums = self.vectors.astype(np.float64).sum(axis=1)
            off = np.abs(sums - 1.0) > PROB_ROW_SUM_TOL
            if off.any():
                row = int(np.flatnonzero(off)[0])
                raise InvariantViolation(
                    f"probability row sums to {sums[row]:.6f}, not 1", row=row)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def take(self, indices: np.ndarray) -> "EmbeddingSet":
        """New set restricted to `indices` (order preserved as given)."""
        return EmbeddingSet(self.kind, self.vectors[indices],
                            self.labels[indices], self.num_classes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingSet):
            return NotImplemented
        return (self.kind == other.kind
                and self.num_classes == other.num_classes
                and self.vectors.shape == other.vectors.shape
                and np.array_equal(self.vectors.view(np.uint32),
                                   other.vectors.view(np.uint32))
                and np.array_equal(self.labels, other.labels))


# --- wire format ----------------------------------------------------------------


def _read_exact(buf: bytes, offset: int, count: int, what: str) -> bytes:
    if offset + count > len(buf):
        raise TruncatedFile(f"file ends inside {what}", byte_offset=len(buf))
    return buf[offset:offset + count]


def read_header(buf: bytes) -> tuple[int, int, int, int]:
    """Parse and check the fixed header; returns (kind_byte, n, d, num_classes)."""
    raw = _read_exact(buf, 0, _HEADER.size, "header")
    magic, version, kind_byte, n, d, num_classes = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise BadMagic(f"expected magic {MAGIC!r}, found {magic!r}")
    if version != WIRE_VERSION:
        raise VersionMismatch(f"unsupported wire version {version}")
    return kind_byte, n, d, num_classes


def load_embeddings(path) -> EmbeddingSet:
    """Read and validate an EmbeddingSet from the wire format."""
    buf = Path(path).read_bytes()
    kind_byte, n, d, num_classes = read_header(buf)
    if kind_byte > Kind.PROBABILITIES:
        raise InvariantViolation(f"kind byte {kind_byte} is not an embedding kind")
    offset = _HEADER.size
    vec_bytes = _read_exact(buf, offset, 4 * n * d, "vector payload")
    offset += 4 * n * d
    lab_bytes = _read_exact(buf, offset, 4 * n, "label payload")
    offset += 4 * n
    if offset != len(buf):
        raise InvariantViolation(f"{len(buf) - offset} trailing bytes after payload")
    vectors = np.frombuffer(vec_bytes, dtype="<f4").reshape(n, d)
    labels = np.frombuffer(lab_bytes, dtype="<u4")
    return EmbeddingSet(Kind(kind_byte), vectors, labels, num_classes)


def save_embeddings(eset: EmbeddingSet, path) -> None:
    """Write the wire format; load_embeddings(save_embeddings(s)) == s bit-exactly."""
    try:
        with open(path, "wb") as fh:
            fh.write(serialize(int(eset.kind), eset.vectors, eset.labels,
                               eset.num_classes))
    except OSError as exc:
        raise IoError(str(exc)) from exc


def serialize(kind_byte: int, vectors: np.ndarray, labels: np.ndarray,
              num_classes: int) -> bytes:
    n, d = vectors.shape
    header = _HEADER.pack(MAGIC, WIRE_VERSION, kind_byte, n, d, num_classes)
    body = np.ascontiguousarray(vectors, dtype="<f4").tobytes()
    tail = np.ascontiguousarray(labels, dtype="<u4").tobytes()
    return header + body + tail


# --- stratified subsampling ---------------------------------------------------


def stratified_subsample_indices(labels: np.ndarray, num_classes: int,
                                 per_class_cap: int, seed: int) -> np.ndarray:
    """Indices retained by capping each class at `per_class_cap` samples.

    Classes are visited in ascending id order; within a class the retained
    samples are drawn uniformly without replacement (sample_prefix on the
    class's index list) and then kept in their original relative order.
    Deterministic for a fixed seed.
    """
    if per_class_cap < 1:
        raise ValueError("per_class_cap must be >= 1")
    rng = SplitMix64(seed)
    keep: list[int] = []
    for c in range(num_classes):
        members = np.flatnonzero(labels == c)
        if members.size <= per_class_cap:
            keep.extend(int(i) for i in members)
        else:
            chosen = rng.sample_prefix([int(i) for i in members], per_class_cap)
            keep.extend(sorted(chosen))
    return np.array(sorted(keep), dtype=np.int64)


def stratified_subsample(eset: EmbeddingSet, per_class_cap: int,
                         seed: int) -> EmbeddingSet:
    idx = stratified_subsample_indices(eset.labels, eset.num_classes,
                                       per_class_cap, seed)
    if idx.size == eset.n:
        return eset
    return eset.take(idx)


# --- zoo manifest ----------------------------------------------------------------


@dataclass(frozen=True)
class ModelEntry:
    name: str
    embedding_file: str | None = None
    gradient_file: str | None = None
    probs_file: str | None = None
    probe_file: str | None = None
    source_means_file: str | None = None
    finetune_accuracy: float | None = None


@dataclass(frozen=True)
class ZooManifest:
    """Declarative description of a model zoo: which score inputs exist per
    model, optional ground-truth fine-tuning accuracies, and the baseline
    model gains are measured against."""

    task_name: str
    baseline_model: str
    models: tuple[ModelEntry, ...]
    per_class_cap: int = 25
    seed: int = 0

    def __post_init__(self):
        names = [m.name for m in self.models]
        if len(set(names)) != len(names):
            raise ManifestError("model names must be unique")
        if self.baseline_model not in names:
            raise ManifestError(f"baseline model '{self.baseline_model}' not in zoo")
        if self.per_class_cap < 1:
            raise ManifestError("per_class_cap must be >= 1")

    def model(self, name: str) -> ModelEntry:
        for m in self.models:
            if m.name == name:
                return m
        raise KeyError(name)


_MODEL_KEYS = ("embedding_file", "gradient_file", "probs_file", "probe_file",
               "source_means_file")


def load_manifest(path) -> ZooManifest:
    """Parse a manifest JSON file. Relative file paths are resolved against
    the manifest's directory. Accuracies may be given as fractions (default)
    or percentages via accuracy_unit: "percent"; they are normalized to
    fractions in [0, 1] on load to rule out silent 100x errors."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise IoError(str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}") from exc

    unit = doc.get("accuracy_unit", "fraction")
    if unit not in ("fraction", "percent"):
        raise ManifestError(f"unknown accuracy_unit '{unit}'")
    scale = 0.01 if unit == "percent" else 1.0

    base = path.parent
    models = []
    for entry in doc.get("models", []):
        if "name" not in entry:
            raise ManifestError("model entry without a name")
        kwargs = {"name": entry["name"]}
        for key in _MODEL_KEYS:
            value = entry.get(key)
            kwargs[key] = str(base / value) if value else None
        acc = entry.get("finetune_accuracy")
        if acc is not None:
            acc = float(acc) * scale
            if not 0.0 <= acc <= 1.0:
                raise ManifestError(
                    f"accuracy {acc} for '{entry['name']}' outside [0, 1]; "
                    f"check accuracy_unit")
        kwargs["finetune_accuracy"] = acc
        models.append(ModelEntry(**kwargs))

    for key in ("task_name", "baseline_model"):
        if key not in doc:
            raise ManifestError(f"manifest missing '{key}'")
    return ZooManifest(
        task_name=doc["task_name"],
        baseline_model=doc["baseline_model"],
        models=tuple(models),
        per_class_cap=int(doc.get("per_class_cap", 25)),
        seed=int(doc.get("seed", 0)),
    )


def save_manifest(manifest: ZooManifest, path) -> None:
    """Write a manifest with file paths relative to the manifest directory."""
    path = Path(path)
    base = path.parent

    def rel(p: str | None) -> str | None:
        if p is None:
            return None
        try:
            return str(Path(p).relative_to(base))
        except ValueError:
            return str(p)

    models = []
    for m in manifest.models:
        entry = {"name": m.name}
        for key in _MODEL_KEYS:
            value = rel(getattr(m, key))
            if value is not None:
                entry[key] = value
        if m.finetune_accuracy is not None:
            entry["finetune_accuracy"] = m.finetune_accuracy
        models.append(entry)
    doc = {
        "task_name": manifest.task_name,
        "baseline_model": manifest.baseline_model,
        "per_class_cap": manifest.per_class_cap,
        "seed": manifest.seed,
        "accuracy_unit": "fraction",
        "models": models,
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# --- score entries ----------------------------------------------------------------

METHOD_NAMES = ("lfc", "lgc", "leep", "rsa", "domsim", "featmet", "random")


@dataclass(frozen=True)
class ScoreEntry:
    model: str
    method: str
    score: float

    def __post_init__(self):
        if self.method not in METHOD_NAMES:
            raise ValueError(f"unknown method '{self.method}'")
        if not np.isfinite(self.score):
            raise InvariantViolation(f"score for '{self.model}' is not finite")
