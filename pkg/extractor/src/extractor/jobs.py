"""Extraction jobs: images in class subdirectories go in, wire-format
files plus sidecar metadata come out.

Preprocessing is pinned (resize 256, center crop 224, the standard
ImageNet channel statistics) and recorded in every sidecar so files from
mismatched conventions are never silently compared. The scalar
differentiated for per-sample gradients is a stated choice (sum of logits
by default, max logit behind a flag), likewise recorded.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .models import ModelAdapter, TinyCnn, build_adapter
from .wire import KIND_FEATURES, KIND_GRADIENTS, KIND_PROBABILITIES, \
    write_embeddings

log = logging.getLogger("extractor")

RESIZE = 256
CROP = 224
NORM_MEAN = (0.485, 0.456, 0.406)
NORM_STD = (0.229, 0.224, 0.225)

GRAD_SCALARS = ("sum_logits", "max_logit")


@dataclass
class ExtractionJob:
    model_name: str
    data_dir: str
    out_prefix: str
    weights_path: str | None = None
    source_classes: int = 5         # head width when no checkpoint fixes it
    batch_size: int = 16
    device: str = "cpu"
    seed: int = 0
    grad_scalar: str = "sum_logits"
    probe_epochs: int = 2
    probe_lr: float = 1e-3

    def __post_init__(self):
        if self.grad_scalar not in GRAD_SCALARS:
            raise ValueError(f"grad_scalar must be one of {GRAD_SCALARS}")


@dataclass
class LoadedFolder:
    images: torch.Tensor          # (n, 3, CROP, CROP), preprocessed
    labels: np.ndarray            # (n,) uint32
    class_names: list[str]
    skipped: list[str] = field(default_factory=list)


def _preprocess(img: Image.Image) -> torch.Tensor:
    img = img.convert("RGB")
    w, h = img.size
    scale = RESIZE / min(w, h)
    img = img.resize((max(1, round(w * scale)), max(1, round(h * scale))),
                     Image.BILINEAR)
    w, h = img.size
    left = (w - CROP) // 2
    top = (h - CROP) // 2
    img = img.crop((left, top, left + CROP, top + CROP))
    x = torch.from_numpy(np.asarray(img, dtype=np.float32) / 255.0)
    x = x.permute(2, 0, 1)
    mean = torch.tensor(NORM_MEAN).view(3, 1, 1)
    std = torch.tensor(NORM_STD).view(3, 1, 1)
    return (x - mean) / std


def load_folder(data_dir: str) -> LoadedFolder:
    """Images from class subdirectories, labels by sorted directory name.

    Unreadable images are skipped with a warning and excluded from n.
    """
    root = Path(data_dir)
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir()) \
        if root.is_dir() else []
    if not class_dirs:
        raise FileNotFoundError(f"no class subdirectories under {data_dir}")
    tensors, labels, skipped = [], [], []
    for label, class_dir in enumerate(class_dirs):
        for path in sorted(class_dir.iterdir()):
            if not path.is_file():
                continue
            try:
                with Image.open(path) as img:
                    tensors.append(_preprocess(img))
            except Exception as exc:
                log.warning("skipping unreadable image %s: %s", path, exc)
                skipped.append(str(path))
                continue
            labels.append(label)
    if not tensors:
        raise FileNotFoundError(f"no readable images under {data_dir}")
    return LoadedFolder(torch.stack(tensors),
                        np.asarray(labels, dtype=np.uint32),
                        [p.name for p in class_dirs], skipped)


def _write_with_sidecar(path: Path, kind: int, vectors: np.ndarray,
                        folder: LoadedFolder, job: ExtractionJob,
                        extra: dict | None = None) -> Path:
    num_classes = len(folder.class_names)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_embeddings(path, kind, vectors, folder.labels, num_classes)
    meta = {
        "model": job.model_name,
        "weights": job.weights_path,
        "seed": job.seed,
        "n": int(vectors.shape[0]),
        "d": int(vectors.shape[1]),
        "num_classes": num_classes,
        "class_names": folder.class_names,
        "skipped_images": folder.skipped,
        "preprocessing": {"resize": RESIZE, "center_crop": CROP,
                          "mean": list(NORM_MEAN), "std": list(NORM_STD)},
    }
    meta.update(extra or {})
    Path(f"{path}.meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def _batched(n: int, size: int):
    for start in range(0, n, size):
        yield slice(start, min(start + size, n))


def extract_features(job: ExtractionJob, folder: LoadedFolder | None = None,
                     adapter: ModelAdapter | None = None) -> Path:
    """Penultimate-layer activations, one row per image."""
    folder = folder or load_folder(job.data_dir)
    adapter = adapter or build_adapter(job.model_name, job.source_classes,
                                       job.weights_path, job.seed, job.device)
    chunks = []
    with torch.no_grad():
        for sl in _batched(folder.images.shape[0], job.batch_size):
            x = folder.images[sl].to(job.device)
            chunks.append(adapter.penultimate(x).cpu().numpy())
    vectors = np.concatenate(chunks).astype(np.float32)
    out = Path(f"{job.out_prefix}_features.mze")
    return _write_with_sidecar(out, KIND_FEATURES, vectors, folder, job,
                               {"layer": "penultimate"})


def extract_gradients(job: ExtractionJob, folder: LoadedFolder | None = None,
                      adapter: ModelAdapter | None = None) -> Path:
    """Per-sample gradient of the chosen logit scalar with respect to the
    last conv layer's weights, flattened."""
    folder = folder or load_folder(job.data_dir)
    adapter = adapter or build_adapter(job.model_name, job.source_classes,
                                       job.weights_path, job.seed, job.device)
    n = folder.images.shape[0]
    vectors = np.empty((n, adapter.gradient_dim), dtype=np.float32)
    for i in range(n):
        adapter.model.zero_grad(set_to_none=True)
        logits = adapter.logits(folder.images[i:i + 1].to(job.device))
        scalar = logits.sum() if job.grad_scalar == "sum_logits" \
            else logits.max()
        scalar.backward()
        grad = adapter.last_conv.weight.grad
        vectors[i] = grad.detach().cpu().numpy().ravel()
    adapter.model.zero_grad(set_to_none=True)
    out = Path(f"{job.out_prefix}_gradients.mze")
    return _write_with_sidecar(out, KIND_GRADIENTS, vectors, folder, job,
                               {"layer": "last_conv.weight",
                                "grad_scalar": job.grad_scalar})


def extract_probs(job: ExtractionJob, folder: LoadedFolder | None = None,
                  adapter: ModelAdapter | None = None) -> Path:
    """Softmax outputs of the classification head; rows sum to 1."""
    folder = folder or load_folder(job.data_dir)
    adapter = adapter or build_adapter(job.model_name, job.source_classes,
                                       job.weights_path, job.seed, job.device)
    chunks = []
    with torch.no_grad():
        for sl in _batched(folder.images.shape[0], job.batch_size):
            x = folder.images[sl].to(job.device)
            chunks.append(torch.softmax(adapter.logits(x), dim=1).cpu().numpy())
    vectors = np.concatenate(chunks).astype(np.float32)
    out = Path(f"{job.out_prefix}_probs.mze")
    return _write_with_sidecar(out, KIND_PROBABILITIES, vectors, folder, job,
                               {"layer": "softmax_head"})


def train_probe(job: ExtractionJob, folder: LoadedFolder | None = None) -> Path:
    """Train the small probe classifier on the target images and dump its
    penultimate features."""
    folder = folder or load_folder(job.data_dir)
    torch.manual_seed(job.seed)
    n_threads = torch.get_num_threads()
    torch.set_num_threads(1)  # fixed reduction order for seeded determinism
    try:
        probe = TinyCnn(num_classes=len(folder.class_names)).to(job.device)
        optimizer = torch.optim.Adam(probe.parameters(), lr=job.probe_lr)
        loss_fn = torch.nn.CrossEntropyLoss()
        targets = torch.from_numpy(folder.labels.astype(np.int64))
        probe.train()
        for _ in range(job.probe_epochs):
            for sl in _batched(folder.images.shape[0], job.batch_size):
                optimizer.zero_grad()
                logits = probe(folder.images[sl].to(job.device))
                loss = loss_fn(logits, targets[sl].to(job.device))
                loss.backward()
                optimizer.step()
        probe.eval()
        with torch.no_grad():
            vectors = probe.features(folder.images.to(job.device)) \
                .cpu().numpy().astype(np.float32)
    finally:
        torch.set_num_threads(n_threads)
    out = Path(f"{job.out_prefix}_probe.mze")
    return _write_with_sidecar(out, KIND_FEATURES, vectors, folder, job,
                               {"layer": "probe_penultimate",
                                "probe_epochs": job.probe_epochs,
                                "probe_lr": job.probe_lr})
