"""Gram matrices, the label-agreement kernel, entrywise Pearson correlation,
and the seeded Gaussian random projection.

Numerical contract: inputs are float32, every accumulation is float64, and
block orders are fixed constants, so repeated runs produce bit-identical
matrices.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import (
    EmbeddingSet,
    Kind,
    _HEADER,
    _read_exact,
    read_header,
    serialize,
)
from .errors import DegenerateMatrix, InvariantViolation, IoError, KindMismatch
from .rng import SplitMix64

_GRAM_BLOCK = 256          # rows per block in the symmetric product
_PROJ_COLUMN_BLOCK = 512   # input columns per projection chunk
DEGENERATE_NORM_FLOOR = 1e-30

KERNEL_WIRE_KIND = 3


class KernelKind(enum.Enum):
    GRADIENT = "gradient"
    FEATURE = "feature"
    LABEL = "label"
    # dissimilarity matrices (1 - correlation) are symmetric with a zero
    # diagonal but not PSD, so they get their own kind
    DISSIMILARITY = "dissimilarity"


@dataclass(frozen=True)
class KernelMatrix:
    """Symmetric n x n kernel; float64 entries, exact mirror symmetry."""

    entries: np.ndarray
    kind: KernelKind

    def __post_init__(self):
        entries = np.ascontiguousarray(self.entries, dtype=np.float64)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise InvariantViolation("kernel must be square")
        object.__setattr__(self, "entries", entries)
        entries.setflags(write=False)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def validate(self, psd_probes: int = 8, probe_seed: int = 0) -> None:
        """Check the kind-specific invariants; raises InvariantViolation.

        Symmetry must hold within 1e-9 relative; gradient/feature kernels
        must be PSD up to -1e-8 * |v|^2 * ||K||_F on random probes; label
        kernels must be exactly +/-1 with a +1 diagonal.
        """
        k = self.entries
        scale = float(np.abs(k).max()) or 1.0
        if float(np.abs(k - k.T).max()) > 1e-9 * scale:
            raise InvariantViolation("kernel not symmetric within 1e-9 relative")
        if self.kind == KernelKind.LABEL:
            if not np.all(np.isin(k, (-1.0, 1.0))):
                raise InvariantViolation("label kernel entries must be +1 or -1")
            if not np.all(np.diag(k) == 1.0):
                raise InvariantViolation("label kernel diagonal must be +1")
            return
        if self.kind == KernelKind.DISSIMILARITY:
            if np.abs(np.diag(k)).max() != 0.0:
                raise InvariantViolation("dissimilarity diagonal must be 0")
            if k.min() < -1e-9 or k.max() > 2.0 + 1e-9:
                raise InvariantViolation("dissimilarity entries must lie in [0, 2]")
            return
        norm = float(np.linalg.norm(k))
        rng = SplitMix64(probe_seed)
        for _ in range(psd_probes):
            v = rng.gaussians(self.n)
            quad = float(v @ k @ v)
            if quad < -1e-8 * float(v @ v) * norm:
                raise InvariantViolation(
                    f"kernel fails PSD probe: v'Kv = {quad:.3e}")


def label_kernel(labels: np.ndarray, n: int | None = None) -> KernelMatrix:
    """Label-agreement kernel: +1 where two samples share a class, -1 where
    they differ. Invariant under any relabeling of class ids."""
    labels = np.asarray(labels)
    if n is not None and n != labels.shape[0]:
        raise ValueError("n does not match the number of labels")
    if labels.shape[0] < 1:
        raise ValueError("need at least one label")
    same = labels[:, None] == labels[None, :]
    return KernelMatrix(np.where(same, 1.0, -1.0), KernelKind.LABEL)


def _symmetric_product(x: np.ndarray) -> np.ndarray:
    """x @ x.T in float64, upper-triangle blocks computed in a fixed order and
    mirrored, so the result is exactly symmetric and bit-reproducible."""
    x64 = x.astype(np.float64)
    n = x64.shape[0]
    out = np.empty((n, n), dtype=np.float64)
    starts = range(0, n, _GRAM_BLOCK)
    for i0 in starts:
        i1 = min(i0 + _GRAM_BLOCK, n)
        for j0 in range(i0, n, _GRAM_BLOCK):
            j1 = min(j0 + _GRAM_BLOCK, n)
            block = x64[i0:i1] @ x64[j0:j1].T
            out[i0:i1, j0:j1] = block
            if j0 > i0:
                out[j0:j1, i0:i1] = block.T
    return out


def gram_kernel(eset: EmbeddingSet) -> KernelMatrix:
    """Gram matrix of the per-sample vectors: entries[i, j] = <v_i, v_j>."""
    if eset.kind == Kind.PROBABILITIES:
        raise KindMismatch("gram kernel is defined for features or gradients")
    kind = KernelKind.GRADIENT if eset.kind == Kind.GRADIENTS else KernelKind.FEATURE
    return KernelMatrix(_symmetric_product(eset.vectors), kind)


def random_projection(eset: EmbeddingSet, k: int, seed: int) -> EmbeddingSet:
    """Project each vector to k dimensions with a seeded Gaussian matrix.

    R has shape (k, d) with i.i.d. standard normal entries generated in
    column-major order from the splitmix64 stream, so the matrix is a pure
    function of (seed, d, k). The product is accumulated over fixed
    512-column blocks and scaled by 1/sqrt(k) once at the end; output rows
    are R v_i. A no-op pass-through when d <= k.
    """
    if k < 1:
        raise ValueError("target dimension must be >= 1")
    if eset.kind == Kind.PROBABILITIES:
        raise KindMismatch("projection is defined for features or gradients")
    d = eset.d
    if d <= k:
        return eset
    rng = SplitMix64(seed)
    x64 = eset.vectors.astype(np.float64)
    out = np.zeros((eset.n, k), dtype=np.float64)
    for j0 in range(0, d, _PROJ_COLUMN_BLOCK):
        j1 = min(j0 + _PROJ_COLUMN_BLOCK, d)
        # columns j0..j1 of R occupy gaussian indices [j0*k, j1*k)
        rt_block = rng.gaussians_at(j0 * k, (j1 - j0) * k).reshape(j1 - j0, k)
        out += x64[:, j0:j1] @ rt_block
    out *= 1.0 / math.sqrt(k)
    return EmbeddingSet(eset.kind, out.astype(np.float32), eset.labels,
                        eset.num_classes)


def matrix_pearson(a: KernelMatrix, b: KernelMatrix,
                   include_diagonal: bool = True) -> float:
    """Pearson correlation between the entries of two kernels.

    Both matrices are centered by their mean entry; the result is the cosine
    of the centered, flattened matrices, in [-1, 1]. The diagonal is included
    by default; exclusion is provided for ablation only.
    """
    if a.n != b.n:
        raise ValueError("kernel sizes differ")
    av = a.entries.ravel()
    bv = b.entries.ravel()
    if not include_diagonal:
        mask = ~np.eye(a.n, dtype=bool).ravel()
        av = av[mask]
        bv = bv[mask]
    ac = av - av.mean()
    bc = bv - bv.mean()
    na_sq = float(ac @ ac)
    nb_sq = float(bc @ bc)
    if na_sq < DEGENERATE_NORM_FLOOR ** 2 or nb_sq < DEGENERATE_NORM_FLOOR ** 2:
        raise DegenerateMatrix(
            "a kernel is constant; entrywise correlation is undefined")
    # one sqrt of the product keeps self-correlation exactly at 1
    return float(ac @ bc) / math.sqrt(na_sq * nb_sq)


# --- kernel serialization (wire kind 3) -------------------------------------------


def save_kernel(kernel: KernelMatrix, path) -> None:
    """Write a kernel in the wire format (kind byte 3, n == d, zero labels).

    Entries are stored as float32, so round-tripping a float64 kernel is
    lossy; embedding files, not kernel files, carry the bit-exact contract.
    """
    n = kernel.n
    try:
        with open(path, "wb") as fh:
            fh.write(serialize(KERNEL_WIRE_KIND,
                               kernel.entries.astype(np.float32),
                               np.zeros(n, dtype=np.uint32), 1))
    except OSError as exc:
        raise IoError(str(exc)) from exc


def load_kernel(path, kind: KernelKind = KernelKind.FEATURE) -> KernelMatrix:
    buf = Path(path).read_bytes()
    kind_byte, n, d, _ = read_header(buf)
    if kind_byte != KERNEL_WIRE_KIND:
        raise KindMismatch(f"kind byte {kind_byte} is not a kernel file")
    if n != d:
        raise InvariantViolation("kernel file must have n == d")
    offset = _HEADER.size
    vec = _read_exact(buf, offset, 4 * n * d, "kernel payload")
    offset += 4 * n * d
    _read_exact(buf, offset, 4 * n, "label payload")
    offset += 4 * n
    if offset != len(buf):
        raise InvariantViolation(f"{len(buf) - offset} trailing bytes after payload")
    entries = np.frombuffer(vec, dtype="<f4").reshape(n, n).astype(np.float64)
    return KernelMatrix(entries, kind)
