"""Linearized fine-tuning dynamics.

For a model linearized around its pre-trained weights, full-batch training
on the squared loss makes the residual decay along the kernel's eigenmodes,
so the loss trajectory has the closed form

    L(t) = sum_k exp(-2 * eta * lambda_k * t) * (r . v_k)^2

with r the initial residual (labels minus initial outputs; defaults to the
labels when outputs are unavailable). The module provides that closed form,
the first-order training-speed estimate r' K r, a spectrum-based
generalization score, the Jensen relation between the two quadratic forms,
and an explicit gradient-descent oracle used to validate the closed form.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    AllEigenvaluesFloored,
    Divergence,
    InvariantViolation,
    NonConvergence,
    ZeroRangeResidual,
)
from .kernels import KernelMatrix

DEFAULT_EIG_FLOOR_RATIO = 1e-8


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues in descending order; eigenvectors as orthonormal columns.

    Signs are fixed so each eigenvector's largest-magnitude entry is
    positive, making the decomposition deterministic."""

    eigenvalues: np.ndarray   # (n,), descending
    eigenvectors: np.ndarray  # (n, n), column k pairs with eigenvalues[k]

    def validate(self, kernel: np.ndarray) -> None:
        lam, v = self.eigenvalues, self.eigenvectors
        if (np.diff(lam) > 0).any():
            raise InvariantViolation("eigenvalues not sorted descending")
        n = lam.shape[0]
        if np.abs(v.T @ v - np.eye(n)).max() > 1e-9:
            raise InvariantViolation("eigenvectors not orthonormal within 1e-9")
        recon = (v * lam) @ v.T
        scale = float(np.linalg.norm(kernel)) or 1.0
        if float(np.linalg.norm(recon - kernel)) > 1e-8 * scale:
            raise InvariantViolation("eigendecomposition does not reconstruct kernel")


def sym_eig(kernel: KernelMatrix) -> EigenDecomposition:
    """Eigendecomposition of a symmetric kernel (LAPACK symmetric solver,
    which iterates a bounded number of implicit QL/QR steps per eigenvalue
    and reports failure rather than spinning)."""
    k = kernel.entries
    scale = float(np.abs(k).max()) or 1.0
    if float(np.abs(k - k.T).max()) > 1e-9 * scale:
        raise InvariantViolation("sym_eig requires a symmetric matrix")
    try:
        lam, v = np.linalg.eigh(k)
    except np.linalg.LinAlgError as exc:
        raise NonConvergence(str(exc)) from exc
    order = np.argsort(lam, kind="stable")[::-1]
    lam = lam[order]
    v = v[:, order]
    # sign convention: largest-magnitude entry of each eigenvector positive
    anchor = np.abs(v).argmax(axis=0)
    signs = np.sign(v[anchor, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return EigenDecomposition(lam, v * signs)


@dataclass(frozen=True)
class DynamicsTrace:
    """Loss values along a training trajectory.

    `eta` is the learning rate under which `times` are expressed; traces from
    the gradient-descent oracle are normalized to eta = 1 (see gd_oracle).
    """

    times: np.ndarray
    losses: np.ndarray
    eta: float
    residual_norm: float  # squared norm of the initial residual

    def validate(self, require_monotone: bool = False) -> None:
        if abs(float(self.losses[0]) - self.residual_norm) > 1e-9 * max(1.0, self.residual_norm):
            raise InvariantViolation("initial loss does not equal |residual|^2")
        if require_monotone and (np.diff(self.losses) > 1e-9 * self.residual_norm).any():
            raise InvariantViolation("losses increase on a PSD kernel")


def loss_value(eig: EigenDecomposition, residual: np.ndarray, eta: float,
               t: float) -> float:
    """Closed-form loss at one (possibly negative, for derivative probes)
    time point."""
    coeffs = eig.eigenvectors.T @ np.asarray(residual, dtype=np.float64)
    return float(np.exp(-2.0 * eta * eig.eigenvalues * t) @ (coeffs * coeffs))


def loss_trajectory(kernel: KernelMatrix, residual: np.ndarray, eta: float,
                    times: np.ndarray) -> DynamicsTrace:
    """Closed-form loss trajectory at the requested time points."""
    if eta <= 0.0:
        raise ValueError("eta must be positive")
    times = np.asarray(times, dtype=np.float64)
    if times.shape[0] < 1 or times[0] != 0.0 or (np.diff(times) < 0).any():
        raise ValueError("times must be sorted ascending and start at 0")
    residual = np.asarray(residual, dtype=np.float64)
    eig = sym_eig(kernel)
    coeffs = eig.eigenvectors.T @ residual
    decay = np.exp(-2.0 * eta * np.outer(times, eig.eigenvalues))
    losses = decay @ (coeffs * coeffs)
    return DynamicsTrace(times, losses, eta, float(residual @ residual))


def training_speed(kernel: KernelMatrix, residual: np.ndarray) -> float:
    """First-order training-speed estimate: the quadratic form r' K r.

    Reported bare (no learning-rate factor): rankings by this quantity do
    not depend on eta."""
    residual = np.asarray(residual, dtype=np.float64)
    if residual.shape[0] != kernel.n:
        raise ValueError("residual size does not match kernel")
    return float(residual @ kernel.entries @ residual)


def _surviving_modes(eig: EigenDecomposition, eig_floor: float | None
                     ) -> np.ndarray:
    lam_max = float(eig.eigenvalues[0])
    floor = eig_floor if eig_floor is not None else DEFAULT_EIG_FLOOR_RATIO * lam_max
    if floor <= 0.0:
        raise AllEigenvaluesFloored("kernel has no positive spectrum")
    keep = eig.eigenvalues >= floor
    if not keep.any():
        raise AllEigenvaluesFloored(f"no eigenvalue reaches the floor {floor:.3e}")
    return keep


def generalization_score(kernel: KernelMatrix, labels: np.ndarray,
                         eig_floor: float | None = None) -> float:
    """Spectrum-weighted label energy (1/n) sum_k (y . v_k)^2 / lambda_k over
    the kernel's numerical range; lower is better. Eigenvalues below the
    floor (default 1e-8 * lambda_max) are treated as nullspace and dropped."""
    y = np.asarray(labels, dtype=np.float64)
    eig = sym_eig(kernel)
    keep = _surviving_modes(eig, eig_floor)
    coeffs = eig.eigenvectors[:, keep].T @ y
    return float((coeffs * coeffs / eig.eigenvalues[keep]).sum() / kernel.n)


def jensen_gap(kernel: KernelMatrix, residual: np.ndarray,
               eig_floor: float | None = None) -> tuple[float, float]:
    """Both sides of the speed/generalization relation, computed on the
    residual projected onto the kernel's numerical range:

        lhs = (r' K r / |r|^2)^-1   <=   rhs = r' K^+ r / |r|^2

    with equality for a constant spectrum.
    """
    r = np.asarray(residual, dtype=np.float64)
    eig = sym_eig(kernel)
    keep = _surviving_modes(eig, eig_floor)
    coeffs = eig.eigenvectors[:, keep].T @ r
    energy = float(coeffs @ coeffs)
    if energy < 1e-30:
        raise ZeroRangeResidual("residual has no component in the kernel range")
    lam = eig.eigenvalues[keep]
    lhs = energy / float((lam * coeffs) @ coeffs)
    rhs = float((coeffs / lam) @ coeffs) / energy
    return lhs, rhs


def gd_oracle(jacobian: np.ndarray, f0: np.ndarray, labels: np.ndarray,
              eta: float, steps: int, record_every: int = 1) -> DynamicsTrace:
    """Explicit full-batch gradient descent on the linearized model,
    minimizing sum_i (y_i - f0_i - J_i . u)^2 over the weight offset u.

    Ground truth for the closed form: step s corresponds to continuous time
    t = 2 * eta * s (the factor 2 from differentiating the squared loss is
    absorbed into the time axis), and the returned trace carries eta = 1,
    i.e. it matches loss_trajectory(kernel, residual, 1.0, trace.times) in
    the small-step limit.
    """
    jac = np.asarray(jacobian, dtype=np.float64)
    f0 = np.asarray(f0, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if record_every < 1:
        raise ValueError("record_every must be >= 1")

    lam_max = float(np.linalg.eigvalsh(jac @ jac.T)[-1])
    if lam_max > 0 and eta >= 1.0 / lam_max:
        warnings.warn(
            f"step size {eta} >= 1/lambda_max = {1.0 / lam_max:.3e}; "
            "discrete descent may diverge", RuntimeWarning)

    u = np.zeros(jac.shape[1])
    r = y - f0
    loss0 = float(r @ r)
    recorded_steps = [0]
    losses = [loss0]
    for s in range(1, steps + 1):
        u = u + eta * 2.0 * (jac.T @ r)
        r = y - f0 - jac @ u
        if s % record_every == 0 or s == steps:
            loss = float(r @ r)
            if loss > 1e6 * loss0:
                raise Divergence(f"loss {loss:.3e} exceeds 1e6 x initial at step {s}")
            recorded_steps.append(s)
            losses.append(loss)
    times = 2.0 * eta * np.asarray(recorded_steps, dtype=np.float64)
    return DynamicsTrace(times, np.asarray(losses), 1.0, loss0)


def signed_labels(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """Binary class indices to +/-1 targets (class 0 -> +1, class 1 -> -1)."""
    if num_classes != 2:
        raise ValueError("signed labels require a binary task")
    return np.where(np.asarray(labels) == 0, 1.0, -1.0)
