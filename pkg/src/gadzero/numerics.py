"""Dense linear algebra helpers and the finite-difference gradient contract.

All numerics in this package are 64-bit. Matrices are plain numpy arrays;
NaN/Inf are rejected at module boundaries via ``require_finite``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .autograd import ZERO_NORM_EPS, Tensor
from .errors import ProbeError, RankError, ShapeError


def require_finite(arr: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ShapeError(f"{name} contains non-finite entries")
    return arr


def truncated_svd(x: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-k right singular basis of x and the projection of x onto it.

    Returns ``(basis, projected)`` with ``basis`` of shape (d, k) holding the
    top-k right singular vectors as columns and ``projected = x @ basis``.
    The sign of each singular vector is fixed so that its largest-magnitude
    entry is positive, making the projection deterministic.
    """
    x = require_finite(x, "svd input")
    if x.ndim != 2:
        raise ShapeError("svd input must be a matrix")
    n, d = x.shape
    if not 1 <= k <= min(n, d):
        raise RankError(f"rank {k} outside [1, min({n}, {d})]")
    _, _, vt = np.linalg.svd(x, full_matrices=False)
    basis = vt[:k].T.copy()
    for j in range(k):
        col = basis[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            basis[:, j] = -col
    return basis, x @ basis


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """a.b / (|a||b|), or 0 if either norm is below the zero-norm threshold."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ShapeError(f"cosine length mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na < ZERO_NORM_EPS or nb < ZERO_NORM_EPS:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def softmax(logits: np.ndarray) -> np.ndarray:
    """Stable softmax of a vector (max-subtraction)."""
    logits = require_finite(logits, "softmax logits").ravel()
    e = np.exp(logits - logits.max())
    return e / e.sum()


@dataclass
class GradCheckReport:
    name: str
    max_rel_error: float
    passed: bool


def grad_check(loss_fn: Callable[[], Tensor], params: Mapping[str, Tensor],
               probe_count: int = 10, *, step: float = 1e-5, rel_tol: float = 1e-4,
               abs_tol: float = 1e-7, rng: np.random.Generator | None = None) -> list[GradCheckReport]:
    """Compare analytic gradients against central finite differences.

    ``loss_fn`` rebuilds the scalar loss from the current parameter values on
    every call. For each parameter, ``probe_count`` coordinates are sampled and
    perturbed by ±step; a probe passes if the relative error is below
    ``rel_tol``, falling back to an absolute tolerance near zero.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    loss = loss_fn()
    if not np.isfinite(loss.data):
        raise ProbeError("loss is non-finite at the evaluation point")
    loss.backward()
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for name, p in params.items()}

    reports = []
    for name, p in params.items():
        flat = p.data.reshape(-1)
        grad_flat = analytic[name].reshape(-1)
        n_probe = min(probe_count, flat.size)
        coords = rng.choice(flat.size, size=n_probe, replace=False)
        worst = 0.0
        for idx in coords:
            orig = flat[idx]
            flat[idx] = orig + step
            up = float(loss_fn().data)
            flat[idx] = orig - step
            down = float(loss_fn().data)
            flat[idx] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise ProbeError(f"non-finite loss while probing {name}[{idx}]")
            numeric = (up - down) / (2.0 * step)
            err = abs(grad_flat[idx] - numeric)
            if err >= abs_tol:
                worst = max(worst, err / max(abs(grad_flat[idx]), abs(numeric)))
        reports.append(GradCheckReport(name=name, max_rel_error=worst, passed=worst < rel_tol))
    return reports
