"""Pure numeric reference kernels: attention transfer and noise-prediction losses.

No training, no autodiff; these exist so the math has a verifiable,
deterministic implementation with testable invariants.
"""

from __future__ import annotations

import numpy as np


def _as_matrix(name: str, values: np.ndarray) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] == 0:
        raise ValueError(f"{name} must be a (rows, cols) matrix, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction for numerical stability."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def scaled_dot_product_attention(
    q: np.ndarray, k: np.ndarray, v: np.ndarray
) -> np.ndarray:
    """softmax(q @ k.T / sqrt(d)) @ v, attending queries over reference tokens."""
    q = _as_matrix("q", q)
    k = _as_matrix("k", k)
    v = _as_matrix("v", v)
    if q.shape[1] != k.shape[1]:
        raise ValueError(f"feature dims differ: q has {q.shape[1]}, k has {k.shape[1]}")
    if k.shape[0] != v.shape[0]:
        raise ValueError(f"k rows {k.shape[0]} != v rows {v.shape[0]}")
    logits = q @ k.T / np.sqrt(q.shape[1])
    return softmax_rows(logits) @ v


def inject_attention(latent: np.ndarray, attention: np.ndarray) -> np.ndarray:
    """Residual injection: elementwise sum of a latent and an attention output."""
    latent = np.asarray(latent, dtype=np.float64)
    attention = np.asarray(attention, dtype=np.float64)
    if latent.shape != attention.shape:
        raise ValueError(
            f"shape mismatch: latent {latent.shape} vs attention {attention.shape}"
        )
    return latent + attention


def _mse(a: np.ndarray, b: np.ndarray, reduction: str) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    sq = (a - b) ** 2
    if reduction == "mean":
        return float(sq.mean())
    if reduction == "sum":
        return float(sq.sum())
    raise ValueError(f"unknown reduction {reduction!r}")


def dual_noise_loss(
    eps: np.ndarray,
    eps_mr: np.ndarray,
    eps_albedo: np.ndarray,
    *,
    reduction: str = "mean",
) -> float:
    """Squared error of both channel predictions against the shared noise."""
    return _mse(eps, eps_mr, reduction) + _mse(eps, eps_albedo, reduction)


def albedo_noise_loss(
    eps: np.ndarray,
    eps_albedo: np.ndarray,
    alpha: float = 2.0,
    *,
    reduction: str = "mean",
) -> float:
    """Balanced single-channel loss: alpha * squared error of the albedo noise."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return alpha * _mse(eps, eps_albedo, reduction)


def selftest(seed: int = 0) -> list[tuple[str, bool, str]]:
    """Run the kernel invariant suite; returns (name, passed, detail) rows."""
    rng = np.random.default_rng(seed)
    results: list[tuple[str, bool, str]] = []

    def check(name: str, passed: bool, detail: str = "") -> None:
        results.append((name, bool(passed), detail))

    q = rng.normal(size=(8, 16))
    k = rng.normal(size=(12, 16))
    v = rng.normal(size=(12, 5))

    weights = softmax_rows(q @ k.T / np.sqrt(16))
    row_err = np.abs(weights.sum(axis=1) - 1.0).max()
    check("softmax rows sum to 1 within 1e-9", row_err <= 1e-9, f"max err {row_err:.3e}")

    out = scaled_dot_product_attention(q, k, v)
    lo, hi = v.min(axis=0), v.max(axis=0)
    hull = ((out >= lo - 1e-9) & (out <= hi + 1e-9)).all()
    check("attention output in convex hull of value rows", hull)

    logits = q @ k.T / 4.0
    row_bias = rng.normal(size=(8, 1))
    shift_err = np.abs(softmax_rows(logits + row_bias) - softmax_rows(logits)).max()
    check(
        "softmax invariant to per-row logit shift",
        shift_err <= 1e-9,
        f"max err {shift_err:.3e}",
    )

    e = rng.normal(size=(4, 4))
    a = rng.normal(size=(4, 4))
    b = rng.normal(size=(4, 4))
    split = abs(
        dual_noise_loss(e, a, b)
        - (albedo_noise_loss(e, a, 1.0) + albedo_noise_loss(e, b, 1.0))
    )
    check("dual loss equals sum of unit-alpha single losses", split <= 1e-9, f"gap {split:.3e}")

    alpha_lin = abs(albedo_noise_loss(e, b, 2.0) - 2.0 * albedo_noise_loss(e, b, 1.0))
    check("alpha scales the single-channel loss linearly", alpha_lin == 0.0)

    h = 1e-4
    grad_fd = np.zeros_like(b)
    for idx in np.ndindex(b.shape):
        hi_b = b.copy()
        lo_b = b.copy()
        hi_b[idx] += h
        lo_b[idx] -= h
        grad_fd[idx] = (
            albedo_noise_loss(e, hi_b, 2.0) - albedo_noise_loss(e, lo_b, 2.0)
        ) / (2 * h)
    grad_true = 2.0 * 2.0 * (b - e) / b.size
    grad_err = np.abs(grad_fd - grad_true).max()
    check(
        "finite-difference gradient matches analytic within 1e-5",
        grad_err <= 1e-5,
        f"max err {grad_err:.3e}",
    )

    return results
