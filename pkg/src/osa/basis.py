"""Orthonormal basis for the query/key column span.

Two routes: Householder reduced QR, or Newton-Schulz iterates on the
Frobenius-normalised ``M = [Q, K]``. The basis width is always ``2 * d_v``,
even when ``M`` is rank deficient.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import numpy as np

from .linalg import ContractError, as_matrix, reduced_qr, singular_values

DEFAULT_EPS = 1e-6
DEFAULT_NS_ITERS = 6


@dataclass(frozen=True)
class BasisMethod:
    kind: Literal["qr", "ns"] = "qr"
    iterations: int = DEFAULT_NS_ITERS
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        if self.kind not in ("qr", "ns"):
            raise ContractError(f"unknown basis kind {self.kind!r}")
        if self.kind == "ns" and self.iterations < 0:
            raise ContractError("Newton-Schulz needs a non-negative iteration count")
        if self.eps <= 0:
            raise ContractError("eps must be positive")

    @classmethod
    def qr(cls) -> "BasisMethod":
        return cls("qr")

    @classmethod
    def newton_schulz(cls, iterations: int = DEFAULT_NS_ITERS, eps: float = DEFAULT_EPS) -> "BasisMethod":
        return cls("ns", iterations, eps)

    def __str__(self):
        return "qr" if self.kind == "qr" else f"ns(K={self.iterations})"


@dataclass
class BasisDiagnostics:
    """Per-call record of how a basis was produced.

    Singular-value summaries are computed lazily from the r x r Gram matrix so
    that forward passes do not pay for them unless they are read.
    """

    method: BasisMethod
    r: int
    prenorm_scale: float
    iterations: int
    gram: np.ndarray = field(repr=False)

    @cached_property
    def _gram_spectrum(self) -> np.ndarray:
        return singular_values(self.gram)

    @cached_property
    def ortho_residual(self) -> float:
        """``||B^T B - I_r||_2``."""
        if self.r == 0:
            return 0.0
        return float(singular_values(self.gram - np.eye(self.r))[0])

    @property
    def max_sv(self) -> float:
        return float(np.sqrt(self._gram_spectrum[0])) if self.r else 0.0

    @property
    def min_sv(self) -> float:
        return float(np.sqrt(self._gram_spectrum[-1])) if self.r else 0.0


def build_m(q, k) -> np.ndarray:
    q = as_matrix(q, "q")
    k = as_matrix(k, "k")
    if q.shape != k.shape:
        raise ContractError(f"query/key shapes differ: {q.shape} vs {k.shape}")
    return np.hstack([q, k])


def prenormalise(m: np.ndarray, eps: float) -> tuple[np.ndarray, float]:
    scale = float(np.linalg.norm(m)) + eps
    return m / scale, scale


def ns_step(mk: np.ndarray) -> np.ndarray:
    """One Newton-Schulz step ``M (3I - M^T M) / 2``."""
    return 0.5 * mk @ (3.0 * np.eye(mk.shape[1]) - mk.T @ mk)


def newton_schulz_basis(m, k_iters: int = DEFAULT_NS_ITERS, eps: float = DEFAULT_EPS):
    """``M_K`` from ``M_0 = M / (||M||_F + eps)``; ``k_iters == 0`` returns ``M_0``."""
    if eps <= 0:
        raise ContractError("eps must be positive")
    if k_iters < 0:
        raise ContractError("k_iters must be >= 0")
    m = as_matrix(m, "m")
    b, scale = prenormalise(m, eps)
    for _ in range(k_iters):
        b = ns_step(b)
    diag = BasisDiagnostics(
        method=BasisMethod.newton_schulz(k_iters, eps),
        r=b.shape[1],
        prenorm_scale=scale,
        iterations=k_iters,
        gram=b.T @ b,
    )
    return b, diag


def qr_basis(m):
    """Q factor of the reduced QR of ``m``. No pivoting: near rank deficiency the
    basis is still orthonormal but its derivative can blow up.

    With fewer rows than columns the span is all of R^N and ``I_N`` is returned.
    """
    m = as_matrix(m, "m")
    if m.shape[0] < m.shape[1]:
        b = np.eye(m.shape[0])
    else:
        b, _ = reduced_qr(m)
    diag = BasisDiagnostics(
        method=BasisMethod.qr(),
        r=b.shape[1],
        prenorm_scale=float(np.linalg.norm(m)),
        iterations=0,
        gram=b.T @ b,
    )
    return b, diag


def compute_basis(m, method: BasisMethod):
    if method.kind == "qr":
        return qr_basis(m)
    return newton_schulz_basis(m, method.iterations, method.eps)


def ortho_error_bound(s_spectral_norm: float, b_singular_values) -> tuple[float, float]:
    """Upper bounds on ``||Y^T Y - I||_2`` for the low-rank rotation ``Y``.

    Returns ``(tight, loose)`` where ``tight`` uses the basis singular values
    and ``loose`` only assumes they lie in [0, 1].
    """
    if s_spectral_norm < 0:
        raise ContractError("spectral norm must be non-negative")
    sig = np.asarray(b_singular_values, dtype=np.float64)
    if np.any(sig < 0) or np.any(sig > 1 + 1e-9):
        raise ContractError("basis singular values must lie in [0, 1]")
    growth = np.expm1(s_spectral_norm) ** 2
    sq = sig * sig
    worst = float(np.max(np.abs(sq * (sq - 1.0)))) if sig.size else 0.0
    return growth * worst, 0.25 * growth


def measured_ortho_error(b, exp_s_small) -> float:
    """``||Y^T Y - I_N||_2`` for ``Y = I + B (exp_s - I) B^T`` without forming Y.

    Uses ``Y^T Y - I = B D^T E D B^T`` with ``D = exp_s - I`` and
    ``E = B^T B - I``; writing ``B = Q_b R_b`` reduces the norm to an r x r one.
    """
    b = as_matrix(b, "b")
    e_s = as_matrix(exp_s_small, "exp_s_small")
    r = b.shape[1]
    if e_s.shape != (r, r):
        raise ContractError(f"exp_s_small must be {r}x{r}, got {e_s.shape}")
    delta = e_s - np.eye(r)
    if not np.any(delta):
        return 0.0
    gram_err = b.T @ b - np.eye(r)
    core = delta.T @ gram_err @ delta
    if b.shape[0] >= r:
        _, r_b = reduced_qr(b)
    else:
        r_b = b
    return float(singular_values(r_b @ core @ r_b.T)[0])
