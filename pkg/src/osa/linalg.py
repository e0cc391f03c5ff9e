"""Dense real-matrix kernel.

Matrices are plain ``float64`` numpy arrays. Everything here is a pure function
of its inputs. ``vec`` is always column-major stacking, whatever the storage
order of the array.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ContractError(ValueError):
    """Raised when an input violates an operation's shape or value contract."""


class SizeCapError(RuntimeError):
    """Raised when a diagnostic-only dense path is asked to exceed its size cap."""


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ContractError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ContractError(f"{name} has non-finite entries")
    return m


def vec(a: np.ndarray) -> np.ndarray:
    """Column-major vectorisation."""
    return np.asarray(a).reshape(-1, order="F")


def unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    return np.asarray(v).reshape(rows, cols, order="F")


@dataclass(frozen=True)
class SVDResult:
    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray


# ---------------------------------------------------------------------------
# QR
# ---------------------------------------------------------------------------


def reduced_qr(m) -> tuple[np.ndarray, np.ndarray]:
    """Householder reduced QR with a non-negative diagonal in ``r``.

    Rank-deficient input is accepted; the corresponding diagonal entries of
    ``r`` come out (numerically) zero and ``q`` still has orthonormal columns.
    """
    a = as_matrix(m, "m")
    n_rows, n_cols = a.shape
    if n_rows < n_cols:
        raise ContractError(f"reduced_qr needs rows >= cols, got {a.shape}")
    r = a.copy()
    reflectors = []
    for j in range(n_cols):
        x = r[j:, j]
        normx = np.linalg.norm(x)
        if normx == 0.0:
            reflectors.append(None)
            continue
        v = x.copy()
        v[0] += normx if x[0] >= 0 else -normx
        v /= np.abs(v).max()  # avoid subnormal squares for tiny columns
        v /= np.linalg.norm(v)
        r[j:, j:] -= 2.0 * np.outer(v, v @ r[j:, j:])
        reflectors.append(v)

    q = np.eye(n_rows, n_cols)
    for j in range(n_cols - 1, -1, -1):
        v = reflectors[j]
        if v is None:
            continue
        q[j:, :] -= 2.0 * np.outer(v, v @ q[j:, :])

    r = np.triu(r[:n_cols, :])
    signs = np.where(np.diag(r) < 0, -1.0, 1.0)
    q *= signs
    r *= signs[:, None]
    return q, r


# ---------------------------------------------------------------------------
# Matrix exponential
# ---------------------------------------------------------------------------

_TAYLOR_TERMS = 18


def expm_small(a) -> np.ndarray:
    """Matrix exponential by scaling and squaring around a truncated Taylor core.

    The input is scaled by ``2**-s`` so that its 1-norm is at most 0.5, the
    18-term Taylor polynomial is evaluated with Horner's rule and the result
    squared ``s`` times.
    """
    a = as_matrix(a, "a")
    n = a.shape[0]
    if a.shape[1] != n:
        raise ContractError(f"expm_small needs a square matrix, got {a.shape}")
    norm1 = np.abs(a).sum(axis=0).max() if n else 0.0
    s = 0
    if norm1 > 0.5:
        s = int(np.ceil(np.log2(norm1 / 0.5)))
    scaled = a / (2.0**s)
    eye = np.eye(n)
    result = eye.copy()
    for k in range(_TAYLOR_TERMS, 0, -1):
        result = eye + (scaled @ result) / k
    for _ in range(s):
        result = result @ result
    return result


# ---------------------------------------------------------------------------
# SVD by one-sided Jacobi
# ---------------------------------------------------------------------------

_JACOBI_TOL = 1e-14
_JACOBI_MAX_SWEEPS = 60


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Tournament schedule: n-1 rounds of disjoint index pairs covering all pairs.

    ``n`` must be even. Every pair (i, j) with i < j appears exactly once.
    """
    players = list(range(n))
    rounds = []
    for _ in range(n - 1):
        left = players[: n // 2]
        right = players[n // 2 :][::-1]
        i = np.minimum(left, right)
        j = np.maximum(left, right)
        rounds.append((np.asarray(i), np.asarray(j)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def _jacobi_columns(a: np.ndarray, want_v: bool):
    """Orthogonalise the columns of ``a`` (rows >= cols) by Jacobi rotations.

    Columns are held as rows of a contiguous array so each round of disjoint
    rotations is a handful of vectorised row operations.
    """
    rows, cols = a.shape
    padded = cols + (cols % 2)
    work = np.zeros((padded, rows))
    work[:cols] = a.T
    v = np.eye(padded) if want_v else None
    if padded < 2:
        return work[:cols].T, (v[:cols, :cols] if want_v else None)

    # columns below roundoff of the whole matrix are noise; rotating them
    # against each other never converges and cannot improve accuracy
    negligible = (np.finfo(float).eps * np.linalg.norm(work)) ** 2
    schedule = _round_robin(padded)
    for _ in range(_JACOBI_MAX_SWEEPS):
        rotated = False
        for i, j in schedule:
            ai = work[i]
            aj = work[j]
            alpha = np.einsum("ij,ij->i", ai, ai)
            beta = np.einsum("ij,ij->i", aj, aj)
            gamma = np.einsum("ij,ij->i", ai, aj)
            active = (np.abs(gamma) > _JACOBI_TOL * np.sqrt(alpha * beta)) & (np.minimum(alpha, beta) > negligible)
            if not active.any():
                continue
            rotated = True
            if not active.all():
                i, j = i[active], j[active]
                ai, aj = ai[active], aj[active]
                alpha, beta, gamma = alpha[active], beta[active], gamma[active]
            with np.errstate(over="ignore", divide="ignore"):
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.hypot(1.0, zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = (c * t)[:, None]
            c = c[:, None]
            work[i] = c * ai - s * aj
            work[j] = s * ai + c * aj
            if want_v:
                vi = v[i]
                vj = v[j]
                v[i] = c * vi - s * vj
                v[j] = s * vi + c * vj
        if not rotated:
            break
    work = work[:cols].T
    if want_v:
        v = v[:cols, :cols].T
    return work, v


def _complete_orthonormal(u: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Replace the columns of ``u`` not flagged in ``keep`` by an orthonormal completion."""
    rows, cols = u.shape
    if keep.all():
        return u
    basis = u[:, keep]
    missing = np.flatnonzero(~keep)
    out = u.copy()
    for col in missing:
        for e in range(rows):
            cand = np.zeros(rows)
            cand[e] = 1.0
            for _ in range(2):
                cand -= basis @ (basis.T @ cand)
            norm = np.linalg.norm(cand)
            if norm > 0.5:
                cand /= norm
                break
        out[:, col] = cand
        basis = np.column_stack([basis, cand])
    return out


def svd_jacobi(m) -> SVDResult:
    """Thin SVD ``m = u diag(sigma) v^T`` with ``sigma`` non-increasing."""
    a = as_matrix(m, "m")
    transposed = a.shape[0] < a.shape[1]
    if transposed:
        a = a.T
    work, v = _jacobi_columns(a, want_v=True)
    sigma = np.linalg.norm(work, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    work = work[:, order]
    v = v[:, order]
    tiny = sigma <= (sigma[0] if sigma.size else 0.0) * 1e-15
    tiny |= sigma == 0.0
    u = np.zeros_like(work)
    u[:, ~tiny] = work[:, ~tiny] / sigma[~tiny]
    u = _complete_orthonormal(u, ~tiny)
    if transposed:
        u, v = v, u
    return SVDResult(u=u, sigma=sigma, v=v)


def singular_values(m) -> np.ndarray:
    """All ``min(rows, cols)`` singular values, non-increasing."""
    a = as_matrix(m, "m")
    if a.shape[0] < a.shape[1]:
        a = a.T
    if a.size == 0:
        return np.zeros(min(a.shape))
    work, _ = _jacobi_columns(a, want_v=False)
    return np.sort(np.linalg.norm(work, axis=0))[::-1]


def spectral_norm(m, tol: float = 1e-10, max_iter: int = 1000) -> float:
    """Largest singular value by power iteration on ``m^T m``.

    The start vector is the normalised sum of the rows of ``m``; if that
    vanishes, or the iteration fails to converge, the Jacobi SVD is used.
    """
    if tol <= 0:
        raise ContractError("tol must be positive")
    a = as_matrix(m, "m")
    if a.size == 0 or not np.any(a):
        return 0.0
    v = a.sum(axis=0)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        v = np.ones(a.shape[1])
        norm = np.linalg.norm(v)
    v = v / norm
    for _ in range(max_iter):
        w = a.T @ (a @ v)
        lam = float(v @ w)
        if lam <= 0.0:
            break
        if np.linalg.norm(w - lam * v) <= tol * lam:
            return float(np.sqrt(lam))
        v = w / np.linalg.norm(w)
    return float(singular_values(a)[0])


# ---------------------------------------------------------------------------
# Kronecker machinery
# ---------------------------------------------------------------------------


def kron(a, b) -> np.ndarray:
    """Kronecker product with block layout ``a[i, j] * b``."""
    return np.kron(as_matrix(a, "a"), as_matrix(b, "b"))


def commutation_matrix(m: int, n: int) -> np.ndarray:
    """Permutation ``K`` of size mn x mn with ``K @ vec(b) == vec(b.T)`` for b of shape (m, n)."""
    if m < 1 or n < 1:
        raise ContractError("commutation_matrix needs m, n >= 1")
    k = np.zeros((m * n, m * n))
    i, j = np.meshgrid(np.arange(m), np.arange(n), indexing="ij")
    k[(j + i * n).ravel(), (i + j * m).ravel()] = 1.0
    return k
