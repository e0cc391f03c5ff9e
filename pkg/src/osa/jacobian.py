"""Input-output Jacobian of a single OSA head.

The exact Jacobian is assembled column by column from forward-mode directional
derivatives through the whole pipeline: the query/key projections, the basis
(Newton-Schulz polynomial chain rule, or the reduced-QR tangent), the
restricted score matrix, the Frechet derivative of the matrix exponential,
and the final products. ``vec`` is column-major throughout, so
``J @ vec(dX) == vec(jvp(dX))``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .attention import (
    OSAHeadParams,
    _score_scale,
    dense_score_matrix,
    osa_head_forward,
    restricted_scores,
    score_matrix_small,
    skew_part,
)
from .basis import BasisMethod, build_m, ns_step, prenormalise, qr_basis
from .linalg import (
    ContractError,
    SizeCapError,
    as_matrix,
    commutation_matrix,
    expm_small,
    kron,
    reduced_qr,
    singular_values,
    spectral_norm,
    unvec,
    vec,
)

MAX_JACOBIAN_SIZE = 512
MAX_DENSE_TOKENS = 64
DEFAULT_RANK_TOL = 1e-7
FD_REL_STEP = 1e-5


def _check_cap(x: np.ndarray, what: str):
    n, d = x.shape
    if n * d > MAX_JACOBIAN_SIZE:
        raise SizeCapError(f"{what} refuses N*d = {n * d} > {MAX_JACOBIAN_SIZE}")


def expm_frechet(a, e) -> np.ndarray:
    """Frechet derivative ``L(a, e)`` of ``exp`` at ``a`` in direction ``e``.

    Read off the top-right block of ``exp([[a, e], [0, a]])``.
    """
    a = as_matrix(a, "a")
    e = as_matrix(e, "e")
    if a.shape != e.shape or a.shape[0] != a.shape[1]:
        raise ContractError(f"expm_frechet needs matching square inputs, got {a.shape}, {e.shape}")
    n = a.shape[0]
    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = a
    block[n:, n:] = a
    block[:n, n:] = e
    return expm_small(block)[:n, n:]


def expm_frechet_operator(a) -> np.ndarray:
    """The n^2 x n^2 matrix of ``vec(e) -> vec(L(a, e))``."""
    a = as_matrix(a, "a")
    n = a.shape[0]
    out = np.empty((n * n, n * n))
    for j in range(n * n):
        e = np.zeros(n * n)
        e[j] = 1.0
        out[:, j] = vec(expm_frechet(a, unvec(e, n, n)))
    return out


class _Linearisation:
    """Forward intermediates of one head, reusable across tangent directions."""

    def __init__(self, x: np.ndarray, p: OSAHeadParams, method: BasisMethod):
        self.x = x
        self.p = p
        self.method = method
        self.scale = _score_scale(p)
        self.q = x @ p.w_q
        self.k = x @ p.w_k
        self.m = build_m(self.q, self.k)
        self.z = x @ p.w_v @ p.w_o
        if method.kind == "qr":
            if self.m.shape[0] >= self.m.shape[1]:
                self.b, self.r_factor = reduced_qr(self.m)
            else:
                self.b, self.r_factor = qr_basis(self.m)[0], None
        else:
            m0, self.beta = prenormalise(self.m, method.eps)
            self.frob = float(np.linalg.norm(self.m))
            self.iterates = [m0]
            for _ in range(method.iterations):
                self.iterates.append(ns_step(self.iterates[-1]))
            self.b = self.iterates[-1]
        r = self.b.shape[1]
        self.bq = self.b.T @ self.q
        self.bk = self.b.T @ self.k
        self.s_skew = skew_part(restricted_scores(self.b, self.q, self.k, self.scale))
        self.exp_s = expm_small(self.s_skew)
        self.delta = self.exp_s - np.eye(r)
        self.btz = self.b.T @ self.z

    def _basis_tangent(self, dm: np.ndarray) -> np.ndarray:
        if self.method.kind == "qr":
            if self.r_factor is None:
                # identity basis when N < r: constant in X
                return np.zeros_like(self.b)
            q, r = self.b, self.r_factor
            # dm @ inv(r) via a triangular solve; blows up as r loses rank.
            dm_rinv = solve_triangular(r, dm.T, trans="T", lower=False).T
            c = q.T @ dm_rinv
            low = np.tril(c, -1)
            omega = low - low.T
            return dm_rinv - q @ (c - omega)
        m, beta = self.m, self.beta
        if self.frob > 0:
            dbeta = float(np.sum(m * dm)) / self.frob
        else:
            dbeta = 0.0
        dmk = dm / beta - m * (dbeta / beta**2)
        for mk in self.iterates[:-1]:
            gram = mk.T @ mk
            dgram = dmk.T @ mk + mk.T @ dmk
            dmk = 0.5 * (3.0 * dmk - dmk @ gram - mk @ dgram)
        return dmk

    def jvp(self, dx: np.ndarray) -> np.ndarray:
        p = self.p
        dq = dx @ p.w_q
        dk = dx @ p.w_k
        db = self._basis_tangent(np.hstack([dq, dk]))
        dbq = db.T @ self.q + self.b.T @ dq
        dbk = db.T @ self.k + self.b.T @ dk
        ds = self.scale * (dbq @ self.bk.T + self.bq @ dbk.T - dbk @ self.bq.T - self.bk @ dbq.T)
        dexp = expm_frechet(self.s_skew, skew_part(ds))
        dz = dx @ p.w_v @ p.w_o
        return (
            dz
            + db @ (self.delta @ self.btz)
            + self.b @ (dexp @ self.btz)
            + self.b @ (self.delta @ (db.T @ self.z + self.b.T @ dz))
        )


def osa_jvp(x, dx, p: OSAHeadParams, method: BasisMethod = BasisMethod()) -> np.ndarray:
    """Directional derivative of :func:`osa_head_forward` at ``x`` along ``dx``."""
    x = as_matrix(x, "x")
    dx = as_matrix(dx, "dx")
    if dx.shape != x.shape:
        raise ContractError(f"dx shape {dx.shape} differs from x shape {x.shape}")
    return _Linearisation(x, p, method).jvp(dx)


def jacobian_full(x, p: OSAHeadParams, method: BasisMethod = BasisMethod()) -> np.ndarray:
    x = as_matrix(x, "x")
    _check_cap(x, "jacobian_full")
    n, d = x.shape
    lin = _Linearisation(x, p, method)
    jac = np.empty((n * d, n * d))
    for col in range(n * d):
        e = np.zeros(n * d)
        e[col] = 1.0
        jac[:, col] = vec(lin.jvp(unvec(e, n, d)))
    return jac


def default_fd_step(x: np.ndarray) -> float:
    scale = float(np.linalg.norm(x))
    return FD_REL_STEP * (scale if scale > 0 else 1.0)


def jacobian_fd(x, p: OSAHeadParams, method: BasisMethod = BasisMethod(), step: float | None = None) -> np.ndarray:
    """Central-difference Jacobian, one coordinate of ``vec(x)`` at a time."""
    x = as_matrix(x, "x")
    _check_cap(x, "jacobian_fd")
    if step is None:
        step = default_fd_step(x)
    if step == 0:
        raise ContractError("step must be non-zero")
    n, d = x.shape
    jac = np.empty((n * d, n * d))
    for col in range(n * d):
        e = unvec(np.eye(1, n * d, col).ravel(), n, d)
        plus = osa_head_forward(x + step * e, p, method)
        minus = osa_head_forward(x - step * e, p, method)
        jac[:, col] = vec(plus - minus) / (2.0 * step)
    return jac


def attention_dense(x, p: OSAHeadParams, method: BasisMethod = BasisMethod()) -> np.ndarray:
    x = as_matrix(x, "x")
    if x.shape[0] > MAX_DENSE_TOKENS:
        raise SizeCapError(f"dense attention refuses N = {x.shape[0]} > {MAX_DENSE_TOKENS}")
    return score_matrix_small(x, p, method).dense()


def j2_exact(x, p: OSAHeadParams, method: BasisMethod = BasisMethod()) -> np.ndarray:
    """``(W^V W^O)^T kron A(X)``."""
    x = as_matrix(x, "x")
    _check_cap(x, "j2_exact")
    return kron(p.value_output.T, attention_dense(x, p, method))


def skew_weight(p: OSAHeadParams) -> np.ndarray:
    """``W~ = W^Q W^K^T - W^K W^Q^T``."""
    return p.w_q @ p.w_k.T - p.w_k @ p.w_q.T


def ds_dx_exact(x, p: OSAHeadParams) -> np.ndarray:
    """Closed-form N^2 x Nd Jacobian of the full score matrix ``S`` w.r.t. ``X``."""
    x = as_matrix(x, "x")
    _check_cap(x, "ds_dx_exact")
    n, d = x.shape
    w = skew_weight(p)
    eye = np.eye(n)
    return _score_scale(p) * (kron(x @ w.T, eye) + kron(eye, x @ w) @ commutation_matrix(n, d))


def ds_dx_fd(x, p: OSAHeadParams, step: float | None = None) -> np.ndarray:
    x = as_matrix(x, "x")
    _check_cap(x, "ds_dx_fd")
    n, d = x.shape
    if step is None:
        step = default_fd_step(x)
    out = np.empty((n * n, n * d))
    for col in range(n * d):
        e = unvec(np.eye(1, n * d, col).ravel(), n, d)
        out[:, col] = vec(dense_score_matrix(x + step * e, p) - dense_score_matrix(x - step * e, p)) / (2 * step)
    return out


def kappa_bound(delta: float, perturbation: float) -> float:
    """``(1 + delta + c) / (1 - delta - c)``; infinite once the denominator is <= 0."""
    denom = 1.0 - delta - perturbation
    if denom <= 0:
        return float("inf")
    return (1.0 + delta + perturbation) / denom


def effective_condition(sigma: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL) -> tuple[float, float, float]:
    """``(sigma_max, sigma_min_pos, kappa_eff)`` over singular values above ``rank_tol * sigma_max``."""
    sigma = np.asarray(sigma)
    smax = float(sigma[0]) if sigma.size else 0.0
    if smax == 0.0:
        return 0.0, 0.0, 1.0
    positive = sigma[sigma > rank_tol * smax]
    smin = float(positive[-1])
    return smax, smin, smax / smin


@dataclass
class JacobianReport:
    n_tokens: int
    d: int
    alpha: float
    sigma_max: float
    sigma_min_pos: float
    kappa_eff: float
    j1_norm: float
    delta_hat: float
    fd_max_abs_err: float
    weyl_excess: float

    def bound_rhs(self) -> float:
        """Condition-number ceiling with the measured ``||J_1||_2`` as the perturbation."""
        return kappa_bound(self.delta_hat, self.j1_norm)


def condition_report(
    x,
    p: OSAHeadParams,
    method: BasisMethod = BasisMethod(),
    rank_tol: float = DEFAULT_RANK_TOL,
    fd_step: float | None = None,
) -> JacobianReport:
    x = as_matrix(x, "x")
    _check_cap(x, "condition_report")
    n, d = x.shape
    jac = jacobian_full(x, p, method)
    j2 = j2_exact(x, p, method)
    j1 = jac - j2
    sig_j = singular_values(jac)
    sig_j2 = singular_values(j2)
    smax, smin, kappa = effective_condition(sig_j, rank_tol)
    j1_norm = spectral_norm(j1, tol=1e-12) if np.any(j1) else 0.0
    delta_hat = float(np.max(np.abs(singular_values(attention_dense(x, p, method)) - 1.0)))
    fd = jacobian_fd(x, p, method, fd_step)
    return JacobianReport(
        n_tokens=n,
        d=d,
        alpha=float(p.alpha),
        sigma_max=smax,
        sigma_min_pos=smin,
        kappa_eff=kappa,
        j1_norm=float(j1_norm),
        delta_hat=delta_hat,
        fd_max_abs_err=float(np.max(np.abs(jac - fd))),
        weyl_excess=float(np.max(np.abs(sig_j - sig_j2)) - j1_norm),
    )
