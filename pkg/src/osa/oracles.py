"""Slow, independent reference computations used to check the fast paths.

These deliberately avoid the package's own exponential and basis code: dense
exponentials come from :func:`scipy.linalg.expm`, and the Frechet derivative is
integrated by Gauss-Legendre quadrature in its Kronecker form.
"""

from __future__ import annotations

from math import factorial

import numpy as np
import scipy.linalg

from .attention import OSAHeadParams, dense_score_matrix
from .linalg import SizeCapError, as_matrix, unvec, vec

MAX_DENSE_TOKENS = 64


def dense_exp_attention(x, p: OSAHeadParams) -> np.ndarray:
    """``exp(S)`` formed as a full N x N exponential."""
    x = as_matrix(x, "x")
    if x.shape[0] > MAX_DENSE_TOKENS:
        raise SizeCapError(f"dense exponential oracle refuses N = {x.shape[0]} > {MAX_DENSE_TOKENS}")
    return scipy.linalg.expm(dense_score_matrix(x, p))


def dense_osa_forward(x, p: OSAHeadParams) -> np.ndarray:
    x = as_matrix(x, "x")
    return dense_exp_attention(x, p) @ x @ p.w_v @ p.w_o


def taylor_expm(a, terms: int = 50) -> np.ndarray:
    """Plain Taylor series after scaling to unit 1-norm, then squaring back."""
    a = as_matrix(a, "a")
    norm1 = np.abs(a).sum(axis=0).max() if a.size else 0.0
    s = max(0, int(np.ceil(np.log2(norm1)))) if norm1 > 1 else 0
    scaled = a / 2.0**s
    term = np.eye(a.shape[0])
    total = term.copy()
    for k in range(1, terms):
        term = term @ scaled
        total = total + term / factorial(k)
    for _ in range(s):
        total = total @ total
    return total


def expm_frechet_quadrature(a, e, points: int = 64) -> np.ndarray:
    """``int_0^1 (exp(s a^T) kron exp((1 - s) a)) ds @ vec(e)``, unvectorised."""
    a = as_matrix(a, "a")
    e = as_matrix(e, "e")
    n = a.shape[0]
    nodes, weights = np.polynomial.legendre.leggauss(points)
    s_vals = 0.5 * (nodes + 1.0)
    total = np.zeros(n * n)
    ve = vec(e)
    for s, w in zip(s_vals, 0.5 * weights):
        op = np.kron(scipy.linalg.expm(s * a.T), scipy.linalg.expm((1.0 - s) * a))
        total += w * (op @ ve)
    return unvec(total, n, n)
