"""Orthogonal self-attention forward operators and a softmax baseline.

A head maps ``X`` (N x d) to ``A(X) X W^V W^O`` where ``A = exp(S)`` and
``S = alpha / sqrt(d_v) * (Q K^T - K Q^T)``. ``S`` has rank at most
``r = 2 d_v``, so ``A`` is applied as ``I + B (exp[S] - I) B^T`` with ``B`` an
N x r basis of the query/key span and ``[S] = B^T S B``. Nothing N x N is
formed on the fast path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.special import erf

from .basis import BasisDiagnostics, BasisMethod, build_m, compute_basis
from .linalg import ContractError, as_matrix, expm_small, singular_values


@dataclass
class OSAHeadParams:
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray
    alpha: float

    def __post_init__(self):
        d, d_v = self.w_q.shape
        if self.w_k.shape != (d, d_v) or self.w_v.shape != (d, d_v) or self.w_o.shape != (d_v, d):
            raise ContractError(
                "inconsistent head shapes: "
                f"w_q {self.w_q.shape}, w_k {self.w_k.shape}, w_v {self.w_v.shape}, w_o {self.w_o.shape}"
            )
        if not np.isfinite(self.alpha):
            raise ContractError("alpha must be finite")

    @property
    def d(self) -> int:
        return self.w_q.shape[0]

    @property
    def d_v(self) -> int:
        return self.w_q.shape[1]

    @property
    def value_output(self) -> np.ndarray:
        return self.w_v @ self.w_o

    def with_alpha(self, alpha: float) -> "OSAHeadParams":
        return OSAHeadParams(self.w_q, self.w_k, self.w_v, self.w_o, alpha)


@dataclass
class LowRankAttention:
    """``A = I + b (exp_s - I) b^T`` kept in factored form."""

    b: np.ndarray
    exp_s: np.ndarray
    s_small: np.ndarray
    diag: BasisDiagnostics

    def dense(self) -> np.ndarray:
        """Materialise the N x N attention matrix (diagnostics only)."""
        n, r = self.b.shape
        return np.eye(n) + self.b @ (self.exp_s - np.eye(r)) @ self.b.T


@dataclass
class MLPParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    activation: Literal["gelu", "identity"] = "gelu"

    def __post_init__(self):
        d, width = self.w1.shape
        if self.w2.shape != (width, d) or self.b1.shape != (width,) or self.b2.shape != (d,):
            raise ContractError("inconsistent MLP shapes")
        if width < d:
            raise ContractError("MLP width ratio must be >= 1")


@dataclass
class BlockParams:
    heads: list[OSAHeadParams]
    mlp: MLPParams

    def __post_init__(self):
        d = self.mlp.w1.shape[0]
        if not self.heads:
            raise ContractError("a block needs at least one head")
        if any(h.d != d for h in self.heads) or sum(h.d_v for h in self.heads) != d:
            raise ContractError("heads must satisfy h * d_v == d")


def _score_scale(p: OSAHeadParams) -> float:
    return p.alpha / np.sqrt(p.d_v)


def skew_part(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a - a.T)


def restricted_scores(b: np.ndarray, q: np.ndarray, k: np.ndarray, scale: float) -> np.ndarray:
    """``B^T S B`` from N x r and r x r products only."""
    bq = b.T @ q
    bk = b.T @ k
    return scale * (bq @ bk.T - bk @ bq.T)


def score_matrix_small(x, p: OSAHeadParams, method: BasisMethod = BasisMethod()) -> LowRankAttention:
    x = as_matrix(x, "x")
    if x.shape[1] != p.d:
        raise ContractError(f"x has {x.shape[1]} features, head expects {p.d}")
    q = x @ p.w_q
    k = x @ p.w_k
    b, diag = compute_basis(build_m(q, k), method)
    s_small = restricted_scores(b, q, k, _score_scale(p))
    exp_s = expm_small(skew_part(s_small))
    return LowRankAttention(b=b, exp_s=exp_s, s_small=s_small, diag=diag)


def apply_attention(att: LowRankAttention, z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.shape[0] != att.b.shape[0]:
        raise ContractError(f"z has {z.shape[0]} rows, attention expects {att.b.shape[0]}")
    r = att.b.shape[1]
    return z + att.b @ ((att.exp_s - np.eye(r)) @ (att.b.T @ z))


def osa_head_forward(x, p: OSAHeadParams, method: BasisMethod = BasisMethod()) -> np.ndarray:
    x = as_matrix(x, "x")
    att = score_matrix_small(x, p, method)
    return apply_attention(att, x @ p.w_v @ p.w_o)


def mosa_forward(x, heads: list[OSAHeadParams], method: BasisMethod = BasisMethod()) -> np.ndarray:
    x = as_matrix(x, "x")
    d = x.shape[1]
    if not heads or any(h.d != d for h in heads) or sum(h.d_v for h in heads) != d:
        raise ContractError("heads must satisfy h * d_v == d")
    out = np.zeros_like(x)
    for head in heads:
        out += osa_head_forward(x, head, method)
    return out


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def mlp_forward(x, p: MLPParams) -> np.ndarray:
    hidden = np.asarray(x, dtype=np.float64) @ p.w1 + p.b1
    if p.activation == "gelu":
        hidden = gelu(hidden)
    return hidden @ p.w2 + p.b2


def stack_forward(x0, blocks: list[BlockParams], method: BasisMethod = BasisMethod(), record_intermediates: bool = False):
    """Skipless, norm-free recursion ``X_l = MLP(MOSA(X_{l-1}))``.

    With ``record_intermediates`` the trace holds ``X_0, ..., X_L``.
    """
    x = as_matrix(x0, "x0")
    trace = [x] if record_intermediates else None
    for block in blocks:
        x = mlp_forward(mosa_forward(x, block.heads, method), block.mlp)
        if record_intermediates:
            trace.append(x)
    return x, trace


def softmax_rows(a: np.ndarray) -> np.ndarray:
    shifted = a - a.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def ssa_attention_matrix(x, p: OSAHeadParams) -> np.ndarray:
    x = as_matrix(x, "x")
    q = x @ p.w_q
    k = x @ p.w_k
    return softmax_rows(q @ k.T / np.sqrt(p.d_v))


def ssa_head_forward(x, p: OSAHeadParams) -> np.ndarray:
    x = as_matrix(x, "x")
    return ssa_attention_matrix(x, p) @ (x @ p.w_v @ p.w_o)


def dense_score_matrix(x, p: OSAHeadParams) -> np.ndarray:
    """The full N x N skew-symmetric ``S`` (oracles and bounds only)."""
    x = as_matrix(x, "x")
    q = x @ p.w_q
    k = x @ p.w_k
    return _score_scale(p) * (q @ k.T - k @ q.T)


def kernel_spectrum(x) -> np.ndarray:
    """Eigenvalues of ``x x^T``, non-increasing, padded with zeros to length N."""
    x = as_matrix(x, "x")
    n = x.shape[0]
    sv = singular_values(x) if x.size else np.zeros(0)
    out = np.zeros(n)
    out[: sv.size] = sv**2
    return out


def effective_rank(spectrum, rel_tol: float = 1e-7) -> int:
    spectrum = np.asarray(spectrum)
    if spectrum.size == 0 or spectrum[0] <= 0:
        return 0
    return int(np.count_nonzero(spectrum > rel_tol * spectrum[0]))


def rank_collapse_layers(d: int, depth: int, seed: int, mechanism: Literal["osa", "ssa"], alpha: float = 1.0):
    """Attention-only layers with one head (d_v = d).

    OSA layers use orthogonal ``W^V``, ``W^O`` so their product is orthogonal;
    query/key weights are independent orthogonal frames. SSA layers use
    Xavier-uniform weights.
    """
    from .init import init_ssa_head, sample_stiefel, split

    layers = []
    for rng in split(seed, depth):
        if mechanism == "osa":
            layers.append(
                OSAHeadParams(
                    w_q=sample_stiefel(d, d, rng),
                    w_k=sample_stiefel(d, d, rng),
                    w_v=sample_stiefel(d, d, rng),
                    w_o=sample_stiefel(d, d, rng).T,
                    alpha=alpha,
                )
            )
        elif mechanism == "ssa":
            layers.append(init_ssa_head(d, d, rng))
        else:
            raise ContractError(f"unknown mechanism {mechanism!r}")
    return layers


def rank_collapse_experiment(
    x0,
    depth: int,
    d: int,
    seed: int,
    mechanism: Literal["osa", "ssa"],
    method: BasisMethod = BasisMethod(),
    alpha: float = 1.0,
) -> list[np.ndarray]:
    """Kernel spectra of ``X_0, ..., X_depth`` through an attention-only stack."""
    x = as_matrix(x0, "x0")
    if depth < 0:
        raise ContractError("depth must be >= 0")
    if x.shape[1] != d:
        raise ContractError(f"x0 has {x.shape[1]} features, expected d={d}")
    if mechanism == "osa" and method.kind == "qr" and x.shape[0] < 2 * d:
        raise ContractError("one-head OSA with a QR basis needs N >= 2d tokens")
    spectra = [kernel_spectrum(x)]
    for layer in rank_collapse_layers(d, depth, seed, mechanism, alpha):
        if mechanism == "osa":
            x = osa_head_forward(x, layer, method)
        else:
            x = ssa_head_forward(x, layer)
        spectra.append(kernel_spectrum(x))
    return spectra
