"""Weight initialisation: Stiefel sampling and the well-conditioned OSA scheme.

Random streams come from numpy's counter-based Philox generator. Independent
streams for heads and layers are derived with :func:`split`, so the same seed
always produces the same parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import BlockParams, MLPParams, OSAHeadParams
from .linalg import ContractError, reduced_qr, spectral_norm as _spectral_norm

DEFAULT_ALPHA0 = 0.1


def make_rng(seed: int | np.random.SeedSequence) -> np.random.Generator:
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.Philox(seed))


def split(seed: int | np.random.SeedSequence, n: int) -> list[np.random.Generator]:
    """``n`` statistically independent generators derived from one seed."""
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(int(seed))
    return [make_rng(child) for child in seed.spawn(n)]


@dataclass(frozen=True)
class InitConfig:
    d: int
    h: int
    alpha0: float = DEFAULT_ALPHA0
    mlp_ratio: int = 4
    mlp_gain: float = 1.0

    def __post_init__(self):
        if self.d < 1 or self.h < 1:
            raise ContractError("d and h must be positive")
        if self.d % self.h:
            raise ContractError(f"h={self.h} does not divide d={self.d}")
        if 2 * self.d_v > self.d:
            raise ContractError("query-key init needs 2 * d_v <= d")
        if self.mlp_ratio < 1:
            raise ContractError("mlp_ratio must be >= 1")

    @property
    def d_v(self) -> int:
        return self.d // self.h


def sample_stiefel(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample of an n x m matrix with orthonormal columns.

    Gaussian draw, reduced QR, then each column of Q is multiplied by the sign
    of the matching diagonal entry of R.
    """
    if n < m:
        raise ContractError(f"sample_stiefel needs n >= m, got {n} < {m}")
    z = rng.standard_normal((n, m))
    q, r = reduced_qr(z)
    signs = np.where(np.diag(r) < 0, -1.0, 1.0)
    return q * signs


def init_value_output(d: int, d_v: int, rng: np.random.Generator):
    if d_v > d:
        raise ContractError("d_v must not exceed d")
    w_v = sample_stiefel(d, d_v, rng)
    w_o = sample_stiefel(d, d_v, rng).T
    return w_v, w_o


def init_query_key(d: int, d_v: int, rng: np.random.Generator):
    if 2 * d_v > d:
        raise ContractError(f"query-key init needs 2*d_v <= d, got d_v={d_v}, d={d}")
    u = sample_stiefel(d, 2 * d_v, rng)
    return u[:, :d_v].copy(), u[:, d_v:].copy()


def init_osa_head(cfg: InitConfig, rng: np.random.Generator) -> OSAHeadParams:
    w_q, w_k = init_query_key(cfg.d, cfg.d_v, rng)
    w_v, w_o = init_value_output(cfg.d, cfg.d_v, rng)
    return OSAHeadParams(w_q=w_q, w_k=w_k, w_v=w_v, w_o=w_o, alpha=cfg.alpha0)


def init_mlp(d: int, ratio: int, rng: np.random.Generator, gain: float = 1.0) -> MLPParams:
    """Orthogonal frames scaled by ``gain`` with zero biases.

    Stand-in for a dedicated skipless-MLP scheme; every non-zero singular value
    of either weight equals ``gain``.
    """
    if ratio < 1:
        raise ContractError("ratio must be >= 1")
    width = ratio * d
    w1 = gain * sample_stiefel(width, d, rng).T
    w2 = gain * sample_stiefel(width, d, rng)
    return MLPParams(w1=w1, b1=np.zeros(width), w2=w2, b2=np.zeros(d))


def xavier_uniform(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_ssa_head(d: int, d_v: int, rng: np.random.Generator) -> OSAHeadParams:
    """Softmax-attention baseline weights (alpha unused)."""
    return OSAHeadParams(
        w_q=xavier_uniform(d, d_v, rng),
        w_k=xavier_uniform(d, d_v, rng),
        w_v=xavier_uniform(d, d_v, rng),
        w_o=xavier_uniform(d_v, d, rng),
        alpha=1.0,
    )


def init_block(cfg: InitConfig, rng: np.random.Generator):
    rngs = split(int(rng.integers(2**63)), cfg.h + 1)
    heads = [init_osa_head(cfg, r) for r in rngs[: cfg.h]]
    mlp = init_mlp(cfg.d, cfg.mlp_ratio, rngs[-1], cfg.mlp_gain)
    return BlockParams(heads=heads, mlp=mlp)


def random_input(n: int, d: int, rng: np.random.Generator, spectral_norm: float = 1.0) -> np.ndarray:
    """Gaussian token matrix rescaled to a fixed spectral norm."""
    x = rng.standard_normal((n, d))
    return x * (spectral_norm / _spectral_norm(x))
