import numpy as np
import pytest
from scipy import stats

from osa.init import (
    InitConfig,
    init_mlp,
    init_osa_head,
    init_query_key,
    init_value_output,
    make_rng,
    sample_stiefel,
    split,
)
from osa.jacobian import effective_condition, skew_weight
from osa.linalg import ContractError, singular_values

CONFIGS = [(8, 2), (16, 4), (64, 8)]


# --- Stiefel sampling ---------------------------------------------------------


@pytest.mark.parametrize("n,m", [(1, 1), (2, 1), (5, 3), (8, 8), (64, 16)])
def test_stiefel_orthonormal(n, m):
    for seed in range(10):
        q = sample_stiefel(n, m, make_rng(seed))
        assert q.shape == (n, m)
        assert np.linalg.norm(q.T @ q - np.eye(m)) <= 1e-12


def test_stiefel_rejects_wide():
    with pytest.raises(ContractError):
        sample_stiefel(2, 3, make_rng(0))


def test_stiefel_scalar_sign_balance():
    signs = np.array([sample_stiefel(1, 1, make_rng(seed))[0, 0] for seed in range(10_000)])
    assert set(np.unique(signs)) == {-1.0, 1.0}
    frac = np.mean(signs > 0)
    assert 0.47 <= frac <= 0.53


def test_stiefel_circle_uniformity():
    angles = np.array([np.arctan2(*sample_stiefel(2, 1, make_rng(seed))[::-1, 0]) for seed in range(10_000)])
    ks = stats.kstest((angles + np.pi) / (2 * np.pi), "uniform").statistic
    assert ks <= 0.02


def test_rng_determinism():
    a = sample_stiefel(6, 3, make_rng(42))
    b = sample_stiefel(6, 3, make_rng(42))
    np.testing.assert_array_equal(a, b)
    x, y = split(7, 2)
    assert not np.array_equal(x.standard_normal(3), y.standard_normal(3))


# --- value / output ---------------------------------------------------------------


@pytest.mark.parametrize("d,d_v", CONFIGS)
def test_value_output_spectrum(d, d_v):
    w_v, w_o = init_value_output(d, d_v, make_rng(d))
    sv = singular_values(w_v @ w_o)
    np.testing.assert_allclose(sv[:d_v], 1.0, atol=1e-10)
    np.testing.assert_allclose(sv[d_v:], 0.0, atol=1e-10)
    assert np.linalg.norm(w_v.T @ w_v - np.eye(d_v)) <= 1e-12


def test_value_output_independent_draws():
    for seed in range(100):
        w_v, w_o = init_value_output(8, 4, make_rng(seed))
        assert np.linalg.norm(w_v - w_o.T) > 0.1


def test_value_output_rejects_wide():
    with pytest.raises(ContractError):
        init_value_output(2, 3, make_rng(0))


# --- query / key ---------------------------------------------------------------------


@pytest.mark.parametrize("d,d_v", CONFIGS)
def test_query_key_singular_values(d, d_v):
    for seed in range(50):
        w_q, w_k = init_query_key(d, d_v, make_rng(seed))
        w = w_q @ w_k.T - w_k @ w_q.T
        target = np.concatenate([np.ones(2 * d_v), np.zeros(d - 2 * d_v)])
        np.testing.assert_allclose(singular_values(w), target, atol=1e-9)
        assert np.abs(w_q.T @ w_k).max() <= 1e-12
        np.testing.assert_array_equal(w.T, -w)


def test_query_key_needs_room():
    with pytest.raises(ContractError):
        init_query_key(4, 3, make_rng(0))


# --- heads, config, MLP ------------------------------------------------------------------


def test_head_defaults_and_guarantees():
    cfg = InitConfig(16, 4)
    assert cfg.alpha0 == 0.1
    for seed in (0, 1):
        head = init_osa_head(cfg, make_rng(seed))
        assert head.alpha == 0.1
        sv = singular_values(skew_weight(head))
        np.testing.assert_allclose(sv[:8], 1.0, atol=1e-9)
        np.testing.assert_allclose(sv[8:], 0.0, atol=1e-9)
        _, _, kappa = effective_condition(singular_values(head.value_output))
        assert abs(kappa - 1) <= 1e-9
    a = init_osa_head(cfg, make_rng(0))
    b = init_osa_head(cfg, make_rng(1))
    assert not np.allclose(a.w_q, b.w_q)


def test_head_is_bit_reproducible():
    cfg = InitConfig(8, 2, alpha0=0.3)
    a = init_osa_head(cfg, make_rng(5))
    b = init_osa_head(cfg, make_rng(5))
    for name in ("w_q", "w_k", "w_v", "w_o"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))


@pytest.mark.parametrize("d,h", [(8, 1), (6, 4), (0, 1)])
def test_config_rejects_invalid(d, h):
    with pytest.raises(ContractError):
        InitConfig(d, h)


def test_mlp_init():
    p = init_mlp(4, 3, make_rng(0))
    assert np.all(p.b1 == 0) and np.all(p.b2 == 0)
    np.testing.assert_allclose(singular_values(p.w1), 1.0, atol=1e-10)
    np.testing.assert_allclose(singular_values(p.w2), 1.0, atol=1e-10)
    scaled = init_mlp(4, 2, make_rng(0), gain=2.5)
    np.testing.assert_allclose(singular_values(scaled.w1), 2.5, atol=1e-10)
    with pytest.raises(ContractError):
        init_mlp(4, 0, make_rng(0))
