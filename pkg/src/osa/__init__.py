"""Orthogonal self-attention: low-rank exponential attention, its bases, init and Jacobians."""

from .attention import (
    BlockParams,
    LowRankAttention,
    MLPParams,
    OSAHeadParams,
    apply_attention,
    kernel_spectrum,
    mlp_forward,
    mosa_forward,
    osa_head_forward,
    rank_collapse_experiment,
    score_matrix_small,
    ssa_head_forward,
    stack_forward,
)
from .basis import BasisDiagnostics, BasisMethod, newton_schulz_basis, qr_basis
from .init import InitConfig, init_mlp, init_osa_head, init_query_key, init_value_output, make_rng, sample_stiefel
from .jacobian import JacobianReport, condition_report, jacobian_fd, jacobian_full, osa_jvp
from .linalg import ContractError, SizeCapError

__version__ = "0.1.0"
