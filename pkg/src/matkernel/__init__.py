"""Matrix inner products, matrix-valued kernels and kernelized support tensor machines."""

from .kernels import BlockGram, KernelConfig, SumKernel, assemble_gram, check_psd_kernel, svd_features
from .matspace import frobenius_norm, inner_dot, inner_poly, spectral_norm
from .qp import DualProblem, DualSolution, solve_dual
from .stm import StmHyper, StmModel, OvoModel, train_binary, ovo_train, decision_value, predict

__version__ = "0.1.0"
