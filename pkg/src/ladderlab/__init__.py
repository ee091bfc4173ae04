"""Ladder networks: denoising autoencoders with lateral shortcuts and
per-layer decorrelation costs, trained by plain momentum gradient descent.

Submodules
----------
linalg   symmetric eigendecomposition, SPD functions, whitening
data     seeded synthetic datasets
model    encoder/decoder maps, specs, parameters, checkpoints
cost     composite cost, exact gradient, beta controller
optim    training loop and gradient checker
metrics  loading matrices, leakage, block scores, gate curves
"""
from .cost import CostBreakdown, adjust_beta, c_mu, c_sigma, c_sigma_grad, cost_and_grad
from .data import Dataset, make_ica_dataset, make_isa_dataset, make_rng
from .errors import (
    ConfigError,
    DimensionError,
    LadderError,
    NumericAbort,
    NumericError,
    SingularityError,
    SpecError,
)
from .linalg import covariance, mat_inv_spd, mat_log_spd, pca_whiten, sym_eig
from .model import LadderSpec, ParamStore, decode, encode, init_params
from .optim import OptimConfig, TrainTrace, grad_check, train

__version__ = "0.1.0"
