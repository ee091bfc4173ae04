"""Composite ladder cost and its exact gradient.

The total cost is

    C = C0 + sum_l alpha_l C_l + beta_l C_sigma_l + gamma_l C_mu_l

where ``C_l`` is the mean squared distance between clean activations and
their reconstructions, ``C_sigma_l = tr(S - log S - I)`` for the uncentered
second-moment matrix ``S`` of the clean activations, and ``C_mu_l`` the squared
norm of their mean.  Gradients flow through both encoder paths: the clean
path receives the per-layer, decorrelation and mean terms; the corrupted path
receives whatever the decoder passes back through its lateral inputs.
"""
from dataclasses import dataclass, field

import numpy as np

from .data import noise_scale
from .errors import DimensionError, SingularityError
from .linalg import SPD_FLOOR, covariance, mat_inv_spd, sym_eig
from .model import _check_input, decode_with_cache, encode_with_cache

BETA_UP = 2.0
BETA_DOWN = 1.5
BETA_MIN = 1e-4
BETA_MAX = 1e3
EIG_RELAX = 0.9


@dataclass
class CostBreakdown:
    c0: float
    c_layer: list
    c_sigma: list
    c_mu: list
    alpha: list
    beta: list
    gamma: list
    total: float
    lam_min: list = field(default_factory=list)
    sigmas: list = field(default_factory=list, repr=False, compare=False)

    def recompose(self):
        return self.c0 + sum(
            a * cl + b * cs + g * cm
            for a, b, g, cl, cs, cm in zip(
                self.alpha, self.beta, self.gamma, self.c_layer, self.c_sigma, self.c_mu
            )
        )

    def to_dict(self):
        return {
            "c0": self.c0,
            "c_layer": list(self.c_layer),
            "c_sigma": list(self.c_sigma),
            "c_mu": list(self.c_mu),
            "alpha": list(self.alpha),
            "beta": list(self.beta),
            "gamma": list(self.gamma),
            "total": self.total,
            "lam_min": list(self.lam_min),
        }


def c_layer(h, h_hat):
    """Mean over samples of the squared Euclidean reconstruction error."""
    h = np.asarray(h, dtype=np.float64)
    h_hat = np.asarray(h_hat, dtype=np.float64)
    if h.shape != h_hat.shape:
        raise DimensionError(f"shape mismatch {h.shape} vs {h_hat.shape}")
    diff = h - h_hat
    return float(np.sum(diff * diff) / h.shape[-1])


def _phi_sum(lam):
    return float(np.sum(lam - np.log(lam) - 1.0))


def _spd_eigs(Sigma, name):
    eig = sym_eig(Sigma, name=name)
    bad = eig.eigenvalues[eig.eigenvalues <= SPD_FLOOR]
    if bad.size:
        raise SingularityError(
            f"{name} has collapsed: eigenvalue {bad[0]:.3e}", eigenvalues=bad, where=name
        )
    return eig


def c_sigma(Sigma):
    """``tr(S - log S - I)``: zero at the identity, infinite as an eigenvalue goes to 0."""
    return _phi_sum(_spd_eigs(Sigma, "covariance").eigenvalues)


def c_sigma_grad(Sigma):
    """Gradient ``I - S^{-1}`` of :func:`c_sigma` with respect to ``S``."""
    Sigma = np.asarray(Sigma, dtype=np.float64)
    return np.eye(Sigma.shape[0]) - mat_inv_spd(Sigma, name="covariance")


def c_sigma_sos(Sigma):
    """Sum-of-squares alternative ``sum_ij (S_ij - delta_ij)^2``."""
    Sigma = np.asarray(Sigma, dtype=np.float64)
    D = Sigma - np.eye(Sigma.shape[0])
    return float(np.sum(D * D))


def c_mu(h):
    """Squared norm of the per-dimension sample mean."""
    mu = np.asarray(h, dtype=np.float64).mean(axis=1)
    return float(mu @ mu)


def cost_and_grad(params, spec, X, noise, beta=None, gamma=None, grad=True):
    """Evaluate the ladder cost for a fixed noise draw.

    Parameters
    ----------
    params : ParamStore
    spec : LadderSpec
    X : ndarray, shape (d0, T)
        Clean input, one sample per column.
    noise : ndarray, shape (d0, T)
        Standard normal draw; the corrupted input is ``X + sigma * noise``.
    beta, gamma : sequence, optional
        Current decorrelation and mean weights (default: ``spec.beta0`` and
        ``spec.gamma0``).
    grad : bool
        Skip the reverse pass when False.

    Returns
    -------
    breakdown : CostBreakdown
    gradient : ndarray or None
        Gradient of ``breakdown.total`` laid out like ``params.flat``.
    """
    X = _check_input(spec, X)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != X.shape:
        raise DimensionError(f"noise has shape {noise.shape}, input {X.shape}")
    L, T = spec.L, X.shape[1]
    alpha = list(spec.alpha)
    beta = list(spec.beta0 if beta is None else beta)
    gamma = list(spec.gamma0 if gamma is None else gamma)

    sigma = noise_scale(spec.sigma_corrupt, X.shape[0])
    X_tilde = X + sigma[:, None] * noise
    hs, clean_caches = encode_with_cache(params, spec, X)
    hts, noisy_caches = encode_with_cache(params, spec, X_tilde)
    recon, dec_caches = decode_with_cache(params, spec, hts)

    c0 = c_layer(X, recon[0])
    cl, cs, cm, lam_min, sigmas, inverses, means = [], [], [], [], [], [], []
    for l in range(1, L + 1):
        h = hs[l]
        name = f"layer {l} covariance"
        S = covariance(h)
        eig = _spd_eigs(S, name)
        cl.append(c_layer(h, recon[l]))
        cs.append(_phi_sum(eig.eigenvalues))
        mu = h.mean(axis=1)
        cm.append(float(mu @ mu))
        lam_min.append(float(eig.eigenvalues[0]))
        sigmas.append(S)
        inverses.append(eig.apply(np.reciprocal))
        means.append(mu)
    total = c0 + sum(a * x + b * y + g * z for a, b, g, x, y, z in zip(alpha, beta, gamma, cl, cs, cm))
    breakdown = CostBreakdown(
        c0=c0, c_layer=cl, c_sigma=cs, c_mu=cm,
        alpha=alpha, beta=beta, gamma=gamma, total=total,
        lam_min=lam_min, sigmas=sigmas,
    )
    if not grad:
        return breakdown, None

    g = params.zeros_like()
    weights = [1.0] + alpha
    g_recon = [-2.0 / T * w * (hs[l] - recon[l]) for l, w in enumerate(weights)]
    g_noisy = [np.zeros_like(h) for h in hts]
    g_clean = [None] + [
        2.0 / T * (
            alpha[l - 1] * (hs[l] - recon[l])
            + beta[l - 1] * (hs[l] - inverses[l - 1] @ hs[l])
            + gamma[l - 1] * means[l - 1][:, None]
        )
        for l in range(1, L + 1)
    ]

    for l in range(L + 1):
        g_lat, g_above = spec.decoders[l].backward(params, l, dec_caches[l], g_recon[l], g)
        if g_lat is not None:
            g_noisy[l] += g_lat
        if l < L:
            g_recon[l + 1] = g_recon[l + 1] + g_above

    for l in range(L, 0, -1):
        enc = spec.encoders[l - 1]
        gx = enc.backward(params, l, noisy_caches[l - 1], g_noisy[l], g)
        if l > 1:
            g_noisy[l - 1] += gx
        gx = enc.backward(params, l, clean_caches[l - 1], g_clean[l], g)
        if l > 1:
            g_clean[l - 1] = g_clean[l - 1] + gx

    return breakdown, g.flat


def total_cost(params, spec, X, noise, beta=None, gamma=None):
    """Scalar total cost; convenience wrapper used by gradient checks."""
    return cost_and_grad(params, spec, X, noise, beta, gamma, grad=False)[0].total


def _beta_step(lam_min, beta, floor, relax, lo=BETA_MIN, hi=BETA_MAX):
    if lam_min < floor:
        return min(BETA_UP * beta, hi)
    if lam_min > relax:
        return max(beta / BETA_DOWN, lo)
    return beta


def adjust_beta(sigma_list, beta, gamma=None, floor=0.7, relax=EIG_RELAX, lo=BETA_MIN, hi=BETA_MAX):
    """Hysteresis controller keeping the smallest covariance eigenvalue above ``floor``.

    ``beta`` doubles while ``lambda_min < floor`` and shrinks by 1.5 once
    ``lambda_min > relax``, staying within ``[lo, hi]``.  The incoming
    ``gamma`` is ignored: it always follows ``beta``.
    """
    new_beta = [
        _beta_step(float(sym_eig(S).eigenvalues[0]), float(b), floor, relax, lo, hi)
        for S, b in zip(sigma_list, beta)
    ]
    return new_beta, list(new_beta)
