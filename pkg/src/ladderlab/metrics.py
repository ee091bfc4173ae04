"""Evaluation quantities: normalized loadings, dominant-loading angles,
principal-subspace leakage, subspace block scores and gate response curves."""
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, SpecError
from .linalg import covariance, sym_eig
from .model import SigmoidGate, _orthonormal_rows


@dataclass(frozen=True)
class LoadingReport:
    normalized: np.ndarray
    dominant: np.ndarray
    mean_dominant: float
    angles_deg: np.ndarray

    def top_mean(self, k=10):
        """Mean of the ``k`` largest dominant loadings."""
        return float(np.mean(np.sort(self.dominant)[::-1][:k]))

    def to_dict(self, k=10):
        return {
            "dominant": self.dominant.tolist(),
            "mean_dominant": self.mean_dominant,
            f"top{k}_mean": self.top_mean(k),
            "angles_deg": self.angles_deg.tolist(),
            "mean_angle_deg": float(np.mean(self.angles_deg)),
        }


def loading_report(W, A_orig):
    """Row-normalize ``W @ A_orig`` and summarize each row by its largest entry."""
    W = np.atleast_2d(np.asarray(W, dtype=np.float64))
    A_orig = np.atleast_2d(np.asarray(A_orig, dtype=np.float64))
    if W.shape[1] != A_orig.shape[0]:
        raise DimensionError(f"cannot multiply {W.shape} by {A_orig.shape}")
    loading = W @ A_orig
    norms = np.linalg.norm(loading, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise DimensionError(f"degenerate (all-zero) loading rows: {zero.tolist()}")
    normalized = loading / norms[:, None]
    dominant = np.minimum(np.max(np.abs(normalized), axis=1), 1.0)
    return LoadingReport(
        normalized=normalized,
        dominant=dominant,
        mean_dominant=float(dominant.mean()),
        angles_deg=np.degrees(np.arccos(dominant)),
    )


def dominant_loading_to_angle(c):
    """Angle in degrees whose cosine is the dominant loading ``c``."""
    if not 0.0 < c <= 1.0:
        raise ValueError(f"dominant loading must lie in (0, 1], got {c}")
    return float(np.degrees(np.arccos(c)))


def subspace_leakage(W, X, k_principal):
    """Fraction of the row space of ``W`` outside the top principal subspace of ``X``.

    The rows of ``W`` are orthonormalized first, so the result depends only
    on the subspace they span: ``1 - ||Q P||_F^2 / rank`` with ``P`` the
    projector onto the ``k_principal`` leading eigenvectors of ``cov(X)``.
    """
    W = np.atleast_2d(np.asarray(W, dtype=np.float64))
    d = W.shape[1]
    if not 0 <= k_principal <= d:
        raise DimensionError(f"k_principal={k_principal} out of range for d={d}")
    eig = sym_eig(covariance(X, center=True), name="data covariance")
    U = eig.eigenvectors[:, d - k_principal:]
    Q, R = np.linalg.qr(W.T)
    rank = int(np.sum(np.abs(np.diag(R)) > 1e-10 * np.abs(R).max()))
    if rank == 0:
        raise DimensionError("W has rank zero")
    Q = Q[:, np.abs(np.diag(R)) > 1e-10 * np.abs(R).max()]
    inside = np.sum((U.T @ Q) ** 2) / rank
    return float(np.clip(1.0 - inside, 0.0, 1.0))


@dataclass(frozen=True)
class BlockScore:
    assignment: np.ndarray
    mass: np.ndarray
    mean_mass: float
    order: np.ndarray

    def to_dict(self):
        return {
            "assignment": self.assignment.tolist(),
            "mass": self.mass.tolist(),
            "mean_mass": self.mean_mass,
            "order": self.order.tolist(),
        }


def _check_partition(groups, n):
    flat = sorted(i for g in groups for i in g)
    if flat != list(range(n)):
        raise DimensionError(f"groups do not partition {n} source indices")


def block_score(report, groups):
    """Assign each hidden unit to the source group holding most of its squared loading."""
    sq = report.normalized**2
    _check_partition(groups, sq.shape[1])
    masses = np.stack([sq[:, list(g)].sum(axis=1) for g in groups], axis=1)
    assignment = np.argmax(masses, axis=1)
    mass = masses[np.arange(sq.shape[0]), assignment]
    order = np.lexsort((-mass, assignment))
    return BlockScore(assignment, mass, float(mass.mean()), order)


def ordered_squared_loadings(report, score, groups):
    """Squared normalized loadings, rows sorted by group and sources by group order."""
    cols = [i for g in groups for i in g]
    return (report.normalized**2)[score.order][:, cols]


def random_loading_baseline(A_orig, n_hidden, n_trials, rng, k=10):
    """Top-``k`` mean dominant loading of random orthonormal ``n_hidden x d`` maps."""
    d = A_orig.shape[0]
    vals = [
        loading_report(_orthonormal_rows(rng, n_hidden, d), A_orig).top_mean(k)
        for _ in range(n_trials)
    ]
    return float(np.mean(vals)), float(np.std(vals))


def random_block_baseline(A_orig, groups, n_hidden, n_trials, rng):
    """Mean within-group mass of random orthonormal maps."""
    d = A_orig.shape[0]
    vals = [
        block_score(loading_report(_orthonormal_rows(rng, n_hidden, d), A_orig), groups).mean_mass
        for _ in range(n_trials)
    ]
    return float(np.mean(vals)), float(np.std(vals))


def sigmoid_response_curve(params, spec, unit, sweep_dim, grid=None, layer=1):
    """Gate value of ``unit`` at ``layer`` while one lower unit sweeps ``grid``.

    All activations of ``layer`` are zero except ``sweep_dim``; the higher
    layers are computed by the encoders and the top-down reconstruction of
    ``layer + 1`` is fed to the gate.
    """
    if grid is None:
        grid = np.linspace(-4.0, 4.0, 81)
    grid = np.asarray(grid, dtype=np.float64)
    if layer >= spec.L or not isinstance(spec.decoders[layer], SigmoidGate):
        raise SpecError(f"decoder at layer {layer} is not a sigmoid gate")
    H = np.zeros((spec.layer_dims[layer], grid.size))
    H[sweep_dim] = grid
    hs = [H]
    for l in range(layer + 1, spec.L + 1):
        hs.append(spec.encoders[l - 1].forward(params, l, hs[-1])[0])
    above, _ = spec.decoders[spec.L].forward(params, spec.L, hs[-1])
    for l in range(spec.L - 1, layer, -1):
        above, _ = spec.decoders[l].forward(params, l, hs[l - layer], above)
    gate = spec.decoders[layer].gate(params, layer, above)
    return grid, gate[unit]
