"""Seeded synthetic datasets: scalar source families, the ICA mixture and the
independent-subspace variance mixture.

All randomness comes from :func:`make_rng`, a numpy ``Generator`` over the
Philox4x64 counter-based bit generator, so streams are reproducible across
platforms for a given integer seed.
"""
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import DimensionError
from .linalg import WhiteningTransform, pca_whiten

CSV_FMT = "%.17g"


def make_rng(seed, *stream):
    """Philox generator for ``seed``; extra integers select independent substreams."""
    ss = np.random.SeedSequence([int(seed), *(int(s) for s in stream)])
    return np.random.Generator(np.random.Philox(ss))


class SourceKind(str, Enum):
    GAUSSIAN = "gaussian"
    LAPLACE = "laplace"
    SINUSOID = "sinusoid"


def sample_source(kind, n, rng):
    """Draw ``n`` zero-mean, unit-variance samples of the given source family.

    ``laplace`` has density ``exp(-sqrt(2)|x|) / sqrt(2)``; ``sinusoid`` is
    ``sqrt(2) sin(u)`` with ``u`` uniform on ``[0, 2 pi)``.
    """
    kind = SourceKind(kind)
    n = int(n)
    if n < 1:
        raise ValueError(f"need n >= 1 samples, got {n}")
    if kind is SourceKind.GAUSSIAN:
        return rng.standard_normal(n)
    if kind is SourceKind.LAPLACE:
        return rng.laplace(0.0, 1.0 / np.sqrt(2.0), n)
    return np.sqrt(2.0) * np.sin(rng.uniform(0.0, 2.0 * np.pi, n))


def variance_modulated_sources(n_groups, group_size, n, rng):
    """Gaussian sources whose variance ``exp(v_j)`` is shared within a group.

    Returns ``(S, V, groups)`` with ``S`` of shape ``(n_groups*group_size, n)``,
    the log-variance sources ``V`` of shape ``(n_groups, n)`` and the index sets.
    """
    V = rng.standard_normal((n_groups, n))
    Z = rng.standard_normal((n_groups * group_size, n))
    S = np.exp(0.5 * np.repeat(V, group_size, axis=0)) * Z
    groups = [list(range(j * group_size, (j + 1) * group_size)) for j in range(n_groups)]
    return S, V, groups


def gaussian_mixing(d, n, rng, max_tries=100):
    """I.i.d. standard normal ``d x n`` mixing, redrawn while nearly singular."""
    for _ in range(max_tries):
        A = rng.standard_normal((d, n))
        if d != n:
            return A
        bound = 1e-6 * np.prod(np.linalg.norm(A, axis=0))
        if abs(np.linalg.det(A)) >= bound:
            return A
    raise RuntimeError("could not draw a well-conditioned mixing matrix")


@dataclass
class Dataset:
    """Observations plus whatever ground truth generated them.

    ``X`` is ``d x T`` with one sample per column.  When ``whitening`` is
    set, ``X = whitening.apply(mixing @ sources)``; otherwise
    ``X = mixing @ sources``.
    """

    X: np.ndarray
    sources: np.ndarray = None
    mixing: np.ndarray = None
    groups: list = None
    whitening: WhiteningTransform = None
    kind: str = "custom"
    seed: int = None
    meta: dict = field(default_factory=dict)

    @property
    def effective_mixing(self):
        """Linear map from sources to the observed (possibly whitened) data."""
        if self.mixing is None:
            return None
        if self.whitening is None:
            return self.mixing
        return self.whitening.matrix @ self.mixing

    def __post_init__(self):
        if self.groups is not None:
            flat = sorted(i for g in self.groups for i in g)
            n = self.sources.shape[0] if self.sources is not None else len(flat)
            if flat != list(range(n)):
                raise DimensionError("groups must partition the source indices")


def make_ica_dataset(rng, n_samples=10_000, per_kind=5, seed=None):
    """Unwhitened square mixture of Laplace, sinusoid and Gaussian sources."""
    kinds = [SourceKind.LAPLACE, SourceKind.SINUSOID, SourceKind.GAUSSIAN]
    S = np.vstack([sample_source(k, n_samples, rng) for k in kinds for _ in range(per_kind)])
    n = S.shape[0]
    A = gaussian_mixing(n, n, rng)
    return Dataset(
        X=A @ S,
        sources=S,
        mixing=A,
        kind="ica",
        seed=seed,
        meta={"source_kinds": [k.value for k in kinds for _ in range(per_kind)]},
    )


def make_isa_dataset(rng, n_samples=10_000, n_groups=4, group_size=4, seed=None):
    """Pre-whitened mixture of variance-modulated Gaussian source groups."""
    S, V, groups = variance_modulated_sources(n_groups, group_size, n_samples, rng)
    n = S.shape[0]
    A = gaussian_mixing(n, n, rng)
    X, transform = pca_whiten(A @ S)
    return Dataset(
        X=X,
        sources=S,
        mixing=A,
        groups=groups,
        whitening=transform,
        kind="isa",
        seed=seed,
        meta={"log_variances": V},
    )


def corrupt(X, sigma, rng):
    """Add fresh Gaussian noise ``sigma * N(0, 1)``; ``sigma`` is a scalar or per-row."""
    X = np.asarray(X, dtype=np.float64)
    sigma = noise_scale(sigma, X.shape[0])
    return X + sigma[:, None] * rng.standard_normal(X.shape)


def noise_scale(sigma, d):
    """Broadcast a corruption level to a length-``d`` vector, rejecting negatives."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma < 0):
        raise ValueError("corruption sigma must be nonnegative")
    if sigma.ndim == 0:
        return np.full(d, float(sigma))
    if sigma.shape != (d,):
        raise DimensionError(f"sigma has shape {sigma.shape}, expected ({d},)")
    return sigma


def _write_csv(path, M, prefix):
    M = np.atleast_2d(M)
    header = ",".join(f"{prefix}{j}" for j in range(M.shape[1]))
    np.savetxt(path, M, fmt=CSV_FMT, delimiter=",", header=header, comments="")


def _read_csv(path):
    return np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2))


def save_dataset(ds, directory):
    """Write ``ds`` as CSV files plus ``manifest.json`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = {"X": "X.csv"}
    _write_csv(directory / "X.csv", ds.X, "t")
    if ds.sources is not None:
        _write_csv(directory / "S.csv", ds.sources, "t")
        files["sources"] = "S.csv"
    if ds.mixing is not None:
        _write_csv(directory / "A.csv", ds.mixing, "src")
        files["mixing"] = "A.csv"
    if ds.groups is not None:
        rows = [(i, j) for j, g in enumerate(ds.groups) for i in g]
        with open(directory / "groups.csv", "w") as fh:
            fh.write("source,group\n")
            fh.writelines(f"{i},{j}\n" for i, j in rows)
        files["groups"] = "groups.csv"
    if ds.whitening is not None:
        _write_csv(directory / "whitening_mean.csv", ds.whitening.mean[None, :], "dim")
        _write_csv(directory / "whitening_matrix.csv", ds.whitening.matrix, "dim")
        files["whitening"] = ["whitening_mean.csv", "whitening_matrix.csv"]
    manifest = {
        "kind": ds.kind,
        "seed": ds.seed,
        "dims": {"d": int(ds.X.shape[0]), "T": int(ds.X.shape[1])},
        "files": files,
    }
    with open(directory / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(directory):
    """Inverse of :func:`save_dataset`."""
    directory = Path(directory)
    with open(directory / "manifest.json") as fh:
        manifest = json.load(fh)
    files = manifest["files"]
    kw = {"X": _read_csv(directory / files["X"])}
    if "sources" in files:
        kw["sources"] = _read_csv(directory / files["sources"])
    if "mixing" in files:
        kw["mixing"] = _read_csv(directory / files["mixing"])
    if "groups" in files:
        pairs = np.loadtxt(directory / files["groups"], delimiter=",", skiprows=1, dtype=int, ndmin=2)
        n_groups = int(pairs[:, 1].max()) + 1
        kw["groups"] = [sorted(int(i) for i, j in pairs if j == g) for g in range(n_groups)]
    if "whitening" in files:
        mean_file, matrix_file = files["whitening"]
        kw["whitening"] = WhiteningTransform(
            mean=_read_csv(directory / mean_file)[0],
            matrix=_read_csv(directory / matrix_file),
        )
    return Dataset(kind=manifest["kind"], seed=manifest["seed"], **kw)
