"""Ladder network structure: encoder maps, decoder maps with lateral inputs,
a flat parameter store, and the clean/corrupted forward passes.

Layer ``l`` runs from 0 (the input) to ``L``.  ``encoders[l-1]`` is the
map ``f^(l)`` from layer ``l-1`` to ``l``; ``decoders[l]`` is ``g^(l)``,
which produces the reconstruction of layer ``l``.  The top decoder sees only
the corrupted top activations; every lower decoder combines the lateral
(corrupted) activations of its own layer with the reconstruction from above.

Each map kind carries its own ``forward``/``backward`` so that the cost
module can run an exact reverse pass over the graph.
"""
import json
from dataclasses import dataclass
from pathlib import Path
from typing import ClassVar

import numpy as np

from .errors import DimensionError, SpecError

DEFAULT_XI = (0.5, 0.1, 1.0, 0.0, 0.0)


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _orthonormal_rows(rng, rows, cols):
    """Orthonormal rows (or columns, if rows > cols) from QR of a Gaussian draw."""
    G = rng.standard_normal((max(rows, cols), min(rows, cols)))
    Q, R = np.linalg.qr(G)
    Q = Q * np.sign(np.diag(R))
    return Q.T if rows <= cols else Q


# ---------------------------------------------------------------- encoders


@dataclass(frozen=True)
class LinearMap:
    """``f(x) = W x`` with no bias."""

    kind: ClassVar[str] = "linear"

    def blocks(self, l, d_in, d_out):
        return [(f"f{l}.W", (d_out, d_in))]

    def init(self, p, l, rng):
        W = p[f"f{l}.W"]
        W[...] = _orthonormal_rows(rng, *W.shape)

    def forward(self, p, l, x):
        return p[f"f{l}.W"] @ x, x

    def backward(self, p, l, x, gy, g):
        g[f"f{l}.W"] += gy @ x.T
        return p[f"f{l}.W"].T @ gy

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class SoftplusMLP:
    """``f(x) = W_b softplus(W_a x + b_a) + b_b``."""

    hidden: int = 50
    kind: ClassVar[str] = "softplus_mlp"

    def blocks(self, l, d_in, d_out):
        H = self.hidden
        return [
            (f"f{l}.Wa", (H, d_in)),
            (f"f{l}.ba", (H,)),
            (f"f{l}.Wb", (d_out, H)),
            (f"f{l}.bb", (d_out,)),
        ]

    def init(self, p, l, rng):
        Wa, Wb = p[f"f{l}.Wa"], p[f"f{l}.Wb"]
        Wa[...] = rng.standard_normal(Wa.shape) / np.sqrt(Wa.shape[1])
        Wb[...] = rng.standard_normal(Wb.shape) / np.sqrt(Wb.shape[1])

    def forward(self, p, l, x):
        z = p[f"f{l}.Wa"] @ x + p[f"f{l}.ba"][:, None]
        u = softplus(z)
        y = p[f"f{l}.Wb"] @ u + p[f"f{l}.bb"][:, None]
        return y, (x, z, u)

    def backward(self, p, l, cache, gy, g):
        x, z, u = cache
        g[f"f{l}.Wb"] += gy @ u.T
        g[f"f{l}.bb"] += gy.sum(axis=1)
        gz = (p[f"f{l}.Wb"].T @ gy) * sigmoid(z)
        g[f"f{l}.Wa"] += gz @ x.T
        g[f"f{l}.ba"] += gz.sum(axis=1)
        return p[f"f{l}.Wa"].T @ gz

    def to_dict(self):
        return {"kind": self.kind, "hidden": self.hidden}


# ---------------------------------------------------------------- decoders


@dataclass(frozen=True)
class TanhGain:
    """Unit-wise ``a_i h_i + b_i tanh(h_i)``; top layer only."""

    kind: ClassVar[str] = "tanh_gain"
    top: ClassVar[bool] = True

    def blocks(self, l, d, d_above):
        return [(f"g{l}.a", (d,)), (f"g{l}.b", (d,))]

    def init(self, p, l, rng):
        p[f"g{l}.a"][...] = 0.5

    def forward(self, p, l, lat, above=None):
        th = np.tanh(lat)
        return p[f"g{l}.a"][:, None] * lat + p[f"g{l}.b"][:, None] * th, (lat, th)

    def backward(self, p, l, cache, gy, g):
        lat, th = cache
        a, b = p[f"g{l}.a"][:, None], p[f"g{l}.b"][:, None]
        g[f"g{l}.a"] += np.sum(gy * lat, axis=1)
        g[f"g{l}.b"] += np.sum(gy * th, axis=1)
        return gy * (a + b * (1.0 - th * th)), None

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class ScalarGain:
    """Unit-wise ``a_i h_i``; top layer only."""

    kind: ClassVar[str] = "scalar_gain"
    top: ClassVar[bool] = True

    def blocks(self, l, d, d_above):
        return [(f"g{l}.a", (d,))]

    def init(self, p, l, rng):
        p[f"g{l}.a"][...] = 0.5

    def forward(self, p, l, lat, above=None):
        return p[f"g{l}.a"][:, None] * lat, lat

    def backward(self, p, l, lat, gy, g):
        g[f"g{l}.a"] += np.sum(gy * lat, axis=1)
        return gy * p[f"g{l}.a"][:, None], None

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class TanhNeuron:
    """Shared five-parameter denoiser ``xi1 x + xi2 tanh(xi3 x + xi4) + xi5``.

    Used as the only decoder of a network without hidden layers.
    """

    xi0: tuple = DEFAULT_XI
    kind: ClassVar[str] = "tanh_neuron"
    top: ClassVar[bool] = True

    def blocks(self, l, d, d_above):
        return [(f"g{l}.xi", (5,))]

    def init(self, p, l, rng):
        p[f"g{l}.xi"][...] = self.xi0

    def forward(self, p, l, lat, above=None):
        xi = p[f"g{l}.xi"]
        th = np.tanh(xi[2] * lat + xi[3])
        return xi[0] * lat + xi[1] * th + xi[4], (lat, th)

    def backward(self, p, l, cache, gy, g):
        lat, th = cache
        xi = p[f"g{l}.xi"]
        dth = gy * xi[1] * (1.0 - th * th)
        g[f"g{l}.xi"] += [
            np.sum(gy * lat),
            np.sum(gy * th),
            np.sum(dth * lat),
            np.sum(dth),
            np.sum(gy),
        ]
        return gy * xi[0] + dth * xi[2], None

    def to_dict(self):
        return {"kind": self.kind, "xi0": list(self.xi0)}


@dataclass(frozen=True)
class SigmoidGate:
    """``sigmoid(A_i h_above + b_i) * h_i``: top-down modulation of the lateral path."""

    kind: ClassVar[str] = "sigmoid_gate"
    top: ClassVar[bool] = False

    def blocks(self, l, d, d_above):
        return [(f"g{l}.A", (d, d_above)), (f"g{l}.b", (d,))]

    def init(self, p, l, rng):
        pass

    def gate(self, p, l, above):
        return sigmoid(p[f"g{l}.A"] @ above + p[f"g{l}.b"][:, None])

    def forward(self, p, l, lat, above):
        s = self.gate(p, l, above)
        return s * lat, (lat, above, s)

    def backward(self, p, l, cache, gy, g):
        lat, above, s = cache
        gz = gy * lat * s * (1.0 - s)
        g[f"g{l}.A"] += gz @ above.T
        g[f"g{l}.b"] += gz.sum(axis=1)
        return gy * s, p[f"g{l}.A"].T @ gz

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class LinearLateral:
    """``A h_above + B h`` where ``B`` is the lateral shortcut.

    ``lateral=False`` drops ``B`` entirely (the no-shortcut ablation).
    """

    lateral: bool = True
    kind: ClassVar[str] = "linear_lateral"
    top: ClassVar[bool] = False

    def blocks(self, l, d, d_above):
        out = [(f"g{l}.A", (d, d_above))]
        if self.lateral:
            out.append((f"g{l}.B", (d, d)))
        return out

    def init(self, p, l, rng):
        pass

    def forward(self, p, l, lat, above):
        y = p[f"g{l}.A"] @ above
        if self.lateral:
            y = y + p[f"g{l}.B"] @ lat
        return y, (lat, above)

    def backward(self, p, l, cache, gy, g):
        lat, above = cache
        g[f"g{l}.A"] += gy @ above.T
        glat = None
        if self.lateral:
            g[f"g{l}.B"] += gy @ lat.T
            glat = p[f"g{l}.B"].T @ gy
        return glat, p[f"g{l}.A"].T @ gy

    def to_dict(self):
        return {"kind": self.kind, "lateral": self.lateral}


ENCODER_KINDS = {k.kind: k for k in (LinearMap, SoftplusMLP)}
DECODER_KINDS = {k.kind: k for k in (TanhGain, ScalarGain, TanhNeuron, SigmoidGate, LinearLateral)}
DECODER_KINDS["top_tanh_gain"] = TanhGain


def _kind_from(obj, table, what):
    if isinstance(obj, str):
        obj = {"kind": obj}
    if not isinstance(obj, dict):
        return obj
    obj = dict(obj)
    tag = obj.pop("kind", None)
    if tag not in table:
        raise SpecError(f"unknown {what} kind {tag!r}; choose from {sorted(table)}")
    if "xi0" in obj:
        obj["xi0"] = tuple(obj["xi0"])
    return table[tag](**obj)


# ---------------------------------------------------------------- spec


@dataclass(frozen=True)
class LadderSpec:
    """Declarative description of a ladder network and its cost weights.

    ``decoders`` is indexed by layer: ``decoders[0]`` reconstructs the input.
    ``alpha``, ``beta0`` and ``gamma0`` have one entry per hidden layer
    ``1..L``.  ``sigma_corrupt`` is a scalar or one value per input dimension.
    With ``adapt_beta=False`` the decorrelation weights stay at ``beta0``;
    otherwise the controller keeps them within ``[beta_min, beta_max]``.
    """

    layer_dims: tuple
    encoders: tuple
    decoders: tuple
    alpha: tuple = None
    beta0: tuple = None
    gamma0: tuple = None
    sigma_corrupt: object = 0.5
    eig_floor: float = 0.7
    adapt_beta: bool = True
    beta_min: float = 1e-4
    beta_max: float = 1e3

    def __post_init__(self):
        L = len(self.layer_dims) - 1
        fix = object.__setattr__
        fix(self, "layer_dims", tuple(int(d) for d in self.layer_dims))
        fix(self, "encoders", tuple(_kind_from(e, ENCODER_KINDS, "encoder") for e in self.encoders))
        fix(self, "decoders", tuple(_kind_from(g, DECODER_KINDS, "decoder") for g in self.decoders))
        for name, default in (("alpha", 1.0), ("beta0", 1.0), ("gamma0", None)):
            val = getattr(self, name)
            if val is None:
                val = self.beta0 if name == "gamma0" else (default,) * L
            fix(self, name, tuple(float(v) for v in np.broadcast_to(val, (L,))))
        sigma = self.sigma_corrupt
        fix(self, "sigma_corrupt", float(sigma) if np.ndim(sigma) == 0 else tuple(float(s) for s in sigma))
        self.validate()

    @property
    def L(self):
        return len(self.layer_dims) - 1

    def validate(self):
        L = self.L
        if L < 0 or any(d < 1 for d in self.layer_dims):
            raise SpecError(f"bad layer dims {self.layer_dims}")
        if len(self.encoders) != L:
            raise SpecError(f"need {L} encoders, got {len(self.encoders)}")
        if len(self.decoders) != L + 1:
            raise SpecError(f"need {L + 1} decoders, got {len(self.decoders)}")
        for e in self.encoders:
            if type(e) not in ENCODER_KINDS.values():
                raise SpecError(f"{e!r} is not an encoder kind")
        for l, g in enumerate(self.decoders):
            if type(g) not in DECODER_KINDS.values():
                raise SpecError(f"{g!r} is not a decoder kind")
            if g.top != (l == L):
                where = "top" if l == L else f"layer {l}"
                raise SpecError(f"decoder {g.kind} cannot be used at {where}")
        for name in ("alpha", "beta0", "gamma0"):
            if any(v < 0 for v in getattr(self, name)):
                raise SpecError(f"{name} must be nonnegative")
        if not 0 < self.beta_min <= self.beta_max:
            raise SpecError("need 0 < beta_min <= beta_max")
        if np.any(np.asarray(self.sigma_corrupt) < 0):
            raise SpecError("sigma_corrupt must be nonnegative")
        if np.ndim(self.sigma_corrupt) and len(self.sigma_corrupt) != self.layer_dims[0]:
            raise SpecError("per-dimension sigma_corrupt must match the input dimension")

    def to_dict(self):
        return {
            "layer_dims": list(self.layer_dims),
            "encoders": [e.to_dict() for e in self.encoders],
            "decoders": [g.to_dict() for g in self.decoders],
            "alpha": list(self.alpha),
            "beta0": list(self.beta0),
            "gamma0": list(self.gamma0),
            "sigma_corrupt": self.sigma_corrupt if np.ndim(self.sigma_corrupt) == 0 else list(self.sigma_corrupt),
            "eig_floor": self.eig_floor,
            "adapt_beta": self.adapt_beta,
            "beta_min": self.beta_min,
            "beta_max": self.beta_max,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


# ---------------------------------------------------------------- params


class ParamStore:
    """Flat float64 vector with named, non-overlapping blocks.

    ``store[name]`` is a writable view into ``store.flat``.
    """

    def __init__(self, index, flat=None):
        self.index = dict(index)
        size = sum(int(np.prod(shape)) for _, shape in self.index.values())
        if flat is None:
            flat = np.zeros(size)
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (size,):
            raise DimensionError(f"flat vector has shape {flat.shape}, layout needs ({size},)")
        self.flat = flat

    @classmethod
    def for_spec(cls, spec, flat=None):
        index, offset = {}, 0
        dims = spec.layer_dims
        blocks = []
        for l, enc in enumerate(spec.encoders, start=1):
            blocks += enc.blocks(l, dims[l - 1], dims[l])
        for l, dec in enumerate(spec.decoders):
            blocks += dec.blocks(l, dims[l], dims[l + 1] if l < spec.L else 0)
        for name, shape in blocks:
            index[name] = (offset, tuple(shape))
            offset += int(np.prod(shape))
        return cls(index, flat)

    def __getitem__(self, name):
        offset, shape = self.index[name]
        return self.flat[offset:offset + int(np.prod(shape))].reshape(shape)

    def __setitem__(self, name, value):
        self[name][...] = value

    def __contains__(self, name):
        return name in self.index

    def names(self):
        return list(self.index)

    def copy(self):
        return ParamStore(self.index, self.flat.copy())

    def zeros_like(self):
        return ParamStore(self.index)

    def __repr__(self):
        return f"ParamStore({len(self.index)} blocks, {self.flat.size} values)"


def init_params(spec, rng, X=None, decoder_scale=0.0):
    """Initial parameters: orthonormal linear encoders, scaled Gaussian MLPs,
    gains of 0.5 and zero top-down/lateral decoder weights.

    A positive ``decoder_scale`` replaces the zero decoder matrices ``A`` and
    ``B`` by Gaussian draws with standard deviation ``decoder_scale / sqrt(fan_in)``.

    If training data ``X`` is given and the first encoder is linear, its rows
    are made orthonormal in the whitened coordinates of ``X`` instead, so the
    first hidden layer starts with unit second-moment matrix.  For data that
    is already white this coincides with the plain orthonormal draw.
    """
    p = ParamStore.for_spec(spec)
    for l, enc in enumerate(spec.encoders, start=1):
        enc.init(p, l, rng)
    for l, dec in enumerate(spec.decoders):
        dec.init(p, l, rng)
    if decoder_scale < 0:
        raise SpecError("decoder_scale must be nonnegative")
    if decoder_scale > 0:
        for l in range(len(spec.decoders)):
            for key in (f"g{l}.A", f"g{l}.B"):
                if key in p:
                    shape = p[key].shape
                    p[key] = rng.standard_normal(shape) * (decoder_scale / np.sqrt(shape[1]))
    if X is not None and spec.L >= 1 and isinstance(spec.encoders[0], LinearMap):
        from .linalg import covariance, sym_eig

        eig = sym_eig(covariance(_check_input(spec, X)), name="input second moment")
        p["f1.W"] = p["f1.W"] @ eig.apply(lambda lam: 1.0 / np.sqrt(lam))
    return p


# ---------------------------------------------------------------- forward


def _check_input(spec, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != spec.layer_dims[0]:
        raise DimensionError(f"input has shape {X.shape}, network expects {spec.layer_dims[0]} rows")
    return X


def encode_with_cache(params, spec, X):
    hs, caches = [_check_input(spec, X)], []
    for l, enc in enumerate(spec.encoders, start=1):
        y, cache = enc.forward(params, l, hs[-1])
        hs.append(y)
        caches.append(cache)
    return hs, caches


def encode(params, spec, X):
    """Activations ``[h^(0), ..., h^(L)]`` with ``h^(0) = X``."""
    return encode_with_cache(params, spec, X)[0]


def decode_with_cache(params, spec, lateral):
    L = spec.L
    if len(lateral) != L + 1:
        raise DimensionError(f"need {L + 1} lateral activations, got {len(lateral)}")
    recon = [None] * (L + 1)
    caches = [None] * (L + 1)
    recon[L], caches[L] = spec.decoders[L].forward(params, L, lateral[L])
    for l in range(L - 1, -1, -1):
        recon[l], caches[l] = spec.decoders[l].forward(params, l, lateral[l], recon[l + 1])
    return recon, caches


def decode(params, spec, lateral):
    """Reconstructions indexed by layer; ``result[0]`` is the input estimate.

    ``lateral`` holds the corrupted activations ``[h~^(0), ..., h~^(L)]``.
    """
    return decode_with_cache(params, spec, lateral)[0]


def scalar_denoiser(xi, x_tilde):
    """``xi1 x + xi2 tanh(xi3 x + xi4) + xi5`` elementwise."""
    xi = np.asarray(xi, dtype=np.float64)
    x = np.asarray(x_tilde, dtype=np.float64)
    return xi[0] * x + xi[1] * np.tanh(xi[2] * x + xi[3]) + xi[4]


def gauss_optimal_denoiser(sigma_x, sigma_n, x_tilde):
    """Posterior mean of a zero-mean Gaussian signal under Gaussian noise."""
    if sigma_x <= 0 or sigma_n <= 0:
        raise ValueError("signal and noise standard deviations must be positive")
    gain = sigma_x**2 / (sigma_x**2 + sigma_n**2)
    return gain * np.asarray(x_tilde, dtype=np.float64)


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(path, spec, params, seed=None, **extra):
    doc = {
        "version": 1,
        "spec": spec.to_dict(),
        "seed": seed,
        "flat_params": [float(v) for v in params.flat],
    }
    doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_checkpoint(path):
    """Return ``(spec, params, doc)`` from a checkpoint written by :func:`save_checkpoint`."""
    with open(Path(path)) as fh:
        doc = json.load(fh)
    if doc.get("version") != 1:
        raise SpecError(f"unsupported checkpoint version {doc.get('version')!r}")
    spec = LadderSpec.from_dict(doc["spec"])
    return spec, ParamStore.for_spec(spec, np.array(doc["flat_params"], dtype=np.float64)), doc
