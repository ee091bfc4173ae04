"""Gradient descent with momentum, the per-epoch beta controller, training
traces, and a finite-difference gradient checker."""
import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .cost import EIG_RELAX, _beta_step, cost_and_grad, total_cost
from .data import Dataset, make_rng
from .errors import ConfigError, NumericAbort, NumericError
from .model import init_params

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimConfig:
    """Plain momentum gradient descent.  ``batch=None`` means full batch.

    The beta controller runs every ``beta_interval`` epochs, using the
    smallest eigenvalue observed over that window.
    """

    learning_rate: float = 0.01
    momentum: float = 0.9
    epochs: int = 100
    batch: int = None
    seed: int = 0
    grad_clip: float = None
    beta_interval: int = 1

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ConfigError("learning_rate must be >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch is not None and self.batch < 2:
            raise ConfigError("batch size must be >= 2")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ConfigError("grad_clip must be positive")
        if self.beta_interval < 1:
            raise ConfigError("beta_interval must be >= 1")


@dataclass
class TraceEntry:
    epoch: int
    cost: dict
    lam_min: list
    beta: list
    elapsed: float = field(default=0.0, compare=False)

    def to_dict(self):
        return {"epoch": self.epoch, "cost": self.cost, "lam_min": self.lam_min, "beta": self.beta}


@dataclass
class TrainTrace:
    """One entry per completed epoch.

    ``cost`` is the breakdown at the start of the epoch (before its update);
    ``beta`` is the weight after the epoch's controller step.  Wall-clock time
    is kept in memory only so that trace files are reproducible byte for byte.
    """

    entries: list = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def series(self, key):
        return np.array([e.cost[key] for e in self.entries])

    def c0(self, epoch):
        """``C0`` recorded for the given 1-based epoch."""
        return self.entries[epoch - 1].cost["c0"]

    def write_jsonl(self, path):
        with open(path, "w") as fh:
            for e in self.entries:
                fh.write(json.dumps(e.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def read_jsonl(cls, path):
        with open(path) as fh:
            return cls([TraceEntry(**json.loads(line)) for line in fh if line.strip()])


def _check_finite(breakdown, grad, epoch):
    items = [("c0", breakdown.c0)]
    for name in ("c_layer", "c_sigma", "c_mu"):
        items += [(f"{name}[{l}]", v) for l, v in enumerate(getattr(breakdown, name), start=1)]
    for name, v in items:
        if not np.isfinite(v):
            raise NumericAbort(epoch, name)
    if not np.all(np.isfinite(grad)):
        raise NumericAbort(epoch, "gradient")


def _average(breakdowns, weights):
    first = breakdowns[0]
    avg = {}
    for key, val in first.to_dict().items():
        if key in ("alpha", "beta", "gamma"):
            avg[key] = val
        elif isinstance(val, list):
            rows = np.array([b.to_dict()[key] for b in breakdowns])
            avg[key] = [float(v) for v in weights @ rows]
        else:
            avg[key] = float(weights @ np.array([b.to_dict()[key] for b in breakdowns]))
    return avg


def train(spec, data, cfg, params=None, callback=None, data_init=False):
    """Minimize the ladder cost by momentum gradient descent.

    Each epoch draws fresh corruption noise for every batch, takes one step
    per batch, and then runs the beta controller once.  Runs are fully
    determined by ``cfg.seed`` (and ``params`` if given).

    Returns
    -------
    params : ParamStore
    trace : TrainTrace
    """
    X = data.X if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    if params is None:
        params = init_params(spec, make_rng(cfg.seed, 0), X if data_init else None)
    else:
        params = params.copy()
    noise_rng = make_rng(cfg.seed, 1)
    batch_rng = make_rng(cfg.seed, 2)
    beta, gamma = list(spec.beta0), list(spec.gamma0)
    velocity = np.zeros_like(params.flat)
    trace = TrainTrace()
    T = X.shape[1]
    max_step = None if cfg.grad_clip is None else cfg.learning_rate * cfg.grad_clip
    start = time.perf_counter()
    window_min = None

    for epoch in range(1, cfg.epochs + 1):
        if cfg.batch is None or cfg.batch >= T:
            batches = [slice(None)]
        else:
            order = batch_rng.permutation(T)
            batches = [order[i:i + cfg.batch] for i in range(0, T - cfg.batch + 1, cfg.batch)]
        seen, sizes = [], []
        for idx in batches:
            Xb = X[:, idx]
            noise = noise_rng.standard_normal(Xb.shape)
            try:
                breakdown, grad = cost_and_grad(params, spec, Xb, noise, beta, gamma)
            except NumericError as exc:
                raise NumericAbort(epoch, str(exc)) from exc
            _check_finite(breakdown, grad, epoch)
            if cfg.grad_clip is not None:
                norm = np.linalg.norm(grad)
                if norm > cfg.grad_clip:
                    grad = grad * (cfg.grad_clip / norm)
            velocity = cfg.momentum * velocity - cfg.learning_rate * grad
            if max_step is not None:
                norm = np.linalg.norm(velocity)
                if norm > max_step:
                    velocity = velocity * (max_step / norm)
            params.flat += velocity
            seen.append(breakdown)
            sizes.append(Xb.shape[1])
        if len(seen) == 1:
            cost = seen[0].to_dict()
        else:
            cost = _average(seen, np.array(sizes) / np.sum(sizes))
        lam_min = cost["lam_min"]
        window_min = lam_min if window_min is None else np.minimum(window_min, lam_min)
        if spec.adapt_beta and epoch % cfg.beta_interval == 0:
            beta = [
                _beta_step(lam, b, spec.eig_floor, EIG_RELAX, spec.beta_min, spec.beta_max)
                for lam, b in zip(window_min, beta)
            ]
            gamma = list(beta)
            window_min = None
        trace.entries.append(
            TraceEntry(epoch, cost, lam_min, list(beta), time.perf_counter() - start)
        )
        if callback is not None:
            callback(epoch, params, trace)
        if epoch % 100 == 0:
            log.debug("epoch %d  total %.6g  c0 %.6g", epoch, cost["total"], cost["c0"])
    return params, trace


@dataclass
class GradCheckReport:
    max_rel_err: float
    mean_rel_err: float
    n_coords: int
    step: float
    reliable: bool
    coords: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return {
            "max_rel_err": self.max_rel_err,
            "mean_rel_err": self.mean_rel_err,
            "n_coords": self.n_coords,
            "step": self.step,
            "reliable": self.reliable,
        }


def grad_check(params, spec, X, noise, n_coords=200, step=1e-5, seed=0, beta=None, gamma=None, floor=1e-8):
    """Compare the analytic gradient against central differences.

    The relative error per coordinate is ``|a - n| / max(|a|, |n|, floor)``.
    Steps outside ``[1e-7, 1e-3]`` are still evaluated but flagged as
    unreliable, since truncation or round-off error then dominates.
    """
    _, grad = cost_and_grad(params, spec, X, noise, beta, gamma)
    rng = make_rng(seed, 3)
    n = min(int(n_coords), params.flat.size)
    coords = np.sort(rng.choice(params.flat.size, n, replace=False))
    probe = params.copy()
    errs = []
    for i in coords:
        orig = probe.flat[i]
        probe.flat[i] = orig + step
        up = total_cost(probe, spec, X, noise, beta, gamma)
        probe.flat[i] = orig - step
        down = total_cost(probe, spec, X, noise, beta, gamma)
        probe.flat[i] = orig
        numeric = (up - down) / (2.0 * step)
        errs.append(abs(numeric - grad[i]) / max(abs(numeric), abs(grad[i]), floor))
    errs = np.array(errs)
    return GradCheckReport(
        max_rel_err=float(errs.max()) if n else 0.0,
        mean_rel_err=float(errs.mean()) if n else 0.0,
        n_coords=n,
        step=float(step),
        reliable=bool(1e-7 <= step <= 1e-3),
        coords=coords.tolist(),
    )
