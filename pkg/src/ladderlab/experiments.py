"""The three synthetic experiments and the gradient check, as pure functions
of a configuration dictionary.

Each ``run_*`` returns a :class:`RunResult`; nothing is written to disk here.
Configurations are nested dictionaries (see the bundled ``configs/*.json``);
:func:`load_config` merges user overrides into the bundled defaults.
"""
import copy
import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .data import make_ica_dataset, make_isa_dataset, make_rng, sample_source
from .errors import ConfigError
from .metrics import (
    block_score,
    loading_report,
    ordered_squared_loadings,
    random_block_baseline,
    random_loading_baseline,
    sigmoid_response_curve,
    subspace_leakage,
)
from .model import (
    LadderSpec,
    LinearLateral,
    LinearMap,
    ScalarGain,
    SigmoidGate,
    SoftplusMLP,
    TanhGain,
    TanhNeuron,
    gauss_optimal_denoiser,
    init_params,
    scalar_denoiser,
)
from .optim import OptimConfig, grad_check, train

EXPERIMENTS = ("denoise1d", "ica", "variance", "gradcheck")

# seed streams for data generation; training uses streams 0-3 of the same seed
_DATA_STREAM = 10


@dataclass
class Check:
    """One acceptance threshold evaluated on a run."""

    name: str
    value: object
    threshold: str
    passed: bool

    def to_dict(self):
        return {"name": self.name, "value": self.value, "threshold": self.threshold, "passed": self.passed}


@dataclass
class RunResult:
    """Everything a run produces.

    ``tables`` maps a file stem to ``(header, rows)``; ``traces`` maps a stem
    to a :class:`~ladderlab.optim.TrainTrace`; ``checkpoints`` maps a stem to
    ``(spec, params)``.
    """

    experiment: str
    config: dict
    metrics: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    traces: dict = field(default_factory=dict)
    checkpoints: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)


# ---------------------------------------------------------------- configuration


def default_config(experiment):
    """The bundled configuration for ``experiment`` as a fresh dictionary."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    text = resources.files("ladderlab").joinpath("configs", f"{experiment}.json").read_text()
    return json.loads(text)


def merge(base, override):
    """Recursive dictionary merge; keys in ``override`` must already exist in ``base``."""
    out = copy.deepcopy(base)
    for key, val in override.items():
        if key not in out:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(out[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key {key!r} expects an object")
            out[key] = merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def parse_assignment(text):
    """``"optim.learning_rate=0.01"`` -> ``{"optim": {"learning_rate": 0.01}}``.

    The value is parsed as JSON when possible and kept as a string otherwise.
    """
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    path, raw = text.split("=", 1)
    keys = path.strip().split(".")
    if not all(keys):
        raise ConfigError(f"bad override path {path!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    out = value
    for key in reversed(keys):
        out = {key: out}
    return out


def load_config(experiment, path=None, overrides=(), seed=None):
    """Bundled defaults, then the JSON file at ``path``, then ``key=value`` overrides."""
    cfg = default_config(experiment)
    if path is not None:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if user.get("experiment", experiment) != experiment:
            raise ConfigError(f"config {path} is for experiment {user['experiment']!r}")
        cfg = merge(cfg, user)
    for text in overrides:
        cfg = merge(cfg, parse_assignment(text))
    if seed is not None:
        cfg["seed"] = int(seed)
    return cfg


def _optim(cfg, seed):
    try:
        return OptimConfig(seed=seed, **cfg["optim"])
    except TypeError as exc:
        raise ConfigError(f"bad optim section: {exc}") from exc


def _spec(**kw):
    try:
        return LadderSpec(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad model section: {exc}") from exc


def _controller(m):
    return {
        "eig_floor": m["eig_floor"],
        "adapt_beta": m["adapt_beta"],
        "beta_min": m["beta_min"],
        "beta_max": m["beta_max"],
    }


# ---------------------------------------------------------------- experiment 1


def denoiser_spec(sigma=1.0, xi0=None):
    """Network without hidden layers whose only map is the tanh-neuron denoiser."""
    dec = TanhNeuron() if xi0 is None else TanhNeuron(tuple(float(v) for v in xi0))
    return LadderSpec([1], [], [dec], sigma_corrupt=sigma)


def oddness(grid, values):
    """``max |g(x) + g(-x)|`` over a grid symmetric about zero."""
    grid = np.asarray(grid)
    if not np.allclose(grid, -grid[::-1]):
        raise ValueError("grid must be symmetric about zero")
    values = np.asarray(values)
    return float(np.max(np.abs(values + values[::-1])))


def run_denoise1d(cfg):
    """Fit the scalar denoiser to Gaussian, Laplace and sinusoid sources."""
    seed = int(cfg["seed"])
    m, e = cfg["model"], cfg["eval"]
    spec = denoiser_spec(m["sigma_corrupt"], m["xi0"])
    opt = _optim(cfg, seed)
    grid = np.linspace(e["grid_min"], e["grid_max"], e["grid_points"])
    inner = (grid >= e["check_min"] - 1e-12) & (grid <= e["check_max"] + 1e-12)
    res = RunResult("denoise1d", cfg)
    curves, fitted = {}, {}
    for i, kind in enumerate(cfg["data"]["kinds"]):
        x = sample_source(kind, cfg["data"]["n_samples"], make_rng(seed, _DATA_STREAM, i))[None, :]
        params, trace = train(spec, x, opt)
        xi = params["g0.xi"].copy()
        curves[kind] = scalar_denoiser(xi, grid)
        fitted[kind] = {
            "xi": xi.tolist(),
            "final_c0": trace[-1].cost["c0"] if len(trace) else None,
            "oddness": oddness(grid[inner], curves[kind][inner]),
            "oddness_full_grid": oddness(grid, curves[kind]),
            "value_at_1": float(scalar_denoiser(xi, 1.0)),
        }
        res.traces[f"trace_{kind}"] = trace
        res.checkpoints[f"checkpoint_{kind}"] = (spec, params)

    sigma = float(m["sigma_corrupt"])
    line = gauss_optimal_denoiser(1.0, sigma, grid)
    res.tables["denoisers"] = (["x_tilde", *curves, "gauss_optimum"], np.column_stack([grid, *curves.values(), line]))
    res.metrics["fits"] = fitted

    if "gaussian" in curves:
        dev = float(np.max(np.abs(curves["gaussian"][inner] - line[inner])))
        res.metrics["gaussian_max_dev"] = dev
        res.checks.append(Check("gaussian_optimum", dev, f"< 0.05 on [{e['check_min']:g}, {e['check_max']:g}]", dev < 0.05))
    for kind in ("laplace", "sinusoid"):
        if kind in curves:
            odd = fitted[kind]["oddness"]
            res.checks.append(Check(f"{kind}_odd", odd, f"< 0.02 on [{e['check_min']:g}, {e['check_max']:g}]", odd < 0.02))
    if "laplace" in curves:
        band = (grid >= 0.5) & (grid <= 2.0)
        margin = float(np.min(line[band] - curves["laplace"][band]))
        res.metrics["laplace_shrink_margin"] = margin
        res.checks.append(Check("laplace_below_gaussian_line", margin, "> 0 on [0.5, 2]", margin > 0))
        res.checks.append(
            Check("laplace_shrinks_at_1", fitted["laplace"]["value_at_1"], "< 1", fitted["laplace"]["value_at_1"] < 1)
        )
    return res


# ---------------------------------------------------------------- experiment 2


def ica_spec(X, m, lateral=True):
    """15 -> n_hidden ladder with a tanh-gain top decoder and linear bottom decoder.

    The corruption level is ``noise_rel`` times the per-dimension standard
    deviation of ``X``.
    """
    sigma = m["noise_rel"] * X.std(axis=1)
    return _spec(
        layer_dims=[X.shape[0], m["n_hidden"]],
        encoders=[LinearMap()],
        decoders=[LinearLateral(lateral=lateral), TanhGain()],
        alpha=m["alpha"],
        beta0=m["beta0"],
        sigma_corrupt=tuple(sigma),
        **_controller(m),
    )


def run_ica(cfg):
    """Train the ICA ladder with and without the lateral matrix ``B``."""
    seed = int(cfg["seed"])
    m, e = cfg["model"], cfg["eval"]
    ds = make_ica_dataset(make_rng(seed, _DATA_STREAM), n_samples=cfg["data"]["n_samples"], seed=seed)
    opt = _optim(cfg, seed)
    k = int(e["top_k"])
    res = RunResult("ica", cfg)
    summaries = {}
    for tag, lateral in (("with_b", True), ("no_b", False)):
        spec = ica_spec(ds.X, m, lateral)
        params0 = init_params(spec, make_rng(seed, 0), ds.X if m["data_init"] else None)
        params, trace = train(spec, ds, opt, params=params0)
        W = params["f1.W"]
        report = loading_report(W, ds.mixing)
        summaries[tag] = {
            **report.to_dict(k),
            "leakage": subspace_leakage(W, ds.X, e["k_principal"]),
            "a": params["g1.a"].tolist(),
            "b": params["g1.b"].tolist(),
            "final_cost": trace[-1].cost if len(trace) else None,
        }
        header = [f"src{j}" for j in range(ds.mixing.shape[1])]
        res.tables[f"loadings_{tag}"] = (header, report.normalized)
        res.traces[f"trace_{tag}"] = trace
        res.checkpoints[f"checkpoint_{tag}"] = (spec, params)

    rng = make_rng(seed, _DATA_STREAM + 1)
    n_hidden, trials = m["n_hidden"], e["random_trials"]
    mean, std = random_loading_baseline(ds.mixing, n_hidden, trials, rng, k)
    # same maps but scored on the non-Gaussian source columns only
    ng = [i for i, kind in enumerate(ds.meta["source_kinds"]) if kind != "gaussian"]
    rng = make_rng(seed, _DATA_STREAM + 1)
    mean_ng, std_ng = random_loading_baseline(ds.mixing[:, ng], n_hidden, trials, rng, k)
    res.metrics = {
        **summaries,
        "random_baseline": {"mean": mean, "std": std, "trials": trials},
        "random_baseline_non_gaussian_columns": {"mean": mean_ng, "std": std_ng, "trials": trials},
        "source_kinds": ds.meta["source_kinds"],
    }

    top_b, top_n = summaries["with_b"][f"top{k}_mean"], summaries["no_b"][f"top{k}_mean"]
    leak_b, leak_n = summaries["with_b"]["leakage"], summaries["no_b"]["leakage"]
    res.checks += [
        Check("with_b_top_mean", top_b, ">= 0.95", top_b >= 0.95),
        Check("ablation_gap", top_b - top_n, ">= 0.10", top_b - top_n >= 0.10),
        Check("leakage_order", [leak_b, leak_n], "with_b > no_b", leak_b > leak_n),
        Check("random_baseline", mean, "in [0.58, 0.65]", 0.58 <= mean <= 0.65),
    ]
    return res


# ---------------------------------------------------------------- experiment 3


def variance_spec(m, full=True):
    """16 -> 16 -> 10 ladder: linear then softplus-MLP encoders, gated decoder.

    With ``full=False`` only ``C0`` is minimized: all per-layer, decorrelation
    and mean weights are zero and the controller is off.
    """
    dims = [m["input_dim"], m["hidden1"], m["hidden2"]]
    kw = dict(
        layer_dims=dims,
        encoders=[LinearMap(), SoftplusMLP(hidden=m["mlp_hidden"])],
        decoders=[LinearLateral(), SigmoidGate(), ScalarGain()],
        sigma_corrupt=m["sigma_corrupt"],
    )
    if full:
        return _spec(alpha=m["alpha"], beta0=m["beta0"], **kw, **_controller(m))
    return _spec(alpha=0.0, beta0=0.0, gamma0=0.0, adapt_beta=False, **kw)


def _isa_data(cfg, seed):
    d = cfg["data"]
    return make_isa_dataset(
        make_rng(seed, _DATA_STREAM), n_samples=d["n_samples"], n_groups=d["n_groups"],
        group_size=d["group_size"], seed=seed,
    )


def gate_curves(params, spec, unit, assignment, grid):
    """Gate response of ``unit`` to each layer-1 dimension, split by group membership."""
    d = spec.layer_dims[1]
    curves = np.stack([sigmoid_response_curve(params, spec, unit, j, grid)[1] for j in range(d)])
    in_group = [j for j in range(d) if assignment[j] == assignment[unit]]
    return curves, in_group


def half_axis_violation(grid, curve, direction):
    """Largest total move against ``direction`` when moving away from zero on either half-axis.

    ``direction=+1`` asks for non-decreasing in ``|v|`` and returns the largest
    drop below the running maximum; ``-1`` asks for non-increasing and returns
    the largest rise above the running minimum. Summing over many small steps
    is what makes this a tolerance on monotonicity rather than on smoothness.
    """
    worst = 0.0
    for half in (curve[grid >= 0], curve[grid <= 0][::-1]):
        if half.size:
            c = direction * half
            worst = max(worst, float(np.max(np.maximum.accumulate(c) - c)))
    return worst


def speedup_study(cfg):
    """``C0`` at the two comparison epochs for the full cost and for ``C0`` alone."""
    s, m = cfg["speedup"], cfg["model"]
    early, late = int(s["early_epoch"]), int(s["late_epoch"])
    rows = []
    for seed in s["seeds"]:
        ds = _isa_data(cfg, seed)
        opt = OptimConfig(seed=seed, **{**cfg["optim"], "epochs": late})
        _, full = train(variance_spec(m, True), ds, opt, data_init=m["data_init"])
        _, base = train(variance_spec(m, False), ds, opt, data_init=m["data_init"])
        rows.append([seed, full.c0(early), full.c0(late), base.c0(early), base.c0(late)])
    return np.array(rows, dtype=np.float64)


def run_variance(cfg, speedup=True):
    """Train the hierarchical variance model on subspace data; optionally the speedup study."""
    seed = int(cfg["seed"])
    m, e = cfg["model"], cfg["eval"]
    ds = _isa_data(cfg, seed)
    spec = variance_spec(m)
    params, trace = train(spec, ds, _optim(cfg, seed), data_init=m["data_init"])
    res = RunResult("variance", cfg)
    res.traces["trace"] = trace
    res.checkpoints["checkpoint"] = (spec, params)

    report = loading_report(params["f1.W"], ds.effective_mixing)
    score = block_score(report, ds.groups)
    rb_mean, rb_std = random_block_baseline(
        ds.effective_mixing, ds.groups, spec.layer_dims[1], e["random_trials"], make_rng(seed, _DATA_STREAM + 1)
    )
    cols = [f"src{i}" for g in ds.groups for i in g]
    res.tables["squared_loadings_ordered"] = (cols, ordered_squared_loadings(report, score, ds.groups))

    unit = int(e["gate_unit"])
    grid = np.linspace(-e["gate_range"], e["gate_range"], e["gate_points"])
    curves, in_group = gate_curves(params, spec, unit, score.assignment, grid)
    out_group = [j for j in range(curves.shape[0]) if j not in in_group]
    res.tables["gate_curves"] = (["v", *(f"dim{j}" for j in range(curves.shape[0]))], np.column_stack([grid, curves.T]))
    ranges = np.ptp(curves, axis=1)
    dec = [half_axis_violation(grid, curves[j], -1) for j in in_group]
    inc = [half_axis_violation(grid, curves[j], +1) for j in in_group]

    res.metrics = {
        "block_score": score.to_dict(),
        "random_block_baseline": {"mean": rb_mean, "std": rb_std, "trials": e["random_trials"]},
        "final_cost": trace[-1].cost if len(trace) else None,
        "gate": {
            "unit": unit,
            "in_group": in_group,
            "ranges": ranges.tolist(),
            "in_group_min_range": float(ranges[in_group].min()),
            "out_group_max_range": float(ranges[out_group].max()) if out_group else 0.0,
            "in_group_decreasing_violation": max(dec),
            "in_group_increasing_violation": max(inc),
        },
    }
    g = res.metrics["gate"]
    res.checks += [
        Check("block_mass", score.mean_mass, ">= 0.85", score.mean_mass >= 0.85),
        Check("gate_in_group_range", g["in_group_min_range"], "> 0.3", g["in_group_min_range"] > 0.3),
        Check(
            "gate_in_group_non_increasing",
            g["in_group_decreasing_violation"],
            "<= 0.02",
            g["in_group_decreasing_violation"] <= 0.02,
        ),
        Check("gate_out_group_flat", g["out_group_max_range"], "< 0.1", g["out_group_max_range"] < 0.1),
    ]

    if speedup:
        rows = speedup_study(cfg)
        s = cfg["speedup"]
        early, late = s["early_epoch"], s["late_epoch"]
        res.tables["speedup"] = (
            ["seed", f"full_c0_{early}", f"full_c0_{late}", f"c0only_c0_{early}", f"c0only_c0_{late}"],
            rows,
        )
        wins = int(np.sum(rows[:, 1] <= rows[:, 4]))
        res.metrics["speedup"] = {"seeds": len(rows), "wins": wins}
        res.checks.append(Check("speedup_majority", wins, f"> {len(rows) / 2}", wins > len(rows) / 2))
    return res


# ---------------------------------------------------------------- gradient check


def _perturbed(spec, rng, scale):
    p = init_params(spec, rng)
    p.flat += scale * rng.standard_normal(p.flat.size)
    return p


def gradcheck_models(cfg):
    """A linear-only ladder plus the three experiment network shapes, with small random data."""
    n = cfg["data"]["n_samples"]
    seed = int(cfg["seed"])
    rng = make_rng(seed, _DATA_STREAM)
    x1 = rng.standard_normal((1, n))
    ica_x = rng.standard_normal((15, 15)) @ rng.standard_normal((15, n))
    isa_x = rng.standard_normal((16, n))
    ica_model = {"noise_rel": 0.5, "n_hidden": 11, "alpha": 0.5, "beta0": 1.0,
                 "eig_floor": 0.7, "adapt_beta": True, "beta_min": 1e-4, "beta_max": 1e3}
    var_model = {"input_dim": 16, "hidden1": 16, "hidden2": 10, "mlp_hidden": 50, "sigma_corrupt": 0.5,
                 "alpha": 1.0, "beta0": 1.0, "eig_floor": 0.7, "adapt_beta": True, "beta_min": 1e-4,
                 "beta_max": 1e3}
    lin_x = rng.standard_normal((6, 6)) @ rng.standard_normal((6, n))
    linear = _spec(layer_dims=[6, 4], encoders=[LinearMap()], decoders=[LinearLateral(), ScalarGain()],
                   sigma_corrupt=0.5)
    return {
        "linear": (linear, lin_x),
        "denoise1d": (denoiser_spec(1.0), x1),
        "ica": (ica_spec(ica_x, ica_model), ica_x),
        "variance": (variance_spec(var_model), isa_x),
    }


def run_gradcheck(cfg):
    """Central-difference gradient check on every experiment model shape."""
    seed = int(cfg["seed"])
    c = cfg["check"]
    res = RunResult("gradcheck", cfg)
    limits = {"linear": 1e-6, "denoise1d": 1e-6, "ica": 1e-4, "variance": 1e-4}
    for i, (name, (spec, X)) in enumerate(gradcheck_models(cfg).items()):
        rng = make_rng(seed, _DATA_STREAM + 2, i)
        params = _perturbed(spec, rng, c["perturb"])
        noise = rng.standard_normal(X.shape)
        rep = grad_check(params, spec, X, noise, n_coords=c["n_coords"], step=c["step"], seed=seed)
        res.metrics[name] = rep.to_dict()
        res.checks.append(Check(f"{name}_max_rel_err", rep.max_rel_err, f"< {limits[name]:g}", rep.max_rel_err < limits[name]))
    return res


RUNNERS = {
    "denoise1d": run_denoise1d,
    "ica": run_ica,
    "variance": run_variance,
    "gradcheck": run_gradcheck,
}
