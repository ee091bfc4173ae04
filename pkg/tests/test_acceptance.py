"""Acceptance criteria 1-11, each run at its stated tolerance.

Every test records one PASS/FAIL line; ``conftest.py`` prints them at the
end of the pytest session, and running this file directly prints them too::

    python tests/test_acceptance.py

The experiment runs are expensive (about an hour in total on one CPU), so
each is computed once per session and shared between criteria.
"""
import functools
import sys
import time

import numpy as np
import pytest

from ladderlab import cli
from ladderlab.cost import c_sigma, c_sigma_grad
from ladderlab.experiments import load_config, run_denoise1d, run_gradcheck, run_ica, run_variance, speedup_study
from ladderlab.linalg import mat_log_spd

pytestmark = pytest.mark.acceptance

ICA_SEEDS = range(10)
RESULTS = {}


def record(n, passed, detail):
    line = f"criterion {n:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    return passed


def timed(fn, *args, **kw):
    t = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t


@functools.lru_cache(maxsize=None)
def denoise():
    return timed(run_denoise1d, load_config("denoise1d"))


@functools.lru_cache(maxsize=None)
def ica(seed):
    return timed(run_ica, load_config("ica", seed=seed))


@functools.lru_cache(maxsize=None)
def variance():
    return timed(run_variance, load_config("variance"), speedup=False)


@functools.lru_cache(maxsize=None)
def speedup():
    return timed(speedup_study, load_config("variance"))


def check(res, name):
    return next(c for c in res.checks if c.name == name)


# ---- 1-2: scalar denoisers


def test_criterion_01_gaussian_optimum():
    res, secs = denoise()
    dev = res.metrics["gaussian_max_dev"]
    ok = dev < 0.05 and secs < 60
    assert record(1, ok, f"max |x_hat - x_tilde/2| on [-2, 2] = {dev:.4f} (< 0.05), runtime {secs:.1f}s (< 60s)")


def test_criterion_02_denoiser_shapes():
    res, _ = denoise()
    odd_l = check(res, "laplace_odd").value
    odd_s = check(res, "sinusoid_odd").value
    margin = res.metrics["laplace_shrink_margin"]
    ok = odd_l < 0.02 and odd_s < 0.02 and margin > 0
    assert record(2, ok, f"oddness laplace {odd_l:.4f}, sinusoid {odd_s:.4f} (< 0.02); "
                         f"laplace below x/2 on [0.5, 2] by >= {margin:.4f} (> 0)")


# ---- 3-5: ICA


def test_criterion_03_ica_recovery():
    tops = [ica(s)[0].metrics["with_b"]["top10_mean"] for s in ICA_SEEDS]
    secs = max(ica(s)[1] for s in ICA_SEEDS)
    hits = sum(t >= 0.95 for t in tops)
    ok = hits >= 8
    assert record(3, ok, f"top-10 mean >= 0.95 on {hits}/10 seeds (need 8); values "
                         f"{np.round(tops, 3).tolist()}; slowest seed {secs / 60:.1f} min (both runs)")


def test_criterion_04_lateral_ablation():
    gaps, order = [], []
    for s in ICA_SEEDS:
        m = ica(s)[0].metrics
        gaps.append(m["with_b"]["top10_mean"] - m["no_b"]["top10_mean"])
        order.append(m["with_b"]["leakage"] > m["no_b"]["leakage"])
    good = [g >= 0.10 for g in gaps]
    ok = sum(good) >= 8 and all(o for g, o in zip(good, order) if g)
    assert record(4, ok, f"gap >= 0.10 on {sum(good)}/10 seeds (need 8), leakage with-B > no-B on "
                         f"{sum(o for g, o in zip(good, order) if g)}/{sum(good)} of those; gaps {np.round(gaps, 3).tolist()}")


def test_criterion_05_random_baseline():
    m = ica(0)[0].metrics
    mean, std = m["random_baseline"]["mean"], m["random_baseline"]["std"]
    ng = m["random_baseline_non_gaussian_columns"]["mean"]
    ok = 0.58 <= mean <= 0.65
    assert record(5, ok, f"random orthonormal 11x15 maps, 100 trials: {mean:.3f} +- {std:.3f} (need [0.58, 0.65]); "
                         f"scored on non-Gaussian columns only: {ng:.3f}")


# ---- 6-8: hierarchical variance model


def test_criterion_06_block_structure():
    res, secs = variance()
    mass = res.metrics["block_score"]["mean_mass"]
    base = res.metrics["random_block_baseline"]["mean"]
    ok = mass >= 0.85 and secs < 1800
    assert record(6, ok, f"mean within-group mass {mass:.3f} (>= 0.85), random baseline {base:.3f}, "
                         f"runtime {secs / 60:.1f} min (< 30)")


def test_criterion_07_gate_behavior():
    res, _ = variance()
    g = res.metrics["gate"]
    ok = g["in_group_min_range"] > 0.3 and g["in_group_decreasing_violation"] <= 0.02 and g["out_group_max_range"] < 0.1
    assert record(7, ok, f"in-group min range {g['in_group_min_range']:.3f} (> 0.3), non-increasing violation "
                         f"{g['in_group_decreasing_violation']:.3f} (<= 0.02), out-group max range "
                         f"{g['out_group_max_range']:.3f} (< 0.1); non-decreasing violation "
                         f"{g['in_group_increasing_violation']:.3f}")


def test_criterion_08_speedup():
    rows, _ = speedup()
    wins = int(np.sum(rows[:, 1] <= rows[:, 4]))
    ok = len(rows) >= 10 and wins > len(rows) / 2
    assert record(8, ok, f"full-cost C0@100 <= C0-only C0@200 on {wins}/{len(rows)} seeds (need a strict majority)")


# ---- 9-10: gradients and the decorrelation cost


def test_criterion_09_gradients():
    res = run_gradcheck(load_config("gradcheck"))
    errs = {c.name.replace("_max_rel_err", ""): c.value for c in res.checks}
    rng = np.random.default_rng(0)
    worst_inv, worst_fd = 0.0, 0.0
    for _ in range(20):
        Q, _r = np.linalg.qr(rng.standard_normal((6, 6)))
        S = (Q * rng.uniform(0.2, 3.0, 6)) @ Q.T
        G = c_sigma_grad(S)
        worst_inv = max(worst_inv, np.max(np.abs(G - (np.eye(6) - np.linalg.inv(S)))))
        eps = 1e-6
        fd = np.zeros_like(S)
        for i in range(6):
            for j in range(i, 6):
                E = np.zeros_like(S)
                E[i, j] = E[j, i] = eps
                d = (c_sigma(S + E) - c_sigma(S - E)) / (2 * eps)
                fd[i, j] = fd[j, i] = d if i == j else d / 2
        worst_fd = max(worst_fd, np.max(np.abs(fd - G)) / np.max(np.abs(G)))
    ok = (errs["linear"] < 1e-6 and errs["denoise1d"] < 1e-6 and errs["ica"] < 1e-4 and errs["variance"] < 1e-4
          and worst_inv < 1e-10 and worst_fd < 1e-6)
    assert record(9, ok, "grad_check max rel err " + ", ".join(f"{k} {v:.1e}" for k, v in errs.items())
                  + f"; c_sigma_grad vs I - inv {worst_inv:.1e} (< 1e-10), vs FD {worst_fd:.1e} (< 1e-6)")


def test_criterion_10_decorrelation_cost():
    at_identity = c_sigma(np.eye(5))
    diag = abs(c_sigma(np.diag([2.0, 1.0])) - (1 - np.log(2)))
    lams = np.logspace(0, -8, 50)
    vals = [c_sigma(np.diag([lam, 1.0, 1.0, 1.0])) for lam in lams]
    monotone = bool(np.all(np.diff(vals) > 0))
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(200):
        n = rng.integers(1, 12)
        M = rng.standard_normal((n, n))
        S = M @ M.T + 0.05 * np.eye(n)
        worst = max(worst, abs(np.trace(mat_log_spd(S)) - np.linalg.slogdet(S)[1]))
    ok = at_identity == 0.0 and diag < 1e-12 and monotone and worst < 1e-8
    assert record(10, ok, f"C(I) = {at_identity}, |C(diag(2,1)) - (1 - ln 2)| = {diag:.1e}, strictly increasing as "
                          f"lambda_min -> 0: {monotone}, max |tr log S - ln det S| = {worst:.1e} (< 1e-8)")


# ---- 11: determinism


DETERMINISM_RUNS = {
    "denoise1d": [],
    "gradcheck": [],
    "ica": ["optim.epochs=200", "eval.random_trials=20"],
    "variance": ["optim.epochs=100", "eval.random_trials=20", "speedup.seeds=[0,1]", "speedup.early_epoch=20",
                 "speedup.late_epoch=40"],
}


def test_criterion_11_determinism(tmp_path):
    differing, compared = [], 0
    for name, overrides in DETERMINISM_RUNS.items():
        outs = []
        for rep in ("a", "b"):
            argv = [name, "--seed", "3", "--out", str(tmp_path / f"{name}-{rep}")]
            for s in overrides:
                argv += ["--set", s]
            assert cli.main(argv) in (0, 4)
            outs.append(tmp_path / f"{name}-{rep}")
        names = sorted(p.name for p in outs[0].iterdir())
        assert names == sorted(p.name for p in outs[1].iterdir())
        for f in names:
            compared += 1
            if (outs[0] / f).read_bytes() != (outs[1] / f).read_bytes():
                differing.append(f"{name}/{f}")
    ok = not differing
    assert record(11, ok, f"{compared} CSV/JSON/JSONL files from repeated CLI runs of all four experiments, "
                          f"{len(differing)} differ {differing if differing else ''}".rstrip())


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
