"""Acceptance criteria 1-12, one PASS/FAIL line each.

Run directly (``python tests/test_acceptance.py``) to print the lines, or
through pytest, where the same lines are echoed in the terminal summary.
"""

import math
import os
import sys
import tempfile
import time

import numpy as np
import pytest

from roughavg import (
    Grid,
    NoiseSpec,
    StudySpec,
    VectorFieldSet,
    convergence_study,
    fbm_lift,
    get_model,
    kappa,
    mixed_lift,
    rough_integral,
    sample_lift,
    solve_rde,
    solve_slow_fast,
)
from roughavg.core import chen_block
from roughavg.experiment import aux_gap_slope
from roughavg.frozen import FrozenModel, averaged_drift, contraction_check
from roughavg.integral import identity_integrand
from roughavg.lifts import brownian_ito_lift, coarsen, ito_lift_from_increments, make_rng, smooth_lift
from roughavg.slowfast import MicroStepPolicy, fast_sde_consistency, ito_strat_switch, switch_lift, solve_slow_fast_batch
from roughavg.stats import loglog_slope

RESULTS = {}


def _record(n, passed, detail):
    RESULTS[n] = (bool(passed), detail)
    return bool(passed), detail


def _zeta_oracle(s, n=20000):
    """Partial sum plus integral tail; the remainder is below n^-s / 2 + s n^(-s-1) / 12."""
    k = np.arange(1, n + 1, dtype=float)
    head = math.fsum((k ** -s)[::-1])
    # trapezoid correction of the tail integral from n to infinity
    tail = n ** (1 - s) / (s - 1) - 0.5 * n ** -s + s * n ** (-s - 1) / 12
    return head + tail, s * (s + 1) * (s + 2) * n ** (-s - 3) / 720


def _chen_defect(rp, n_triples, seed):
    rng = np.random.default_rng(seed)
    n = rp.n_steps
    tri = np.sort(rng.integers(0, n + 1, size=(n_triples, 3)), axis=1)
    x = rp.level1
    worst = 0.0
    for i, j, k in tri:
        a, b = chen_block(rp, i, j), chen_block(rp, j, k)
        c = np.outer(x[j] - x[i], x[k] - x[j])
        lhs = chen_block(rp, i, k)
        scale = max(np.abs(a).max(), np.abs(b).max(), np.abs(c).max(), np.abs(lhs).max())
        if scale > 0:
            worst = max(worst, float(np.abs(lhs - a - b - c).max() / scale))
    return worst


def criterion_1():
    t0 = time.time()
    grid = Grid(1.0, 512)
    lifts = {}
    lifts["brownian_ito"], inc = brownian_ito_lift(NoiseSpec("brownian_ito", 2, seed=1, stream_id=1), grid)
    for h in (0.35, 0.4, 0.5):
        lifts[f"fbm H={h}"] = fbm_lift(NoiseSpec("fbm", 2, hurst=h, seed=1, stream_id=2), grid)
    lifts["mixed"] = mixed_lift(lifts["fbm H=0.4"], inc, grid, 1)
    defects = {k: _chen_defect(rp, 10_000, 7) for k, rp in lifts.items()}
    worst = max(defects.values())
    dt = time.time() - t0
    detail = ", ".join(f"{k}: {v:.1e}" for k, v in defects.items()) + f"; {dt:.1f} s"
    return _record(1, worst <= 1e-12 and dt < 30, detail)


def criterion_2():
    z, bound = _zeta_oracle(1.5)
    oracle = 2**1.5 * z
    k = kappa(0.5)
    oracle_gap = abs(k - oracle)
    literal_gap = abs(k - 7.38873)
    alphas = np.linspace(1 / 3 + 1e-3, 0.5, 100)
    finite = all(math.isfinite(kappa(a)) for a in alphas)
    passed = oracle_gap <= 1e-10 + 2**1.5 * bound and literal_gap <= 1e-4 and finite
    detail = (
        f"kappa(0.5)={k:.9f}, oracle {oracle:.9f} (gap {oracle_gap:.1e}); "
        f"gap to stated 7.38873 is {literal_gap:.2e} (tol 1e-4); finite on grid: {finite}"
    )
    return _record(2, passed, detail)


def criterion_3():
    worst = 0.0
    for s in range(100):
        kind = ("brownian_ito", "fbm", "deterministic_smooth")[s % 3]
        dim = 1 + s % 3
        grid = Grid(1.0, 64 + s)
        spec = NoiseSpec(kind, dim, 0.4 if kind == "fbm" else None, 4, seed=s, stream_id=0)
        rp, _ = sample_lift(spec, grid)
        for k in (rp.n_steps, rp.n_steps // 2):
            val, _ = rough_integral(identity_integrand(rp), rp, 0, k)
            ref = chen_block(rp, 0, k)
            worst = max(worst, float(np.abs(val - ref).max()))
    return _record(3, worst <= 1e-12, f"max |int X dX - X^2| over 100 lifts: {worst:.1e}")


def criterion_4():
    t0 = time.time()
    vfs = VectorFieldSet(lambda y: y[..., None], lambda y: np.ones(y.shape + (1, 1)))
    path = lambda t: np.sin(2 * np.pi * np.asarray(t))[:, None]
    errs = []
    ns = [256, 512, 1024, 2048, 4096]
    for n in ns:
        rp = smooth_lift(path, Grid(1.0, n), substeps=8)
        y = solve_rde(vfs, rp, [1.0])
        exact = math.exp(rp.level1[-1, 0] - rp.level1[0, 0])
        errs.append(abs(y.values[-1, 0] - exact))
    dt = time.time() - t0
    mono = all(b < a for a, b in zip(errs, errs[1:]))
    detail = "errors " + ", ".join(f"N={n}: {e:.2e}" for n, e in zip(ns, errs)) + f"; {dt:.2f} s"
    return _record(4, errs[-1] < 1e-3 and mono and dt < 5, detail)


def _ou_mixed(seed, grid, substeps=8, hurst=0.45):
    B = fbm_lift(NoiseSpec("fbm", 1, hurst=hurst, substeps=substeps, seed=seed, stream_id=0), grid)
    W, inc = brownian_ito_lift(NoiseSpec("brownian_ito", 1, substeps=substeps, seed=seed, stream_id=1), grid)
    return mixed_lift(B, inc, grid, 1), inc


def criterion_5():
    coeffs = get_model("ou_sine")
    eps, lam = 0.2, 0.5
    pol = MicroStepPolicy()
    grid = Grid(1.0, 2 * pol.n_steps(1.0, eps))
    xis = [_ou_mixed(s, grid)[0] for s in range(50)]
    z0 = [0.5, 0.0]
    fine = solve_slow_fast_batch(coeffs, xis, eps, z0, pol)
    coarse = solve_slow_fast_batch(coeffs, [coarsen(x, 2) for x in xis], eps, z0, pol)
    tol = max(
        max(np.abs(f.X[::2] - c.X).max(), np.abs(f.Y[::2] - c.Y).max()) for f, c in zip(fine, coarse)
    )
    sw = ito_strat_switch(coeffs, lam)
    strat = solve_slow_fast_batch(sw, [switch_lift(coeffs, x, lam) for x in xis], eps, z0, pol)
    gap = max(max(np.abs(a.X - b.X).max(), np.abs(a.Y - b.Y).max()) for a, b in zip(fine, strat))
    return _record(5, gap < 5 * tol, f"max path gap {gap:.1e} vs 5 x scheme tolerance {5 * tol:.2e}")


def criterion_6():
    coeffs = get_model("ou_sine")
    eps = 0.2
    K = 6400
    ns = [50, 100, 200, 400, 800]
    rms = []
    gaps = np.zeros((50, len(ns)))
    for s in range(50):
        fine_grid = Grid(1.0, K)
        b_fine = fbm_lift(NoiseSpec("fbm", 1, hurst=0.45, substeps=1, seed=s, stream_id=0), fine_grid)
        w = make_rng(s, 1).standard_normal((K, 1)) * math.sqrt(1.0 / K)
        for j, n in enumerate(ns):
            m = K // n
            grid = Grid(1.0, n)
            B = coarsen(b_fine, m)
            xi = mixed_lift(B, w, grid)
            sol = solve_slow_fast(coeffs, xi, eps, [0.5, 0.0])
            gaps[s, j] = fast_sde_consistency(coeffs, sol, w, m)
    rms = np.sqrt(np.mean(gaps**2, axis=0))
    steps = 1.0 / np.array(ns)
    slope, _, se = loglog_slope(steps, rms)
    detail = "RMS " + ", ".join(f"N={n}: {r:.2e}" for n, r in zip(ns, rms)) + f"; order {slope:.2f} +/- {se:.2f}"
    return _record(6, slope >= 0.4, detail)


def criterion_7():
    times = np.linspace(0.0, 5.0, 11)
    ou = FrozenModel.from_coeffs(get_model("ou_sine"))
    c = contraction_check(ou, [0.5], [2.0], [-1.0], times, n_seeds=100, h_step=1e-3, seed=0)
    ratio = c.estimate / (np.exp(-2 * times) * 9.0)
    ou_ok = bool(np.all(np.abs(ratio - 1) <= 0.01))
    cu = FrozenModel.from_coeffs(get_model("cubic"))
    cc = contraction_check(cu, [0.5], [2.0], [-1.0], times, n_seeds=100, h_step=1e-3, seed=0, tol=0.0)
    detail = (
        f"OU ratio range [{ratio.min():.4f}, {ratio.max():.4f}]; "
        f"cubic max est/envelope {np.max(cc.estimate / cc.envelope):.3f}"
    )
    return _record(7, ou_ok and cc.passed, detail)


def _gauss_hermite_fbar(x, c0=1.0, h0=1.0, n=80):
    # E sin(Y), Y ~ N(c0 x, h0^2 / 2): substitute y = m + sqrt(2 v) u
    u, w = np.polynomial.hermite.hermgauss(n)
    v = h0**2 / 2
    return float(np.sum(w * np.sin(c0 * x + np.sqrt(2 * v) * u)) / np.sqrt(np.pi))


def criterion_8():
    t0 = time.time()
    coeffs = get_model("ou_sine")
    model = FrozenModel.from_coeffs(coeffs)
    fb = coeffs.closed_form["fbar"]
    rows = []
    ok = True
    for i, x in enumerate((0.5, 1.0, math.pi / 2)):
        est = averaged_drift(model, [x], "endpoint_mc", {"n_seeds": 4096, "T_mix": 5.0}, seed=0, stream_id=i)
        exact = math.exp(-0.25) * math.sin(x)
        gh = _gauss_hermite_fbar(x)
        ok &= abs(est.value[0] - exact) <= 0.02 and abs(float(fb(x)) - gh) <= 1e-10 and abs(exact - gh) <= 1e-10
        rows.append(f"x={x:.3f}: {est.value[0]:.4f} vs {exact:.4f}")
    dt = time.time() - t0
    return _record(8, ok and dt < 60, "; ".join(rows) + f"; {dt:.1f} s")


def criterion_9():
    coeffs = get_model("ou_sine")
    beta = 0.4
    res = aux_gap_slope(coeffs, 0.05, np.geomspace(0.1, 1.0, 5), 256, beta, seed=0)
    lo, hi = 2 * beta - 0.4, 2 * beta + 0.4
    detail = f"slope {res['slope']:.3f} +/- {res['stderr']:.3f}, window [{lo:.1f}, {hi:.1f}]"
    return _record(9, lo <= res["slope"] <= hi, detail)


def _study_spec():
    return StudySpec(model="ou_sine", epsilons=(0.5, 0.1, 0.02), p=1.0, beta=0.4, M_mc=64, horizon=1.0, seed=42)


def criterion_10():
    res = convergence_study(_study_spec())
    ok = res.monotone_separated(2.0) and res.slope > 0 and res.runtime < 15 * 60
    detail = (
        "means " + ", ".join(f"{m:.4f}+/-{s:.4f}" for m, s in zip(res.mean, res.stderr))
        + f"; slope {res.slope:.3f}; {res.runtime:.1f} s"
    )
    return _record(10, ok, detail)


def criterion_11():
    coeffs = get_model("ou_sine")
    epss = (1.0, 0.3, 0.1, 0.03)
    pol = MicroStepPolicy()
    grid = Grid(1.0, pol.n_steps(1.0, min(epss)))
    xis = [_ou_mixed(s, grid)[0] for s in range(200)]
    sups = []
    for eps in epss:
        sols = solve_slow_fast_batch(coeffs, xis, eps, [0.5, 0.0], pol)
        Y = np.stack([s.Y[:, 0] for s in sols])
        sups.append(float(np.max(np.mean(Y**2, axis=0))))
    ratio = max(sups) / min(sups)
    detail = "sup_t E|Y|^2 " + ", ".join(f"eps={e}: {v:.3f}" for e, v in zip(epss, sups)) + f"; max/min {ratio:.2f}"
    return _record(11, ratio < 2, detail)


def criterion_12():
    spec = StudySpec(M_mc=16, seed=42)
    with tempfile.TemporaryDirectory() as d:
        paths = []
        for i, workers in enumerate((1, 1, 2)):
            p = os.path.join(d, f"study{i}.csv")
            convergence_study(spec, workers=workers).to_csv(p)
            paths.append(p)
        blobs = [open(p, "rb").read() for p in paths]
    same = blobs[0] == blobs[1]
    same_workers = blobs[0] == blobs[2]
    return _record(12, same and same_workers, f"two runs identical: {same}; 1 vs 2 workers identical: {same_workers}")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10, criterion_11, criterion_12]


@pytest.mark.parametrize("n", range(1, 13))
def test_criterion(n):
    passed, detail = CRITERIA[n - 1]()
    print(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
    assert passed, detail


def format_results():
    return [f"criterion {n:2d}: {'PASS' if p else 'FAIL'}  {d}" for n, (p, d) in sorted(RESULTS.items())]


if __name__ == "__main__":
    bad = 0
    for fn in CRITERIA:
        passed, detail = fn()
        n = int(fn.__name__.split("_")[1])
        print(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}", flush=True)
        bad += not passed
    sys.exit(1 if bad else 0)
