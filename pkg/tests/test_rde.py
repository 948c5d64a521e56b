import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from roughavg.core import Grid, GridRoughPath, hoelder_seminorm, homogeneous_norm, zero_rough_path
from roughavg.lifts import NoiseSpec, sample_lift, smooth_lift
from roughavg.rde import (
    ConvergenceError,
    ExplosionError,
    VectorFieldSet,
    apriori_bracket,
    rough_euler_step,
    solve_rde,
    solve_rde_picard,
    stability_gap,
)


def linear_vfs(f=None, **meta):
    # sigma(y) = y in one dimension
    return VectorFieldSet(
        sigma=lambda y: np.asarray(y)[..., None],
        dsigma=lambda y: np.ones(np.shape(y) + (1, 1)),
        f=f,
        **meta,
    )


def cos_vfs(f=None, amp=0.5, f_sup=0.0, f_lip=0.0):
    return VectorFieldSet(
        sigma=lambda y: (1 + amp * np.cos(np.asarray(y)))[..., None],
        dsigma=lambda y: (-amp * np.sin(np.asarray(y)))[..., None, None],
        d2sigma=lambda y: (-amp * np.cos(np.asarray(y)))[..., None, None, None],
        f=f,
        sigma_norm=1 + amp,
        f_sup=f_sup,
        f_lip=f_lip,
        bounded=True,
        globally_lipschitz=True,
    )


def zero_sigma_vfs(f):
    return VectorFieldSet(
        sigma=lambda y: np.zeros(np.shape(y) + (1,)),
        dsigma=lambda y: np.zeros(np.shape(y) + (1, 1)),
        f=f,
    )


def test_euler_step_hand_example():
    out = rough_euler_step([1.0], linear_vfs(), np.array([0.1]), np.array([[0.005]]), 0.1)
    assert out[0] == pytest.approx(1.105, abs=1e-15)


def test_euler_step_trivial_and_reduction():
    vfs = cos_vfs()
    y = np.array([0.7])
    np.testing.assert_array_equal(rough_euler_step(y, vfs, np.zeros(1), np.zeros((1, 1)), 0.0), y)
    f = lambda y, psi: -2.0 * y
    out = rough_euler_step(y, zero_sigma_vfs(f), np.array([0.4]), np.array([[0.3]]), 0.1)
    assert out[0] == pytest.approx(0.7 - 0.2 * 0.7)


def test_euler_step_batched():
    vfs = cos_vfs()
    ys = np.linspace(-1, 1, 5)[:, None]
    x1 = np.array([0.2])
    x2 = np.array([[0.03]])
    batch = rough_euler_step(ys, vfs, x1, x2, 0.01)
    for k in range(5):
        np.testing.assert_allclose(batch[k], rough_euler_step(ys[k], vfs, x1, x2, 0.01), rtol=0, atol=1e-16)


def test_euler_step_nonfinite():
    vfs = VectorFieldSet(sigma=lambda y: np.full(np.shape(y) + (1,), np.nan), dsigma=lambda y: np.zeros(np.shape(y) + (1, 1)))
    with pytest.raises(FloatingPointError):
        rough_euler_step([1.0], vfs, np.ones(1), np.zeros((1, 1)), 0.1)


def test_ode_reduction_matches_solve_ivp():
    errs = []
    ref = solve_ivp(lambda t, y: -y, (0, 1), [1.0], rtol=1e-12, atol=1e-14, dense_output=True)
    for n in (100, 200, 400):
        grid = Grid(1.0, n)
        y = solve_rde(zero_sigma_vfs(lambda y, p: -y), zero_rough_path(grid, 1), [1.0])
        errs.append(np.max(np.abs(y.values[:, 0] - ref.sol(grid.times)[0])))
    assert errs[0] < 2.0 / 100
    assert errs[1] / errs[2] == pytest.approx(2.0, rel=0.05)
    assert ref.sol(1.0)[0] == pytest.approx(math.exp(-1), rel=1e-10)


def test_linear_rde_closed_form_and_order():
    path = lambda t: 0.8 * np.sin(3 * np.asarray(t))
    errs = []
    for n in (32, 64, 128, 256):
        rp = smooth_lift(path, Grid(1.0, n), substeps=8)
        y = solve_rde(linear_vfs(), rp, [1.5])
        exact = 1.5 * np.exp(rp.level1[:, 0])
        errs.append(np.max(np.abs(y.values[:, 0] - exact)))
        np.testing.assert_array_equal(y.gubinelli[:, 0, 0], y.values[:, 0])
    order = np.polyfit(np.log([32, 64, 128, 256]), np.log(errs), 1)[0]
    assert -order >= 1.0, errs


def test_zero_driver_constant():
    rp = zero_rough_path(Grid(1.0, 20), 2)
    vfs = VectorFieldSet(
        sigma=lambda y: np.ones(np.shape(y) + (2,)),
        dsigma=lambda y: np.zeros(np.shape(y) + (2, np.shape(y)[-1])),
    )
    y = solve_rde(vfs, rp, [0.3, -1.0, 2.0])
    np.testing.assert_array_equal(y.values, np.broadcast_to([0.3, -1.0, 2.0], (21, 3)))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), split=st.integers(0, 60))
def test_flow_property_bit_exact(seed, split):
    rp, _ = sample_lift(NoiseSpec("fbm", 1, hurst=0.4, substeps=2, seed=seed), Grid(1.0, 60))
    vfs = cos_vfs(lambda y, p: np.sin(y), f_sup=1, f_lip=1)
    whole = solve_rde(vfs, rp, [0.2])
    left = solve_rde(vfs, rp, [0.2], stop=split)
    right = solve_rde(vfs, rp, left.values[-1], start=split)
    np.testing.assert_array_equal(np.concatenate([left.values, right.values[1:]]), whole.values)


def test_psi_parameter_is_used_left_point():
    grid = Grid(1.0, 10)
    psi = np.arange(11, dtype=float)
    y = solve_rde(zero_sigma_vfs(lambda y, p: np.full_like(y, p)), zero_rough_path(grid, 1), [0.0], psi=psi)
    # left-point drift: Y_T = h * sum_{k<10} k
    assert y.values[-1, 0] == pytest.approx(0.1 * 45)


def test_explosion_reports_index():
    vfs = zero_sigma_vfs(lambda y, p: y**2)
    with pytest.raises(ExplosionError) as err:
        solve_rde(vfs, zero_rough_path(Grid(10.0, 100), 1), [10.0])
    assert 0 < err.value.index <= 100
    with pytest.raises(IndexError):
        solve_rde(vfs, zero_rough_path(Grid(1.0, 4), 1), [1.0], start=3, stop=2)


def test_no_explosion_for_bounded_fields():
    vfs = cos_vfs(lambda y, p: np.sin(y), f_sup=1, f_lip=1)
    grid = Grid(1.0, 64)
    for s in range(1000):
        rp, _ = sample_lift(NoiseSpec("brownian_ito", 1, seed=s), grid)
        assert np.all(np.isfinite(solve_rde(vfs, rp, [0.0]).values))


def test_picard_zero_driver_one_iteration():
    vfs = cos_vfs()
    out, hist = solve_rde_picard(vfs, zero_rough_path(Grid(1.0, 10), 1), [0.4], 0.4, window=10, return_history=True)
    np.testing.assert_array_equal(out.values, np.full((11, 1), 0.4))
    assert hist == [[0.0]]


def test_picard_flag_mismatch():
    with pytest.raises(ValueError):
        solve_rde_picard(linear_vfs(), zero_rough_path(Grid(1.0, 4), 1), [1.0], 0.4)


def test_picard_max_iter():
    rp, _ = sample_lift(NoiseSpec("brownian_ito", 1, seed=1), Grid(1.0, 32))
    with pytest.raises(ConvergenceError):
        solve_rde_picard(cos_vfs(), rp, [0.0], 0.4, tol=0.0, max_iter=2, window=32)


def test_picard_agrees_with_one_step_scheme():
    # smooth driver: both schemes are second order on the same summand, so they agree to h^2 scale
    path = lambda t: 0.6 * np.sin(2 * np.asarray(t)) + 0.3 * np.asarray(t)
    vfs = cos_vfs(lambda y, p: -0.5 * y, f_sup=1, f_lip=0.5)
    for n in (64, 128):
        rp = smooth_lift(path, Grid(1.0, n), substeps=8)
        a = solve_rde(vfs, rp, [0.1]).values
        b = solve_rde_picard(vfs, rp, [0.1], 0.4, window=8).values
        h = rp.grid.step
        assert np.max(np.abs(a - b)) < 5 * h ** (2 * 0.45)


def test_picard_contraction_on_small_instances():
    vfs = cos_vfs(lambda y, p: np.sin(y), amp=0.3, f_sup=1, f_lip=1)
    for s in range(10):
        rp, _ = sample_lift(NoiseSpec("brownian_ito", 1, substeps=4, seed=s), Grid(0.25, 16))
        _, hist = solve_rde_picard(vfs, rp, [0.3], 0.4, window=4, return_history=True)
        for gaps in hist:
            g = np.array(gaps)
            g = g[g > 1e-13]
            assert np.all(g[1:] <= 0.75 * g[:-1] + 1e-15), gaps


def test_apriori_bracket_examples():
    grid = Grid(1.0, 8)
    assert apriori_bracket(cos_vfs(amp=0.0, f_sup=0.0), zero_rough_path(grid, 1), 0.4) == 0.0
    rp = smooth_lift(lambda t: np.asarray(t), grid)
    v = VectorFieldSet(sigma=None, dsigma=None, sigma_norm=1.0, f_sup=0.0)
    assert apriori_bracket(v, rp, 0.5, rp_norm=1.0) == 2.0
    with pytest.raises(ValueError):
        apriori_bracket(linear_vfs(), rp, 0.5)


def test_apriori_envelope_fit_holds_on_holdout():
    vfs = cos_vfs(lambda y, p: np.sin(y), f_sup=1, f_lip=1)
    grid = Grid(1.0, 64)
    beta = 0.35

    def ratios(seeds):
        out = []
        for s in seeds:
            rp, _ = sample_lift(NoiseSpec("fbm", 1, hurst=0.45, substeps=2, seed=s), grid)
            y = solve_rde(vfs, rp, [0.0])
            out.append(hoelder_seminorm(y.values, beta, grid) / apriori_bracket(vfs, rp, beta))
        return np.array(out)

    c_hat = ratios(range(100)).max()
    assert np.all(ratios(range(100, 200)) <= 1.5 * c_hat)


def test_stability_identical_equations():
    vfs = cos_vfs(lambda y, p: np.sin(y), f_sup=1, f_lip=1)
    rp, _ = sample_lift(NoiseSpec("brownian_ito", 1, seed=3), Grid(1.0, 50))
    res = stability_gap(vfs, vfs, lambda y: np.sin(y), rp, [0.1], 0.4)
    assert res.gap_norm == 0.0 and res.M_norm == 0.0
    assert not np.any(res.M)
    assert res.bracket == pytest.approx(math.exp(homogeneous_norm(rp) ** 2))


def test_stability_requires_shared_sigma():
    a, b = cos_vfs(), cos_vfs()
    with pytest.raises(ValueError):
        stability_gap(a, b, np.sin, zero_rough_path(Grid(1.0, 4), 1), [0.0], 0.4)


def _with_drift(base, f):
    return VectorFieldSet(base.sigma, base.dsigma, f, base.d2sigma, None, base.sigma_norm, 1.0, 1.0, True, True)


def test_stability_monotone_response():
    base = cos_vfs(lambda y, p: np.sin(y), f_sup=1, f_lip=1)
    g = lambda y: np.sin(y)
    for s in range(5):
        rp, _ = sample_lift(NoiseSpec("brownian_ito", 1, seed=s), Grid(1.0, 100))
        full = stability_gap(base, _with_drift(base, lambda y, p: np.sin(y) + 0.4), g, rp, [0.0], 0.4)
        half = stability_gap(base, _with_drift(base, lambda y, p: np.sin(y) + 0.2), g, rp, [0.0], 0.4)
        assert half.M_norm < full.M_norm
        assert half.gap_norm <= full.gap_norm * 1.05


def test_stability_envelope_on_holdout():
    # Y solves the g-drift equation, Ytilde a perturbed one; fit C on 25 seeds, assert on 25 more
    base = cos_vfs(lambda y, p: np.sin(y), f_sup=1, f_lip=1)
    pert = _with_drift(base, lambda y, p: np.sin(y) + 0.3 * np.cos(2 * y))
    grid = Grid(1.0, 64)

    def ratios(seeds):
        out = []
        for s in seeds:
            rp, _ = sample_lift(NoiseSpec("brownian_ito", 1, seed=s), grid)
            r = stability_gap(base, pert, np.sin, rp, [0.0], 0.4, nu=1.0)
            out.append(r.gap_norm / (r.M_norm * r.bracket))
        return np.array(out)

    c_hat = ratios(range(25)).max()
    assert np.all(ratios(range(25, 50)) <= 1.5 * c_hat)
