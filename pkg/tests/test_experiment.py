import dataclasses
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from roughavg.core import Grid
from roughavg.experiment import (
    StudySpec,
    aux_gap_slope,
    block_indices,
    convergence_study,
    decompose_M,
    delta_schedule,
    floor_to_block,
    khasminskii_aux,
)
from roughavg.lifts import NoiseSpec, brownian_ito_lift, fbm_lift, mixed_lift
from roughavg.models import get_model
from roughavg.slowfast import MicroStepPolicy, solve_slow_fast_batch


def test_floor_to_block_examples():
    assert floor_to_block(0.0, 0.1) == 0.0
    assert floor_to_block(0.1, 0.1) == pytest.approx(0.1)
    assert floor_to_block(0.37, 0.1) == pytest.approx(0.3)
    assert floor_to_block(0.3, 0.1) == pytest.approx(0.3)
    with pytest.raises(ValueError):
        floor_to_block(1.0, 0.0)


@given(s=st.floats(0, 100), delta=st.floats(1e-3, 10))
def test_floor_to_block_property(s, delta):
    v = float(floor_to_block(s, delta))
    assert v <= s + 1e-9 * delta and s - v < delta * (1 + 1e-9)
    assert abs(v / delta - round(v / delta)) < 1e-6


def test_delta_schedule_examples():
    assert delta_schedule(math.exp(-1), 0.5) == pytest.approx(0.6065, abs=1e-4)
    # 0.01^(1/1.8) = 10^(-10/9) = 0.07743, ln 100 = 4.60517
    assert delta_schedule(0.01, 0.45) == pytest.approx(0.3565, abs=1e-4)
    with pytest.warns(RuntimeWarning, match="clamped"):
        assert delta_schedule(math.exp(-1), 0.5, horizon=1.0) == 0.5
    with pytest.warns(RuntimeWarning, match="raised"):
        assert delta_schedule(1e-8, 0.4, step=0.01) == 0.01
    assert delta_schedule(0.3, 0.4, mode="fixed", value=0.25) == 0.25
    for bad in (1.0, 2.0):
        with pytest.raises(ValueError):
            delta_schedule(bad, 0.4)
    with pytest.raises(ValueError):
        delta_schedule(0.1, 0.4, mode="fixed")
    with pytest.raises(ValueError):
        delta_schedule(0.1, 0.4, mode="other")


def test_block_indices():
    idx = block_indices(Grid(1.0, 10), 0.3)
    np.testing.assert_array_equal(idx, [0, 0, 0, 3, 3, 3, 6, 6, 6, 9, 9])


def _pair(seed, grid, e=1):
    B = fbm_lift(NoiseSpec("fbm", 1, hurst=0.45, substeps=4, seed=seed, stream_id=0), grid)
    W, inc = brownian_ito_lift(NoiseSpec("brownian_ito", e, substeps=4, seed=seed, stream_id=1), grid)
    return B, W, mixed_lift(B, inc, grid, 1)


def test_khasminskii_full_block_is_frozen_run():
    coeffs = get_model("cubic")
    eps = 0.2
    grid = Grid(1.0, MicroStepPolicy().n_steps(1.0, eps))
    B, W, xi = _pair(0, grid)
    sol = solve_slow_fast_batch(coeffs, [xi], eps, [0.5, 0.3])[0]
    yh = khasminskii_aux(coeffs, sol.X, W, eps, 1.0, [0.3], grid)
    # frozen reference: same fast update with the slow variable pinned at x0
    still = dataclasses.replace(
        coeffs,
        f=lambda x, y: np.zeros(np.broadcast_shapes(x.shape, y.shape)),
        sigma=lambda x: np.zeros(x.shape + (1,)),
        dsigma=lambda x: np.zeros(x.shape + (1, 1)),
    )
    ref = solve_slow_fast_batch(still, [xi], eps, [0.5, 0.3])[0]
    np.testing.assert_array_equal(ref.X, np.full_like(ref.X, 0.5))
    np.testing.assert_array_equal(yh, ref.Y)


def test_khasminskii_x_independent_equals_fast():
    coeffs = get_model("ou_sine", c0=0.0)
    eps = 0.2
    grid = Grid(1.0, MicroStepPolicy().n_steps(1.0, eps))
    runs = [_pair(s, grid) for s in range(3)]
    sols = solve_slow_fast_batch(coeffs, [r[2] for r in runs], eps, [0.5, 0.0])
    X = np.stack([s.X for s in sols])
    yh = khasminskii_aux(coeffs, X, [r[1] for r in runs], eps, 0.1, [0.0], grid)
    np.testing.assert_array_equal(yh, np.stack([s.Y for s in sols]))
    with pytest.raises(ValueError):
        khasminskii_aux(coeffs, X, [runs[0][1]], eps, 0.1, [0.0], grid)


def test_aux_gap_slope_degenerate_and_errors():
    coeffs = get_model("ou_sine", c0=0.0)
    res = aux_gap_slope(coeffs, 0.2, [0.05, 0.5], 4, 0.4)
    assert res["degenerate"] and math.isnan(res["slope"])
    with pytest.raises(ValueError):
        aux_gap_slope(coeffs, 0.2, [0.1, 0.5], 4, 0.4)


def test_aux_gap_slope_stderr_scaling():
    coeffs = get_model("ou_sine")
    deltas = [0.05, 0.1, 0.2, 0.5]
    small = aux_gap_slope(coeffs, 0.1, deltas, 64, 0.4, seed=3)
    large = aux_gap_slope(coeffs, 0.1, deltas, 256, 0.4, seed=3)
    assert not small["degenerate"] and np.all(np.diff(large["gaps"]) > 0)
    # four times the paths: stderr roughly halves
    assert 1.3 < small["stderr"] / large["stderr"] < 3.0


def test_decompose_trivial_cases():
    coeffs = dataclasses.replace(get_model("ou_sine"), f=lambda x, y: np.full(np.broadcast_shapes(x.shape, y.shape), 0.7))
    grid = Grid(1.0, 20)
    rng = np.random.default_rng(0)
    X, Y, Yh = (rng.normal(size=(21, 1)) for _ in range(3))
    res = decompose_M(coeffs, X, Y, Yh, lambda x: np.full(x.shape, 0.7), 0.2, grid)
    assert not np.any(res["terms"]) and not np.any(res["norms"])
    res = decompose_M(get_model("ou_sine"), X, Y, Y, lambda x: np.sin(x), 0.2, grid)
    assert not np.any(res["terms"][1])
    with pytest.raises(ValueError):
        decompose_M(coeffs, X[:-1], Y, Yh, np.sin, 0.2, grid)


def test_decompose_telescopes():
    coeffs = get_model("ou_sine")
    fb = coeffs.closed_form["fbar"]
    grid = Grid(1.0, 50)
    rng = np.random.default_rng(1)
    X, Y, Yh = (np.cumsum(rng.normal(size=(51, 1)) * 0.1, axis=0) for _ in range(3))
    res = decompose_M(coeffs, X, Y, Yh, fb, 0.2, grid)
    direct = np.concatenate([[[0.0]], np.cumsum((coeffs.f(X, Y) - fb(X))[:-1] * grid.step, axis=0)])
    np.testing.assert_allclose(res["total"], direct, atol=1e-14)
    assert res["norms"].shape == (4,)


def test_study_spec_validation():
    for bad in (
        dict(epsilons=(0.1, 0.5)),
        dict(epsilons=(1.5,)),
        dict(p=0.5),
        dict(beta=0.3),
        dict(beta=0.46),
        dict(M_mc=0),
    ):
        with pytest.raises(ValueError):
            StudySpec(**bad)


def test_study_identical_equations_give_zero():
    spec = StudySpec(model_params={"f_scale": 0.0, "c0": 0.0}, epsilons=(0.5, 0.2), M_mc=4, substeps=2)
    res = convergence_study(spec)
    assert not np.any(res.samples)
    assert res.csv_text().splitlines()[0] == "epsilon,mean,stderr,n"


def test_study_deterministic_smooth_driver(tmp_path):
    spec = StudySpec(noise="deterministic_smooth", hurst=None, epsilons=(0.5, 0.1, 0.02), M_mc=16, substeps=2)
    res = convergence_study(spec)
    assert res.monotone_separated(2.0), (res.mean, res.stderr)
    # every path sees the same smooth B
    assert len(set(res.lift_hashes)) == 1
    res.to_csv(tmp_path / "s.csv")
    res.to_json(tmp_path / "s.json")
    man = json.loads((tmp_path / "s.json").read_text())
    assert man["master_seed"] == 42 and man["grid_steps"] == spec.grid().n_steps
    assert (tmp_path / "s.csv").read_text() == res.csv_text()
    assert res.plot_data().startswith("log_epsilon,log_mean")
