"""Khas'minskii auxiliary process, drift decomposition and the averaging study.

The study compares the slow component ``X^eps`` of the slow-fast system with
the solution ``Xbar`` of the averaged equation driven by the same rough path
``B``, measuring ``E ||X^eps - Xbar||_beta^p`` on a common grid for a
decreasing list of ``eps``.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import Grid, GridRoughPath, hoelder_seminorm
from .frozen import FbarTable, FrozenModel, averaged_drift, solve_averaged
from .lifts import NoiseSpec, brownian_ito_lift, mixed_lift, sample_lift
from .models import get_model
from .rde import ExplosionError
from .slowfast import MicroStepPolicy, SlowFastCoeffs, fast_step, solve_slow_fast_batch
from .stats import loglog_slope, mean_stderr

VERSION = "0.1.0"


def floor_to_block(s, delta: float):
    """``floor(s / delta) * delta``; a point within 1e-9 blocks of a breakpoint counts as on it."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    return np.floor(np.asarray(s, dtype=float) / delta + 1e-9) * delta


def delta_schedule(epsilon: float, beta: float, mode="power_log", step: Optional[float] = None, horizon: Optional[float] = None, value=None):
    """Block length ``eps^{1/(4 beta)} log(1/eps)`` clamped into ``(step, horizon / 2]``.

    ``mode="fixed"`` returns ``value`` unchanged.
    """
    if mode == "fixed":
        if value is None or value <= 0:
            raise ValueError("fixed mode needs a positive value")
        return float(value)
    if mode != "power_log":
        raise ValueError(f"unknown delta mode {mode!r}")
    if not 0 < epsilon < 1:
        raise ValueError(f"power_log schedule needs 0 < epsilon < 1, got {epsilon}")
    d = epsilon ** (1.0 / (4 * beta)) * math.log(1.0 / epsilon)
    if horizon is not None and d > horizon / 2:
        warnings.warn(f"delta {d:.4g} clamped to T/2 = {horizon / 2:.4g}", RuntimeWarning)
        d = horizon / 2
    if step is not None and d <= step:
        warnings.warn(f"delta {d:.4g} raised to the grid step {step:.4g}", RuntimeWarning)
        d = step
    return d


def block_indices(grid: Grid, delta: float) -> np.ndarray:
    """Grid index of ``s(delta)`` for every node (last node at or before it)."""
    sd = floor_to_block(grid.times - grid.start, delta)
    idx = np.floor(sd / grid.step + 1e-9).astype(int)
    return np.minimum(idx, np.arange(grid.n_steps + 1))


def khasminskii_aux(coeffs: SlowFastCoeffs, X_eps_path, W, epsilon: float, delta: float, y0, grid: Grid, include_w2: bool = True):
    """Fast process with the slow argument frozen at ``X^eps_{s(delta)}``.

    ``X_eps_path`` is ``(N+1, m)`` or a batch ``(S, N+1, m)``; ``W`` is the
    Brownian block of the mixed lift (a rough path or a list of them, one per
    batch member), so the same noise drives ``Y^eps`` and ``Yhat``.  The fast
    update is that of the slow-fast solver without the cross term.
    """
    X = np.asarray(X_eps_path, dtype=float)
    single = X.ndim == 2
    Ws = [W] if isinstance(W, GridRoughPath) else list(W)
    if single:
        X = X[None]
    if len(Ws) != X.shape[0] or any(w.grid != grid for w in Ws):
        raise ValueError("noise and slow path do not match")
    w1 = np.stack([w.increments for w in Ws])
    w2 = np.stack([w.level2_cells for w in Ws])
    idx = block_indices(grid, delta)
    s = X.shape[0]
    y = np.broadcast_to(np.asarray(y0, dtype=float), (s, coeffs.n)).copy()
    out = np.empty((s, grid.n_steps + 1, coeffs.n))
    out[:, 0] = y
    for k in range(grid.n_steps):
        xf = X[:, idx[k]]
        y = fast_step(coeffs, xf, y, w1[:, k], w2[:, k], grid.step, epsilon, None, include_w2)
        if not np.all(np.isfinite(y)):
            raise ExplosionError(k + 1)
        out[:, k + 1] = y
    return out[0] if single else out


def _noise_pair(spec_b: NoiseSpec, grid: Grid, seed: int, path: int, e: int):
    """Driver ``B`` and Brownian ``W`` for one Monte Carlo path.

    Stream ids: ``2 * path`` for ``B`` and ``2 * path + 1`` for ``w``.
    """
    b_spec = dataclasses.replace(spec_b, seed=seed, stream_id=2 * path)
    B, _ = sample_lift(b_spec, grid)
    w_spec = NoiseSpec("brownian_ito", e, None, spec_b.substeps, seed, 2 * path + 1)
    W, inc = brownian_ito_lift(w_spec, grid)
    return B, W, inc


def aux_gap_slope(
    coeffs: SlowFastCoeffs,
    epsilon: float,
    delta_list: Sequence[float],
    M_mc: int,
    beta: float,
    seed: int = 0,
    horizon: float = 1.0,
    noise: Optional[NoiseSpec] = None,
    z0=(0.5, 0.0),
    policy: MicroStepPolicy = MicroStepPolicy(),
) -> dict:
    """Regress ``log sup_t E|Y^eps_t - Yhat_t|^2`` on ``log delta``.

    Returns the slope, its delete-one jackknife standard error, the gap
    curve and a ``degenerate`` flag (set when all gaps vanish).
    """
    deltas = np.asarray(delta_list, dtype=float)
    if deltas.size < 2 or deltas.max() / deltas.min() < 10 * (1 - 1e-9):
        raise ValueError("delta values must span at least one decade")
    noise = noise or NoiseSpec("fbm", coeffs.d, hurst=0.45)
    grid = Grid(horizon, policy.n_steps(horizon, epsilon))
    xis, Ws = [], []
    for j in range(M_mc):
        B, W, inc = _noise_pair(noise, grid, seed, j, coeffs.e)
        xis.append(mixed_lift(B, inc, grid, W.stream_id))
        Ws.append(W)
    sols = solve_slow_fast_batch(coeffs, xis, epsilon, z0, policy)
    X = np.stack([s.X for s in sols])
    Y = np.stack([s.Y for s in sols])
    sq = []
    for dl in deltas:
        yh = khasminskii_aux(coeffs, X, Ws, epsilon, dl, np.asarray(z0)[coeffs.m :], grid, policy.include_w2)
        sq.append(np.sum((Y - yh) ** 2, axis=-1))
    sq = np.stack(sq)  # (n_delta, M, N+1)
    gaps = sq.mean(axis=1).max(axis=-1)
    if np.all(gaps < 1e-24):
        return {"slope": float("nan"), "stderr": float("nan"), "gaps": gaps, "deltas": deltas, "degenerate": True}
    slope, _, _ = loglog_slope(deltas, gaps)
    total = sq.sum(axis=1)
    jk = []
    for j in range(M_mc):
        g = ((total - sq[:, j]) / (M_mc - 1)).max(axis=-1)
        jk.append(loglog_slope(deltas, g)[0])
    jk = np.array(jk)
    se = float(np.sqrt((M_mc - 1) / M_mc * np.sum((jk - jk.mean()) ** 2)))
    return {"slope": slope, "stderr": se, "gaps": gaps, "deltas": deltas, "degenerate": False}


def _left_integral(vals, dt):
    out = np.zeros((vals.shape[0],) + vals.shape[1:])
    out[1:] = np.cumsum(vals[:-1] * dt, axis=0)
    return out


def decompose_M(coeffs: SlowFastCoeffs, X, Y, Yhat, fbar, delta: float, grid: Grid, gamma: float = 0.5) -> dict:
    """The four drift-difference integrals splitting ``int (f(X, Y) - fbar(X)) ds``.

    1. ``f(X_s, Y_s) - f(X_{s(delta)}, Y_s)``
    2. ``f(X_{s(delta)}, Y_s) - f(X_{s(delta)}, Yhat_s)``
    3. ``f(X_{s(delta)}, Yhat_s) - fbar(X_{s(delta)})``
    4. ``fbar(X_{s(delta)}) - fbar(X_s)``

    Left-point quadrature on ``grid``.  Terms 1, 2, 4 are measured in the
    Lipschitz norm, term 3 in the ``gamma``-Hölder norm.
    """
    X, Y, Yhat = (np.asarray(a, dtype=float) for a in (X, Y, Yhat))
    n1 = grid.n_steps + 1
    if not (X.shape[0] == Y.shape[0] == Yhat.shape[0] == n1):
        raise ValueError("paths do not live on the given grid")
    Xd = X[block_indices(grid, delta)]
    f = coeffs.f
    fb = lambda x: np.asarray(fbar(x), dtype=float).reshape(x.shape[0], -1)
    integrands = [
        f(X, Y) - f(Xd, Y),
        f(Xd, Y) - f(Xd, Yhat),
        f(Xd, Yhat) - fb(Xd),
        fb(Xd) - fb(X),
    ]
    terms = np.stack([_left_integral(v, grid.step) for v in integrands])
    norms = [hoelder_seminorm(terms[i], 1.0 if i != 2 else gamma, grid) for i in range(4)]
    return {"terms": terms, "norms": np.array(norms), "total": terms.sum(axis=0)}


@dataclass(frozen=True)
class StudySpec:
    model: str = "ou_sine"
    model_params: dict = field(default_factory=dict)
    epsilons: tuple = (0.5, 0.1, 0.02)
    p: float = 1.0
    beta: float = 0.4
    M_mc: int = 64
    horizon: float = 1.0
    seed: int = 42
    noise: str = "fbm"
    hurst: Optional[float] = 0.45
    substeps: int = 8
    x0: float = 0.5
    y0: float = 0.0
    c_micro: float = 0.1
    fbar_method: str = "closed_form"
    fbar_budget: dict = field(default_factory=dict)
    fbar_nodes: int = 41
    fbar_half_width: float = 5.0
    delta_mode: str = "power_log"
    delta_value: Optional[float] = None

    def __post_init__(self):
        eps = tuple(float(e) for e in self.epsilons)
        object.__setattr__(self, "epsilons", eps)
        if any(not 0 < e <= 1 for e in eps):
            raise ValueError("epsilon values must lie in (0, 1]")
        if list(eps) != sorted(eps, reverse=True):
            raise ValueError("epsilon list must be descending")
        if self.p < 1:
            raise ValueError("p must be at least 1")
        if not 1 / 3 < self.beta < 0.5:
            raise ValueError("beta must lie in (1/3, 1/2)")
        if self.noise == "fbm" and not self.beta < self.hurst:
            raise ValueError("beta must be below the driver's Hurst index")
        if self.M_mc < 1:
            raise ValueError("M_mc must be positive")

    def noise_spec(self, dim: int) -> NoiseSpec:
        return NoiseSpec(self.noise, dim, self.hurst if self.noise == "fbm" else None, self.substeps)

    def grid(self) -> Grid:
        pol = MicroStepPolicy(self.c_micro)
        return Grid(self.horizon, pol.n_steps(self.horizon, min(self.epsilons)))


@dataclass(frozen=True, eq=False)
class StudyResult:
    spec: StudySpec
    epsilons: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n: np.ndarray
    slope: float
    slope_stderr: float
    samples: np.ndarray
    lift_hashes: list
    deltas: list
    runtime: float

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write(self.csv_text())

    def csv_text(self) -> str:
        lines = ["epsilon,mean,stderr,n"]
        for e, m, s, n in zip(self.epsilons, self.mean, self.stderr, self.n):
            lines.append(f"{float(e)!r},{float(m)!r},{float(s)!r},{int(n)}")
        return "\n".join(lines) + "\n"

    def manifest(self) -> dict:
        return {
            "version": VERSION,
            "config": _jsonable(dataclasses.asdict(self.spec)),
            "master_seed": self.spec.seed,
            "stream_layout": "B: 2*path, w: 2*path+1",
            "grid_steps": self.spec.grid().n_steps,
            "deltas": self.deltas,
            "slope": self.slope,
            "slope_stderr": self.slope_stderr,
            "lift_hashes": self.lift_hashes,
            "runtime_seconds": self.runtime,
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.manifest(), fh, indent=2, sort_keys=True)

    def plot_data(self) -> str:
        lines = ["log_epsilon,log_mean"]
        for e, m in zip(self.epsilons, self.mean):
            lines.append(f"{math.log(e)!r},{math.log(m) if m > 0 else float('nan')!r}")
        return "\n".join(lines) + "\n"

    def monotone_separated(self, k: float = 2.0) -> bool:
        """Means strictly decrease along the epsilon list with ``k`` combined stderr gaps."""
        ok = True
        for i in range(len(self.mean) - 1):
            comb = math.hypot(self.stderr[i], self.stderr[i + 1])
            ok &= bool(self.mean[i] - self.mean[i + 1] >= k * comb)
        return ok


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


class StudyError(RuntimeError):
    pass


def _fbar_callable(spec: StudySpec, coeffs: SlowFastCoeffs):
    model = FrozenModel.from_coeffs(coeffs)
    if spec.fbar_method == "closed_form":
        fb = coeffs.closed_form.get("fbar")
        if fb is None:
            raise StudyError(f"model {coeffs.name} has no closed-form fbar")
        return fb
    # tabulated around x0; a path leaving the table raises
    lo, hi = spec.x0 - spec.fbar_half_width, spec.x0 + spec.fbar_half_width
    xs = np.linspace(lo, hi, spec.fbar_nodes)
    vals, errs = [], []
    for i, x in enumerate(xs):
        r = averaged_drift(model, [x], spec.fbar_method, spec.fbar_budget, spec.seed, stream_id=2**32 + i)
        vals.append(r.value[0])
        errs.append(r.stderr[0])
    table = FbarTable(xs, np.array(vals), np.array(errs))
    return lambda x: table(np.asarray(x)[..., 0])[..., None]


def _run_paths(spec: StudySpec, paths: Sequence[int]):
    """Norm samples ``||X^eps - Xbar||_beta^p`` for the given path indices."""
    coeffs = get_model(spec.model, **spec.model_params)
    grid = spec.grid()
    policy = MicroStepPolicy(spec.c_micro)
    fbar = _fbar_callable(spec, coeffs)
    nspec = spec.noise_spec(coeffs.d)
    xis, xbars, hashes = [], [], []
    for j in paths:
        B, W, inc = _noise_pair(nspec, grid, spec.seed, j, coeffs.e)
        h_before = B.content_hash()
        try:
            xbar = solve_averaged(fbar, coeffs.sigma, coeffs.dsigma, B, [spec.x0])
        except ExplosionError as exc:
            raise StudyError(f"averaged solve exploded (path {j}): {exc}") from exc
        xi = mixed_lift(B, inc, grid, W.stream_id)
        if B.content_hash() != h_before or not np.array_equal(xi.level1[:, : coeffs.d], B.level1):
            raise StudyError("driver changed between the averaged and slow-fast runs")
        xis.append(xi)
        xbars.append(xbar.values)
        hashes.append(h_before)
    out = np.empty((len(paths), len(spec.epsilons)))
    z0 = np.concatenate([np.full(coeffs.m, spec.x0), np.full(coeffs.n, spec.y0)])
    for i, eps in enumerate(spec.epsilons):
        try:
            sols = solve_slow_fast_batch(coeffs, xis, eps, z0, policy)
        except ExplosionError as exc:
            raise StudyError(f"slow-fast run exploded at epsilon={eps}, paths {paths[0]}..{paths[-1]}: {exc}") from exc
        for j, sol in enumerate(sols):
            out[j, i] = hoelder_seminorm(sol.X - xbars[j], spec.beta, grid) ** spec.p
    return out, hashes


def convergence_study(spec: StudySpec, workers: int = 1) -> StudyResult:
    """Monte Carlo estimate of ``E ||X^eps - Xbar||_beta^p`` for each epsilon."""
    t0 = time.time()
    paths = list(range(spec.M_mc))
    if workers <= 1 or spec.M_mc < 2:
        samples, hashes = _run_paths(spec, paths)
    else:
        chunks = [c.tolist() for c in np.array_split(np.array(paths), min(workers, spec.M_mc)) if c.size]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_run_paths, [spec] * len(chunks), chunks))
        samples = np.concatenate([p[0] for p in parts])
        hashes = [h for p in parts for h in p[1]]
    mean, se = mean_stderr(samples, axis=0)
    eps = np.array(spec.epsilons)
    try:
        slope, _, slope_se = loglog_slope(eps, mean)
    except ValueError:
        slope, slope_se = float("nan"), float("nan")
    grid = spec.grid()
    deltas = []
    for e in spec.epsilons:
        if spec.delta_mode == "fixed":
            deltas.append(delta_schedule(e, spec.beta, "fixed", value=spec.delta_value))
        elif e < 1:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                deltas.append(delta_schedule(e, spec.beta, "power_log", grid.step, spec.horizon))
        else:
            deltas.append(None)
    return StudyResult(
        spec,
        eps,
        np.atleast_1d(mean),
        np.atleast_1d(se),
        np.full(eps.size, samples.shape[0]),
        slope,
        slope_se,
        samples,
        hashes,
        deltas,
        time.time() - t0,
    )
