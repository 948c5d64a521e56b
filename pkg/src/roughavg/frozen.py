"""Frozen fast dynamics, invariant-measure statistics and the averaged drift.

For fixed ``x`` the frozen equation is ``dY = g(x, Y) dt + h(x, Y) dw``.
Everything here simulates it by batched Euler-Maruyama with counter-based
Gaussian increments.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .core import GridControlledPath, GridRoughPath
from .lifts import make_rng
from .rde import EXPLOSION_THRESHOLD, ExplosionError, VectorFieldSet, solve_rde
from .slowfast import SlowFastCoeffs
from .stats import fit_envelope, loglog_slope, mean_stderr

_CHUNK = 256


@dataclass(frozen=True)
class FrozenModel:
    """Fast coefficients ``g(x, y)``, ``h(x, y)``, slow drift ``f`` and metadata."""

    g: Callable
    h: Callable
    f: Callable
    n: int
    e: int
    gamma1: float
    gamma2: float
    eta3: float
    closed_form: dict

    @classmethod
    def from_coeffs(cls, coeffs: SlowFastCoeffs) -> "FrozenModel":
        mt = coeffs.meta
        return cls(coeffs.g, coeffs.h, coeffs.f, coeffs.n, coeffs.e, mt.gamma1, mt.gamma2, mt.eta3, dict(coeffs.closed_form))


def _em_states(model: FrozenModel, x, y0, n_steps: int, h_step: float, rng, n_paths: int, n_noise: Optional[int] = None):
    """Yield ``(k, Y_{t_k})`` for ``k = 0..n_steps`` over a batch of paths.

    With ``n_noise`` set, only that many noise paths are drawn and tiled
    across the batch (synchronous coupling of the tiles).
    """
    n_noise = n_paths if n_noise is None else n_noise
    reps = n_paths // n_noise
    x = np.broadcast_to(np.atleast_1d(np.asarray(x, dtype=float)), (n_paths,) + np.atleast_1d(x).shape[-1:])
    y = np.broadcast_to(np.atleast_1d(np.asarray(y0, dtype=float)), (n_paths, model.n)).copy()
    sq = np.sqrt(h_step)
    yield 0, y
    k = 0
    while k < n_steps:
        c = min(_CHUNK, n_steps - k)
        dw = rng.standard_normal((c, n_noise, model.e)) * sq
        if reps > 1:
            dw = np.tile(dw, (1, reps, 1))
        for j in range(c):
            y = y + model.g(x, y) * h_step + np.einsum("pnb,pb->pn", model.h(x, y), dw[j])
            k += 1
            if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > EXPLOSION_THRESHOLD:
                raise ExplosionError(k)
            yield k, y


def _n_steps(T, h_step):
    if h_step <= 0:
        raise ValueError("h_step must be positive")
    return int(round(T / h_step))


def solve_frozen(model: FrozenModel, x, y, T_long: float, h_step: float, seed: int, n_paths: int = 1, stream_id: int = 0):
    """Euler-Maruyama paths of the frozen equation; returns ``(times, paths)``.

    ``paths`` has shape ``(n_paths, K + 1, n)`` with ``K = T_long / h_step``.
    """
    n = _n_steps(T_long, h_step)
    rng = make_rng(seed, stream_id)
    out = np.empty((n_paths, n + 1, model.n))
    for k, yk in _em_states(model, x, y, n, h_step, rng, n_paths):
        out[:, k] = yk
    return h_step * np.arange(n + 1), out


def _at_times(model, x, y0, times, h_step, rng, n_paths, fn=None, n_noise=None):
    """Collect ``fn(Y_t)`` (default ``Y_t``) at the requested times."""
    idx = np.array([_n_steps(t, h_step) for t in times])
    want = {int(k): i for i, k in enumerate(idx)}
    res = [None] * len(idx)
    for k, yk in _em_states(model, x, y0, int(idx.max()), h_step, rng, n_paths, n_noise):
        if k in want:
            v = yk if fn is None else fn(yk)
            for i, kk in enumerate(idx):
                if kk == k:
                    res[i] = np.array(v)
    return np.stack(res)


class DecayCurve(NamedTuple):
    times: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray
    envelope: np.ndarray
    passed: bool


def contraction_check(model: FrozenModel, x, y1, y2, times, n_seeds: int = 100, h_step: float = 1e-3, seed: int = 0, tol: float = 0.01) -> DecayCurve:
    """Synchronously coupled ``E|Y^{x,y1}_t - Y^{x,y2}_t|^2`` against ``exp(-gamma2 t)|y1 - y2|^2``."""
    y1 = np.atleast_1d(np.asarray(y1, dtype=float))
    y2 = np.atleast_1d(np.asarray(y2, dtype=float))
    y0 = np.concatenate([np.broadcast_to(y1, (n_seeds, model.n)), np.broadcast_to(y2, (n_seeds, model.n))])
    rng = make_rng(seed, 0)
    states = _at_times(model, x, y0, times, h_step, rng, 2 * n_seeds, n_noise=n_seeds)
    diff = states[:, :n_seeds] - states[:, n_seeds:]
    sq = np.sum(diff**2, axis=-1)
    est, se = mean_stderr(sq, axis=1)
    env = np.exp(-model.gamma2 * np.asarray(times)) * np.sum((y1 - y2) ** 2)
    return DecayCurve(np.asarray(times, dtype=float), est, se, env, bool(np.all(est <= env * (1 + tol) + 1e-300)))


class AveragedDrift(NamedTuple):
    value: np.ndarray
    stderr: np.ndarray
    method: str
    ok: bool


DEFAULT_BUDGET = {
    "n_seeds": 4096,
    "T_mix": None,
    "h_step": 1e-2,
    "T_long": 200.0,
    "T_burn": None,
    "n_chains": 256,
    "y0": None,
    "tol": None,
}


def averaged_drift(model: FrozenModel, x, method: str = "endpoint_mc", budget: Optional[dict] = None, seed: int = 0, stream_id: int = 0) -> AveragedDrift:
    """``fbar(x) = int f(x, y) mu^x(dy)`` by closed form, ergodic average or endpoint Monte Carlo.

    endpoint_mc averages ``f(x, Y_{T_mix})`` over independent seeds
    (default ``T_mix = 10 / gamma2``); ergodic_average averages
    ``f(x, Y_s)`` over ``[T_burn, T_long]`` (default ``T_burn = 5 / gamma2``)
    on several independent chains.  Standard errors treat each seed or chain
    as one independent batch.  If ``budget["tol"]`` is set and the error
    estimate exceeds it a warning is issued and ``ok`` is False.
    """
    b = dict(DEFAULT_BUDGET)
    b.update(budget or {})
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y0 = np.zeros(model.n) if b["y0"] is None else b["y0"]
    if method == "closed_form":
        if "fbar" not in model.closed_form:
            raise ValueError("no closed form registered for this model")
        val = np.atleast_1d(model.closed_form["fbar"](x))
        return AveragedDrift(val, np.zeros_like(val), method, True)
    rng = make_rng(seed, stream_id)
    h = b["h_step"]
    if method == "endpoint_mc":
        T = b["T_mix"] if b["T_mix"] is not None else 10.0 / model.gamma2
        n = _n_steps(T, h)
        for _, yk in _em_states(model, x, y0, n, h, rng, b["n_seeds"]):
            pass
        samples = model.f(np.broadcast_to(x, (b["n_seeds"], x.size)), yk)
        val, se = mean_stderr(samples, axis=0)
    elif method == "ergodic_average":
        tb = b["T_burn"] if b["T_burn"] is not None else 5.0 / model.gamma2
        kb, kl = _n_steps(tb, h), _n_steps(b["T_long"], h)
        if kl <= kb:
            raise ValueError("T_long must exceed T_burn")
        nc = b["n_chains"]
        xs = np.broadcast_to(x, (nc, x.size))
        acc = 0.0
        for k, yk in _em_states(model, x, y0, kl, h, rng, nc):
            if k >= kb and k < kl:
                acc = acc + model.f(xs, yk)
        chains = acc / (kl - kb)
        val, se = mean_stderr(chains, axis=0)
    else:
        raise ValueError(f"unknown method {method!r}")
    ok = True
    if b["tol"] is not None and np.max(se) > b["tol"]:
        warnings.warn(f"averaged drift error estimate {np.max(se):.3g} exceeds tolerance {b['tol']:.3g}", RuntimeWarning)
        ok = False
    return AveragedDrift(np.atleast_1d(val), np.atleast_1d(se), method, ok)


def invariant_moment_check(model: FrozenModel, x, q: float, budget: Optional[dict] = None, seed: int = 0) -> dict:
    """Long-run ``E|Y|^q`` at horizons ``T`` and ``2T`` plus their ratio.

    ``budget`` keys: ``n_paths`` (2048), ``T`` (``10 / gamma2``), ``h_step``
    (1e-2), ``y0`` (0).
    """
    b = {"n_paths": 2048, "T": 10.0 / model.gamma2, "h_step": 1e-2, "y0": None}
    b.update(budget or {})
    y0 = np.zeros(model.n) if b["y0"] is None else b["y0"]
    rng = make_rng(seed, 0)
    states = _at_times(model, x, y0, [b["T"], 2 * b["T"]], b["h_step"], rng, b["n_paths"])
    mom = np.sum(states**2, axis=-1) ** (q / 2)
    m, se = mean_stderr(mom, axis=1)
    return {"moment": float(m[0]), "moment_doubled": float(m[1]), "stderr": se, "ratio": float(m[1] / m[0])}


def transient_moments(model: FrozenModel, x, y, q: float, times, n_paths: int = 2048, h_step: float = 1e-2, seed: int = 0):
    """``E|Y^{x,y}_t|^q`` on ``times`` with standard errors."""
    rng = make_rng(seed, 0)
    states = _at_times(model, x, y, times, h_step, rng, n_paths)
    mom = np.sum(states**2, axis=-1) ** (q / 2)
    return mean_stderr(mom, axis=1)


def moment_envelope_check(model: FrozenModel, x, y, q: float, times, n_paths: int = 2048, h_step: float = 1e-2, seeds=(0, 1), factor: float = 1.5) -> dict:
    """Fit ``C_q`` in ``E|Y_t|^q <= exp(-t q gamma1 / 4)|y|^q + C_q (1 + |x|^{q eta3 / 2})`` and test it on a holdout seed."""
    times = np.asarray(times, dtype=float)
    yn = float(np.sum(np.asarray(y, dtype=float) ** 2) ** (q / 2))
    xn = float(np.sum(np.asarray(x, dtype=float) ** 2) ** 0.5)
    decay = np.exp(-times * q * model.gamma1 / 4) * yn
    scale = 1 + xn ** (q * model.eta3 / 2)
    ratios = []
    for s in seeds:
        m, _ = transient_moments(model, x, y, q, times, n_paths, h_step, s)
        ratios.append(np.clip(m - decay, 0, None) / scale)
    c, passed, rel = fit_envelope(ratios[0], ratios[1], factor)
    return {"C_q": c, "passed": passed, "holdout_rel": rel}


def mixing_decay_check(
    model: FrozenModel,
    x,
    y,
    phi: Callable,
    times,
    mu_phi: Optional[float] = None,
    n_paths: int = 4096,
    h_step: float = 1e-2,
    seeds=(0, 1),
    factor: float = 1.5,
) -> dict:
    """Estimate ``|P^x_t phi(y) - mu^x(phi)|`` and fit the exponential envelope.

    ``mu_phi`` defaults to an endpoint estimate at ``t = 20 / gamma2``.  The
    envelope ``C' exp(-gamma2 t / 2)(1 + |x|^{eta3/2} + |y|)`` is fitted on the
    first seed and checked on the second.
    """
    times = np.asarray(times, dtype=float)
    if mu_phi is None:
        rng = make_rng(seeds[0], 99)
        far = _at_times(model, x, y, [20.0 / model.gamma2], h_step, rng, n_paths, phi)
        mu_phi = float(np.mean(far))
    xn = float(np.linalg.norm(np.atleast_1d(x)))
    yn = float(np.linalg.norm(np.atleast_1d(y)))
    shape = np.exp(-model.gamma2 * times / 2) * (1 + xn ** (model.eta3 / 2) + yn)
    curves, errs = [], []
    for s in seeds:
        rng = make_rng(s, 0)
        vals = _at_times(model, x, y, times, h_step, rng, n_paths, phi)
        m, se = mean_stderr(vals.reshape(len(times), n_paths), axis=1)
        curves.append(m)
        errs.append(se)
    gap = [np.abs(c - mu_phi) for c in curves]
    c, passed, rel = fit_envelope(gap[0] / shape, gap[1] / shape, factor)
    return {"times": times, "Ptphi": curves[0], "stderr": errs[0], "gap": gap[0], "mu_phi": mu_phi, "C": c, "passed": passed, "holdout_rel": rel}


def time_average_error(model: FrozenModel, x, y, times, fbar_x, n_paths: int = 1024, h_step: float = 1e-2, seed: int = 0) -> dict:
    """``E|int_0^t (f(x, Y_s) - fbar(x)) ds|^2`` on ``times`` and its log-log slope."""
    times = np.asarray(times, dtype=float)
    idx = [_n_steps(t, h_step) for t in times]
    rng = make_rng(seed, 0)
    x1 = np.atleast_1d(np.asarray(x, dtype=float))
    xs = np.broadcast_to(x1, (n_paths, x1.size))
    acc = np.zeros((n_paths, np.atleast_1d(fbar_x).size))
    out = {}
    for k, yk in _em_states(model, x, y, max(idx), h_step, rng, n_paths):
        if k in idx:
            out[k] = np.sum(acc**2, axis=-1)
        acc = acc + (model.f(xs, yk) - fbar_x) * h_step
    sq = np.stack([out[k] for k in idx])
    m, se = mean_stderr(sq, axis=1)
    slope, _, slope_se = loglog_slope(times, m)
    return {"times": times, "mean_sq": m, "stderr": se, "slope": slope, "slope_stderr": slope_se}


def solve_averaged(fbar: Callable, sigma: Callable, dsigma: Callable, B: GridRoughPath, x0, d2sigma=None) -> GridControlledPath:
    """Averaged equation ``dX = fbar(X) dt + sigma(X) dB`` via the one-step solver."""
    vfs = VectorFieldSet(sigma, dsigma, lambda x, psi: np.asarray(fbar(x), dtype=float), d2sigma)
    return solve_rde(vfs, B, x0)


@dataclass(frozen=True, eq=False)
class FbarTable:
    """Tabulated averaged drift (scalar slow variable) with cubic interpolation."""

    x: np.ndarray
    fbar: np.ndarray
    stderr: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 1 or x.size < 4 or np.any(np.diff(x) <= 0):
            raise ValueError("need at least four strictly increasing nodes")
        object.__setattr__(self, "_spline", CubicSpline(x, np.asarray(self.fbar, dtype=float)))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.x[0], self.x[-1]
        if np.any(x < lo - 1e-12) or np.any(x > hi + 1e-12):
            raise ValueError(f"fbar requested outside the tabulated range [{lo:g}, {hi:g}]")
        return self._spline(x)

    def interpolation_error(self) -> float:
        """Max gap at odd nodes of a spline fitted through the even nodes only."""
        ev = CubicSpline(self.x[::2], self.fbar[::2])
        return float(np.max(np.abs(ev(self.x[1::2]) - self.fbar[1::2])))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "fbar", "stderr"])
            for row in zip(self.x, self.fbar, self.stderr):
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "FbarTable":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls(*(np.array([float(r[k]) for r in rows]) for k in ("x", "fbar", "stderr")))


def build_fbar_table(model: FrozenModel, x_grid, method: str = "endpoint_mc", budget: Optional[dict] = None, seed: int = 0) -> FbarTable:
    """Tabulate ``fbar`` on ``x_grid``; each node uses its own RNG stream."""
    vals, errs = [], []
    for i, x in enumerate(np.asarray(x_grid, dtype=float)):
        r = averaged_drift(model, [x], method, budget, seed, stream_id=i)
        vals.append(r.value[0])
        errs.append(r.stderr[0])
    return FbarTable(np.asarray(x_grid, dtype=float), np.array(vals), np.array(errs))


def reachable_range(rp_norm: float, sigma_norm: float, f_sup: float, beta: float, horizon: float, x0: float, margin: float = 2.0):
    """Interval around ``x0`` covering the a-priori reachable set.

    Uses ``|X_t - x0| <= bracket * T^beta`` with the a-priori bracket and a
    safety ``margin`` standing in for the unknown constant.
    """
    sn = sigma_norm * rp_norm
    bracket = sn ** (1 / beta) + sn + f_sup
    r = margin * bracket * horizon**beta
    return x0 - r, x0 + r
