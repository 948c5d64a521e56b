"""Slow-fast systems driven by a mixed rough path.

The slow variable ``x`` in ``R^m`` is driven by a rough path ``B`` in
``R^d``; the fast variable ``y`` in ``R^n`` by a Brownian motion ``w`` in
``R^e`` on time scale ``epsilon``:

    dx = f(x, y) dt + sigma(x) dB
    dy = eps^-1 g(x, y) dt + eps^-1/2 h(x, y) dw        (Itô)

Both are stepped together with the one-step scheme of the stacked system
``z = (x, y)`` against the joint lift ``Xi = (B, W)``.

Callables broadcast over leading batch axes with shapes
``f: (..., m)``, ``g: (..., n)``, ``h: (..., n, e)``, ``sigma: (..., m, d)``,
``dsigma: (..., m, d, m)``, ``dxh: (..., n, e, m)``, ``dyh: (..., n, e, n)``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import Grid, GridRoughPath, hoelder_seminorm
from .lifts import stratonovich_from_ito
from .rde import EXPLOSION_THRESHOLD, ExplosionError, VectorFieldSet, rough_euler_step


@dataclass(frozen=True)
class AssumptionMeta:
    """Constants of the structural assumptions on ``(f, g, h, sigma)``.

    ``gamma1``: dissipativity rate, ``gamma2``: contraction rate,
    ``eta1``: growth of ``g``, ``eta2``/``r``: x-Lipschitz growth of ``g``,
    ``eta3``: x-growth in the dissipativity bound, ``q``: moment order.
    """

    gamma1: float
    gamma2: float
    eta1: float
    eta2: float
    eta3: float
    q: float
    r: float
    f_sup: float
    f_lip: float
    sigma_norm: float
    h_lip: float

    def __post_init__(self):
        if self.gamma1 <= 0 or self.gamma2 <= 0:
            raise ValueError("gamma1 and gamma2 must be positive")
        if min(self.eta1, self.eta2, self.eta3, self.r) < 0:
            raise ValueError("eta1, eta2, eta3 and r must be nonnegative")
        if self.q < 2:
            raise ValueError("q must be at least 2")
        if not self.q > 2 * self.r:
            raise ValueError(f"need q > 2 r, got q={self.q}, r={self.r}")


@dataclass(frozen=True)
class SlowFastCoeffs:
    name: str
    dims: tuple  # (m, n, d, e)
    f: Callable
    g: Callable
    h: Callable
    sigma: Callable
    dsigma: Callable
    dxh: Callable
    dyh: Callable
    meta: AssumptionMeta
    d2sigma: Optional[Callable] = None
    closed_form: dict = field(default_factory=dict)

    @property
    def m(self):
        return self.dims[0]

    @property
    def n(self):
        return self.dims[1]

    @property
    def d(self):
        return self.dims[2]

    @property
    def e(self):
        return self.dims[3]

    def slow_vfs(self) -> VectorFieldSet:
        """Slow equation as an RDE in ``x`` with parameter ``psi = y``."""
        mt = self.meta
        return VectorFieldSet(
            self.sigma,
            self.dsigma,
            self.f,
            self.d2sigma,
            sigma_norm=mt.sigma_norm,
            f_sup=mt.f_sup,
            f_lip=mt.f_lip,
            bounded=True,
            globally_lipschitz=True,
        )


def _sample_cloud(coeffs, radius, n_samples, rng):
    x = rng.uniform(-radius, radius, (n_samples, coeffs.m))
    y = rng.uniform(-radius, radius, (n_samples, coeffs.n))
    return x, y


def dissipativity_constant(coeffs: SlowFastCoeffs, radius: float = 10.0, n_samples: int = 20000, seed: int = 0) -> float:
    """Smallest ``C`` making the dissipativity bound hold on a sampled cloud.

    ``2<y, g> + (q-1)|h|^2 <= -gamma1 |y|^2 + C(|x|^eta3 + 1)``; a bounded
    answer that does not grow with ``radius`` is evidence for the assumption.
    """
    mt = coeffs.meta
    rng = np.random.default_rng(seed)
    x, y = _sample_cloud(coeffs, radius, n_samples, rng)
    lhs = 2 * np.sum(y * coeffs.g(x, y), axis=-1) + (mt.q - 1) * np.sum(coeffs.h(x, y) ** 2, axis=(-1, -2))
    lhs = lhs + mt.gamma1 * np.sum(y**2, axis=-1)
    return float(np.max(lhs / (np.linalg.norm(x, axis=-1) ** mt.eta3 + 1)))


def monotonicity_margin(coeffs: SlowFastCoeffs, radius: float = 10.0, n_samples: int = 20000, seed: int = 0) -> float:
    """Max over a cloud of ``(2<dy, dg> + |dh|^2 + gamma2 |dy|^2) / |dy|^2``; should be <= 0."""
    rng = np.random.default_rng(seed)
    x, y1 = _sample_cloud(coeffs, radius, n_samples, rng)
    y2 = rng.uniform(-radius, radius, y1.shape)
    dy = y1 - y2
    dg = coeffs.g(x, y1) - coeffs.g(x, y2)
    dh = coeffs.h(x, y1) - coeffs.h(x, y2)
    nd = np.sum(dy**2, axis=-1)
    val = 2 * np.sum(dy * dg, axis=-1) + np.sum(dh**2, axis=(-1, -2)) + coeffs.meta.gamma2 * nd
    return float(np.max(val / nd))


def check_assumptions(coeffs: SlowFastCoeffs, radius: float = 10.0, tol: float = 1e-9) -> dict:
    """Spot-check dissipativity and monotonicity on sampled clouds."""
    c1 = dissipativity_constant(coeffs, radius)
    c2 = dissipativity_constant(coeffs, 2 * radius, seed=1)
    mono = monotonicity_margin(coeffs, radius)
    return {
        "dissipativity_C": c1,
        "dissipativity_C_doubled_radius": c2,
        "dissipativity_ok": bool(np.isfinite(c1) and c2 <= c1 * 1.05 + tol),
        "monotonicity_margin": mono,
        "monotonicity_ok": bool(mono <= tol),
    }


@dataclass(frozen=True)
class MicroStepPolicy:
    """Grid step must satisfy ``h <= c_micro * epsilon``.

    ``include_cross`` keeps the ``I[B, W]`` term of the fast update and
    ``include_w2`` the ``W^2`` term; dropping them quantifies their effect.
    """

    c_micro: float = 0.1
    include_cross: bool = True
    include_w2: bool = True

    def n_steps(self, horizon: float, epsilon: float, n_base: int = 1) -> int:
        """Smallest multiple of ``n_base`` meeting the step bound."""
        need = int(np.ceil(horizon / (self.c_micro * epsilon) - 1e-9))
        return n_base * max(1, -(-need // n_base))

    def validate(self, step: float, epsilon: float):
        if step > self.c_micro * epsilon * (1 + 1e-12):
            raise ValueError(f"grid step {step:g} exceeds c_micro * epsilon = {self.c_micro * epsilon:g}")


def _check_eps(epsilon):
    if not 0 < epsilon <= 1:
        raise ValueError(f"epsilon must lie in (0, 1], got {epsilon}")


def assemble_blocks(coeffs: SlowFastCoeffs, epsilon: float, z):
    """``F_eps(z) = (f, g / eps)`` and block-diagonal ``Sigma_eps(z) = diag(sigma, h / sqrt(eps))``."""
    _check_eps(epsilon)
    m, n, d, e = coeffs.dims
    z = np.asarray(z, dtype=float)
    x, y = z[..., :m], z[..., m:]
    F = np.concatenate([coeffs.f(x, y), coeffs.g(x, y) / epsilon], axis=-1)
    S = np.zeros(z.shape[:-1] + (m + n, d + e))
    S[..., :m, :d] = coeffs.sigma(x)
    S[..., m:, d:] = coeffs.h(x, y) / np.sqrt(epsilon)
    return F, S


def fast_step(coeffs: SlowFastCoeffs, x, y, w1, w2, dt: float, epsilon: float, ibw=None, include_w2: bool = True):
    """Fast part of the one-step update (batched).

    ``y + g dt / eps + h W^1 / sqrt(eps) + (grad_x h . sigma)<I[B,W]> / sqrt(eps)
    + (grad_y h . h)<W^2> / eps``.  ``ibw=None`` drops the cross term, which is
    the right update when ``x`` is frozen.
    """
    hv = coeffs.h(x, y)
    se = np.sqrt(epsilon)
    out = y + coeffs.g(x, y) * (dt / epsilon) + np.einsum("...nb,...b->...n", hv, w1) / se
    if ibw is not None:
        gx = np.einsum("...nbc,...ca->...nba", coeffs.dxh(x, y), coeffs.sigma(x))
        out = out + np.einsum("...nba,...ab->...n", gx, ibw) / se
    if include_w2:
        gy = np.einsum("...nbc,...ca->...nba", coeffs.dyh(x, y), hv)
        out = out + np.einsum("...nba,...ab->...n", gy, w2) / epsilon
    return out


@dataclass(frozen=True, eq=False)
class SlowFastSolution:
    epsilon: float
    grid: Grid
    X: np.ndarray
    Y: np.ndarray
    coeffs: SlowFastCoeffs

    @property
    def gubinelli(self) -> np.ndarray:
        """``Sigma_eps(Z)`` at every node, shape ``(N + 1, m + n, d + e)``."""
        return assemble_blocks(self.coeffs, self.epsilon, np.concatenate([self.X, self.Y], axis=-1))[1]

    def diagnostics(self, beta: float = 0.4) -> dict:
        return {
            "max_abs_Y": float(np.max(np.abs(self.Y))),
            "holder_X": hoelder_seminorm(self.X, beta, self.grid),
        }


def _split(coeffs, xi_l1, xi_cells):
    d = coeffs.d
    inc = np.diff(xi_l1, axis=-2)
    return (
        inc[..., :d],
        inc[..., d:],
        xi_cells[..., :d, :d],
        xi_cells[..., :d, d:],
        xi_cells[..., d:, d:],
    )


def _integrate(coeffs, l1, cells, dt, epsilon, x0, y0, policy):
    """Step a batch of systems; ``l1`` is ``(S, N+1, d+e)``, ``cells`` ``(S, N, d+e, d+e)``."""
    b1, w1, b2, ibw, w2 = _split(coeffs, l1, cells)
    s, n = cells.shape[0], cells.shape[1]
    slow = coeffs.slow_vfs()
    X = np.empty((s, n + 1, coeffs.m))
    Y = np.empty((s, n + 1, coeffs.n))
    x = np.broadcast_to(np.asarray(x0, dtype=float), (s, coeffs.m)).copy()
    y = np.broadcast_to(np.asarray(y0, dtype=float), (s, coeffs.n)).copy()
    X[:, 0], Y[:, 0] = x, y
    for k in range(n):
        try:
            xn = rough_euler_step(x, slow, b1[:, k], b2[:, k], dt, y)
        except FloatingPointError:
            raise ExplosionError(k + 1) from None
        yn = fast_step(
            coeffs, x, y, w1[:, k], w2[:, k], dt, epsilon,
            ibw[:, k] if policy.include_cross else None, policy.include_w2,
        )
        x, y = xn, yn
        if not (np.all(np.isfinite(y)) and np.max(np.abs(y)) <= EXPLOSION_THRESHOLD and np.max(np.abs(x)) <= EXPLOSION_THRESHOLD):
            raise ExplosionError(k + 1)
        X[:, k + 1], Y[:, k + 1] = x, y
    return X, Y


def solve_slow_fast_batch(
    coeffs: SlowFastCoeffs,
    xis: Sequence[GridRoughPath],
    epsilon: float,
    z0,
    policy: MicroStepPolicy = MicroStepPolicy(),
):
    """Solve the system for several mixed lifts on one grid at once."""
    _check_eps(epsilon)
    grid = xis[0].grid
    if any(xi.grid != grid for xi in xis):
        raise ValueError("all lifts must share one grid")
    if xis[0].dim != coeffs.d + coeffs.e:
        raise ValueError(f"lift dimension {xis[0].dim} != d + e = {coeffs.d + coeffs.e}")
    policy.validate(grid.step, epsilon)
    z0 = np.asarray(z0, dtype=float)
    l1 = np.stack([xi.level1 for xi in xis])
    cells = np.stack([xi.level2_cells for xi in xis])
    X, Y = _integrate(coeffs, l1, cells, grid.step, epsilon, z0[: coeffs.m], z0[coeffs.m :], policy)
    return [SlowFastSolution(epsilon, grid, X[i], Y[i], coeffs) for i in range(len(xis))]


def solve_slow_fast(coeffs: SlowFastCoeffs, Xi: GridRoughPath, epsilon: float, z0, policy: MicroStepPolicy = MicroStepPolicy()) -> SlowFastSolution:
    """Simulate the slow-fast system driven by the mixed lift ``Xi``."""
    return solve_slow_fast_batch(coeffs, [Xi], epsilon, z0, policy)[0]


def ito_strat_switch(coeffs: SlowFastCoeffs, lam: float) -> SlowFastCoeffs:
    """Replace ``g`` by ``g - lam * (grad_y h . h)<Id_e>``.

    Pair with ``stratonovich_from_ito(Xi, lam, axes=slice(d, d + e))``.
    """
    if lam == 0:
        return coeffs
    g0, h, dyh = coeffs.g, coeffs.h, coeffs.dyh

    def g_tilde(x, y):
        corr = np.einsum("...nbc,...cb->...n", dyh(x, y), h(x, y))
        return g0(x, y) - lam * corr

    return dataclasses.replace(coeffs, name=f"{coeffs.name}+switch({lam:g})", g=g_tilde)


def switch_lift(coeffs: SlowFastCoeffs, Xi: GridRoughPath, lam: float) -> GridRoughPath:
    """Shift the Brownian block of ``Xi`` by ``lam * Id * h``."""
    return stratonovich_from_ito(Xi, lam, axes=slice(coeffs.d, coeffs.d + coeffs.e))


def em_fast(coeffs: SlowFastCoeffs, X, w_micro, epsilon: float, y0, substeps: int, dt: float):
    """Euler-Maruyama for the fast equation on the sub-step grid.

    ``X`` (``(S, N+1, m)`` or ``(N+1, m)``) is held at its left-node value
    on each cell; ``w_micro`` are the matching Brownian increments
    ``(S, N*M, e)``.  Returns the fast path at the macro nodes.
    """
    X = np.asarray(X, dtype=float)
    w = np.asarray(w_micro, dtype=float)
    single = X.ndim == 2
    if single:
        X, w = X[None], w[None]
    s, n1, _ = X.shape
    n = n1 - 1
    if w.shape[1] != n * substeps:
        raise ValueError("micro increments do not match the grid")
    ddt = dt / substeps
    y = np.broadcast_to(np.asarray(y0, dtype=float), (s, coeffs.n)).copy()
    out = np.empty((s, n1, coeffs.n))
    out[:, 0] = y
    se = np.sqrt(epsilon)
    for k in range(n):
        x = X[:, k]
        for j in range(substeps):
            dw = w[:, k * substeps + j]
            y = y + coeffs.g(x, y) * (ddt / epsilon) + np.einsum("...nb,...b->...n", coeffs.h(x, y), dw) / se
        if not np.all(np.isfinite(y)):
            raise ExplosionError(k + 1)
        out[:, k + 1] = y
    return out[0] if single else out


def fast_sde_consistency(coeffs: SlowFastCoeffs, solution: SlowFastSolution, w_micro, substeps: Optional[int] = None) -> float:
    """Max gap between the fast component and an Euler-Maruyama re-integration.

    The re-integration runs on the Brownian sub-step increments ``w_micro``
    with the solution's slow path frozen on each cell.
    """
    if w_micro is None:
        raise ValueError("Brownian sub-step increments are required")
    w = np.asarray(w_micro, dtype=float)
    if w.ndim == 1:
        w = w[:, None]
    n = solution.grid.n_steps
    m = substeps if substeps is not None else w.shape[0] // n
    ref = em_fast(coeffs, solution.X, w, solution.epsilon, solution.Y[0], m, solution.grid.step)
    return float(np.max(np.abs(solution.Y - ref)))
