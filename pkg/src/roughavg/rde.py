"""RDE solvers for ``dY = f(Y, psi) dt + sigma(Y) dX``.

The primary solver steps the second-order local model

    y + f(y, psi) dt + sigma(y) x1 + (grad sigma . sigma)(y) <x2>

cell by cell.  ``solve_rde_picard`` is a slower reference that iterates the
fixed-point map (drift integral plus rough integral of ``sigma(Y)``) on
consecutive windows.

Coefficient callables broadcast over leading batch axes: ``sigma(y)`` maps
``(..., w)`` to ``(..., w, d)`` and ``dsigma(y)`` to ``(..., w, d, w)`` with the
last axis the derivative direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import (
    GridControlledPath,
    GridRoughPath,
    SmoothMap,
    compose_smooth,
    concat_cp,
    hoelder_seminorm,
    homogeneous_norm,
)
from .integral import kappa, rough_integral

EXPLOSION_THRESHOLD = 1e12


class ExplosionError(FloatingPointError):
    """State left the finite region; ``index`` is the first bad grid index."""

    def __init__(self, index: int, msg: str = ""):
        super().__init__(msg or f"explosion at grid index {index}")
        self.index = index


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class VectorFieldSet:
    """Diffusion ``sigma`` with derivatives, drift ``f(y, psi)`` and metadata.

    ``sigma_norm`` is ``||sigma||_{C^3_b}`` (or any upper bound), ``f_sup`` is
    ``||f||_inf`` and ``f_lip`` the Lipschitz constant of ``f``.
    """

    sigma: Callable
    dsigma: Callable
    f: Optional[Callable] = None
    d2sigma: Optional[Callable] = None
    d3sigma: Optional[Callable] = None
    sigma_norm: Optional[float] = None
    f_sup: Optional[float] = None
    f_lip: Optional[float] = None
    bounded: bool = False
    globally_lipschitz: bool = False

    def drift(self, y, psi=None):
        if self.f is None:
            return np.zeros_like(y)
        return np.asarray(self.f(y, psi), dtype=float)

    def sigma_map(self) -> SmoothMap:
        return SmoothMap(self.sigma, self.dsigma, self.d2sigma)

    @property
    def K(self) -> float:
        vals = [self.sigma_norm, self.f_sup, self.f_lip]
        if any(v is None for v in vals):
            raise ValueError("sigma_norm, f_sup and f_lip metadata required")
        return max(vals)


def dsigma_sigma(vfs: VectorFieldSet, y):
    """``(grad sigma . sigma)(y)`` with shape ``(..., w, d, d)``: ``[w, b, a]``."""
    s = np.asarray(vfs.sigma(y), dtype=float)
    ds = np.asarray(vfs.dsigma(y), dtype=float)
    return np.einsum("...wbc,...ca->...wba", ds, s)


def rough_euler_step(y, vfs: VectorFieldSet, x1, x2, dt: float, psi_val=None):
    """One step of the second-order scheme; works on batches of states."""
    y = np.asarray(y, dtype=float)
    s = np.asarray(vfs.sigma(y), dtype=float)
    out = y + vfs.drift(y, psi_val) * dt + np.einsum("...wa,...a->...w", s, x1)
    out = out + np.einsum("...wba,...ab->...w", dsigma_sigma(vfs, y), x2)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite value in rough Euler step")
    return out


def _psi_at(psi, k):
    return None if psi is None else psi[k]


def solve_rde(vfs: VectorFieldSet, rp: GridRoughPath, xi, psi=None, start: int = 0, stop: Optional[int] = None) -> GridControlledPath:
    """Iterate the one-step scheme on cells ``start..stop-1`` from ``Y_{t_start} = xi``.

    ``psi`` holds parameter values on the full grid (or is ``None``).  The
    result lives on ``rp.restrict(start, stop)``; its Gubinelli derivative
    is ``sigma(Y)`` at every node.
    """
    stop = rp.n_steps if stop is None else stop
    if not 0 <= start <= stop <= rp.n_steps:
        raise IndexError(f"bad index range [{start}, {stop}]")
    y = np.atleast_1d(np.asarray(xi, dtype=float))
    inc = rp.increments
    cells = rp.level2_cells
    dt = rp.grid.step
    ys = np.empty((stop - start + 1,) + y.shape)
    ys[0] = y
    for j, k in enumerate(range(start, stop)):
        try:
            y = rough_euler_step(y, vfs, inc[k], cells[k], dt, _psi_at(psi, k))
        except FloatingPointError:
            raise ExplosionError(k + 1) from None
        if np.max(np.abs(y)) > EXPLOSION_THRESHOLD:
            raise ExplosionError(k + 1)
        ys[j + 1] = y
    gub = np.asarray(vfs.sigma(ys), dtype=float)
    return GridControlledPath(rp.restrict(start, stop), ys, gub)


def picard_window(vfs: VectorFieldSet, rp: GridRoughPath, beta: float) -> float:
    """Window length ``{8 kappa_beta (K+1)^3 (|||X|||_alpha + 1)^3}^{-1/(alpha - beta)}``."""
    alpha = rp.alpha
    if not beta < alpha:
        raise ValueError("need beta < alpha")
    base = 8 * kappa(beta) * (vfs.K + 1) ** 3 * (homogeneous_norm(rp) + 1) ** 3
    return base ** (-1.0 / (alpha - beta))


def _picard_map(vfs, sub, xi, cur, psi_w):
    """One application of the fixed-point map on a window."""
    comp = compose_smooth(vfs.sigma_map(), cur)
    _, run = rough_integral(comp, sub)
    drift = vfs.drift(cur.values[:-1], psi_w) * sub.grid.step
    dr = np.concatenate([np.zeros((1,) + drift.shape[1:]), np.cumsum(drift, axis=0)])
    return xi + dr + run.values


def solve_rde_picard(
    vfs: VectorFieldSet,
    rp: GridRoughPath,
    xi,
    beta: float,
    tol: float = 1e-12,
    max_iter: int = 100,
    window: Optional[int] = None,
    psi=None,
    return_history: bool = False,
):
    """Fixed-point reference solver on consecutive windows.

    The window length defaults to the contraction length of
    :func:`picard_window`, rounded down to whole cells but never below one
    cell.  ``window`` overrides it (in cells).  Each window starts from the
    seed ``(xi + sigma(xi) X^1_{s,.}, sigma(xi))`` and iterates until the sup
    change drops below ``tol``.  With ``return_history`` the per-window gap
    sequences are returned as well.
    """
    if not (vfs.bounded and vfs.globally_lipschitz):
        raise ValueError("Picard solver needs vector fields flagged bounded and globally Lipschitz")
    n = rp.n_steps
    if window is None:
        lam = picard_window(vfs, rp, beta)
        window = max(1, int(lam / rp.grid.step)) if rp.grid.step > 0 else 1
    window = max(1, int(window))
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    pieces = []
    history = []
    i = 0
    while i < n or not pieces:
        k = min(i + window, n)
        sub = rp.restrict(i, k)
        psi_w = None if psi is None else np.asarray(psi)[i:k]
        s0 = np.asarray(vfs.sigma(xi), dtype=float)
        seed_vals = xi + np.einsum("wa,ka->kw", s0, sub.level1)
        cur = GridControlledPath(sub, seed_vals, np.broadcast_to(s0, (k - i + 1,) + s0.shape))
        gaps = []
        for _ in range(max_iter):
            new = _picard_map(vfs, sub, xi, cur, psi_w)
            if not np.all(np.isfinite(new)):
                raise ExplosionError(i)
            gap = float(np.max(np.abs(new - cur.values)))
            gaps.append(gap)
            cur = GridControlledPath(sub, new, np.asarray(vfs.sigma(new), dtype=float))
            if gap < tol:
                break
        else:
            raise ConvergenceError(f"no convergence on window [{i}, {k}] within {max_iter} iterations")
        history.append(gaps)
        pieces.append(cur)
        xi = cur.values[-1]
        if k == n:
            break
        i = k
    out = pieces[0]
    for p in pieces[1:]:
        out = concat_cp(out, p)
    out = GridControlledPath(rp, out.values, out.gubinelli)
    return (out, history) if return_history else out


def apriori_bracket(vfs: VectorFieldSet, rp: GridRoughPath, beta: float, rp_norm: Optional[float] = None) -> float:
    """``(s N)^{1/beta} + s N + ||f||_inf`` with ``s = ||sigma||_{C^2_b}`` and ``N = |||X|||_alpha``."""
    if vfs.sigma_norm is None or vfs.f_sup is None:
        raise ValueError("sigma_norm and f_sup metadata required")
    nx = homogeneous_norm(rp) if rp_norm is None else rp_norm
    sn = vfs.sigma_norm * nx
    return sn ** (1.0 / beta) + sn + vfs.f_sup


@dataclass(frozen=True)
class StabilityResult:
    M: np.ndarray
    gap_norm: float
    M_norm: float
    bracket: float
    rp_norm: float


def stability_gap(
    vfs: VectorFieldSet,
    vfs_tilde: VectorFieldSet,
    g: Callable,
    rp: GridRoughPath,
    xi,
    beta: float,
    psi=None,
    psi_tilde=None,
    nu: float = 2.0,
) -> StabilityResult:
    """Solve both RDEs and evaluate the stability functional ``M``.

    ``M_t = (Y - Ytilde)_t - int_0^t (g(Y) - g(Ytilde)) ds - int_0^t (sigma(Y) - sigma(Ytilde)) dX``
    with left-point drift quadrature and compensated rough sums.  Returns
    ``||Y - Ytilde||_beta``, ``||M||_{2 beta}`` and ``exp(|||X|||^nu)``.
    """
    if vfs.sigma is not vfs_tilde.sigma:
        raise ValueError("both equations must share sigma")
    y = solve_rde(vfs, rp, xi, psi)
    yt = solve_rde(vfs_tilde, rp, xi, psi_tilde)
    smap = vfs.sigma_map()
    c1 = compose_smooth(smap, y)
    c2 = compose_smooth(smap, yt)
    diff = GridControlledPath(rp, c1.values - c2.values, c1.gubinelli - c2.gubinelli)
    _, rint = rough_integral(diff, rp)
    gd = (np.asarray(g(y.values[:-1])) - np.asarray(g(yt.values[:-1]))) * rp.grid.step
    gint = np.concatenate([np.zeros((1,) + gd.shape[1:]), np.cumsum(gd, axis=0)])
    M = (y.values - yt.values) - gint - rint.values
    gap = hoelder_seminorm(y.values - yt.values, beta, rp.grid)
    mn = hoelder_seminorm(M, 2 * beta, rp.grid)
    nx = homogeneous_norm(rp)
    return StabilityResult(M, gap, mn, math.exp(nx**nu), nx)
