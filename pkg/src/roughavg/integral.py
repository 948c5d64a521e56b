"""Compensated Riemann sums for controlled integrands.

The integrand is a controlled path with values in ``L(V, W)`` (shape
``wshape + (d,)``) and Gubinelli derivative in ``L(V, L(V, W))`` (shape
``wshape + (d, d)``, last axis the direction).  The grid itself is the
partition: the integral over ``[t_i, t_k]`` is the sum of local summands
``Y_s X^1_{s,t} + Y^dagger_s <X^2_{s,t}>`` over the cells in between.
"""

from __future__ import annotations

import numpy as np
from scipy.special import zeta

from .core import GridControlledPath, GridRoughPath

# compensated accumulation kicks in at this many cells
COMPENSATED_THRESHOLD = 100_000


def _apply_level2(gub, x2):
    # gub[..., b, a] paired with x2[..., a, b]
    x2t = np.swapaxes(x2, -1, -2)
    extra = gub.ndim - x2.ndim
    x2t = x2t.reshape(x2t.shape[:-2] + (1,) * extra + x2t.shape[-2:])
    return np.sum(gub * x2t, axis=(-1, -2))


def _apply_level1(val, x1):
    extra = val.ndim - x1.ndim
    x1 = x1.reshape(x1.shape[:-1] + (1,) * extra + x1.shape[-1:])
    return np.sum(val * x1, axis=-1)


def _check_dims(cp, rp):
    d = rp.dim
    if cp.values.shape[-1] != d or cp.gubinelli.shape[-2:] != (d, d):
        raise ValueError("integrand is not a linear map on the driver's value space")
    if cp.values.shape[0] != rp.n_steps + 1:
        raise ValueError("integrand and driver live on different grids")


def local_summand(cp: GridControlledPath, rp: GridRoughPath, i: int) -> np.ndarray:
    """``Y_{t_i} X^1_{t_i,t_{i+1}} + Y^dagger_{t_i} <X^2_{t_i,t_{i+1}}>``."""
    _check_dims(cp, rp)
    if not 0 <= i < rp.n_steps:
        raise IndexError(f"cell index {i} out of range")
    x1 = rp.level1[i + 1] - rp.level1[i]
    return _apply_level1(cp.values[i], x1) + _apply_level2(cp.gubinelli[i], rp.level2_cells[i])


def cell_summands(cp: GridControlledPath, rp: GridRoughPath, i: int = 0, k: int | None = None) -> np.ndarray:
    """All local summands of cells ``i..k-1``, stacked along axis 0."""
    _check_dims(cp, rp)
    k = rp.n_steps if k is None else k
    x1 = rp.increments[i:k]
    return _apply_level1(cp.values[i:k], x1) + _apply_level2(cp.gubinelli[i:k], rp.level2_cells[i:k])


def _accumulate(terms):
    """Running sums ``S_0 = 0, S_{j+1} = S_j + terms_j``."""
    out = np.zeros((terms.shape[0] + 1,) + terms.shape[1:])
    if terms.shape[0] < COMPENSATED_THRESHOLD:
        np.cumsum(terms, axis=0, out=out[1:])
        return out
    # Neumaier compensated summation
    total = np.zeros(terms.shape[1:])
    comp = np.zeros(terms.shape[1:])
    for j, v in enumerate(terms):
        t = total + v
        big = np.abs(total) >= np.abs(v)
        comp += np.where(big, (total - t) + v, (v - t) + total)
        total = t
        out[j + 1] = total + comp
    return out


def rough_integral(cp: GridControlledPath, rp: GridRoughPath, i: int = 0, k: int | None = None):
    """Rough integral of ``cp`` against ``rp`` over ``[t_i, t_k]``.

    Returns ``(value, as_cp)``: ``as_cp`` is the running integral on the
    sub-grid ``[t_i, t_k]`` as a controlled path whose Gubinelli derivative
    is the integrand itself.
    """
    k = rp.n_steps if k is None else k
    if not 0 <= i <= k <= rp.n_steps:
        raise IndexError(f"need 0 <= i <= k <= {rp.n_steps}, got i={i}, k={k}")
    terms = cell_summands(cp, rp, i, k)
    running = _accumulate(terms)
    if not np.all(np.isfinite(running)):
        raise FloatingPointError("non-finite value while accumulating the rough integral")
    value = running[-1]
    gub = cp.values[i : k + 1]
    if running.ndim == 1:
        # scalar-valued integral: give it an explicit unit target axis
        running, gub = running[:, None], gub[:, None, :]
    as_cp = GridControlledPath(rp.restrict(i, k), running, gub)
    return value, as_cp


def identity_integrand(rp: GridRoughPath) -> GridControlledPath:
    """The controlled path ``(X^1_{0,.}, Id)`` as an ``L(V, V (x) V)`` integrand.

    Integrating it against ``rp`` gives ``int X (x) dX``, i.e. the level-2
    path itself.
    """
    d = rp.dim
    eye = np.eye(d)
    vals = rp.level1[:, :, None, None] * eye[None, None, :, :]
    gub = np.broadcast_to(np.einsum("pa,qb->pqba", eye, eye), (rp.n_steps + 1, d, d, d, d))
    return GridControlledPath(rp, vals, gub)


def kappa(alpha: float) -> float:
    """``2^{3 alpha} zeta(3 alpha)``, the sewing constant for exponent ``alpha``."""
    if not 3 * alpha > 1:
        raise ValueError(f"need 3 * alpha > 1, got alpha={alpha}")
    return float(2.0 ** (3 * alpha) * zeta(3 * alpha))


def integral_error_bound(cp_norms, rp_norms, alpha: float, s: float, t: float) -> float:
    """Local error bound for one compensated summand over ``[s, t]``.

    ``cp_norms = (||Y^sharp||_{2 alpha}, ||Y^dagger||_alpha)`` and
    ``rp_norms = (||X^1||_alpha, ||X^2||_{2 alpha})``.
    """
    rem, gub = cp_norms
    x1, x2 = rp_norms
    if min(rem, gub, x1, x2) < 0:
        raise ValueError("norms must be nonnegative")
    return kappa(alpha) * (t - s) ** (3 * alpha) * (rem * x1 + gub * x2)
