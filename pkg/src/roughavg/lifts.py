"""Random and deterministic rough-path lifts on uniform grids.

Second levels are built on a finer sub-step grid (``substeps`` points per
cell).  Brownian cells get the exact symmetric part ``(dW (x) dW - h Id) / 2``
(Itô) and a sub-stepped Lévy area; fractional and smooth drivers get the
piecewise-linear (geometric) lift of the sub-step path.

Randomness comes from a counter-based Philox generator keyed by
``(seed, stream_id)``, so every path is a pure function of its key.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import cholesky, toeplitz

from .core import Grid, GridRoughPath

KINDS = ("brownian_ito", "brownian_strat", "fbm", "deterministic_smooth")


def make_rng(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Philox generator keyed by the pair ``(seed, stream_id)``."""
    if not (0 <= seed < 2**64 and 0 <= stream_id < 2**64):
        raise ValueError("seed and stream_id must be unsigned 64-bit integers")
    return np.random.Generator(np.random.Philox(key=int(seed) | (int(stream_id) << 64)))


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    dim: int = 1
    hurst: Optional[float] = None
    substeps: int = 8
    seed: int = 0
    stream_id: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if (self.hurst is not None) != (self.kind == "fbm"):
            raise ValueError("hurst is required for fbm and only for fbm")
        if self.kind == "fbm" and not 1 / 3 < self.hurst <= 0.5:
            raise ValueError(f"hurst must lie in (1/3, 1/2], got {self.hurst}")
        if self.substeps < 1 or self.dim < 1:
            raise ValueError("substeps and dim must be positive")

    @property
    def alpha0(self) -> float:
        return self.hurst if self.kind == "fbm" else 0.5


def _regularity_tag(alpha0: float) -> float:
    # strictly below the sample-path regularity, inside (1/3, 1/2]
    return max(alpha0 - 0.01, 1 / 3 + 1e-3) if alpha0 < 0.5 else 0.5


def _cells_from_micro(micro, substeps, symmetric=None):
    """Left-point double sums per cell plus an optional symmetric override.

    ``micro`` is the sub-step path (``N * M + 1`` rows).  Returns the cells
    ``sum_j X_{t_k, s_j} (x) dX_j`` with their symmetric part replaced by
    ``symmetric`` when given.
    """
    n = (micro.shape[0] - 1) // substeps
    d = micro.shape[1]
    inc = np.diff(micro, axis=0).reshape(n, substeps, d)
    base = np.cumsum(inc, axis=1) - inc
    s = np.einsum("nma,nmb->nab", base, inc)
    if symmetric is None:
        return s
    area = 0.5 * (s - np.swapaxes(s, 1, 2))
    return symmetric + area


def ito_lift_from_increments(increments, grid: Grid, substeps: int, stream_id=None) -> GridRoughPath:
    """Itô lift from Brownian sub-step increments of shape ``(N * M, e)``."""
    inc = np.asarray(increments, dtype=float)
    if inc.ndim == 1:
        inc = inc[:, None]
    n = grid.n_steps
    if inc.shape[0] != n * substeps:
        raise ValueError("increments do not match grid and substeps")
    e = inc.shape[1]
    micro = np.concatenate([np.zeros((1, e)), np.cumsum(inc, axis=0)])
    level1 = micro[::substeps]
    dw = np.diff(level1, axis=0)
    sym = 0.5 * (dw[:, :, None] * dw[:, None, :] - grid.step * np.eye(e))
    cells = _cells_from_micro(micro, substeps, sym)
    return GridRoughPath(grid, level1, cells, 0.5, micro, substeps, stream_id)


def brownian_ito_lift(spec: NoiseSpec, grid: Grid):
    """Itô Brownian rough path and its sub-step increments."""
    if spec.kind != "brownian_ito":
        raise ValueError(f"expected kind 'brownian_ito', got {spec.kind!r}")
    rng = make_rng(spec.seed, spec.stream_id)
    m = spec.substeps
    dt = grid.step / m
    inc = rng.standard_normal((grid.n_steps * m, spec.dim)) * np.sqrt(dt)
    return ito_lift_from_increments(inc, grid, m, spec.stream_id), inc


def stratonovich_from_ito(rp: GridRoughPath, lam: float, axes=None) -> GridRoughPath:
    """Shift level-2 cells by ``lam * Id * h`` on the coordinates ``axes``.

    ``lam = 1/2`` turns an Itô Brownian lift into the Stratonovich one;
    ``axes`` selects the Brownian block of a mixed lift (default: all).
    """
    d = rp.dim
    shift = np.zeros((d, d))
    idx = np.arange(d) if axes is None else np.arange(d)[axes]
    shift[idx, idx] = lam * rp.grid.step
    return GridRoughPath(
        rp.grid, rp.level1, rp.level2_cells + shift, rp.alpha, rp.micro_level1, rp.substeps, rp.stream_id
    )


def fgn_autocovariance(k, hurst):
    k = np.abs(np.asarray(k, dtype=float))
    return 0.5 * ((k + 1) ** (2 * hurst) + np.abs(k - 1) ** (2 * hurst) - 2 * k ** (2 * hurst))


def sample_fgn(n: int, hurst: float, rng: np.random.Generator, size: int = 1, method: str = "auto"):
    """Unit-step fractional Gaussian noise, shape ``(n, size)``.

    Circulant embedding (Davies-Harte) is used when its eigenvalues are
    nonnegative; otherwise, or with ``method="cholesky"``, a dense Cholesky
    factor of the Toeplitz covariance.
    """
    if method not in ("auto", "circulant", "cholesky"):
        raise ValueError(f"unknown method {method!r}")
    if method != "cholesky":
        gam = fgn_autocovariance(np.arange(n + 1), hurst)
        row = np.concatenate([gam, gam[-2:0:-1]])
        lam = np.fft.fft(row).real
        if lam.min() >= -1e-12 * lam.max():
            lam = np.clip(lam, 0.0, None)
            m2 = row.size
            z = rng.standard_normal((m2, size)) + 1j * rng.standard_normal((m2, size))
            w = np.fft.fft(np.sqrt(lam / m2)[:, None] * z, axis=0)
            return w.real[:n]
        if method == "circulant":
            raise ValueError("circulant embedding is not nonnegative definite")
        warnings.warn("circulant embedding failed; falling back to Cholesky", RuntimeWarning)
    cov = toeplitz(fgn_autocovariance(np.arange(n), hurst))
    chol = cholesky(cov, lower=True)
    return chol @ rng.standard_normal((n, size))


def _geometric_cells(micro, substeps, level1):
    dx = np.diff(level1, axis=0)
    sym = 0.5 * dx[:, :, None] * dx[:, None, :]
    return _cells_from_micro(micro, substeps, sym)


def fbm_lift(spec: NoiseSpec, grid: Grid) -> GridRoughPath:
    """Geometric lift of fractional Brownian motion sampled on the sub-step grid."""
    if spec.kind != "fbm":
        raise ValueError(f"expected kind 'fbm', got {spec.kind!r}")
    h = spec.hurst
    rng = make_rng(spec.seed, spec.stream_id)
    m = spec.substeps
    nm = grid.n_steps * m
    fgn = sample_fgn(nm, h, rng, spec.dim) * (grid.step / m) ** h
    micro = np.concatenate([np.zeros((1, spec.dim)), np.cumsum(fgn, axis=0)])
    level1 = micro[::m]
    cells = _geometric_cells(micro, m, level1)
    return GridRoughPath(grid, level1, cells, _regularity_tag(h), micro, m, spec.stream_id)


def default_smooth_path(dim: int) -> Callable[[np.ndarray], np.ndarray]:
    """``t -> sin(2 pi t + phase_i)`` with phases spread over coordinates."""
    phases = np.pi * np.arange(dim) / max(dim, 1)
    return lambda t: np.sin(2 * np.pi * np.asarray(t)[:, None] + phases[None, :])


def smooth_lift(path: Callable, grid: Grid, substeps: int = 8, dim: Optional[int] = None, alpha: float = 0.5) -> GridRoughPath:
    """Geometric lift of a deterministic path given as ``t -> values``."""
    t_micro = grid.start + (grid.step / substeps) * np.arange(grid.n_steps * substeps + 1)
    vals = np.asarray(path(t_micro), dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    if dim is not None and vals.shape[1] != dim:
        raise ValueError("path dimension does not match")
    micro = vals - vals[0]
    level1 = micro[::substeps]
    cells = _geometric_cells(micro, substeps, level1)
    return GridRoughPath(grid, level1, cells, alpha, micro, substeps)


def sample_lift(spec: NoiseSpec, grid: Grid):
    """Dispatch on ``spec.kind``; returns ``(rp, brownian_increments_or_None)``."""
    if spec.kind == "brownian_ito":
        return brownian_ito_lift(spec, grid)
    if spec.kind == "brownian_strat":
        ito, inc = brownian_ito_lift(NoiseSpec("brownian_ito", spec.dim, None, spec.substeps, spec.seed, spec.stream_id), grid)
        return stratonovich_from_ito(ito, 0.5), inc
    if spec.kind == "fbm":
        return fbm_lift(spec, grid), None
    rp = smooth_lift(default_smooth_path(spec.dim), grid, spec.substeps, spec.dim)
    return rp, None


def _interpolated_micro(rp: GridRoughPath, substeps: int):
    # piecewise-linear sub-step path when the rough path kept none
    frac = np.arange(substeps) / substeps
    x = rp.level1
    pts = x[:-1, None, :] + frac[None, :, None] * np.diff(x, axis=0)[:, None, :]
    return np.concatenate([pts.reshape(-1, rp.dim), x[-1:]])


def mixed_lift(B: GridRoughPath, w_micro, grid: Grid, w_stream_id: Optional[int] = None) -> GridRoughPath:
    """Joint lift over ``R^{d+e}`` of a rough path ``B`` and an independent Brownian motion.

    ``w_micro`` are the Brownian sub-step increments, shape ``(N * M, e)``.
    The diagonal blocks are ``B^2`` and the Itô ``W^2``; the cross blocks are
    the left-point sums ``I[B, W] = sum_j B_{t_k, s_j} (x) dw_j`` and
    ``I[W, B] = W^1 (x) B^1 - I[B, W]^T``.
    """
    if B.grid != grid:
        raise ValueError("B lives on a different grid")
    if w_stream_id is not None and B.stream_id is not None and w_stream_id == B.stream_id:
        raise ValueError("B and w must come from distinct streams")
    w_micro = np.asarray(w_micro, dtype=float)
    if w_micro.ndim == 1:
        w_micro = w_micro[:, None]
    n = grid.n_steps
    if w_micro.shape[0] % max(n, 1) or (n == 0 and w_micro.shape[0]):
        raise ValueError("Brownian increments are not aligned with the grid")
    m = w_micro.shape[0] // n if n else B.substeps
    if B.micro_level1 is not None:
        if B.substeps != m:
            raise ValueError(f"sub-step grids differ: B has {B.substeps}, w has {m}")
        b_micro = B.micro_level1
    else:
        b_micro = _interpolated_micro(B, m)
    W = ito_lift_from_increments(w_micro, grid, m, w_stream_id)
    d, e = B.dim, W.dim
    b_inc = np.diff(b_micro, axis=0).reshape(n, m, d)
    b_base = np.cumsum(b_inc, axis=1) - b_inc
    ibw = np.einsum("nma,nmb->nab", b_base, w_micro.reshape(n, m, e))
    db = B.increments
    dw = W.increments
    iwb = dw[:, :, None] * db[:, None, :] - np.swapaxes(ibw, 1, 2)
    cells = np.zeros((n, d + e, d + e))
    cells[:, :d, :d] = B.level2_cells
    cells[:, :d, d:] = ibw
    cells[:, d:, :d] = iwb
    cells[:, d:, d:] = W.level2_cells
    level1 = np.concatenate([B.level1, W.level1], axis=1)
    micro = np.concatenate([b_micro, W.micro_level1], axis=1)
    return GridRoughPath(grid, level1, cells, min(B.alpha, W.alpha), micro, m)


def coarsen(rp: GridRoughPath, factor: int) -> GridRoughPath:
    """Merge every ``factor`` consecutive cells with the Chen relation.

    The result keeps the same sub-step path (with ``substeps * factor`` points
    per cell), so it coincides with building the lift directly on the coarse
    grid from the same samples, up to rounding.
    """
    n = rp.n_steps
    if factor < 1 or n % factor:
        raise ValueError(f"factor {factor} does not divide N = {n}")
    nc = n // factor
    x = rp.level1
    base = (x[:-1] - np.repeat(x[:-1:factor], factor, axis=0)).reshape(nc, factor, rp.dim)
    inc = rp.increments.reshape(nc, factor, rp.dim)
    cells = rp.level2_cells.reshape(nc, factor, rp.dim, rp.dim).sum(axis=1)
    cells = cells + np.einsum("nja,njb->nab", base, inc)
    grid = Grid(rp.grid.horizon, nc, rp.grid.start)
    return GridRoughPath(grid, x[::factor], cells, rp.alpha, rp.micro_level1, rp.substeps * factor, rp.stream_id)
