"""Discrete rough paths and controlled paths on uniform grids.

A rough path is stored as its level-1 values measured from the grid origin
plus the level-2 tensors of consecutive cells.  Any level-2 block over
``[t_i, t_k]`` is rebuilt from those cells with the Chen relation, so
storage is O(N) and the reconstruction is consistent by construction.

Hölder seminorms evaluated here are suprema over grid pairs and therefore
lower bounds for the continuum seminorms.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

DEFAULT_PAIR_BUDGET = 4_000_000


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Grid:
    """Uniform grid ``t_k = start + k * T / N`` for ``k = 0..N``."""

    horizon: float
    n_steps: int
    start: float = 0.0

    def __post_init__(self):
        if self.horizon < 0 or (self.n_steps > 0 and self.horizon <= 0):
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.n_steps < 0 or int(self.n_steps) != self.n_steps:
            raise ValueError(f"n_steps must be a nonnegative integer, got {self.n_steps}")

    @property
    def step(self) -> float:
        return self.horizon / self.n_steps if self.n_steps else 0.0

    @property
    def times(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.n_steps + 1)

    @property
    def end(self) -> float:
        return self.start + self.horizon

    @classmethod
    def from_times(cls, times, rtol=1e-10):
        """Build a grid from explicit times; non-uniform spacing is rejected."""
        t = np.asarray(times, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("need at least two time points")
        dt = np.diff(t)
        if np.any(dt <= 0):
            raise ValueError("times must be strictly increasing")
        if np.max(np.abs(dt - dt.mean())) > rtol * dt.mean():
            raise ValueError("only uniform grids are supported")
        return cls(float(t[-1] - t[0]), t.size - 1, float(t[0]))

    def sub(self, i: int, k: int) -> "Grid":
        """Grid restricted to indices ``i..k``."""
        if not 0 <= i <= k <= self.n_steps:
            raise IndexError(f"bad sub-grid [{i}, {k}] of N={self.n_steps}")
        return Grid(self.step * (k - i), k - i, self.start + i * self.step)


@dataclass(frozen=True, eq=False)
class GridRoughPath:
    """Level-1 values from the origin and level-2 tensors of consecutive cells.

    ``micro_level1`` optionally keeps the level-1 path on the finer sub-step
    grid it was built from (``N * substeps + 1`` points); mixed lifts need it
    to form cross iterated integrals.
    """

    grid: Grid
    level1: np.ndarray
    level2_cells: np.ndarray
    alpha: float = 0.5
    micro_level1: Optional[np.ndarray] = None
    substeps: int = 1
    stream_id: Optional[int] = None

    def __post_init__(self):
        l1 = np.asarray(self.level1, dtype=float)
        if l1.ndim == 1:
            l1 = l1[:, None]
        n = self.grid.n_steps
        if l1.shape[0] != n + 1:
            raise ValueError(f"level1 has {l1.shape[0]} rows, grid needs {n + 1}")
        d = l1.shape[1]
        l2 = np.asarray(self.level2_cells, dtype=float)
        if d == 1 and l2.ndim == 1:
            l2 = l2[:, None, None]
        if l2.shape != (n, d, d):
            raise ValueError(f"level2_cells shape {l2.shape}, expected {(n, d, d)}")
        if np.any(l1[0] != 0.0):
            raise ValueError("level1[0] must be zero")
        if not 1.0 / 3.0 < self.alpha <= 0.5:
            raise ValueError(f"alpha must lie in (1/3, 1/2], got {self.alpha}")
        object.__setattr__(self, "level1", _frozen(l1))
        object.__setattr__(self, "level2_cells", _frozen(l2))
        if self.micro_level1 is not None:
            ml = np.asarray(self.micro_level1, dtype=float)
            if ml.ndim == 1:
                ml = ml[:, None]
            if ml.shape != (n * self.substeps + 1, d):
                raise ValueError("micro_level1 does not match grid and substeps")
            object.__setattr__(self, "micro_level1", _frozen(ml))

    @property
    def dim(self) -> int:
        return self.level1.shape[1]

    @property
    def n_steps(self) -> int:
        return self.grid.n_steps

    @property
    def increments(self) -> np.ndarray:
        """Level-1 cell increments, shape ``(N, d)``."""
        return np.diff(self.level1, axis=0)

    def level1_inc(self, i, k):
        return self.level1[k] - self.level1[i]

    def restrict(self, i: int, k: int) -> "GridRoughPath":
        """The rough path on ``[t_i, t_k]`` with level 1 re-based at ``t_i``."""
        sub = self.grid.sub(i, k)
        micro = None
        if self.micro_level1 is not None:
            m = self.substeps
            micro = self.micro_level1[i * m : k * m + 1] - self.micro_level1[i * m]
        return GridRoughPath(
            sub,
            self.level1[i : k + 1] - self.level1[i],
            self.level2_cells[i:k],
            self.alpha,
            micro,
            self.substeps,
            self.stream_id,
        )

    def block(self, idx) -> "GridRoughPath":
        """Rough path of the coordinates ``idx`` (a slice or index list)."""
        idx = np.arange(self.dim)[idx]
        micro = None if self.micro_level1 is None else self.micro_level1[:, idx]
        return GridRoughPath(
            self.grid,
            self.level1[:, idx],
            self.level2_cells[:, idx][:, :, idx],
            self.alpha,
            micro,
            self.substeps,
            self.stream_id,
        )

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(np.array([self.grid.horizon, self.grid.start, self.alpha]).tobytes())
        h.update(np.array([self.grid.n_steps, self.dim]).tobytes())
        h.update(np.ascontiguousarray(self.level1).tobytes())
        h.update(np.ascontiguousarray(self.level2_cells).tobytes())
        return h.hexdigest()


def zero_rough_path(grid: Grid, dim: int, alpha: float = 0.5) -> GridRoughPath:
    n = grid.n_steps
    return GridRoughPath(grid, np.zeros((n + 1, dim)), np.zeros((n, dim, dim)), alpha)


def _check_pair(rp, i, k):
    if not 0 <= i <= k <= rp.n_steps:
        raise IndexError(f"need 0 <= i <= k <= {rp.n_steps}, got i={i}, k={k}")


def chen_block(rp: GridRoughPath, i: int, k: int) -> np.ndarray:
    """Level-2 tensor over ``[t_i, t_k]`` rebuilt from the stored cells."""
    _check_pair(rp, i, k)
    d = rp.dim
    if k == i:
        return np.zeros((d, d))
    if k == i + 1:
        return rp.level2_cells[i].copy()
    # extended precision keeps long, cancelling sums within ~1e-15 relative
    x = rp.level1[i : k + 1].astype(np.longdouble)
    base = x[:-1] - x[0]
    inc = np.diff(x, axis=0)
    terms = rp.level2_cells[i:k].astype(np.longdouble) + base[:, :, None] * inc[:, None, :]
    return terms.sum(axis=0).astype(float)


class _Prefix(NamedTuple):
    cells: np.ndarray
    cross: np.ndarray


def _prefix_sums(rp: GridRoughPath) -> _Prefix:
    d = rp.dim
    n = rp.n_steps
    c = np.zeros((n + 1, d, d))
    s = np.zeros((n + 1, d, d))
    np.cumsum(rp.level2_cells, axis=0, out=c[1:])
    np.cumsum(rp.level1[:-1, :, None] * rp.increments[:, None, :], axis=0, out=s[1:])
    return _Prefix(c, s)


def level2_field(rp: GridRoughPath) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Vectorised ``(i, k) -> X^2_{t_i, t_k}`` via prefix sums.

    Used by the O(N^2) norm scans; rounding is relative to the global
    magnitude of the prefix sums rather than to the individual block.
    """
    pre = _prefix_sums(rp)
    x = rp.level1

    def field(i, k):
        xi = x[i]
        return (
            pre.cells[k]
            - pre.cells[i]
            + pre.cross[k]
            - pre.cross[i]
            - xi[..., :, None] * (x[k] - xi)[..., None, :]
        )

    return field


def path_field(values) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Two-parameter increment field ``(i, k) -> values[k] - values[i]``."""
    v = np.asarray(values, dtype=float)
    return lambda i, k: v[k] - v[i]


def _spans(n: int, pair_budget: int) -> np.ndarray:
    if n * (n + 1) // 2 <= pair_budget:
        return np.arange(1, n + 1)
    spans = 2 ** np.arange(int(np.log2(n)) + 1)
    return np.unique(np.append(spans[spans <= n], n))


def hoelder_seminorm(field, gamma: float, grid: Grid, pair_budget: int = DEFAULT_PAIR_BUDGET) -> float:
    """Discrete ``gamma``-Hölder seminorm of a two-parameter field.

    ``field`` is either an array of path values (one row per grid point) or a
    vectorised callable ``(i, k) -> increments``.  All pairs are scanned when
    their number fits in ``pair_budget``; otherwise only pairs whose span is a
    power of two (which includes adjacent pairs) plus the full span, giving a
    cheaper lower-bound estimate.
    """
    if not 0 < gamma <= 1:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    n = grid.n_steps
    if n < 1:
        raise ValueError("empty grid")
    if not callable(field):
        field = path_field(field)
    h = grid.step
    best = 0.0
    for span in _spans(n, pair_budget):
        i = np.arange(n - span + 1)
        vals = np.asarray(field(i, i + span))
        norms = np.sqrt(np.sum(vals.reshape(vals.shape[0], -1) ** 2, axis=1))
        m = norms.max() / (span * h) ** gamma
        if m > best:
            best = float(m)
    return best


def homogeneous_norm(rp: GridRoughPath, alpha: Optional[float] = None, pair_budget: int = DEFAULT_PAIR_BUDGET) -> float:
    """``||X^1||_alpha + ||X^2||_{2 alpha}^{1/2}`` over a common pair set."""
    alpha = rp.alpha if alpha is None else alpha
    n1 = hoelder_seminorm(path_field(rp.level1), alpha, rp.grid, pair_budget)
    n2 = hoelder_seminorm(level2_field(rp), 2 * alpha, rp.grid, pair_budget)
    return n1 + np.sqrt(n2)


def dilate(rp: GridRoughPath, delta: float) -> GridRoughPath:
    micro = None if rp.micro_level1 is None else delta * rp.micro_level1
    return GridRoughPath(
        rp.grid,
        delta * rp.level1,
        delta**2 * rp.level2_cells,
        rp.alpha,
        micro,
        rp.substeps,
        rp.stream_id,
    )


def concat_rough_paths(left: GridRoughPath, right: GridRoughPath) -> GridRoughPath:
    """Join rough paths on ``[a, b]`` and ``[b, c]`` (same step size)."""
    if not np.isclose(left.grid.end, right.grid.start):
        raise ValueError("rough paths do not share a junction")
    if left.n_steps and right.n_steps and not np.isclose(left.grid.step, right.grid.step):
        raise ValueError("rough paths use different step sizes")
    if left.dim != right.dim:
        raise ValueError("dimension mismatch")
    grid = Grid(left.grid.horizon + right.grid.horizon, left.n_steps + right.n_steps, left.grid.start)
    level1 = np.concatenate([left.level1, right.level1[1:] + left.level1[-1]])
    cells = np.concatenate([left.level2_cells, right.level2_cells])
    return GridRoughPath(grid, level1, cells, min(left.alpha, right.alpha))


@dataclass(frozen=True, eq=False)
class GridControlledPath:
    """Path values and Gubinelli derivative against a reference rough path.

    ``values`` has shape ``(N + 1,) + target_shape`` and ``gubinelli`` has
    shape ``(N + 1,) + target_shape + (d,)``; the trailing axis is the
    direction in the reference's value space.
    """

    reference: GridRoughPath
    values: np.ndarray
    gubinelli: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        g = np.asarray(self.gubinelli, dtype=float)
        n = self.reference.n_steps
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != n + 1:
            raise ValueError(f"values have {v.shape[0]} rows, reference grid needs {n + 1}")
        if g.shape != v.shape + (self.reference.dim,):
            raise ValueError(f"gubinelli shape {g.shape}, expected {v.shape + (self.reference.dim,)}")
        object.__setattr__(self, "values", _frozen(v))
        object.__setattr__(self, "gubinelli", _frozen(g))

    @property
    def target_shape(self):
        return self.values.shape[1:]

    @property
    def grid(self) -> Grid:
        return self.reference.grid

    def remainder(self, i, k):
        """``Y_{s,t} - Y^dagger_s X^1_{s,t}`` for indices (or index arrays) ``i <= k``."""
        x1 = self.reference.level1[k] - self.reference.level1[i]
        return self.values[k] - self.values[i] - _contract(self.gubinelli[i], x1)


def _contract(g, x1):
    # g: (..., *tshape, d), x1: (..., d)
    extra = g.ndim - x1.ndim
    x = x1.reshape(x1.shape[:-1] + (1,) * extra + x1.shape[-1:])
    return np.sum(g * x, axis=-1)


class SmoothMap(NamedTuple):
    """A map with its first (and optionally second) derivative.

    ``grad(y)`` has shape ``out_shape + (w,)``; ``hess(y)`` has shape
    ``out_shape + (w, w)``.
    """

    value: Callable
    grad: Callable
    hess: Optional[Callable] = None


def compose_smooth(g: SmoothMap, cp: GridControlledPath) -> GridControlledPath:
    """``(g(Y), grad g(Y) Y^dagger)`` for a vector-valued controlled path."""
    vals = []
    gubs = []
    for y, yd in zip(cp.values, cp.gubinelli):
        gy = np.asarray(g.value(y), dtype=float)
        dg = np.asarray(g.grad(y), dtype=float)
        vals.append(gy)
        gubs.append(np.tensordot(dg, yd, axes=([-1], [0])))
    vals = np.array(vals)
    gubs = np.array(gubs)
    if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(gubs))):
        raise ValueError("non-finite value in composed controlled path")
    return GridControlledPath(cp.reference, vals, gubs)


def composition_remainder_bound(g: SmoothMap, cp: GridControlledPath, beta: float, n_theta: int = 9) -> float:
    """Bound on ``||g(Y)^sharp||_{2 beta}`` from the Taylor remainder formula.

    ``sup|grad g| * ||Y^sharp||_{2beta} + sup|hess g| / 2 * ||Y||_beta^2`` with
    the sups taken over nodes and points along the grid segments.
    """
    if g.hess is None:
        raise ValueError("second derivative required")
    ys = cp.values
    thetas = np.linspace(0.0, 1.0, n_theta)
    pts = (ys[:-1, None, :] + thetas[None, :, None] * (ys[1:] - ys[:-1])[:, None, :]).reshape(-1, ys.shape[1])
    pts = np.concatenate([pts, ys])
    sup_grad = max(np.linalg.norm(np.asarray(g.grad(p))) for p in pts)
    sup_hess = max(np.linalg.norm(np.asarray(g.hess(p))) for p in pts)
    rem = hoelder_seminorm(cp.remainder, 2 * beta, cp.grid)
    yb = hoelder_seminorm(cp.values, beta, cp.grid)
    return sup_grad * rem + 0.5 * sup_hess * yb**2


def concat_cp(left: GridControlledPath, right: GridControlledPath) -> GridControlledPath:
    """Concatenate controlled paths on ``[a, b]`` and ``[b, c]``.

    The junction values and Gubinelli derivatives must agree exactly.
    """
    if not (np.array_equal(left.values[-1], right.values[0]) and np.array_equal(left.gubinelli[-1], right.gubinelli[0])):
        raise ValueError("controlled paths do not match at the junction")
    ref = concat_rough_paths(left.reference, right.reference)
    return GridControlledPath(
        ref,
        np.concatenate([left.values, right.values[1:]]),
        np.concatenate([left.gubinelli, right.gubinelli[1:]]),
    )
