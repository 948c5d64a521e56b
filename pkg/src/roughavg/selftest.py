"""Deterministic invariant checks used by ``roughavg selftest``."""

from __future__ import annotations

from typing import NamedTuple, Optional

import numpy as np

from .core import Grid, GridRoughPath, chen_block, dilate, homogeneous_norm
from .integral import identity_integrand, kappa, rough_integral
from .lifts import NoiseSpec, fbm_lift, mixed_lift, sample_lift, stratonovich_from_ito


class Check(NamedTuple):
    name: str
    passed: bool
    detail: str


def _check(name, passed, detail):
    return Check(name, bool(passed), detail)


def chen_scan(rp: GridRoughPath, n_triples: int = 10_000, seed: int = 0) -> float:
    """Worst Chen defect over random triples ``i <= j <= k``.

    The defect is measured relative to the size of the three terms on the
    right-hand side, so blocks that nearly cancel do not inflate it.
    """
    n = rp.n_steps
    if n < 1:
        return 0.0
    rng = np.random.default_rng(seed)
    tri = np.sort(rng.integers(0, n + 1, size=(n_triples, 3)), axis=1)
    worst = 0.0
    x = rp.level1
    for i, j, k in tri:
        a = chen_block(rp, i, j)
        b = chen_block(rp, j, k)
        c = np.outer(x[j] - x[i], x[k] - x[j])
        lhs = chen_block(rp, i, k)
        scale = max(np.abs(a).max(), np.abs(b).max(), np.abs(c).max(), np.abs(lhs).max())
        if scale == 0:
            continue
        worst = max(worst, float(np.abs(lhs - (a + b + c)).max() / scale))
    return worst


def zeta_em(s: float, n: int = 1000) -> tuple:
    """``zeta(s)`` for ``s > 1`` by a partial sum plus Euler-Maclaurin tail.

    Returns ``(value, remainder_bound)``.
    """
    k = np.arange(1, n, dtype=float)
    head = float(np.sum(k[::-1] ** -s))
    tail = n ** (1 - s) / (s - 1) + 0.5 * n**-s + s * n ** (-s - 1) / 12
    bound = s * (s + 1) * (s + 2) * n ** (-s - 3) / 720
    return head + tail, bound


def run_selftest(rp: Optional[GridRoughPath] = None, seed: int = 0) -> list:
    checks = []
    grid = Grid(1.0, 128)
    lifts = []
    if rp is not None:
        lifts.append(("input", rp))
    else:
        bi, inc = sample_lift(NoiseSpec("brownian_ito", 2, seed=seed, stream_id=1), grid)
        fb = fbm_lift(NoiseSpec("fbm", 1, hurst=0.4, seed=seed, stream_id=0), grid)
        lifts += [("brownian_ito", bi), ("fbm", fb), ("mixed", mixed_lift(fb, inc, grid, 1))]
    for name, r in lifts:
        err = chen_scan(r, 2000, seed)
        checks.append(_check(f"chen[{name}]", err <= 1e-12, f"max rel defect {err:.2e}"))
    base = lifts[0][1]
    if base.n_steps >= 1:
        val, _ = rough_integral(identity_integrand(base), base)
        err = float(np.abs(val - chen_block(base, 0, base.n_steps)).max())
        scale = max(float(np.abs(val).max()), 1.0)
        checks.append(_check("telescoping", err <= 1e-12 * scale, f"abs gap {err:.2e}"))
        n0 = homogeneous_norm(base)
        n1 = homogeneous_norm(dilate(base, -2.5))
        checks.append(_check("dilation", abs(n1 - 2.5 * n0) <= 1e-12 * max(n1, 1.0), f"{n1:.12g} vs {2.5 * n0:.12g}"))
        there = stratonovich_from_ito(stratonovich_from_ito(base, 0.5), -0.5)
        # exact up to the rounding of one add/subtract pair
        tol = 4 * np.finfo(float).eps * (np.abs(base.level2_cells).max() + base.grid.step)
        gap = float(np.abs(there.level2_cells - base.level2_cells).max())
        checks.append(_check("ito_strat_involution", gap <= tol, f"max gap {gap:.2e} (tol {tol:.1e})"))
    ref, bound = zeta_em(1.5)
    ref = 2**1.5 * ref
    k = kappa(0.5)
    checks.append(_check("kappa", abs(k - ref) <= 1e-10 + 2**1.5 * bound, f"kappa(1/2)={k:.12f}, oracle {ref:.12f}"))
    return checks
