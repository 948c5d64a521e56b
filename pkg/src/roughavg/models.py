"""Registry of benchmark slow-fast models (all one-dimensional blocks)."""

from __future__ import annotations

import numpy as np

from .slowfast import AssumptionMeta, SlowFastCoeffs


def _mat(a):
    return np.asarray(a, dtype=float)[..., None, None]


def _sigma_cos(amp):
    sigma = lambda x: _mat(1.0 + amp * np.cos(x[..., 0]))
    dsigma = lambda x: _mat(-amp * np.sin(x[..., 0]))[..., None]
    d2sigma = lambda x: _mat(-amp * np.cos(x[..., 0]))[..., None, None]
    return sigma, dsigma, d2sigma


def ou_sine(c0: float = 1.0, h0: float = 1.0, sigma_amp: float = 0.5, f_scale: float = 1.0) -> SlowFastCoeffs:
    """``f = f_scale sin y``, ``g = -(y - c0 x)``, ``h = h0``, ``sigma = 1 + sigma_amp cos x``.

    The frozen dynamics is an OU process with invariant law
    ``N(c0 x, h0^2 / 2)``, so ``fbar(x) = f_scale exp(-h0^2 / 4) sin(c0 x)``.
    """
    sigma, dsigma, d2sigma = _sigma_cos(sigma_amp)
    zeros3 = lambda x, y: np.zeros(np.broadcast_shapes(x.shape, y.shape) + (1, 1))
    var = h0**2 / 2

    def frozen_mean(x, y, t):
        return c0 * x + (y - c0 * x) * np.exp(-t)

    def frozen_var(t):
        return var * (1 - np.exp(-2 * t))

    meta = AssumptionMeta(
        gamma1=1.0,
        gamma2=2.0,
        eta1=1.0,
        eta2=0.0,
        eta3=2.0,
        q=4.0,
        r=0.0,
        f_sup=abs(f_scale),
        f_lip=abs(f_scale),
        sigma_norm=1.0 + abs(sigma_amp),
        h_lip=0.0,
    )
    return SlowFastCoeffs(
        name="ou_sine",
        dims=(1, 1, 1, 1),
        f=lambda x, y: f_scale * np.sin(y) + 0.0 * x,
        g=lambda x, y: -(y - c0 * x),
        h=lambda x, y: np.full(np.broadcast_shapes(x.shape, y.shape) + (1,), h0),
        sigma=sigma,
        dsigma=dsigma,
        d2sigma=d2sigma,
        dxh=zeros3,
        dyh=zeros3,
        meta=meta,
        closed_form={
            "fbar": lambda x: f_scale * np.exp(-var / 2) * np.sin(c0 * np.asarray(x)),
            "invariant_mean": lambda x: c0 * np.asarray(x),
            "invariant_var": lambda x: var + 0.0 * np.asarray(x),
            "frozen_mean": frozen_mean,
            "frozen_var": frozen_var,
            "c0": c0,
            "h0": h0,
            "f_scale": f_scale,
        },
    )


def cubic(
    h0: float = 1.0,
    lam_amp: float = 0.5,
    phi_amp: float = 0.5,
    h_amp: float = 0.2,
    sigma_amp: float = 0.5,
) -> SlowFastCoeffs:
    """Superlinear fast drift ``g = -lam(x) y |y|^2 - phi(x) y``.

    ``lam(x) = 1 + lam_amp sin^2 x`` and ``phi(x) = 1 + phi_amp sin^2 x``
    are bounded below by ``kappa = 1``; ``h = h0 (1 + h_amp (sin y + cos x))``
    has y-Lipschitz constant ``L = h0 h_amp``, so the contraction rate is
    ``2 kappa - L^2``.
    """
    sigma, dsigma, d2sigma = _sigma_cos(sigma_amp)
    lam = lambda x: 1.0 + lam_amp * np.sin(x) ** 2
    phi = lambda x: 1.0 + phi_amp * np.sin(x) ** 2
    kappa_ = 1.0
    lip_y = h0 * h_amp
    hmax = h0 * (1 + 2 * h_amp)

    def g(x, y):
        return -lam(x) * y * np.sum(y**2, axis=-1, keepdims=True) - phi(x) * y

    def h(x, y):
        return _mat(h0 * (1 + h_amp * (np.sin(y[..., 0]) + np.cos(x[..., 0]))))

    meta = AssumptionMeta(
        gamma1=2.0 * kappa_,
        gamma2=2.0 * kappa_ - lip_y**2,
        eta1=3.0,
        eta2=0.0,
        eta3=0.0,
        q=8.0,
        r=3.0,
        f_sup=1.0,
        f_lip=1.0,
        sigma_norm=1.0 + abs(sigma_amp),
        h_lip=h0 * h_amp * np.sqrt(2.0),
    )
    return SlowFastCoeffs(
        name="cubic",
        dims=(1, 1, 1, 1),
        f=lambda x, y: np.sin(y) + 0.0 * x,
        g=g,
        h=h,
        sigma=sigma,
        dsigma=dsigma,
        d2sigma=d2sigma,
        dxh=lambda x, y: _mat(-h0 * h_amp * np.sin(x[..., 0]) + 0.0 * y[..., 0])[..., None],
        dyh=lambda x, y: _mat(h0 * h_amp * np.cos(y[..., 0]) + 0.0 * x[..., 0])[..., None],
        meta=meta,
        closed_form={"hmax": hmax},
    )


MODELS = {"ou_sine": ou_sine, "cubic": cubic}


def get_model(name: str, **params) -> SlowFastCoeffs:
    try:
        factory = MODELS[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; known: {sorted(MODELS)}") from None
    return factory(**params)
