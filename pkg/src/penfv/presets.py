"""Named initial-data presets.

Each preset returns smooth pointwise functions ``(rho0, u0, theta0)`` of
``x`` with shape ``(d, ...)``; the solid-region extension is applied by
:func:`penfv.geometry.extend_initial_data`.
"""
from __future__ import annotations

import numpy as np

PRESETS = ("constant", "gaussian-bump", "shear", "random")


def _const(c, comps=None):
    def f(x):
        shp = x.shape[1:] if comps is None else (comps,) + x.shape[1:]
        return np.full(shp, float(c))
    return f


def _fourier(rng: np.random.Generator, dim: int, modes: int):
    """Random trigonometric polynomial on the unit torus scaled to [-1, 1]."""
    ks = np.array(np.meshgrid(*([np.arange(-modes, modes + 1)] * dim), indexing="ij")).reshape(dim, -1).T
    ks = ks[np.any(ks != 0, axis=1)]
    amp = rng.standard_normal(len(ks)) / (1.0 + np.sum(ks**2, axis=1))
    phase = rng.uniform(0, 2 * np.pi, len(ks))
    norm = float(np.sum(np.abs(amp)))

    def f(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[1:])
        for k, a, ph in zip(ks, amp, phase):
            arg = 2 * np.pi * np.tensordot(k, x, axes=(0, 0)) + ph
            out += a * np.cos(arg)
        return out / norm

    return f


def initial_data(preset: str, dim: int, center=None, *, theta=1.0, rho=1.0, amplitude=0.3, width=0.1,
                 velocity=0.5, rho_min=None, seed=0, modes=2, L=1.0):
    """Return ``(rho0, u0, theta0)`` for a named preset.

    ``gaussian-bump``: ``rho * (1 + amplitude * exp(-|x - c|^2 / (2 width^2)))``, at rest.
    ``shear``: ``u_1 = velocity * sin(2 pi x_2 / L)``, constant density and temperature.
    ``random``: seeded smooth perturbations of all three fields; when
    ``rho_min`` is given the density is stretched to span (up to sampling)
    ``[rho_min, rho]``.
    """
    if preset not in PRESETS:
        raise ValueError(f"unknown initial preset {preset!r}; expected one of {PRESETS}")
    if preset == "random" and not 0 <= amplitude < 1:
        raise ValueError("random preset needs 0 <= amplitude < 1")
    c = np.asarray(center if center is not None else [0.5 * L] * dim, dtype=float)
    if preset == "constant":
        return _const(rho), _const(0.0, dim), _const(theta)
    if preset == "gaussian-bump":
        def rho0(x):
            r2 = np.sum((x - c.reshape((-1,) + (1,) * (x.ndim - 1))) ** 2, axis=0)
            return rho * (1.0 + amplitude * np.exp(-r2 / (2 * width**2)))
        return rho0, _const(0.0, dim), _const(theta)
    if preset == "shear":
        def u0(x):
            out = np.zeros((dim,) + x.shape[1:])
            out[0] = velocity * np.sin(2 * np.pi * x[1] / L)
            return out
        return _const(rho), u0, _const(theta)
    rng = np.random.default_rng(seed)
    fr, ft = _fourier(rng, dim, modes), _fourier(rng, dim, modes)
    fu = [_fourier(rng, dim, modes) for _ in range(dim)]
    if rho_min is None:
        rho0 = lambda x: rho * (1.0 + amplitude * fr(x / L))  # noqa: E731
    else:
        # stretch the sampled range of the perturbation onto [rho_min, rho]
        dim_axes = [np.linspace(0.0, 1.0, 97 if dim == 2 else 33, endpoint=False)] * dim
        sample = fr(np.stack(np.meshgrid(*dim_axes, indexing="ij")))
        lo, hi = float(sample.min()), float(sample.max())
        rho0 = lambda x: rho_min + (rho - rho_min) * (fr(x / L) - lo) / (hi - lo)  # noqa: E731
    u0 = lambda x: velocity * np.stack([f(x / L) for f in fu])  # noqa: E731
    theta0 = lambda x: theta * (1.0 + amplitude * ft(x / L))  # noqa: E731
    return rho0, u0, theta0
