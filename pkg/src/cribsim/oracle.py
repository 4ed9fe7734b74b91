"""Frequency-domain linear response of an inhomogeneous medium.

For a field E(t) = sum_nu E(nu) exp(i nu t) the weak-field medium multiplies
each component by exp(-kappa R(nu)), where

    R(nu) = integral G(delta) / (i (nu + delta) + gamma) d delta
          = pi G(-nu) - i PV integral G(delta) / (nu + delta) d delta   (gamma = 0).

This module never touches the time-domain solver or its detuning grid.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import special

from .ensemble import FWHM_PER_SIGMA, LineShape, SpectralMap, BroadeningControl

_TABLE_POINTS = 4001
_FEATURE_POINTS = 401
_CHUNK = 128


def _closed_form(line: LineShape, nu, gamma):
    c = line.center_detuning
    if line.kind == "lorentzian":
        return -1j / (nu + c - 1j * (line.hwhm + gamma))
    if line.kind == "gaussian":
        s = line.width / FWHM_PER_SIGMA
        z = (-nu + 1j * gamma - c) / (math.sqrt(2.0) * s)
        return math.sqrt(np.pi / 2.0) * special.wofz(z) / s
    if line.kind == "flat_top":
        eps = max(gamma, 1e-12 * line.width)
        h = line.hwhm
        return (-1j / line.width) * (np.log(nu + c + h - 1j * eps) - np.log(nu + c - h - 1j * eps))
    return None


def _table(smap: SpectralMap):
    """Fine independent sampling of the density, dense around sharp features."""
    line = smap.line
    lo, hi = smap.support()
    if not np.isfinite(lo):
        lo, hi = smap.center - 12 * smap.width, smap.center + 12 * smap.width
    pts = [np.linspace(lo, hi, _TABLE_POINTS)]
    feats = []
    if line.kind == "prepared_spike":
        h = line.hwhm
        if smap.span == 0:
            feats = [line.center_detuning]
        elif smap.flat_kernel:
            feats = [line.center_detuning - 0.5 * smap.span, line.center_detuning + 0.5 * smap.span]
        if feats:
            tmax = math.atan(0.5 * line.pit_width / h)
            th = np.linspace(-tmax, tmax, _FEATURE_POINTS)
            pts += [f + h * np.tan(th) for f in feats]
    elif line.kind == "flat_top" and smap.flat_kernel:
        pts.append(line.center_detuning + np.array([-1, 1, -1, 1]) * 0.5
                   * np.array([smap.span + line.width] * 2 + [abs(smap.span - line.width)] * 2))
    x = np.unique(np.clip(np.concatenate(pts), lo, hi))
    return x, smap.pdf(x)


def _tabulated(x, g, nu, gamma):
    eps = max(gamma, 1e-12 * (x[-1] - x[0]))
    a, b = x[:-1], x[1:]
    slope = np.diff(g) / (b - a)
    out = np.empty(nu.shape, complex)
    for i in range(0, nu.size, _CHUNK):
        p = -nu[i:i + _CHUNK, None] + 1j * eps
        logs = np.log(x[None, :] - p)
        seg = slope * (b - a) + (g[:-1] + slope * (p - a)) * (logs[:, 1:] - logs[:, :-1])
        out[i:i + _CHUNK] = -1j * seg.sum(axis=1)
    return out


def line_response(obj, nu, gamma: float = 0.0):
    """R(nu) for a LineShape or SpectralMap."""
    nu = np.asarray(nu, dtype=float)
    smap = obj if isinstance(obj, SpectralMap) else SpectralMap(obj, BroadeningControl())
    if smap.span == 0:
        r = _closed_form(smap.line, nu, gamma)
        if r is not None:
            return r
    x, g = _table(smap)
    return _tabulated(x, g, nu.ravel(), gamma).reshape(nu.shape)
