"""Inhomogeneous line shapes, spectral preparation and controlled broadening.

Units throughout the package: time in microseconds, angular frequency in
rad/us (so ``mhz(1.0)`` is one megahertz of linewidth). Every line shape is a
normalized probability density G(delta) over atomic detuning.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional

import numpy as np
from scipy import special
from scipy.integrate import cumulative_trapezoid

from .errors import InvalidParameter, InvariantViolation

TWO_PI = 2.0 * np.pi
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
LINE_KINDS = ("gaussian", "lorentzian", "flat_top", "prepared_spike")
BROADENING_MODES = ("transverse", "longitudinal")
KERNELS = ("flat", "gaussian")

_SPIKE_TABLE_SIZE = 4097
_KERNEL_QUADRATURE = 96


def mhz(f):
    """Convert a frequency in MHz to angular frequency in rad/us."""
    return TWO_PI * f


@dataclass(frozen=True)
class LineShape:
    """Normalized inhomogeneous density G(delta).

    ``width`` is the FWHM. A prepared spike keeps a reference to the line it was
    burned from (``base``) plus the pit that was emptied around it;
    ``surviving_area`` is the fraction of the base population left after the
    hole burning, so ``pdf * surviving_area`` is the absolute surviving density.
    """

    kind: str
    center_detuning: float
    width: float
    amplitude_norm: float = 1.0
    base: Optional["LineShape"] = None
    pit_width: float = 0.0
    surviving_area: float = 1.0

    @property
    def center(self) -> float:
        return self.center_detuning

    @property
    def hwhm(self) -> float:
        return 0.5 * self.width

    def support(self):
        """(lo, hi) outside which the density is exactly zero."""
        c = self.center_detuning
        if self.kind == "flat_top":
            return c - self.hwhm, c + self.hwhm
        if self.kind == "prepared_spike":
            return c - 0.5 * self.pit_width, c + 0.5 * self.pit_width
        return -np.inf, np.inf

    @property
    def compact(self) -> bool:
        return bool(np.isfinite(self.support()[0]))

    # spike tables: x = c + g tan(theta) makes the Lorentzian factor uniform in theta
    @cached_property
    def _spike_table(self):
        g = self.hwhm
        theta_max = math.atan(0.5 * self.pit_width / g)
        theta = np.linspace(-theta_max, theta_max, _SPIKE_TABLE_SIZE)
        f = self.base.pdf(self.center_detuning + g * np.tan(theta))
        cum = g * cumulative_trapezoid(f, theta, initial=0.0)
        return theta, cum

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        c, h = self.center_detuning, self.hwhm
        if self.kind == "gaussian":
            s = self.width / FWHM_PER_SIGMA
            return np.exp(-0.5 * ((x - c) / s) ** 2) / (math.sqrt(TWO_PI) * s)
        if self.kind == "lorentzian":
            return (h / np.pi) / ((x - c) ** 2 + h * h)
        if self.kind == "flat_top":
            return np.where(np.abs(x - c) <= h, 1.0 / self.width, 0.0)
        inside = np.abs(x - c) <= 0.5 * self.pit_width
        raw = self.base.pdf(x) / (1.0 + ((x - c) / h) ** 2)
        return np.where(inside, raw / self.surviving_area, 0.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        c, h = self.center_detuning, self.hwhm
        if self.kind == "gaussian":
            s = self.width / FWHM_PER_SIGMA
            return special.ndtr((x - c) / s)
        if self.kind == "lorentzian":
            return 0.5 + np.arctan((x - c) / h) / np.pi
        if self.kind == "flat_top":
            return np.clip((x - c) / self.width + 0.5, 0.0, 1.0)
        theta, cum = self._spike_table
        return np.interp(np.arctan((x - c) / h), theta, cum) / cum[-1]

    def ppf(self, p):
        """Quantile function (inverse cdf)."""
        p = np.asarray(p, dtype=float)
        c, h = self.center_detuning, self.hwhm
        if self.kind == "gaussian":
            return c + self.width / FWHM_PER_SIGMA * special.ndtri(p)
        if self.kind == "lorentzian":
            return c + h * np.tan(np.pi * (p - 0.5))
        if self.kind == "flat_top":
            return c + self.width * (p - 0.5)
        theta, cum = self._spike_table
        return c + h * np.tan(np.interp(p * cum[-1], cum, theta))


def build_line_shape(kind: str, center: float, width: float) -> LineShape:
    if kind not in LINE_KINDS or kind == "prepared_spike":
        raise InvalidParameter(
            f"unsupported kind {kind!r}; prepared spikes come from prepare_spike", "kind")
    if not np.isfinite(width) or width <= 0:
        raise InvalidParameter(f"width must be positive, got {width}", "width")
    if not np.isfinite(center):
        raise InvalidParameter("center must be finite", "center")
    return LineShape(kind=kind, center_detuning=float(center), width=float(width))


def prepare_spike(line: LineShape, pit_width: float, spike_width: float,
                  homogeneous_width: float = 0.0) -> LineShape:
    """Empty a pit around the line center, leaving a Lorentzian antihole.

    The surviving density is ``base * L`` inside the pit, with L a peak-one
    Lorentzian of FWHM ``spike_width``; everything outside the pit is dropped
    from the simulated band.
    """
    if line.kind == "prepared_spike":
        raise InvalidParameter("line is already a prepared spike", "line")
    if pit_width <= 0:
        raise InvalidParameter("pit_width must be positive", "pit_width")
    if spike_width <= 0:
        raise InvalidParameter("spike_width must be positive", "spike_width")
    if spike_width >= pit_width:
        raise InvalidParameter(
            f"spike_width {spike_width} must be narrower than pit_width {pit_width}",
            "spike_width")
    if spike_width < homogeneous_width:
        raise InvalidParameter(
            f"spike_width {spike_width} below homogeneous width {homogeneous_width}",
            "spike_width")
    spike = LineShape(kind="prepared_spike", center_detuning=line.center_detuning,
                      width=float(spike_width), base=line, pit_width=float(pit_width))
    area = float(spike._spike_table[1][-1])
    if not area > 0:
        raise InvalidParameter("no population survives inside the pit", "pit_width")
    # the table is a cached property; carry it over to the final instance
    out = replace(spike, surviving_area=area)
    out.__dict__["_spike_table"] = spike._spike_table
    return out


def spike_decay_envelope(line: LineShape, tau: float) -> float:
    """Field-free decay |<exp(-i delta tau)>| of a prepared spike after time tau.

    Lines that are not prepared spikes carry no residual irreversible width and
    return 1.
    """
    if line.kind != "prepared_spike" or tau <= 0:
        return 1.0
    x, w = np.polynomial.legendre.leggauss(256)
    p = 0.5 * (x + 1.0)
    d = line.ppf(p) - line.center_detuning
    return float(abs(np.sum(0.5 * w * np.exp(-1j * d * tau))))


@dataclass(frozen=True)
class BroadeningControl:
    """Reversible broadening applied after preparation.

    ``magnitude`` is the total flat (or Gaussian FWHM) broadening in transverse
    mode and the signed gradient chi per unit length in longitudinal mode.
    """

    mode: str = "transverse"
    magnitude: float = 0.0
    switch_time: float = 0.0
    transfer_efficiency: float = 1.0
    kernel: str = "flat"

    def __post_init__(self):
        if self.mode not in BROADENING_MODES:
            raise InvalidParameter(f"unknown mode {self.mode!r}", "mode")
        if self.kernel not in KERNELS:
            raise InvalidParameter(f"unknown kernel {self.kernel!r}", "kernel")
        if not np.isfinite(self.magnitude):
            raise InvalidParameter("magnitude must be finite", "magnitude")
        if self.mode == "transverse" and self.magnitude < 0:
            raise InvalidParameter("transverse magnitude must be >= 0", "magnitude")
        if not 0.0 <= self.transfer_efficiency <= 1.0:
            raise InvalidParameter("transfer_efficiency must lie in [0, 1]",
                                   "transfer_efficiency")


@dataclass(frozen=True)
class SpectralMap:
    """A line after controlled broadening, resolved along the sample.

    ``pdf`` is the z-averaged density; for a longitudinal map each slice carries
    the unbroadened line shifted to ``slice_offsets``.
    """

    line: LineShape
    control: BroadeningControl
    length: float = 1.0

    @property
    def mode(self):
        return self.control.mode

    @property
    def center(self):
        return self.line.center_detuning

    @property
    def span(self) -> float:
        """Total spread of resonance frequencies introduced by the broadening."""
        m = abs(self.control.magnitude)
        return m * self.length if self.mode == "longitudinal" else m

    @property
    def flat_kernel(self) -> bool:
        return self.mode == "longitudinal" or self.control.kernel == "flat"

    @property
    def width(self) -> float:
        if self.span == 0:
            return self.line.width
        if self.flat_kernel:
            return self.span + self.line.width
        return math.hypot(self.span, self.line.width)

    def support(self):
        lo, hi = self.line.support()
        if self.span == 0:
            return lo, hi
        if not self.flat_kernel:
            return -np.inf, np.inf
        return lo - 0.5 * self.span, hi + 0.5 * self.span

    def slice_offsets(self, nz: int):
        """Resonance shift of each slice, chi*(z - L/2)."""
        if self.mode != "longitudinal":
            return np.zeros(nz)
        return self.control.magnitude * self.length * (np.linspace(0.0, 1.0, nz) - 0.5)

    @cached_property
    def _kernel_nodes(self):
        x, w = np.polynomial.legendre.leggauss(_KERNEL_QUADRATURE)
        return self.line.ppf(0.5 * (x + 1.0)), 0.5 * w

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.span == 0:
            return self.line.pdf(x)
        if self.flat_kernel:
            h = 0.5 * self.span
            return (self.line.cdf(x + h) - self.line.cdf(x - h)) / self.span
        # Gaussian kernel: average the kernel over quantiles of the narrow line
        s = self.span / FWHM_PER_SIGMA
        v, w = self._kernel_nodes
        d = (x[..., None] - v) / s
        return np.sum(w * np.exp(-0.5 * d * d), axis=-1) / (math.sqrt(TWO_PI) * s)


def apply_broadening(line: LineShape, ctrl: BroadeningControl, length: float = 1.0) -> SpectralMap:
    if length <= 0:
        raise InvalidParameter("length must be positive", "length")
    smap = SpectralMap(line=line, control=ctrl, length=float(length))
    if line.kind == "prepared_spike" and 0 < smap.span <= line.width:
        warnings.warn("broadening is not wider than the prepared spike; CRIB recall "
                      "will be poor", RuntimeWarning, stacklevel=2)
    return smap


@dataclass(frozen=True, eq=False)
class DetuningGrid:
    """Midpoint quadrature grid mirrored exactly about the line center."""

    nodes: np.ndarray
    weights: np.ndarray
    cutoff: float
    center: float = 0.0
    captured_mass: float = 1.0

    @property
    def spacing(self) -> float:
        return float(self.nodes[1] - self.nodes[0])

    @property
    def edges(self):
        return np.concatenate([self.nodes - 0.5 * self.spacing,
                               self.nodes[-1:] + 0.5 * self.spacing])

    @property
    def symmetric(self) -> bool:
        off = self.nodes - self.center
        return bool(np.array_equal(off, -off[::-1]))

    def integrate(self, values):
        return float(np.sum(self.weights * values))

    def __eq__(self, other):
        if not isinstance(other, DetuningGrid):
            return NotImplemented
        return (np.array_equal(self.nodes, other.nodes)
                and np.array_equal(self.weights, other.weights)
                and self.cutoff == other.cutoff and self.center == other.center)

    __hash__ = None


def _flat_edge(obj):
    """Half-width of a sharp flat edge the grid should align with, if any."""
    if isinstance(obj, LineShape):
        return obj.hwhm if obj.kind == "flat_top" else None
    if obj.span > 0 and obj.flat_kernel and obj.line.width < obj.span:
        return 0.5 * obj.span
    if obj.span == 0:
        return _flat_edge(obj.line)
    return None


def discretize(line, n_bins: int = 400, cutoff_in_linewidths: float = 5.0) -> DetuningGrid:
    """Quadrature grid for a LineShape or SpectralMap.

    The half-range is ``cutoff * FWHM / 2`` clipped to the compact support, and
    is nudged so that sharp flat-band edges fall on cell boundaries.
    """
    if n_bins < 16:
        raise InvalidParameter(f"n_bins must be >= 16, got {n_bins}", "n_bins")
    if n_bins % 2:
        raise InvalidParameter("n_bins must be even for an exactly mirrored grid", "n_bins")
    if cutoff_in_linewidths < 3:
        raise InvalidParameter("cutoff must be >= 3 linewidths", "cutoff")
    c = line.center
    lo, hi = line.support()
    half = 0.5 * cutoff_in_linewidths * line.width
    if np.isfinite(lo):
        half = min(half, max(c - lo, hi - c))
    m = n_bins // 2
    delta = half / m
    edge = _flat_edge(line)
    if edge is not None and edge < half * (1 + 1e-12):
        k = max(1, int(round(edge / delta)))
        delta = edge / k
        half = delta * m
    pos = delta * (np.arange(m) + 0.5)
    offsets = np.concatenate([-pos[::-1], pos])
    nodes = c + offsets
    g = line.pdf(nodes)
    mass = float(np.sum(delta * g))
    if not mass > 0:
        raise InvalidParameter("line has no weight on the grid", "line")
    weights = np.full(n_bins, delta / mass)
    return DetuningGrid(nodes=nodes, weights=weights, cutoff=float(half),
                        center=float(c), captured_mass=mass)


@dataclass(frozen=True)
class Medium:
    """A discretized absorbing sample.

    ``orientation`` records how many times the detunings were inverted (+1 or
    -1); the physical detuning of node j is ``orientation * grid.nodes[j]`` while
    its population stays attached to it.
    """

    length: float
    resonant_depth: float
    line: LineShape
    broadening: BroadeningControl
    grid: DetuningGrid
    nz: int = 200
    t2: float = np.inf
    orientation: int = 1

    def __post_init__(self):
        if not self.resonant_depth >= 0:
            raise InvalidParameter("resonant_depth must be >= 0", "resonant_depth")
        if not self.length > 0:
            raise InvalidParameter("length must be positive", "length")
        if self.nz < 2:
            raise InvalidParameter("nz must be >= 2", "nz")
        if not self.t2 > 0:
            raise InvalidParameter("t2 must be positive", "t2")
        if self.orientation not in (1, -1):
            raise InvalidParameter("orientation must be +1 or -1", "orientation")
        if (self.broadening.mode == "longitudinal" and self.broadening.magnitude == 0
                and self.resonant_depth > 0):
            raise InvalidParameter("longitudinal mode needs a nonzero gradient",
                                   "broadening.magnitude")

    @property
    def mode(self):
        return self.broadening.mode

    @cached_property
    def spectral_map(self) -> SpectralMap:
        return SpectralMap(self.line, self.broadening, self.length)

    @property
    def detunings(self):
        return self.orientation * self.grid.nodes

    @property
    def gamma(self) -> float:
        return 0.0 if np.isinf(self.t2) else 1.0 / self.t2

    @cached_property
    def coupling(self) -> float:
        """Normalized coupling kappa: dE/dzeta = i kappa sum_j p_j sigma_j."""
        if self.resonant_depth == 0:
            return 0.0
        smap = self.spectral_map
        if self.mode == "longitudinal":
            return self.resonant_depth * smap.span / TWO_PI
        g0 = float(smap.pdf(smap.center))
        if not g0 > 0:
            raise InvalidParameter("line density vanishes at its center", "line")
        return self.resonant_depth / (TWO_PI * g0)

    @cached_property
    def populations(self) -> np.ndarray:
        """Population fraction per (slice, node); each row sums to one."""
        smap = self.spectral_map
        if self.mode == "transverse":
            p = self.grid.weights * smap.pdf(self.grid.nodes)
            p = p / p.sum()
            out = np.ascontiguousarray(np.broadcast_to(p, (self.nz, p.size)))
        else:
            # cell averages keep narrow per-slice lines on the grid
            offsets = smap.slice_offsets(self.nz)
            cdf = self.line.cdf(self.grid.edges[None, :] - offsets[:, None])
            out = np.diff(cdf, axis=1)
            rows = out.sum(axis=1, keepdims=True)
            if np.any(rows <= 0):
                raise InvalidParameter("a slice line falls outside the detuning grid",
                                       "grid")
            out = out / rows
        out.setflags(write=False)
        return out


def build_medium(line: LineShape, broadening: BroadeningControl, resonant_depth: float,
                 length: float = 1.0, n_bins: int = 400, cutoff: float = 5.0,
                 nz: int = 200, t2: float = np.inf) -> Medium:
    smap = apply_broadening(line, broadening, length)
    grid = discretize(smap, n_bins, cutoff)
    return Medium(length=float(length), resonant_depth=float(resonant_depth), line=line,
                  broadening=broadening, grid=grid, nz=int(nz), t2=float(t2))


def flip_detunings(medium: Medium) -> Medium:
    """Invert every detuning, delta -> -delta, keeping populations on their nodes."""
    if medium.grid.center != 0.0 or not medium.grid.symmetric:
        raise InvariantViolation(
            "detuning grid is not symmetric about zero; the inversion would not map "
            "it onto itself")
    return replace(medium, orientation=-medium.orientation)
