"""Weak-field Maxwell-Bloch propagation and the CRIB storage protocol.

Fields are slowly varying envelopes in the retarded frame; light transit
through the sample is taken as instantaneous on the atomic time scale. The
normalized model is

    d sigma / dt   = -(i delta + 1/T2) sigma + i E
    dE / dzeta     = i kappa sum_j p_j sigma_j,       zeta = z / L in [0, 1]

with kappa chosen so that a resonant continuous wave loses intensity as
exp(-alpha L).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import _kernel
from .ensemble import (LineShape, BroadeningControl, Medium, build_medium, flip_detunings,
                       prepare_spike, spike_decay_envelope)
from .errors import (InvalidParameter, NumericalFailure, ProtocolOrderError,
                     SpectralLeakageError, UndefinedMetric)
from .oracle import line_response

DIRECTIONS = ("forward", "backward")
LEAKAGE_FRACTION = 1e-2
_PAD = 8


@dataclass(frozen=True, eq=False)
class Waveform:
    """Complex envelope on a uniform time grid starting at ``t0``."""

    samples: np.ndarray
    dt: float
    t0: float = 0.0
    carrier: float = 0.0
    direction: str = "forward"
    carrier_phase: float = 0.0

    def __post_init__(self):
        s = np.array(self.samples, dtype=complex).ravel()
        if s.size < 2:
            raise InvalidParameter("a waveform needs at least two samples", "samples")
        if not self.dt > 0:
            raise InvalidParameter("dt must be positive", "dt")
        if self.direction not in DIRECTIONS:
            raise InvalidParameter(f"unknown direction {self.direction!r}", "direction")
        if not np.all(np.isfinite(s)):
            raise InvalidParameter("samples must be finite", "samples")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "carrier_phase", float(self.carrier_phase) % (2 * np.pi))

    @property
    def n(self) -> int:
        return self.samples.size

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.n)

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * (self.n - 1)

    def energy(self) -> float:
        return float(np.sum(np.abs(self.samples) ** 2) * self.dt)

    def centroid(self) -> float:
        p = np.abs(self.samples) ** 2
        total = p.sum()
        return float(np.dot(p, self.times) / total) if total > 0 else self.t0

    def with_samples(self, samples, **changes):
        return replace(self, samples=samples, **changes)

    def scaled(self, a):
        return self.with_samples(a * self.samples)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "re", "im", "abs2"])
            for t, v in zip(self.times, self.samples):
                w.writerow([f"{t:.12g}", f"{v.real:.12g}", f"{v.imag:.12g}", f"{abs(v) ** 2:.12g}"])


@dataclass(frozen=True, eq=False)
class EnsembleState:
    """Coherence sigma[z, node] at ``timestamp``.

    ``orientation`` is the medium orientation it was written under and
    ``t_ref`` the energy centroid of the absorbed pulse, used for the storage
    phase and the residual-linewidth envelope.
    """

    sigma: np.ndarray
    direction: str
    timestamp: float
    dt: float
    orientation: int = 1
    carrier: float = 0.0
    carrier_phase: float = 0.0
    t_ref: float = 0.0
    envelope: float = 1.0

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise InvalidParameter(f"unknown direction {self.direction!r}", "direction")


@dataclass(frozen=True, eq=False)
class CribResult:
    transmitted: Waveform
    recalled: Waveform
    efficiency: float
    overlap_fidelity: float
    chirp_metric: float
    storage_time: float
    input: Optional[Waveform] = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "efficiency": self.efficiency,
            "overlap_fidelity": self.overlap_fidelity,
            "chirp_metric": self.chirp_metric,
            "storage_time": self.storage_time,
            "recalled_carrier_phase": self.recalled.carrier_phase,
            "transmitted_fraction": (self.transmitted.energy() / self.input.energy()
                                     if self.input is not None else None),
            "diagnostics": dict(self.diagnostics),
        }


def _check_finite(arr, medium, dt, what):
    if not np.all(np.isfinite(arr)):
        raise NumericalFailure(f"non-finite values in {what}", {
            "nz": medium.nz, "n_bins": medium.grid.nodes.size, "dt": dt,
            "kappa": medium.coupling, "max_detuning_dt": float(np.max(np.abs(medium.grid.nodes)) * dt)})


def recurrence_time(medium: Medium) -> float:
    """Time after which the discrete detuning comb rephases, 2 pi / spacing."""
    return 2 * np.pi / medium.grid.spacing


def _check_recurrence(medium: Medium, span: float):
    t_rev = recurrence_time(medium)
    if medium.coupling > 0 and span >= t_rev:
        raise InvalidParameter(
            f"simulated window {span:.4g} us reaches the detuning-grid recurrence time "
            f"{t_rev:.4g} us; increase n_bins", "n_bins")


def spectral_halfwidth(w: Waveform, fraction: float = 1.0 - LEAKAGE_FRACTION) -> float:
    """Half-width about the spectral centroid that holds ``fraction`` of the energy."""
    spec = np.abs(np.fft.fft(w.samples, _PAD * w.n)) ** 2
    nu = 2 * np.pi * np.fft.fftfreq(spec.size, w.dt)
    total = spec.sum()
    if total == 0:
        return 0.0
    centre = float(np.dot(spec, nu) / total)
    dist = np.abs(nu - centre)
    order = np.argsort(dist)
    k = np.searchsorted(np.cumsum(spec[order]) / total, fraction)
    return float(dist[order][min(k, dist.size - 1)])


def stored_energy(state: EnsembleState, medium: Medium) -> float:
    """Excitation left in the atoms, in the units of Waveform.energy."""
    per_slice = np.sum(medium.populations * np.abs(state.sigma) ** 2, axis=1)
    return float(medium.coupling * np.trapezoid(per_slice, dx=1.0 / (medium.nz - 1)))


def absorb(input: Waveform, medium: Medium):
    """Propagate a forward pulse through a fresh medium."""
    if input.direction != "forward":
        raise InvalidParameter("absorb expects a forward-propagating input", "input.direction")
    bw = spectral_halfwidth(input)
    if bw > medium.grid.cutoff:
        raise SpectralLeakageError(
            f"input bandwidth {bw:.4g} rad/us exceeds the grid cutoff "
            f"{medium.grid.cutoff:.4g} rad/us; widen the grid or lengthen the pulse")
    _check_recurrence(medium, input.t_end - input.t0)
    pop = medium.populations
    sigma = np.zeros(pop.shape, complex)
    if medium.coupling == 0:
        # no absorbers: the field passes untouched and nothing is written
        out = input.samples.copy()
    else:
        out = _kernel.propagate(np.ascontiguousarray(input.samples), sigma, pop,
                                medium.detunings, medium.gamma, input.dt, medium.coupling)
    _check_finite(out, medium, input.dt, "transmitted field")
    _check_finite(sigma, medium, input.dt, "coherence")
    transmitted = input.with_samples(out)
    state = EnsembleState(sigma=sigma, direction="forward", timestamp=input.t_end, dt=input.dt,
                          orientation=medium.orientation, carrier=input.carrier,
                          carrier_phase=input.carrier_phase, t_ref=input.centroid())
    return transmitted, state


def wait(state: EnsembleState, medium: Medium, tau: float) -> EnsembleState:
    """Field-free evolution for ``tau``.

    Each class picks up exp(-i delta tau), T2 decay is applied, and the residual
    width of a prepared spike sets an extra envelope measured from ``t_ref``.
    """
    if tau < 0:
        raise InvalidParameter("wait time must be >= 0", "tau")
    now = state.timestamp + tau
    env = spike_decay_envelope(medium.line, now - state.t_ref)
    factor = np.exp(-1j * medium.detunings * tau - medium.gamma * tau)
    ratio = env / state.envelope if state.envelope > 0 else 0.0
    return replace(state, sigma=state.sigma * (factor * ratio)[None, :], timestamp=now,
                   envelope=env)


def mode_match(state: EnsembleState, eta_m: float) -> EnsembleState:
    """Convert forward coherence into a backward-emitting source, keeping eta_m."""
    if not 0.0 <= eta_m <= 1.0:
        raise InvalidParameter(f"eta_m must lie in [0, 1], got {eta_m}", "eta_m")
    if state.direction != "forward":
        raise ProtocolOrderError("mode matching needs a forward-written state")
    return replace(state, sigma=eta_m * state.sigma, direction="backward")


def _emit(state: EnsembleState, medium: Medium, n_samples: int):
    if medium.orientation == state.orientation:
        raise ProtocolOrderError("recall needs the medium passed through flip_detunings")
    if n_samples < 2:
        raise InvalidParameter("recall needs at least two samples", "n_samples")
    pop = medium.populations
    if state.direction == "backward":
        # backward emission traverses the same slices in reverse order
        sigma = np.ascontiguousarray(state.sigma[::-1])
        pop = np.ascontiguousarray(pop[::-1])
    else:
        sigma = state.sigma.copy()
    out = _kernel.propagate(np.zeros(n_samples + 1, complex), sigma, pop, medium.detunings,
                            medium.gamma, state.dt, medium.coupling)
    _check_finite(out, medium, state.dt, "recalled field")
    storage = state.timestamp - state.t_ref
    w = Waveform(samples=out[1:], dt=state.dt, t0=state.timestamp + state.dt,
                 carrier=state.carrier, direction=state.direction,
                 carrier_phase=state.carrier_phase + state.carrier * storage)
    if state.direction == "backward":
        sigma = sigma[::-1]
    after = replace(state, sigma=sigma, timestamp=state.timestamp + n_samples * state.dt,
                    orientation=medium.orientation)
    return w, after


def recall(state: EnsembleState, medium_flipped: Medium, n_samples: Optional[int] = None,
           duration: Optional[float] = None) -> Waveform:
    """Emit the stored excitation after the detunings have been inverted.

    The first emitted sample lies one step after the flip instant.
    """
    if n_samples is None:
        if duration is None:
            raise InvalidParameter("give n_samples or duration", "duration")
        n_samples = int(math.ceil(duration / state.dt - 1e-9))
    return _emit(state, medium_flipped, n_samples)[0]


def linear_transfer_oracle(input: Waveform, medium: Medium) -> Waveform:
    """Transmitted field from the frequency-domain transfer function.

    The input is taken as piecewise linear between samples, the same convention
    the solver integrates. Aliased copies of the linear-interpolation kernel land
    where the medium is transparent, so the sampled output sees
    1 + (H - 1) sinc^2(nu dt / 2) rather than H.
    """
    if input.direction != "forward":
        raise InvalidParameter("oracle expects a forward-propagating input", "input.direction")
    if medium.coupling == 0:
        return input.with_samples(input.samples.copy())
    m = _PAD * input.n
    spec = np.fft.fft(input.samples, m)
    nu = 2 * np.pi * np.fft.fftfreq(m, input.dt)
    live = np.abs(spec) > 1e-14 * np.abs(spec).max()
    h = np.ones(m, complex)
    smap = medium.spectral_map
    if medium.orientation == 1:
        r = line_response(smap, nu[live], medium.gamma)
    else:
        r = np.conj(line_response(smap, -nu[live], medium.gamma))
    kernel = np.sinc(nu[live] * input.dt / (2 * np.pi)) ** 2
    h[live] = 1.0 + np.expm1(-medium.coupling * r) * kernel
    out = np.fft.ifft(spec * h)[: input.n]
    return input.with_samples(out)


def relative_rms(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.sqrt(np.sum(np.abs(a - b) ** 2) / np.sum(np.abs(b) ** 2)))


EFFICIENCY_KINDS = ("transverse_backward", "transverse_forward", "longitudinal")


def efficiency_formula(kind: str, depth: float) -> float:
    """Closed-form recall efficiency at optical depth ``depth``."""
    if kind not in EFFICIENCY_KINDS:
        raise InvalidParameter(f"unknown kind {kind!r}", "kind")
    if not depth >= 0:
        raise InvalidParameter("depth must be >= 0", "depth")
    if kind == "transverse_forward":
        return 0.0 if np.isinf(depth) else float(depth ** 2 * math.exp(-depth))
    return float((1.0 - math.exp(-depth)) ** 2)


def chirp_metric(w: Waveform, threshold: float = 1e-12, window: float = 0.8) -> float:
    """Least-squares slope of the instantaneous frequency over the central energy window."""
    p = np.abs(w.samples) ** 2
    total = p.sum() * w.dt
    if not total > threshold:
        raise UndefinedMetric(f"waveform energy {total:.3g} below threshold {threshold:.3g}")
    c = np.cumsum(p) / p.sum()
    lo = int(np.searchsorted(c, 0.5 * (1 - window)))
    hi = int(np.searchsorted(c, 0.5 * (1 + window)))
    s = w.samples[lo:hi + 1]
    if s.size < 3:
        raise UndefinedMetric("central energy window holds fewer than three samples")
    freq = np.angle(s[1:] * np.conj(s[:-1])) / w.dt
    t = w.times[lo:hi + 1]
    tm = 0.5 * (t[1:] + t[:-1])
    wt = np.abs(s[1:]) * np.abs(s[:-1])
    a = np.vstack([tm - tm.mean(), np.ones_like(tm)]).T
    sw = np.sqrt(wt)
    coef = np.linalg.lstsq(a * sw[:, None], freq * sw, rcond=None)[0]
    return float(coef[0])


def time_reversed(w: Waveform, mirror: float, times) -> np.ndarray:
    """Input envelope reflected about ``mirror`` and sampled at ``times``."""
    src = 2 * mirror - np.asarray(times)
    re = np.interp(src, w.times, w.samples.real, left=0.0, right=0.0)
    im = np.interp(src, w.times, w.samples.imag, left=0.0, right=0.0)
    return re + 1j * im


def overlap(a, b) -> float:
    na = np.sum(np.abs(a) ** 2)
    nb = np.sum(np.abs(b) ** 2)
    if na == 0 or nb == 0:
        return 0.0
    return float(min(1.0, abs(np.vdot(b, a)) ** 2 / (na * nb)))


@dataclass(frozen=True)
class CribScenario:
    """Everything run_crib needs; ``line`` is the line before hole burning."""

    line: LineShape
    broadening: BroadeningControl
    resonant_depth: float
    input: Waveform
    pit_width: Optional[float] = None
    spike_width: Optional[float] = None
    homogeneous_width: float = 0.0
    recall_direction: str = "backward"
    length: float = 1.0
    n_bins: int = 400
    cutoff: float = 5.0
    nz: int = 200
    t2: float = np.inf
    recall_margin: float = 0.25

    def __post_init__(self):
        if self.recall_direction not in DIRECTIONS:
            raise InvalidParameter(f"unknown direction {self.recall_direction!r}",
                                   "recall_direction")


def build_crib_medium(sc: CribScenario) -> Medium:
    line = sc.line
    if sc.spike_width is not None:
        line = prepare_spike(line, sc.pit_width, sc.spike_width, sc.homogeneous_width)
    return build_medium(line, sc.broadening, sc.resonant_depth, sc.length, sc.n_bins,
                        sc.cutoff, sc.nz, sc.t2)


def run_crib(sc: CribScenario, medium: Optional[Medium] = None) -> CribResult:
    """Hole burning, broadening, absorption, storage, optional mode matching, flip, recall."""
    if medium is None:
        medium = build_crib_medium(sc)
    inp = sc.input
    t_switch = sc.broadening.switch_time
    if t_switch < inp.t0 + inp.dt:
        raise InvalidParameter("switch_time must follow the start of the input",
                               "broadening.switch_time")
    n_keep = min(inp.n, int(math.floor((t_switch - inp.t0) / inp.dt + 1e-9)) + 1)
    absorbed = inp.with_samples(inp.samples[:n_keep])
    transmitted, state = absorb(absorbed, medium)
    state = wait(state, medium, t_switch - state.timestamp)
    if sc.recall_direction == "backward":
        state = mode_match(state, sc.broadening.transfer_efficiency)
    flipped = flip_detunings(medium)
    n_rec = int(math.ceil((1 + sc.recall_margin) * (t_switch - inp.t0) / inp.dt))
    _check_recurrence(medium, t_switch - inp.t0 + n_rec * inp.dt)
    recalled, after = _emit(state, flipped, n_rec)

    e_in = inp.energy()
    eff = recalled.energy() / e_in
    ref = time_reversed(inp, t_switch, recalled.times)
    fid = overlap(recalled.samples, ref)
    try:
        chirp = chirp_metric(recalled)
    except UndefinedMetric:
        chirp = float("nan")
    formula_kind = ("longitudinal" if medium.mode == "longitudinal"
                    else f"transverse_{sc.recall_direction}")
    diag = {
        "input_energy": e_in,
        "truncated_input_energy": float(np.sum(np.abs(inp.samples[n_keep:]) ** 2) * inp.dt),
        "transmitted_energy": transmitted.energy(),
        "recalled_energy": recalled.energy(),
        "residual_stored_energy": stored_energy(after, flipped),
        "efficiency_formula": efficiency_formula(formula_kind, sc.resonant_depth),
        "formula_kind": formula_kind,
        "kappa": medium.coupling,
        "n_bins": int(medium.grid.nodes.size),
        "nz": medium.nz,
        "dt": inp.dt,
        "grid_cutoff": medium.grid.cutoff,
        "captured_mass": medium.grid.captured_mass,
        "spike_envelope": state.envelope,
        "mirror_time": t_switch,
    }
    return CribResult(transmitted=transmitted, recalled=recalled, efficiency=float(eff),
                      overlap_fidelity=fid, chirp_metric=chirp,
                      storage_time=float(t_switch - state.t_ref), input=inp, diagnostics=diag)


def gaussian_pulse(t_center: float, fwhm: float, dt: float, t_end: float, t0: float = 0.0,
                   carrier: float = 0.0, amplitude: complex = 1.0) -> Waveform:
    """Gaussian intensity profile with the given intensity FWHM."""
    t = t0 + dt * np.arange(int(round((t_end - t0) / dt)) + 1)
    s = fwhm / (2 * math.sqrt(2 * math.log(2)))
    env = amplitude * np.exp(-0.25 * ((t - t_center) / s) ** 2)
    return Waveform(samples=env, dt=dt, t0=t0, carrier=carrier)
