"""Thin-sample photon echoes, time-bin qubits and interference analytics.

Atoms are Bloch vectors (u, v, w) with ground state w = -1. Free evolution
rotates u + iv by exp(i delta t) and shrinks it by exp(-t/T2); a pulse of
Rabi frequency Omega and phase phi rotates about (Omega cos phi, Omega sin phi,
delta). The emitted field is proportional to P = sum_j p_j (u_j - i v_j).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .ensemble import LineShape, discretize
from .errors import AnalysisFailure, InvalidParameter
from .mbsolver import Waveform

ROLES = ("write", "data", "read")
SHAPES = ("gaussian", "square")
BIN_OVERLAP_LIMIT = 1e-3
NOISE_FREE = math.inf


@dataclass
class BlochVector:
    u: float
    v: float
    w: float
    detuning: float = 0.0

    @property
    def norm(self) -> float:
        return math.sqrt(self.u ** 2 + self.v ** 2 + self.w ** 2)


@dataclass(frozen=True)
class Pulse:
    start: float
    duration: float
    area: float
    phase: float = 0.0
    role: str = "data"

    @property
    def end(self):
        return self.start + self.duration


@dataclass(frozen=True)
class PulseSequence:
    pulses: tuple

    def __post_init__(self):
        ps = tuple(sorted(self.pulses, key=lambda p: p.start))
        for p in ps:
            if p.area < 0:
                raise InvalidParameter("pulse areas must be >= 0", "pulses.area")
            if p.duration < 0:
                raise InvalidParameter("pulse durations must be >= 0", "pulses.duration")
            if p.role not in ROLES:
                raise InvalidParameter(f"unknown role {p.role!r}", "pulses.role")
        for a, b in zip(ps, ps[1:]):
            if b.start < a.end or (b.start == a.start):
                raise InvalidParameter(
                    f"pulses at {a.start} and {b.start} overlap in time", "pulses")
        object.__setattr__(self, "pulses", ps)

    @classmethod
    def of(cls, *pulses):
        return cls(tuple(pulses))

    def roles(self):
        return [p.role for p in self.pulses]


@dataclass(frozen=True)
class EchoTrace:
    times: np.ndarray
    polarization: np.ndarray

    @property
    def intensity(self):
        return np.abs(self.polarization) ** 2

    def peak_time(self, t_lo: float = -np.inf, t_hi: float = np.inf) -> float:
        sel = (self.times >= t_lo) & (self.times <= t_hi)
        if not np.any(sel):
            raise AnalysisFailure("empty window for peak search")
        idx = np.flatnonzero(sel)
        return float(self.times[idx[np.argmax(self.intensity[idx])]])

    def window(self, t_lo, t_hi):
        sel = (self.times >= t_lo) & (self.times <= t_hi)
        return self.times[sel], self.polarization[sel]

    def as_waveform(self) -> Waveform:
        dt = float(self.times[1] - self.times[0])
        return Waveform(samples=self.polarization, dt=dt, t0=float(self.times[0]))


def _ensemble(line: LineShape, n_bins: int, cutoff: float):
    grid = discretize(line, n_bins, cutoff)
    p = grid.weights * line.pdf(grid.nodes)
    return grid.nodes, p / p.sum()


def _rotate(u, v, w, ox, oy, oz, t):
    """Rodrigues rotation of (u, v, w) about omega = (ox, oy, oz) by |omega| t."""
    mag = np.sqrt(ox * ox + oy * oy + oz * oz)
    safe = np.where(mag > 0, mag, 1.0)
    nx, ny, nz = ox / safe, oy / safe, oz / safe
    th = mag * t
    c, s = np.cos(th), np.sin(th)
    dot = nx * u + ny * v + nz * w
    cu = ny * w - nz * v
    cv = nz * u - nx * w
    cw = nx * v - ny * u
    k = dot * (1 - c)
    return u * c + cu * s + nx * k, v * c + cv * s + ny * k, w * c + cw * s + nz * k


def simulate_polarization(seq: PulseSequence, line: LineShape, t2: float, times,
                          n_bins: int = 400, cutoff: float = 5.0) -> EchoTrace:
    """Thin-sample response P(t) of an ensemble initially in the ground state."""
    times = np.asarray(times, dtype=float)
    det, pop = _ensemble(line, n_bins, cutoff)
    t_rev = 2 * np.pi / (det[1] - det[0])
    t_first = min([p.start for p in seq.pulses] + [float(times[0])])
    if times[-1] - t_first >= t_rev:
        raise InvalidParameter(
            f"trace window {times[-1] - t_first:.4g} us reaches the detuning-grid recurrence "
            f"time {t_rev:.4g} us; increase n_bins", "n_bins")
    decay = 0.0 if np.isinf(t2) else 1.0 / t2
    u = np.zeros_like(det)
    v = np.zeros_like(det)
    w = -np.ones_like(det)
    hard = [p for p in seq.pulses if p.duration == 0]
    soft = [p for p in seq.pulses if p.duration > 0]
    marks = np.unique(np.concatenate([times, [p.start for p in seq.pulses],
                                      [p.end for p in soft]]))
    sample_at = {t: i for i, t in enumerate(times)}
    out = np.zeros(times.size, complex)
    t_now = min(0.0, marks[0])

    def advance(u, v, w, t_from, t_to):
        if t_to <= t_from:
            return u, v, w
        mid = 0.5 * (t_from + t_to)
        active = [p for p in soft if p.start <= mid < p.end]
        dt = t_to - t_from
        if active:
            p = active[0]
            # rotation vector over the sub-step; finite even for very short pulses
            th = p.area * (dt / p.duration)
            u, v, w = _rotate(u, v, w, th * math.cos(p.phase), th * math.sin(p.phase), det * dt,
                              1.0)
        else:
            rho = (u + 1j * v) * np.exp(1j * det * dt)
            u, v = rho.real, rho.imag
        f = math.exp(-decay * dt)
        return u * f, v * f, w

    for t in marks:
        u, v, w = advance(u, v, w, t_now, t)
        t_now = t
        for p in hard:
            if p.start == t:
                u, v, w = _rotate(u, v, w, math.cos(p.phase), math.sin(p.phase), 0.0 * det, p.area)
        i = sample_at.get(t)
        if i is not None:
            out[i] = np.sum(pop * (u - 1j * v))
    return EchoTrace(times=times, polarization=out)


def final_bloch_vectors(seq: PulseSequence, line: LineShape, t2: float, t_end: float,
                        n_bins: int = 400, cutoff: float = 5.0):
    """Bloch vectors of every detuning class at ``t_end`` (for norm checks)."""
    det, _ = _ensemble(line, n_bins, cutoff)
    u = np.zeros_like(det)
    v = np.zeros_like(det)
    w = -np.ones_like(det)
    decay = 0.0 if np.isinf(t2) else 1.0 / t2
    t_now = 0.0
    for p in seq.pulses:
        dt = p.start - t_now
        rho = (u + 1j * v) * np.exp(1j * det * dt) * math.exp(-decay * dt)
        u, v = rho.real, rho.imag
        if p.duration == 0:
            u, v, w = _rotate(u, v, w, math.cos(p.phase), math.sin(p.phase), 0.0 * det, p.area)
        else:
            u, v, w = _rotate(u, v, w, p.area * math.cos(p.phase), p.area * math.sin(p.phase),
                              det * p.duration, 1.0)
            f = math.exp(-decay * p.duration)
            u, v = u * f, v * f
        t_now = p.end
    dt = t_end - t_now
    rho = (u + 1j * v) * np.exp(1j * det * dt) * math.exp(-decay * dt)
    return [BlochVector(float(a), float(b), float(c), float(d))
            for a, b, c, d in zip(rho.real, rho.imag, w, det)]


def two_pulse_echo(tau: float, areas=(np.pi / 2, np.pi), line: Optional[LineShape] = None,
                   t2: float = np.inf, dt: Optional[float] = None, times=None,
                   n_bins: int = 400, cutoff: float = 5.0) -> EchoTrace:
    """Hard pulses at 0 and tau; the echo appears at 2 tau."""
    if not tau > 0:
        raise InvalidParameter(f"tau must be positive, got {tau}", "tau")
    if line is None:
        raise InvalidParameter("a line shape is required", "line")
    if times is None:
        dt = tau / 200 if dt is None else dt
        times = dt * np.arange(int(round(3 * tau / dt)) + 1)
    seq = PulseSequence.of(Pulse(0.0, 0.0, areas[0], 0.0, "write"),
                           Pulse(tau, 0.0, areas[1], 0.0, "read"))
    return simulate_polarization(seq, line, t2, times, n_bins, cutoff)


def stimulated_echo(seq: PulseSequence, line: LineShape, t2: float = np.inf,
                    dt: float = 0.01, t_end: Optional[float] = None, times=None,
                    n_bins: int = 400, cutoff: float = 5.0) -> EchoTrace:
    roles = seq.roles()
    if len(seq.pulses) < 3 or not all(r in roles for r in ROLES):
        raise InvalidParameter("a stimulated echo needs write, data and read pulses", "pulses")
    if times is None:
        last = seq.pulses[-1]
        first_read = next(p for p in seq.pulses if p.role == "read")
        data = [p for p in seq.pulses if p.role == "data"]
        t_end = t_end if t_end is not None else (
            last.end + (max(p.end for p in data) - seq.pulses[0].start) + 0.2 * first_read.start)
        times = dt * np.arange(int(round(t_end / dt)) + 1)
    return simulate_polarization(seq, line, t2, times, n_bins, cutoff)


def spectral_echo_oracle(e_write: Waveform, e_data: Waveform, e_read: Waveform) -> Waveform:
    """Echo field from the product of spectra conj(W) D R, normalized to unit peak."""
    ws = (e_write, e_data, e_read)
    n = e_write.n
    if any(w.n != n for w in ws) or any(not math.isclose(w.dt, e_write.dt, rel_tol=1e-12)
                                        for w in ws):
        raise InvalidParameter("write, data and read must share one time grid", "waveforms")
    m = 3 * n
    f = [np.fft.fft(w.samples, m) for w in ws]
    echo = np.roll(np.fft.ifft(np.conj(f[0]) * f[1] * f[2]), n - 1)[: m - 2]
    peak = np.abs(echo).max()
    if peak > 0:
        echo = echo / peak
    t0 = e_data.t0 + e_read.t0 - e_write.t0 - (n - 1) * e_write.dt
    return Waveform(samples=echo, dt=e_write.dt, t0=t0)


def pulse_waveform(pulses, dt: float, t_end: float) -> Waveform:
    """Weak-field envelope of one or more pulses; hard pulses become single samples."""
    t = dt * np.arange(int(round(t_end / dt)) + 1)
    e = np.zeros(t.size, complex)
    for p in pulses:
        if p.duration == 0:
            e[int(round(p.start / dt))] += p.area / dt * np.exp(1j * p.phase)
        else:
            sel = (t >= p.start - 1e-9 * dt) & (t < p.end - 1e-9 * dt)
            e[sel] += p.area / p.duration * np.exp(1j * p.phase)
    return Waveform(samples=e, dt=dt)


def echo_copy_fidelity(seq: PulseSequence, line: LineShape, window, dt: float = 0.005,
                       t_end: Optional[float] = None, t2: float = np.inf,
                       n_bins: int = 800, cutoff: float = 3.0):
    """Simulated stimulated echo against the spectral-product oracle.

    Returns (trace, oracle, xcorr) where xcorr compares echo envelopes inside
    ``window``.
    """
    trace = stimulated_echo(seq, line, t2=t2, dt=dt, t_end=t_end, n_bins=n_bins, cutoff=cutoff)
    t_end = float(trace.times[-1])
    by_role = {r: [p for p in seq.pulses if p.role == r] for r in ROLES}
    wf = [pulse_waveform(by_role[r], dt, t_end) for r in ROLES]
    orc = spectral_echo_oracle(*wf)
    lo, hi = window
    sel = (trace.times >= lo) & (trace.times <= hi)
    so = (orc.times >= lo - 1e-9) & (orc.times <= hi + 1e-9)
    xc = normalized_xcorr(np.abs(trace.polarization[sel]), np.abs(orc.samples[so]))
    return trace, orc, xc


def normalized_xcorr(a, b) -> float:
    """Peak of |cross-correlation| between two sampled signals, normalized to [0, 1]."""
    a, b = np.asarray(a, complex), np.asarray(b, complex)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    m = a.size + b.size
    c = np.fft.ifft(np.fft.fft(a, m) * np.conj(np.fft.fft(b, m)))
    return float(np.abs(c).max() / (na * nb))


@dataclass(frozen=True)
class TimeBinState:
    """alpha |early> + beta exp(i phi) |late>, carried by a pulse shape S."""

    alpha: float
    beta: float
    phi: float = 0.0
    bin_separation: float = 4.0
    shape: str = "gaussian"
    shape_width: float = 1.0
    carrier: float = 0.0
    t_first: float = 3.0

    def __post_init__(self):
        if abs(self.alpha ** 2 + self.beta ** 2 - 1.0) > 1e-9:
            raise InvalidParameter("alpha^2 + beta^2 must equal 1", "alpha")
        if self.alpha < 0 or self.beta < 0:
            raise InvalidParameter("alpha and beta are non-negative; use phi", "alpha")
        if self.shape not in SHAPES:
            raise InvalidParameter(f"unknown shape {self.shape!r}", "shape")
        if not self.shape_width > 0 or not self.bin_separation > 0:
            raise InvalidParameter("widths and separations must be positive", "shape_width")

    @property
    def vector(self):
        return np.array([self.alpha, self.beta * np.exp(1j * self.phi)])

    def template(self, t):
        """Unit-energy basic wavepacket S(t) centered at t = 0."""
        t = np.asarray(t, dtype=float)
        if self.shape == "gaussian":
            s = self.shape_width / (2 * math.sqrt(2 * math.log(2)))
            return np.exp(-0.25 * (t / s) ** 2) / (2 * math.pi * s * s) ** 0.25
        h = 0.5 * self.shape_width
        return np.where(np.abs(t) <= h, 1.0 / math.sqrt(self.shape_width), 0.0)

    def bin_overlap(self) -> float:
        if self.shape == "square":
            return max(0.0, 1.0 - self.bin_separation / self.shape_width)
        s = self.shape_width / (2 * math.sqrt(2 * math.log(2)))
        return math.exp(-self.bin_separation ** 2 / (8 * s * s))

    def rotated(self, alpha, beta, phi):
        return TimeBinState(alpha, beta, phi, self.bin_separation, self.shape,
                            self.shape_width, self.carrier, self.t_first)


def random_timebin(rng: np.random.Generator, **kw) -> TimeBinState:
    """Haar-random qubit in the (alpha, beta, phi) parametrization."""
    theta = math.acos(1 - 2 * rng.random())
    return TimeBinState(alpha=math.cos(theta / 2), beta=math.sin(theta / 2),
                        phi=float(rng.uniform(0, 2 * math.pi)), **kw)


def encode_timebin(q: TimeBinState, dt: float, t_end: Optional[float] = None,
                   t0: float = 0.0) -> Waveform:
    if q.bin_overlap() > BIN_OVERLAP_LIMIT:
        raise InvalidParameter(
            f"bins overlap ({q.bin_overlap():.3g}); increase bin_separation", "bin_separation")
    if t_end is None:
        t_end = q.t_first + q.bin_separation + 3 * q.shape_width
    t = t0 + dt * np.arange(int(round((t_end - t0) / dt)) + 1)
    s = (q.alpha * q.template(t - q.t_first)
         + q.beta * np.exp(1j * q.phi) * q.template(t - q.t_first - q.bin_separation))
    return Waveform(samples=s, dt=dt, t0=t0, carrier=q.carrier)


@dataclass(frozen=True)
class TimeBinAnalysis:
    raw_alpha: float
    raw_beta: float
    raw_phi: float
    swapped_phi: float
    alpha: float
    beta: float
    phi: float
    fidelity: float
    bin_times: tuple

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _wrap(x):
    return float((x + np.pi) % (2 * np.pi) - np.pi)


def analyze_timebin(recalled: Waveform, reference: TimeBinState, storage_time: float,
                    mirror_time: Optional[float] = None, swapped: bool = True) -> TimeBinAnalysis:
    """Matched-filter the two bins, undo the order exchange and storage phase.

    ``raw_*`` describe the output as it arrives (early bin first, carrier phase
    included); ``swapped_phi`` is the relative phase after restoring the bin
    order but before removing omega0 * storage_time.
    """
    if reference.bin_overlap() > BIN_OVERLAP_LIMIT:
        raise AnalysisFailure("bins are not resolvable with this template")
    t = recalled.times
    T = reference.bin_separation

    def amp(tb):
        return np.sum(recalled.samples * reference.template(t - tb)) * recalled.dt

    if mirror_time is not None and swapped:
        t_early = 2 * mirror_time - (reference.t_first + T)
    elif mirror_time is not None:
        t_early = reference.t_first + mirror_time
    else:
        # slide a two-bin matched filter and keep the best pair of bin positions
        taps = reference.template((np.arange(-(t.size - 1), t.size) * recalled.dt))
        mf = np.convolve(recalled.samples, taps[::-1], mode="same") * recalled.dt
        k = int(round(T / recalled.dt))
        score = np.abs(mf[:-k]) ** 2 + np.abs(mf[k:]) ** 2
        t_early = float(t[np.argmax(score)])
    a_e, a_l = amp(t_early), amp(t_early + T)
    norm = math.sqrt(abs(a_e) ** 2 + abs(a_l) ** 2)
    if not norm > 0:
        raise AnalysisFailure("no energy in the expected time bins")
    cp = recalled.carrier_phase
    raw_phi = _wrap(np.angle(a_l) - np.angle(a_e) + cp) if abs(a_e) * abs(a_l) > 0 else 0.0
    c0, c1 = (a_l, a_e) if swapped else (a_e, a_l)
    c1 = c1 * np.exp(1j * cp)
    sw_phi = _wrap(np.angle(c1) - np.angle(c0)) if abs(c0) * abs(c1) > 0 else 0.0
    c1 = c1 * np.exp(-1j * reference.carrier * storage_time)
    out = np.array([c0, c1]) / norm
    fid = float(abs(np.vdot(reference.vector, out)) ** 2)
    phi = _wrap(np.angle(out[1]) - np.angle(out[0])) if abs(out[0]) * abs(out[1]) > 0 else 0.0
    return TimeBinAnalysis(raw_alpha=abs(a_e) / norm, raw_beta=abs(a_l) / norm, raw_phi=raw_phi,
                           swapped_phi=sw_phi, alpha=float(abs(out[0])), beta=float(abs(out[1])),
                           phi=phi, fidelity=min(1.0, fid),
                           bin_times=(float(t_early), float(t_early + T)))


@dataclass(frozen=True)
class FringeScan:
    phases: np.ndarray
    intensities: np.ndarray
    visibility: float
    fidelity: float
    fit: tuple = ()
    residual_rms: float = 0.0
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "phases": [float(x) for x in self.phases],
            "intensities": [float(x) for x in self.intensities],
            "visibility": self.visibility,
            "fidelity": self.fidelity,
            "fit": {"offset": self.fit[0], "cos": self.fit[1], "sin": self.fit[2]},
            "residual_rms": self.residual_rms,
            **self.extra,
        }


def fit_visibility(phases, intensities):
    """Least-squares fit I = a + b cos x + c sin x; V = sqrt(b^2 + c^2) / a."""
    x = np.asarray(phases, float)
    y = np.asarray(intensities, float)
    a = np.vstack([np.ones_like(x), np.cos(x), np.sin(x)]).T
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    resid = y - a @ coef
    if not coef[0] > 0 or not np.all(np.isfinite(coef)):
        raise AnalysisFailure("fringe fit has a non-positive offset", residuals=resid)
    v = float(min(1.0, math.hypot(coef[1], coef[2]) / coef[0]))
    return v, tuple(float(c) for c in coef), float(np.sqrt(np.mean(resid ** 2)))


def _scan(harmonics, gram_dt, phases, sigma, n_shots, seed):
    """Mean intensity of sum_m c_m exp(i m x) under Gaussian phase noise on x."""
    ms = np.asarray(harmonics)
    g = gram_dt  # g[m, m'] = sum_t c_m conj(c_m') dt
    dm = ms[:, None] - ms[None, :]
    if n_shots == 0:
        damp = np.exp(-0.5 * (dm * sigma) ** 2)
        vals = [np.real(np.sum(g * damp * np.exp(1j * dm * x))) for x in phases]
        return np.array(vals)
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma, n_shots) if sigma > 0 else np.zeros(n_shots)
    out = np.empty(len(phases))
    for i, x in enumerate(phases):
        e = np.exp(1j * dm[None] * (x + noise)[:, None, None])
        out[i] = np.mean(np.real(np.sum(g[None] * e, axis=(1, 2))))
    return out


def phase_noise_for_visibility(v_target: float, v_clean: float = 1.0) -> float:
    """Gaussian phase-noise width that reduces a clean fringe to ``v_target``."""
    if not 0 < v_target <= v_clean:
        raise InvalidParameter("target visibility must lie in (0, clean visibility]", "visibility")
    return math.sqrt(-2.0 * math.log(v_target / v_clean))


def fringe_scan(stored: TimeBinState, read_areas=(0.1, 0.1),
                read_phases=(0.0, 0.0), scanned: int = 1, sigma_phase: float = 0.0,
                n_phases: int = 24, n_shots: int = 0, seed: int = 0,
                line: Optional[LineShape] = None, data_area: float = 0.05,
                write_time: float = 0.0, data_time: Optional[float] = None,
                read_time: Optional[float] = None, t2: float = np.inf,
                dt: Optional[float] = None, n_bins: int = 800, cutoff: float = 4.0) -> FringeScan:
    """Stimulated-echo storage of a time-bin qubit read by two pulses one bin apart.

    The central output slot holds the early bin recalled by the second read and
    the late bin recalled by the first; its energy is scanned against the phase
    of read pulse ``scanned``. Harmonics of the scanned phase are extracted from
    eight Bloch simulations, so the scan itself is exact and cheap.

    Reads default to weak areas: a strong second read rotates the coherence that
    is still rephasing toward the central slot and opens multi-pulse paths, both
    of which unbalance the two contributions.
    """
    if scanned not in (0, 1):
        raise InvalidParameter("scanned must be 0 or 1", "scanned")
    if sigma_phase < 0:
        raise InvalidParameter("sigma_phase must be >= 0", "sigma_phase")
    T = stored.bin_separation
    d = stored.shape_width
    line = line if line is not None else LineShape("gaussian", 0.0, 20.0 / d)
    dt = dt if dt is not None else d / 40
    t_d = data_time if data_time is not None else write_time + 2 * d
    t_r = read_time if read_time is not None else t_d + 3 * T + 4 * d
    centre = t_r + T + (t_d - write_time)
    times = centre + dt * np.arange(-int(round(1.5 * d / dt)), int(round(2.5 * d / dt)) + 1)
    k = 8
    trial = 2 * np.pi * np.arange(k) / k
    traces = []
    for x in trial:
        ph = list(read_phases)
        ph[scanned] = ph[scanned] + x
        seq = PulseSequence.of(
            Pulse(write_time, 0.0, np.pi / 2, 0.0, "write"),
            Pulse(t_d, d, data_area * stored.alpha, 0.0, "data"),
            Pulse(t_d + T, d, data_area * stored.beta, stored.phi, "data"),
            Pulse(t_r, 0.0, read_areas[0], ph[0], "read"),
            Pulse(t_r + T, 0.0, read_areas[1], ph[1], "read"),
        )
        seq = PulseSequence(tuple(p for p in seq.pulses if p.area > 0 or p.role != "data"))
        traces.append(simulate_polarization(seq, line, t2, times, n_bins, cutoff).polarization)
    traces = np.array(traces)
    ms = np.arange(-3, 4)
    coeff = np.array([np.mean(traces * np.exp(-1j * m * trial)[:, None], axis=0) for m in ms])
    gram = (coeff @ coeff.conj().T) * dt
    phases = 2 * np.pi * np.arange(n_phases) / n_phases
    inten = _scan(ms, gram, phases, sigma_phase, n_shots, seed)
    v, fit, rms = fit_visibility(phases, inten)
    return FringeScan(phases=phases, intensities=inten, visibility=v, fidelity=(1 + v) / 2,
                      fit=fit, residual_rms=rms,
                      extra={"central_slot_time": float(centre), "sigma_phase": sigma_phase})


def arm_amplitude(depth: float) -> float:
    """Echo field amplitude of an optically thick arm, relative to unit input."""
    return depth * math.exp(-depth / 2)


def dual_memory_fringe(depths=(1.0, 1.0), tau: float = 1.0, t2: float = 10.0,
                       sigma_phase: float = 0.0, n_phases: int = 24, n_shots: int = 0,
                       seed: int = 0, line: Optional[LineShape] = None,
                       n_bins: int = 400, cutoff: float = 5.0) -> FringeScan:
    """Two ensembles fed from one split input; their echoes meet at a coupler."""
    if not tau > 0:
        raise InvalidParameter("tau must be positive", "tau")
    if sigma_phase < 0:
        raise InvalidParameter("sigma_phase must be >= 0", "sigma_phase")
    line = line if line is not None else LineShape("gaussian", 0.0, 2 * np.pi)
    width = 6.0 / line.width
    dt = width / 60
    times = 2 * tau + dt * np.arange(-60, 61)
    p = two_pulse_echo(tau, line=line, t2=t2, times=times, n_bins=n_bins,
                       cutoff=cutoff).polarization
    arms = [arm_amplitude(dp) * p for dp in depths]
    # output port field (E1 + exp(i theta) E2) / 2 as harmonics m = 0, 1 of theta
    coeff = np.array([arms[0] / 2, arms[1] / 2])
    gram = (coeff @ coeff.conj().T) * dt
    phases = 2 * np.pi * np.arange(n_phases) / n_phases
    inten = _scan([0, 1], gram, phases, sigma_phase, n_shots, seed)
    v, fit, rms = fit_visibility(phases, inten)
    e1 = float(np.sum(np.abs(arms[0]) ** 2) * dt)
    e2 = float(np.sum(np.abs(arms[1]) ** 2) * dt)
    return FringeScan(phases=phases, intensities=inten, visibility=v, fidelity=(1 + v) / 2,
                      fit=fit, residual_rms=rms,
                      extra={"echo_energy": e1, "echo_energy_arm2": e2, "tau": tau,
                             "sigma_phase": sigma_phase})


def two_beam_visibility(eff1: float, eff2: float) -> float:
    return 2 * math.sqrt(eff1 * eff2) / (eff1 + eff2)


def collective_snr(n: float, tau: float, t2: float) -> float:
    """N_coh^2 / N_inc with N_coh = N exp(-2 tau / T2); infinite (noise-free) at tau = 0."""
    if n < 1:
        raise InvalidParameter("N must be >= 1", "N")
    if not t2 > 0:
        raise InvalidParameter("T2 must be positive", "T2")
    if tau < 0:
        raise InvalidParameter("tau must be >= 0", "tau")
    n_coh = n * math.exp(-2 * tau / t2)
    n_inc = n - n_coh
    if n_inc <= 0:
        return NOISE_FREE
    return n_coh ** 2 / n_inc
