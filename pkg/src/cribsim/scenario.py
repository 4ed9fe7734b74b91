"""Scenario files: YAML documents validated against a strict schema.

Frequencies are given in MHz (cyclic) and converted to rad/us; times are in
microseconds except for the repeater block, which uses km, km/s and seconds.
Unknown keys are rejected everywhere.
"""
from __future__ import annotations

import math
from pathlib import Path
from typing import Annotated, List, Literal, Optional, Tuple, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .echolab import Pulse, PulseSequence, TimeBinState
from .ensemble import BroadeningControl, build_line_shape, mhz
from .errors import InvalidParameter
from .mbsolver import CribScenario, Waveform, gaussian_pulse
from .repeater import C_FIBER, ChannelSpec, RepeaterConfig

KINDS = ("crib", "echo", "timebin", "fringe", "repeater", "sweep")
PACKAGED = Path(__file__).with_name("scenarios")

Pos = Annotated[float, Field(gt=0)]
NonNeg = Annotated[float, Field(ge=0)]
Prob = Annotated[float, Field(ge=0, le=1)]


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


def _even(n: float) -> int:
    return max(16, 2 * int(round(n / 2)))


class LineSpec(Strict):
    kind: Literal["gaussian", "lorentzian", "flat_top"] = "gaussian"
    center_mhz: float = 0.0
    width_mhz: Pos = 4.0

    def build(self):
        return build_line_shape(self.kind, mhz(self.center_mhz), mhz(self.width_mhz))


class BroadeningSpec(Strict):
    mode: Literal["transverse", "longitudinal"] = "transverse"
    magnitude_mhz: float = 1.0
    kernel: Literal["flat", "gaussian"] = "flat"
    transfer_efficiency: Prob = 1.0


class GaussianInput(Strict):
    shape: Literal["gaussian"] = "gaussian"
    center_us: float = 8.0
    fwhm_us: Pos = 2.0
    amplitude: float = 1.0
    carrier_mhz: float = 0.0


class SquareInput(Strict):
    shape: Literal["square"]
    start_us: NonNeg = 2.0
    duration_us: Pos = 6.0
    amplitude: float = 1.0
    carrier_mhz: float = 0.0


class TimeBinSpec(Strict):
    alpha: Prob = math.sqrt(0.5)
    beta: Prob = math.sqrt(0.5)
    phi: float = 0.0
    bin_separation_us: Pos = 4.0
    pulse_shape: Literal["gaussian", "square"] = "gaussian"
    shape_width_us: Pos = 1.0
    t_first_us: NonNeg = 3.0
    carrier_mhz: float = 0.0

    @model_validator(mode="after")
    def _normalized(self):
        if abs(self.alpha ** 2 + self.beta ** 2 - 1) > 1e-6:
            raise ValueError("alpha^2 + beta^2 must equal 1")
        return self

    def build(self, alpha=None, beta=None, phi=None) -> TimeBinState:
        a = self.alpha if alpha is None else alpha
        b = self.beta if beta is None else beta
        n = math.hypot(a, b)
        return TimeBinState(a / n, b / n, self.phi if phi is None else phi,
                            self.bin_separation_us, self.pulse_shape, self.shape_width_us,
                            mhz(self.carrier_mhz), self.t_first_us)


class TimeBinInput(TimeBinSpec):
    shape: Literal["timebin"]


InputSpec = Annotated[Union[GaussianInput, SquareInput, TimeBinInput], Field(discriminator="shape")]


class CribSpec(Strict):
    line: LineSpec = LineSpec()
    pit_width_mhz: Optional[Pos] = 0.4
    spike_width_mhz: Optional[Pos] = 5e-5
    homogeneous_width_mhz: NonNeg = 0.0
    broadening: BroadeningSpec = BroadeningSpec()
    resonant_depth: NonNeg = 2.0
    recall_direction: Literal["forward", "backward"] = "backward"
    length: Pos = 1.0
    switch_time_us: Pos = 18.0
    input: InputSpec = GaussianInput()
    dt_us: Pos = 0.05
    n_bins: int = Field(400, ge=16)
    nz: int = Field(200, ge=3)
    cutoff: float = Field(5.0, ge=3)
    t2_us: Optional[Pos] = None
    recall_margin: NonNeg = 0.25
    check_oracle: bool = False

    @model_validator(mode="after")
    def _spike_pair(self):
        if (self.pit_width_mhz is None) != (self.spike_width_mhz is None):
            raise ValueError("pit_width_mhz and spike_width_mhz must be given together")
        return self

    def waveform(self, scale: float = 1.0) -> Waveform:
        dt = self.dt_us / scale
        t_end = self.switch_time_us
        inp = self.input
        if isinstance(inp, GaussianInput):
            return gaussian_pulse(inp.center_us, inp.fwhm_us, dt, t_end,
                                  carrier=mhz(inp.carrier_mhz), amplitude=inp.amplitude)
        if isinstance(inp, SquareInput):
            t = dt * np.arange(int(round(t_end / dt)) + 1)
            on = (t >= inp.start_us - 1e-9) & (t < inp.start_us + inp.duration_us - 1e-9)
            return Waveform(samples=np.where(on, inp.amplitude, 0.0) + 0j, dt=dt,
                            carrier=mhz(inp.carrier_mhz))
        from .echolab import encode_timebin
        return encode_timebin(inp.build(), dt, t_end)

    def build(self, scale: float = 1.0, input: Optional[Waveform] = None) -> CribScenario:
        b = self.broadening
        ctrl = BroadeningControl(b.mode, mhz(b.magnitude_mhz), self.switch_time_us,
                                 b.transfer_efficiency, b.kernel)
        opt = (lambda v: None if v is None else mhz(v))
        return CribScenario(
            line=self.line.build(), broadening=ctrl, resonant_depth=self.resonant_depth,
            input=input if input is not None else self.waveform(scale),
            pit_width=opt(self.pit_width_mhz), spike_width=opt(self.spike_width_mhz),
            homogeneous_width=mhz(self.homogeneous_width_mhz),
            recall_direction=self.recall_direction, length=self.length,
            n_bins=_even(self.n_bins * scale), nz=int(round(self.nz * scale)),
            cutoff=self.cutoff, t2=self.t2_us if self.t2_us is not None else np.inf,
            recall_margin=self.recall_margin)


class PulseSpec(Strict):
    start_us: NonNeg
    duration_us: NonNeg = 0.0
    area: NonNeg
    phase: float = 0.0
    role: Literal["write", "data", "read"]

    def build(self) -> Pulse:
        return Pulse(self.start_us, self.duration_us, self.area, self.phase, self.role)


class EchoSpec(Strict):
    mode: Literal["two_pulse", "stimulated"] = "two_pulse"
    line: LineSpec = LineSpec(width_mhz=1.0)
    t2_us: Optional[Pos] = None
    tau_us: List[Pos] = [1.0]
    areas: Tuple[NonNeg, NonNeg] = (math.pi / 2, math.pi)
    pulses: List[PulseSpec] = []
    dt_us: Optional[Pos] = None
    t_end_us: Optional[Pos] = None
    window_us: Optional[Tuple[float, float]] = None
    n_bins: int = Field(400, ge=16)
    cutoff: float = Field(5.0, ge=3)

    @model_validator(mode="after")
    def _mode_fields(self):
        if self.mode == "stimulated":
            if not self.pulses:
                raise ValueError("stimulated mode needs a pulses list")
            if self.window_us is None:
                raise ValueError("stimulated mode needs window_us for the echo")
        return self

    def sequence(self) -> PulseSequence:
        return PulseSequence(tuple(p.build() for p in self.pulses))


class TimeBinRunSpec(Strict):
    crib: CribSpec = CribSpec(resonant_depth=6.0, switch_time_us=14.0, pit_width_mhz=0.8,
                              spike_width_mhz=1e-9, broadening=BroadeningSpec(magnitude_mhz=2.0))
    state: TimeBinSpec = TimeBinSpec()
    random_states: int = Field(0, ge=0)


class FringeSpec(Strict):
    mode: Literal["scan", "dual"] = "scan"
    state: TimeBinSpec = TimeBinSpec()
    target_visibility: Optional[Annotated[float, Field(gt=0, le=1)]] = None
    sigma_phase: NonNeg = 0.0
    n_phases: int = Field(24, ge=4)
    n_shots: int = Field(0, ge=0)
    read_areas: Tuple[NonNeg, NonNeg] = (0.1, 0.1)
    n_bins: int = Field(800, ge=16)
    depths: Tuple[NonNeg, NonNeg] = (1.0, 1.0)
    tau_us: List[Pos] = [1.0]
    t2_us: Pos = 10.0
    line: LineSpec = LineSpec(width_mhz=1.0)

    def noise(self) -> float:
        if self.target_visibility is not None:
            from .echolab import phase_noise_for_visibility
            return phase_noise_for_visibility(self.target_visibility)
        return self.sigma_phase


class ChannelBlock(Strict):
    attenuation_db_per_km: NonNeg = 0.2
    segment_length_km: Pos = 50.0
    total_length_km: Pos = 50.0
    c_km_per_s: Pos = C_FIBER


class RepeaterSpec(Strict):
    channel: ChannelBlock = ChannelBlock()
    modes: int = Field(1, ge=1)
    memory_efficiency: Prob = 1.0
    memory_lifetime_s: Optional[Pos] = None
    p_swap: Prob = 1.0
    segments: Optional[int] = Field(None, ge=1)
    p_pair: Prob = 1.0
    p_bsm_mid: Prob = 0.5
    trials: int = Field(100_000, ge=1)
    histogram_bins: int = Field(50, ge=1)

    def build(self) -> RepeaterConfig:
        c = self.channel
        if c.segment_length_km > c.total_length_km:
            raise InvalidParameter("segment_length_km exceeds total_length_km",
                                   "repeater.channel.segment_length_km")
        ch = ChannelSpec(c.attenuation_db_per_km, c.segment_length_km, c.total_length_km,
                         c.c_km_per_s)
        life = math.inf if self.memory_lifetime_s is None else self.memory_lifetime_s
        return RepeaterConfig(ch, self.modes, self.memory_efficiency, life, self.p_swap,
                              self.segments, self.p_pair, self.p_bsm_mid)


class SweepSpec(Strict):
    parameter: str
    values: List[float] = Field(min_length=1)
    base: "Scenario"


class Scenario(Strict):
    name: str = Field(pattern=r"^[A-Za-z0-9_.-]+$")
    kind: Literal["crib", "echo", "timebin", "fringe", "repeater", "sweep"]
    description: str = ""
    seed: int = 0
    grid_scale: Pos = 1.0
    crib: Optional[CribSpec] = None
    echo: Optional[EchoSpec] = None
    timebin: Optional[TimeBinRunSpec] = None
    fringe: Optional[FringeSpec] = None
    repeater: Optional[RepeaterSpec] = None
    sweep: Optional[SweepSpec] = None

    @model_validator(mode="after")
    def _block_present(self):
        if getattr(self, self.kind) is None:
            raise ValueError(f"kind {self.kind!r} needs a {self.kind!r} block")
        extra = [k for k in KINDS if k != self.kind and getattr(self, k) is not None]
        if extra:
            raise ValueError(f"blocks {extra} do not belong to kind {self.kind!r}")
        if self.kind == "sweep" and self.sweep.base.kind == "sweep":
            raise ValueError("sweeps cannot be nested")
        return self

    def block(self):
        return getattr(self, self.kind)


SweepSpec.model_rebuild()


def _format_error(err: ValidationError) -> InvalidParameter:
    first = err.errors()[0]
    path = ".".join(str(p) for p in first["loc"]) or "<root>"
    msg = first["msg"]
    if first["type"] == "extra_forbidden":
        msg = "unknown key"
    more = len(err.errors()) - 1
    if more:
        msg += f" (and {more} more problem{'s' if more > 1 else ''})"
    return InvalidParameter(msg, path)


def validate(data) -> Scenario:
    if not isinstance(data, dict):
        raise InvalidParameter("scenario must be a mapping", "<root>")
    try:
        return Scenario.model_validate(data)
    except ValidationError as e:
        raise _format_error(e) from None


def resolve_path(name_or_path) -> Path:
    """A file path, or the stem of a packaged scenario."""
    p = Path(name_or_path)
    if p.exists():
        return p
    packaged = PACKAGED / f"{p.stem}.yaml"
    if p.parent == Path(".") and packaged.exists():
        return packaged
    raise InvalidParameter(f"no such scenario file: {name_or_path}", "--scenario")


def load(name_or_path):
    """(Scenario, raw text) from a YAML file or packaged scenario name."""
    path = resolve_path(name_or_path)
    text = path.read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise InvalidParameter(f"not valid YAML: {e}", str(path)) from None
    return validate(data), text


def packaged_scenarios():
    return sorted(p.stem for p in PACKAGED.glob("*.yaml"))


def with_value(sc: Scenario, path: str, value) -> Scenario:
    """Copy of ``sc`` with the dotted ``path`` set to ``value``, revalidated."""
    data = sc.model_dump(mode="python")
    keys = path.split(".")
    node = data
    for k in keys[:-1]:
        if not isinstance(node, dict) or k not in node or node[k] is None:
            raise InvalidParameter("unknown parameter path", f"sweep.parameter={path}")
        node = node[k]
    leaf = keys[-1]
    if not isinstance(node, dict) or leaf not in node:
        raise InvalidParameter("unknown parameter path", f"sweep.parameter={path}")
    old = node[leaf]
    if isinstance(old, list) and all(isinstance(x, (int, float)) for x in old):
        node[leaf] = [value]
    elif isinstance(old, bool) or not isinstance(old, (int, float)) and old is not None:
        raise InvalidParameter("sweep axis must be a numeric parameter", f"sweep.parameter={path}")
    else:
        node[leaf] = int(value) if isinstance(old, int) and float(value).is_integer() else value
    return validate(data)
