"""Executes validated scenarios and writes their artifacts into a directory."""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from . import echolab, repeater
from .errors import InvalidParameter
from .io import write_csv, write_json
from .mbsolver import (absorb, build_crib_medium, linear_transfer_oracle, relative_rms,
                       run_crib)
from .scenario import Scenario, with_value


def _trace_csv(path, times, values):
    write_csv(path, ["t", "re", "im", "abs2"],
              ([t, v.real, v.imag, abs(v) ** 2] for t, v in zip(times, values)))


def run_crib_kind(sc: Scenario, out: Path, scale: float) -> dict:
    spec = sc.crib
    cs = spec.build(scale)
    medium = build_crib_medium(cs)
    res = run_crib(cs, medium)
    summary = res.to_dict()
    row = {"efficiency_sim": res.efficiency,
           "efficiency_formula": res.diagnostics["efficiency_formula"],
           "abs_diff": abs(res.efficiency - res.diagnostics["efficiency_formula"]),
           "overlap_fidelity": res.overlap_fidelity, "chirp_metric": res.chirp_metric}
    if spec.check_oracle:
        tr, _ = absorb(cs.input, medium)
        row["oracle_rms"] = relative_rms(tr.samples, linear_transfer_oracle(cs.input, medium).samples)
        summary["oracle_rms"] = row["oracle_rms"]
    res.input.to_csv(out / "input.csv")
    res.transmitted.to_csv(out / "transmitted.csv")
    res.recalled.to_csv(out / "recalled.csv")
    return {"summary": summary, "row": row}


def run_echo_kind(sc: Scenario, out: Path, scale: float) -> dict:
    spec = sc.echo
    line = spec.line.build()
    t2 = spec.t2_us if spec.t2_us is not None else np.inf
    n_bins = max(16, 2 * int(round(spec.n_bins * scale / 2)))
    if spec.mode == "stimulated":
        dt = (spec.dt_us or 0.005) / scale
        trace, orc, xc = echolab.echo_copy_fidelity(
            spec.sequence(), line, spec.window_us, dt=dt, t_end=spec.t_end_us, t2=t2,
            n_bins=n_bins, cutoff=spec.cutoff)
        _trace_csv(out / "trace.csv", trace.times, trace.polarization)
        orc.to_csv(out / "oracle.csv")
        lo, hi = spec.window_us
        row = {"xcorr": xc, "echo_peak_time": trace.peak_time(lo, hi)}
        return {"summary": dict(row, window=list(spec.window_us)), "row": row}
    points = []
    for tau in spec.tau_us:
        dt = (spec.dt_us or tau / 200) / scale
        tr = echolab.two_pulse_echo(tau, spec.areas, line, t2, dt=dt, n_bins=n_bins,
                                    cutoff=spec.cutoff)
        late = tr.times >= 1.5 * tau
        peak = tr.peak_time(1.5 * tau, 3 * tau)
        points.append({"tau": tau, "peak_time": peak, "expected_peak": 2 * tau,
                       "peak_offset_samples": (peak - 2 * tau) / dt,
                       "echo_peak_intensity": float(tr.intensity[late].max())})
        _trace_csv(out / f"trace_tau_{tau:.6g}.csv", tr.times, tr.polarization)
    write_csv(out / "echo_peaks.csv", list(points[0]), ([p[k] for k in points[0]] for p in points))
    return {"summary": {"points": points}, "row": {k: v for k, v in points[0].items() if k != "tau"}}


def timebin_states(spec, seed: int):
    base = spec.state.build()
    if not spec.random_states:
        return [base]
    rng = np.random.default_rng(seed)
    return [echolab.random_timebin(rng, bin_separation=base.bin_separation, shape=base.shape,
                                   shape_width=base.shape_width, carrier=base.carrier,
                                   t_first=base.t_first)
            for _ in range(spec.random_states)]


def timebin_roundtrip(spec, states, scale: float = 1.0):
    """Store each state by backward CRIB and analyze the recalled bins."""
    dt = spec.crib.dt_us / scale
    t_switch = spec.crib.switch_time_us
    medium = None
    rows = []
    for q in states:
        cs = spec.crib.build(scale, input=echolab.encode_timebin(q, dt, t_switch))
        medium = medium or build_crib_medium(cs)
        res = run_crib(cs, medium)
        a = echolab.analyze_timebin(res.recalled, q, res.storage_time, mirror_time=t_switch)
        phase_err = echolab._wrap(a.swapped_phi - q.phi - q.carrier * res.storage_time)
        rows.append({"alpha_in": q.alpha, "beta_in": q.beta, "phi_in": q.phi,
                     "raw_alpha": a.raw_alpha, "raw_beta": a.raw_beta, "raw_phi": a.raw_phi,
                     "swapped_phi": a.swapped_phi, "storage_time": res.storage_time,
                     "carrier_phase_error": phase_err, "alpha_out": a.alpha, "beta_out": a.beta,
                     "phi_out": a.phi, "fidelity": a.fidelity, "efficiency": res.efficiency})
    fid = [r["fidelity"] for r in rows]
    stats = {"min_fidelity": min(fid), "mean_fidelity": float(np.mean(fid)),
             "max_carrier_phase_error": max(abs(r["carrier_phase_error"]) for r in rows),
             "max_swap_error": max(max(abs(r["raw_alpha"] - r["beta_in"]),
                                       abs(r["raw_beta"] - r["alpha_in"])) for r in rows)}
    return rows, stats


def run_timebin_kind(sc: Scenario, out: Path, scale: float) -> dict:
    rows, row = timebin_roundtrip(sc.timebin, timebin_states(sc.timebin, sc.seed), scale)
    write_csv(out / "states.csv", list(rows[0]), ([r[k] for k in rows[0]] for r in rows))
    return {"summary": dict(row, states=rows), "row": row}


def run_fringe_kind(sc: Scenario, out: Path, scale: float) -> dict:
    spec = sc.fringe
    sigma = spec.noise()
    if spec.mode == "scan":
        n_bins = max(16, 2 * int(round(spec.n_bins * scale / 2)))
        fs = echolab.fringe_scan(spec.state.build(), read_areas=spec.read_areas,
                                 sigma_phase=sigma, n_phases=spec.n_phases,
                                 n_shots=spec.n_shots, seed=sc.seed, n_bins=n_bins)
        write_csv(out / "fringe.csv", ["phase", "intensity"], zip(fs.phases, fs.intensities))
        write_json(out / "fringe.json", fs.to_dict())
        row = {"visibility": fs.visibility, "fidelity": fs.fidelity}
        return {"summary": dict(row, sigma_phase=sigma), "row": row}
    line = spec.line.build()
    pts = []
    for tau in spec.tau_us:
        fs = echolab.dual_memory_fringe(spec.depths, tau, spec.t2_us, sigma, spec.n_phases,
                                        spec.n_shots, sc.seed, line=line)
        pts.append({"tau": tau, "tau_over_t2": tau / spec.t2_us, "visibility": fs.visibility,
                    "fidelity": fs.fidelity, "echo_energy": fs.extra["echo_energy"]})
    write_csv(out / "dual_fringe.csv", list(pts[0]), ([p[k] for k in pts[0]] for p in pts))
    vis = [p["visibility"] for p in pts]
    row = {k: v for k, v in pts[0].items() if k != "tau"}
    summary = {"points": pts, "sigma_phase": sigma,
               "visibility_spread": (max(vis) - min(vis)) / float(np.mean(vis)),
               "energy_ratio": pts[0]["echo_energy"] / pts[-1]["echo_energy"]
               if pts[-1]["echo_energy"] > 0 else math.inf}
    return {"summary": summary, "row": row}


def run_repeater_kind(sc: Scenario, out: Path, scale: float) -> dict:
    spec = sc.repeater
    cfg = spec.build()
    ch = cfg.channel
    outcome = repeater.simulate_repeater(cfg, spec.trials, seed=sc.seed)
    s = outcome.summary()
    useful, margin = repeater.memory_usefulness(cfg.memory_efficiency, ch.attenuation,
                                                ch.segment_length)
    try:
        exact = repeater.expected_rounds(cfg)
    except InvalidParameter:
        exact = float("nan")
    closed = {
        "segment_transmission": repeater.channel_transmission(ch.attenuation, ch.segment_length),
        "total_transmission": repeater.channel_transmission(ch.attenuation, ch.total_length),
        "min_storage_time": repeater.min_storage_time(ch.segment_length, ch.c_medium),
        "min_efficiency": repeater.min_efficiency(ch.attenuation, ch.segment_length),
        "memory_useful": useful, "usefulness_margin": margin,
        "link_prob": cfg.link_prob, "segment_prob": cfg.segment_prob,
        "final_swap_prob": cfg.final_prob, "n_segments": cfg.n_segments,
        "expected_rounds": exact,
        "expected_mean_time": exact * ch.round_time,
    }
    edges, counts = outcome.histogram(spec.histogram_bins)
    write_csv(out / "histogram.csv", ["t_lo", "t_hi", "count"],
              ([float(a), float(b), int(c)] for a, b, c in zip(edges[:-1], edges[1:], counts)))
    row = {"rate": s["rate"], "mean_time": s["mean_time"], "success_fraction": s["success_fraction"],
           "min_efficiency": closed["min_efficiency"],
           "min_storage_time": closed["min_storage_time"],
           "segment_transmission": closed["segment_transmission"]}
    return {"summary": {"monte_carlo": s, "closed_form": closed}, "row": row}


RUNNERS = {"crib": run_crib_kind, "echo": run_echo_kind, "timebin": run_timebin_kind,
           "fringe": run_fringe_kind, "repeater": run_repeater_kind}


def run_sweep_kind(sc: Scenario, out: Path, scale: float) -> dict:
    spec = sc.sweep
    header, rows = None, []
    for i, value in enumerate(spec.values):
        if spec.parameter == "grid_scale":
            point, point_scale = spec.base, scale * value
        else:
            point, point_scale = with_value(spec.base, spec.parameter, value), scale * spec.base.grid_scale
        sub = out / "points" / f"{i:03d}"
        sub.mkdir(parents=True)
        res = RUNNERS[point.kind](point, sub, point_scale)
        write_json(sub / "summary.json", res["summary"])
        row = dict({spec.parameter: value}, **res["row"])
        header = header or list(row)
        rows.append([row.get(k) for k in header])
    write_csv(out / "sweep.csv", header, rows)
    return {"summary": {"parameter": spec.parameter, "columns": header, "rows": rows},
            "row": {}}


def execute(sc: Scenario, out: Path, scale: float = 1.0) -> dict:
    runner = run_sweep_kind if sc.kind == "sweep" else RUNNERS[sc.kind]
    return runner(sc, out, scale * (sc.grid_scale if sc.kind != "sweep" else 1.0))
