"""Command-line scenario runner.

    cribsim --scenario crib_forward_aL2 --out-dir runs/
    cribsim --accept [--only 1,4]

Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 acceptance
failure.
"""
from __future__ import annotations

import argparse
import logging
import platform
import sys
import time
from pathlib import Path

from . import __version__
from .errors import CribsimError
from .io import atomic_dir, dumps, sha256_file, sha256_text, write_json
from .scenario import load, packaged_scenarios

log = logging.getLogger("cribsim")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_ACCEPTANCE = 0, 2, 3, 4


def _versions():
    import numba
    import numpy
    import pydantic
    import scipy
    import yaml
    return {"cribsim": __version__, "python": platform.python_version(), "numpy": numpy.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__,
            "pydantic": pydantic.__version__, "pyyaml": yaml.__version__}


def build_parser():
    p = argparse.ArgumentParser(prog="cribsim", description="Photon-echo quantum memory simulator.")
    p.add_argument("--scenario", help="scenario YAML file or packaged scenario name")
    p.add_argument("--out-dir", default="cribsim-out", help="parent directory for run artifacts")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--grid-scale", type=float, default=1.0,
                   help="multiply default resolutions (bins, slices, 1/dt)")
    p.add_argument("--accept", action="store_true", help="run the acceptance suite")
    p.add_argument("--only", help="comma-separated acceptance criterion ids")
    p.add_argument("--list", action="store_true", help="list packaged scenarios")
    p.add_argument("--quiet", action="store_true")
    return p


def run(scenario_path, out_dir, seed=None, grid_scale=1.0) -> Path:
    """Validate and execute one scenario; returns the artifact directory."""
    from .runner import execute
    from .errors import InvalidParameter
    if not grid_scale > 0:
        raise InvalidParameter("must be positive", "--grid-scale")
    sc, text = load(scenario_path)
    if seed is not None:
        sc = sc.model_copy(update={"seed": seed})
    target = Path(out_dir) / sc.name
    t0 = time.perf_counter()
    with atomic_dir(target) as stage:
        result = execute(sc, stage, grid_scale)
        summary = dict(result["summary"], scenario=sc.name, kind=sc.kind, seed=sc.seed)
        write_json(stage / "summary.json", summary)
        resolved = dumps(sc.model_dump(mode="json"))
        (stage / "scenario.resolved.json").write_text(resolved, encoding="utf-8")
        outputs = {p.relative_to(stage).as_posix(): sha256_file(p)
                   for p in sorted(stage.rglob("*")) if p.is_file()}
        manifest = {
            "scenario": sc.name, "kind": sc.kind, "seed": sc.seed,
            "inputs": {"source": str(scenario_path), "source_sha256": sha256_text(text),
                       "resolved_sha256": sha256_text(resolved)},
            "grid": {"cli_grid_scale": grid_scale, "scenario_grid_scale": sc.grid_scale},
            "versions": _versions(),
            "outputs": outputs,
            "order_independent": True,
        }
        write_json(stage / "manifest.json", manifest)
    log.info("%s finished in %.1f s -> %s", sc.name, time.perf_counter() - t0, target)
    return target


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    if args.list:
        print("\n".join(packaged_scenarios()))
        return EXIT_OK
    if args.accept:
        from .acceptance import run_suite
        ids = [int(x) for x in args.only.split(",")] if args.only else None
        results = run_suite(ids, echo=not args.quiet)
        if args.scenario is None and args.out_dir:
            out = Path(args.out_dir)
            out.mkdir(parents=True, exist_ok=True)
            write_json(out / "acceptance.json", [r.to_dict() for r in results])
        return EXIT_OK if all(r.passed for r in results) else EXIT_ACCEPTANCE
    if not args.scenario:
        build_parser().error("--scenario or --accept is required")
    try:
        target = run(args.scenario, args.out_dir, args.seed, args.grid_scale)
    except CribsimError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code if e.exit_code in (EXIT_VALIDATION, EXIT_NUMERICAL) else EXIT_NUMERICAL
    if not args.quiet:
        print(target / "summary.json")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
