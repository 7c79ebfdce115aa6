"""Command-line front end: JSON configs in, reproducible tables out.

Precedence for shared settings is CLI flag > SPINCORR_* environment
variable > config file > built-in default.  Every run writes a manifest
(config echo, package versions, wall time) next to its artifacts; errors
produce a machine-readable JSON document on stderr and exit status 2
(validation) or 1 (runtime).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

ENV_PREFIX = "SPINCORR_"

COMMANDS = ("evolve", "gap", "gap-scan", "spectrum", "phase-diagram",
            "closure-check", "oracle-compare", "two-spin")


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


def _set_thread_env(threads: int):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(threads)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)

    # Thread pinning must happen before the numerics stack loads.
    if "--threads" in argv:
        try:
            _set_thread_env(int(argv[argv.index("--threads") + 1]))
        except (IndexError, ValueError):
            pass
    elif os.environ.get(ENV_PREFIX + "THREADS"):
        _set_thread_env(int(os.environ[ENV_PREFIX + "THREADS"]))

    parser = argparse.ArgumentParser(
        prog="spincorr",
        description="Semi-analytic dynamics of dissipatively driven spin-1/2 lattices",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=Path, help="JSON config file")
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument("--threads", type=int, help="numerics thread count")
    parser.add_argument("--seed", type=int, help="random seed for sampled checks")
    args = parser.parse_args(argv)

    config = {}
    if args.config is not None:
        try:
            config = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as err:
            return _fail(None, [f"cannot read config {args.config}: {err}"], code=2)

    config.setdefault("command", args.command)
    if config["command"] != args.command:
        return _fail(None, [
            f"config command {config['command']!r} conflicts with CLI command "
            f"{args.command!r}"], code=2)

    out_dir = (args.out or os.environ.get(ENV_PREFIX + "OUT")
               or config.get("output", {}).get("directory"))
    if out_dir is None:
        return _fail(None, ["no output directory: pass --out, set SPINCORR_OUT, "
                            "or set output.directory in the config"], code=2)
    out_dir = Path(out_dir)
    config.setdefault("output", {})["directory"] = str(out_dir)

    seed = (args.seed if args.seed is not None
            else os.environ.get(ENV_PREFIX + "SEED"))
    if seed is not None:
        config.setdefault("numerics", {})["seed"] = int(seed)
    if args.threads is not None:
        config.setdefault("numerics", {})["threads"] = args.threads

    try:
        errors = _validate(config)
        if errors:
            raise ConfigError(errors)
        _run(config, out_dir)
    except ConfigError as err:
        return _fail(out_dir, err.errors, code=2)
    except Exception as err:  # runtime failure: report, nonzero exit
        return _fail(out_dir, [f"{type(err).__name__}: {err}"], code=1)
    return 0


def _fail(out_dir: Path | None, errors: list[str], code: int) -> int:
    doc = {"error": {"exit_code": code, "messages": errors}}
    print(json.dumps(doc), file=sys.stderr)
    if out_dir is not None:
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "error.json").write_text(json.dumps(doc, indent=2) + "\n")
        except OSError:
            pass
    return code


# ---------------------------------------------------------------------------
# Validation (collects every violation, not just the first)
# ---------------------------------------------------------------------------

_NEEDS_LATTICE = {"evolve", "gap", "spectrum", "phase-diagram", "oracle-compare"}
_NEEDS_SCENARIO = {"evolve", "gap", "spectrum", "oracle-compare"}


def _validate(config: dict) -> list[str]:
    errors: list[str] = []
    cmd = config.get("command")
    if cmd not in COMMANDS:
        errors.append(f"unknown command {cmd!r}")
        return errors

    if cmd in _NEEDS_LATTICE:
        lat = config.get("lattice")
        if not isinstance(lat, dict):
            errors.append("missing 'lattice' block")
        else:
            from .lattice import BOUNDARY_CONDITIONS, GEOMETRIES

            if lat.get("geometry") not in GEOMETRIES:
                errors.append(f"lattice.geometry must be one of {GEOMETRIES}")
            if not isinstance(lat.get("L"), int) or lat.get("L", 0) < 2:
                errors.append("lattice.L must be an integer >= 2")
            if lat.get("bc", "periodic") not in BOUNDARY_CONDITIONS:
                errors.append(f"lattice.bc must be one of {BOUNDARY_CONDITIONS}")

    if cmd in _NEEDS_SCENARIO:
        sc = config.get("scenario")
        if not isinstance(sc, dict) or sc.get("kind") not in ("pure", "field", "thermal"):
            errors.append("scenario.kind must be pure, field, or thermal")
        elif sc["kind"] == "field":
            if not isinstance(sc.get("eta"), (int, float)) or sc["eta"] < 0:
                errors.append("scenario.eta must be a nonnegative number")
        elif sc["kind"] == "thermal":
            if not isinstance(sc.get("kappa_over_gamma"), (int, float)) or sc["kappa_over_gamma"] < 0:
                errors.append("scenario.kappa_over_gamma must be a nonnegative number")
            has_nt = isinstance(sc.get("n_T"), (int, float)) and sc["n_T"] >= 0
            has_T = isinstance(sc.get("T_over_h"), (int, float)) and sc["T_over_h"] > 0
            if not (has_nt or has_T):
                errors.append("thermal scenario needs n_T >= 0 or T_over_h > 0")

    if cmd == "gap-scan":
        scan = config.get("scan")
        if not isinstance(scan, dict):
            errors.append("missing 'scan' block")
        else:
            sizes = scan.get("sizes")
            if not (isinstance(sizes, list) and sizes
                    and all(isinstance(s, int) and s >= 2 for s in sizes)):
                errors.append("scan.sizes must be a nonempty list of integers >= 2")

    if cmd == "phase-diagram":
        grid = config.get("grid")
        if not isinstance(grid, dict):
            errors.append("missing 'grid' block")
        else:
            for key in ("gamma_over_kappa", "T_over_h"):
                axis = grid.get(key)
                ok = (isinstance(axis, dict)
                      and all(isinstance(axis.get(k), (int, float)) for k in ("min", "max"))
                      and isinstance(axis.get("num"), int) and axis.get("num", 0) >= 2
                      and 0 < axis.get("min", 0) < axis.get("max", 0))
                if not ok:
                    errors.append(f"grid.{key} needs 0 < min < max and integer num >= 2")

    if cmd == "closure-check":
        op = config.get("operator")
        if not isinstance(op, dict) or "kind" not in op:
            errors.append("missing 'operator' block with a 'kind'")

    if cmd == "two-spin":
        eta = config.get("eta")
        if not isinstance(eta, (int, float)) or eta < 0:
            errors.append("two-spin needs a nonnegative 'eta'")

    times = config.get("times")
    if times is not None:
        ok = (isinstance(times, dict)
              and times.get("kind", "geometric") in ("geometric", "linear")
              and isinstance(times.get("num"), int) and times.get("num", 0) >= 2
              and isinstance(times.get("start"), (int, float))
              and isinstance(times.get("stop"), (int, float))
              and 0 <= times.get("start", -1) < times.get("stop", 0))
        if not ok:
            errors.append("times needs kind in {geometric, linear}, 0 <= start < stop, num >= 2")

    num = config.get("numerics", {})
    if not isinstance(num, dict):
        errors.append("'numerics' must be a mapping")
    else:
        if "k" in num and (not isinstance(num["k"], int) or num["k"] < 1):
            errors.append("numerics.k must be a positive integer")
        if "mode" in num and num["mode"] not in ("auto", "full_pairs", "displacement"):
            errors.append("numerics.mode must be auto, full_pairs, or displacement")

    return errors


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------

def _time_grid(config: dict, default_stop: float = 20.0) -> "np.ndarray":
    import numpy as np

    spec = config.get("times") or {"kind": "geometric", "start": 0.02,
                                   "stop": default_stop, "num": 40,
                                   "include_zero": True}
    if spec.get("kind", "geometric") == "linear":
        grid = np.linspace(spec["start"], spec["stop"], spec["num"])
    else:
        start = spec["start"] if spec["start"] > 0 else 1e-2
        grid = np.geomspace(start, spec["stop"], spec["num"])
    if spec.get("include_zero", True) and grid[0] > 0.0:
        grid = np.concatenate([[0.0], grid])
    return grid


def _build(config: dict):
    from .correlation_engine import (build_generator_field, build_generator_pure,
                                     build_generator_thermal)
    from .lattice import build_lattice

    lat_cfg = config["lattice"]
    lattice = build_lattice(lat_cfg["geometry"], lat_cfg["L"], lat_cfg.get("bc", "periodic"))
    sc = config["scenario"]
    mode = config.get("numerics", {}).get("mode", "auto")
    if sc["kind"] == "pure":
        gen = build_generator_pure(lattice, mode)
    elif sc["kind"] == "field":
        gen = build_generator_field(lattice, float(sc["eta"]), mode)
    else:
        n_T = sc.get("n_T")
        if n_T is None:
            from .analysis import thermal_occupation

            n_T = thermal_occupation(float(sc["T_over_h"]))
        gen = build_generator_thermal(lattice, float(sc["kappa_over_gamma"]), float(n_T), mode)
    return lattice, gen


def _run(config: dict, out_dir: Path):
    from . import artifacts

    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = artifacts.ManifestWriter(out_dir, config)
    cmd = config["command"]
    runner = {
        "evolve": _cmd_evolve,
        "gap": _cmd_gap,
        "gap-scan": _cmd_gap_scan,
        "spectrum": _cmd_spectrum,
        "phase-diagram": _cmd_phase_diagram,
        "closure-check": _cmd_closure_check,
        "oracle-compare": _cmd_oracle_compare,
        "two-spin": _cmd_two_spin,
    }[cmd]
    runner(config, out_dir, manifest)
    manifest.write()


def _cmd_evolve(config, out_dir, manifest):
    from . import artifacts
    from .correlation_engine import evolve, initial_state

    lattice, gen = _build(config)
    times = _time_grid(config)
    init = initial_state(gen.layout, config.get("initial_state", "infinite_temperature"))
    states = evolve(gen, init, times)
    paths = artifacts.write_trajectory(out_dir, "trajectory", states, gen.params, lattice)
    rows = [(s.tau, s.condensate_fraction()) for s in states]
    paths.append(artifacts.write_csv(out_dir / "condensate.csv",
                                     ["tau", "condensate"], rows))
    manifest.add(*paths)


def _cmd_gap(config, out_dir, manifest):
    from . import artifacts
    from .correlation_engine import dissipative_gap

    lattice, gen = _build(config)
    gap = dissipative_gap(gen)
    path = artifacts.write_json(out_dir / "gap.json", {
        "geometry": lattice.geometry, "L": lattice.L, "bc": lattice.bc,
        "N": lattice.nsites, "scenario": gen.scenario, "parameters": gen.params,
        "gap": gap,
    })
    manifest.add(path)


def _cmd_gap_scan(config, out_dir, manifest):
    from . import artifacts
    from .analysis import compare_scaling_models, gap_scan

    scan = config["scan"]
    mode = config.get("numerics", {}).get("mode", "auto")
    series = gap_scan(scan["geometry"], scan.get("bc", "periodic"), scan["sizes"], mode)
    paths = [artifacts.write_gap_series(out_dir, "gap_series", series)]
    if len({e.L for e in series.entries}) >= 4:
        fits = compare_scaling_models(series)
        paths.append(artifacts.write_scaling_fit(out_dir, "scaling_fit", fits))
    manifest.add(*paths)


def _cmd_spectrum(config, out_dir, manifest):
    from . import artifacts
    from .correlation_engine import leading_spectrum

    _, gen = _build(config)
    k = config.get("numerics", {}).get("k", 6)
    result = leading_spectrum(gen, k=k)
    path = artifacts.write_spectrum(out_dir, "spectrum", result.eigenvalues)
    summary = artifacts.write_json(out_dir / "spectrum_summary.json", {
        "gap": result.gap, "zero_modes": result.zero_modes,
        "tol_zero": result.tol_zero, "k": k,
    })
    manifest.add(path, summary)


def _cmd_phase_diagram(config, out_dir, manifest):
    import numpy as np

    from . import artifacts
    from .analysis import optimal_temperature, phase_diagram_scan
    from .lattice import build_lattice

    lat_cfg = config["lattice"]
    lattice = build_lattice(lat_cfg["geometry"], lat_cfg["L"], lat_cfg.get("bc", "periodic"))
    grid = config["grid"]
    gk = np.geomspace(grid["gamma_over_kappa"]["min"], grid["gamma_over_kappa"]["max"],
                      grid["gamma_over_kappa"]["num"])
    Th = np.geomspace(grid["T_over_h"]["min"], grid["T_over_h"]["max"],
                      grid["T_over_h"]["num"])
    mode = config.get("numerics", {}).get("mode", "auto")
    points = phase_diagram_scan(lattice, gk, Th, mode)
    paths = [artifacts.write_phase_diagram(out_dir, "phase_diagram", points)]
    if config.get("optimal_line", False):
        rows = []
        for g in gk:
            opt = optimal_temperature(lattice, float(g), mode=mode)
            rows.append((g, opt.T_over_h, opt.condensate, int(opt.degenerate)))
        paths.append(artifacts.write_csv(
            out_dir / "optimal_temperature.csv",
            ["gamma_over_kappa", "T_opt_over_h", "condensate", "degenerate"], rows))
    manifest.add(*paths)


def _cmd_closure_check(config, out_dir, manifest):
    import numpy as np

    from . import artifacts
    from .jump_algebra import (AntisymmetricBilocalCoefficients,
                               SymmetricBilocalCoefficients, check_closure,
                               check_closure_antisymmetric, check_closure_symmetric,
                               spec_from_config)

    spec = spec_from_config(config["operator"])
    report = check_closure(spec)
    doc = {
        "operator": config["operator"],
        "family": report.family,
        "max_residual": report.max_residual,
        "bruteforce_max_two_spin_coefficient": report.bruteforce_max_m2,
        "passed": report.passed,
        "residuals": report.residuals,
        "tol": report.tol,
    }

    rand = config.get("random")
    if rand:
        seed = config.get("numerics", {}).get("seed", 20160229)
        rng = np.random.default_rng(seed)
        count = int(rand.get("count", 100))
        family = rand.get("family", "symmetric")
        use_complex = bool(rand.get("complex", False))

        def draw(n):
            if use_complex:
                r = np.sqrt(rng.uniform(0, 1, n))
                return r * np.exp(2j * np.pi * rng.uniform(0, 1, n))
            return rng.uniform(-1, 1, n).astype(complex)

        verdicts = []
        for _ in range(count):
            if family == "symmetric":
                c = SymmetricBilocalCoefficients(float(rng.uniform(-1, 1)),
                                                 tuple(draw(3)), tuple(draw(3)),
                                                 tuple(draw(3)))
                rep = check_closure_symmetric(c)
            else:
                c = AntisymmetricBilocalCoefficients(tuple(draw(3)), tuple(draw(3)))
                rep = check_closure_antisymmetric(c)
            verdicts.append(rep.passed and rep.consistent)
        doc["random"] = {
            "seed": seed, "count": count, "family": family, "complex": use_complex,
            "passed_and_consistent": int(sum(verdicts)),
        }

    manifest.add(artifacts.write_json(out_dir / "closure_report.json", doc))


def _cmd_oracle_compare(config, out_dir, manifest):
    import numpy as np

    from . import artifacts
    from .correlation_engine import evolve, initial_state
    from .exact_oracle import (LindbladSpec, correlation_channels, evolve_exact,
                               infinite_temperature_state)
    from .jump_algebra import LocalFieldHamiltonian, builtin

    # the oracle reports channels on the full pair enumeration
    config = dict(config)
    config["numerics"] = dict(config.get("numerics", {}), mode="full_pairs")
    lattice, gen = _build(config)
    scenario = gen.scenario
    times = _time_grid(config)

    procs = [(builtin("Q"), "per_edge")]
    H = None
    if scenario == "field":
        H = LocalFieldHamiltonian((gen.params["eta"], 0.0, 0.0))
    elif scenario == "thermal":
        kg, nT = gen.params["kappa_over_gamma"], gen.params["n_thermal"]
        H = LocalFieldHamiltonian((0.0, 0.0, 1.0))
        procs.append((builtin("s_plus", rate=kg * nT), "per_site"))
        procs.append((builtin("s_minus", rate=kg * (nT + 1.0)), "per_site"))
    lspec = LindbladSpec(lattice, H, tuple(procs))

    rhos = evolve_exact(lspec, infinite_temperature_state(lattice.nsites), times)
    states = evolve(gen, initial_state(gen.layout), times)

    rows = []
    worst = 0.0
    for tau, rho, st in zip(times, rhos, states):
        chans = correlation_channels(rho, lattice, scenario)
        for name, vals in chans.items():
            dev = float(np.max(np.abs(vals - st.channel(name))))
            worst = max(worst, dev)
            rows.append((tau, name, dev))
    paths = [
        artifacts.write_csv(out_dir / "oracle_compare.csv",
                            ["tau", "channel", "max_abs_deviation"], rows),
        artifacts.write_json(out_dir / "oracle_compare_summary.json",
                             {"max_deviation": worst, "scenario": scenario,
                              "N": lattice.nsites}),
    ]
    manifest.add(*paths)


def _cmd_two_spin(config, out_dir, manifest):
    from . import artifacts
    from .analysis import two_spin_reference

    eta = float(config["eta"])
    times = _time_grid(config, default_stop=50.0)
    rows = []
    for tau in times:
        ref = two_spin_reference(eta, float(tau))
        c1, c2, c3, c4 = ref.c
        rows.append((tau, c1, c2, c3, c4,
                     ref.rho_bell[0, 0].real, ref.rho_bell[1, 1].real,
                     ref.rho_bell[2, 2].real, ref.rho_bell[3, 3].real,
                     ref.c_expectation))
    path = artifacts.write_csv(
        out_dir / "two_spin.csv",
        ["tau", "c1", "c2", "c3", "c4", "rho_tp", "rho_tm", "rho_t0", "rho_s", "C"],
        rows)
    manifest.add(path)


if __name__ == "__main__":
    sys.exit(main())
