"""Command-line driver: ``erasure-qec {simulate,sweep,fit,physics,evolve}``.

Every run reads one TOML file (``--config``). Unknown sections or keys are
errors. ``--seed``/``--threads`` flags beat the environment variables
``ERASURE_QEC_SEED``/``ERASURE_QEC_THREADS``, which beat the file. ``--out``
beats ``output.path``.

Exit codes: 0 success, 1 configuration error, 2 simulation failure, 3 fit
non-convergence.

Config schema (all keys optional unless a subcommand needs them)::

    [code]     distance = 5            rounds = 5 (must equal distance)
    [noise]    p = 0.0  p_m = 2p/3  e = 0.0  q_plus = 0.0  q_minus = 0.0
               scheme = "erasure" | "standard" | "code_capacity"
    [run]      shots = 10000  realizations  n_rep  seed = 0  threads = 1
               weighting = "log" | "uniform"
    [sweep]    axis = "p" | "e"  values = [...]  distances = [3, 5, 7]
               schemes = ["erasure"]  p_m_ratio = 2/3  threshold_guess
               window = [0.2, 1.8]
    [fit]      input = "table.csv" (csv or json)  axis = "p"  threshold_guess
               window = [0.2, 1.8]  bootstrap = 0
    [output]   path  format = "csv" | "json"  shots_dump  shots_dump_count
               layout_json  graph_json  fit_path
    [physics]  formula = "<name>"  [physics.args] keyword arguments (rad/s, s)
    [evolve]   preset = "gate_example"  [evolve.device] DeviceParams fields
               (frequencies in Hz)  levels = 3  tol = 1e-10
               corrective_shifts = "exact"  tune = true  trace_input = "11"
               n_times = 201
"""

from __future__ import annotations

import argparse
import dataclasses
import inspect
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np
import tomli

from . import analysis, gate, physics
from .analysis import FitError, PfailEstimate
from .layout import ParameterError, build_layout, syndrome_circuit
from .noise import NoiseParams

log = logging.getLogger("erasure_qec")

EXIT_OK, EXIT_CONFIG, EXIT_SIMULATION, EXIT_FIT = 0, 1, 2, 3
ENV_SEED, ENV_THREADS = "ERASURE_QEC_SEED", "ERASURE_QEC_THREADS"
SUBCOMMANDS = ("simulate", "sweep", "fit", "physics", "evolve")

SCHEMA = {
    "code": {"distance", "rounds"},
    "noise": {"p", "p_m", "e", "q_plus", "q_minus", "scheme"},
    "run": {"shots", "realizations", "n_rep", "seed", "threads", "weighting"},
    "sweep": {"axis", "values", "distances", "schemes", "p_m_ratio", "threshold_guess", "window"},
    "fit": {"input", "axis", "threshold_guess", "window", "bootstrap"},
    "output": {"path", "format", "shots_dump", "shots_dump_count", "layout_json", "graph_json", "fit_path"},
    "physics": {"formula", "args"},
    "evolve": {"preset", "device", "levels", "tol", "corrective_shifts", "tune", "trace_input", "n_times"},
}


class ConfigError(ValueError):
    """Invalid or incomplete configuration (exit code 1)."""


class SimulationError(RuntimeError):
    """A simulation step failed (exit code 2)."""


# ---------------------------------------------------------------- config

@dataclasses.dataclass
class RunConfig:
    """Validated configuration; sections are plain dicts keyed as in the schema."""

    code: dict
    noise: dict
    run: dict
    sweep: dict
    fit: dict
    output: dict
    physics: dict
    evolve: dict

    @property
    def seed(self) -> int:
        return int(self.run.get("seed", 0))

    @property
    def threads(self) -> int:
        return int(self.run.get("threads", 1))


def load_config(path, seed: int | None = None, threads: int | None = None, out: str | None = None,
                environ=None) -> RunConfig:
    """Parse and validate a TOML config, applying env and flag overrides."""
    environ = os.environ if environ is None else environ
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_dict(raw, seed, threads, out, environ)


def config_from_dict(raw: dict, seed=None, threads=None, out=None, environ=None) -> RunConfig:
    environ = {} if environ is None else environ
    unknown = set(raw) - set(SCHEMA)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    sections = {}
    for name, keys in SCHEMA.items():
        sec = raw.get(name, {})
        if not isinstance(sec, dict):
            raise ConfigError(f"[{name}] must be a table")
        bad = set(sec) - keys
        if bad:
            raise ConfigError(f"unknown keys in [{name}]: {sorted(bad)}")
        sections[name] = dict(sec)
    run = sections["run"]
    for key, env, flag in (("seed", ENV_SEED, seed), ("threads", ENV_THREADS, threads)):
        if env in environ:
            try:
                run[key] = int(environ[env])
            except ValueError as exc:
                raise ConfigError(f"{env} must be an integer") from exc
        if flag is not None:
            run[key] = int(flag)
    if out is not None:
        sections["output"]["path"] = out
    cfg = RunConfig(**sections)
    _check_ints(cfg)
    return cfg


def _check_ints(cfg: RunConfig) -> None:
    for key in ("shots", "realizations", "n_rep", "threads"):
        v = cfg.run.get(key)
        if v is not None and (not isinstance(v, int) or v < (0 if key == "threads" else 1)):
            raise ConfigError(f"run.{key} must be a positive integer")
    if not isinstance(cfg.run.get("seed", 0), int) or cfg.run.get("seed", 0) < 0:
        raise ConfigError("run.seed must be a non-negative integer")
    fmt = cfg.output.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ConfigError("output.format must be 'csv' or 'json'")


def _noise(cfg: RunConfig) -> NoiseParams:
    try:
        return NoiseParams.from_dict(cfg.noise)
    except (ParameterError, TypeError) as exc:
        raise ConfigError(f"[noise]: {exc}") from exc


def _distance(cfg: RunConfig) -> int:
    d = cfg.code.get("distance")
    if not isinstance(d, int) or d < 3 or d % 2 == 0:
        raise ConfigError("code.distance must be an odd integer >= 3")
    rounds = cfg.code.get("rounds", d)
    if rounds != d:
        raise ConfigError("code.rounds must equal code.distance (memory experiments use d rounds)")
    return d


def _out_path(cfg: RunConfig, default: str) -> Path:
    return Path(cfg.output.get("path", default))


# --------------------------------------------------------------- results

def emit_results(records, path, fmt: str = "csv") -> Path:
    """Write Monte Carlo estimates as CSV (fixed columns) or JSON.

    Raises
    ------
    ValueError
        Empty record set.
    OSError
        Unwritable path.
    """
    records = list(records)
    if not records:
        raise ValueError("no records to write")
    path = Path(path)
    if fmt == "csv":
        analysis.write_csv(records, path)
    elif fmt == "json":
        path.write_text(json.dumps([r.row() for r in records], indent=1))
    else:
        raise ValueError(f"format must be 'csv' or 'json', got {fmt!r}")
    return path


def read_results(path) -> list[PfailEstimate]:
    """Read estimates written by :func:`emit_results` (format from the suffix)."""
    path = Path(path)
    if path.suffix == ".json":
        return [PfailEstimate(**row) for row in json.loads(path.read_text())]
    return analysis.read_csv(path)


def fit_to_json(fit: analysis.ThresholdFit) -> str:
    return fit.to_json()


def fit_from_json(text: str) -> analysis.ThresholdFit:
    return analysis.ThresholdFit(**json.loads(text))


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else str(v)
    if isinstance(value, (np.integer, np.bool_)):
        return value.item()
    return value


# ----------------------------------------------------------- subcommands

def cmd_simulate(cfg: RunConfig) -> int:
    noise = _noise(cfg)
    d = _distance(cfg)
    shots = cfg.run.get("shots", 10_000)
    weighting = cfg.run.get("weighting", "log")
    if weighting not in ("log", "uniform"):
        raise ConfigError("run.weighting must be 'log' or 'uniform'")
    threads = analysis.cpu_threads(cfg.threads)
    if noise.scheme == "code_capacity":
        est = analysis.estimate_code_capacity(d, noise.e, shots, pauli_rate=noise.p, seed=cfg.seed,
                                              threads=threads)
    else:
        est = analysis.estimate_pfail(noise, d, shots=shots, realizations=cfg.run.get("realizations"),
                                      n_rep=cfg.run.get("n_rep"), seed=cfg.seed, threads=threads,
                                      weighting=weighting)
    fmt = cfg.output.get("format", "csv")
    out = emit_results([est], _out_path(cfg, f"simulate.{fmt}"), fmt)
    _side_outputs(cfg, noise, d, weighting)
    print(json.dumps(est.row()))
    log.info("wrote %s", out)
    return EXIT_OK


def _side_outputs(cfg: RunConfig, noise: NoiseParams, d: int, weighting: str) -> None:
    from .frame import dump_shots, run_batch
    from .matching import build_graph

    layout = build_layout(d)
    if "layout_json" in cfg.output:
        Path(cfg.output["layout_json"]).write_text(layout.to_json())
    if noise.scheme == "code_capacity":
        if "graph_json" in cfg.output or "shots_dump" in cfg.output:
            raise ConfigError("graph_json and shots_dump need a circuit-level scheme")
        return
    circuit = syndrome_circuit(layout, d)
    if "graph_json" in cfg.output:
        Path(cfg.output["graph_json"]).write_text(build_graph(layout, circuit, noise, weighting).to_json())
    if "shots_dump" in cfg.output:
        count = int(cfg.output.get("shots_dump_count", 1000))
        dump_shots(run_batch(circuit, noise, count, cfg.seed), circuit, cfg.output["shots_dump"])


def cmd_sweep(cfg: RunConfig) -> int:
    sw = cfg.sweep
    axis = sw.get("axis", "p")
    if axis not in ("p", "e"):
        raise ConfigError("sweep.axis must be 'p' or 'e'")
    if "values" not in sw:
        raise ConfigError("sweep.values is required")
    noise = _noise(cfg)
    fixed = noise.e if axis == "p" else noise.p
    distances = sw.get("distances", [3, 5, 7])
    if any(not isinstance(d, int) or d < 3 or d % 2 == 0 for d in distances):
        raise ConfigError("sweep.distances must be odd integers >= 3")
    schemes = sw.get("schemes", [noise.scheme])
    try:
        result = analysis.sweep(axis, sw["values"], fixed, distances, schemes, shots=cfg.run.get("shots", 10_000),
                                seed=cfg.seed, threads=analysis.cpu_threads(cfg.threads),
                                p_m_ratio=sw.get("p_m_ratio", 2.0 / 3.0),
                                threshold_guess=sw.get("threshold_guess"),
                                window=tuple(sw.get("window", (0.2, 1.8))),
                                weighting=cfg.run.get("weighting", "log"))
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc
    fmt = cfg.output.get("format", "csv")
    out = emit_results(result.estimates, _out_path(cfg, f"sweep.{fmt}"), fmt)
    report = {f"{scheme}@{fx}": dataclasses.asdict(fit) for (scheme, fx), fit in result.fits.items()}
    report.update({f"{scheme}@{fx}": {"error": msg} for (scheme, fx), msg in result.errors.items()})
    fit_path = Path(cfg.output.get("fit_path", out.with_suffix(".fit.json")))
    fit_path.write_text(json.dumps(_jsonable(report), indent=1))
    print(json.dumps(_jsonable(report)))
    return EXIT_FIT if result.errors else EXIT_OK


def cmd_fit(cfg: RunConfig) -> int:
    src = cfg.fit.get("input")
    if not src:
        raise ConfigError("fit.input is required")
    try:
        estimates = read_results(src)
    except (OSError, KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"cannot read {src}: {exc}") from exc
    axis = cfg.fit.get("axis", "p")
    fit = analysis.fit_threshold(estimates, axis=axis, threshold_guess=cfg.fit.get("threshold_guess"),
                                 window=tuple(cfg.fit.get("window", (0.2, 1.8))),
                                 bootstrap=cfg.fit.get("bootstrap", 0), seed=cfg.seed)
    text = fit_to_json(fit)
    _out_path(cfg, "fit.json").write_text(text)
    print(text)
    return EXIT_OK


def _spec_from(args: dict) -> physics.DephasingNoiseSpec:
    return physics.DephasingNoiseSpec(args.pop("mean_sq_delta", 0.0), args.pop("spectral_density_zero", None),
                                      args.pop("correlation_time", None))


def _device_from(args: dict) -> physics.DeviceParams:
    fields = {f.name for f in dataclasses.fields(physics.DeviceParams)}
    return physics.DeviceParams(**{k: args.pop(k) for k in list(args) if k in fields})


def _oracle(**kw):
    r = physics.dispersive_numeric_oracle(**kw)
    return {**r, "shifts": physics.oracle_shifts(r) if len(r["n_c"]) > 1 else None,
            "slope": physics.oracle_slope(r) if len(r["n_c"]) > 1 else None}


PHYSICS_FORMULAS = {
    "decoherence_w": (physics.decoherence_w, "spec"),
    "tphi_summary": (physics.tphi_summary, "spec"),
    "dual_rail_eff_params": (physics.dual_rail_eff_params, None),
    "gf_eff_params": (physics.gf_eff_params, None),
    "dispersive_shifts": (physics.dispersive_shifts, None),
    "fourth_order_slope": (physics.fourth_order_slope, None),
    "qubit_freq_vs_photons": (physics.qubit_freq_vs_photons, None),
    "readout_slope_budget": (physics.readout_slope_budget, "device"),
    "dispersive_numeric_oracle": (_oracle, None),
    "measurement_dephasing_rate": (physics.measurement_dephasing_rate, None),
    "leakage_estimate": (physics.leakage_estimate, None),
    "spinlock_params": (physics.spinlock_params, None),
    "error_budget": (physics.error_budget, None),
    "effective_angle": (gate.effective_angle, "device"),
}


def run_physics(formula: str, args: dict):
    """Evaluate one named formula with keyword arguments; returns a JSON-ready value."""
    if formula not in PHYSICS_FORMULAS:
        raise ConfigError(f"unknown formula {formula!r}; choose from {sorted(PHYSICS_FORMULAS)}")
    fn, kind = PHYSICS_FORMULAS[formula]
    args = dict(args)
    try:
        if kind == "spec":
            args["spec"] = _spec_from(args)
        elif kind == "device":
            args["params"] = _device_from(args)
        inspect.signature(fn).bind(**args)
    except (TypeError, ParameterError) as exc:
        raise ConfigError(f"bad arguments for {formula}: {exc}") from exc
    try:
        value = fn(**args)
    except ParameterError as exc:
        raise ConfigError(f"{formula}: {exc}") from exc
    if isinstance(value, tuple):
        value = list(value)
    return _jsonable(value)


def cmd_physics(cfg: RunConfig) -> int:
    formula = cfg.physics.get("formula")
    if not formula:
        raise ConfigError("physics.formula is required")
    result = {"formula": formula, "args": cfg.physics.get("args", {}),
              "result": run_physics(formula, cfg.physics.get("args", {}))}
    text = json.dumps(result, indent=1)
    if "path" in cfg.output:
        Path(cfg.output["path"]).write_text(text)
    print(text)
    return EXIT_OK


def cmd_evolve(cfg: RunConfig) -> int:
    ev = cfg.evolve
    preset = ev.get("preset", "gate_example")
    if preset != "gate_example":
        raise ConfigError("evolve.preset must be 'gate_example'")
    params = physics.DeviceParams.gate_example()
    try:
        if ev.get("device"):
            hz = physics.DeviceParams.from_hz(**ev["device"])
            params = dataclasses.replace(params, **{k: getattr(hz, k) for k in ev["device"]})
    except ParameterError as exc:
        raise ConfigError(f"[evolve.device]: {exc}") from exc
    levels, tol = int(ev.get("levels", 3)), float(ev.get("tol", 1e-10))
    shifts = ev.get("corrective_shifts", "exact")
    if shifts not in gate.SHIFT_MODES:
        raise ConfigError(f"evolve.corrective_shifts must be one of {gate.SHIFT_MODES}")
    label = ev.get("trace_input", "11")
    if label not in gate.COMP_LABELS:
        raise ConfigError(f"evolve.trace_input must be one of {gate.COMP_LABELS}")
    if levels < 3 or tol <= 0:
        raise ConfigError("evolve.levels must be >= 3 and evolve.tol positive")
    try:
        if ev.get("tune", True):
            params = dataclasses.replace(params, t_g=gate.tune_gate_time(params, levels, tol, shifts))
        result = gate.sqrt_iswap_sim(params, levels, tol, shifts)
        times, pops = gate.population_trace(result, params, label, int(ev.get("n_times", 201)))
    except (gate.EvolutionError, ParameterError) as exc:
        raise SimulationError(str(exc)) from exc
    out = _out_path(cfg, "trace.csv")
    gate.write_trace_csv(out, times, pops)
    summary = {**result.to_dict(), "cx_infidelity": gate.cx_composition_check(result.unitary, result.gauge)["infidelity"],
               "swap_angle": gate.simulated_angle(result), "corrective_shifts": shifts, "trace": str(out)}
    Path(str(out) + ".summary.json").write_text(json.dumps(_jsonable(summary), indent=1))
    print(json.dumps(_jsonable(summary)))
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "fit": cmd_fit, "physics": cmd_physics,
            "evolve": cmd_evolve}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="erasure-qec", description=__doc__.split("\n")[0])
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="TOML config file")
    parser.add_argument("--seed", type=int, help="master seed (overrides config and env)")
    parser.add_argument("--threads", type=int, help="worker processes (overrides config and env)")
    parser.add_argument("--out", help="primary output path (overrides output.path)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(ns.config, ns.seed, ns.threads, ns.out)
        return COMMANDS[ns.subcommand](cfg)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except FitError as exc:
        log.error("fit failed: %s", exc)
        return EXIT_FIT
    except (SimulationError, RuntimeError, OSError, ValueError) as exc:
        log.error("simulation failed: %s", exc)
        return EXIT_SIMULATION


if __name__ == "__main__":
    sys.exit(main())
