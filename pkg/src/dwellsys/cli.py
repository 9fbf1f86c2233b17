"""Command-line interface: one JSON config file per run.

Every run dispatches a single command, writes its result files plus a
run_manifest.json holding the fully resolved configuration and tool
versions, and is bit-reproducible from that manifest (given the same
seed). Exit codes: 0 success, 2 config error, 3 numeric failure,
4 internal error. Partial outputs are deleted on failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .lyapunov import lambda_periodic, lambda_random
from .matrices import ModeSet
from .pdmp import (
    PdmpConfig,
    chi_integral,
    chi_per_jump,
    chi_time_average,
    invariant_histogram,
    simulate,
)
from .projective import ProjPoint, radial_log_growth
from .reach import GridSet, ReachConfig, example31_modes, example31_oracle, ics_compute
from .signals import DwellSignal, sample_random, validate
from .svgplot import svg_circle_plot, svg_measure_plot

_PI = math.pi


class ConfigError(ValueError):
    """Rejected configuration; maps to exit code 2."""


class NumericError(RuntimeError):
    """Computation failed to produce a usable result; exit code 3."""


COMMANDS = ("simulate", "control-set", "lyapunov", "pdmp", "chi-compare", "example31")

_RANDOMIZED = {"lyapunov", "pdmp", "chi-compare"}


# ---------------------------------------------------------------------------
# Config parsing: unknown keys are rejected everywhere, defaults recorded.


def _check_keys(obj: dict, allowed: set[str], required: set[str], where: str):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise ConfigError(f"{where}: missing keys {sorted(missing)}")


def _number(obj, key, where, default=None, required=False, minimum=None):
    if key not in obj:
        if required:
            raise ConfigError(f"{where}: missing {key}")
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number")
    if minimum is not None and v < minimum:
        raise ConfigError(f"{where}.{key} must be >= {minimum}")
    return float(v)


def _integer(obj, key, where, default=None, required=False, minimum=None):
    v = _number(obj, key, where, default=default, required=required, minimum=minimum)
    if v is None:
        return None
    if v != int(v):
        raise ConfigError(f"{where}.{key} must be an integer")
    return int(v)


def _parse_system(obj) -> tuple[ModeSet, float]:
    _check_keys(obj, {"modes", "tau", "labels"}, {"modes", "tau"}, "system")
    try:
        modes = ModeSet(obj["modes"], labels=obj.get("labels"))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"system.modes: {exc}") from exc
    tau = _number(obj, "tau", "system", required=True, minimum=0.0)
    return modes, tau


def load_config(path: Path) -> dict:
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if isinstance(raw, dict) and "config" in raw:
        _check_keys(raw, {"config", "versions"}, {"config"}, "manifest")
        raw = raw["config"]
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return raw


def resolve_config(raw: dict) -> dict:
    """Validate and fill defaults; the result is the manifest config."""
    _check_keys(raw, {"command", "system", "params", "output_dir", "seed", "workers"},
                {"command", "output_dir"}, "config")
    command = raw["command"]
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; one of {COMMANDS}")
    out = {
        "command": command,
        "output_dir": str(raw["output_dir"]),
        "workers": _integer(raw, "workers", "config", default=1, minimum=1),
    }
    if "seed" in raw:
        out["seed"] = _integer(raw, "seed", "config", required=True)
    elif command in _RANDOMIZED:
        raise ConfigError(f"command {command} is randomized: an explicit seed is required")

    params = raw.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("params must be an object")
    if command != "example31":
        if "system" not in raw:
            raise ConfigError(f"command {command} needs a system block")
        modes, tau = _parse_system(raw["system"])
        out["system"] = {"modes": [m.tolist() for m in modes],
                         "tau": tau,
                         "labels": list(modes.labels) if modes.labels else None}
    out["params"] = _PARAM_RESOLVERS[command](params, raw)
    return out


def _resolve_example31(p: dict, raw: dict) -> dict:
    _check_keys(p, {"a", "b", "tau", "n", "n_durations", "t_max"},
                {"a", "b", "tau"}, "params")
    return {
        "a": _number(p, "a", "params", required=True),
        "b": _number(p, "b", "params", required=True),
        "tau": _number(p, "tau", "params", required=True, minimum=0.0),
        "n": _integer(p, "n", "params", default=512, minimum=16),
        "n_durations": _integer(p, "n_durations", "params", default=16, minimum=2),
        "t_max": _number(p, "t_max", "params"),
    }


def _resolve_control_set(p: dict, raw: dict) -> dict:
    _check_keys(p, {"n", "n_durations", "t_max", "max_depth"}, set(), "params")
    return {
        "n": _integer(p, "n", "params", default=512, minimum=16),
        "n_durations": _integer(p, "n_durations", "params", default=16, minimum=2),
        "t_max": _number(p, "t_max", "params"),
        "max_depth": _integer(p, "max_depth", "params", minimum=1),
    }


def _resolve_lyapunov(p: dict, raw: dict) -> dict:
    _check_keys(p, {"method", "max_bangs", "duration_samples", "refine_iters",
                    "n_signals", "horizon", "t_max", "max_extra"}, set(), "params")
    method = p.get("method", "both")
    if method not in ("both", "periodic", "random"):
        raise ConfigError("params.method must be both|periodic|random")
    return {
        "method": method,
        "max_bangs": _integer(p, "max_bangs", "params", default=4, minimum=1),
        "duration_samples": _integer(p, "duration_samples", "params", default=8, minimum=2),
        "refine_iters": _integer(p, "refine_iters", "params", default=3, minimum=0),
        "n_signals": _integer(p, "n_signals", "params", default=500, minimum=1),
        "horizon": _number(p, "horizon", "params", default=None),
        "t_max": _number(p, "t_max", "params"),
        "max_extra": _number(p, "max_extra", "params"),
    }


def _resolve_simulate(p: dict, raw: dict) -> dict:
    _check_keys(p, {"bangs", "random", "x0_angle"}, set(), "params")
    if ("bangs" in p) == ("random" in p):
        raise ConfigError("params: give exactly one of bangs or random")
    out = {"x0_angle": _number(p, "x0_angle", "params", default=_PI / 4)}
    if "bangs" in p:
        if not isinstance(p["bangs"], list) or not p["bangs"]:
            raise ConfigError("params.bangs must be a nonempty list of [mode, duration]")
        out["bangs"] = [[int(m), float(d)] for m, d in p["bangs"]]
        out["random"] = None
    else:
        r = p["random"]
        _check_keys(r, {"horizon", "max_extra"}, {"horizon"}, "params.random")
        if "seed" not in raw:
            raise ConfigError("random signal simulation needs an explicit seed")
        out["bangs"] = None
        out["random"] = {
            "horizon": _number(r, "horizon", "params.random", required=True, minimum=0.0),
            "max_extra": _number(r, "max_extra", "params.random", default=1.0),
        }
    return out


def _resolve_pdmp(p: dict, raw: dict, extra: set[str] = frozenset()) -> dict:
    allowed = {"transition", "rate", "n_steps", "n_bins", "burn_in", "x0_angle", "l0"} | extra
    _check_keys(p, allowed, {"transition", "rate", "n_steps"}, "params")
    n_steps = _integer(p, "n_steps", "params", required=True, minimum=10)
    burn_in = _integer(p, "burn_in", "params", minimum=0)
    out = {
        "transition": p["transition"],
        "rate": _number(p, "rate", "params", required=True),
        "n_steps": n_steps,
        "n_bins": _integer(p, "n_bins", "params", default=256, minimum=8),
        "burn_in": burn_in if burn_in is not None else n_steps // 10,
        "x0_angle": _number(p, "x0_angle", "params", default=_PI / 4),
        "l0": _integer(p, "l0", "params", default=0, minimum=0),
    }
    if "n_mc" in extra:
        out["n_mc"] = _integer(p, "n_mc", "params", default=max(10000, n_steps), minimum=100)
    return out


_PARAM_RESOLVERS = {
    "example31": _resolve_example31,
    "control-set": _resolve_control_set,
    "lyapunov": _resolve_lyapunov,
    "simulate": _resolve_simulate,
    "pdmp": _resolve_pdmp,
    "chi-compare": lambda p, raw: _resolve_pdmp(p, raw, extra={"n_mc"}),
}


# ---------------------------------------------------------------------------
# Output writers (tracked, so failures can clean up)


class _Workspace:
    def __init__(self, output_dir: Path):
        self.dir = output_dir
        self.written: list[Path] = []

    def prepare(self):
        self.dir.mkdir(parents=True, exist_ok=True)

    def write_text(self, name: str, text: str) -> Path:
        path = self.dir / name
        path.write_text(text)
        self.written.append(path)
        return path

    def write_json(self, name: str, obj) -> Path:
        return self.write_text(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    @staticmethod
    def _csv_field(x) -> str:
        # floats via repr: shortest digit string that round-trips exactly
        if isinstance(x, (float, np.floating)):
            return repr(float(x))
        if isinstance(x, (int, np.integer)):
            return str(int(x))
        return str(x)

    def write_csv(self, name: str, header: list[str], rows) -> Path:
        lines = [",".join(header)]
        for row in rows:
            lines.append(",".join(self._csv_field(x) for x in row))
        return self.write_text(name, "\n".join(lines) + "\n")

    def cleanup(self):
        for path in self.written:
            try:
                path.unlink()
            except OSError:
                pass


# ---------------------------------------------------------------------------
# Command implementations


def _gridset_rows(g: GridSet):
    h = g.cell_width
    for i in range(g.n):
        yield (i, float(i * h), float((i + 1) * h), int(g.mask[i]))


def _control_set_outputs(ws: _Workspace, candidates: list[GridSet],
                         marks: list[tuple[float, str]] | None = None,
                         oracle_arcs=None) -> dict:
    if not candidates:
        raise NumericError("no invariant control set found at this resolution")
    union = candidates[0]
    for extra in candidates[1:]:
        union = union | extra
    ws.write_csv("control_set.csv", ["cell_index", "theta_lo", "theta_hi", "member"],
                 _gridset_rows(union))
    arcs = [(lo, hi, "set") for lo, hi in union.arcs()]
    if oracle_arcs:
        arcs += [(lo, hi, "oracle") for lo, hi in oracle_arcs]
    ws.write_text("control_set.svg", svg_circle_plot(arcs, marks or []))
    return {
        "n_candidates": len(candidates),
        "n_components": sum(len(c.components()) for c in candidates),
        "cells": int(union.count()),
        "arcs": [[float(lo), float(hi)] for lo, hi in union.arcs()],
    }


def _run_example31(cfg: dict, ws: _Workspace) -> dict:
    p = cfg["params"]
    try:
        oracle = example31_oracle(p["tau"], p["a"], p["b"])
        modes = example31_modes(p["a"], p["b"])
    except (ValueError, ArithmeticError) as exc:
        raise ConfigError(str(exc)) from exc
    rc = ReachConfig(tau=p["tau"], t_max=p["t_max"], n_durations=p["n_durations"], n=p["n"])
    candidates = ics_compute(modes, rc)
    marks = [(oracle.a, "A"), (oracle.a_prime, "A'"),
             (oracle.b_prime, "B'"), (oracle.b, "B")]
    ws.write_csv("endpoints.csv", ["name", "theta"],
                 [("A", oracle.a), ("A_prime", oracle.a_prime),
                  ("B_prime", oracle.b_prime), ("B", oracle.b)])
    summary = _control_set_outputs(ws, candidates, marks=marks, oracle_arcs=oracle.arcs)
    summary.update({
        "a": oracle.a, "a_prime": oracle.a_prime,
        "b_prime": oracle.b_prime, "b": oracle.b,
        "tau": oracle.tau, "tau_critical": oracle.tau_critical,
        "connected_closed_form": oracle.connected,
    })
    ws.write_json("result.json", summary)
    return summary


def _system(cfg: dict) -> tuple[ModeSet, float]:
    sys_block = cfg["system"]
    return ModeSet(sys_block["modes"], labels=sys_block["labels"]), sys_block["tau"]


def _run_control_set(cfg: dict, ws: _Workspace) -> dict:
    modes, tau = _system(cfg)
    p = cfg["params"]
    if modes.dim != 2:
        raise ConfigError("control-set runs on 2x2 modes (RP^1)")
    rc = ReachConfig(tau=tau, t_max=p["t_max"], n_durations=p["n_durations"],
                     max_depth=p["max_depth"], n=p["n"])
    summary = _control_set_outputs(ws, ics_compute(modes, rc))
    ws.write_json("result.json", summary)
    return summary


def _run_lyapunov(cfg: dict, ws: _Workspace) -> dict:
    modes, tau = _system(cfg)
    p = cfg["params"]
    seed = cfg["seed"]
    horizon = p["horizon"] if p["horizon"] is not None else max(100.0, 20.0 * (tau + 1.0))
    estimates = {}
    convergence_rows = []
    if p["method"] in ("both", "periodic"):
        est = lambda_periodic(modes, tau, max_bangs=p["max_bangs"],
                              duration_samples=p["duration_samples"],
                              refine_iters=p["refine_iters"], seed=seed,
                              t_max=p["t_max"], track_history=True)
        estimates["periodic"] = est.to_jsonable()
        convergence_rows += [("periodic", b, v) for b, v in (est.history or [])]
    if p["method"] in ("both", "random"):
        est = lambda_random(modes, tau, n_signals=p["n_signals"], horizon=horizon,
                            seed=seed, max_extra=p["max_extra"],
                            workers=cfg["workers"], track_history=True)
        estimates["random"] = est.to_jsonable()
        convergence_rows += [("random", b, v) for b, v in (est.history or [])]
    ws.write_csv("lyapunov_convergence.csv", ["method", "budget", "best_value"],
                 convergence_rows)
    ws.write_json("lyapunov.json", estimates)
    return estimates


def _run_simulate(cfg: dict, ws: _Workspace) -> dict:
    modes, tau = _system(cfg)
    p = cfg["params"]
    if p["bangs"] is not None:
        try:
            sig = DwellSignal([(m, d) for m, d in p["bangs"]], tau)
        except ValueError as exc:
            raise ConfigError(f"params.bangs: {exc}") from exc
        ok, offenders = validate(sig)
        if not ok:
            raise ConfigError(f"params.bangs: dwell time violated at merged bangs {offenders}")
        sig = sig.merged()
    else:
        sig = sample_random(tau, len(modes), p["random"]["horizon"],
                            rng_seed=cfg["seed"], max_extra=p["random"]["max_extra"])
    x0 = ProjPoint.from_angle(p["x0_angle"]) if modes.dim == 2 else ProjPoint(np.ones(modes.dim))
    rows = []
    t_end = 0.0
    growth = 0.0
    point = x0
    for i, (mode, duration) in enumerate(sig.bangs):
        g, point = radial_log_growth(DwellSignal([(mode, duration)], tau), modes, point)
        growth += g
        t_end += duration
        theta = point.angle() if modes.dim == 2 else float("nan")
        rows.append((i, mode, float(duration), float(t_end), float(theta), float(growth)))
    ws.write_csv("trajectory.csv",
                 ["bang", "mode", "duration", "t_end", "theta_end", "cum_log_growth"],
                 rows)
    summary = {
        "signal": {"tau": sig.tau, "bangs": [[m, d] for m, d in sig.bangs]},
        "total_duration": sig.total_duration,
        "log_growth": growth,
        "rate": growth / sig.total_duration,
    }
    ws.write_json("result.json", summary)
    return summary


def _pdmp_config(cfg: dict, modes: ModeSet, tau: float) -> PdmpConfig:
    p = cfg["params"]
    try:
        return PdmpConfig(modes=modes, transition=p["transition"], rate=p["rate"],
                          tau=tau, seed=cfg["seed"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _trace_rows(trace):
    angles = trace.angles() if trace.points.shape[1] == 2 else None
    for n in range(trace.jump_times.size):
        theta = float(angles[n]) if angles is not None else float("nan")
        yield (n, float(trace.jump_times[n]), int(trace.labels[n]), theta,
               float(trace.log_growth[n]))


def _run_pdmp(cfg: dict, ws: _Workspace) -> dict:
    modes, tau = _system(cfg)
    p = cfg["params"]
    pc = _pdmp_config(cfg, modes, tau)
    q0 = ProjPoint.from_angle(p["x0_angle"]) if modes.dim == 2 else None
    trace = simulate(pc, p["n_steps"], q0=q0, l0=p["l0"])
    hist = invariant_histogram(trace, burn_in=p["burn_in"], n_bins=p["n_bins"])
    chi_t = chi_time_average(trace)

    ws.write_csv("trace.csv", ["n", "T_n", "L_n", "theta_n", "cum_log_growth"],
                 _trace_rows(trace))
    h = _PI / hist.n_bins
    prob = hist.probabilities()
    hist_rows = [(b, m, float(b * h), float((b + 1) * h), float(prob[b, m]))
                 for b in range(hist.n_bins) for m in range(prob.shape[1])]
    ws.write_csv("histogram.csv", ["bin", "mode", "theta_lo", "theta_hi", "prob"], hist_rows)
    ws.write_text("measure.svg", svg_measure_plot(prob))
    summary = {
        "chi_time_avg": chi_t.value,
        "chi_time_stderr": chi_t.stderr,
        "horizon": trace.horizon,
        "jumps_per_time": trace.n_steps / trace.horizon,
        "mean_dwell": float(trace.dwells().mean()),
    }
    ws.write_json("result.json", summary)
    return summary


def _run_chi_compare(cfg: dict, ws: _Workspace) -> dict:
    modes, tau = _system(cfg)
    p = cfg["params"]
    pc = _pdmp_config(cfg, modes, tau)
    q0 = ProjPoint.from_angle(p["x0_angle"]) if modes.dim == 2 else None
    trace = simulate(pc, p["n_steps"], q0=q0, l0=p["l0"])
    hist = invariant_histogram(trace, burn_in=p["burn_in"], n_bins=p["n_bins"])
    chi_t = chi_time_average(trace)
    chi_i = chi_integral(pc, hist, n_mc=p["n_mc"])
    norm = chi_integral(pc, hist, n_mc=p["n_mc"], integrand="one")
    per_jump = chi_per_jump(trace)
    sigma = math.hypot(chi_t.stderr, chi_i.stderr)
    summary = {
        "chi_time_avg": chi_t.value,
        "chi_integral": chi_i.value,
        "sigma": sigma,
        "agree": bool(abs(chi_t.value - chi_i.value) <= 3.0 * sigma),
        "normalization_check": norm.value,
        "normalization_stderr": norm.stderr,
        "chi_per_jump": per_jump.value,
        "jump_rate_factor": pc.rate / (pc.tau * pc.rate + 1.0),
    }
    ws.write_json("chi_compare.json", summary)
    return summary


_RUNNERS = {
    "example31": _run_example31,
    "control-set": _run_control_set,
    "lyapunov": _run_lyapunov,
    "simulate": _run_simulate,
    "pdmp": _run_pdmp,
    "chi-compare": _run_chi_compare,
}


def run(config: dict, output_dir: Path | None = None) -> dict:
    """Execute a resolved config; returns the summary written to disk."""
    resolved = resolve_config(config)
    ws = _Workspace(Path(output_dir) if output_dir is not None else Path(resolved["output_dir"]))
    ws.prepare()
    try:
        summary = _RUNNERS[resolved["command"]](resolved, ws)
        manifest = {
            "config": resolved,
            "versions": {
                "dwellsys": __version__,
                "numpy": np.__version__,
                "python": "%d.%d.%d" % sys.version_info[:3],
            },
        }
        ws.write_json("run_manifest.json", manifest)
    except BaseException:
        ws.cleanup()
        raise
    return summary


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="dwellsys",
        description="Dwell-time switched systems toolkit: run one command from a JSON config.")
    parser.add_argument("config", help="path to a JSON config file (or a run manifest)")
    parser.add_argument("--version", action="version", version=f"dwellsys {__version__}")
    args = parser.parse_args(argv)
    try:
        raw = load_config(Path(args.config))
        run(raw)
    except ConfigError as exc:
        print(f"error: config: {_one_line(exc)}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"error: numeric: {_one_line(exc)}", file=sys.stderr)
        return 3
    except Exception as exc:  # internal assertion / unexpected failure
        print(f"error: internal: {type(exc).__name__}: {_one_line(exc)}", file=sys.stderr)
        return 4
    return 0


def _one_line(exc) -> str:
    return " ".join(str(exc).split())


if __name__ == "__main__":
    sys.exit(main())
