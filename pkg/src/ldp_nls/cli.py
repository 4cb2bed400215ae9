"""``ldp-nls`` command line: declarative TOML experiments with deterministic outputs.

Each run reads the schema defaults below, then the ``--config`` file, then the
``LDPNLS_SEED`` environment variable, then ``--set`` overrides and finally the
``--seed``/``--threads``/``--out`` flags.  Data files never contain timestamps,
so identical configs give byte-identical CSV and JSON-lines output.

Exit codes: 0 success, 1 verification mismatch, 2 configuration error,
3 numerical divergence, 4 filesystem error.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys
import time
from pathlib import Path
from typing import Any

import numpy as np
import tomli_w

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .dynamics import FlowParams, Sign, resonant_evolve
from .errors import ConfigError, DivergenceError, LdpNlsError
from .io import atomic_write_text, verify_manifest, write_csv, write_jsonl, write_manifest
from .ldp_core import cgf_curve, sharpness_products
from .montecarlo import Dynamics, Norm, TimeRule, error_bound_study, ldp_sweep, tail_naive, tail_tilted
from .solver import Scheme, SolverConfig, solve
from .spectral_core import CoeffKind, fl_norm, make_coeffs, mass, sample_initial_data, sup_norm

__all__ = ["SCHEMA", "default_config", "load_config", "apply_override", "run", "main"]

EXIT_OK, EXIT_MISMATCH, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_FS = 0, 1, 2, 3, 4

# (default, description[, allowed values]).  Sentinels: 0 for "automatic" sizes,
# -1 for an automatically selected tilt.
SCHEMA: dict[str, Any] = {
    "seed": (0, "master seed for every random draw in the run"),
    "threads": (0, "worker threads for Monte Carlo blocks; 0 uses all available cores"),
    "out": ("ldp-out", "output directory"),
    "coeffs": {
        "kind": ("exponential", "coefficient family", [k.value for k in CoeffKind]),
        "a": (1.0, "amplitude a"),
        "b": (1.0, "decay rate b (exponential, gaussian)"),
        "p": (1.0, "power p (powerlaw)"),
        "n_modes": (32, "truncation N; modes k = -N..N"),
        "values": ([], "explicit coefficients, 2N+1 entries (kind = explicit)"),
    },
    "flow": {
        "eps": (0.1, "nonlinearity strength epsilon"),
        "eps_grid": ([0.2, 0.1, 0.05, 0.02], "decreasing epsilon grid for sweeps"),
        "sign": ("defocusing", "nonlinearity sign", ["defocusing", "focusing"]),
        "gauge_power": (2, "power q in the mass gauge exp(2 i t eps^q m)", [1, 2]),
    },
    "solver": {
        "scheme": ("strang", "time integrator", [s.value for s in Scheme]),
        "dt": (0.0, "time step; 0 picks min(0.01, 0.1 / (eps^2 ||u0||_FL1^2))"),
        "n_grid": (0, "FFT grid size (power of two); 0 picks the smallest alias-free grid"),
        "dealias": (True, "apply the 2/3 rule after each nonlinear substep"),
        "record_every": (10, "steps between recorded snapshots"),
    },
    "sample": {
        "count": (1, "number of initial data; sample i uses seed + i"),
    },
    "evolve": {
        "t_end": (1.0, "integration time"),
    },
    "cgf": {
        "lam": (1.0, "lambda"),
        "eps_values": ([1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6], "decreasing epsilon values"),
    },
    "tail": {
        "z0": (1.0, "level: the event is {norm >= z0 / sqrt(eps)}"),
        "estimator": ("tilted", "Monte Carlo estimator", ["naive", "tilted"]),
        "dynamics": ("linear", "flow applied before measuring", [d.value for d in Dynamics]),
        "norm": ("fl1", "measured quantity", [n.value for n in Norm]),
        "t": (0.0, "evaluation time"),
        "theta": (-1.0, "tilt; -1 centres the tilted law on the threshold"),
        "n_samples": (100_000, "number of samples"),
        "block_size": (8192, "samples per RNG block; part of the reproducibility key"),
    },
    "sweep": {
        "time_rule": ("fixed", "evaluation time as a function of eps", ["fixed", "critical", "log"]),
        "time_scale": (0.0, "scale of the time rule"),
        "n_samples": (20_000, "samples per grid point"),
    },
    "error_bound": {
        "eps_list": ([0.1, 0.05], "epsilon values"),
        "delta": (0.25, "bound exponent: eps^(-1/2 + delta)"),
        "time_rule": ("critical", "final time as a function of eps", ["fixed", "critical", "log"]),
        "time_scale": (1.0, "scale of the time rule"),
        "n_samples": (100, "random data per epsilon"),
        "n_times": (11, "equispaced comparison times"),
        "block_size": (50, "samples per RNG block"),
        "checkpoint": (0.0, "window width in units of 1/eps for windowed maxima; 0 disables"),
    },
    "sharpness": {
        "levels": ([10, 100, 1000, 10000, 100000], "truncation levels N"),
    },
}


def _is_leaf(spec) -> bool:
    return isinstance(spec, tuple)


def default_config() -> dict:
    def build(node):
        return {k: (copy.deepcopy(v[0]) if _is_leaf(v) else build(v)) for k, v in node.items()}

    return build(SCHEMA)


def _check_value(value, spec, path: str):
    default = spec[0]
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, str):
        ok = isinstance(value, str)
    else:
        elem = type(default[0]) if default else float
        ok = isinstance(value, list) and all(
            isinstance(x, (int, float)) and not isinstance(x, bool) and (elem is float or isinstance(x, int))
            for x in value
        )
        if ok and elem is float:
            value = [float(x) for x in value]
    if not ok:
        raise ConfigError(f"expected {type(default).__name__}, got {value!r}", path)
    if len(spec) > 2 and value not in spec[2]:
        raise ConfigError(f"must be one of {spec[2]}, got {value!r}", path)
    return value


def _merge(cfg: dict, data: dict, schema: dict, prefix: str = ""):
    for key, value in data.items():
        path = f"{prefix}{key}"
        if key not in schema:
            raise ConfigError("unknown key", path)
        spec = schema[key]
        if _is_leaf(spec):
            cfg[key] = _check_value(value, spec, path)
        elif not isinstance(value, dict):
            raise ConfigError("expected a table", path)
        else:
            _merge(cfg[key], value, spec, path + ".")


def load_config(path=None) -> dict:
    cfg = default_config()
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML: {exc}", str(path)) from exc
        _merge(cfg, data, SCHEMA)
    return cfg


def _leaf_paths(node=SCHEMA, prefix=()):
    for k, v in node.items():
        if _is_leaf(v):
            yield prefix + (k,)
        else:
            yield from _leaf_paths(v, prefix + (k,))


def _resolve_key(key: str) -> tuple:
    if "." in key:
        parts = tuple(key.split("."))
        if parts not in set(_leaf_paths()):
            raise ConfigError("unknown key", key)
        return parts
    hits = [p for p in _leaf_paths() if p[-1] == key]
    if not hits:
        raise ConfigError("unknown key", key)
    if len(hits) > 1:
        raise ConfigError(f"ambiguous; qualify as one of {['.'.join(h) for h in hits]}", key)
    return hits[0]


def _parse_scalar(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_override(cfg: dict, assignment: str) -> None:
    """Apply ``key=value``; ``key`` is a dotted path or a unique leaf name."""
    if "=" not in assignment:
        raise ConfigError("expected KEY=VALUE", assignment)
    key, text = assignment.split("=", 1)
    path = _resolve_key(key.strip())
    node, spec = cfg, SCHEMA
    for part in path[:-1]:
        node, spec = node[part], spec[part]
    node[path[-1]] = _check_value(_parse_scalar(text.strip()), spec[path[-1]], ".".join(path))


# ---------------------------------------------------------------- experiments


def _coeffs(cfg):
    cc = cfg["coeffs"]
    if cc["kind"] == "explicit":
        if not cc["values"]:
            raise ConfigError("explicit kind needs a non-empty values list", "coeffs.values")
        return make_coeffs("explicit", cc["values"])
    params = {"a": cc["a"], "b": cc["b"]} if cc["kind"] in ("exponential", "gaussian") else {"a": cc["a"], "p": cc["p"]}
    return make_coeffs(cc["kind"], params, cc["n_modes"])


def _solver_cfg(cfg):
    s = cfg["solver"]
    return SolverConfig(
        dt=s["dt"] or None,
        n_grid=s["n_grid"] or None,
        dealias=s["dealias"],
        scheme=s["scheme"],
        record_every=s["record_every"],
    )


def _threads(cfg):
    return cfg["threads"] or os.cpu_count() or 1


def _run_sample(cfg, out: Path):
    c = _coeffs(cfg)
    rows, summary = [], []
    for i in range(cfg["sample"]["count"]):
        seed = cfg["seed"] + i
        s, f = sample_initial_data(c, seed)
        for j, k in enumerate(c.wavenumbers):
            rows.append((i, int(k), c.values[j], s.amplitudes[j], s.phases[j], f.amps[j].real, f.amps[j].imag))
        summary.append(
            {"sample": i, "seed": seed, "fl1": fl_norm(f, 1), "fl2": fl_norm(f, 2), "mass": mass(f), "sup": sup_norm(f)}
        )
    return [
        write_csv(out / "samples.csv", ["sample", "k", "c_k", "R_k", "phi_k", "re", "im"], rows),
        write_jsonl(out / "samples.jsonl", summary),
    ], len(summary)


def _run_evolve(cfg, out: Path):
    c = _coeffs(cfg)
    fl = cfg["flow"]
    sample, u0 = sample_initial_data(c, cfg["seed"])
    p = FlowParams.for_field(u0, fl["eps"], Sign.parse(fl["sign"]), fl["gauge_power"])
    traj = solve(u0, p, _solver_cfg(cfg), cfg["evolve"]["t_end"])
    errs = []
    for f in traj.fields:
        app = resonant_evolve(sample, c, p, f.time - u0.time).pad(f.n_modes).amps
        errs.append(float(np.sum(np.abs(f.amps - app))))
    traj.fl1_error_vs_app = np.array(errs)
    final = traj.final
    files = [
        write_csv(out / "trajectory.csv", ["t", "mass", "fl1", "sup", "fl1_error_vs_app"], traj.table()),
        write_csv(
            out / "final_field.csv",
            ["k", "re", "im"],
            [(int(k), a.real, a.imag) for k, a in zip(final.wavenumbers, final.amps)],
        ),
        write_jsonl(
            out / "evolve.jsonl",
            [
                {
                    "seed": cfg["seed"],
                    "eps": fl["eps"],
                    "sign": fl["sign"],
                    "t_end": cfg["evolve"]["t_end"],
                    "mass_drift": float(abs(traj.mass[-1] - traj.mass[0]) / max(traj.mass[0], 1e-300)),
                    "warnings": traj.warnings,
                }
            ],
        ),
    ]
    return files, 1


def _run_cgf(cfg, out: Path):
    c = _coeffs(cfg)
    curve = cgf_curve(c, cfg["cgf"]["lam"], cfg["cgf"]["eps_values"])
    return [
        write_csv(out / "cgf.csv", ["eps", "scaled_cgf", "limit", "abs_error"], curve.rows()),
        write_jsonl(
            out / "cgf.jsonl",
            [{"lam": curve.lam, "n_modes": curve.n_modes, "limit": curve.limit, "dominating_bound": curve.bound}],
        ),
    ], 0


def _tail_kw(cfg):
    tl = cfg["tail"]
    return {
        "dynamics": tl["dynamics"],
        "norm": tl["norm"],
        "cfg": _solver_cfg(cfg),
        "seed": cfg["seed"],
        "sign": Sign.parse(cfg["flow"]["sign"]),
        "block_size": tl["block_size"],
        "threads": _threads(cfg),
    }


def _run_tail(cfg, out: Path):
    c = _coeffs(cfg)
    tl = cfg["tail"]
    kw = _tail_kw(cfg)
    if tl["estimator"] == "naive":
        est = tail_naive(c, cfg["flow"]["eps"], tl["z0"], t=tl["t"], n_samples=tl["n_samples"], **kw)
    else:
        theta = None if tl["theta"] < 0 else tl["theta"]
        est = tail_tilted(c, cfg["flow"]["eps"], tl["z0"], t=tl["t"], n_samples=tl["n_samples"], theta=theta, **kw)
    return [write_jsonl(out / "tail.jsonl", [est.record()])], est.n_samples


def _run_sweep(cfg, out: Path):
    c = _coeffs(cfg)
    sw = cfg["sweep"]
    kw = _tail_kw(cfg)
    res = ldp_sweep(
        c,
        cfg["tail"]["z0"],
        cfg["flow"]["eps_grid"],
        t_rule=TimeRule(sw["time_rule"], sw["time_scale"]),
        n_samples=sw["n_samples"],
        **kw,
    )
    records = [dict(r["estimate"].record(), eps_log_p=r["eps_log_p"], gap=r["gap"]) for r in res.rows]
    files = [
        write_csv(
            out / "sweep.csv", ["eps", "p_hat", "stderr", "eps_log_p", "rate_prediction", "gap"], res.summary()
        ),
        write_jsonl(out / "sweep.jsonl", records + [{"slope_log_p_vs_inv_eps": res.slope}]),
    ]
    return files, sw["n_samples"] * len(res.rows)


def _run_error_bound(cfg, out: Path):
    c = _coeffs(cfg)
    eb = cfg["error_bound"]
    rep = error_bound_study(
        c,
        eb["eps_list"],
        eb["delta"],
        TimeRule(eb["time_rule"], eb["time_scale"]),
        eb["n_samples"],
        cfg=_solver_cfg(cfg),
        seed=cfg["seed"],
        n_times=eb["n_times"],
        sign=Sign.parse(cfg["flow"]["sign"]),
        block_size=eb["block_size"],
        threads=_threads(cfg),
        checkpoint=eb["checkpoint"] or None,
    )
    per_sample = [(r["eps"], j, float(v)) for r in rep.rows for j, v in enumerate(r["per_sample_max"])]
    records = [
        {k: v for k, v in r.items() if k not in ("per_sample_max", "times")} | {"delta": rep.delta} for r in rep.rows
    ]
    files = [
        write_csv(
            out / "error_bound.csv",
            ["eps", "t_end", "bound", "n_samples", "n_failed", "violations", "max_error", "normalized_max"],
            rep.summary(),
        ),
        write_csv(out / "error_samples.csv", ["eps", "sample", "max_error"], per_sample),
        write_jsonl(out / "error_bound.jsonl", records),
    ]
    return files, eb["n_samples"] * len(rep.rows)


def _run_sharpness(cfg, out: Path):
    c = _coeffs(cfg)
    rows = sharpness_products(c, cfg["sharpness"]["levels"])
    return [write_csv(out / "sharpness.csv", ["N", "product", "log_product"], rows)], 0


EXPERIMENTS = {
    "sample": _run_sample,
    "evolve": _run_evolve,
    "cgf": _run_cgf,
    "tail": _run_tail,
    "sweep": _run_sweep,
    "error-bound": _run_error_bound,
    "sharpness": _run_sharpness,
}


def run(command: str, cfg: dict) -> list[Path]:
    """Execute one experiment and write its data files, effective config and manifest."""
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    files, n = EXPERIMENTS[command](cfg, out)
    # the effective config, defaults applied; usable as --config for a rerun
    files = list(files) + [atomic_write_text(out / "config.toml", tomli_w.dumps(cfg))]
    write_manifest(out, dict(cfg, experiment=command), files, __version__, time.perf_counter() - start, n)
    return files


# ---------------------------------------------------------------- entry point


def _error(code: int, kind: str, message: str, **extra) -> int:
    record = {"status": "error", "exit_code": code, "kind": kind, "message": message} | extra
    print(json.dumps(record), file=sys.stderr)
    return code


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ldp-nls", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="TOML experiment file")
        sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="K=V")
        sp.add_argument("--out", type=Path)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int)
    vp = sub.add_parser("verify")
    vp.add_argument("manifest", type=Path, help="manifest file or run directory")
    return ap


def _verify(path: Path) -> int:
    try:
        results = verify_manifest(path)
    except FileNotFoundError as exc:
        return _error(EXIT_FS, "not_found", str(exc), path=str(path))
    bad = 0
    for name, status in results:
        print(f"{status.upper():8s} {name}")
        bad += status != "ok"
    print(json.dumps({"status": "ok" if not bad else "mismatch", "files": len(results), "failed": bad}))
    return EXIT_OK if not bad else EXIT_MISMATCH


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "verify":
        return _verify(args.manifest)
    try:
        cfg = load_config(args.config)
        env_seed = os.environ.get("LDPNLS_SEED")
        if env_seed is not None:
            try:
                cfg["seed"] = int(env_seed)
            except ValueError:
                raise ConfigError(f"not an integer: {env_seed!r}", "LDPNLS_SEED") from None
        for item in args.overrides:
            apply_override(cfg, item)
        for flag in ("seed", "threads"):
            if getattr(args, flag) is not None:
                cfg[flag] = getattr(args, flag)
        if args.out is not None:
            cfg["out"] = str(args.out)
        if cfg["seed"] < 0 or cfg["seed"] >= 2**64:
            raise ConfigError("must be an unsigned 64-bit integer", "seed")
        if cfg["threads"] < 0:
            raise ConfigError("must be >= 0", "threads")
    except ConfigError as exc:
        return _error(EXIT_CONFIG, "config", str(exc), field=exc.path)
    except OSError as exc:
        return _error(EXIT_FS, "filesystem", str(exc), path=getattr(exc, "filename", None))
    try:
        files = run(args.command, cfg)
    except DivergenceError as exc:
        return _error(EXIT_DIVERGENCE, "divergence", str(exc), step=exc.step, command=args.command)
    except ConfigError as exc:
        return _error(EXIT_CONFIG, "config", str(exc), field=exc.path)
    except LdpNlsError as exc:
        return _error(EXIT_CONFIG, type(exc).__name__, str(exc))
    except OSError as exc:
        return _error(EXIT_FS, "filesystem", str(exc), path=getattr(exc, "filename", None))
    for f in files:
        print(f)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
