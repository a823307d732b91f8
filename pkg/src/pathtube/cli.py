"""Experiment runner.

Flat key-value configs with dotted sections drive the validation
experiments: propagator | convergence | probe | theta-scan | dump-paths.
Each subcommand writes a result.json plus CSV data files to --out.

Exit codes: 0 success, 2 config error, 3 numeric failure, 4 strict-mode
acceptance failure.
"""

from __future__ import annotations

import argparse
import glob as globmod
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import dynamics, geometry, integrator, oracles, tube
from .errors import ConfigError, PathTubeError

# ---------------------------------------------------------------------------
# Config schema: key -> (kind, default). Unknown keys are rejected.
# Optional keys (default None) resolve to their owning type's defaults and are
# emitted resolved, so load -> emit -> load is idempotent.

_SCHEMA = {
    "chart.dim": ("int", 1),
    "chart.metric": ("choice:flat", "flat"),
    "chart.potential": ("choice:free,harmonic,quartic,table", "free"),
    "chart.omega": ("float", 1.0),
    "chart.lambda": ("float", 1.0),
    "chart.table": ("str", ""),
    "endpoints.a": ("floats", [0.0]),
    "endpoints.b": ("floats", [0.0]),
    "time.horizon": ("float", 1.0),
    "quantum.hbar": ("float", 1.0),
    "tube.radius": ("ofloat", None),
    "tube.eta": ("ofloat", None),
    "tube.delta_e": ("ofloat", None),
    "tube.coercivity": ("float", 1.0),
    "tube.kappa": ("float", 0.0),
    "tube.barrier_power": ("int", 2),
    "sde.sigma": ("float", 1.0),
    "sde.xi0": ("float", 0.0),
    "sde.steps": ("int", 256),
    "mc.samples": ("int", 100000),
    "mc.seed": ("int", 42),
    "mc.chunk": ("int", 10000),
    "trajectory.momentum_seed": ("ofloats", None),
    "experiment.theta": ("thetas", [0.5, 1.0, 2.0]),
    "experiment.series_order": ("int", 10),
    "experiment.partition_rungs": ("int", 4),
    "experiment.paths": ("str", ""),
    "experiment.oracle": ("choice:auto,heat,mehler,pde,none", "auto"),
}


def _parse_theta(tok: str) -> complex:
    tok = tok.strip().lower()
    if tok in ("i", "+i"):
        return 1j
    if tok == "-i":
        return -1j
    try:
        return complex(tok.replace("i", "j"))
    except ValueError as exc:
        raise ConfigError(f"cannot parse theta value {tok!r}") from exc


def _format_theta(c: complex) -> str:
    c = complex(c)
    if c.imag == 0.0:
        return repr(c.real)
    if c.real == 0.0:
        if c.imag == 1.0:
            return "i"
        if c.imag == -1.0:
            return "-i"
        return f"{c.imag!r}i"
    sign = "+" if c.imag >= 0 else ""
    return f"{c.real!r}{sign}{c.imag!r}i"


def _parse_value(key: str, kind: str, raw: str, lineno: int):
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "ofloat":
            return None if raw.lower() in ("", "none", "auto") else float(raw)
        if kind == "str":
            return raw
        if kind == "floats":
            return [float(t) for t in raw.split(",") if t.strip() != ""]
        if kind == "ofloats":
            if raw.lower() in ("", "none", "auto"):
                return None
            return [float(t) for t in raw.split(",") if t.strip() != ""]
        if kind == "thetas":
            return [_parse_theta(t) for t in raw.split(",") if t.strip() != ""]
        if kind.startswith("choice:"):
            allowed = kind.split(":", 1)[1].split(",")
            if raw not in allowed:
                raise ConfigError(
                    f"line {lineno}: {key} must be one of {allowed}, got {raw!r}"
                )
            return raw
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: bad value for {key}: {raw!r} ({exc})") from exc
    raise ConfigError(f"internal schema error for {key}")


def _format_value(key: str, value) -> str:
    kind = _SCHEMA[key][0]
    if kind in ("floats", "ofloats"):
        return ",".join(repr(float(v)) for v in value)
    if kind == "thetas":
        return ",".join(_format_theta(v) for v in value)
    if kind in ("float", "ofloat"):
        return repr(float(value))
    return str(value)


@dataclass
class ExperimentConfig:
    """Resolved experiment configuration (all defaults filled)."""

    values: dict

    def __getitem__(self, key):
        return self.values[key]

    # -- construction of the library objects ------------------------------

    def chart(self) -> geometry.MetricChart:
        dim = self["chart.dim"]
        if dim < 1:
            raise ConfigError("chart.dim must be >= 1")
        kind = self["chart.potential"]
        if kind == "free":
            return geometry.flat_chart(dim, name="free")
        if kind == "harmonic":
            w2 = self["chart.omega"] ** 2
            return geometry.MetricChart(
                dim=dim,
                potential=lambda q: 0.5 * w2 * np.sum(np.asarray(q) ** 2, axis=-1),
                grad_potential=lambda q: w2 * np.asarray(q),
                name="harmonic",
            )
        if kind == "quartic":
            lam = self["chart.lambda"]
            return geometry.MetricChart(
                dim=dim,
                potential=lambda q: 0.25 * lam * np.sum(np.asarray(q) ** 2, axis=-1) ** 2,
                grad_potential=lambda q: lam * np.sum(np.asarray(q) ** 2, axis=-1)[..., None] * np.asarray(q),
                name="quartic",
            )
        # table potential: 1-D interpolation of a q,V file
        if dim != 1:
            raise ConfigError("table potentials are 1-D")
        fname = self["chart.table"]
        if not fname:
            raise ConfigError("chart.table file required for the table potential")
        try:
            data = np.loadtxt(fname, delimiter=",", skiprows=1)
        except OSError as exc:
            raise ConfigError(f"cannot read potential table {fname!r}: {exc}") from exc
        if data.ndim != 2 or data.shape[1] != 2:
            raise ConfigError("potential table must have two columns q,V")
        qs, vs = data[:, 0], data[:, 1]
        return geometry.MetricChart(
            dim=1,
            potential=lambda q: np.interp(np.asarray(q)[..., 0], qs, vs),
            name="table",
        )

    def solve_trajectory(self) -> geometry.ClassicalTrajectory:
        seed = self["trajectory.momentum_seed"]
        return geometry.solve_classical_trajectory(
            self.chart(),
            np.asarray(self["endpoints.a"], dtype=float),
            np.asarray(self["endpoints.b"], dtype=float),
            self["time.horizon"],
            steps=self["sde.steps"],
            momentum_seed=None if seed is None else np.asarray(seed, dtype=float),
        )

    def tube_spec(self, traj) -> tube.TubeSpec:
        return tube.TubeSpec(
            trajectory=traj,
            hbar=self["quantum.hbar"],
            coercivity=self["tube.coercivity"],
            eta_action=self["tube.eta"],
            radius=self["tube.radius"],
            delta_e=self["tube.delta_e"],
        )

    def sde_params(self) -> dynamics.SDEParams:
        return dynamics.SDEParams(
            sigma=self["sde.sigma"],
            xi=self["sde.xi0"],
            kappa=self["tube.kappa"],
            barrier_power=self["tube.barrier_power"],
        )

    # -- emission ----------------------------------------------------------

    def effective_values(self) -> dict:
        """Values with the tube defaults resolved (emission is idempotent)."""
        out = dict(self.values)
        hbar = out["quantum.hbar"]
        if out["tube.eta"] is None:
            out["tube.eta"] = 0.5 * hbar
        if out["tube.radius"] is None:
            out["tube.radius"] = tube.default_radius(hbar, out["tube.coercivity"])
        if out["tube.delta_e"] is None:
            out["tube.delta_e"] = out["tube.eta"] / out["time.horizon"]
        return out

    def effective_text(self) -> str:
        vals = self.effective_values()
        lines = []
        for key in _SCHEMA:
            v = vals[key]
            if v is None:
                continue
            lines.append(f"{key} = {_format_value(key, v)}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.effective_text().encode()).hexdigest()[:12]


def load_config_text(text: str) -> ExperimentConfig:
    values = {k: v for k, (_, v) in _SCHEMA.items()}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in stripped.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, _SCHEMA[key][0], raw, lineno)
    cfg = ExperimentConfig(values=values)
    _validate_config(cfg)
    return cfg


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return load_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc


def _validate_config(cfg: ExperimentConfig) -> None:
    v = cfg.values
    positives = ["time.horizon", "quantum.hbar", "tube.coercivity", "sde.sigma"]
    for key in positives:
        if v[key] <= 0.0:
            raise ConfigError(f"{key} must be positive")
    for key in ("tube.radius", "tube.eta", "tube.delta_e"):
        if v[key] is not None and v[key] <= 0.0:
            raise ConfigError(f"{key} must be positive when given")
    if v["tube.kappa"] < 0.0:
        raise ConfigError("tube.kappa must be non-negative")
    if v["tube.barrier_power"] < 2:
        raise ConfigError("tube.barrier_power must be >= 2")
    if v["sde.steps"] < 16:
        raise ConfigError("sde.steps must be >= 16")
    if v["mc.samples"] < 1 or v["mc.chunk"] < 1:
        raise ConfigError("mc.samples and mc.chunk must be positive")
    if v["mc.seed"] < 0:
        raise ConfigError("mc.seed must be a non-negative integer")
    if len(v["endpoints.a"]) != v["chart.dim"] or len(v["endpoints.b"]) != v["chart.dim"]:
        raise ConfigError("endpoint dimension must match chart.dim")
    if v["experiment.series_order"] > 30 or v["experiment.series_order"] < 0:
        raise ConfigError("experiment.series_order must lie in [0, 30]")
    if v["experiment.partition_rungs"] < 4:
        raise ConfigError("experiment.partition_rungs must be >= 4")


# ---------------------------------------------------------------------------
# Result emission helpers.

def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _result_payload(cfg: ExperimentConfig, est: integrator.KernelEstimate, **extra) -> dict:
    body = est.to_json_dict()
    body["config_hash"] = cfg.config_hash()
    body["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    body.update(extra)
    return body


def _dump_ensemble_paths(ensemble, outdir: str, limit: int = 100) -> None:
    pdir = os.path.join(outdir, "paths")
    os.makedirs(pdir, exist_ok=True)
    manifest = []
    for sample in ensemble.iter_samples():
        if sample.index >= limit:
            break
        p = tube.DiscretePath(grid=ensemble.grid, points=sample.x)
        fname = os.path.join(pdir, f"sample_{sample.index:05d}.csv")
        tube.save_path_csv(p, fname)
        manifest.append({
            "index": sample.index,
            "file": os.path.basename(fname),
            "log_girsanov": sample.log_weight,
            "in_tube": bool(sample.in_tube),
        })
    _write_json(os.path.join(pdir, "manifest.json"), {"samples": manifest})


# ---------------------------------------------------------------------------
# Subcommands.

def run_propagator(cfg: ExperimentConfig, outdir: str, strict: bool = False,
                   dump_paths: bool = False) -> int:
    os.makedirs(outdir, exist_ok=True)
    chart = cfg.chart()
    traj = cfg.solve_trajectory()
    spec = cfg.tube_spec(traj)
    params = cfg.sde_params()
    a = np.asarray(cfg["endpoints.a"], dtype=float)
    b = np.asarray(cfg["endpoints.b"], dtype=float)
    est, chunks = integrator.propagator_chunked(
        chart, spec, params, a, b, cfg["mc.samples"], "euclidean",
        seed=cfg["mc.seed"], chunk_size=cfg["mc.chunk"],
    )

    oracle_kind = cfg["experiment.oracle"]
    if oracle_kind == "auto":
        oracle_kind = {"free": "heat", "harmonic": "mehler"}.get(chart.name, "pde")
    oracle_value, tolerance = _propagator_oracle(cfg, chart, spec, params, a, b, oracle_kind)

    rel_err = None
    se_multiples = None
    ok = True
    if oracle_value is not None:
        gap = abs(est.value - oracle_value)
        rel_err = gap / abs(oracle_value)
        se_multiples = gap / est.std_error if est.std_error > 0.0 else (
            0.0 if gap <= 1e-12 else math.inf)
        ok = (se_multiples <= 3.0) or (rel_err <= tolerance)

    with open(os.path.join(outdir, "chunks.csv"), "w", encoding="utf-8") as fh:
        fh.write("chunk,n_samples,partial_re,partial_im,partial_se\n")
        pref = est.metadata["prefactor"]
        for i, c in enumerate(chunks):
            fh.write(f"{i},{c.count},{pref * c.mean.real!r},"
                     f"{pref * c.mean.imag!r},{pref * c.std_error!r}\n")

    payload = _result_payload(
        cfg, est,
        oracle=oracle_kind,
        oracle_value=None if oracle_value is None else float(oracle_value),
        relative_error=None if rel_err is None else float(rel_err),
        se_multiples=None if se_multiples is None else float(se_multiples),
        within_tolerance=bool(ok),
    )
    _write_json(os.path.join(outdir, "result.json"), payload)
    if dump_paths:
        ens = dynamics.DisplacementBridgeEnsemble(chart, spec, params,
                                                  cfg["mc.seed"], cfg["mc.samples"])
        _dump_ensemble_paths(ens, outdir)
    if strict and not ok:
        return 4
    return 0


def _propagator_oracle(cfg, chart, spec, params, a, b, kind):
    horizon = cfg["time.horizon"]
    if kind == "none":
        return None, math.inf
    if kind == "heat":
        return oracles.heat_kernel(a, b, horizon, params.sigma, chart.dim), 1e-10
    if kind == "mehler":
        if chart.dim != 1:
            raise ConfigError("mehler oracle is 1-D")
        return oracles.mehler_kernel(float(a[0]), float(b[0]), horizon,
                                     cfg["chart.omega"], spec.hbar), 0.02
    if kind == "pde":
        if chart.dim != 1:
            raise ConfigError("pde oracle is 1-D")
        width = 0.05
        span = abs(float(b[0] - a[0]))
        lbox = 2.0 * spec.radius + span + 5.0 * params.sigma * math.sqrt(horizon)
        xs = np.linspace(float(min(a[0], b[0])) - lbox, float(max(a[0], b[0])) + lbox, 1201)
        grid = oracles.PDEGrid(
            x=xs, dt=horizon / 400.0, theta=1.0,
            v_e=lambda t, q: chart.potential_at(q[:, None]) / spec.hbar,
            sigma=params.sigma, t_final=horizon,
        )
        u0 = oracles.solve_backward_pde(
            grid, lambda q: oracles.heat_kernel(q, float(b[0]), width ** 2, params.sigma, 1))
        val = float(np.interp(float(a[0]), xs, np.real(u0)))
        return val, 0.05
    raise ConfigError(f"unknown oracle {kind!r}")


def run_convergence(cfg: ExperimentConfig, outdir: str, strict: bool = False,
                    dump_paths: bool = False) -> int:
    os.makedirs(outdir, exist_ok=True)
    chart = cfg.chart()
    traj = cfg.solve_trajectory()
    spec = cfg.tube_spec(traj)
    params = cfg.sde_params()
    frame = geometry.parallel_frame(chart, traj)
    rungs = cfg["experiment.partition_rungs"]
    steps = cfg["sde.steps"]
    if steps % (2 ** (rungs - 1)) != 0:
        raise ConfigError(
            f"sde.steps = {steps} must be divisible by 2^(rungs-1) = {2 ** (rungs - 1)}"
        )
    ens = dynamics.TubeEnsemble(chart, frame, spec, params,
                                cfg["mc.seed"], cfg["mc.samples"])
    rows = []
    for r in range(rungs):
        stride = 2 ** (rungs - 1 - r)
        part = integrator.PartitionSpec.from_stride(traj.grid, stride)
        res = integrator.riemann_product(ens, part)
        rows.append((res.mesh, res.action_gap, res.action_gap_se,
                     res.estimate_gap, res.bound_satisfied,
                     res.partition_estimate, res.reference_estimate))

    with open(os.path.join(outdir, "convergence.csv"), "w", encoding="utf-8") as fh:
        fh.write("mesh,e_abs_gap,e_abs_gap_se,estimate_gap,bound_ok,"
                 "ip_re,ip_im,imu_re,imu_im\n")
        for mesh, gap, gap_se, egap, ok, ip, imu in rows:
            fh.write(f"{mesh!r},{gap!r},{gap_se!r},{egap!r},{int(ok)},"
                     f"{ip.value.real!r},{ip.value.imag!r},"
                     f"{imu.value.real!r},{imu.value.imag!r}\n")

    meshes = np.array([r[0] for r in rows])
    gaps = np.array([max(r[1], 1e-300) for r in rows])
    if np.all(gaps < 1e-15):
        fitted_order = math.inf  # constant density: the gap is identically zero
    else:
        fitted_order = float(np.polyfit(np.log(meshes), np.log(gaps), 1)[0])
    bounds_ok = all(r[4] for r in rows)
    payload = _result_payload(
        cfg, rows[-1][6],
        fitted_order=None if math.isinf(fitted_order) else fitted_order,
        bounds_ok=bool(bounds_ok),
        rungs=rungs,
    )
    _write_json(os.path.join(outdir, "result.json"), payload)
    if dump_paths:
        _dump_ensemble_paths(ens, outdir)
    if strict and (not bounds_ok or (math.isfinite(fitted_order) and fitted_order < 0.7)):
        return 4
    return 0


def run_probe(cfg: ExperimentConfig, outdir: str, strict: bool = False,
              dump_paths: bool = False) -> int:
    os.makedirs(outdir, exist_ok=True)
    chart = cfg.chart()
    traj = cfg.solve_trajectory()
    spec = cfg.tube_spec(traj)
    pattern = cfg["experiment.paths"]
    if not pattern:
        raise ConfigError("experiment.paths must name the candidate path CSVs")
    files = []
    for tok in pattern.split(","):
        tok = tok.strip()
        if not tok:
            continue
        hits = sorted(globmod.glob(tok))
        if not hits:
            raise ConfigError(f"no path files match {tok!r}")
        files.extend(hits)

    ref = tube.trajectory_path(traj)
    with open(os.path.join(outdir, "classification.csv"), "w", encoding="utf-8") as fh:
        fh.write("file,phi,min_margin,abs_action_deviation,h1_distance,admissible\n")
        for fname in files:
            p = tube.load_path_csv(fname)
            res = tube.admissibility_probe(chart, p, spec)
            ds, _ = tube.action_deviation(chart, p, spec)
            h1 = tube.h1_distance(p, ref)
            phi = "DIVERGENT" if math.isinf(res.value) else repr(res.value)
            fh.write(f"{os.path.basename(fname)},{phi},{res.min_margin!r},"
                     f"{abs(ds)!r},{h1!r},{int(res.admissible)}\n")
    _write_json(os.path.join(outdir, "result.json"), {
        "n_paths": len(files),
        "config_hash": cfg.config_hash(),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    })
    return 0


def run_theta_scan(cfg: ExperimentConfig, outdir: str, strict: bool = False,
                   dump_paths: bool = False) -> int:
    os.makedirs(outdir, exist_ok=True)
    chart = cfg.chart()
    traj = cfg.solve_trajectory()
    spec = cfg.tube_spec(traj)
    params = cfg.sde_params()
    ens = dynamics.FreeDiffusionEnsemble(chart, spec, params,
                                         cfg["mc.seed"], cfg["mc.samples"])
    f_obs = integrator.endpoint_observable(lambda q: 1.0, 1.0, name="one")
    order = cfg["experiment.series_order"]
    series = integrator.theta_series(ens, f_obs, order)

    thetas = list(cfg["experiment.theta"])
    if not any(abs(t - (-1j)) < 1e-14 for t in thetas):
        thetas.append(-1j)

    rows = []
    all_ok = True
    for th in thetas:
        if abs(th - (-1j)) < 1e-14:
            direct = integrator.lorentzian_from_theta(ens, f_obs)
        else:
            direct = integrator.feynman_kac_expectation(ens, f_obs, th,
                                                        c_bound=series.c_bound)
        sval = series.evaluate(th)
        bound = series.remainder_bound(th)
        gap = abs(direct.value - sval)
        ok = gap <= bound + 3.0 * direct.std_error + 1e-12
        all_ok = all_ok and ok
        rows.append((th, direct, sval, bound, gap, ok))

    coeff_flags = []
    for n_i in range(order + 1):
        lim = series.coefficient_bound(n_i) * (1.0 + 1e-12) + 3.0 * series.coefficient_ses[n_i]
        coeff_flags.append(bool(abs(series.coefficients[n_i]) <= lim))

    with open(os.path.join(outdir, "theta_scan.csv"), "w", encoding="utf-8") as fh:
        fh.write("theta,direct_re,direct_im,direct_se,series_re,series_im,"
                 "remainder_bound,gap,gap_ok\n")
        for th, direct, sval, bound, gap, ok in rows:
            fh.write(f"{_format_theta(th)},{direct.value.real!r},{direct.value.imag!r},"
                     f"{direct.std_error!r},{sval.real!r},{sval.imag!r},"
                     f"{bound!r},{gap!r},{int(ok)}\n")

    payload = _result_payload(
        cfg, rows[0][1],
        series_order=order,
        coefficients=[[c.real, c.imag] for c in series.coefficients],
        coefficient_ses=[float(s) for s in series.coefficient_ses],
        coefficient_bound_flags=coeff_flags,
        c_bound=float(series.c_bound),
        gaps_ok=bool(all_ok),
    )
    _write_json(os.path.join(outdir, "result.json"), payload)
    if dump_paths:
        _dump_ensemble_paths(ens, outdir)
    if strict and not (all_ok and all(coeff_flags)):
        return 4
    return 0


def run_dump_paths(cfg: ExperimentConfig, outdir: str, strict: bool = False,
                   dump_paths: bool = True) -> int:
    os.makedirs(outdir, exist_ok=True)
    chart = cfg.chart()
    traj = cfg.solve_trajectory()
    spec = cfg.tube_spec(traj)
    params = cfg.sde_params()
    frame = geometry.parallel_frame(chart, traj)
    ens = dynamics.TubeEnsemble(chart, frame, spec, params,
                                cfg["mc.seed"], cfg["mc.samples"])
    _dump_ensemble_paths(ens, outdir, limit=cfg["mc.samples"])
    _write_json(os.path.join(outdir, "result.json"), {
        "n_paths": cfg["mc.samples"],
        "config_hash": cfg.config_hash(),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    })
    return 0


_COMMANDS = {
    "propagator": run_propagator,
    "convergence": run_convergence,
    "probe": run_probe,
    "theta-scan": run_theta_scan,
    "dump-paths": run_dump_paths,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pathtube",
        description="Tube-restricted stochastic path-integral experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--seed", type=int, default=None, help="override mc.seed")
        p.add_argument("--samples", type=int, default=None, help="override mc.samples")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--strict", action="store_true",
                       help="exit 4 when an acceptance threshold is missed")
        p.add_argument("--dump-paths", action="store_true",
                       help="also dump sampled paths (CSV + JSON sidecar)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.values["mc.seed"] = args.seed
        if args.samples is not None:
            cfg.values["mc.samples"] = args.samples
        _validate_config(cfg)
        handler = _COMMANDS[args.command]
        return handler(cfg, args.out, strict=args.strict, dump_paths=args.dump_paths)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PathTubeError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
