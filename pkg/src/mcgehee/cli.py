"""Command-line driver.

    mcgehee analyze      --config run.yaml --out results/
    mcgehee fixed-points --config run.yaml
    mcgehee integrate    --config run.yaml --frame blown --state 0,1,0 --t-max 10
    mcgehee escape       --config run.yaml --r-b 0.5
    mcgehee boomerang    --config run.yaml
    mcgehee verify       --config run.yaml

Exit codes: 0 success, 1 verification failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import catalog
from .blowup import BlownSystem, HypothesisError, McGeheeState
from .boundary import ContinuumWarning, NotHyperbolic, find_sphere_critical_points, fixed_points, hypothesis_check
from .criteria import analyze, boomerang_demo, subcritical_starts
from .germ import AnalyticGerm
from .integrate import Event, IntegratorConfig, PreconditionError, integrate_blown, integrate_original
from .system import LagrangianSystem, MagneticPotential, MetricField, PhaseState, ValidationError
from .verify import run_suite

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
DEFAULT_SEED = 20240601


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    system: LagrangianSystem
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    seed: int = DEFAULT_SEED
    newton_seeds: int | None = None
    out: Path = Path(".")
    raw: dict = field(default_factory=dict)


def _germ(dim: int, records, trunc) -> AnalyticGerm:
    if records is None:
        return AnalyticGerm.zero(dim)
    if not isinstance(records, list):
        raise ConfigError("a germ must be a list of {exponents, coeff} records")
    try:
        return AnalyticGerm.from_records(dim, records, trunc)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad germ records: {exc}") from exc


def _system_from(section: dict) -> LagrangianSystem:
    if not isinstance(section, dict):
        raise ConfigError("'system' must be a table")
    if "preset" in section:
        params = section.get("params", {}) or {}
        try:
            return catalog.preset(section["preset"], **params)
        except (KeyError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
    if "dimension" not in section:
        raise ConfigError("system.dimension is required")
    n = section["dimension"]
    if not isinstance(n, int) or n < 1:
        raise ConfigError("system.dimension must be a positive integer")
    trunc = section.get("truncation")
    if "potential" not in section:
        raise ConfigError("system.potential is required")
    U = _germ(n, section["potential"], trunc)
    metric = None
    if section.get("metric") is not None:
        rows = section["metric"]
        if not isinstance(rows, list) or len(rows) != n or any(not isinstance(r, list) or len(r) != n for r in rows):
            raise ConfigError("system.metric must be an n x n matrix of germ record lists")
        metric = MetricField.from_matrix([[_germ(n, e, trunc) for e in row] for row in rows])
    magnetic = None
    if section.get("magnetic") is not None:
        comps = section["magnetic"]
        if not isinstance(comps, list) or len(comps) != n:
            raise ConfigError("system.magnetic must list n germs")
        magnetic = MagneticPotential(n, tuple(_germ(n, c, trunc) for c in comps))
    radius = float(section.get("radius", 1.0))
    return LagrangianSystem(U, metric, magnetic, radius, str(section.get("name", "")))


def load_config(path: str | os.PathLike, seed: int | None = None, out: str | None = None) -> RunConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict) or "system" not in raw:
        raise ConfigError("config must be a table with a 'system' entry")
    system = _system_from(raw["system"])
    integ = raw.get("integrator", {}) or {}
    allowed = {"rtol", "atol", "max_step", "t_max", "sample_dt", "max_steps", "first_step"}
    bad = set(integ) - allowed
    if bad:
        raise ConfigError(f"unknown integrator keys: {sorted(bad)}")
    try:
        icfg = IntegratorConfig(**{k: (int(v) if k == "max_steps" else float(v)) for k, v in integ.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"integrator: {exc}") from exc
    cfg_seed = int(raw.get("seed", DEFAULT_SEED)) if seed is None else int(seed)
    out_dir = Path(out if out is not None else raw.get("output", "."))
    return RunConfig(system, icfg, cfg_seed, raw.get("newton_seeds"), out_dir, raw)


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _blown(cfg: RunConfig) -> BlownSystem:
    return BlownSystem(cfg.system)


def _crit(cfg: RunConfig, bs: BlownSystem):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ContinuumWarning)
        return find_sphere_critical_points(bs.U_l, cfg.newton_seeds, cfg.seed)


def _fmt(v) -> str:
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return f"{v:.12g}" if isinstance(v, float) else str(v)


# ----------------------------------------------------------------------------
# commands


def cmd_analyze(cfg: RunConfig, args) -> int:
    bs = _blown(cfg)
    rep = cfg.system.report
    crit = _crit(cfg, bs)
    crep = analyze(bs, crit)
    lines = [f"system: {cfg.system.name or 'custom'}", f"dimension: {cfg.system.n}"]
    lines += rep.lines()
    lines.append(f"U_l = {bs.U_l.format()}")
    lines += crep.lines()
    write_atomic(cfg.out / "analyze.txt", "\n".join(lines) + "\n")
    summary = {
        "system": cfg.system.name,
        "dimension": cfg.system.n,
        "jets": {k: (None if isinstance(v, float) and math.isinf(v) else v) for k, v in rep.__dict__.items()},
        "critical_points": len(crit),
        "criteria": crep.to_dict(),
    }
    write_atomic(cfg.out / "analyze.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"verdict: {crep.verdict}" + (f" ({crep.path})" if crep.path else ""))
    return EXIT_OK


def cmd_fixed_points(cfg: RunConfig, args) -> int:
    bs = _blown(cfg)
    crit = _crit(cfg, bs)
    fps = fixed_points(bs, crit)
    hyp = hypothesis_check(bs, crit)
    lines = [f"# boundary fixed points: {len(fps)}"]
    if not fps:
        lines.append("# empty critical boundary: f > 0 on the sphere")
    if hyp["continuum"]:
        lines.append("# warning: critical points of f form a continuum; listed points are samples")
    lines.append("q\tf\tnu_star\teigenvalues\tclass\tstable_dim\tunstable_dim\tflags")
    for fp in fps:
        eig = ";".join(f"{e.real:.12g}{e.imag:+.12g}j" for e in fp.flow_eigs)
        flags = [k for k, on in (("jordan", fp.jordan_degenerate), ("degenerate", fp.critical.degenerate), ("continuum", fp.critical.in_continuum)) if on]
        lines.append(
            "\t".join(
                [
                    ",".join(f"{x:.12g}" for x in fp.q),
                    f"{fp.f_value:.12g}",
                    f"{fp.nu_star:.12g}",
                    eig or "-",
                    fp.source_sink_class,
                    str(fp.stable_dim),
                    str(fp.unstable_dim),
                    ",".join(flags) or "-",
                ]
            )
        )
    write_atomic(cfg.out / "fixed_points.txt", "\n".join(lines) + "\n")
    print(f"{len(fps)} boundary fixed points")
    return EXIT_OK


def _parse_state(text: str, size: int) -> np.ndarray:
    try:
        vals = np.array([float(v) for v in text.split(",")])
    except ValueError as exc:
        raise ConfigError(f"state must be comma-separated numbers: {exc}") from exc
    if vals.size != size:
        raise ConfigError(f"state needs {size} numbers, got {vals.size}")
    return vals


def _csv_text(traj) -> str:
    buf = io.StringIO()
    traj.to_csv(buf)
    return buf.getvalue()


def cmd_integrate(cfg: RunConfig, args) -> int:
    sec = cfg.raw.get("integrate", {}) or {}
    frame = args.frame or sec.get("frame", "original")
    state = args.state or (",".join(str(v) for v in sec["state"]) if "state" in sec else None)
    if state is None:
        raise ConfigError("integrate needs an initial state (--state or integrate.state)")
    icfg = cfg.integrator
    t_max = args.t_max if args.t_max is not None else sec.get("t_max")
    if t_max is not None:
        icfg = icfg.with_(t_max=float(t_max))
    dt = args.dt if args.dt is not None else sec.get("sample_dt")
    if dt is not None:
        icfg = icfg.with_(sample_dt=float(dt))
    backward = bool(args.backward or sec.get("backward", False))
    n = cfg.system.n
    if frame == "original":
        z = _parse_state(state, 2 * n)
        traj = integrate_original(cfg.system, PhaseState(z[:n], z[n:]), icfg, backward=backward)
    elif frame == "blown":
        bs = _blown(cfg)
        z = _parse_state(state, 2 * n + 1)
        q = z[1 : n + 1]
        if not abs(np.linalg.norm(q) - 1) < 1e-10:
            raise ConfigError("q must be a unit vector")
        traj = integrate_blown(bs, McGeheeState(z[0], q, z[n + 1 :]), icfg, backward=backward)
    else:
        raise ConfigError("frame must be 'original' or 'blown'")
    name = args.name or f"trajectory_{frame}.csv"
    write_atomic(cfg.out / name, _csv_text(traj))
    print(f"{len(traj)} samples, termination: {traj.termination.value}")
    return EXIT_OK


def cmd_escape(cfg: RunConfig, args) -> int:
    sec = cfg.raw.get("escape", {}) or {}
    r_B = float(args.r_b if args.r_b is not None else sec.get("r_B", 0.5 * cfg.system.radius))
    count = int(args.count if args.count is not None else sec.get("count", 10))
    r0 = float(sec.get("r0", r_B / 10))
    icfg = cfg.integrator.with_(t_max=float(sec.get("t_max", max(cfg.integrator.t_max, 200.0))))
    starts = subcritical_starts(cfg.system, r0, count, cfg.seed)
    n = cfg.system.n
    lines = ["start,escape_time"]
    escaped = 0
    for k, s in enumerate(starts):
        ev = Event(lambda t, y: np.linalg.norm(y[:n]) - r_B, "escape", True, 1)
        traj = integrate_original(cfg.system, s, icfg, events=[ev])
        hit = [t for name, t, _ in traj.events if name == "escape"]
        lines.append(f"{k},{hit[0]:.17g}" if hit else f"{k},")
        escaped += bool(hit)
        write_atomic(cfg.out / f"escape_{k:03d}.csv", _csv_text(traj))
    write_atomic(cfg.out / "escape.csv", "\n".join(lines) + "\n")
    print(f"{escaped}/{count} subcritical starts escaped |x| >= {r_B:g}")
    return EXIT_OK


def cmd_boomerang(cfg: RunConfig, args) -> int:
    sec = cfg.raw.get("boomerang", {}) or {}
    ns = tuple(int(v) for v in sec.get("ns", (4, 8, 16, 32)))
    bs = _blown(cfg)
    rep = boomerang_demo(bs, ns=ns)
    write_atomic(cfg.out / "boomerang.txt", "\n".join(rep.lines()) + "\n")
    print("\n".join(rep.lines()))
    return EXIT_OK


def cmd_verify(cfg: RunConfig, args) -> int:
    bs = _blown(cfg)
    results = run_suite(bs, cfg.seed)
    lines = [r.line() for r in results]
    ok = all(r.passed for r in results)
    lines.append("ALL PASS" if ok else "FAILURES PRESENT")
    write_atomic(cfg.out / "verify.txt", "\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {
    "analyze": cmd_analyze,
    "fixed-points": cmd_fixed_points,
    "integrate": cmd_integrate,
    "escape": cmd_escape,
    "boomerang": cmd_boomerang,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mcgehee", description="McGehee blowup analysis of Lagrangian equilibria")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="YAML run configuration")
        sp.add_argument("--out", default=None, help="output directory (overrides config)")
        sp.add_argument("--seed", type=int, default=None, help="random seed (overrides config)")
        if name == "integrate":
            sp.add_argument("--frame", choices=["original", "blown"], default=None)
            sp.add_argument("--state", default=None, help="x..,v.. (original) or r,q..,y.. (blown)")
            sp.add_argument("--t-max", type=float, default=None)
            sp.add_argument("--dt", type=float, default=None, help="uniform sample spacing")
            sp.add_argument("--backward", action="store_true")
            sp.add_argument("--name", default=None, help="output CSV file name")
        if name == "escape":
            sp.add_argument("--r-b", type=float, default=None)
            sp.add_argument("--count", type=int, default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed, args.out)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, ValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (HypothesisError, PreconditionError, NotHyperbolic) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
