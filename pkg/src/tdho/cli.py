"""Command-line entry point: ``tdho <command> --config run.yaml --out dir``.

Every command writes ``config.echo``, ``schema.json`` and ``summary.json``
into the output directory plus per-scan tables (CSV, or JSON with
``--format json``).  The exit code is 0 iff every pass/fail check of the
command passed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from tdho import acceptance as acc
from tdho.classical import AssumptionViolation, build_model, solve_classical, verify_asymptotics
from tdho.config import ConfigError, default_config, load_config, write_schema
from tdho.estimates import (
    InsufficientSamples,
    NormSpec,
    ScanReport,
    SpacetimeForcing,
    decay_slope_scan,
    duhamel_check,
    gaussian_family,
    n_tilde,
    sine_lower_bound_check,
    strichartz_homogeneous_check,
)
from tdho.grid import GridSpec
from tdho.magnetic import build_magnetic, magnetic_dispersive_scan, sigma_from_field
from tdho.propagator import GaussianState, evolve, gaussian_oracle, l2_distance

log = logging.getLogger("tdho")

COMMANDS = ("solve-ode", "evolve", "dispersive-scan", "resonance", "strichartz", "duhamel", "magnetic", "acceptance")


class Run:
    """Output directory plus format handling for one command."""

    def __init__(self, out, fmt: str, cfg):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.fmt = fmt
        self.cfg = cfg
        (self.out / "config.echo").write_text(cfg.echo())
        write_schema(self.out / "schema.json")

    def table(self, name: str, csv_text: str) -> None:
        stem = name[:-4] if name.endswith(".csv") else name
        if self.fmt == "csv":
            (self.out / f"{stem}.csv").write_text(csv_text)
        else:
            rows = [{k: _number(v) for k, v in r.items()} for r in csv.DictReader(io.StringIO(csv_text))]
            (self.out / f"{stem}.json").write_text(json.dumps(rows, indent=1) + "\n")

    def summary(self, doc: dict) -> None:
        (self.out / "summary.json").write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")


def _number(v: str):
    try:
        return int(v)
    except ValueError:
        pass
    try:
        return float(v)
    except ValueError:
        return v


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, (tuple, set)):
        return list(o)
    return str(o)


def _csv(header, rows) -> str:
    return acc._table(header, rows)


def _model(cfg):
    sc = cfg["scenario"]
    return build_model(sc["model"], sc["params"])


def _lambda_w(cfg, model) -> float:
    lw = cfg["norms"]["lambda_w"]
    return float(model.lam) if lw is None else lw


def _gaussian(cfg, dim):
    ev = cfg["evolve"]
    vals = []
    for key in ("center", "momentum", "width"):
        v = list(ev[key])
        if len(v) == 1:
            v = v * dim
        if len(v) != dim:
            raise ConfigError(f"evolve.{key}: need {dim} entries, got {len(v)}")
        vals.append(v)
    c, p, w = vals
    return GaussianState.normalized(c, p, [1j / x**2 for x in w])


# commands --------------------------------------------------------------
def cmd_solve_ode(cfg, run: Run, args) -> bool:
    model = _model(cfg)
    od = cfg["ode"]
    b = solve_classical(model, od["T_ode"], od["tol"])
    t = np.linspace(-od["T_ode"], od["T_ode"], od["samples"])
    y1, dy1, y2, dy2 = b.y(t)
    a1, a2, A = b.factors(t)
    rows = list(zip(t, y1, dy1, y2, dy2, a1, a2, A))
    if model.satisfies_assumption:
        # closing row: the limit A(+inf) from the fitted a1 tail
        rows.append((np.inf, np.nan, np.nan, np.nan, np.nan, 0.0, 0.0, b.A_inf_plus))
    run.table("factors.csv", _csv(["t", "y1", "y1p", "y2", "y2p", "a1", "a2", "A"], rows))
    doc = {"command": "solve-ode", "model": model.label(), "W": b.W,
           "A_final": float(A[-1]),
           "A_inf": b.A_inf_plus if model.satisfies_assumption else None, "wronskian_rel_drift": float(np.max(np.abs(b.wronskian(t) - b.W)) / b.W)}
    if model.satisfies_assumption:
        try:
            rep = verify_asymptotics(b, window=(min(1e2, od["T_ode"] / 10), od["T_ode"]))
            doc["asymptotics"] = rep.as_dict()
            (run.out / "asymptotics.json").write_text(
                json.dumps(rep.as_dict(), indent=2, sort_keys=True, default=_json_default) + "\n")
        except (AssumptionViolation, ValueError) as e:
            doc["asymptotics"] = {"status": str(e)}
    doc["passed"] = doc["wronskian_rel_drift"] <= 1e-8
    run.summary(doc)
    return doc["passed"]


def cmd_evolve(cfg, run: Run, args) -> bool:
    model = _model(cfg)
    b = solve_classical(model, cfg["ode"]["T_ode"], cfg["ode"]["tol"])
    gr = cfg["grid"]
    G = GridSpec.natural(gr["points"], gr["dim"], gr["scale"])
    g0 = _gaussian(cfg, gr["dim"])
    f0 = g0.sample(G)
    rows, drift, worst = [], 0.0, 0.0
    for i, t in enumerate(cfg["evolve"]["times"]):
        u = evolve(b, f0, float(t))
        norm = u.norm()
        d = l2_distance(u, gaussian_oracle(b, g0, float(t))(*u.grid.mesh()))
        drift = max(drift, abs(norm - f0.norm()))
        worst = max(worst, d)
        rows.append((float(t), norm, d, u.grid.spacing[0]))
        u.save(run.out / f"field_{i:03d}.bin")
    run.table("evolve.csv", _csv(["t", "norm", "l2_vs_oracle", "spacing"], rows))
    passed = drift <= 1e-8 and worst <= 1e-6
    run.summary({"command": "evolve", "model": model.label(), "norm_drift": drift, "max_l2_vs_oracle": worst,
                 "tolerances": {"norm_drift": 1e-8, "l2_vs_oracle": 1e-6}, "passed": passed})
    return passed


def _scan_or_status(fn, name, *a, **kw) -> ScanReport:
    try:
        return fn(*a, **kw)
    except InsufficientSamples as e:
        return ScanReport(name=name, status=f"insufficient samples: {e}")


def cmd_dispersive_scan(cfg, run: Run, args) -> bool:
    model = _model(cfg)
    sc = cfg["scan"]
    b = solve_classical(model, sc["T_scan"], cfg["ode"]["tol"])
    rep = _scan_or_status(decay_slope_scan, f"dispersive/{sc['region']}", b, sc["region"], n=cfg["grid"]["dim"],
                          samples=sc["samples"], seed=args.seed, points=sc["points"],
                          refine_check=sc["refine_check"], workers=args.workers,
                          r=np.inf if sc["r"] is None else sc["r"])
    run.table("dispersive.csv", rep.to_csv())
    run.summary({"command": "dispersive-scan", "model": model.label(), **rep.summary()})
    return rep.passed


def cmd_resonance(cfg, run: Run, args) -> bool:
    model = _model(cfg)
    sc = cfg["scan"]
    b = solve_classical(model, sc["T_scan"] if model.satisfies_assumption else cfg["ode"]["T_ode"], cfg["ode"]["tol"])
    nt = n_tilde(b)
    reports, rows = [], []
    for N in range(min(nt, sc["N_max"]) + 1):
        try:
            rep = sine_lower_bound_check(b, N, samples=sc["resonance_samples"], seed=args.seed + N, delta=sc["delta"])
        except InsufficientSamples as e:
            reports.append({"N": N, "status": str(e)})
            continue
        reports.append(rep.summary())
        for r in rep.rows:
            rows.append((N, r["t"], r["s"], int(r["mirrored"]), r["omega"], r["ratio"], r["phase_residual"], r["offset_slope_error"]))
    run.table("resonance.csv", _csv(["N", "t", "s", "mirrored", "omega", "ratio", "phase_residual", "offset_slope_error"], rows))
    ok = [r for r in reports if "min_ratio" in r]
    passed = bool(ok) and all(
        r["phase_max_residual"] <= 1e-8 and r["offset_slope_max_error"] <= 1e-4 and r["monotone"]
        and (np.nan_to_num(r["min_ratio"], nan=1.0) > 0) and (np.nan_to_num(r["min_ratio_mirrored"], nan=1.0) > 0)
        for r in ok)
    run.summary({"command": "resonance", "model": model.label(), "n_tilde": nt, "per_N": reports,
                 "tolerances": {"phase_residual": 1e-8, "offset_slope_error": 1e-4, "min_ratio": "> 0"}, "passed": passed})
    return passed


def _norm_specs(cfg, lam, dim):
    return [NormSpec(float(q), float(r), lam, dim) for q, r in cfg["norms"]["pairs"]]


def cmd_strichartz(cfg, run: Run, args) -> bool:
    model = _model(cfg)
    sc = cfg["scan"]
    b = solve_classical(model, cfg["ode"]["T_ode"], cfg["ode"]["tol"])
    gr = cfg["grid"]
    G = GridSpec.natural(gr["points"], gr["dim"], gr["scale"])
    fam = [g.sample(G) for g in gaussian_family(sc["family_size"], args.seed, gr["dim"])]
    out, passed = [], True
    for spec in _norm_specs(cfg, _lambda_w(cfg, model), gr["dim"]):
        rep = strichartz_homogeneous_check(b, spec, fam, sc["T"], sc["dt"], workers=args.workers)
        run.table(f"strichartz_q{spec.q:g}_r{spec.r:g}.csv", rep.to_csv())
        out.append(rep.summary())
        passed &= rep.passed
    run.summary({"command": "strichartz", "model": model.label(), "pairs": out, "passed": passed})
    return passed


def cmd_duhamel(cfg, run: Run, args) -> bool:
    model = _model(cfg)
    sc, du = cfg["scan"], cfg["duhamel"]
    b = solve_classical(model, cfg["ode"]["T_ode"], cfg["ode"]["tol"])
    gr = cfg["grid"]
    G = GridSpec.natural(gr["points"], gr["dim"], gr["scale"])
    forcing = SpacetimeForcing(_gaussian(cfg, gr["dim"]), du["s0"], du["width"])
    out, passed = [], True
    for spec in _norm_specs(cfg, _lambda_w(cfg, model), gr["dim"]):
        rep = duhamel_check(b, spec, forcing, sc["T"], G, du["dt"])
        run.table(f"duhamel_q{spec.q:g}_r{spec.r:g}.csv", rep.to_csv())
        out.append(rep.summary())
        passed &= rep.passed
    run.summary({"command": "duhamel", "model": model.label(), "pairs": out, "passed": passed})
    return passed


def cmd_magnetic(cfg, run: Run, args) -> bool:
    sc = cfg["scenario"]
    if sc["magnetic"] is None:
        raise ConfigError("magnetic: scenario.magnetic is not set")
    mag = build_magnetic(sc["magnetic"], sc["magnetic_params"])
    s = cfg["scan"]
    b = solve_classical(sigma_from_field(mag), s["T_scan"], cfg["ode"]["tol"])
    out, passed = [], True
    for region in ("Omega0_plus", "OmegaLambda_plus"):
        rep = _scan_or_status(magnetic_dispersive_scan, f"magnetic/{region}", mag, b, mag.j, region,
                              samples=s["samples"], seed=args.seed, refine_check=s["refine_check"],
                              workers=args.workers)
        run.table(f"magnetic_{region}.csv", rep.to_csv())
        out.append(rep.summary())
        passed &= rep.passed
    run.summary({"command": "magnetic", "scenario": mag.label(), "scans": out, "passed": passed})
    return passed


def cmd_acceptance(cfg, run: Run, args) -> bool:
    lines = []

    def emit(line):
        lines.append(line)
        print(line, flush=True)

    results = acc.run_suite(seed=args.seed, workers=args.workers, log=emit)
    tables = acc.collect_tables(results)
    if args.repeat:
        again = acc.collect_tables(acc.run_suite(seed=args.seed, workers=args.workers))
        det = acc.determinism_result(tables, again)
        emit(det.line())
        results.append(det)
    for name, text in sorted(tables.items()):
        run.table(name, text)
    passed = all(r.passed for r in results)
    run.summary({"command": "acceptance", "seed": args.seed, "criteria": [r.summary() for r in results],
                 "passed": passed})
    return passed


HANDLERS = {
    "solve-ode": cmd_solve_ode,
    "evolve": cmd_evolve,
    "dispersive-scan": cmd_dispersive_scan,
    "resonance": cmd_resonance,
    "strichartz": cmd_strichartz,
    "duhamel": cmd_duhamel,
    "magnetic": cmd_magnetic,
    "acceptance": cmd_acceptance,
}


def _config_epilog() -> str:
    from tdho.config import REQUIRED, SCHEMA

    lines = ["configuration keys (YAML section.key = default):"]
    for sec, keys in SCHEMA.items():
        for k, (typ, default, desc) in keys.items():
            d = "REQUIRED" if default is REQUIRED else repr(default)
            lines.append(f"  {sec}.{k} = {d}  [{typ.__name__}] {desc}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    epilog = _config_epilog()
    fmt = argparse.RawDescriptionHelpFormatter
    p = argparse.ArgumentParser(prog="tdho", description=__doc__.splitlines()[0], epilog=epilog, formatter_class=fmt)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name, help=HANDLERS[name].__name__.replace("cmd_", "").replace("_", " "),
                           epilog=epilog, formatter_class=fmt)
        s.add_argument("--config", type=Path, help="YAML run configuration (see `tdho schema`)")
        s.add_argument("--out", type=Path, default=Path("runs") / name, help="output directory")
        s.add_argument("--seed", type=int, default=None, help="seed for random choices (default: scan.seed)")
        s.add_argument("--workers", type=int, default=os.cpu_count(), help="parallel scan workers")
        s.add_argument("--format", choices=("csv", "json"), default=None, help="table format (default: output.format)")
        if name == "acceptance":
            s.add_argument("--no-repeat", dest="repeat", action="store_false",
                           help="skip the second in-process run that checks byte-identical tables")
    s = sub.add_parser("schema", help="print the configuration schema as JSON")
    s.add_argument("--out", type=Path, default=None)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.command == "schema":
        from tdho.config import schema_document

        text = json.dumps(schema_document(), indent=2, sort_keys=True) + "\n"
        if args.out:
            args.out.write_text(text)
        else:
            sys.stdout.write(text)
        return 0
    try:
        cfg = load_config(args.config) if args.config else default_config()
        if args.seed is None:
            args.seed = cfg["scan"]["seed"]
        fmt = args.format or cfg["output"]["format"]
        run = Run(args.out, fmt, cfg)
        ok = HANDLERS[args.command](cfg, run, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except KeyError as e:
        print(f"config error: {e.args[0]}", file=sys.stderr)
        return 2
    except AssumptionViolation as e:
        print(f"scenario error: {e}", file=sys.stderr)
        return 2
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
