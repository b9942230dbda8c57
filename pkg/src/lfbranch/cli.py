"""Command-line entry point: ``lfbranch {dist,asym,check,sim,compare}``.

Every command writes its outputs plus ``<out>.manifest.json`` recording the
command, flags, a digest of the environment spec, output paths, version and
wall time. Exit codes: 0 success, 2 invalid input, 3 numerical domain error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from pathlib import Path

from lfbranch import __version__
from lfbranch.asymptotics import check_conditions, exact_rows, fit_rate, predictors, write_asym_csv
from lfbranch.dist import eta_cf, eta_direct, read_dist_csv, write_dist_csv
from lfbranch.env import load_env_spec
from lfbranch.errors import DomainError, ValidationError
from lfbranch.sim import SimConfig, SimResult, compare, run_sim

MASS_FLAG_RTOL = 1e-6


def _digest(spec: dict) -> str:
    return hashlib.sha256(json.dumps(spec, sort_keys=True).encode()).hexdigest()


def _write_manifest(out: Path, command: str, args: argparse.Namespace, spec: dict | None,
                    outputs: list[Path], t0: float, extra: dict | None = None) -> None:
    params = {k: v for k, v in vars(args).items() if k not in ("func",)}
    doc = {
        "command": command,
        "env_spec_digest": _digest(spec) if spec is not None else None,
        "env_spec": spec,
        "parameters": params,
        "outputs": [str(p) for p in outputs],
        "version": __version__,
        "wall_time_s": round(time.perf_counter() - t0, 6),
    }
    if extra:
        doc.update(extra)
    Path(f"{out}.manifest.json").write_text(json.dumps(doc, indent=2, default=str) + "\n")


def _rel(x: float, y: float) -> float:
    if x == y:
        return 0.0
    return abs(x - y) / max(abs(x), abs(y))


def cmd_dist(args, t0):
    env, spec = load_env_spec(args.env)
    out = Path(args.out)
    extra = {}
    if args.initial == "e2" and args.method != "direct":
        raise ValidationError("the A-matrix method covers initial type e1 only; use --method direct")
    with out.open("w") as fh:
        if args.method == "direct":
            write_dist_csv(eta_direct(env, args.n_max, args.initial), fh, "direct")
        elif args.method == "cf":
            write_dist_csv(eta_cf(env, args.n_max), fh, "cf")
        else:
            d = list(eta_direct(env, args.n_max))
            c = list(eta_cf(env, args.n_max))
            write_dist_csv(d, fh, "direct")
            write_dist_csv(c, fh, "cf", header=False)
            eta_disc = max(_rel(x.eta, y.eta) for x, y in zip(d, c))
            mass_disc = [_rel(x.mass, y.mass) for x, y in zip(d, c)]
            flagged = [x.n for x, m in zip(d, mass_disc) if m > MASS_FLAG_RTOL]
            extra = {
                "max_rel_discrepancy_eta": eta_disc,
                "max_rel_discrepancy_mass": max(mass_disc),
                "mass_flagged_n": flagged[:100],
                "mass_flagged_count": len(flagged),
            }
            print(f"max relative discrepancy: eta {eta_disc:.3e}, mass {max(mass_disc):.3e}")
    _write_manifest(out, "dist", args, spec, [out], t0, extra)


def _parse_window(text: str | None) -> tuple[int, int] | None:
    if text is None:
        return None
    try:
        lo, hi = (int(float(x)) for x in text.split(","))
    except ValueError:
        raise ValidationError(f"--window expects 'lo,hi', got {text!r}") from None
    return lo, hi


def cmd_asym(args, t0):
    env, spec = load_env_spec(args.env)
    out = Path(args.out)
    rows = list(exact_rows(env, args.n_max))
    asym = list(predictors(env, args.n_max, rows=rows))
    with out.open("w") as fh:
        write_asym_csv(zip(rows, asym), fh)
    outputs = [out]
    extra = {"mass_upper_only": asym[-1].mass_upper_only if asym else False}
    if args.fit_model:
        K = args.K if args.K is not None else spec.get("K")
        fit = fit_rate([(r.n, r.mass) for r in rows], args.fit_model, _parse_window(args.window), K=K)
        fit_path = out.with_suffix(".fit.json")
        fit_path.write_text(fit.to_json())
        outputs.append(fit_path)
        print(json.dumps(fit.params))
    _write_manifest(out, "asym", args, spec, outputs, t0, extra)


def cmd_check(args, t0):
    env, spec = load_env_spec(args.env)
    out = Path(args.out)
    grid = [int(float(x)) for x in args.probe_grid.split(",")]
    rep = check_conditions(env, grid)
    out.write_text(json.dumps(rep.to_dict(), indent=2) + "\n")
    print(f"b1 {rep.b1_verdict}, b2 case {rep.b2_case}")
    _write_manifest(out, "check", args, spec, [out], t0)


def cmd_sim(args, t0):
    env, spec = load_env_spec(args.env)
    out = Path(args.out)
    res = run_sim(SimConfig(env, args.runs, args.horizon, args.seed, args.initial, args.workers))
    out.write_text(res.to_json())
    _write_manifest(out, "sim", args, spec, [out], t0)


def cmd_compare(args, t0):
    with open(args.dist_csv) as fh:
        rows = read_dist_csv(fh)
    keep = "cf" if any(m == "cf" for *_, m in rows) else None
    exact = {n: mass for n, _, mass, m in rows if keep is None or m == keep}
    res = SimResult.from_dict(json.loads(Path(args.sim_json).read_text()))
    ns = [n for n in sorted(exact) if res.horizon == 0 or n <= res.horizon]
    table = compare([(n, exact[n]) for n in ns], res)
    out = Path(args.out)
    worst = 0.0
    with out.open("w") as fh:
        fh.write("n,exact,empirical,z,expected_count\n")
        for r in table:
            fh.write(f"{r.n},{r.exact:.17g},{r.empirical:.17g},{r.z:.6g},{r.expected_count:.6g}\n")
            if r.expected_count >= 10 and math.isfinite(r.z):
                worst = max(worst, abs(r.z))
    impossible = [r.n for r in table if r.z == math.inf]
    print(f"max |z| over n with expected count >= 10: {worst:.3f}")
    _write_manifest(out, "compare", args, None, [out], t0, {"max_abs_z": worst, "impossible_observed": impossible})


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lfbranch", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("dist", help="exact extinction-time distribution")
    d.add_argument("env", help="environment spec (JSON or YAML)")
    d.add_argument("--n-max", type=int, required=True)
    d.add_argument("--initial", choices=("e1", "e2"), default="e1")
    d.add_argument("--method", choices=("direct", "cf", "both"), default="cf")
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_dist)

    a = sub.add_parser("asym", help="predictors, ratios and rate fit")
    a.add_argument("env")
    a.add_argument("--n-max", type=int, required=True)
    a.add_argument("--fit-model", choices=("power", "power_log2", "iterated_log"))
    a.add_argument("--window", help="fit window 'lo,hi' (default n_max/100,n_max)")
    a.add_argument("--K", type=int, help="K for the iterated_log model (default: from the spec)")
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_asym)

    c = sub.add_parser("check", help="regularity-condition report")
    c.add_argument("env")
    c.add_argument("--probe-grid", default="100,1000,10000,100000")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_check)

    s = sub.add_parser("sim", help="Monte Carlo extinction times")
    s.add_argument("env")
    s.add_argument("--runs", type=int, required=True)
    s.add_argument("--horizon", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--initial", choices=("e1", "e2"), default="e1")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sim)

    m = sub.add_parser("compare", help="z-scores of simulation against exact masses")
    m.add_argument("dist_csv")
    m.add_argument("sim_json")
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_compare)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        args.func(args, t0)
    except (ValidationError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DomainError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
