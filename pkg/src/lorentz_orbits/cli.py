"""Command line driver: solve, sweep, verify, lemmas, subproblem.

Every command writes ``report.json`` (deterministic: sorted keys, repr floats,
no timestamps) and a ``timings.json`` sidecar into the output directory.
Exit codes: 0 success, 1 usage error, 2 verification failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .action import action, default_probes, vi_residual
from .bm_solver import SubproblemNotConverged, solve_subproblem
from .moreau import ProxSolver, alpha_bound, check_el_properties
from .orbit_search import (
    Tolerances,
    grad_bound,
    minimal_period_divisor,
    multi_start,
    verify_negativity,
)
from .potentials import check_consistency, electric_by_name, magnetic_by_name
from .trajectory import (
    TWO_PI,
    FourierTrajectory,
    ZmDisk,
    is_fixed_point,
    orbit_distance,
    read_trajectory_csv,
    shift,
    spectral_derivative,
    wirtinger_gap,
    write_trajectory_csv,
)
from .verify import NoCircularOrbit, circular_orbit_radius, ode_residual, shooting_defect

log = logging.getLogger(__name__)

COMMANDS = ("solve", "sweep", "verify", "lemmas", "subproblem")


class UsageError(ValueError):
    pass


def _float_list(s: str) -> list:
    return [float(x) for x in s.split(",") if x.strip()]


def _optional_float(s: str):
    return None if s.strip().lower() in ("", "none", "default") else float(s)


# key -> (parser, default)
KEYS = {
    "electric": (str, "arctan"),
    "lambda": (float, 50.0),
    "magnetic": (str, "none"),
    "kappa": (float, 0.1),
    "m": (int, 1),
    "r": (float, 0.5),
    "lambda_grid": (_float_list, [1.0, 5.0, 10.0, 50.0, 100.0]),
    "nodes": (int, 256),
    "epsilon": (_optional_float, None),
    "tol_crit": (float, 1e-7),
    "inner_tol": (float, 1e-10),
    "tol_ode": (float, 1e-6),
    "tol_shooting": (float, 1e-5),
    "shooting_steps": (int, 8192),
    "sep_tol": (float, 1e-2),
    "seed": (int, 42),
    "starts": (int, 12),
    "max_iters": (int, 300),
    "samples": (int, 1000),
    "trials": (int, 5),
    "tol": (float, 1e-12),
    "el_tol": (float, 1e-5),
    "trajectory": (str, None),
    "forcing": (str, None),
}


def read_config(path) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment.  Unknown keys are errors."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def build_config(raw: dict) -> dict:
    cfg = {}
    for key, (conv, default) in KEYS.items():
        if key in raw and raw[key] is not None:
            try:
                cfg[key] = conv(raw[key]) if isinstance(raw[key], str) else raw[key]
            except ValueError as exc:
                raise UsageError(f"bad value for {key}: {raw[key]!r} ({exc})") from None
        else:
            cfg[key] = default
    for key in ("tol_crit", "inner_tol", "tol_ode", "tol_shooting", "sep_tol", "tol", "el_tol"):
        if not cfg[key] > 0:
            raise UsageError(f"{key} must be positive, got {cfg[key]}")
    if not 0 < cfg["r"] < 1:
        raise UsageError(f"r must lie in (0, 1), got {cfg['r']}")
    if cfg["m"] < 1:
        raise UsageError("m must be >= 1")
    if cfg["nodes"] < 8 or cfg["nodes"] % 2:
        raise UsageError("nodes must be an even integer >= 8")
    if cfg["starts"] < 3 * cfg["m"]:
        raise UsageError(f"starts must be at least 3m = {3 * cfg['m']}")
    if cfg["epsilon"] is not None and not cfg["epsilon"] > 0:
        raise UsageError("epsilon must be positive")
    for key in ("lambda", "kappa"):
        if cfg[key] < 0:
            raise UsageError(f"{key} must be non-negative")
    if any(lam <= 0 for lam in cfg["lambda_grid"]):
        raise UsageError("lambda_grid entries must be positive")
    for key in ("max_iters", "samples", "trials", "shooting_steps"):
        if cfg[key] < 1:
            raise UsageError(f"{key} must be >= 1")
    return cfg


def _potentials(cfg, lam=None):
    try:
        V = electric_by_name(cfg["electric"], **{"lambda": cfg["lambda"] if lam is None else lam})
        W = magnetic_by_name(cfg["magnetic"], kappa=cfg["kappa"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return V, W


def _tolerances(cfg) -> Tolerances:
    return Tolerances(crit=cfg["tol_crit"], inner=cfg["inner_tol"], ode=cfg["tol_ode"],
                      shooting=cfg["tol_shooting"], shooting_steps=cfg["shooting_steps"])


def _budget(cfg, V, W):
    try:
        return alpha_bound(V, W, epsilon=cfg["epsilon"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _clean(obj):
    """Make a JSON-safe tree: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n")


def _versions() -> dict:
    return {"lorentz_orbits": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


# ---------------------------------------------------------------------------
# commands


def _orbit_checks(orbit_set) -> dict:
    """Per-orbit property matrix: S^1 honesty, separation, fixed-point exclusion."""
    rows = []
    orbits = orbit_set.orbits
    for i, o in enumerate(orbits):
        q = o.representative
        n = q.node_count
        honesty = max(orbit_distance(q, shift(q, k * TWO_PI / n)) for k in (1, n // 3, n // 2))
        sep = min((orbit_distance(q, p.representative) for j, p in enumerate(orbits) if j != i), default=math.inf)
        rows.append({
            "index": i,
            "s1_honesty": honesty,
            "s1_honesty_passed": honesty <= 1e-10,
            "min_separation": sep,
            "separation_passed": sep > orbit_set.metadata["sep_tol"],
            "not_fixed_point": not is_fixed_point(q.nodes, 1e-8),
            "negative_level": o.level < 0,
        })
    return {"orbits": rows, "passed": all(r["s1_honesty_passed"] and r["separation_passed"]
                                          and r["not_fixed_point"] and r["negative_level"] for r in rows)}


def _search(cfg, lam, out: Path, prefix: str):
    V, W = _potentials(cfg, lam)
    budget = _budget(cfg, V, W)
    m = cfg["m"]
    oset = multi_start(m, V, W, r=cfg["r"], extra_random_starts=cfg["starts"] - 3 * m, seed=cfg["seed"],
                       n=cfg["nodes"], budget=budget, tol=_tolerances(cfg), sep_tol=cfg["sep_tol"],
                       max_iters=cfg["max_iters"])
    files = []
    for i, o in enumerate(oset.orbits):
        name = f"{prefix}orbit_{i:02d}.csv"
        write_trajectory_csv(out / name, o.representative)
        files.append(name)
    neg = verify_negativity(m, cfg["r"], V, W, samples=cfg["samples"], seed=cfg["seed"], n=cfg["nodes"])
    try:
        rho = circular_orbit_radius(lam, 1) if cfg["electric"] == "arctan" and cfg["magnetic"] == "none" else None
    except NoCircularOrbit:
        rho = None
    rec = oset.record()
    for r, f in zip(rec["orbits"], files):
        r["csv"] = f
    rec["negativity"] = neg.record()
    rec["circular_radius_j1"] = rho
    rec["checks"] = _orbit_checks(oset)
    return oset, neg, rec


def cmd_solve(cfg, out: Path) -> tuple[dict, int]:
    _, _, rec = _search(cfg, cfg["lambda"], out, "")
    return rec, 0 if rec["checks"]["passed"] else 2


def cmd_sweep(cfg, out: Path) -> tuple[dict, int]:
    rows = []
    cells = []
    ok = True
    for lam in cfg["lambda_grid"]:
        oset, neg, rec = _search(cfg, lam, out, f"lambda_{lam!r}_")
        ok = ok and rec["checks"]["passed"]
        levels = [o.level for o in oset.orbits]
        rows.append([repr(lam), str(len(oset)), repr(min(levels)) if levels else "nan",
                     repr(oset.metadata["lambda_hat"]), repr(neg.margin)])
        cells.append({"lambda": lam, **rec})
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lambda", "orbit_count", "min_level", "lambda_hat", "negativity_margin"])
        w.writerows(rows)
    return {"cells": cells}, 0 if ok else 2


def cmd_verify(cfg, out: Path) -> tuple[dict, int]:
    if not cfg["trajectory"]:
        raise UsageError("verify needs --trajectory <csv>")
    try:
        q = read_trajectory_csv(cfg["trajectory"])
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    V, W = _potentials(cfg)
    budget = _budget(cfg, V, W)
    st = ProxSolver(V, W, budget, inner_tol=cfg["inner_tol"]).solve(q)
    br = action(q, V, W)
    rec = {"psi": br.psi, "f": br.f, "action": br.total, "sup_speed": q.sup_speed, "nodes": q.node_count}
    feasible = q.sup_speed < 1
    if feasible:
        rec["vi_residual"] = vi_residual(q, V, W, default_probes(q), extra_probes=[st.gamma])
        rec["ode_residual"] = ode_residual(q, V, W)
        rec["shooting_defect"] = shooting_defect(q, V, W, cfg["shooting_steps"])
    else:
        rec["vi_residual"] = rec["ode_residual"] = rec["shooting_defect"] = math.inf
    rec["grad_norm"] = grad_bound(st, budget)
    rec["cap_active"] = st.cap_active
    rec["fixed_point"] = is_fixed_point(q.nodes, 1e-8)
    rec["minimal_period_divisor"] = minimal_period_divisor(q, cfg["m"])
    gates = {
        "feasible": feasible,
        "negative_level": br.total < 0,
        "grad_norm": rec["grad_norm"] <= cfg["tol_crit"],
        "vi_residual": rec["vi_residual"] <= cfg["tol_crit"],
        "ode_residual": rec["ode_residual"] <= cfg["tol_ode"],
        "shooting_defect": rec["shooting_defect"] <= cfg["tol_shooting"],
        "not_fixed_point": not rec["fixed_point"],
        "cap_inactive": not st.cap_active,
    }
    rec["gates"] = gates
    rec["verdict"] = "verified" if all(gates.values()) else "rejected"
    return rec, 0 if all(gates.values()) else 2


def _random_smooth(rng, n, modes=3, scale=0.1):
    t = TWO_PI * np.arange(n) / n
    j = np.arange(1, modes + 1)
    c = rng.normal(size=(2, modes, 3)) * scale / j[None, :, None]
    return np.cos(np.outer(t, j)) @ c[0] + np.sin(np.outer(t, j)) @ c[1] + rng.normal(size=3) * scale


def cmd_lemmas(cfg, out: Path) -> tuple[dict, int]:
    V, W = _potentials(cfg)
    budget = _budget(cfg, V, W)
    rng = np.random.default_rng(cfg["seed"])
    n = min(cfg["nodes"], 128)
    trials = []
    ok = True
    for k in range(cfg["trials"]):
        x = _random_smooth(rng, n)
        v = np.max(np.linalg.norm(spectral_derivative(x), axis=1))
        if v >= 0.9:
            x = x * (0.9 / v)
        rep = check_el_properties(x, V, W, budget, tol=cfg["el_tol"], inner_tol=cfg["inner_tol"], seed=cfg["seed"] + k)
        trials.append({"trial": k, "checks": rep.as_dict(), "passed": rep.passed})
        ok = ok and rep.passed
    wirt = {}
    for m in (1, 2, 3):
        disk = ZmDisk(m, cfg["r"])
        worst = min(wirtinger_gap(disk.random_element(rng, n), m) for _ in range(50))
        wirt[str(m)] = {"min_gap": worst, "passed": worst >= -1e-10}
        ok = ok and worst >= -1e-10
    cons = check_consistency(V, W, seed=cfg["seed"])
    ok = ok and cons.passed
    rec = {
        "budget": {"alpha1": budget.alpha1, "alpha2": budget.alpha2, "epsilon": budget.epsilon},
        "el_trials": trials,
        "wirtinger": wirt,
        "potential_consistency": {"violations": cons.violations, "tolerances": cons.tolerances,
                                  "passed": cons.passed},
        "passed": ok,
    }
    return rec, 0 if ok else 2


def cmd_subproblem(cfg, out: Path) -> tuple[dict, int]:
    if not cfg["forcing"]:
        raise UsageError("subproblem needs --forcing <csv>")
    try:
        f = read_trajectory_csv(cfg["forcing"])
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    n = cfg["nodes"]
    if n != f.node_count:
        modes = min(n, f.node_count) // 2 - 1
        f = FourierTrajectory.from_trajectory(f, modes).to_trajectory(n)
    try:
        sol = solve_subproblem(f, tol=cfg["tol"])
    except SubproblemNotConverged as exc:
        return {"converged": False, "message": str(exc), "residual": exc.residual,
                "iterations": exc.iterations}, 2
    write_trajectory_csv(out / "solution.csv", sol.q)
    rec = {
        "converged": True,
        "nodes": n,
        "newton_iterations": sol.newton_iterations,
        "reduced_residual": sol.reduced_residual,
        "mean_check": sol.mean_check,
        "ode_residual": sol.ode_residual,
        "momentum_offset": sol.momentum_offset,
        "sup_speed": sol.q.sup_speed,
        "csv": "solution.csv",
    }
    return rec, 0


HANDLERS = {"solve": cmd_solve, "sweep": cmd_sweep, "verify": cmd_verify,
            "lemmas": cmd_lemmas, "subproblem": cmd_subproblem}


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lorentz-orbits", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="key = value file; command line flags override it")
    p.add_argument("--out", default=".", help="output directory (created if missing)")
    p.add_argument("-v", "--verbose", action="store_true")
    for key in KEYS:
        p.add_argument("--" + key.replace("_", "-"), dest=key, default=None)
    return p


def run(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        raw = read_config(args.config) if args.config else {}
        raw.update({k: getattr(args, k) for k in KEYS if getattr(args, k) is not None})
        cfg = build_config(raw)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        result, code = HANDLERS[args.command](cfg, out)
    except (UsageError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    report = {"command": args.command, "config": cfg, "versions": _versions(), "result": result,
              "exit_code": code}
    write_json(out / "report.json", report)
    write_json(out / "timings.json", {"wall_seconds": time.perf_counter() - t0,
                                      "finished_unix": time.time(), "out": str(out.resolve())})
    print(f"{args.command}: exit {code}, report at {out / 'report.json'}")
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
