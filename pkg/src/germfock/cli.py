"""Command-line front end: ``germfock <subcommand> --scenario <file|name> --out <dir>``.

Exit status: 0 when every asserted tolerance passes, 2 on a malformed
scenario, 3 on a tolerance or numerical failure (a JSON failure record is
written to ``<out>/failure.json`` and echoed on stdout).
"""
import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .canonical import (AssemblySpec, QuantizationError, assemble, quantization_defects,
                        sector_component_circle)
from .dynamics import IntegrationError, evolve
from .fock import state_to_sector
from .gaussian import QuadratureError
from .geometry import build_M, validate_germ, validate_manifold
from .scenario import ConfigError, Scenario, load_scenario
from .verification import (energy_residual, epsilon_scan, evolved_source, fit_slope, stationary_energy)

log = logging.getLogger("germfock")

EXIT_OK, EXIT_CONFIG, EXIT_FAIL = 0, 2, 3
SUMMARY_SCHEMA = "germfock.summary/1"


class ToleranceFailure(RuntimeError):
    def __init__(self, code, message, detail=None):
        super().__init__(message)
        self.code = code
        self.detail = detail or {}


def fmt(x):
    """17 significant digits, stable across runs."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(fmt(x))
    if isinstance(x, complex):
        return [float(fmt(x.real)), float(fmt(x.imag))]
    return x


def _write_json(path, obj):
    obj = {"schema": SUMMARY_SCHEMA, **obj}
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) if isinstance(v, (float, int, np.floating, np.integer)) else v for v in r])


def _parse_overrides(text):
    out = {}
    if not text:
        return out
    for item in text.split(","):
        if "=" not in item:
            raise ConfigError(f"--tol-overrides: expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = float(v)
        except ValueError:
            raise ConfigError(f"--tol-overrides: {k.strip()} is not a number") from None
    return out


def _spec(sc: Scenario, eps, grid_scale):
    m = sc.manifold(eps, grid_scale)
    g = sc.frame(m, eps)
    spec = AssemblySpec(m, g, eps, nu=sc.nu, quant_tol=sc.tolerances["quantization"])
    return spec, sc.truncation(eps, m)


# ------------------------------------------------------------ subcommands


def cmd_validate(sc, out, args):
    tol = sc.tolerances["axiom"]
    results, ok = [], True
    for eps in sc.eps_list:
        spec, _ = _spec(sc, eps, args.grid_scale)
        rm = validate_manifold(spec.manifold, tol)
        rg = validate_germ(spec.frame, spec.manifold, tol)
        q = quantization_defects(spec)
        q_ok = all(v <= sc.tolerances["quantization"] for v in q.values())
        ok = ok and rm.ok and rg.ok and q_ok
        results.append({"eps": eps, "manifold": rm.to_dict(), "germ": rg.to_dict(),
                        "quantization": {"defects": q, "ok": q_ok}})
    summary = {"subcommand": "validate", "results": results, "pass": ok}
    _write_json(out / "validate.json", summary)
    if not ok:
        raise ToleranceFailure("axiom", "germ, manifold or quantization check failed", summary)
    return summary


def cmd_assemble(sc, out, args):
    rows, meta = [], []
    for i, eps in enumerate(sc.eps_list):
        spec, trunc = _spec(sc, eps, args.grid_scale)
        try:
            vec = assemble(spec, trunc)
        except QuantizationError as exc:
            raise ToleranceFailure("quantization", str(exc), {"eps": eps}) from None
        except QuadratureError as exc:
            raise ToleranceFailure("quadrature", str(exc), {"eps": eps}) from None
        (out / f"state_{i}.json").write_text(vec.state.to_text())
        for N, v in enumerate(vec.state.sector_norms()):
            rows.append((eps, N, float(v)))
        meta.append({"eps": eps, "file": f"state_{i}.json", "n_points": vec.n_points,
                     "quad_error": vec.quad_error, "trunc_loss": vec.trunc_loss, "norm": vec.norm(),
                     "N_max": trunc.N_max, "particle_number": vec.info["particle_number"]})
    _write_csv(out / "sector_norms.csv", ["eps", "N", "norm"], rows)
    summary = {"subcommand": "assemble", "results": meta, "pass": True}
    _write_json(out / "assemble.json", summary)
    return summary


def cmd_evolve(sc, out, args):
    T, steps, samples = sc.time
    eps = sc.eps_list[0]
    spec, _ = _spec(sc, eps, args.grid_scale)
    m, g = spec.manifold, spec.frame
    every = max(1, steps // max(1, samples - 1))
    try:
        traj = evolve(sc.hamiltonian(), m.phi, T, steps, frame0=(g.F, g.G), store_every=every)
    except IntegrationError as exc:
        raise ToleranceFailure("integration", str(exc)) from None
    rows = []
    phi = traj.phi.reshape(len(traj.times), -1, m.D)
    for it, t in enumerate(traj.times):
        for p in range(phi.shape[1]):
            for j in range(m.D):
                z = phi[it, p, j]
                rows.append((float(t), p, j, float(z.real), float(z.imag)))
    _write_csv(out / "trajectory.csv", ["t", "point", "mode", "phi_re", "phi_im"], rows)
    drows = [(float(t), *map(float, d)) for t, d in zip(traj.times, traj.defects)]
    _write_csv(out / "defects.csv", ["t", "d1", "d2", "d3", "d4"], drows)
    worst = float(traj.defects.max())
    ok = worst <= sc.tolerances["axiom"]
    summary = {"subcommand": "evolve", "max_defect": worst, "pass": ok}
    _write_json(out / "evolve.json", summary)
    if not ok:
        raise ToleranceFailure("canonical_defect", f"proper-canonical defect {worst:.3e}", summary)
    return summary


def cmd_residual_scan(sc, out, args):
    H = sc.hamiltonian()
    T, steps, _ = sc.time
    if len(sc.eps_list) < 3:
        raise ConfigError("residual-scan: eps needs at least three values")

    def make_source(eps):
        spec, trunc = _spec(sc, eps, args.grid_scale)
        return evolved_source(spec, H, trunc, steps)

    try:
        rep = epsilon_scan(H, make_source, sc.eps_list, T, floor=sc.tolerances["residual_floor"])
    except (QuantizationError, IntegrationError, QuadratureError) as exc:
        raise ToleranceFailure(type(exc).__name__.replace("Error", "").lower(), str(exc)) from None
    except ValueError as exc:
        raise ToleranceFailure("truncation", str(exc)) from None
    _write_csv(out / "residuals.csv", ["eps", "t", "r", "norm"], rep.rows())
    summary = rep.to_dict()
    slope_ok = rep.status == "floor" or rep.slope >= sc.tolerances["min_slope"]
    norm_ok = rep.norm_ratio() < sc.tolerances["norm_ratio"]
    summary.update(subcommand="residual-scan", slope_ok=slope_ok, norm_ok=norm_ok,
                   **{"pass": slope_ok and norm_ok})
    _write_json(out / "residuals.json", summary)
    if not (slope_ok and norm_ok):
        raise ToleranceFailure("residual", "residual scaling or norm bound failed", summary)
    return summary


def cmd_stationary(sc, out, args):
    if sc.data["manifold"]["family"] != "stationary_orbit":
        raise ConfigError("stationary: manifold.family must be 'stationary_orbit'")
    H = sc.hamiltonian()
    rows, E4s, E5s, r4s, r5s, norms = [], [], [], [], [], []
    for eps in sc.eps_list:
        vals = {}
        for conv in ("monodromy", "trivial"):
            data = sc.to_dict()
            data["germ"]["convention"] = conv
            sub = Scenario(data, sc.source, sc.tolerances)
            phi, Omega, F, G, beta = sub._stationary(eps)
            nu = sub.nu or (0,) * (sub.D - 1)
            E = stationary_energy(H, phi, F, G, eps, beta=beta, Omega=Omega,
                                  nu=nu if conv == "trivial" else None)
            spec, trunc = _spec(sub, eps, args.grid_scale)
            vec = assemble(spec, trunc)
            vals[conv] = (E, energy_residual(H, eps, vec, E), vec.norm())
        (E4, r4, n4), (E5, r5, n5) = vals["monodromy"], vals["trivial"]
        rows.append((eps, E4, E5, abs(E4 - E5), r4, r5, n4, n5))
        E4s.append(E4)
        E5s.append(E5)
        r4s.append(r4)
        r5s.append(r5)
        norms += [n4, n5]
    _write_csv(out / "stationary.csv",
               ["eps", "E_monodromy", "E_trivial", "abs_diff", "res_monodromy", "res_trivial",
                "norm_monodromy", "norm_trivial"], rows)
    slope, rms = fit_slope(sc.eps_list, np.abs(np.array(E4s) - np.array(E5s)))
    order = np.argsort(-np.array(sc.eps_list))
    dec = all(np.all(np.diff(np.array(r)[order]) < 0) for r in (r4s, r5s))
    slope_ok = sc.tolerances["energy_slope_low"] <= slope <= sc.tolerances["energy_slope_high"]
    ratio = max(norms) / min(norms)
    ok = slope_ok and dec and ratio < sc.tolerances["norm_ratio"]
    summary = {"subcommand": "stationary", "energy_slope": slope, "fit_residual": rms,
               "residuals_decreasing": dec, "norm_ratio": ratio, "pass": ok}
    _write_json(out / "stationary.json", summary)
    if not ok:
        raise ToleranceFailure("stationary", "energy convention slope or residual trend failed", summary)
    return summary


def cmd_example2(sc, out, args):
    if sc.data["manifold"]["family"] != "circle":
        raise ConfigError("example2: manifold.family must be 'circle'")
    block = sc.data.get("example2", {"N": 4})
    N = int(block.get("N", 4))
    data = sc.to_dict()
    data["manifold"]["n_points"] = int(block.get("n_points", 256))
    sub = Scenario(data, sc.source, sc.tolerances)
    m = sub.manifold(grid_scale=args.grid_scale)
    eps = float(np.sum(np.abs(m.phi[0]) ** 2)) / N
    data["eps"] = [eps]
    sub = Scenario(data, sc.source, sc.tolerances)
    spec, trunc = _spec(sub, eps, args.grid_scale)
    vec = assemble(spec, trunc)
    T = state_to_sector(vec.state, N)
    pt = spec.manifold.phi[0]
    Mt = build_M(spec.frame, spec.manifold, (0,))
    ref = sector_component_circle(pt, Mt, N, eps=eps)
    c = np.vdot(ref, T) / np.vdot(ref, ref)
    dev = float(np.linalg.norm(T - c * ref) / np.linalg.norm(T))
    sn = vec.state.sector_norms()
    off = float(np.sqrt(np.sum(np.delete(sn, N) ** 2)))
    ok = dev <= sc.tolerances["sector_deviation"] and off <= vec.quad_error
    _write_csv(out / "example2.csv", ["N", "eps", "n_points", "deviation", "off_sector", "quad_error", "norm"],
               [(N, eps, vec.n_points, dev, off, vec.quad_error, vec.norm())])
    summary = {"subcommand": "example2", "N": N, "eps": eps, "deviation": dev, "off_sector": off,
               "quad_error": vec.quad_error, "scale": complex(c), "pass": ok}
    _write_json(out / "example2.json", summary)
    if not ok:
        raise ToleranceFailure("sector", "closed-form comparison failed", summary)
    return summary


COMMANDS = {
    "validate": cmd_validate,
    "assemble": cmd_assemble,
    "evolve": cmd_evolve,
    "residual-scan": cmd_residual_scan,
    "stationary": cmd_stationary,
    "example2": cmd_example2,
}


def build_parser():
    p = argparse.ArgumentParser(prog="germfock", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=sorted(COMMANDS))
    p.add_argument("--scenario", required=True, help="scenario file or shipped scenario name")
    p.add_argument("--out", default="germfock_out", help="output directory")
    p.add_argument("--grid-scale", type=int, default=1, help="multiply quadrature points per axis")
    p.add_argument("--deterministic", action="store_true", help="fixed sequential reduction order")
    p.add_argument("--tol-overrides", default="", help="key=value,... tolerance overrides")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    out = Path(args.out)
    try:
        if args.grid_scale < 1:
            raise ConfigError("--grid-scale: must be a positive integer")
        sc = load_scenario(args.scenario, _parse_overrides(args.tol_overrides))
    except ConfigError as exc:
        print(f"germfock: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out.mkdir(parents=True, exist_ok=True)
    try:
        summary = COMMANDS[args.subcommand](sc, out, args)
    except ConfigError as exc:
        print(f"germfock: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ToleranceFailure, IntegrationError, QuadratureError, QuantizationError) as exc:
        code = getattr(exc, "code", type(exc).__name__)
        rec = {"subcommand": args.subcommand, "scenario": sc.name,
               "code": code, "message": str(exc), "detail": getattr(exc, "detail", {})}
        _write_json(out / "failure.json", rec)
        print(json.dumps({"code": code, "message": str(exc)}))
        return EXIT_FAIL
    print(json.dumps({"subcommand": args.subcommand, "scenario": sc.name, "pass": True}))
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
