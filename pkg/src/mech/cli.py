"""Command-line front end: ``mech <command> <model.toml> [--seed N] [--out DIR] [--json-only]``."""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import constraints, control, dynamics, lagrangian, noether, report, symcore
from .errors import MechError, ParseError, PreconditionError, SingularLagrangian
from .modelfile import Model, load_model
from .tangentgeo import along_tau, project_to_tau

COMMANDS = ("lagrangian", "noether", "constraints", "kl", "geodesic", "control")


def _system(model: Model, rng) -> lagrangian.LagrangianSystem:
    if model.lagrangian is None:
        raise PreconditionError("model has no [lagrangian] section")
    return lagrangian.build(model.lagrangian, model.chart, rng)


def _curve_csv(curve: dynamics.NumericCurve) -> str:
    return curve.to_csv()


def run_lagrangian(model: Model, rng) -> tuple[dict, dict]:
    sys_ = _system(model, rng)
    tc = sys_.chart
    out = {
        "L": sys_.L,
        "theta": str(sys_.theta),
        "omega": str(sys_.omega),
        "energy": sys_.energy,
        "hessian": [[sys_.hessian[i, j] for j in range(tc.n)] for i in range(tc.n)],
        "regular": sys_.regular,
        "legendre": list(sys_.legendre.FL.components),
        "dynamics": None,
    }
    csvs = {}
    if sys_.regular == "yes":
        Gamma = lagrangian.dynamics(sys_, rng)
        out["dynamics"] = {"forces": list(Gamma.forces), "field": str(Gamma.field)}
        x0 = model.integrate.get("x0")
        if x0 is not None:
            if len(x0) != 2 * tc.n:
                raise ParseError(f"[integrate] x0 needs {2 * tc.n} entries (positions then velocities)")
            T, h = float(model.integrate.get("T", 10.0)), float(model.integrate.get("h", 1e-3))
            curve = dynamics.integrate_sode(Gamma, x0, T, h)
            energy = symcore.compile_exprs([sys_.energy], tc.TQ.coords)
            e = [energy(*s)[0] for s in curve.states]
            out["trajectory"] = {"x0": x0, "T": T, "h": curve.h, "end": list(curve.end),
                                 "energy_drift": max(abs(v - e[0]) for v in e)}
            csvs["lagrangian"] = _curve_csv(curve)
    return out, csvs


def run_noether(model: Model, rng) -> tuple[dict, dict]:
    sys_ = _system(model, rng)
    if sys_.regular != "yes":
        raise SingularLagrangian(f"Noether analysis needs a regular Lagrangian (regular={sys_.regular})")
    tc = sys_.chart
    opts = model.noether
    n_traj, T, h = int(opts.get("n_trajectories", 3)), float(opts.get("T", 10.0)), float(opts.get("h", 1e-3))
    entries = []
    for item in model.symmetries:
        entry = {"kind": item.kind}
        if item.kind == "on_TQ":
            X = tc.tq_field(item.components)
            F = item.gauge if item.gauge is not None else symcore.as_expr(0)
            res = noether.check_thm1(sys_, X, F, rng)
            entry["sign_convention"] = "G = i_X theta_L - F"
            projected = noether.check_thm2(sys_, project_to_tau(tc, X), F, rng)
            entry["projected"] = {"verdict": projected.verdict, "G": projected.G}
            if res.is_symmetry and projected.is_symmetry:
                entry["projected"]["sum_with_G"] = symcore.simplify(res.G + projected.G)
        else:
            X = along_tau(tc, item.components)
            if item.gauge is None:
                F, entry["gauge_source"] = noether.derive_F(sys_, X), "derived"
            else:
                F, entry["gauge_source"] = item.gauge, "given"
            res = noether.check_thm2(sys_, X, F, rng)
            entry["sign_convention"] = "G = F - theta_L(X)"
        entry.update({"X": str(X), "F": res.F, "verdict": res.verdict, "G": res.G,
                      "residuals": {k: v for k, v in res.residuals.items() if isinstance(v, float)}})
        if res.is_symmetry:
            entry["drift"] = noether.verify_numeric(sys_, res.G, n_traj, T, h, rng)
            cand, G2, spread = noether.round_trip(sys_, res.G, rng)
            entry["round_trip"] = {"X": str(cand.X), "F": cand.F, "G": G2, "offset_spread": spread}
        entries.append(entry)
    consts = []
    for G in model.constants:
        cand = noether.symmetry_from_constant(sys_, G, rng)
        consts.append({"G": G, "X": str(cand.X), "F": cand.F,
                       "drift": noether.verify_numeric(sys_, G, n_traj, T, h, rng)})
    return {"symmetries": entries, "constants": consts,
            "numeric": {"n_trajectories": n_traj, "T": T, "h": h}}, {}


def run_constraints(model: Model, rng) -> tuple[dict, dict]:
    sys_ = _system(model, rng)
    max_iter = int(model.constraints.get("max_iter", 10))
    prob = constraints.lagrangian_problem(sys_)
    chain = constraints.lagrangian_chain(sys_, max_iter, rng)
    out = {
        "generations": chain.generations,
        "status": chain.status,
        "gamma": str(chain.gamma) if chain.gamma is not None else None,
        "parameters": list(chain.parameters),
        "n_parameters": len(chain.parameters),
        "existence": constraints.existence_constraints(prob, rng),
        "cross_report": chain.cross_report,
        "max_iter": max_iter,
    }
    if chain.gamma is not None:
        out["soundness_residual"] = constraints.soundness_residual(prob, chain, rng)
    return out, {}


def run_kl(model: Model, rng) -> tuple[dict, dict]:
    sys_ = _system(model, rng)
    op = lagrangian.evolution_operator(sys_)
    res = op.residuals()
    transfers = []
    for zeta in lagrangian.primary_constraints(sys_, rng):
        transfers.append({"zeta": zeta, "pullback": sys_.legendre.FL.pull(zeta),
                          "kl": symcore.simplify(lagrangian.kl_apply(op, zeta))})
    return {
        "K": list(op.K.components),
        "residuals": res,
        "residuals_zero": all(e == 0 for v in res.values() for e in v),
        "primary_constraints": transfers,
    }, {}


def _connection(model: Model) -> dynamics.Connection:
    sec = model.connection
    if sec is None:
        raise PreconditionError("model has no [connection] section")
    tc = model.chart
    if sec.metric is not None:
        return dynamics.Connection.levi_civita(tc, sec.metric, sec.guard)
    if sec.christoffel is not None:
        return dynamics.Connection.from_christoffel(tc, sec.christoffel, sec.guard)
    return dynamics.Connection(tc, sec.coefficients, None, sec.guard)


def run_geodesic(model: Model, rng) -> tuple[dict, dict]:
    conn = _connection(model)
    tc = conn.chart
    out = {"coefficients": [list(r) for r in conn.coefficients], "linear": conn.christoffel is not None}
    csvs = {}
    metric = None
    if model.connection.metric is not None:
        flat = [e for row in model.connection.metric for e in row]
        g = symcore.compile_exprs(flat, tc.Q.coords)
        metric = lambda x: np.array(g(*x), dtype=float).reshape(tc.n, tc.n)
    x0 = model.integrate.get("x0")
    if x0 is not None:
        if len(x0) != 2 * tc.n:
            raise ParseError(f"[integrate] x0 needs {2 * tc.n} entries (positions then velocities)")
        T, h = float(model.integrate.get("T", 5.0)), float(model.integrate.get("h", 1e-3))
        curve = dynamics.geodesic(conn, x0[:tc.n], x0[tc.n:], T, h)
        other = dynamics.integrate_sode(conn.geodesic_sode(), x0, T, h)
        geo = {"x0": x0, "T": T, "h": curve.h, "end": list(curve.end),
               "sode_agreement": max(abs(a - b) for s, r in zip(curve.states, other.states) for a, b in zip(s, r))}
        if metric is not None:
            speeds = [float(np.array(s[tc.n:]) @ metric(s[:tc.n]) @ np.array(s[tc.n:])) for s in curve.states]
            geo["speed_drift"] = max(speeds) - min(speeds)
        out["geodesic"] = geo
        csvs["geodesic"] = _curve_csv(curve)
    tr = model.connection.transport
    if tr is not None:
        T, h = float(tr.get("T", 2 * math.pi)), float(tr.get("h", 1e-3))
        sampled = dynamics.sample_curve(conn, tr["curve"], T, h)
        end = dynamics.parallel_transport(conn, sampled, tr["X0"])
        entry = {"curve": tr["curve"], "T": T, "h": sampled.h, "X0": tr["X0"], "end": list(map(float, end))}
        if metric is not None:
            x_start, x_end = sampled.states[0][:tc.n], sampled.end[:tc.n]
            X0 = np.array(tr["X0"])
            entry["norm_change"] = float(end @ metric(x_end) @ end - X0 @ metric(x_start) @ X0)
        out["transport"] = entry
    return out, csvs


def run_control(model: Model, rng) -> tuple[dict, dict]:
    sec = model.control
    if sec is None:
        raise PreconditionError("model has no [control] section")
    out, csvs = {}, {}
    if sec.A is not None:
        k = control.kalman_rank(control.LinearControlSystem(sec.A, sec.B))
        out["kalman"] = {"rank": k.rank, "controllable": k.controllable, "matrix": k.matrix}
    if sec.generators is not None:
        ds = control.DriftlessSystem.from_components(model.base_chart, sec.generators)
        point = sec.point if sec.point is not None else [0.0] * ds.n
        lr = control.lie_rank(ds, point)
        out["lie_rank"] = {"point": point, "rank": lr.rank, "controllable": lr.controllable,
                           "bracket_depth": lr.bracket_depth}
        out["rank_profile"] = control.rank_profile(ds, rng)
        try:
            out["involutive"] = control.involutive(ds, rng)
        except PreconditionError as exc:
            out["involutive"] = None
            out["involutive_error"] = f"{type(exc).__name__}: {exc}"
        if sec.target is not None:
            h = float(model.integrate.get("h", 1e-3))
            r = control.reachability_demo(ds, point, sec.target, sec.budget, h)
            out["reachability"] = {"x0": point, "target": sec.target, "reached": r.reached,
                                   "endpoint": list(r.endpoint), "error": r.error,
                                   "segments": len(r.signal.segments) if r.signal else 0}
            if r.signal is not None:
                csvs["control"] = r.signal.to_csv()
    return out, csvs


RUNNERS = {
    "lagrangian": run_lagrangian,
    "noether": run_noether,
    "constraints": run_constraints,
    "kl": run_kl,
    "geodesic": run_geodesic,
    "control": run_control,
}


def applicable(model: Model) -> list[str]:
    names = []
    if model.lagrangian is not None:
        names.append("lagrangian")
        if model.symmetries or model.constants:
            names.append("noether")
        names += ["constraints", "kl"]
    if model.connection is not None:
        names.append("geodesic")
    if model.control is not None:
        names.append("control")
    return names


def run(command: str, model: Model, seed: int) -> tuple[dict, dict, int]:
    """Run analyses; returns (report, csv files keyed by analysis, exit code)."""
    names = applicable(model) if command == "all" else [command]
    sections, csvs, code = {}, {}, 0
    for name in names:
        try:
            sections[name], files = RUNNERS[name](model, report.analysis_rng(seed, name))
            csvs.update(files)
        except MechError as exc:
            if command != "all":
                raise
            sections[name] = {"error": {"type": type(exc).__name__, "message": str(exc)}}
            code = max(code, exc.exit_code)
    return report.envelope(model, seed, sections), csvs, code


def _summary(rep: dict) -> str:
    lines = [f"model {rep['model']['name']} (seed {rep['seed']})"]
    for name, sec in sorted(rep["analyses"].items()):
        lines.append(f"== {name} ==")
        plain = report.to_plain(sec)
        for k in sorted(plain):
            text = report.dumps(plain[k]).strip().replace("\n", " ")
            text = " ".join(text.split())
            lines.append(f"  {k}: {text if len(text) <= 160 else text[:157] + '...'}")
    return "\n".join(lines)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="mech", description="Geometric mechanics analyses of a model file.")
    ap.add_argument("command", choices=COMMANDS + ("all",))
    ap.add_argument("model", help="path to a TOML model file")
    ap.add_argument("--seed", type=int, default=None, help="RNG seed (default: [integrate] seed or 0)")
    ap.add_argument("--out", default=None, help="output directory (default: next to the model)")
    ap.add_argument("--json-only", action="store_true", help="print the JSON report and skip CSV files")
    args = ap.parse_args(argv)

    try:
        model = load_model(args.model)
        seed = args.seed if args.seed is not None else int(model.integrate.get("seed", 0))
        rep, csvs, code = run(args.command, model, seed)
    except MechError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code

    out = Path(args.out) if args.out else Path(args.model).resolve().parent
    out.mkdir(parents=True, exist_ok=True)
    text = report.dumps(rep)
    (out / f"{model.name}.report.json").write_text(text)
    if args.json_only:
        sys.stdout.write(text)
    else:
        for name, body in sorted(csvs.items()):
            (out / f"{model.name}.{name}.csv").write_text(body)
        print(_summary(rep))
    for name, sec in sorted(rep["analyses"].items()):
        if isinstance(sec, dict) and "error" in sec:
            print(f"error in {name}: {sec['error']['type']}: {sec['error']['message']}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
