"""``exitdim`` command line.

Exit status: 0 when everything ran and every check passed, 2 on a numeric
failure, 1 on usage or IO errors.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from .exit import ball_region, monte_carlo_exit, solve_exit_times
from .graphs import ApproxGraph, covering_graph, proximity_graph
from .kernels import KERNEL_KINDS, ball_kernel_p, ball_kernel_w, dump_kernel_csv, graph_kernel, load_kernel, save_kernel
from .nets import NetIndex, build_epsilon_net
from .pipeline import PipelineError, RunConfig, dumps_json, export, run_pipeline
from .spaces import FractalSpec, ScalarField, assign_measure, build_fractal, export_points_csv, koch_alpha_field, load_space, save_space
from .spectral import bottom_eigenvalue, green_matrix, killed_operator, spectral_radius_killed

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_json(path):
    with open(path) as fh:
        return json.load(fh)


def _write_json(obj, path):
    with open(path, "w") as fh:
        fh.write(dumps_json(obj) + "\n")


def _resolve(ref: str, relative_to: str) -> str:
    return ref if os.path.isabs(ref) else os.path.join(os.path.dirname(os.path.abspath(relative_to)), ref)


# ---------------------------------------------------------------------------
# commands


def cmd_generate(a):
    spec = FractalSpec.from_dict(_read_json(a.spec))
    space = build_fractal(spec, point_cap=a.point_cap)
    if a.measure == "diameter_power":
        if a.Q is not None:
            Q = ScalarField.constant(space.n, a.Q, "Q")
        elif spec.kind == "koch":
            Q = ScalarField(koch_alpha_field(space).values, "Q")
        else:
            raise UsageError("--Q is required for diameter_power outside Koch curves")
        space = assign_measure(space, "diameter_power", Q)
    elif a.measure == "uniform_cell" and spec.kind not in ("euclidean_grid", "path_graph"):
        space = assign_measure(space, "uniform_cell")
    save_space(space, a.out)
    if a.export_csv:
        export_points_csv(space, a.export_csv)
    print(f"{space.n} points -> {a.out}")
    return EXIT_OK


def cmd_net(a):
    space = load_space(a.space)
    net = build_epsilon_net(space, a.epsilon, seed=a.seed)
    d = net.to_dict()
    d["space"] = os.path.abspath(a.space)
    _write_json(d, a.out)
    print(f"{len(net)} members at epsilon={a.epsilon} -> {a.out}")
    return EXIT_OK


def cmd_graph(a):
    nd = _read_json(a.net)
    space_path = a.space or _resolve(nd.get("space", ""), a.net)
    if not space_path:
        raise UsageError("net.json names no space; pass --space")
    space = load_space(space_path)
    net = NetIndex.from_dict(nd)
    if a.kind == "proximity":
        g = proximity_graph(space, net, a.rho, self_loops=not a.no_loops)
    else:
        g = covering_graph(space, net, a.eta, self_loops=not a.no_loops)
    d = g.to_dict()
    d["space"] = os.path.abspath(space_path)
    _write_json(d, a.out)
    print(f"{g.n_vertices} vertices, {len(d['edges'])} edges -> {a.out}")
    return EXIT_OK


def cmd_kernel(a):
    if a.kind.startswith("graph"):
        if not a.graph:
            raise UsageError(f"--graph is required for {a.kind}")
        gd = _read_json(a.graph)
        space = load_space(a.space or _resolve(gd["space"], a.graph))
        graph = ApproxGraph.from_dict(gd)
        K = graph_kernel(graph, space, "uniform" if a.kind == "graph_uniform" else "symmetrized")
    else:
        if not a.space or a.r is None:
            raise UsageError(f"--space and --r are required for {a.kind}")
        space = load_space(a.space)
        if a.kind == "ball_w":
            K = ball_kernel_w(space, a.r)
        else:
            if a.beta is None:
                raise UsageError("--beta is required for ball_p")
            K = ball_kernel_p(space, a.r, _beta_arg(a.beta, space))
    save_kernel(K, a.out)
    if a.dump_csv:
        dump_kernel_csv(K, a.dump_csv)
    print(f"{a.kind}: {K.n_states} states, {K.P.nnz} entries -> {a.out}")
    return EXIT_OK


def _beta_arg(text: str, space):
    """A number, or ``2alpha`` for twice the Koch dimension function."""
    if text == "2alpha":
        return 2 * koch_alpha_field(space).values
    return float(text)


def cmd_exit(a):
    K = load_kernel(a.kernel)
    reg = ball_region(K, a.center, a.radius, closed=not a.open)
    field = solve_exit_times(K, reg)
    ids = K.states[reg.mask]
    lines = []
    if a.mc:
        starts = ids if a.mc_all else np.array([a.center])
        lines.append("id,phi,stderr")
        for k, s in enumerate(starts):
            mc = monte_carlo_exit(K, reg, int(s), a.mc, seed=a.seed + k)
            lines.append(f"{int(s)},{mc['mean']:.17g},{mc['stderr']:.17g}")
        z = mc["mean"] - field.values[K.state_index(int(starts[-1]))]
        print(f"monte carlo at {int(starts[-1])}: {mc['mean']:.6g} +- {mc['stderr']:.3g} (solve differs by {z:.3g})")
    else:
        lines.append("id,phi")
        lines += [f"{int(i)},{v:.17g}" for i, v in zip(ids, field.values[reg.mask])]
    with open(a.out, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"{reg.size} states, max phi {field.max():.6g}, residual {field.residual:.2e} -> {a.out}")
    return EXIT_OK


def cmd_spectrum(a):
    K = load_kernel(a.kernel)
    reg = ball_region(K, a.center, a.radius, closed=not a.open)
    op = killed_operator(K, reg)
    rad = spectral_radius_killed(op)
    lam = bottom_eigenvalue(op)["lambda1"]
    e_plus = solve_exit_times(K, reg).max()
    G = green_matrix(op)
    out = {
        "lambda1": lam,
        "spectral_radius": rad["rho"],
        "spectral_radius_bound": rad["upper_bound"],
        "faber_krahn": lam * e_plus,
        "e_plus": e_plus,
        "green_symmetry_violation": G.symmetry_violation(),
        "n_states": op.size,
        "center": int(a.center),
        "radius": float(a.radius),
    }
    _write_json(out, a.out)
    print(f"lambda1 {lam:.6g}, rho {rad['rho']:.8f}, lambda1*E+ {lam * e_plus:.4f} -> {a.out}")
    if not (rad["upper_bound"] < 1 - 1e-6 and out["green_symmetry_violation"] < 1e-8 and lam * e_plus > 0):
        return EXIT_NUMERIC
    return EXIT_OK


def _config_from(path, overrides: dict, base: dict | None = None) -> RunConfig:
    d = dict(base or {})
    if path:
        d.update(_read_json(path))
    d.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.from_dict(d)


def _override_args(a) -> dict:
    return {f.name: getattr(a, f"cfg_{f.name}", None) for f in dataclasses.fields(RunConfig)}


def cmd_exponents(a):
    space = load_space(a.space)
    meta = space.meta
    base = {"space": {"kind": meta["kind"], "stage": meta.get("stage", 0), "params": meta.get("params", [])}, "p_kernel": False, "faber_krahn": False}
    over = _override_args(a)
    over.update(results_path=a.out, series_path=a.plot_data)
    cfg = _config_from(a.config, over, base)
    b = run_pipeline(cfg, space=space)
    flagged = [c["id"] for c in b.centers if any(v["flagged"] for v in c["beta"].values())]
    print(f"{len(b.centers)} centers -> {a.out}" + (f"; no admissible beta fit at {flagged}" if flagged else ""))
    return EXIT_NUMERIC if flagged else EXIT_OK


def cmd_run(a):
    over = _override_args(a)
    if a.out:
        over["results_path"] = a.out
    if a.plot_data:
        over["series_path"] = a.plot_data
    cfg = _config_from(a.config, over)
    b = run_pipeline(cfg)
    flagged = [c["id"] for c in b.centers if any(v["flagged"] for v in c["beta"].values())]
    fk = b.spectral.get("faber_krahn")
    bad_fk = fk is not None and not (fk["c_min"] > 0 and fk["ratio"] < cfg.tolerances["fk_ratio"])
    print(f"run {b.provenance['config_hash'][:12]}: {len(b.centers)} centers" + (f" -> {cfg.results_path}" if cfg.results_path else ""))
    if not cfg.results_path:
        print(dumps_json(b.to_dict()))
    return EXIT_NUMERIC if flagged or bad_fk else EXIT_OK


def cmd_verify(a):
    from .acceptance import run_checks

    only = [int(x) for x in a.only.split(",")] if a.only else None
    results = run_checks(only)
    if a.json:
        _write_json([dict(number=r.number, name=r.name, passed=r.passed, summary=r.summary, seconds=r.seconds, details=r.details) for r in results], a.json)
    n_pass = sum(r.passed for r in results)
    print(f"{n_pass}/{len(results)} criteria passed")
    return EXIT_OK if n_pass == len(results) else EXIT_NUMERIC


# ---------------------------------------------------------------------------
# parser


def _json_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _add_config_flags(p, exclude=()):
    g = p.add_argument_group("config overrides (JSON values; flags win over the file)")
    for f in dataclasses.fields(RunConfig):
        if f.name in exclude:
            continue
        g.add_argument(f"--{f.name.replace('_', '-')}", dest=f"cfg_{f.name}", type=_json_value, default=None, metavar="VALUE")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="exitdim", description="Exit times and exponents on variable-dimension fractals.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("generate", help="build a space from a JSON spec")
    s.add_argument("--spec", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--export-csv")
    s.add_argument("--measure", choices=["uniform_cell", "diameter_power", "none"], default="uniform_cell")
    s.add_argument("--Q", type=float)
    s.add_argument("--point-cap", type=int, default=10**6)
    s.set_defaults(fn=cmd_generate)

    s = sub.add_parser("net", help="greedy epsilon-net")
    s.add_argument("--space", required=True)
    s.add_argument("--epsilon", type=float, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_net)

    s = sub.add_parser("graph", help="proximity or covering graph on a net")
    s.add_argument("--net", required=True)
    s.add_argument("--space")
    s.add_argument("--kind", choices=["proximity", "covering"], default="proximity")
    s.add_argument("--rho", type=float, default=2.0)
    s.add_argument("--eta", type=float, default=1.0)
    s.add_argument("--no-loops", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_graph)

    s = sub.add_parser("kernel", help="build a walk kernel")
    s.add_argument("--kind", choices=KERNEL_KINDS, required=True)
    s.add_argument("--space")
    s.add_argument("--graph")
    s.add_argument("--r", type=float)
    s.add_argument("--beta", help="number, or 2alpha on Koch curves")
    s.add_argument("--out", required=True)
    s.add_argument("--dump-csv")
    s.set_defaults(fn=cmd_kernel)

    s = sub.add_parser("exit", help="mean exit times from a ball")
    s.add_argument("--kernel", required=True)
    s.add_argument("--center", type=int, required=True)
    s.add_argument("--radius", type=float, required=True)
    s.add_argument("--open", action="store_true", help="use the open ball")
    s.add_argument("--out", required=True)
    s.add_argument("--mc", type=int, default=0, help="Monte Carlo paths per start")
    s.add_argument("--mc-all", action="store_true", help="estimate at every state of the ball")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=cmd_exit)

    s = sub.add_parser("exponents", help="alpha and beta sweeps on a saved space")
    s.add_argument("--space", required=True)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--plot-data")
    _add_config_flags(s, exclude=("space", "results_path", "series_path"))
    s.set_defaults(fn=cmd_exponents)

    s = sub.add_parser("spectrum", help="spectral quantities of a killed kernel")
    s.add_argument("--kernel", required=True)
    s.add_argument("--center", type=int, required=True)
    s.add_argument("--radius", type=float, required=True)
    s.add_argument("--open", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_spectrum)

    s = sub.add_parser("run", help="full pipeline from a JSON config")
    s.add_argument("--config")
    s.add_argument("--out")
    s.add_argument("--plot-data")
    _add_config_flags(s)
    s.set_defaults(fn=cmd_run)

    s = sub.add_parser("verify", help="run the acceptance checks")
    s.add_argument("--only", help="comma-separated criterion numbers")
    s.add_argument("--json")
    s.set_defaults(fn=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    try:
        return a.fn(a)
    except (PipelineError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"exitdim: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, ValueError, KeyError, TypeError, OSError, json.JSONDecodeError) as exc:
        print(f"exitdim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
