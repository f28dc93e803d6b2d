"""Command-line front end.

Exit codes: 0 success, 1 runtime error (or a failed graph check), 2 usage or
configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

from . import dgp, experiments as X, estimators as E, graph as G
from .errors import ConfigError, ProxCausalError

log = logging.getLogger("proxcausal")


class UsageError(Exception):
    pass


def _write(text: str, out) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def _records(rows: list[dict], columns, fmt: str) -> str:
    if fmt == "json":
        return json.dumps([{c: r.get(c) for c in columns} for r in rows], indent=2) + "\n"
    return X.to_csv(rows, columns)


def _load_graph(arg: str) -> G.CausalGraph:
    if arg.lower() in G.FIGURES:
        return G.FIGURES[arg.lower()]
    with open(arg) as fh:
        return G.CausalGraph.from_text(fh.read())


def _labeling(arg: str) -> G.RoleLabeling:
    if arg == "canonical":
        return G.CANONICAL
    kw = {}
    for part in arg.split(","):
        role, sep, node = part.partition("=")
        role = role.strip().lower()
        if not sep or role not in ("x", "y", "z", "w", "u"):
            raise UsageError(f"bad labeling entry {part!r}; expected role=node")
        kw[role] = node.strip()
    return replace(G.CANONICAL, **kw)


def _levels(arg):
    out = {}
    for part in (arg or "").split(","):
        if not part.strip():
            continue
        node, sep, n = part.partition("=")
        try:
            out[node.strip()] = int(n)
        except ValueError:
            raise UsageError(f"bad levels entry {part!r}; expected node=int") from None
    return out


def cmd_check_graph(args) -> int:
    g = _load_graph(args.graph)
    r = _labeling(args.labeling)
    reports = []
    if args.criteria in ("equivalence", "both"):
        reports.append(("equivalence class", G.check_equivalence_class(g, r)))
    if args.criteria in ("miao", "both"):
        reports.append(("proxy conditions 1-3", G.check_miao_conditions(g, r, _levels(args.levels))))
    if args.format == "json":
        text = json.dumps({
            title: [{"condition": e.name, "status": e.status, "holds": e.holds, "witness": e.witness}
                    for e in rep.entries]
            for title, rep in reports
        }, indent=2) + "\n"
    else:
        text = "\n".join(f"# {title}\n{rep.format()}" for title, rep in reports) + "\n"
    _write(text, args.out)
    return 0 if all(rep.all_hold for _, rep in reports) else 1


def _spec_from_args(args) -> dgp.DgpSpec:
    if args.spec:
        return dgp.load_spec(args.spec)
    return dgp.default_spec(args.graph_id)


def cmd_simulate(args) -> int:
    spec = _spec_from_args(args)
    if args.n < 1:
        raise UsageError("--n must be positive")
    data = dgp.sample(spec, args.n, args.seed)
    if args.format == "json":
        text = json.dumps({"columns": list(data.columns), "latent": sorted(data.latent),
                           "seed": args.seed, "rows": data.values.tolist()}) + "\n"
    else:
        text = data.to_csv()
    _write(text, args.out)
    return 0


ESTIMATE_COLUMNS = ("method", "p_do_0", "p_do_1", "ate", "cond_x0", "cond_x1", "invertible",
                    "warnings", "ci_low", "ci_high")


def cmd_estimate(args) -> int:
    adjust = [a.strip() for a in args.adjust.split(",") if a.strip()]
    if args.population:
        if not (args.spec or args.graph_id):
            raise UsageError("--population needs --spec or --graph-id")
        source = E.ProbModel.from_joint(dgp.exact_joint(_spec_from_args(args)))
        model = source
    else:
        if not args.data:
            raise UsageError("--data is required unless --population is given")
        source = dgp.Dataset.from_csv(args.data)
        model = E.fit(source)
    rows = []
    try:
        rows.append(E.proximal_g(model, cond_cutoff=args.cond_cutoff).to_record())
    except (E.Singular, ProxCausalError) as exc:
        rows.append({"method": E.PROXIMAL, "invertible": False, "warnings": str(exc)})
    rows.append(E.backdoor_g(model, adjust).to_record())
    rows.append(E.regression_ate(source, adjust).to_record())
    _write(_records(rows, ESTIMATE_COLUMNS, args.format), args.out)
    return 0


def cmd_study(args) -> int:
    if args.config:
        cfg = X.load_config(args.config, study=args.command)
    else:
        cfg = X.ExperimentConfig(study=args.command)
    changes = {}
    for flag in ("seed", "n_runs", "n_per_run", "threads", "param", "cond_cutoff"):
        v = getattr(args, flag, None)
        if v is not None:
            changes[flag] = v
    if args.population:
        changes["population"] = True
    if getattr(args, "grid", None):
        try:
            changes["grid"] = tuple(float(v) for v in args.grid.split(","))
        except ValueError:
            raise UsageError(f"bad --grid {args.grid!r}") from None
    if "param" in changes and "grid" not in changes:
        changes["grid"] = ()
    cfg = replace(cfg, **changes)
    log.info("running %s (n_runs=%d, n_per_run=%d, population=%s)",
             cfg.study, cfg.n_runs, cfg.n_per_run, cfg.population)
    result = X.run_study(cfg)
    rows, columns = X.study_rows(cfg, result)
    if not rows:
        log.error("study produced no output")
        return 1
    _write(_records(rows, columns, args.format), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="proxcausal", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, formats=("csv", "json")):
        sp.add_argument("--out", "-o", default=None, help="output path (default stdout)")
        sp.add_argument("--format", choices=formats, default=formats[0])

    sp = sub.add_parser("check-graph", help="evaluate the graphical criteria on a graph")
    sp.add_argument("--graph", required=True, help="graph file or figure name (fig1a..fig2c)")
    sp.add_argument("--labeling", default="canonical", help="'canonical' or x=X,y=Y,z=Z,w=W,u=U")
    sp.add_argument("--criteria", choices=("equivalence", "miao", "both"), default="both")
    sp.add_argument("--levels", default="", help="node=levels list, e.g. U=4")
    common(sp, ("text", "json"))
    sp.set_defaults(func=cmd_check_graph)

    sp = sub.add_parser("simulate", help="sample a dataset from a structural model")
    sp.add_argument("--spec", help="model config file")
    sp.add_argument("--graph-id", choices=dgp.GRAPH_IDS, default=dgp.BASE)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("estimate", help="run all estimators on a dataset")
    sp.add_argument("--data", help="dataset CSV")
    sp.add_argument("--spec", help="model config file (with --population)")
    sp.add_argument("--graph-id", choices=dgp.GRAPH_IDS, default=None)
    sp.add_argument("--population", action="store_true", help="use the exact observed joint")
    sp.add_argument("--adjust", default="Z,W", help="adjustment set / regression covariates")
    sp.add_argument("--cond-cutoff", type=float, default=E.COND_CUTOFF)
    common(sp)
    sp.set_defaults(func=cmd_estimate)

    for name in X.STUDIES:
        sp = sub.add_parser(name, help=f"run the {name} study")
        sp.add_argument("--config", help="experiment config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--n-runs", type=int, dest="n_runs")
        sp.add_argument("--n-per-run", type=int, dest="n_per_run")
        sp.add_argument("--threads", type=int)
        sp.add_argument("--cond-cutoff", type=float, dest="cond_cutoff")
        sp.add_argument("--population", action="store_true")
        if name == X.CONDITION_SCAN:
            sp.add_argument("--param", help="edge to scan, e.g. UW")
        if name in (X.CONDITION_SCAN, X.VIOLATION_SCAN):
            sp.add_argument("--grid", help="comma-separated values")
        common(sp)
        sp.set_defaults(func=cmd_study)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"proxcausal: error: {exc}", file=sys.stderr)
        return 2
    except (ProxCausalError, OSError, ValueError) as exc:
        print(f"proxcausal: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
