"""Command line entry point: ``gblpinn <command> ...``.

Settings resolve in the order defaults < environment (GBL_SEED, GBL_OUT)
< YAML config file (``--config``) < command-line flags. A config file looks
like::

    case: case3b
    overrides:          # any CaseConfig field, nested values merge
      x_interface: 0.02
      budget: {epochs: 5000}
    run:
      budget: desk
      seed: 1
      out: runs
      methods: [exact, weno5]
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import yaml

from .cases import DESK, FULL, CaseConfig, case_registry, get_case
from .harness import (METHODS, append_metrics, default_out, default_seed, format_table,
                      make_run_dir, reproduce_tables, run_case, write_manifest)


def load_config(path):
    if path is None:
        return {}
    with open(path) as fh:
        doc = yaml.safe_load(fh) or {}
    if not isinstance(doc, dict):
        raise SystemExit(f"config {path} must be a mapping")
    return doc


def _merge(base, over):
    out = dict(base)
    for k, v in over.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def apply_overrides(case: CaseConfig, overrides) -> CaseConfig:
    if not overrides:
        return case
    return CaseConfig.from_dict(_merge(case.to_dict(), overrides))


def resolve(args, cfg):
    """Effective run settings: flag if given, else config file, else environment default."""
    run = cfg.get("run", {}) or {}

    def pick(name, default):
        v = getattr(args, name, None)
        return v if v is not None else run.get(name, default)

    return {
        "out": pick("out", default_out()),
        "seed": int(pick("seed", default_seed())),
        "budget": pick("budget", DESK),
        "methods": pick("methods", list(METHODS)),
        "epochs": pick("epochs", None),
    }


def build_case(args, cfg, settings, with_budget=True):
    name = getattr(args, "case", None) or cfg.get("case")
    if name is None:
        raise SystemExit("no case given (positional argument or 'case:' in the config)")
    case = get_case(name)
    if with_budget:
        case = case.with_budget(settings["budget"])
    return apply_overrides(case, cfg.get("overrides"))


def cmd_list(args, cfg):
    for c in case_registry():
        r = f"  rescale SD={c.rescale.subdomain} d1={c.rescale.delta1:g} d2={c.rescale.delta2:g}" \
            if c.rescaled else ""
        print(f"{c.name:<12} {c.form:<17} L=({c.u_L:.6g}, {c.phi_L:g}) "
              f"R=({c.u_R:.6g}, {c.phi_R:g}) x=[{c.x_min:g}, {c.x_max:g}]{r}")
    return 0


def cmd_exact(args, cfg):
    from .cpinn import exact_field
    from .riemann import solve_riemann

    s = resolve(args, cfg)
    case = build_case(args, cfg, s, with_budget=False)
    run_dir = make_run_dir(s["out"], f"exact-{case.name}")
    write_manifest(run_dir, [case])
    fan = solve_riemann(case.riemann_data)
    with open(os.path.join(run_dir, f"{case.name}_fan.json"), "w") as fh:
        fh.write(fan.to_json(indent=2))
    exact_field(case, fan).write_csv(os.path.join(run_dir, f"{case.name}_exact.csv"))
    print(f"u_M = {fan.u_M:.12g}, u* = {fan.u_star}, waves = "
          f"{[p.kind for p in fan.pieces]}")
    print(run_dir)
    return 0


def cmd_weno(args, cfg):
    s = resolve(args, cfg)
    case = build_case(args, cfg, s, with_budget=False)
    if args.cells is not None:
        case = apply_overrides(case, {"weno_cells": args.cells})
    run_dir = make_run_dir(s["out"], f"weno-{case.name}")
    write_manifest(run_dir, [case])
    res = run_case(case, ("exact", "weno5"), run_dir)
    if "weno5" in res.errors:
        print(f"error: {res.errors['weno5']}", file=sys.stderr)
        return 2
    row = res.rows[-1]
    print(f"{case.name} WENO5 relative L2 = {row.l2:.4e}")
    print(run_dir)
    return 0


def cmd_train(args, cfg):
    from .cpinn import train_one
    from .metrics import MetricsRow

    s = resolve(args, cfg)
    case = build_case(args, cfg, s)
    run_dir = make_run_dir(s["out"], f"train-{case.name}")
    write_manifest(run_dir, [case], seeds=[s["seed"]], extra={"budget": s["budget"]})
    model = train_one(case, s["seed"], run_dir=run_dir, epochs=s["epochs"],
                      checkpoint_every=args.checkpoint_every)
    model.save(os.path.join(run_dir, f"final_{case.name}_seed{s['seed']}.npz"))
    field = model.solution_field()
    field.write_csv(os.path.join(run_dir, f"{case.name}_cpinn_seed{s['seed']}.csv"))
    err = model.relative_l2()
    append_metrics(os.path.join(run_dir, "metrics.csv"),
                   [MetricsRow(case.name, "cpinn", case.form, case.rescaled, err, 1)])
    print(f"{case.name} seed {s['seed']} cPINN relative L2 = {err:.4e}")
    print(run_dir)
    return 0


def cmd_eval(args, cfg):
    s = resolve(args, cfg)
    case = build_case(args, cfg, s)
    seeds = (s["seed"],) if s["budget"] == DESK or args.seed is not None else case.seeds
    run_dir = make_run_dir(s["out"], f"eval-{case.name}")
    write_manifest(run_dir, [case], seeds=seeds, extra={"methods": s["methods"]})
    train_kw = {"epochs": s["epochs"]} if s["epochs"] else None
    res = run_case(case, s["methods"], run_dir, seeds=seeds, train_kw=train_kw)
    for r in res.rows:
        print(f"{r.case:<12} {r.method:<6} L2 = {r.l2:.4e} (seeds: {r.seeds})")
    for m, e in res.errors.items():
        print(f"{case.name:<12} {m:<6} not run: {e}")
    print(run_dir)
    return 0


def cmd_tables(args, cfg):
    s = resolve(args, cfg)
    cases = None
    if args.cases:
        cases = [apply_overrides(get_case(n), cfg.get("overrides")) for n in args.cases]
    train_kw = {"epochs": s["epochs"]} if s["epochs"] else None
    table, run_dir = reproduce_tables(s["budget"], cases, s["methods"], s["out"],
                                      train_kw=train_kw)
    print(format_table(table))
    print(run_dir)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="gblpinn", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="YAML config file")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, case=True):
        if case:
            sp.add_argument("case", nargs="?", help="registry name, e.g. case1 or case3b-nc")
        sp.add_argument("--out", help="output root (default $GBL_OUT or ./runs)")
        return sp

    sub.add_parser("list-cases", help="print the case registry")
    common(sub.add_parser("exact", help="exact Riemann solution profiles and fan JSON"))
    w = common(sub.add_parser("weno", help="WENO5 run vs the exact solution"))
    w.add_argument("--cells", type=int)
    for name, helptext in (("train", "train the cPINN on one seed"),
                           ("eval", "compare methods on one case")):
        t = common(sub.add_parser(name, help=helptext))
        t.add_argument("--budget", choices=[DESK, FULL])
        t.add_argument("--seed", type=int)
        t.add_argument("--epochs", type=int, help="override the budget's epoch count")
        if name == "train":
            t.add_argument("--checkpoint-every", type=int, default=5000)
        else:
            t.add_argument("--methods", nargs="+", choices=METHODS)
    tb = common(sub.add_parser("tables", help="reproduce the comparison tables"), case=False)
    tb.add_argument("--budget", choices=[DESK, FULL])
    tb.add_argument("--methods", nargs="+", choices=METHODS)
    tb.add_argument("--cases", nargs="+")
    tb.add_argument("--epochs", type=int)
    return p


COMMANDS = {"list-cases": cmd_list, "exact": cmd_exact, "weno": cmd_weno,
            "train": cmd_train, "eval": cmd_eval, "tables": cmd_tables}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    cfg = load_config(args.config)
    try:
        return COMMANDS[args.command](args, cfg)
    except KeyError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
