"""Command line: ``run``, ``batch``, ``lemma`` and ``topo``.

Scenario settings come from built-in defaults, optionally a desk preset
(``--preset``), then a YAML file (``--config``), then individual flags.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import typing
from pathlib import Path

import yaml

from . import lemma
from .sim import (ConfigError, ScenarioConfig, desk_scenario, export, run_batch, simulate, to_csv,
                  to_json)
from .topology import TopologyError, bundled, bundled_names, load_graphml

log = logging.getLogger("crossfire_te")


def _flag_type(f: dataclasses.Field):
    text = str(f.type)
    if "bool" in text:
        return _parse_bool
    if "int" in text and "Optional" not in text:
        return int
    if "float" in text:
        return float
    return str


def _parse_bool(v: str) -> bool:
    v = v.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {v!r}")


def _add_scenario_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="YAML file with scenario settings")
    p.add_argument("--preset", help="desk scenario preset: 1, 1.a, 1.b or 1.c")
    for f in dataclasses.fields(ScenarioConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.name == "gateways":
            p.add_argument(flag, nargs="+", default=None, help="gateway node ids")
        else:
            p.add_argument(flag, dest=f.name, type=_flag_type(f), default=None)
    p.add_argument("--out", type=Path, help="write metrics here")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def _scenario(args) -> ScenarioConfig:
    data: dict = {}
    if args.preset:
        te = args.te_scheme or "remote"
        data = dataclasses.asdict(desk_scenario(args.preset, te))
    if args.config:
        try:
            loaded = yaml.safe_load(args.config.read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError(f"config {args.config} must be a mapping")
        data.update(loaded)
    for f in dataclasses.fields(ScenarioConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            data[f.name] = v
    return ScenarioConfig.from_mapping(data)


def _emit(result, args):
    if args.out:
        export(result, args.out, args.format)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(to_csv(result) if args.format == "csv" else to_json(result))


def cmd_run(args) -> int:
    cfg = _scenario(args)
    loads = open(args.loads, "w", newline="") if args.loads else None
    try:
        res = simulate(cfg, load_log=loads)
    finally:
        if loads:
            loads.close()
    if args.trace:
        with open(args.trace, "w") as fh:
            for line in res.plans:
                fh.write(line + "\n")
            if res.metrics.verdict:
                fh.write(json.dumps({"verdict": res.metrics.verdict}, sort_keys=True) + "\n")
    _emit(res.metrics, args)
    return 0


def cmd_batch(args) -> int:
    cfg = _scenario(args)
    rep = run_batch(cfg, args.repetitions, args.seed_base)
    _emit(rep, args)
    if not args.out:
        return 0
    s = rep.summary
    for k, v in s.items():
        print(f"{k:28s} {v['mean']:10.3f} +/- {v['half_width']:.3f} (sd {v['std']:.3f})")
    print(f"{'target detected':28s} {100 * rep.target_detect_rate:10.1f} %")
    return 0


def cmd_lemma(args) -> int:
    if args.n < 2:
        raise ConfigError("n must be >= 2")
    print(f"{'k':>3} {'g_k':>12} {'f_k':>12} {'p_k':>14} {'decimal':>10}")
    for row in lemma.table(args.n):
        p = row.p_k
        print(f"{row.k:>3} {row.g_k:>12} {row.f_k:>12} {str(p):>14} {float(p):>10.6f}")
    if args.n >= 3:
        print(f"strictly increasing: {lemma.monotonicity_check(args.n)}")
    return 0


def cmd_topo(args) -> int:
    src = args.source
    data = bundled(src) if src in bundled_names() else src
    gw = set(args.gateways) if args.gateways else None
    topo = load_graphml(data, gateways=gw, target=args.target)
    degrees = [len(topo.neighbors_out(n)) for n in topo.node_ids]
    info = {
        "name": topo.name,
        "nodes": len(topo.nodes),
        "undirected_edges": len(topo.links) // 2,
        "gateways": sorted(topo.gateways),
        "target": topo.target,
        "min_degree": min(degrees),
        "max_degree": max(degrees),
    }
    if args.json:
        print(json.dumps(info, indent=2))
    else:
        for k, v in info.items():
            print(f"{k:17s} {v}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crossfire-te", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one scenario")
    _add_scenario_flags(run)
    run.add_argument("--trace", type=Path, help="attack plans and verdict as JSON lines")
    run.add_argument("--loads", type=Path, help="per-timestep link loads as CSV")
    run.set_defaults(func=cmd_run)

    batch = sub.add_parser("batch", help="seeded repetitions with summary statistics")
    _add_scenario_flags(batch)
    batch.add_argument("--seed-base", type=int, default=None)
    batch.set_defaults(func=cmd_batch)

    lem = sub.add_parser("lemma", help="coupling probability table for n nodes")
    lem.add_argument("n", type=int)
    lem.set_defaults(func=cmd_lemma)

    topo = sub.add_parser("topo", help="validate and summarize a GraphML topology")
    topo.add_argument("source", help="GraphML path or bundled name (" + ", ".join(bundled_names()) + ")")
    topo.add_argument("--gateways", nargs="+")
    topo.add_argument("--target")
    topo.add_argument("--json", action="store_true")
    topo.set_defaults(func=cmd_topo)
    return p


def main(argv: typing.Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, TopologyError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
