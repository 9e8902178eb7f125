"""Command-line front end emitting deterministic CSV files.

Commands: validate, analyze, simulate, sweep, counterexample.  Network
arguments accept either a JSON file path or a built-in corpus name
(fig1a, fig1b, sinktree_up, sinktree_down).  SNC_THREADS caps worker
threads.  CSV schemas:

    analyze         value,probability,raw,theta,theta2,method,site
    simulate        value,probability,stderr,method,seed,steps
    sweep           param,method,site,delay,reason
    counterexample  x,horizon,empirical,stderr,claimed_bound,sound_bound
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import corpora, engine, network, sim
from .counterexample import CounterexampleConfig, run_counterexample
from .errors import ModelError, SncError


def _load_document(spec: str) -> dict:
    if spec in corpora.CORPUS_NAMES:
        return corpora.corpus_document(spec)
    with open(spec, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _load_network(spec: str) -> network.TandemNetwork:
    return network.parse_network(_load_document(spec))


def _open_csv(path: str, header: list[str], deterministic: bool):
    fh = open(path, "w", newline="", encoding="utf-8")
    if not deterministic:
        fh.write(f"# generated {datetime.now(timezone.utc).isoformat()}\n")
    writer = csv.writer(fh)
    writer.writerow(header)
    return fh, writer


def _parse_int_range(text: str) -> range:
    if ".." not in text:
        raise ModelError(f"range must look like A..B, got {text!r}")
    lo, hi = text.split("..", 1)
    return range(int(lo), int(hi) + 1)


def _parse_float_range(text: str) -> list[float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise ModelError(f"range must look like lo:hi:step, got {text!r}")
    lo, hi, step = (float(p) for p in parts)
    if step <= 0:
        raise ModelError("range step must be positive")
    out = []
    v = lo
    while v <= hi + 1e-9:
        out.append(round(v, 12))
        v += step
    return out


def _set_param(document: dict, path: str, value: float) -> None:
    keys = path.split(".")
    try:
        node = document
        for key in keys[:-1]:
            node = node[int(key)] if isinstance(node, list) else node[key]
        leaf = keys[-1]
        if isinstance(node, list):
            node[int(leaf)] = value
        else:
            if leaf not in node:
                raise KeyError(leaf)
            node[leaf] = value
    except (KeyError, IndexError, ValueError, TypeError):
        raise ModelError(f"parameter path {path!r} does not resolve") from None


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

def _cmd_validate(args) -> int:
    net = _load_network(args.network)
    print(f"network: {net.n_servers} servers, {len(net.flows)} flows")
    print("topology (H1-H3): ok")
    print("processes (H4-H5): stationary MMPs, independent streams: ok")
    for j in range(1, net.n_servers + 1):
        ts = network.theta_star(net, j)
        label = "inf" if math.isinf(ts) else f"{ts:.6g}"
        capped = " (search cap)" if ts == network.THETA_CAP else ""
        print(f"server {j}: theta* = {label}{capped}")
    for h in range(1, net.n_servers + 1):
        report = network.check_martingale_site(net, h)
        if report.ok:
            print(f"martingale site h={h} (H6-H7): ok")
        else:
            for v in report.violations:
                print(f"martingale site h={h}: violated: {v}")
    sites = network.admissible_sites(net)
    print(f"admissible sites: {sites if sites else 'none'}")
    return 0


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------

def _optimized_point(net, method, metric, value, h):
    if method == "pmoo":
        ob = (
            engine.optimized_pmoo_delay(net, value)
            if metric == "delay"
            else engine.optimized_pmoo_backlog(net, value)
        )
    else:
        ob = (
            engine.optimized_mart_delay(net, h, value)
            if metric == "delay"
            else engine.optimized_mart_backlog(net, h, value)
        )
    return ob


def _cmd_analyze(args) -> int:
    net = _load_network(args.network)
    values = list(_parse_int_range(args.range))
    if args.method == "martingale":
        if args.at == "auto":
            sites = network.admissible_sites(net)
            if not sites:
                raise SncError("no admissible martingale site in this network")
        else:
            h = int(args.at)
            report = network.check_martingale_site(net, h)
            if not report.ok:
                for v in report.violations:
                    print(f"site h={h} violation: {v}", file=sys.stderr)
                return 3
            sites = [h]
        plans = [("martingale", h) for h in sites]
    else:
        plans = [("pmoo", None)]

    def point(plan_value):
        (method, h), value = plan_value
        ob = _optimized_point(net, method, args.metric, value, h)
        return method, h, value, ob

    tasks = [(plan, v) for plan in plans for v in values]
    with ThreadPoolExecutor(max_workers=sim.thread_count()) as pool:
        results = list(pool.map(point, tasks))

    fh, writer = _open_csv(
        args.output,
        ["value", "probability", "raw", "theta", "theta2", "method", "site"],
        args.deterministic,
    )
    with fh:
        by_value = {}
        for method, h, value, ob in results:
            label = method
            writer.writerow(
                [
                    value,
                    f"{ob.probability:.12g}",
                    f"{ob.raw:.12g}",
                    f"{ob.theta:.12g}",
                    "" if ob.theta2 is None else f"{ob.theta2:.12g}",
                    label,
                    "" if h is None else h,
                ]
            )
            cur = by_value.get(value)
            if cur is None or ob.raw < cur[1].raw:
                by_value[value] = (h, ob)
        if args.method == "martingale" and args.at == "auto":
            for value in values:
                h, ob = by_value[value]
                writer.writerow(
                    [
                        value,
                        f"{ob.probability:.12g}",
                        f"{ob.raw:.12g}",
                        f"{ob.theta:.12g}",
                        "" if ob.theta2 is None else f"{ob.theta2:.12g}",
                        "martingale_best",
                        h,
                    ]
                )
    if args.epsilon is not None:
        for method, h in plans:
            if args.metric == "delay":
                if method == "pmoo":
                    bound = lambda T: engine.optimized_pmoo_delay(net, T).raw
                else:
                    bound = lambda T, hh=h: engine.optimized_mart_delay(net, hh, T).raw
                q = engine.delay_quantile(bound, args.epsilon)
                tag = method if h is None else f"{method}(h={h})"
                print(f"{tag}: least delay with bound <= {args.epsilon:g}: {q}")
    return 0


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

_POLICY_FLAGS = {"cross-priority": "cross_priority", "fifo": "fifo_aggregate"}


def _cmd_simulate(args) -> int:
    net = _load_network(args.network)
    cfg = sim.SimConfig(
        steps=args.steps,
        seed=args.seed,
        policy=_POLICY_FLAGS[args.policy],
        replications=args.replications,
        warmup=args.warmup,
    )
    result = sim.simulate(net, cfg)
    fh, writer = _open_csv(
        args.output,
        ["value", "probability", "stderr", "method", "seed", "steps"],
        args.deterministic,
    )
    with fh:
        for metric in ("delay", "backlog"):
            curve = sim.empirical_tail(result, metric)
            last = int(np.nonzero(curve.probability > 0)[0][-1]) + 1
            for i in range(min(last + 1, curve.values.shape[0])):
                writer.writerow(
                    [
                        int(curve.values[i]),
                        f"{curve.probability[i]:.12g}",
                        f"{curve.stderr[i]:.12g}",
                        f"simulation_{metric}",
                        args.seed,
                        args.steps,
                    ]
                )
    return 0


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def _sweep_point(base_doc, args, value):
    rows = []
    doc = json.loads(json.dumps(base_doc))
    try:
        _set_param(doc, args.param, value)
        net = network.parse_network(doc)
    except (ModelError, SncError) as err:
        return [[value, "pmoo", "", "nan", str(err)]]
    try:
        q = engine.delay_quantile(
            lambda T: engine.optimized_pmoo_delay(net, T).raw, args.epsilon
        )
        rows.append([value, "pmoo", "", q, ""])
    except SncError as err:
        rows.append([value, "pmoo", "", "nan", str(err)])
    best = math.inf
    best_h = None
    for h in network.admissible_sites(net):
        try:
            q = engine.delay_quantile(
                lambda T: engine.optimized_mart_delay(net, h, T).raw, args.epsilon
            )
            rows.append([value, "martingale", h, q, ""])
            if q < best:
                best, best_h = q, h
        except SncError as err:
            rows.append([value, "martingale", h, "nan", str(err)])
    if best_h is not None:
        rows.append([value, "martingale_best", best_h, best, ""])
    if args.with_sim:
        try:
            cfg = sim.SimConfig(
                steps=args.steps, seed=args.seed, replications=args.replications
            )
            curve = sim.empirical_tail(sim.simulate(net, cfg), "delay")
            rows.append(
                [value, "simulation", "", sim.tail_quantile(curve, args.epsilon), ""]
            )
        except SncError as err:
            rows.append([value, "simulation", "", "nan", str(err)])
    return rows


def _cmd_sweep(args) -> int:
    base_doc = _load_document(args.network)
    values = _parse_float_range(args.range)
    with ThreadPoolExecutor(max_workers=sim.thread_count()) as pool:
        blocks = list(pool.map(lambda v: _sweep_point(base_doc, args, v), values))
    fh, writer = _open_csv(
        args.output, ["param", "method", "site", "delay", "reason"], args.deterministic
    )
    with fh:
        for block in blocks:
            for row in block:
                writer.writerow(row)
    return 0


# ---------------------------------------------------------------------------
# counterexample
# ---------------------------------------------------------------------------

def _cmd_counterexample(args) -> int:
    cfg = CounterexampleConfig(
        service_mean=args.mean,
        theta_star=args.theta,
        horizons=tuple(int(h) for h in args.horizons.split(",")),
        trials=args.trials,
        seed=args.seed,
    )
    result = run_counterexample(cfg)
    fh, writer = _open_csv(
        args.output,
        ["x", "horizon", "empirical", "stderr", "claimed_bound", "sound_bound"],
        args.deterministic,
    )
    with fh:
        for curve in result.curves:
            for i, x in enumerate(curve.x):
                writer.writerow(
                    [
                        f"{x:.12g}",
                        curve.horizon,
                        f"{curve.empirical[i]:.12g}",
                        f"{curve.stderr[i]:.12g}",
                        f"{curve.claimed_bound[i]:.12g}",
                        f"{curve.sound_bound[i]:.12g}",
                    ]
                )
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sncbounds",
        description="Delay/backlog bounds and simulation for tandem networks "
        "fed by Markov-modulated traffic.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("-o", "--output", required=True, help="output CSV path")
        p.add_argument(
            "--deterministic",
            action=argparse.BooleanOptionalAction,
            default=True,
            help="omit the timestamp header line (default on)",
        )

    p = sub.add_parser("validate", help="check a network document")
    p.add_argument("network", help="JSON path or corpus name")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("analyze", help="optimized bound curves")
    p.add_argument("network")
    p.add_argument("--method", choices=["pmoo", "martingale"], required=True)
    p.add_argument("--at", default="auto", help="martingale site (1-based) or 'auto'")
    p.add_argument("--metric", choices=["delay", "backlog"], default="delay")
    p.add_argument("--range", required=True, help="value range A..B inclusive")
    p.add_argument("--epsilon", type=float, default=None)
    add_common(p)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("simulate", help="Monte-Carlo tail estimation")
    p.add_argument("network")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--policy", choices=list(_POLICY_FLAGS), default="cross-priority")
    p.add_argument("--replications", type=int, default=1)
    p.add_argument("--warmup", type=int, default=0)
    add_common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("sweep", help="delay quantile vs a swept parameter")
    p.add_argument("network")
    p.add_argument("--param", required=True, help="dot path, e.g. servers.1.service.rate")
    p.add_argument("--range", required=True, help="lo:hi:step inclusive")
    p.add_argument("--epsilon", type=float, default=1e-4)
    p.add_argument("--with-sim", action="store_true")
    p.add_argument("--steps", type=int, default=10_000_000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--replications", type=int, default=1)
    add_common(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("counterexample", help="unsound sub-martingale bound demo")
    p.add_argument("--mean", type=float, default=1.0)
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--horizons", default="50,100,200")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=1)
    add_common(p)
    p.set_defaults(func=_cmd_counterexample)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ModelError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except SncError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
