"""Command-line front end: bound queries, radius certification, benchmarks.

Exit codes: 0 success, 1 internal or input failure, 2 unsupported request
(for example the LP method with the Euclidean norm).  All reports serialize
floats at full precision so they reparse exactly; the benchmark writes one
CSV row per (network, norm) cell plus a JSON document holding every
per-sample radius, and cells keep their values regardless of worker count.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import certify, crown, frown, lp
from .model import ModelError, PerturbationSpec, load_network, load_sample

WORKERS_ENV = "NETCERT_WORKERS"


def _parse_p(text: str) -> float:
    if text in ("inf", "Inf", "INF"):
        return math.inf
    value = float(text)
    if value not in (1.0, 2.0):
        raise argparse.ArgumentTypeError(f"p must be 1, 2 or inf, got {text}")
    return value


def _p_str(p: float) -> str:
    return "inf" if p == math.inf else str(int(p))


def _frown_config(args, seed: int = 0) -> frown.OptimizerConfig:
    return frown.OptimizerConfig(
        step_size=args.step, max_iters=args.iters, restarts=args.restarts,
        group_size=args.group_size, seed=seed)


def _menu(name: str) -> lp.RelaxationMenu:
    return lp.RelaxationMenu.single() if name == "single" else lp.RelaxationMenu.multi()


def _write_report(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=2)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def cmd_bounds(args) -> int:
    net = load_network(args.network)
    x0, _ = load_sample(args.sample)
    if args.method == "lp" and args.p == 2.0:
        print("error: the lp method supports only p in {1, inf}", file=sys.stderr)
        return 2
    spec = PerturbationSpec(x0, args.p, args.eps)
    dumps = []
    if args.method == "crown":
        bounds, _ = crown.propagate(net, spec, mode=args.mode)
    elif args.method == "frown":
        bounds, _ = frown.frown_propagate(net, spec, _frown_config(args, args.seed))
    else:
        menu = _menu(args.lines)
        bounds, _ = lp.lp_propagate(net, spec, menu=menu)
        if args.dump_lp:
            for i in range(net.layer_width(net.m)):
                for sense in ("lower", "upper"):
                    prob = lp.build_lp(net, spec, net.m, i, sense, bounds,
                                       menu)
                    dumps.append(lp.dump_lp(prob))
    doc = {
        "network": args.network,
        "sample": args.sample,
        "method": args.method,
        "p": _p_str(args.p),
        "eps": args.eps,
        "gamma_lower": bounds.output_lower.tolist(),
        "gamma_upper": bounds.output_upper.tolist(),
    }
    if args.all_layers:
        doc["layers"] = [
            {"layer": k,
             "lower": bounds.lower[k - 1].tolist(),
             "upper": bounds.upper[k - 1].tolist()}
            for k in range(1, len(bounds.lower) + 1)
        ]
    _write_report(doc, args.out)
    if args.dump_lp:
        with open(args.dump_lp, "w") as fh:
            fh.write("\n".join(dumps))
    return 0


def cmd_certify(args) -> int:
    net = load_network(args.network)
    x0, label = load_sample(args.sample)
    if args.method == "lp" and args.p == 2.0:
        print("error: the lp method supports only p in {1, inf}", file=sys.stderr)
        return 2
    cert = certify.search_epsilon(
        net, x0, label, args.p, method=args.method, target=args.targeted,
        rel_tol=args.rel_tol, cap=args.cap,
        frown_config=_frown_config(args, args.seed),
        lp_menu=_menu(args.lines))
    doc = cert.to_dict()
    doc["network"] = args.network
    doc["sample"] = args.sample
    _write_report(doc, args.out)
    if args.out:
        flags = "".join(f", {name}" for name, hit in
                        (("cap hit", cert.cap_hit),
                         ("never certified", cert.never_certified)) if hit)
        print(f"certified radius {cert.epsilon_certified:.8g} "
              f"(method {args.method}, p {_p_str(args.p)}{flags})")
    return 0


def _bench_cell(task: dict) -> dict:
    """One (network, norm, method) cell of the benchmark matrix."""
    net = load_network(task["network"])
    cfg = frown.OptimizerConfig(**task["frown"]) if task.get("frown") else None
    menu = _menu(task.get("lp_lines", "multi"))
    radii, times, iters = [], [], []
    for sample_path in task["samples"]:
        x0, label = load_sample(sample_path)
        cert = certify.search_epsilon(
            net, x0, label, task["p"], method=task["method"],
            rel_tol=task["rel_tol"], cap=task["cap"],
            frown_config=cfg, lp_menu=menu)
        radii.append(cert.epsilon_certified)
        times.append(cert.wall_time)
        iters.append(cert.iterations)
    return {
        "network": task["network"],
        "p": _p_str(task["p"]),
        "method": task["method"],
        "radii": radii,
        "mean_radius": float(np.mean(radii)),
        "mean_time": float(np.mean(times)),
        "iterations": iters,
    }


def cmd_bench(args) -> int:
    with open(args.config) as fh:
        config = json.load(fh)
    networks = config["networks"]
    samples = config["samples"]
    methods = config["methods"]
    norms = [(_parse_p(str(p))) for p in config.get("norms", ["inf"])]
    timing = bool(config.get("timing", True))
    tasks = []
    for net_path in networks:
        for p in norms:
            for method in methods:
                if method == "lp" and p == 2.0:
                    continue
                tasks.append({
                    "network": net_path, "samples": samples, "method": method,
                    "p": p, "rel_tol": config.get("rel_tol", 1e-3),
                    "cap": config.get("cap", 10.0),
                    "frown": config.get("frown"),
                    "lp_lines": config.get("lp_lines", "multi"),
                })
    workers = int(os.environ.get(WORKERS_ENV, "1"))
    cells = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for task, result in zip(tasks, pool.map(_bench_cell_safe, tasks)):
                cells.append(result)
    else:
        for task in tasks:
            cells.append(_bench_cell_safe(task))

    by_key: dict = {}
    for cell in cells:
        by_key.setdefault((cell["network"], cell["p"]), {})[cell.get("method")] = cell

    os.makedirs(args.out_dir, exist_ok=True)
    csv_path = os.path.join(args.out_dir, "bench.csv")
    json_path = os.path.join(args.out_dir, "bench.json")
    header = ["network", "p"]
    for method in methods:
        header.append(f"eps_{method}")
    for method in methods:
        if method != "crown":
            header.append(f"improv_{method}_pct")
    if timing:
        for method in methods:
            header.append(f"time_{method}_s")
        if "frown" in methods and "lp" in methods:
            header.append("speedup_frown_over_lp")
    rows = []
    for (net_path, p_str), group in sorted(by_key.items()):
        row = {"network": net_path, "p": p_str}
        crown_mean = group.get("crown", {}).get("mean_radius")
        for method in methods:
            cell = group.get(method)
            if cell is None:
                continue
            if "error" in cell:
                row[f"eps_{method}"] = f"error:{cell['error']}"
                continue
            row[f"eps_{method}"] = repr(cell["mean_radius"])
            if method != "crown" and crown_mean:
                improv = 100.0 * (cell["mean_radius"] - crown_mean) / crown_mean
                row[f"improv_{method}_pct"] = repr(improv)
            if timing:
                row[f"time_{method}_s"] = repr(cell["mean_time"])
        if timing and "frown" in group and "lp" in group \
                and "error" not in group["frown"] and "error" not in group["lp"]:
            if group["frown"]["mean_time"] > 0:
                row["speedup_frown_over_lp"] = repr(
                    group["lp"]["mean_time"] / group["frown"]["mean_time"])
        rows.append(row)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=header, restval="")
        writer.writeheader()
        writer.writerows(rows)
    _write_report({"config": config, "cells": cells}, json_path)
    print(f"wrote {csv_path} and {json_path}")
    return 0


def _bench_cell_safe(task: dict) -> dict:
    try:
        return _bench_cell(task)
    except Exception as exc:  # cell failures must not kill the sweep
        return {"network": task["network"], "p": _p_str(task["p"]),
                "method": task["method"], "error": str(exc)}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netcert",
        description="Certified output bounds and robust radii for MLPs")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("network")
        p.add_argument("sample")
        p.add_argument("--p", type=_parse_p, default=math.inf)
        p.add_argument("--method", choices=["crown", "frown", "lp"],
                       default="crown")
        p.add_argument("--group-size", type=int, default=1)
        p.add_argument("--iters", type=int, default=100)
        p.add_argument("--step", type=float, default=0.05)
        p.add_argument("--restarts", type=int, default=1)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--lines", choices=["single", "multi"], default="multi")
        p.add_argument("--out", default=None)

    pb = sub.add_parser("bounds", help="output bounds at a fixed radius")
    add_common(pb)
    pb.add_argument("--eps", type=float, required=True)
    pb.add_argument("--mode", choices=["self-consistent", "per-neuron"],
                    default="self-consistent")
    pb.add_argument("--all-layers", action="store_true")
    pb.add_argument("--dump-lp", default=None,
                    help="write the assembled output-layer LPs to this file")
    pb.set_defaults(func=cmd_bounds)

    pc = sub.add_parser("certify", help="largest certifiable radius")
    add_common(pc)
    pc.add_argument("--targeted", type=int, default=None)
    pc.add_argument("--rel-tol", type=float, default=1e-3)
    pc.add_argument("--cap", type=float, default=10.0)
    pc.set_defaults(func=cmd_certify)

    pben = sub.add_parser("bench", help="method x norm benchmark matrix")
    pben.add_argument("config")
    pben.add_argument("--out-dir", default="bench-out")
    pben.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except lp.LpUnsupportedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ModelError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
