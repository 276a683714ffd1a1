"""Command-line entry point: ``ncpbound <command> ...``.

Exit codes are 0 on success, 2 when some work items failed and 1 when all
did (or the input could not be used at all).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .certify import CertifiedBound, lower_bound, monotone_envelope
from .eig import lambda2
from .graph import DisconnectedGraphError, Graph, GraphError, largest_connected_component, load_edge_list, write_edge_list
from .graphgen import EmptyCoreError, SynthConfig, core_numbers, generate_core_periphery, k_core_subgraph, write_coordinates
from .lrsdp import AlmConfig
from .ncp import (
    CONDUCTANCE_BINS,
    DEFAULT_ALPHA,
    DEFAULT_EPSILONS,
    DEFAULT_SEED_COUNT,
    VOLUME_BINS,
    ProfileSoundnessError,
    SweepConfig,
    build_profile,
    default_workers,
    gap_report,
    heatmap,
    run_sweeps,
)
from .oracle import brute_mu_conductance
from .results import (
    ENVELOPE_COLUMNS,
    GAP_COLUMNS,
    HEATMAP_COLUMNS,
    PROFILE_COLUMNS,
    SAMPLE_COLUMNS,
    Manifest,
    file_sha256,
    read_csv,
    write_csv,
    write_json,
)

log = logging.getLogger("ncpbound")

EXIT_OK, EXIT_FAIL, EXIT_PARTIAL = 0, 1, 2
DEFAULT_MU_GRID = tuple(float(x) for x in np.geomspace(1e-6, 0.4, 7)) + (0.5,)
DEFAULT_RANKS = (5,)


class CliError(Exception):
    pass


# ---------------------------------------------------------------- helpers


def _load_graph(args) -> tuple[Graph, dict]:
    path = Path(args.graph)
    if not path.exists():
        raise CliError(f"graph file not found: {path}")
    g = load_edge_list(path, zero_indexed=not args.one_indexed, symmetric=args.symmetric)
    info = {
        "path": str(path),
        "sha256": file_sha256(path),
        "n_file": g.n,
        "edges_file": g.num_edges,
        "lcc": bool(args.lcc),
    }
    if g.n < 2:
        raise CliError("graph needs at least two vertices")
    if args.lcc:
        g, _ = largest_connected_component(g)
    elif not g.is_connected():
        raise CliError(
            f"{path} is disconnected; rerun with --lcc to use its largest connected component"
        )
    info.update(n=g.n, edges=g.num_edges, volume=g.volume_total)
    return g, info


def _mu_tag(mu: float) -> str:
    return format(mu, ".6g").replace("+", "")


def _alm_config(args) -> AlmConfig:
    base = AlmConfig.from_dict(args.alm) if args.alm else AlmConfig()
    over = {}
    if args.tol is not None:
        over.update(tol_stat=args.tol, tol_feas=args.tol)
    for name in ("max_outer", "max_inner", "sigma0", "seed"):
        v = getattr(args, name)
        if v is not None:
            over[name] = v
    return replace(base, **over)


def _check_mus(mus: Sequence[float]) -> list[float]:
    out = sorted(set(float(m) for m in mus))
    bad = [m for m in out if not 0 < m <= 0.5]
    if bad:
        raise CliError(f"mu values must lie in (0, 0.5]: {bad}")
    return out


def _workers(args) -> int:
    return args.workers if args.workers is not None else default_workers()


def _status(n_ok: int, n_total: int) -> tuple[str, int]:
    if n_total == 0 or n_ok == n_total:
        return "complete", EXIT_OK
    if n_ok == 0:
        return "failed", EXIT_FAIL
    return "partial", EXIT_PARTIAL


# ------------------------------------------------------------------ bound


def _bound_task(task):
    graph, mu, k, cfg, eig_tol, beta_mode = task
    try:
        return mu, k, lower_bound(graph, mu, k, cfg, eig_tol=eig_tol, beta_mode=beta_mode), None
    except (GraphError, ValueError, np.linalg.LinAlgError) as exc:
        return mu, k, None, f"{type(exc).__name__}: {exc}"


def run_bound(graph: Graph, graph_info: dict, args, out_dir: Path, argv: Sequence[str]) -> int:
    mus = _check_mus(args.mu_list)
    ranks = sorted(set(int(k) for k in args.k))
    if any(k < 1 for k in ranks):
        raise CliError("ranks must be positive")
    cfg = _alm_config(args)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = {
        "mu_list": mus,
        "k": ranks,
        "alm": cfg.to_dict(),
        "eig_tol": args.eig_tol,
        "beta_mode": args.beta_mode,
    }
    mpath = out_dir / "manifest.json"
    previous = Manifest.load(mpath) if args.resume else None
    man = Manifest(mpath, "bound", argv, __version__)
    man.data["graph"] = graph_info
    man.data["config"] = config
    man.save()

    done: dict[tuple[float, int], dict] = {}
    if previous and previous.get("config") == json.loads(json.dumps(config)) and (
        (previous.get("graph") or {}).get("sha256") == graph_info["sha256"]
    ):
        for item in previous.get("items", []):
            f = out_dir / str(item.get("file", ""))
            if item.get("status") in ("certified", "heuristic") and f.is_file():
                done[(float(item["mu"]), int(item["k"]))] = item

    records: dict[tuple[float, int], dict] = {}
    tasks = []
    for mu in mus:
        for k in ranks:
            if (mu, k) in done:
                records[(mu, k)] = json.loads((out_dir / done[(mu, k)]["file"]).read_text())
                man.add_item(dict(done[(mu, k)], resumed=True))
            elif k >= graph.n:
                man.add_item({"mu": mu, "k": k, "status": "error", "error": f"rank {k} >= n = {graph.n}"})
            else:
                tasks.append((graph, mu, k, cfg, args.eig_tol, args.beta_mode))

    workers = _workers(args)
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = pool.map(_bound_task, tasks)
            _collect_bounds(results, out_dir, man, records)
    else:
        _collect_bounds(map(_bound_task, tasks), out_dir, man, records)

    # best certified bound per mu, then the running max over mu
    rows = []
    best: dict[float, tuple[int, float]] = {}
    for (mu, k), rec in sorted(records.items()):
        if rec["certified"] and (mu not in best or rec["bound"] > best[mu][1]):
            best[mu] = (k, rec["bound"])
    env = monotone_envelope([(m, best[m][1]) for m in sorted(best)])
    for mu in mus:
        k, b = best.get(mu, (None, math.nan))
        rows.append((mu, k, b, mu in best, env.at(mu)))
    env_path = out_dir / "envelope.csv"
    write_csv(env_path, ENVELOPE_COLUMNS, rows)
    man.add_output(env_path.name)

    status, code = _status(len(best), len(mus))
    man.finish(status)
    print(f"bound: {len(best)}/{len(mus)} mu values certified; results in {out_dir}")
    return code


def _collect_bounds(results, out_dir: Path, man: Manifest, records: dict) -> None:
    for mu, k, cb, err in results:
        if err is not None:
            log.error("mu=%g k=%d failed: %s", mu, k, err)
            man.add_item({"mu": mu, "k": k, "status": "error", "error": err})
            continue
        assert isinstance(cb, CertifiedBound)
        name = f"bound_mu{_mu_tag(mu)}_k{k}.json"
        rec = cb.to_record()
        write_json(out_dir / name, rec)
        records[(mu, k)] = json.loads((out_dir / name).read_text())
        man.add_output(name)
        man.add_item({
            "mu": mu, "k": k, "status": cb.status, "file": name, "bound": cb.bound, "theta": cb.theta,
            "alm_seconds": cb.alm_seconds, "eig_seconds": cb.eig_seconds,
        })
        log.info("mu=%g k=%d bound=%.6g theta=%.3g %s", mu, k, cb.bound, cb.theta, cb.status)


def cmd_bound(args, argv) -> int:
    graph, info = _load_graph(args)
    return run_bound(graph, info, args, Path(args.out_dir), argv)


# -------------------------------------------------------------------- ncp


def _sweep_config(args) -> SweepConfig:
    seeds = tuple(args.seed_list) if args.seed_list else args.seeds
    return SweepConfig(
        alpha=args.alpha,
        epsilons=tuple(sorted(set(args.eps_list), reverse=True)),
        seeds=seeds,
        rng_seed=args.rng_seed,
        max_side=args.max_side,
    )


def run_ncp(graph: Graph, graph_info: dict, args, out_dir: Path, argv: Sequence[str]) -> int:
    cfg = _sweep_config(args)
    out_dir.mkdir(parents=True, exist_ok=True)
    man = Manifest(out_dir / "manifest.json", "ncp", argv, __version__)
    man.data["graph"] = graph_info
    man.data["config"] = dict(cfg.to_dict(), bins=args.bins, cond_bins=args.cond_bins, cumulative=args.cumulative)
    man.save()

    t0 = time.perf_counter()
    samples = run_sweeps(graph, cfg, workers=_workers(args))
    elapsed = time.perf_counter() - t0
    vol = graph.volume_total
    write_csv(
        out_dir / "samples.csv", SAMPLE_COLUMNS,
        ((s.seed, s.epsilon, s.volume, s.size, s.conductance) for s in samples),
    )
    bins = build_profile(samples, vol, args.bins, cumulative=args.cumulative)
    write_csv(
        out_dir / "profile.csv", PROFILE_COLUMNS,
        ((b.volume_lo, b.volume_hi, b.min_conductance, b.count) for b in bins),
    )
    hm = heatmap(samples, vol, args.bins, args.cond_bins)
    write_csv(
        out_dir / "heatmap.csv", HEATMAP_COLUMNS,
        (
            (hm.volume_edges[i], hm.volume_edges[i + 1], hm.conductance_edges[j], hm.conductance_edges[j + 1],
             int(hm.counts[i, j]))
            for i in range(hm.counts.shape[0]) for j in range(hm.counts.shape[1])
        ),
    )
    for name in ("samples.csv", "profile.csv", "heatmap.csv"):
        man.add_output(name)
    man.add_item({"status": "done", "samples": len(samples), "seconds": elapsed})

    code = EXIT_OK if samples else EXIT_FAIL
    if args.envelope:
        code = _write_gap(args.envelope, samples, vol, out_dir, man, args.bins) or code
    man.finish("complete" if code == EXIT_OK else "failed")
    print(f"ncp: {len(samples)} samples from {len(cfg.seed_vertices(graph.n))} seeds; results in {out_dir}")
    return code


def _write_gap(envelope_path, samples, vol, out_dir: Path, man: Manifest, bins: int) -> int:
    rows = read_csv(envelope_path)
    pts = [(float(r["mu"]), float(r["bound"])) for r in rows if r["certified"] == "1"]
    if not pts:
        log.warning("no certified bounds in %s; skipping gap report", envelope_path)
        return 0
    env = monotone_envelope(pts)
    profile = build_profile(samples, vol, bins)
    try:
        gaps = gap_report(profile, env, vol)
    except ProfileSoundnessError as exc:
        log.error("%s", exc)
        man.add_item({"status": "soundness-violation", "error": str(exc)})
        return EXIT_FAIL
    write_csv(
        out_dir / "gap.csv", GAP_COLUMNS,
        ((g.mu, g.volume_floor, g.upper, g.lower, g.ratio, g.certified) for g in gaps),
    )
    man.add_output("gap.csv")
    return 0


def cmd_ncp(args, argv) -> int:
    graph, info = _load_graph(args)
    return run_ncp(graph, info, args, Path(args.out_dir), argv)


# ------------------------------------------------------------------ kcore


def cmd_kcore(args, argv) -> int:
    graph, info = _load_graph(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    man = Manifest(out_dir / "manifest.json", "kcore", argv, __version__)
    man.data["graph"] = info
    man.data["config"] = {"k_list": list(args.k_list), "bound": not args.skip_bound, "ncp": not args.skip_ncp}
    man.save()

    dec = core_numbers(graph)
    write_csv(out_dir / "core_numbers.csv", ("vertex", "label", "core"),
              ((i, int(graph.labels[i]), int(c)) for i, c in enumerate(dec.core_number)))
    man.add_output("core_numbers.csv")
    ok = total = 0
    for kc in sorted(set(args.k_list)):
        total += 1
        sub_dir = out_dir / f"core_{kc}"
        try:
            core, kept = k_core_subgraph(graph, kc, dec)
        except EmptyCoreError as exc:
            man.add_item({"core": kc, "status": "empty", "error": str(exc)})
            ok += 1
            continue
        core, keep2 = largest_connected_component(core)
        if core.n < 2:
            man.add_item({"core": kc, "status": "empty", "error": "core has fewer than two vertices"})
            ok += 1
            continue
        sub_dir.mkdir(parents=True, exist_ok=True)
        write_edge_list(core, sub_dir / "graph.txt", use_labels=True)
        sub_info = dict(info, core=kc, n=core.n, edges=core.num_edges, volume=core.volume_total)
        codes = []
        if not args.skip_bound:
            codes.append(run_bound(core, sub_info, args, sub_dir / "bound", argv))
        if not args.skip_ncp:
            codes.append(run_ncp(core, sub_info, args, sub_dir / "ncp", argv))
        good = all(c == EXIT_OK for c in codes)
        ok += good
        man.add_item({"core": kc, "status": "done" if good else "failed", "n": core.n, "edges": core.num_edges,
                      "dir": sub_dir.name})
    status, code = _status(ok, total)
    man.finish(status)
    return code


# ------------------------------------------------------- synth, brute, eig


def cmd_synth(args, argv) -> int:
    cfg = SynthConfig(
        n=args.n, dim=args.dim, core_fraction=args.core_fraction, core_scale=args.core_scale,
        periphery_scale=args.periphery_scale, neighbors=args.neighbors, count_self=not args.no_count_self,
        seed=args.seed,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    man = Manifest(out.with_name(out.stem + ".manifest.json"), "synth", argv, __version__)
    man.data["config"] = cfg.to_dict()
    man.save()
    sg = generate_core_periphery(cfg)
    write_edge_list(sg.graph, out)
    man.add_output(out.name)
    coords = Path(args.coords) if args.coords else out.with_name(out.stem + ".coords.csv")
    write_coordinates(sg, coords)
    man.add_output(coords.name)
    man.data["graph"] = {"path": str(out), "sha256": file_sha256(out), "n": sg.graph.n,
                         "edges": sg.graph.num_edges, "connected": sg.graph.is_connected()}
    man.finish("complete")
    print(f"synth: n={sg.graph.n} edges={sg.graph.num_edges} -> {out}")
    return EXIT_OK


def cmd_brute(args, argv) -> int:
    graph, _ = _load_graph(args)
    res = brute_mu_conductance(graph, args.mu)
    members = [int(graph.labels[i]) for i in res.argmin_set.members]
    print(json.dumps({"mu": args.mu, "phi_mu": res.phi_mu, "argmin": members, "volume": res.argmin_set.volume,
                      "feasible_sets": res.feasible_count}))
    return EXIT_OK


def cmd_lambda2(args, argv) -> int:
    graph, _ = _load_graph(args)
    lam = lambda2(graph)
    print(json.dumps({"lambda2": lam, "bound": lam / 2}))
    return EXIT_OK


# ----------------------------------------------------------------- parser


def _graph_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("graph", help="edge list, one 'u v [w]' per line")
    p.add_argument("--one-indexed", action="store_true", help="vertex ids in the file start at 1")
    p.add_argument("--symmetric", action="store_true", help="file lists each edge in both directions")
    p.add_argument("--lcc", action="store_true", help="restrict to the largest connected component")


def _common_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of defaults; explicit flags take precedence")
    p.add_argument("--workers", type=int, help="worker processes (default: $NCPBOUND_WORKERS or 1)")
    p.add_argument("-v", "--verbose", action="count", default=0)


def _bound_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mu-list", type=float, nargs="+", default=list(DEFAULT_MU_GRID))
    p.add_argument("--k", type=int, nargs="+", default=list(DEFAULT_RANKS), help="rank(s) of the factor Y")
    p.add_argument("--tol", type=float, help="stationarity and feasibility tolerance")
    p.add_argument("--max-outer", type=int)
    p.add_argument("--max-inner", type=int)
    p.add_argument("--sigma0", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--eig-tol", type=float, default=1e-8)
    p.add_argument("--beta-mode", choices=("optimal", "kkt"), default="optimal")
    p.add_argument("--resume", action="store_true", help="reuse finished results from a matching manifest")


def _ncp_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seeds", type=int, default=DEFAULT_SEED_COUNT, help="number of random seed vertices")
    p.add_argument("--seed-list", type=int, nargs="+", help="explicit seed vertices (internal ids)")
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--eps-list", type=float, nargs="+", default=list(DEFAULT_EPSILONS))
    p.add_argument("--max-side", action="store_true", help="stop each sweep at half the volume")
    p.add_argument("--bins", type=int, default=VOLUME_BINS)
    p.add_argument("--cond-bins", type=int, default=CONDUCTANCE_BINS)
    p.add_argument("--cumulative", action="store_true", help="profile over all volumes above each bin")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ncpbound", description="Certified lower bounds on the community profile.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    parser.commands = sub.choices

    p = sub.add_parser("bound", help="certified lower bounds over a mu grid")
    _graph_args(p)
    _common_args(p)
    _bound_args(p)
    p.add_argument("--out-dir", default="bound_out")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("ncp", help="seeded PageRank sweeps and the empirical profile")
    _graph_args(p)
    _common_args(p)
    _ncp_args(p)
    p.add_argument("--envelope", help="envelope.csv from 'bound'; writes gap.csv")
    p.add_argument("--out-dir", default="ncp_out")
    p.set_defaults(func=cmd_ncp)

    p = sub.add_parser("kcore", help="run bound and ncp on k-cores")
    _graph_args(p)
    _common_args(p)
    _bound_args(p)
    _ncp_args(p)
    p.add_argument("--k-list", type=int, nargs="+", required=True)
    p.add_argument("--skip-bound", action="store_true")
    p.add_argument("--skip-ncp", action="store_true")
    p.add_argument("--envelope", default=None, help=argparse.SUPPRESS)
    p.add_argument("--out-dir", default="kcore_out")
    p.set_defaults(func=cmd_kcore)

    p = sub.add_parser("synth", help="generate a core-periphery kNN graph")
    _common_args(p)
    p.add_argument("--n", type=int, default=537)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--core-fraction", type=float, default=0.10)
    p.add_argument("--core-scale", type=float, default=0.1)
    p.add_argument("--periphery-scale", type=float, default=1.5)
    p.add_argument("--neighbors", type=int, default=5)
    p.add_argument("--no-count-self", action="store_true", help="link each point to 'neighbors' other points")
    p.add_argument("--out", required=True, help="edge list path")
    p.add_argument("--coords", help="coordinates CSV path")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("brute", help="exact mu-conductance by enumeration (n <= 24)")
    _graph_args(p)
    _common_args(p)
    p.add_argument("--mu", type=float, required=True)
    p.set_defaults(func=cmd_brute)

    p = sub.add_parser("lambda2", help="second normalized-Laplacian eigenvalue and lambda2/2")
    _graph_args(p)
    _common_args(p)
    p.set_defaults(func=cmd_lambda2)
    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    args.alm = None
    if not getattr(args, "config", None):
        return args
    try:
        cfg = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(cfg, dict):
        raise CliError("config file must hold a JSON object")
    alm = cfg.pop("alm", None)
    known = set(vars(args))
    unknown = {k.replace("-", "_") for k in cfg} - known
    if unknown:
        raise CliError(f"unknown config keys: {sorted(unknown)}")
    # defaults come from the file; anything given on the command line wins
    parser.commands[args.command].set_defaults(**{k.replace("-", "_"): v for k, v in cfg.items()})
    args = parser.parse_args(argv)
    if alm is not None:
        AlmConfig.from_dict(alm)
    args.alm = alm
    return args


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config_file(parser, argv)
    except (CliError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, argv)
    except (CliError, DisconnectedGraphError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except GraphError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
