"""Benchmark command line: instance generation, solving, seed sweeps, and
the property-verification suites.

Subcommands
-----------
gen     write a seeded random instance (and, for volmin, the ground truth)
solve   run a solver on an instance; writes results JSON + iteration CSV
bench   run one configuration over many seeds; writes a summary CSV
verify  run property suites (numerics, pdd-core, multicast, relay, volmin, all)

``PDD_LOG_LEVEL`` controls logging verbosity (DEBUG shows per-iteration
progress).
"""

import argparse
import csv
import json
import logging
import os
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from . import ioformats
from . import multicast as mc
from . import relay as rl
from . import volmin as vm
from .core import PddTrace, pdd_run
from .errors import PddOptError
from .verify import run_suites

log = logging.getLogger("pddopt")

APPS = ("multicast", "relay", "volmin")

CONFIG_FLAGS = ("rho0", "c", "tau", "eps0", "max_outer", "max_inner", "mode")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=os.environ.get("PDD_LOG_LEVEL", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except PddOptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def build_parser():
    parser = argparse.ArgumentParser(prog="pddopt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate a random instance file")
    _add_app_flag(p_gen)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True, help="instance file to write")
    _add_generator_flags(p_gen)
    p_gen.set_defaults(func=cmd_gen)

    p_solve = sub.add_parser("solve", help="solve one instance")
    _add_app_flag(p_solve)
    p_solve.add_argument("--instance", help="instance file (omit to generate)")
    _add_generator_flags(p_solve)
    p_solve.add_argument("--seed", type=int, default=0)
    p_solve.add_argument("--out", required=True, help="output directory")
    _add_config_flags(p_solve)
    p_solve.set_defaults(func=cmd_solve)

    p_bench = sub.add_parser("bench", help="run one configuration over many seeds")
    _add_app_flag(p_bench)
    p_bench.add_argument("--instance", help="fixed instance file (else generated per seed)")
    _add_generator_flags(p_bench)
    p_bench.add_argument("--seeds", required=True,
                         help="comma list or inclusive range a..b")
    p_bench.add_argument("--out", required=True, help="output directory")
    _add_config_flags(p_bench)
    p_bench.set_defaults(func=cmd_bench)

    p_verify = sub.add_parser("verify", help="run property-verification suites")
    p_verify.add_argument("suite", nargs="?", default="all",
                          choices=["numerics", "pdd-core", "multicast", "relay",
                                   "volmin", "all"])
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.set_defaults(func=cmd_verify)
    return parser


def _add_app_flag(p):
    p.add_argument("--app", required=True, choices=APPS)


def _add_generator_flags(p):
    g = p.add_argument_group("generator parameters")
    g.add_argument("--nt", type=int, default=8, help="multicast: BS antennas")
    g.add_argument("--groups", type=int, default=4, help="multicast: group count")
    g.add_argument("--users-per-group", type=int, default=2)
    g.add_argument("--pbs-db", type=float, default=10.0, help="multicast: power (dB)")
    g.add_argument("--ns", type=int, default=4, help="relay: source antennas")
    g.add_argument("--nr", type=int, default=4, help="relay: relay antennas")
    g.add_argument("--k", type=int, default=4, help="relay users / volmin rank")
    g.add_argument("--snr-db", type=float, default=10.0,
                   help="relay/volmin SNR in dB (volmin: inf = noiseless)")
    g.add_argument("--n", type=int, default=10, help="volmin: data rows")
    g.add_argument("--l", type=int, default=200, help="volmin: data columns")
    g.add_argument("--gamma", type=float, default=0.8, help="volmin: simplex cap")
    g.add_argument("--format", choices=["vmin", "csv"], default="vmin",
                   help="volmin instance format")
    g.add_argument("--truth-out", help="volmin: ground-truth JSON to write")
    g.add_argument("--truth", help="volmin: ground-truth JSON for MSE evaluation")
    g.add_argument("--eps-smooth", type=float, default=1e-2,
                   help="volmin: volume smoothing parameter")
    g.add_argument("--prescale", action="store_true",
                   help="volmin: rescale data so the rank-K spectrum clears the smoothing floor")


def _add_config_flags(p):
    g = p.add_argument_group("solver configuration (overrides app defaults)")
    g.add_argument("--config", help="JSON file with PddConfig field overrides")
    g.add_argument("--rho0", type=float)
    g.add_argument("--c", type=float)
    g.add_argument("--tau", type=float)
    g.add_argument("--eps0", type=float)
    g.add_argument("--max-outer", type=int, dest="max_outer")
    g.add_argument("--max-inner", type=int, dest="max_inner")
    g.add_argument("--mode", choices=["pdd", "ipdd"])
    g.add_argument("--restarts", type=int, default=3, help="volmin random restarts")


def _config_overrides(args):
    """CLI flags > config file (app defaults fill the rest)."""
    overrides = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            overrides.update(json.load(fh))
    for name in CONFIG_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return overrides


# --------------------------------------------------------------------------
# gen
# --------------------------------------------------------------------------

def _generate_instance(args, seed):
    if args.app == "multicast":
        inst = mc.gen_instance(args.nt, args.groups, args.users_per_group,
                               10.0 ** (args.pbs_db / 10.0), seed)
        return inst, None
    if args.app == "relay":
        inst = rl.gen_instance(args.ns, args.nr, args.k, args.snr_db, seed)
        return inst, None
    inst, truth = vm.gen_data(args.n, args.k, args.l, args.gamma,
                              args.snr_db, seed)
    return inst, truth


def cmd_gen(args):
    inst, truth = _generate_instance(args, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.app == "multicast":
        _dump_json(out, mc.instance_to_dict(inst))
    elif args.app == "relay":
        _dump_json(out, rl.instance_to_dict(inst))
    else:
        if args.format == "vmin":
            ioformats.write_vmin(out, inst.A)
        else:
            ioformats.write_matrix_csv(out, inst.A)
        if args.truth_out:
            _dump_json(Path(args.truth_out), {
                "X": truth.X.tolist(), "S": truth.S.tolist(),
                "gamma": truth.gamma,
                "snr_db": None if np.isinf(truth.snr_db) else truth.snr_db,
            })
    log.info("wrote %s instance to %s", args.app, out)
    return 0


def _load_instance(args, seed):
    if getattr(args, "instance", None):
        path = args.instance
        if args.app == "multicast":
            with open(path) as fh:
                return mc.instance_from_dict(json.load(fh)), None
        if args.app == "relay":
            with open(path) as fh:
                return rl.instance_from_dict(json.load(fh)), None
        A = ioformats.read_dense_matrix(path)
        truth = None
        if getattr(args, "truth", None):
            with open(args.truth) as fh:
                data = json.load(fh)
            truth = vm.GroundTruth(
                X=np.asarray(data["X"]), S=np.asarray(data["S"]),
                gamma=data["gamma"],
                snr_db=np.inf if data["snr_db"] is None else data["snr_db"],
            )
        return vm.build_instance(A, args.k, args.eps_smooth), truth
    return _generate_instance(args, seed)


# --------------------------------------------------------------------------
# solve
# --------------------------------------------------------------------------

def cmd_solve(args):
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    inst, truth = _load_instance(args, args.seed)
    results, trace = _run_app(args, inst, truth, args.seed, outdir / "trace.csv")
    _dump_json(outdir / "results.json", results)
    log.info("results written to %s", outdir)
    return 0 if trace.converged else 1


def _trace_writer(path):
    """Line-buffered CSV sink so a crash leaves a parseable prefix."""
    fh = open(path, "w", newline="", buffering=1)
    writer = csv.writer(fh)
    writer.writerow(PddTrace.CSV_COLUMNS)
    shell = PddTrace()

    def on_iteration(rec):
        writer.writerow(shell.csv_row(rec))
        log.debug("k=%d h_inf=%.3e rho=%.3e branch=%s", rec.k, rec.h_inf,
                  rec.rho, rec.branch)

    return fh, on_iteration


def _run_app(args, inst, truth, seed, trace_path):
    overrides = _config_overrides(args)
    fh, on_iteration = _trace_writer(trace_path)
    try:
        if args.app == "multicast":
            config = mc.default_config(inst, seed=seed, **overrides)
            problem = mc.MulticastProblem(inst)
            rng = np.random.default_rng(config.seed)
            z0 = mc.initial_iterate(inst, rng)
            z, _, trace = pdd_run(problem, z0, np.zeros(inst.n_users), config,
                                  on_iteration=on_iteration)
            w_scaled = np.sqrt(inst.p_bs) * z.w
            results = {
                "w": ioformats.complex_to_pairs(w_scaled),
                "min_rate_bits": mc.min_rate(w_scaled, inst),
                "kkt_residual": mc.kkt_residual(z.w, inst),
                "feasibility_gap": trace.records[-1].h_inf,
                "iterations": len(trace.records),
            }
            return results, trace
        if args.app == "relay":
            config = rl.default_config(inst, seed=seed, **overrides)
            problem = rl.RelayProblem(inst)
            rng = np.random.default_rng(config.seed)
            z0 = rl.initial_iterate(inst, rng)
            lam0 = np.zeros(rl.constraint_h(z0, inst).size)
            z, _, trace = pdd_run(problem, z0, lam0, config,
                                  on_iteration=on_iteration)
            V, F, scales = rl.repair_feasibility(z.V, z.F, inst)
            results = {
                "V": ioformats.complex_to_pairs(V),
                "F": ioformats.complex_to_pairs(F),
                "sum_rate_nats": rl.sum_rate(V, F, inst),
                "feasibility_gap": trace.records[-1].h_inf,
                "repair_scale": list(scales),
                "iterations": len(trace.records),
            }
            return results, trace
        # volmin: restarts, optional prescaling, last restart streams its trace
        scale = 1.0
        if args.prescale:
            scale = _volmin_prescale(inst)
            if scale != 1.0:
                inst = vm.build_instance(scale * inst.A, inst.rank, inst.eps)
                log.info("prescaled data by %.3e", scale)
        config = vm.default_config(inst, seed=seed, **overrides)
        X, S, trace = vm.solve_restarts(inst, config, restarts=args.restarts)
        for rec in trace.records:
            on_iteration(rec)
        X_out = X / scale
        results = {
            "X": X_out.tolist(),
            "S": S.tolist(),
            "feasibility_gap": trace.records[-1].h_inf,
            "f_eps": vm.f_eps(X, inst.eps),
            "restarts_used": args.restarts,
        }
        if truth is not None:
            results["mse_db"] = vm.mse_metric(X_out, truth.X)
        return results, trace
    finally:
        fh.close()


def _volmin_prescale(inst):
    """Scale factor pushing the rank-K singular value of A above the
    smoothing floor (heuristic: columns of S average 1/sqrt(L/K) mass)."""
    s = np.linalg.svd(inst.A, compute_uv=False)
    sK = s[inst.rank - 1] if s.size >= inst.rank else 0.0
    target = 2.0 * np.sqrt(inst.eps) * np.sqrt(inst.n_cols / inst.rank)
    if sK <= 0:
        return 1.0
    return max(1.0, target / sK)


# --------------------------------------------------------------------------
# bench
# --------------------------------------------------------------------------

def _parse_seeds(expr):
    if ".." in expr:
        a, b = expr.split("..")
        return list(range(int(a), int(b) + 1))
    return [int(s) for s in expr.split(",") if s != ""]


def cmd_bench(args):
    seeds = _parse_seeds(args.seeds)
    if not seeds:
        print("error: need at least one seed", file=sys.stderr)
        return 2
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = []
    for seed in seeds:
        t0 = time.perf_counter()
        try:
            inst, truth = _load_instance(args, seed)
            results, trace = _run_app(args, inst, truth, seed,
                                      outdir / f"trace_seed{seed}.csv")
            objective = {
                "multicast": results.get("min_rate_bits"),
                "relay": results.get("sum_rate_nats"),
                "volmin": results.get("f_eps"),
            }[args.app]
            rows.append({
                "seed": seed, "status": "ok", "objective": objective,
                "feasibility_gap": results["feasibility_gap"],
                "iterations": results["iterations"] if "iterations" in results
                else len(trace.records),
                "time_s": time.perf_counter() - t0,
            })
        except Exception as exc:  # record, keep going
            log.warning("seed %d failed: %s", seed, exc)
            rows.append({"seed": seed, "status": f"failed: {exc}",
                         "objective": float("nan"),
                         "feasibility_gap": float("nan"), "iterations": 0,
                         "time_s": time.perf_counter() - t0})
    _write_bench_csv(outdir / "summary.csv", rows)
    print(f"bench: {sum(r['status'] == 'ok' for r in rows)}/{len(rows)} seeds ok, "
          f"summary in {outdir / 'summary.csv'}")
    return 0 if all(r["status"] == "ok" for r in rows) else 1


def _write_bench_csv(path, rows):
    cols = ["seed", "status", "objective", "feasibility_gap", "iterations", "time_s"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for r in rows:
            writer.writerow([r[c] for c in cols])
        ok_rows = [r for r in rows if r["status"] == "ok"]
        for stat, fn in (("mean", statistics.fmean), ("median", statistics.median),
                         ("p10", lambda v: _percentile(v, 10)),
                         ("p90", lambda v: _percentile(v, 90))):
            if not ok_rows:
                break
            writer.writerow([
                f"aggregate_{stat}", "",
                fn([r["objective"] for r in ok_rows]),
                fn([r["feasibility_gap"] for r in ok_rows]),
                fn([r["iterations"] for r in ok_rows]),
                fn([r["time_s"] for r in ok_rows]),
            ])


def _percentile(values, q):
    return float(np.percentile(np.asarray(values, dtype=float), q))


# --------------------------------------------------------------------------
# verify
# --------------------------------------------------------------------------

def cmd_verify(args):
    results = run_suites(args.suite, seed=args.seed)
    failed = 0
    for r in results:
        mark = "PASS" if r.passed else "FAIL"
        detail = f"  [{r.detail}]" if r.detail else ""
        print(f"{mark} {r.suite}/{r.name}{detail}")
        failed += not r.passed
    print(f"{len(results) - failed}/{len(results)} properties passed")
    return 1 if failed else 0


def _dump_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


if __name__ == "__main__":
    sys.exit(main())
