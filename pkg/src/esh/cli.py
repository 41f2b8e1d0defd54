"""Command line interface.

Subcommands:
  bench      run a (benchmark x sampler x seed) sweep, write CSV/JSON records
  sample     dump a single trajectory (tbar, t, x, r per step) as CSV
  logz       run the partition-function pipeline, write the trace CSV
  gradcheck  verify analytic gradients against finite differences

Exit codes: 0 success, 1 any flagged error row, 2 configuration error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import harness
from .energy import benchmark_names, check_gradient, get_benchmark
from .harness import ConfigError, ExperimentConfig, SamplerConfig, parse_config, parse_sampler
from .integrators import integrate


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="esh", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("bench", help="run a benchmark sweep")
    bench.add_argument("--config", help="flat key = value config file")
    bench.add_argument("--benchmark", help="comma-separated benchmark names")
    bench.add_argument("--sampler", help="sampler label(s), e.g. esh-leap(eps=0.1),ula(eps=0.1)")
    bench.add_argument("--eps", type=float, help="step size for a bare --sampler name")
    bench.add_argument("--k", type=int, help="leapfrog steps per HMC transition")
    bench.add_argument("--energy-scale", type=float, help="target energy scale factor")
    bench.add_argument("--chains", type=int)
    bench.add_argument("--budget", type=int)
    bench.add_argument("--seed", type=int, help="single master seed (overrides config seeds)")
    bench.add_argument("--out", help="output directory")

    sample = sub.add_parser("sample", help="dump one trajectory")
    sample.add_argument("--benchmark", required=True)
    sample.add_argument("--eps", type=float, default=0.1)
    sample.add_argument("--steps", type=int, default=200)
    sample.add_argument("--seed", type=int, default=0)
    sample.add_argument("--out", required=True, help="output CSV path")

    logz = sub.add_parser("logz", help="partition function estimate")
    logz.add_argument("--benchmark", required=True, help="a Gaussian-family benchmark with analytic log Z")
    logz.add_argument("--chains", type=int, default=1000)
    logz.add_argument("--eps", type=float, default=0.1)
    logz.add_argument("--steps", type=int, default=50)
    logz.add_argument("--seed", type=int, default=0)
    logz.add_argument("--out", required=True, help="output CSV path")

    grad = sub.add_parser("gradcheck", help="finite-difference gradient check")
    grad.add_argument("--benchmark", required=True)
    grad.add_argument("--probes", type=int, default=100)
    grad.add_argument("--h", type=float, default=1e-4)
    grad.add_argument("--seed", type=int, default=0)
    grad.add_argument("--tol", type=float, default=1e-4)
    return p


def _bench_config(args) -> ExperimentConfig:
    if args.config:
        cfg = parse_config(args.config)
    else:
        cfg = ExperimentConfig()
    updates: dict = {}
    if args.benchmark:
        updates["benchmarks"] = tuple(s.strip() for s in args.benchmark.split(","))
    if args.sampler:
        samplers = []
        for text in harness._split_samplers(args.sampler):
            sc = parse_sampler(text)
            if "(" not in text:  # bare name: apply flag overrides
                sc = SamplerConfig(
                    kind=sc.kind,
                    eps=args.eps if args.eps is not None else sc.eps,
                    k=args.k if args.k is not None else sc.k,
                    energy_scale=args.energy_scale if args.energy_scale is not None else sc.energy_scale,
                )
            samplers.append(sc)
        updates["samplers"] = tuple(samplers)
    if args.chains is not None:
        updates["n_chains"] = args.chains
    if args.budget is not None:
        updates["grad_budget"] = args.budget
        if not args.config:
            updates["measure_at"] = (args.budget,)
    if args.seed is not None:
        updates["seeds"] = (args.seed,)
    if args.out:
        updates["output_dir"] = args.out
    from dataclasses import replace

    return replace(cfg, **updates)


def _cmd_bench(args) -> int:
    try:
        cfg = _bench_config(args)
        for name in cfg.benchmarks:
            get_benchmark(name, cfg.energy_params.get(name))
    except (ConfigError, ValueError, KeyError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    records, samples = harness.run_experiment(cfg)
    os.makedirs(cfg.output_dir, exist_ok=True)
    csv_path = os.path.join(cfg.output_dir, "results.csv")
    harness.emit(records, "csv", csv_path, cfg)
    harness.emit(records, "json", os.path.join(cfg.output_dir, "results.json"), cfg)
    if cfg.emit_samples and samples:
        harness.emit_samples_csv(samples, os.path.join(cfg.output_dir, "samples.csv"))
    n_err = sum(1 for r in records if r.error)
    print(f"wrote {len(records)} records to {csv_path}" + (f" ({n_err} flagged)" if n_err else ""))
    return 1 if n_err else 0


def _cmd_sample(args) -> int:
    try:
        bench = get_benchmark(args.benchmark)
    except KeyError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    rng = np.random.default_rng(np.random.SeedSequence(args.seed))
    model = bench.make_model()
    x0 = bench.init(1, rng)[0]
    traj = integrate(x0, model, args.eps, args.steps, rng)
    harness.emit_trajectory_csv(traj, args.out)
    print(f"wrote {len(traj)} states to {args.out}")
    return 0


def _cmd_logz(args) -> int:
    try:
        bench = get_benchmark(args.benchmark)
    except KeyError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    if bench.log_partition is None:
        print(f"config error: {args.benchmark} has no analytic log partition", file=sys.stderr)
        return 2
    target = bench.make_model()
    base = get_benchmark(f"GAUSSIAN({bench.dim})")
    result = harness.run_logz(
        target=target,
        log_z_target=bench.log_partition,
        base=base.make_model(),
        log_z_base=base.log_partition,
        base_sampler=base.sample_truth,
        n_chains=args.chains,
        eps=args.eps,
        n_steps=args.steps,
        seed=args.seed,
        benchmark_name=bench.name,
    )
    harness.emit_logz_csv(result, args.out)
    err = result.logz_est[-1] - result.logz_true
    print(f"log Z estimate {result.final_estimate:.6g} (true {result.logz_true:.6g}, error {err:+.3g})")
    if result.error:
        print(f"flagged: {result.error}", file=sys.stderr)
        return 1
    return 0


def _cmd_gradcheck(args) -> int:
    try:
        bench = get_benchmark(args.benchmark)
    except KeyError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    model = bench.make_model()
    rng = np.random.default_rng(args.seed)
    probes = bench.init(args.probes, rng)
    err = check_gradient(model, probes, args.h)
    ok = err <= args.tol
    print(f"{bench.name}: max relative gradient error {err:.3g} over {args.probes} probes "
          f"({'PASS' if ok else 'FAIL'} at {args.tol:g})")
    return 0 if ok else 1


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "bench": _cmd_bench,
        "sample": _cmd_sample,
        "logz": _cmd_logz,
        "gradcheck": _cmd_gradcheck,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
