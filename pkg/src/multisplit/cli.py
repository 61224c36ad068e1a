"""Command-line experiment runner.

Subcommands
-----------
run       one algorithm on one problem; writes a trace CSV and a summary CSV
table     the Fermat-Weber iteration-count grid as one merged CSV
instance  write a seeded Fermat-Weber instance file

Exit status: 0 on success, 2 on bad flags, 3 if the run diverged (the trace
is still written), 1 on any other error.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from .core import ALGORITHMS, run
from .deblur import DeblurParams, isnr, make_problem, synthetic_image
from .fermat_weber import (FermatWeberProblem, fw_experiment, gen_instance,
                           load_instance, save_instance, weiszfeld_reference)
from .fileio import atomic_write, emit_plot_data, read_pgm, write_pgm, write_trace_csv

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3

TABLE_TAUS = (0.001, 0.01, 0.1)
TABLE_SIZES = ((50, 50), (50, 100), (50, 200), (100, 100), (100, 200), (100, 400),
               (200, 200), (200, 400), (200, 800), (300, 300), (300, 600), (300, 1200))
TABLE_ALGOS = ("msa", "famsa-s", "grad", "nest")


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one ``run`` invocation."""

    problem: str
    algo: str
    output: str
    n: int = 50
    K: int = 50
    tau: float | None = None
    mu: float | None = None
    rho: float = 1e-3
    delta: float = 1e-4
    sigma: float = 1e-4
    alpha: float = 0.001
    beta: float = 0.035
    tol: float | None = None
    max_iter: int = 500
    seed: int = 0
    mixing: str = "uniform"

    def __post_init__(self):
        if self.problem not in ("fermat-weber", "deblur"):
            raise UsageError(f"unknown problem {self.problem!r}")
        if self.algo not in ALGORITHMS:
            raise UsageError(f"unknown algorithm {self.algo!r}")
        if (self.tau is None) == (self.mu is None):
            raise UsageError("give exactly one of --tau and --mu")
        step = self.tau if self.tau is not None else self.mu
        if not (step > 0 and math.isfinite(step)):
            raise UsageError("step size must be positive and finite")
        if self.max_iter < 0:
            raise UsageError("--max-iter must be nonnegative")
        if self.problem == "fermat-weber" and (self.n < 1 or self.K < 2):
            raise UsageError("need --n >= 1 and --k >= 2")
        if self.mixing not in ("uniform", "identity"):
            raise UsageError(f"unknown mixing {self.mixing!r}")

    @property
    def num_blocks(self) -> int:
        return self.K if self.problem == "fermat-weber" else 3

    @property
    def resolved_mu(self) -> float:
        return self.mu if self.mu is not None else self.tau * (self.num_blocks - 1)

    @property
    def resolved_tau(self) -> float:
        return self.tau if self.tau is not None else self.mu / (self.num_blocks - 1)


def _stem(path: str) -> str:
    root, ext = os.path.splitext(path)
    return root if ext.lower() == ".csv" else path


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _run_fermat_weber(cfg: ExperimentConfig, args):
    instance = load_instance(args.instance) if args.instance else gen_instance(cfg.n, cfg.K, cfg.seed)
    cfg_n, cfg_k = instance.n, instance.K
    if cfg_k < 2:
        raise UsageError("instance needs at least two points")
    reference = weiszfeld_reference(instance)
    problem = FermatWeberProblem(instance, cfg.rho)
    tol = 1e-6 if cfg.tol is None else cfg.tol
    mu = cfg.mu if cfg.mu is not None else cfg.tau * (cfg_k - 1)
    tau = cfg.tau if cfg.tau is not None else cfg.mu / (cfg_k - 1)
    record = run(problem, cfg.algo, mu=mu, tau=tau, mixing=cfg.mixing,
                 x0=instance.centroid(), max_iter=cfg.max_iter, tol=tol,
                 f_star=reference.f_star, objective=problem.nonsmooth_value)
    return record, {}


def _run_deblur(cfg: ExperimentConfig, args):
    truth = read_pgm(args.image) if args.image else synthetic_image(args.size)
    params = DeblurParams(alpha=cfg.alpha, beta=cfg.beta, delta=cfg.delta, sigma=cfg.sigma,
                          mu=cfg.resolved_mu, noise_sd=args.noise_sd, seed=cfg.seed,
                          levels=args.levels, inner_iters=args.inner_iters)
    b, problem = make_problem(truth, params)
    record = run(problem, cfg.algo, mu=cfg.resolved_mu, tau=cfg.resolved_tau,
                 mixing=cfg.mixing, x0=np.zeros(truth.shape), max_iter=cfg.max_iter,
                 objective=problem.nonsmooth_value,
                 monitor=lambda x: {"isnr": isnr(x, b, truth)})
    return record, {"image": record.x}


def run_experiment(cfg: ExperimentConfig, args) -> int:
    t0 = time.perf_counter()
    if cfg.problem == "fermat-weber":
        record, extra = _run_fermat_weber(cfg, args)
    else:
        record, extra = _run_deblur(cfg, args)
    elapsed = time.perf_counter() - t0

    write_trace_csv(record, cfg.output)
    stem = _stem(cfg.output)
    last = record.rows[-1]
    header = ["problem", "algo", "iter", "relerr", "time", "status"]
    values = [cfg.problem, cfg.algo, _fmt(last["iter"]), _fmt(last["relerr"]),
              _fmt(elapsed), record.status]
    if cfg.problem == "deblur":
        header += ["obj", "isnr"]
        values += [_fmt(last["obj_min"]), _fmt(last["isnr"])]
    summary = _csv_text(header, [values])
    atomic_write(f"{stem}_summary.csv", summary)
    sys.stdout.write(summary)

    if "image" in extra:
        write_pgm(args.image_out or f"{stem}.pgm", extra["image"])
    if args.plot_data:
        emit_plot_data(record, args.plot_data)
    if record.status == "diverged":
        print(f"diverged at iteration {last['iter']}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def _parse_sizes(text: str):
    sizes = []
    for item in text.split(","):
        try:
            n, K = (int(v) for v in item.lower().split("x"))
        except ValueError:
            raise UsageError(f"bad size {item!r}, expected NxK") from None
        if n < 1 or K < 2:
            raise UsageError(f"bad size {item!r}")
        sizes.append((n, K))
    return sizes


def _parse_floats(text: str):
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"bad list {text!r}") from None
    if not all(v > 0 for v in values):
        raise UsageError("values must be positive")
    return values


def run_table(args) -> int:
    sizes = _parse_sizes(args.sizes) if args.sizes else list(TABLE_SIZES)
    taus = _parse_floats(args.taus) if args.taus else list(TABLE_TAUS)
    algos = args.algos.split(",") if args.algos else list(TABLE_ALGOS)
    for a in algos:
        if a not in ALGORITHMS:
            raise UsageError(f"unknown algorithm {a!r}")
    header = ["n", "K", "tau", "ref_time"]
    for a in algos:
        header += [f"{a}_iter", f"{a}_relerr", f"{a}_time"]
    rows = []
    for n, K in sizes:
        instance = gen_instance(n, K, args.seed)
        t0 = time.perf_counter()
        reference = weiszfeld_reference(instance)
        ref_time = time.perf_counter() - t0
        for tau in taus:
            result = fw_experiment(n, K, tau, rho=args.rho, tol=args.tol, algos=algos,
                                   max_iter=args.max_iter, instance=instance,
                                   reference=reference)
            row = [str(n), str(K), _fmt(tau), _fmt(ref_time)]
            for r in result:
                row += [_fmt(r["iter"]), _fmt(r["relerr"]), _fmt(r["time"])]
            rows.append(row)
            if args.verbose:
                counts = " ".join(f"{r['algo']}={r['iter']}" for r in result)
                print(f"n={n} K={K} tau={tau:g}: {counts}", file=sys.stderr)
    text = _csv_text(header, rows)
    atomic_write(args.output, text)
    sys.stdout.write(text)
    return EXIT_OK


def run_instance(args) -> int:
    if args.n < 1 or args.k < 1:
        raise UsageError("need --n >= 1 and --k >= 1")
    save_instance(gen_instance(args.n, args.k, args.seed), args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="multisplit",
                                     description="Multiple-splitting experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one algorithm on one problem")
    p.add_argument("--problem", choices=("fermat-weber", "deblur"), default="fermat-weber")
    p.add_argument("--algo", choices=ALGORITHMS, default="famsa-s")
    p.add_argument("--n", type=int, default=50, help="dimension (fermat-weber)")
    p.add_argument("--k", type=int, default=50, help="number of points (fermat-weber)")
    step = p.add_mutually_exclusive_group()
    step.add_argument("--tau", type=float, help="gradient step; mu = tau (K - 1)")
    step.add_argument("--mu", type=float, help="splitting parameter")
    p.add_argument("--rho", type=float, default=1e-3, help="distance smoothing")
    p.add_argument("--delta", type=float, default=1e-4, help="TV smoothing")
    p.add_argument("--sigma", type=float, default=1e-4, help="wavelet-l1 smoothing")
    p.add_argument("--alpha", type=float, default=0.001, help="TV weight")
    p.add_argument("--beta", type=float, default=0.035, help="wavelet-l1 weight")
    p.add_argument("--tol", type=float, default=None,
                   help="stop when relerr < tol (fermat-weber, default 1e-6)")
    p.add_argument("--max-iter", "--iters", dest="max_iter", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mixing", choices=("uniform", "identity"), default="uniform")
    p.add_argument("--output", default="trace.csv", help="trace CSV path")
    p.add_argument("--instance", help="read fermat-weber points from this file")
    p.add_argument("--plot-data", metavar="PREFIX",
                   help="also write PREFIX_obj.dat (and PREFIX_isnr.dat)")
    p.add_argument("--size", type=int, default=64, help="synthetic image side (deblur)")
    p.add_argument("--image", help="ground-truth PGM (deblur)")
    p.add_argument("--image-out", help="reconstruction PGM (default <output stem>.pgm)")
    p.add_argument("--noise-sd", type=float, default=0.56)
    p.add_argument("--inner-iters", type=int, default=10, help="TV prox iterations")
    p.add_argument("--levels", type=int, default=4, help="Haar levels")

    t = sub.add_parser("table", help="fermat-weber iteration-count grid")
    t.add_argument("--sizes", help="comma list of NxK (default: full grid)")
    t.add_argument("--taus", help="comma list of tau values (default 0.001,0.01,0.1)")
    t.add_argument("--algos", help="comma list (default msa,famsa-s,grad,nest)")
    t.add_argument("--rho", type=float, default=1e-3)
    t.add_argument("--tol", type=float, default=1e-6)
    t.add_argument("--max-iter", "--iters", dest="max_iter", type=int, default=500)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--output", default="table.csv")
    t.add_argument("--verbose", action="store_true")

    i = sub.add_parser("instance", help="write a seeded fermat-weber instance")
    i.add_argument("--n", type=int, required=True)
    i.add_argument("--k", type=int, required=True)
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--output", required=True)
    return parser


def config_from_args(args) -> ExperimentConfig:
    return ExperimentConfig(
        problem=args.problem, algo=args.algo, output=args.output, n=args.n, K=args.k,
        tau=args.tau, mu=args.mu, rho=args.rho, delta=args.delta, sigma=args.sigma,
        alpha=args.alpha, beta=args.beta, tol=args.tol, max_iter=args.max_iter,
        seed=args.seed, mixing=args.mixing)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        if args.command == "run":
            return run_experiment(config_from_args(args), args)
        if args.command == "table":
            return run_table(args)
        return run_instance(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"multisplit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"multisplit: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
