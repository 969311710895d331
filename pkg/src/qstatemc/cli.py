"""Command-line front end: ``qstatemc {sample,check,analyze,bench}``.

Output files never contain timing or host details, so a run repeated with the
same arguments and seed writes identical bytes.  A short run report goes to
standard error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .analysis import (
    DEFAULT_BINS,
    DEFAULT_LAMBDAS,
    PurityDensity,
    bin_averaged_density,
    purity_histogram,
    separable_fraction,
    size_curve,
)
from .densities import TARGET_KINDS, Dataset, TargetDensity
from .io import read_sample, write_csv, write_sample
from .physicality import AscentConfig, ConvergenceError, is_physical, maximize_q
from .quantum import POM_REGISTRY, get_pom, reconstruct_ic
from .rng import GENERATOR_NAME, fresh_seed, make_rng
from .samplers.independence import check_physical, importance_sample, rejection_sample
from .samplers.mcmc import ChainConfig, xmhmc_sample
from .simplex import sample_simplex_exponential

log = logging.getLogger("qstatemc")

METHODS = ("reject", "importance", "mcmc")
DEFAULT_SIGMA = 0.1


@dataclass(frozen=True)
class RunConfig:
    """Everything that determines a run's output.

    ``command`` is the subcommand path (e.g. ``("analyze", "purity")``) and
    ``options`` the remaining flags by name.
    """

    command: tuple
    options: dict = field(default_factory=dict)
    seed: int | None = None
    out: str | None = None

    def to_dict(self) -> dict:
        return {"command": list(self.command), "options": dict(sorted(self.options.items())),
                "seed": self.seed, "out": self.out}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return cls(tuple(d["command"]), dict(d.get("options", {})), d.get("seed"), d.get("out"))

    @classmethod
    def from_namespace(cls, ns: argparse.Namespace) -> "RunConfig":
        skip = {"command", "analysis", "seed", "out", "func", "verbose"}
        opts = {k: _plain(v) for k, v in vars(ns).items() if k not in skip}
        cmd = (ns.command,) + ((ns.analysis,) if getattr(ns, "analysis", None) else ())
        return cls(cmd, opts, getattr(ns, "seed", None), getattr(ns, "out", None))


@dataclass
class RunReport:
    config: RunConfig
    proposed: int = 0
    accepted: int = 0
    physical: int | None = None
    wall_time_s: float = 0.0
    rng: str = GENERATOR_NAME
    version: str = __version__

    @property
    def acceptance_rate(self) -> float | None:
        return self.accepted / self.proposed if self.proposed else None

    def summary(self) -> str:
        parts = [" ".join(self.config.command), f"seed={self.config.seed}"]
        if self.proposed:
            parts.append(f"proposed={self.proposed} accepted={self.accepted}")
            if self.physical is not None:
                parts.append(f"physical={self.physical}")
            parts.append(f"acceptance_rate={self.acceptance_rate:.6g}")
        parts += [f"wall_time={self.wall_time_s:.3f}s", f"rng={self.rng}", f"version={self.version}"]
        return "  ".join(parts)


def _plain(value):
    """JSON-ready form of a parsed flag value."""
    if isinstance(value, Dataset):
        return str(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    return value


class CliError(Exception):
    """Runtime failure reported with exit code 1."""


# ---------------------------------------------------------------- argument types

def _point(text: str) -> np.ndarray:
    try:
        p = np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    if np.any(p < 0) or abs(p.sum() - 1) > 1e-6:
        raise argparse.ArgumentTypeError("a probability vector needs nonnegative entries summing to 1")
    return p / p.sum()


def _dataset(text: str) -> Dataset:
    try:
        return Dataset.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


def _threads(ns) -> int:
    env = os.environ.get("QSS_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise CliError(f"QSS_THREADS must be an integer, got {env!r}")
    return ns.threads


# ---------------------------------------------------------------- subcommands

def cmd_sample(ns, parser, report: RunReport) -> int:
    pom = get_pom(ns.pom)
    if ns.target.startswith("posterior") and ns.data is None:
        parser.error(f"--target {ns.target} needs --data")
    if ns.data is not None and len(ns.data) != pom.n_outcomes:
        parser.error(f"--data has {len(ns.data)} counts, POM {ns.pom} has {pom.n_outcomes} outcomes")
    target = TargetDensity(ns.target, ns.data if ns.target.startswith("posterior") else None)
    threads = _threads(ns)
    rng = make_rng(ns.seed)
    if ns.method == "reject":
        sample = rejection_sample(target, pom, ns.n, rng, threads=threads, log_cap=ns.log_cap)
    elif ns.method == "importance":
        sample = importance_sample(target, pom, ns.n, rng, threads=threads)
    else:
        per_chain = -(-ns.n // ns.chains)
        burn_in = ns.burn_in if ns.burn_in is not None else max(per_chain // 10, 1000 if ns.tune else 0)
        cfg = ChainConfig(step_sigma=ns.sigma or DEFAULT_SIGMA, length=burn_in + per_chain * ns.thinning,
                          burn_in=burn_in, thinning=ns.thinning, tune=ns.tune, seed=ns.seed,
                          n_chains=ns.chains)
        sample = xmhmc_sample(target, pom, cfg, threads=threads)
    sample.meta["seed"] = ns.seed
    sample.meta["rng"] = GENERATOR_NAME
    header = {"config": report.config.to_dict(), "version": __version__, "rng": GENERATOR_NAME}
    write_sample(ns.out, sample, header, ns.data)
    report.proposed = int(sample.meta["proposals_total"])
    report.accepted = int(sample.meta["accepted"])
    report.physical = sample.meta.get("physical")
    return 0


def cmd_check(ns, parser, report: RunReport) -> int:
    pom = get_pom(ns.pom)
    if len(ns.point) != pom.n_outcomes:
        parser.error(f"--point has {len(ns.point)} entries, POM {ns.pom} has {pom.n_outcomes} outcomes")
    verdict = bool(is_physical(ns.point, pom))
    try:
        q_max, _ = maximize_q(ns.point, pom)
        note = ""
    except ConvergenceError as exc:
        q_max, note = exc.best_q, " (ascent not converged)"
    print(f"{'physical' if verdict else 'unphysical'}\nq_max={q_max:.10g}{note}")
    return 0 if verdict else 1


def _load(ns):
    sample, header = read_sample(ns.in_path)
    pom_name = getattr(ns, "pom", None) or sample.meta.get("pom")
    if pom_name is None:
        raise CliError("the sample header names no POM; pass --pom")
    return sample, header, get_pom(pom_name)


def cmd_analyze_purity(ns, parser, report: RunReport) -> int:
    sample, _, pom = _load(ns)
    dim = ns.dim or pom.dim
    if dim != pom.dim:
        parser.error(f"--dim {dim} does not match POM {pom.name} (dimension {pom.dim})")
    hist = purity_histogram(sample, pom=pom, bins=ns.bins)
    analytic = [None] * ns.bins
    try:
        density = PurityDensity(ns.prior, dim)
    except ValueError as exc:
        log.warning("%s; analytic column left empty", exc)
        density = None
    if density is not None and density.normalized:
        hi = density.support[1]
        inside = hist.edges[1:] <= hi + 1e-12
        averaged = bin_averaged_density(density, hist.edges[: int(inside.sum()) + 1])
        analytic[: len(averaged)] = averaged.tolist()
    elif density is not None:
        log.warning("prior %s, d = %d: only an unnormalized partial form is known; analytic column is NA",
                    density.prior, dim)
    rows = zip(hist.centers.tolist(), hist.density.tolist(), analytic)
    write_csv(ns.out, ["bin_center", "empirical_density", "analytic_density_or_NA"], rows)
    return 0


def cmd_analyze_size_curve(ns, parser, report: RunReport) -> int:
    sample, _, pom = _load(ns)
    if len(ns.data) != pom.n_outcomes:
        parser.error(f"--data has {len(ns.data)} counts, POM {pom.name} has {pom.n_outcomes} outcomes")
    lambdas = np.linspace(0.0, 1.0, ns.points) if ns.points else DEFAULT_LAMBDAS
    curve = size_curve(sample, ns.data, pom, lambdas)
    write_csv(ns.out, ["lambda", "size", "std_error"], curve.rows())
    return 0


def cmd_analyze_separable(ns, parser, report: RunReport) -> int:
    sample, _, pom = _load(ns)
    if pom.dim != 4 or not pom.is_informationally_complete:
        raise CliError(f"separability needs an informationally complete two-qubit POM, not {pom.name!r}")
    states = reconstruct_ic(sample.points, pom)
    res = separable_fraction(states, ns.bins, sample.weights)
    rows = [(lo, hi, f, e, c) for lo, hi, f, e, c in
            zip(res.edges[:-1].tolist(), res.edges[1:].tolist(), res.bin_fraction.tolist(),
                res.bin_std_error.tolist(), res.bin_counts.tolist())]
    rows.append((0.25, 1.0, res.fraction, res.std_error, len(sample)))
    write_csv(ns.out, ["purity_low", "purity_high", "separable_fraction", "std_error", "count"], rows)
    return 0


BENCH_MAX_ITERATIONS = 200_000
BENCH_STRATEGIES = (
    "check-dg", "check-cg", "check-param",
    "reject-primitive", "importance-primitive",
    "mcmc-dg-primitive", "mcmc-cg-primitive", "mcmc-param-primitive", "mcmc-param-jeffreys",
)


def _bench_ascent(kind):
    # steepest ascent creeps near the boundary; give it room to decide
    if kind == "param":
        return None
    return AscentConfig(method=kind.upper(), max_iterations=BENCH_MAX_ITERATIONS)


def _bench_one(name, n, seed, threads):
    """Run one strategy; returns (points, iterations, acceptance_rate)."""
    pom = get_pom("tat")
    stats = {}
    if name.startswith("check-"):
        kind = name.split("-")[1]
        P = sample_simplex_exponential(pom.n_outcomes, make_rng(seed), n)
        method = "tat" if kind == "param" else "ascent"
        cfg = _bench_ascent(kind)
        ok = check_physical(P, pom, cfg, threads, method, stats)
        return n, stats.get("iterations", 0), float(ok.mean())
    parts = name.split("-")
    target = TargetDensity("prior-" + parts[-1])
    if parts[0] == "reject":
        s = rejection_sample(target, pom, n, make_rng(seed), threads=threads, stats=stats)
    elif parts[0] == "importance":
        s = importance_sample(target, pom, n, make_rng(seed), threads=threads, stats=stats)
    else:
        kind = parts[1]
        method = "tat" if kind == "param" else "ascent"
        cfg = _bench_ascent(kind)
        chain = ChainConfig(step_sigma=0.1, length=n + n // 10, burn_in=n // 10, seed=seed)
        s = xmhmc_sample(target, pom, chain, ascent=cfg, threads=threads, method=method, stats=stats)
    return len(s), stats.get("iterations", 0), s.meta["acceptance_rate"]


def cmd_bench(ns, parser, report: RunReport) -> int:
    threads = _threads(ns)
    names = ns.strategies.split(",") if ns.strategies else list(BENCH_STRATEGIES)
    unknown = [s for s in names if s not in BENCH_STRATEGIES]
    if unknown:
        parser.error(f"unknown strategies {unknown}; choose from {','.join(BENCH_STRATEGIES)}")
    rows = []
    for name in names:
        t0 = time.perf_counter()
        points, iters, rate = _bench_one(name, ns.n, ns.seed, threads)
        wall = time.perf_counter() - t0
        print(f"{name}: {points} points, {wall:.2f}s, {iters} iterations", file=sys.stderr)
        rows.append((name, points, wall, iters, rate))
    write_csv(ns.out, ["strategy", "points", "wall_time_s", "iterations", "acceptance_rate"], rows)
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qstatemc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    poms = sorted(POM_REGISTRY)

    def seeded(p):
        p.add_argument("--seed", type=_seed, default=None,
                       help="64-bit seed; a fresh one is generated and printed if omitted")
        p.add_argument("--threads", type=_positive_int, default=1,
                       help="worker threads for physicality checks (QSS_THREADS overrides)")

    p = sub.add_parser("sample", help="draw a sample and write JSONL")
    p.add_argument("--pom", choices=poms, required=True)
    p.add_argument("--target", choices=TARGET_KINDS, required=True)
    p.add_argument("--data", type=_dataset, help="counts, e.g. 11,4,5,2,10,5,4,6,13")
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("-n", type=_positive_int, required=True,
                   help="accepted points (reject), proposals (importance) or emitted points (mcmc)")
    step = p.add_mutually_exclusive_group()
    step.add_argument("--sigma", type=float, help=f"MCMC step size (default {DEFAULT_SIGMA})")
    step.add_argument("--tune", action="store_true", help="tune the MCMC step size during burn-in")
    p.add_argument("--chains", type=_positive_int, default=1)
    p.add_argument("--burn-in", type=int, default=None)
    p.add_argument("--thinning", type=_positive_int, default=1)
    p.add_argument("--log-cap", type=float, default=None,
                   help="cap on ln r(p) for rejection sampling of Jeffreys targets")
    p.add_argument("--out", default="sample.jsonl")
    seeded(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("check", help="test whether a probability vector is physical")
    p.add_argument("--pom", choices=poms, required=True)
    p.add_argument("--point", type=_point, required=True)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("analyze", help="post-process a JSONL sample into CSV")
    asub = p.add_subparsers(dest="analysis", required=True)
    a = asub.add_parser("purity", help="purity histogram against the closed form")
    a.add_argument("--in", dest="in_path", required=True)
    a.add_argument("--prior", choices=("I", "II"), default="II")
    a.add_argument("--dim", type=int, default=None)
    a.add_argument("--bins", type=_positive_int, default=DEFAULT_BINS)
    a.add_argument("--out", default="purity.csv")
    a.set_defaults(func=cmd_analyze_purity)
    a = asub.add_parser("size-curve", help="prior content of likelihood regions")
    a.add_argument("--in", dest="in_path", required=True)
    a.add_argument("--data", type=_dataset, required=True)
    a.add_argument("--pom", choices=poms, default=None)
    a.add_argument("--points", type=_positive_int, default=None, help="lambda grid size (default 21)")
    a.add_argument("--out", default="size_curve.csv")
    a.set_defaults(func=cmd_analyze_size_curve)
    a = asub.add_parser("separable", help="PPT fraction per purity bin")
    a.add_argument("--in", dest="in_path", required=True)
    a.add_argument("--bins", type=_positive_int, default=15)
    a.add_argument("--out", default="separable.csv")
    a.set_defaults(func=cmd_analyze_separable)

    p = sub.add_parser("bench", help="time sampling and physicality-check strategies on TAT")
    p.add_argument("-n", type=_positive_int, default=10_000)
    p.add_argument("--strategies", default=None, help=f"comma-separated subset of {','.join(BENCH_STRATEGIES)}")
    p.add_argument("--out", default="bench.csv")
    seeded(p)
    p.set_defaults(func=cmd_bench)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)  # exits with status 2 on bad flags
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if hasattr(ns, "seed") and ns.seed is None:
        ns.seed = fresh_seed()
        print(f"no --seed given; using --seed {ns.seed}", file=sys.stderr)
    report = RunReport(RunConfig.from_namespace(ns))
    t0 = time.perf_counter()
    try:
        code = ns.func(ns, parser, report)
    except (CliError, ValueError, RuntimeError, OSError) as exc:
        print(f"qstatemc: error: {exc}", file=sys.stderr)
        return 1
    report.wall_time_s = time.perf_counter() - t0
    print(report.summary(), file=sys.stderr)
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
