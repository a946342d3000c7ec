"""Command-line driver: ``vqpd {solve,compare,verify,gen}``.

Exit codes:

====  ==========================================
0     run completed (verify: every check held)
1     verify found at least one violated check
2     numerical abort (non-finite value)
3     configuration error
4     verify: no reference solution available
====  ==========================================
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, load_problem, save_problem
from .instances import InstanceDescriptor
from .oracle import MissingReferenceError, ReferenceCache, reference_for
from .solvers import ALGORITHMS, NumericalError, SolverConfig, run
from .trace import write_trace

log = logging.getLogger("vqpd")

EXIT_OK, EXIT_FAILED, EXIT_NAN, EXIT_CONFIG, EXIT_NOREF = 0, 1, 2, 3, 4


@dataclass
class RunConfig:
    instance: str
    algorithm: str = "new-constant"
    alpha: float | None = None
    iters: int = 1000
    stride: int = 1
    diagnostics: bool = False
    seed: int | None = None
    out: str | None = None
    timing: bool = False
    pd_step: float | None = None
    lambda_max: float | None = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; choose from {', '.join(ALGORITHMS)}")
        if self.iters < 1:
            raise ConfigError("iters must be >= 1")
        if self.stride < 1:
            raise ConfigError("stride must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("run config must be a JSON object")
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown run config keys: {sorted(extra)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            d = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from None
        return cls.from_dict(d)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            max_iters=self.iters, stride=self.stride, alpha=self.alpha, diagnostics=self.diagnostics,
            record_time=self.timing, pd_step=self.pd_step, lambda_max=self.lambda_max,
        )


# ---------------------------------------------------------------------------
# helpers


def resolve_instance(text: str, seed: int | None = None):
    """``(spec, analytic-reference-or-None, descriptor-or-None)`` for a name or a JSON path."""
    if text.endswith(".json") or os.path.sep in text:
        spec = load_problem(text)
        desc = None
        if spec.descriptor:
            desc = InstanceDescriptor(spec.descriptor["name"], spec.descriptor.get("params", {}))
        return spec, None, desc
    try:
        desc = InstanceDescriptor.parse(text)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if seed is not None:
        desc = InstanceDescriptor(desc.name, {**desc.params, "seed": seed})
    try:
        spec, ref = desc.build()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return spec, ref, desc


def _lookup_reference(spec, ref, desc, compute=False, iterations=100_000):
    if ref is not None:
        return ref
    if desc is None:
        return None
    try:
        return reference_for(desc, spec, cache=ReferenceCache(), compute=compute, iterations=iterations)
    except MissingReferenceError:
        return None


def _out_dir(arg: str | None) -> Path:
    d = Path(arg or os.environ.get("VQPD_OUTPUT_DIR") or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _stem(spec, algorithm: str) -> str:
    return f"{spec.name}_{algorithm}"


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def summarize(spec, r) -> dict:
    Gbar = spec.G(r.x_bar)
    iters = np.asarray(r.iter_ns, dtype=float)
    return {
        "instance": spec.name,
        "algorithm": r.algorithm,
        "status": r.status,
        "iterations": r.t,
        "final_F_xbar": spec.F(r.x_bar),
        "final_max_violation": spec.violation(Gbar),
        "mean_iter_ns": float(iters.mean()) if iters.size else 0.0,
        "p50_iter_ns": float(np.median(iters)) if iters.size else 0.0,
        "inner_warnings": r.inner_warnings,
    }


def _execute(cfg: RunConfig, out: Path, quiet: bool = False):
    spec, ref, desc = resolve_instance(cfg.instance, cfg.seed)
    reference = ref
    if cfg.diagnostics or cfg.algorithm == "pd-subgradient":
        reference = _lookup_reference(spec, ref, desc)
    r = run(spec, cfg.algorithm, cfg.solver_config(), reference=reference)
    stem = _stem(spec, cfg.algorithm)
    write_trace(out / f"{stem}.csv", r.trace)
    summary = summarize(spec, r)
    summary["trace"] = f"{stem}.csv"
    if r.diagnostics is not None:
        summary["diagnostics"] = r.diagnostics.report()
    (out / f"{stem}.summary.json").write_text(json.dumps(summary, indent=1, default=_jsonable) + "\n")
    if not quiet:
        print(
            f"{spec.name} {cfg.algorithm}: F_xbar={summary['final_F_xbar']:.10g} "
            f"max_violation={summary['final_max_violation']:.3g} iterations={r.t} "
            f"mean_iter_us={summary['mean_iter_ns'] / 1e3:.3f}"
        )
    return spec, r, summary


# ---------------------------------------------------------------------------
# subcommands


def _run_config_from_args(a, algorithm=None) -> RunConfig:
    if getattr(a, "config", None):
        return RunConfig.load(a.config)
    if not a.instance:
        raise ConfigError("--instance is required")
    return RunConfig(
        instance=a.instance, algorithm=algorithm or a.algorithm, alpha=a.alpha, iters=a.iters,
        stride=a.stride, diagnostics=a.diagnostics, seed=a.seed, out=a.out, timing=a.timing,
        pd_step=a.pd_step, lambda_max=a.lambda_max,
    )


def cmd_solve(a) -> int:
    cfg = _run_config_from_args(a)
    _execute(cfg, _out_dir(cfg.out))
    return EXIT_OK


def cmd_compare(a) -> int:
    if a.configs:
        cfgs = [RunConfig.load(p) for p in a.configs]
    else:
        algs = a.algorithms or []
        cfgs = [_run_config_from_args(a, alg) for alg in algs]
    if len(cfgs) < 2:
        raise ConfigError("compare needs at least two runs")
    names = {(c.instance, c.seed) for c in cfgs}
    if len(names) != 1:
        raise ConfigError(f"compare runs must share one instance, got {sorted(map(str, names))}")
    out = _out_dir(a.out or cfgs[0].out)
    results = [_execute(c, out, quiet=True) for c in cfgs]

    labels = [r.algorithm for _, r, _ in results]
    if len(set(labels)) != len(labels):
        labels = [f"{lab}#{i}" for i, lab in enumerate(labels)]
    rows: dict[int, dict] = {}
    for lab, (_, r, _) in zip(labels, results):
        for rec in r.trace:
            rows.setdefault(rec.t, {})[lab] = rec
    with open(out / "comparison.csv", "w", newline="", encoding="ascii") as fh:
        head = ["t"]
        for lab in labels:
            head += [f"F_xbar[{lab}]", f"max_violation_xbar[{lab}]"]
        fh.write(",".join(head) + "\n")
        for t in sorted(rows):
            cells = [str(t)]
            for lab in labels:
                rec = rows[t].get(lab)
                cells += ["", ""] if rec is None else ["%.17g" % rec.F_of_xbar, "%.17g" % rec.max_violation_of_xbar]
            fh.write(",".join(cells) + "\n")

    base = results[0][2]
    table = []
    for lab, (_, _, s) in zip(labels, results):
        table.append({
            "run": lab,
            "final_F_xbar": s["final_F_xbar"],
            "final_max_violation": s["final_max_violation"],
            "mean_iter_ns": s["mean_iter_ns"],
            "p50_iter_ns": s["p50_iter_ns"],
            "mean_time_ratio_vs_first": s["mean_iter_ns"] / base["mean_iter_ns"] if base["mean_iter_ns"] else None,
            "p50_time_ratio_vs_first": s["p50_iter_ns"] / base["p50_iter_ns"] if base["p50_iter_ns"] else None,
        })
    (out / "comparison.json").write_text(json.dumps(table, indent=1, default=_jsonable) + "\n")
    print(f"{'run':<18} {'F_xbar':>18} {'max_viol':>10} {'mean_us':>10} {'p50_us':>10} {'ratio':>8}")
    for row in table:
        ratio = row["mean_time_ratio_vs_first"]
        print(f"{row['run']:<18} {row['final_F_xbar']:>18.10g} {row['final_max_violation']:>10.3g} "
              f"{row['mean_iter_ns'] / 1e3:>10.3f} {row['p50_iter_ns'] / 1e3:>10.3f} "
              f"{(ratio if ratio is not None else float('nan')):>8.3f}")
    return EXIT_OK


def verify_instance(spec, reference, budget: int, algorithms=None) -> dict:
    """Run every applicable algorithm with diagnostics and collect the reports."""
    if algorithms is None:
        algorithms = ["new-adaptive"]
        if spec.has_linear_g:
            algorithms.insert(0, "new-constant")
    ref_checks = reference.invariant_slacks(spec)
    report = {
        "instance": spec.name,
        "budget": budget,
        "reference": {"method": reference.method, "F_star": reference.F_star,
                      "lambda_confident": reference.lambda_confident},
        "reference_checks": [
            {"name": k, "trials": 1, "violations": int(v < 0), "worst_slack": v} for k, v in ref_checks.items()
        ],
        "runs": [],
    }
    total = sum(c["violations"] for c in report["reference_checks"])
    for alg in algorithms:
        r = run(spec, alg, SolverConfig(max_iters=budget, stride=budget, diagnostics=True), reference=reference)
        rep = r.diagnostics.report()
        total += rep["total_violations"]
        report["runs"].append(rep)
    report["total_violations"] = total
    return report


def cmd_verify(a) -> int:
    spec, ref, desc = resolve_instance(a.instance, a.seed)
    reference = _lookup_reference(spec, ref, desc, compute=a.compute_reference)
    if reference is None:
        print(f"no reference solution for {a.instance}; rerun with --compute-reference", file=sys.stderr)
        return EXIT_NOREF
    algs = [a.algorithm] if a.algorithm else None
    report = verify_instance(spec, reference, a.budget, algs)
    text = json.dumps(report, indent=1, default=_jsonable)
    if a.out:
        out = _out_dir(a.out)
        (out / f"{spec.name}.verify.json").write_text(text + "\n")
    print(text)
    return EXIT_OK if report["total_violations"] == 0 else EXIT_FAILED


def cmd_gen(a) -> int:
    spec, _, _ = resolve_instance(a.instance, a.seed)
    out = _out_dir(a.out)
    path = out / f"{spec.name}.json"
    save_problem(spec, path, csv=not a.inline)
    print(path)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _common(p, instance_required=False):
    p.add_argument("--instance", required=instance_required,
                   help="name[:key=value,...] (qp1, ball1, gmv-l2, gmv-l1, lasso) or a problem JSON path")
    p.add_argument("--seed", type=int, default=None, help="override the instance seed")
    p.add_argument("--out", default=None, help="output directory (default $VQPD_OUTPUT_DIR or .)")


def _run_flags(p):
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--diagnostics", action="store_true")
    p.add_argument("--timing", action="store_true", help="record cumulative wall time in the trace")
    p.add_argument("--pd-step", type=float, default=None, help="pd-subgradient step (default: tuned)")
    p.add_argument("--lambda-max", type=float, default=None, help="pd-subgradient multiplier cap")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vqpd", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"vqpd {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run one algorithm and write a trace")
    _common(p)
    _run_flags(p)
    p.add_argument("--algorithm", choices=ALGORITHMS, default="new-constant")
    p.add_argument("--config", default=None, help="run config JSON (overrides the flags)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("compare", help="run several algorithms on one instance")
    _common(p)
    _run_flags(p)
    p.add_argument("--algorithm", dest="algorithms", action="append", choices=ALGORITHMS)
    p.add_argument("--config", dest="configs", action="append", default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("verify", help="run the invariant and bound checks")
    _common(p, instance_required=True)
    p.add_argument("--budget", type=int, default=10_000)
    p.add_argument("--algorithm", choices=ALGORITHMS, default=None)
    p.add_argument("--compute-reference", action="store_true",
                   help="compute and cache a reference when none is known")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gen", help="export an instance as a problem config")
    _common(p, instance_required=True)
    p.add_argument("--inline", action="store_true", help="embed matrices instead of writing CSV files")
    p.set_defaults(func=cmd_gen)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return a.func(a)
    except NumericalError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NAN
    except (ConfigError, ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
