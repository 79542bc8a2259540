"""Command-line entry point: ``ganqp {verify,estimate,train,sweep-lambda}``.

Exit codes: 0 success, 1 failed check or aborted run, 2 usage/config error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as cfgio
from . import oracle
from .harness import data as toy
from .harness.estimation import ESTIMATORS, EstimateConfig, evaluate_neural_divergence, exact_value
from .harness.training import TrainConfig, TrainingAborted, train, write_samples
from .nets import MLP, save_mlp
from .rng import stream
from .verify import SUITES, format_table, run_suite

log = logging.getLogger("ganqp")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
VANISHING_THRESHOLD = 1e-3
SWEEP_HEADER = ("lambda", "best_frechet2d", "final_mode_coverage", "mean_lipschitz_ratio",
                "exact_qp_div", "exact_ratio", "expected_ratio", "scaling_error")


class UsageError(Exception):
    pass


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, float) else v) for v in r])


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- verify ---------------------------------------------------------------

def cmd_verify(args) -> int:
    suite = args.suite_flag or args.suite
    if suite is None:
        raise UsageError("verify needs a suite: " + ", ".join(SUITES))
    if suite not in SUITES:
        raise UsageError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    kwargs = {"seed": args.seed if args.seed is not None else 0}
    if args.trials is not None:
        if args.trials < 1:
            raise UsageError("--trials must be >= 1")
        kwargs["trials" if suite != "gradcheck" else "points"] = args.trials
    if args.negative_control:
        if suite != "axioms":
            raise UsageError("--negative-control applies to the axioms suite only")
        kwargs["negative_control"] = True
    out = _out_dir(args.out) if args.out else None
    if suite == "conjecture":
        kwargs["out_dir"] = out or Path(".")
    checks = run_suite(suite, **kwargs)
    print(format_table(checks))
    if out is not None:
        _write_csv(out / f"verify_{suite}.csv", ("check", "status", "detail"),
                   [(c.name, "pass" if c.passed else ("fail" if c.mandatory else "note"), c.detail)
                    for c in checks])
    if suite == "conjecture":
        where = kwargs["out_dir"] / "conjecture_findings.txt"
        print(f"findings written to {where} (report only)")
        return EXIT_OK
    failed = [c for c in checks if c.mandatory and not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return EXIT_FAIL if failed else EXIT_OK


# -- estimate -------------------------------------------------------------

def cmd_estimate(args) -> int:
    values = cfgio.read_config(args.config, raw_keys=("p", "q")) if args.config else {}
    p_spec = args.p or values.pop("p", None)
    q_spec = args.q or values.pop("q", None)
    kind = args.objective or values.pop("objective", None) or "qp"
    for key in ("p", "q", "objective"):
        values.pop(key, None)
    if not p_spec or not q_spec:
        raise UsageError("estimate needs --p and --q distribution specs")
    if kind not in ESTIMATORS:
        raise UsageError(f"objective must be one of {', '.join(ESTIMATORS)}")
    p, q = cfgio.parse_distribution(str(p_spec)), cfgio.parse_distribution(str(q_spec))
    if p.dimension != q.dimension:
        raise UsageError("p and q differ in dimension")
    est_cfg = cfgio.build(EstimateConfig, values, seed=args.seed)

    est = evaluate_neural_divergence(kind, p, q, est_cfg)
    exact = exact_value(kind, p, q, est_cfg)
    rel = None
    if exact is not None and exact != 0:
        rel = abs(est.value - exact) / abs(exact)
    print(f"estimate       {est.value:.6f}")
    print(f"oracle         {'n/a' if exact is None else f'{exact:.6f}'}")
    print(f"relative_error {'n/a' if rel is None else f'{rel:.4%}'}")
    if not est.converged:
        print(f"warning: not converged after {est.steps} steps; the estimate is flagged")

    out = _out_dir(args.out)
    _write_csv(out / "estimate.csv",
               ("objective", "p", "q", "estimate", "oracle", "relative_error", "converged", "steps"),
               [(kind, cfgio.format_distribution(p), cfgio.format_distribution(q), est.value, exact, rel,
                 "true" if est.converged else "false", est.steps)])
    header = "\n".join([f"objective = {kind}", f"p = {cfgio.format_distribution(p)}",
                        f"q = {cfgio.format_distribution(q)}"])
    (out / "resolved_config.txt").write_text(header + "\n" + cfgio.dump(est_cfg), encoding="utf-8", newline="\n")
    return EXIT_OK


# -- train ----------------------------------------------------------------

def _load_train_config(args, **overrides) -> TrainConfig:
    if not args.config:
        raise UsageError("--config is required")
    values = cfgio.read_config(args.config)
    return cfgio.build(TrainConfig, values, seed=args.seed, **overrides)


def vanishing_detected(history, total_steps: int) -> bool:
    """Generator-gradient norm below threshold at every evaluation in the last quarter."""
    tail = [g for row, g in zip(history.rows, history.gen_grad_norms)
            if row.step > 0 and row.step >= 0.75 * total_steps]
    return bool(tail) and all(g < VANISHING_THRESHOLD for g in tail)


def _save_models(out: Path, result) -> None:
    save_mlp(out / "critic.qpm", result.critic)
    if isinstance(result.generator, MLP):
        save_mlp(out / "generator.qpm", result.generator)
    else:
        write_samples(out / "generator_position.csv", result.generator.position.data)
    if result.encoder is not None:
        save_mlp(out / "encoder.qpm", result.encoder)


def run_training(config: TrainConfig, out: Path, verbose: bool = False) -> dict:
    """Train, write every artifact into ``out`` and return a summary dict."""
    out.mkdir(parents=True, exist_ok=True)
    resolved = config.resolved()
    cfgio.write_resolved(out / "resolved_config.txt", resolved)
    callback = (lambda row: log.info("step %d critic_loss %.5f frechet2d %.4f coverage %.3f",
                                     row.step, row.critic_loss, row.frechet2d, row.mode_coverage)) if verbose else None
    try:
        result = train(config, callback=callback)
    except TrainingAborted as exc:
        exc.history.to_csv(out / "history.csv")
        return {"aborted": True, "step": exc.step, "phase": exc.phase, "message": str(exc)}
    hist = result.history
    hist.to_csv(out / "history.csv")
    n = resolved.eval_samples
    dist = resolved.distribution()
    write_samples(out / "samples_fake.csv", result.sample(n))
    write_samples(out / "samples_real.csv", toy.sample(dist, n, stream(resolved.seed, "dump")))
    _save_models(out, result)
    fid = hist.column("frechet2d")
    ratio = hist.column("lipschitz_ratio_mean")
    return {
        "aborted": False,
        "best_frechet2d": float(fid.min()),
        "final_mode_coverage": float(hist.rows[-1].mode_coverage),
        "mean_lipschitz_ratio": float(ratio[1:].mean()) if len(ratio) > 1 else float(ratio[0]),
        "vanishing": vanishing_detected(hist, resolved.total_gen_steps),
        "rows": len(hist),
    }


def _report_training(summary: dict) -> int:
    if summary["aborted"]:
        print(f"run aborted: {summary['message']}", file=sys.stderr)
        print(f"offending generator step {summary['step']} during {summary['phase']}", file=sys.stderr)
        return EXIT_FAIL
    print(f"best frechet2d       {summary['best_frechet2d']:.5f}")
    print(f"final mode coverage  {summary['final_mode_coverage']:.3f}")
    print(f"history rows         {summary['rows']}")
    if summary["vanishing"]:
        print("gradient-vanishing detected")
    return EXIT_OK


def cmd_train(args) -> int:
    config = _load_train_config(args)
    return _report_training(run_training(config, _out_dir(args.out), args.verbose))


# -- sweep-lambda ---------------------------------------------------------

def _parse_lambdas(text) -> list[float]:
    if text is None:
        raise UsageError("sweep-lambda needs --lambdas")
    try:
        grid = [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(f"bad lambda grid {text!r}") from exc
    if not grid:
        raise UsageError("lambda grid is empty")
    if any(not (lam > 0 and math.isfinite(lam)) for lam in grid):
        raise UsageError("every lambda must be positive and finite")
    return grid


def _sweep_one(args_tuple):
    config, out, verbose = args_tuple
    return run_training(config, out, verbose)


def _lambda_dir(lam: float) -> str:
    return f"lambda_{lam:g}"


def scaling_rows(config: TrainConfig, grid) -> dict:
    """Exact QP-div between the data law and the uniform law on its support, per lambda."""
    dist = config.distribution()
    if not dist.is_discrete or dist.centers.shape[0] < 2:
        return {}
    p = dist.probs
    q = np.full(len(p), 1.0 / len(p))
    d = oracle.distance_table(dist.centers, config.distance)
    base = oracle.qp_div_exact(p, q, d, 1.0)
    rows = {}
    for lam in grid:
        value = oracle.qp_div_exact(p, q, d, lam)
        ratio = value / base if base > 0 else float("nan")
        rows[lam] = (value, ratio, lam, abs(ratio - lam) if base > 0 else float("nan"))
    return rows


def cmd_sweep_lambda(args) -> int:
    grid = _parse_lambdas(args.lambdas)
    base = _load_train_config(args)
    if base.objective != "gan_qp":
        raise UsageError("sweep-lambda runs gan_qp; set objective = gan_qp or leave it unset")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    out = _out_dir(args.out)
    configs = [dataclasses.replace(base, lam=float(lam)) for lam in grid]
    jobs = [(c, out / _lambda_dir(lam), args.verbose) for c, lam in zip(configs, grid)]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            summaries = list(pool.map(_sweep_one, jobs))
    else:
        summaries = [_sweep_one(j) for j in jobs]

    scaling = scaling_rows(base, grid)
    rows, status = [], EXIT_OK
    for lam, s in zip(grid, summaries):
        if s["aborted"]:
            print(f"lambda={lam:g}: run aborted ({s['message']})", file=sys.stderr)
            status = EXIT_FAIL
            metrics = (None, None, None)
        else:
            metrics = (s["best_frechet2d"], s["final_mode_coverage"], s["mean_lipschitz_ratio"])
        exact = scaling.get(lam, (None, None, None, None))
        rows.append((lam, *metrics, *exact))
    _write_csv(out / "sweep.csv", SWEEP_HEADER, rows)

    fids = [r[1] for r in rows if r[1] is not None]
    for r in rows:
        line = f"lambda={r[0]:g}"
        if r[1] is not None:
            line += f" best_frechet2d={r[1]:.5f} coverage={r[2]:.3f} lipschitz_ratio={r[3]:.3f}"
        if r[5] is not None:
            line += f" exact_ratio={r[5]:.15g}"
        print(line)
    if fids:
        print(f"best_frechet2d spread {max(fids) - min(fids):.5f} (report only)")
    if scaling:
        worst = max(v[3] for v in scaling.values())
        ok = worst < 1e-12
        print(f"exact scaling check: max |ratio - lambda| = {worst:.2e} {'pass' if ok else 'FAIL'}")
        if not ok:
            status = EXIT_FAIL
    return status


# -- argument parsing -----------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ganqp", description="Quadratic-potential GAN toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        p.add_argument("--config", metavar="PATH", required=config_required, help="key=value config file")
        p.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")
        p.add_argument("--seed", type=int, metavar="N", default=None, help="override the config seed")
        p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("suite", nargs="?", choices=sorted(SUITES), help="suite name")
    v.add_argument("--suite", dest="suite_flag", metavar="NAME", help="suite name (alternative spelling)")
    v.add_argument("--out", metavar="DIR", default=None, help="write the check table (and findings) here")
    v.add_argument("--seed", type=int, metavar="N", default=None)
    v.add_argument("--trials", type=int, metavar="N", default=None, help="instances per check")
    v.add_argument("--negative-control", action="store_true",
                   help="fuzz a deliberately broken evaluator instead (must fail)")
    v.set_defaults(func=cmd_verify)

    e = sub.add_parser("estimate", help="estimate a divergence with a trained critic")
    common(e)
    e.add_argument("--p", metavar="SPEC", help="e.g. dirac:0, gaussian:0,0, discrete:0,0@0.5;1,1@0.5")
    e.add_argument("--q", metavar="SPEC")
    e.add_argument("--objective", choices=ESTIMATORS, default=None)
    e.set_defaults(func=cmd_estimate)

    t = sub.add_parser("train", help="train a generator")
    common(t, config_required=True)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep-lambda", help="train gan_qp over a lambda grid")
    common(s, config_required=True)
    s.add_argument("--lambdas", metavar="L1,L2,...", help="comma-separated lambda grid")
    s.add_argument("--jobs", type=int, metavar="N", default=1, help="concurrent runs")
    s.set_defaults(func=cmd_sweep_lambda)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    if not hasattr(args, "verbose"):
        args.verbose = False
    try:
        return args.func(args)
    except (UsageError, cfgio.ConfigError) as exc:
        print(f"ganqp {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
