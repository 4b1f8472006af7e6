"""
Command-line entry point.

    sfwot run CONFIG [--out DIR] [--set key=value ...]
    sfwot sweep CONFIG --alphas a1,a2,... [--out DIR]
    sfwot verify [--seed N] [--out DIR]

``run`` exits 0 when the outer loop meets its tolerance, 2 when it stops
at the iteration cap and 1 on any error. ``verify`` exits 0 when every
check passes and 3 otherwise.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .flow import (
    SfwConfig,
    SfwDivergence,
    collapse_deviation,
    default_initial,
    estimate_v_star,
    log_gap,
    reference_run,
    run,
)
from .inner import InnerSettings
from .kernel import InfeasibleError
from .oracles import fixed_point_residual
from .uav import build_scenario

EXIT_OK, EXIT_ERROR, EXIT_CAP, EXIT_VERIFY = 0, 1, 2, 3

log = logging.getLogger("sfwot")


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=False)
        fh.write("\n")


def _feasibility(P, mu, nu):
    rows = P.probs.sum(axis=1) - mu.weights
    cols = P.probs.sum(axis=0) - nu.weights
    return {
        "row_sup": float(np.abs(rows).max()),
        "col_sup": float(np.abs(cols).max()),
        "row_l1": float(np.abs(rows).sum()),
        "col_l1": float(np.abs(cols).sum()),
    }


def _solve(cfg: RunConfig, sfw: SfwConfig, scenario=None):
    sc = build_scenario(cfg.scenario) if scenario is None else scenario
    P0 = default_initial(sc.kernel)
    final, trace = run(P0, sc.kernel, sc.model, sfw)
    return sc, P0, final, trace


def _summary(sc, final, trace, sfw: SfwConfig, v_ref, v_ref_source):
    inner = sfw.inner
    fp = fixed_point_residual(final, sc.kernel, sc.model, inner.tol, inner.max_iters, inner.schedule)
    V = trace.V_solver[-1]
    return {
        "converged": trace.converged,
        "stop_reason": trace.stop_reason,
        "outer_steps": len(trace) - 1,
        "final_t": trace.t[-1],
        "alpha_halved": trace.alpha_halved,
        "V_solver": V,
        "V_physical": trace.V_physical[-1],
        "F": trace.F[-1],
        "v_ref": v_ref,
        "v_ref_source": v_ref_source,
        "gap_estimate": V - v_ref,
        "fixed_point_residual": fp,
        "feasibility": _feasibility(final, sc.mu, sc.nu),
        "max_marginal_error_l1": trace.max_marginal_error,
        "max_cell_load": float(sc.model.loads(final).max()) if sc.model.spec.occupancy.nnz else 0.0,
        "inner_iterations_total": int(sum(trace.inner_iters)),
    }


def _run_one(cfg: RunConfig, out: Path, sfw: SfwConfig, v_ref=None, scenario=None):
    """Solve, write ``trace.csv`` and ``summary.json`` to ``out``; return ``(summary, trace)``."""
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    sc, _, final, trace = _solve(cfg, sfw, scenario)
    if v_ref is None:
        v_ref, source = estimate_v_star(trace), "trace_extrapolation"
    else:
        source = "reference_run"
    trace = trace.with_reference(v_ref)
    trace.write_csv(out / "trace.csv")
    summary = _summary(sc, final, trace, sfw, v_ref, source)
    summary["alpha"] = sfw.alpha
    summary["seconds"] = time.perf_counter() - t0
    _write_json(out / "summary.json", summary)
    return summary, trace


def _manifest(out: Path, cfg: RunConfig, started, outputs, summary, command):
    (out / "config_echo.cfg").write_text(cfg.echo())
    files = {k: str(v) for k, v in outputs.items()}
    files["config_echo"] = str(out / "config_echo.cfg")
    _write_json(out / "manifest.json", {
        "command": command,
        "solver_version": __version__,
        "started": started,
        "finished": _now(),
        "config": cfg.raw,
        "outputs": files,
        "summary": summary,
    })


def cmd_run(config_path, output_dir="out", overrides=()) -> int:
    started = _now()
    try:
        cfg = load_config(config_path, overrides)
        out = Path(output_dir)
        summary, _ = _run_one(cfg, out, cfg.sfw)
        _manifest(out, cfg, started, {"trace": out / "trace.csv", "summary": out / "summary.json"}, summary, "run")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (InfeasibleError, SfwDivergence, FloatingPointError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(
        f"{summary['stop_reason']} after {summary['outer_steps']} outer steps: "
        f"V_physical={summary['V_physical']:.10g} fixed-point residual={summary['fixed_point_residual']:.3g}"
    )
    return EXIT_OK if summary["converged"] else EXIT_CAP


def parse_alphas(text):
    try:
        alphas = [float(a) for a in text.split(",") if a.strip()]
    except ValueError:
        raise ConfigError(f"--alphas {text!r}: not a comma-separated list of numbers") from None
    if not alphas:
        raise ConfigError("--alphas: at least one value is required")
    for a in alphas:
        if not 0 < a <= 1:
            raise ConfigError(f"--alphas: {a} must lie in (0, 1]")
    if len(set(alphas)) != len(alphas):
        raise ConfigError("--alphas: values must be distinct")
    return alphas


def _write_collapse(path, traces):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("alpha", "outer_iter", "t", "gap", "log_gap_ratio"))
        for a in sorted(traces):
            tr = traces[a]
            for s, t, g, lg in zip(tr.outer_iter, tr.t, tr.gap, log_gap(tr)):
                w.writerow((repr(a), s, f"{t:.17g}", f"{g:.17g}", f"{lg:.17g}"))


def cmd_sweep(config_path, alphas_text, output_dir="out") -> int:
    """Fixed-horizon runs for several step sizes against a shared reference energy.

    Each run takes ``ceil(sweep_horizon / alpha)`` outer steps with the
    outer tolerance disabled, so the curves cover the same time interval.
    """
    started = _now()
    try:
        alphas = parse_alphas(alphas_text)
        cfg = load_config(config_path)
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        sc = build_scenario(cfg.scenario)
        v_star, _, _ = reference_run(
            default_initial(sc.kernel), sc.kernel, sc.model,
            alpha=cfg.reference_alpha, max_outer=cfg.reference_max_outer, inner_tol=cfg.reference_inner_tol,
        )
        traces, summaries, outputs = {}, {}, {}
        for a in alphas:
            steps = max(1, math.ceil(cfg.sweep_horizon / a - 1e-9))
            sfw = replace(cfg.sfw, alpha=a, max_outer=steps, outer_tol=0.0)
            sub = out / f"alpha_{a:g}"
            summaries[a], traces[a] = _run_one(cfg, sub, sfw, v_ref=v_star, scenario=sc)
            outputs[f"trace_alpha_{a:g}"] = sub / "trace.csv"
            outputs[f"summary_alpha_{a:g}"] = sub / "summary.json"
        _write_collapse(out / "collapse.csv", traces)
        worst, pairs = collapse_deviation(traces)
        report = {
            "v_star": v_star,
            "alphas": alphas,
            "warmup_steps": 5,
            "max_pairwise_deviation": worst,
            "pairs": {f"{a:g}/{b:g}": d for (a, b), d in pairs.items()},
        }
        _write_json(out / "collapse_report.json", report)
        outputs["collapse"] = out / "collapse.csv"
        outputs["collapse_report"] = out / "collapse_report.json"
        _manifest(out, cfg, started, outputs, {"collapse": report, "runs": {f"{a:g}": summaries[a] for a in alphas}}, "sweep")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (InfeasibleError, SfwDivergence, FloatingPointError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"V_* = {v_star:.12g}; max pairwise log-gap deviation {worst:.3%}")
    return EXIT_OK


def cmd_verify(seed=0, output_dir="out", corrupt=None) -> int:
    from .verify import run_checks

    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = _now()
    results = run_checks(seed, corrupt=corrupt)
    table = {
        "seed": seed,
        "started": started,
        "finished": _now(),
        "passed": all(r.passed for r in results),
        "checks": [{"name": r.name, "passed": r.passed, "seconds": r.seconds, "detail": r.detail} for r in results],
    }
    _write_json(out / "verify.json", table)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}  ({r.seconds:.1f}s)")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"failed checks: {', '.join(failed)}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="sfwot", description="Sinkhorn-Frank-Wolfe experiments")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="solve one scenario")
    r.add_argument("config")
    r.add_argument("--out", default="out")
    r.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")

    s = sub.add_parser("sweep", help="fixed-horizon runs over several step sizes")
    s.add_argument("config")
    s.add_argument("--alphas", required=True)
    s.add_argument("--out", default="out")

    v = sub.add_parser("verify", help="run the self-check suite")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", default="out")
    v.add_argument("--corrupt", choices=["tilting_sign"], default=None, help=argparse.SUPPRESS)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "run":
        return cmd_run(args.config, args.out, args.overrides)
    if args.command == "sweep":
        return cmd_sweep(args.config, args.alphas, args.out)
    return cmd_verify(args.seed, args.out, args.corrupt)


if __name__ == "__main__":
    sys.exit(main())
