"""Command-line entry point: ``ndpert {simulate,spectrum,dyson,scan,verify}``.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 solver error.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import age, dyson, spectral
from .config import ConfigError, ScenarioConfig, build_spec, load_config
from .core import TimeGrid
from .errors import NdpertError, NoRootInWindow
from .verify import run_suite

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


def _fmt(x) -> str:
    return "%.17g" % x


def write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])


def _window(text: str):
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"window must look like LO:HI, got {text!r}") from None
    if not lo < hi:
        raise argparse.ArgumentTypeError("window needs LO < HI")
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ndpert", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required,
                       help="JSON scenario file or bundled scenario name")
        p.add_argument("--out", default=".", help="output directory for CSV files")
        p.add_argument("--seed", type=int, default=None, help="override solver.seed")

    p = sub.add_parser("simulate", help="run the renewal solver and write norms and births")
    common(p)
    p.add_argument("--dump-field", action="store_true", help="also write the full (t, a) field")
    p.add_argument("--method", choices=("renewal", "upwind"), default=None, help="override solver.method")

    p = sub.add_parser("spectrum", help="characteristic roots and stability report")
    common(p)
    p.add_argument("--window", type=_window, default=(-1.0, 1.0), help="real search window LO:HI")
    p.add_argument("--mode", choices=("ess", "crit"), default="ess", help="growth-bound transfer mode")

    p = sub.add_parser("dyson", help="norms of the series terms and truncation residual")
    common(p)
    p.add_argument("--order", type=int, default=5)
    p.add_argument("--horizon", type=float, default=None)

    p = sub.add_parser("scan", help="resolvent norm scan with fitted decay exponent")
    common(p)
    p.add_argument("--mode", choices=("imaginary", "sector", "region", "real"), default="imaginary")
    p.add_argument("--window", type=_window, default=(10.0, 1000.0), help="scan parameter range LO:HI")
    p.add_argument("--samples", type=int, default=64)
    p.add_argument("--theta", type=float, default=math.pi / 3, help="sector angle (radians)")
    p.add_argument("--beta", type=float, default=1.0, help="region log coefficient")
    p.add_argument("--shift", type=float, default=0.0, help="real part for the imaginary path / region offset")

    p = sub.add_parser("verify", help="run the invariant suite (TAP output)")
    common(p, config_required=False)
    p.add_argument("--break-cocycle", action="store_true", help="inject a propagator fault (testing only)")
    return ap


# --------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: ScenarioConfig, args) -> int:
    spec = build_spec(cfg)
    method = args.method or cfg.solver.method
    res = age.solve_renewal(spec) if method == "renewal" else age.upwind_oracle(spec)
    out = Path(args.out)
    d = spec.dim
    header = ["t", "norm_lp"] + [f"b{i}" for i in range(d)]
    rows = ([t, n, *b] for t, n, b in zip(res.times, res.norms, res.births.values))
    write_csv(out / cfg.outputs.csv, header, rows)
    if args.dump_field or cfg.outputs.dump_field:
        hdr = ["t", "a"] + [f"u{i}" for i in range(d)]
        rows = ([t, a, *res.field[n, k]] for n, t in enumerate(res.times) for k, a in enumerate(res.ages))
        write_csv(out / cfg.outputs.field_csv, hdr, rows)
    print(f"simulate: {method}, {res.times.size} time steps, final norm {_fmt(res.norms[-1])}")
    return EXIT_OK


def cmd_spectrum(cfg: ScenarioConfig, args) -> int:
    spec = build_spec(cfg)
    out = Path(args.out)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            report = age.stability_report(spec, args.window, args.mode)
    except NoRootInWindow as exc:
        write_csv(out / "roots.csv", ["index", "lambda"], [])
        print(f"no roots: {exc}")
        return EXIT_OK
    write_csv(out / "roots.csv", ["index", "lambda"], ([str(i), r] for i, r in enumerate(report.lotka_roots)))
    print(report.render())
    return EXIT_OK


def _dyson_setup(cfg: ScenarioConfig, horizon):
    if cfg.classical is not None:
        A = np.asarray(cfg.classical.generator, dtype=float)
        L = np.asarray(cfg.classical.perturbation if cfg.classical.perturbation is not None else np.zeros_like(A),
                       dtype=float)
        kernel = dyson.ClassicalKernel.from_generator(A)
        dt = cfg.grid.dt
    else:
        spec = build_spec(cfg)
        kernel = dyson.AgeModelKernel(spec.family, spec.p)
        L = spec.boundary_operator()
        dt = spec.da
    T = cfg.grid.t_end if horizon is None else horizon
    n = max(1, round(T / dt))
    return kernel, L, TimeGrid(n * dt, dt)


def cmd_dyson(cfg: ScenarioConfig, args) -> int:
    if args.order < 0:
        raise ConfigError("--order must be nonnegative")
    kernel, L, grid = _dyson_setup(cfg, args.horizon)
    seed = cfg.solver.seed if args.seed is None else args.seed
    terms = dyson.dyson_terms(kernel, L, args.order, grid)
    W = dyson.perturbed_semigroup_details(kernel, L, grid, cfg.solver.tol, probes=cfg.solver.probes,
                                          seed=seed).samples
    partial = np.zeros_like(W)
    per_t = []
    sup_rows = []
    for term in terms:
        partial += term.samples
        norms = kernel.map_norm(term.samples)
        resid = kernel.map_norm(W - partial)
        per_t.append(norms)
        sup_rows.append([str(term.index), float(norms.max()), float(resid.max())])
    out = Path(args.out)
    header = ["t"] + [f"norm_S{n}" for n in range(args.order + 1)] + ["residual"]
    rows = ([t, *(col[k] for col in per_t), resid[k]] for k, t in enumerate(grid.nodes))
    write_csv(out / "dyson.csv", header, rows)
    write_csv(out / "dyson_orders.csv", ["n", "sup_norm", "sup_residual"], sup_rows)
    sups = [r[1] for r in sup_rows[1:]]
    ratio = dyson.fitted_ratio(sups) if len(sups) >= 2 else float("nan")
    print(f"dyson: {args.order + 1} terms on [0, {_fmt(grid.t_end)}], fitted term ratio {_fmt(ratio)}")
    return EXIT_OK


def cmd_scan(cfg: ScenarioConfig, args) -> int:
    if cfg.classical is not None:
        A = np.asarray(cfg.classical.generator, dtype=float)
        if cfg.classical.perturbation is not None:
            A = A + np.asarray(cfg.classical.perturbation, dtype=float)
        R = spectral.matrix_resolvent(A)
    else:
        if args.mode != "real":
            raise ConfigError("the age-model scan uses the real axis; pass --mode real")
        spec = build_spec(cfg)
        U = spec.family
        R = lambda lam: age.ambient_resolvent_norm(U, lam.real, spec.p).value  # noqa: E731
    path = spectral.ScanPath(args.mode, shift=args.shift, theta=args.theta, beta=args.beta, c=args.shift)
    scan = spectral.resolvent_decay_scan(R, path, args.window, args.samples)
    rows = ([lam.real, lam.imag, v] for lam, v in scan.samples)
    write_csv(Path(args.out) / "scan.csv", ["lambda_re", "lambda_im", "norm"], rows)
    lo, hi = scan.beta_band
    print(f"beta_hat {_fmt(scan.beta_hat)} band [{_fmt(lo)}, {_fmt(hi)}] classification {scan.classification}")
    return EXIT_OK


def cmd_verify(cfg, args) -> int:
    seed = args.seed if args.seed is not None else (cfg.solver.seed if cfg is not None else 0)
    results = run_suite(seed=seed, break_cocycle=args.break_cocycle, emit=print)
    failed = [r.name for r in results if not r.ok]
    if failed:
        print("# failed: " + "; ".join(failed))
        return EXIT_VERIFY
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "spectrum": cmd_spectrum, "dyson": cmd_dyson, "scan": cmd_scan,
            "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config) if args.config else None
        if cfg is not None and args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NdpertError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
