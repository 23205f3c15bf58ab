"""``alo-enet`` command-line interface.

Exit status is 0 on success, 1 for rejected input (including usage errors)
and 2 for numerical failures. Results go to standard output or files;
warnings and errors go to standard error.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

from .data import SyntheticSpec, _read_numeric_csv, load_csv, make_synthetic
from .diagnostics import DiagnosticsConfig, active_set_diagnostics
from .errors import InputError, NumericError
from .experiments import EXPERIMENTS, FULL_P_GRID, ExperimentConfig, default_config, run
from .families import KINDS, GlmFamily
from .risk import PHI_TAGS, alo, default_workers, lo_exact
from .solver import DEFAULT_TOL, Penalty, fit
from .theory import solve_fixed_point, theory_input_for


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _read_config(path):
    if path is None:
        return None
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    return text


def _data_args(p):
    g = p.add_argument_group("data")
    g.add_argument("--x", help="design matrix CSV")
    g.add_argument("--y", help="response CSV (one column)")
    g.add_argument("--header", action="store_true", help="skip one header line in each CSV")
    g.add_argument("--family", choices=KINDS, default=None)
    g.add_argument("--noise-sd", type=float, default=None)
    g.add_argument("--spec", help="SyntheticSpec JSON file to draw a dataset from")
    g.add_argument("--lambda", dest="lam", type=float, default=None)
    g.add_argument("--eta", type=float, default=None)
    g.add_argument("--tol", type=float, default=None)
    g.add_argument("--phi", choices=PHI_TAGS, default=None)


def _common(p):
    p.add_argument("--config", help="JSON config (ExperimentConfig field names)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None,
                   help="worker threads (default: $ALO_ENET_WORKERS or 1)")
    p.add_argument("--out", default=None, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="alo-enet", description="Leave-one-out risk for elastic-net GLMs.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in [("fit", "fit and print the FitResult JSON"),
                        ("lo", "exact leave-one-out risk"),
                        ("alo", "approximate leave-one-out risk"),
                        ("diagnose", "active-set diagnostics across leave-one-out refits"),
                        ("theory", "solve the scalar fixed point for a synthetic spec")]:
        p = sub.add_parser(name, help=help_)
        _common(p)
        _data_args(p)
        if name == "diagnose":
            p.add_argument("--kappa0", type=float, default=None)
            p.add_argument("--kappa1", type=float, default=None)
            p.add_argument("--kappa-c", type=float, default=1.0)
        if name == "theory":
            p.add_argument("--beta-star", help="CSV column of true coefficients")
            p.add_argument("--n", type=int, default=None, help="sample size for --beta-star")
    p = sub.add_parser("experiment", help="run an experiment and write CSV/JSON")
    p.add_argument("name", choices=EXPERIMENTS)
    _common(p)
    p.add_argument("--full", action="store_true", help="use the large p grid (1000 to 10000)")
    p.add_argument("--replicates", type=int, default=None)
    return parser


def _resolve_single(args):
    """Build ``(dataset, beta_star_or_None, penalty, tol, phi, workers)`` for single-run commands."""
    cfg = None
    text = _read_config(args.config)
    if text is not None:
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InputError(f"config is not valid JSON: {exc}") from None
        d.setdefault("experiment", "alo-vs-lo")
        cfg = ExperimentConfig.from_dict(d)
    fam_kw = {}
    if args.family is not None:
        fam_kw["kind"] = args.family
    if args.noise_sd is not None:
        fam_kw["noise_sd"] = args.noise_sd

    beta_star = None
    if args.x is not None or args.y is not None:
        if args.x is None or args.y is None:
            raise InputError("--x and --y must be given together")
        ds = load_csv(args.x, args.y, GlmFamily(**fam_kw), args.header)
    else:
        if args.spec is not None:
            spec_text = _read_config(args.spec)
            try:
                spec = SyntheticSpec.from_dict(json.loads(spec_text))
            except json.JSONDecodeError as exc:
                raise InputError(f"spec is not valid JSON: {exc}") from None
        elif cfg is not None and isinstance(cfg.spec, SyntheticSpec):
            spec = cfg.spec
        elif cfg is not None:
            fam = cfg.spec.get("family", {})
            fam = GlmFamily(**{**({"kind": fam} if isinstance(fam, str) else fam), **fam_kw})
            ds = load_csv(cfg.spec["x"], cfg.spec["y"], fam, bool(cfg.spec.get("header", False)))
            spec = None
        else:
            raise InputError("no data: give --x/--y, --spec or --config")
        if spec is not None:
            if fam_kw:
                spec = spec.replace(family=GlmFamily(**{**spec.family.to_dict(), **fam_kw}))
            if args.seed is not None:
                spec = spec.replace(seed=args.seed)
            ds, beta_star = make_synthetic(spec)
    pen = cfg.penalty if cfg is not None else None
    if args.lam is not None or args.eta is not None:
        lam = args.lam if args.lam is not None else (pen.lam if pen else None)
        eta = args.eta if args.eta is not None else (pen.eta if pen else None)
        if lam is None or eta is None:
            raise InputError("both --lambda and --eta are required")
        pen = Penalty(lam, eta)
    if pen is None:
        raise InputError("no penalty: give --lambda and --eta")
    tol = args.tol if args.tol is not None else (cfg.tol if cfg else DEFAULT_TOL)
    phi = args.phi if args.phi is not None else (cfg.phi if cfg else None)
    workers = args.workers if args.workers is not None else \
        (cfg.workers if cfg is not None and args.config else default_workers())
    return ds, beta_star, pen, tol, phi, workers


def _emit(obj, out):
    text = json.dumps(obj, indent=2)
    if out is None:
        sys.stdout.write(text + "\n")
    else:
        path = Path(out)
        if path.suffix != ".json":
            path.mkdir(parents=True, exist_ok=True)
            path = path / "result.json"
        else:
            path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text + "\n")


def _cmd_single(args):
    if args.command == "theory" and args.beta_star is not None:
        return _cmd_theory_file(args)
    ds, beta_star, pen, tol, phi, workers = _resolve_single(args)
    if args.command == "fit":
        _emit(fit(ds, pen, tol).to_dict(), args.out)
    elif args.command == "alo":
        res = fit(ds, pen, tol)
        _emit(alo(res, ds, pen, phi).to_dict(), args.out)
    elif args.command == "lo":
        rep, _ = lo_exact(ds, pen, phi, tol, workers)
        _emit(rep.to_dict(), args.out)
    elif args.command == "diagnose":
        res = fit(ds, pen, tol)
        _, fits = lo_exact(ds, pen, phi, tol, workers, res)
        if args.kappa0 is not None or args.kappa1 is not None:
            base = DiagnosticsConfig.default(ds.p, args.kappa_c)
            cfg = DiagnosticsConfig(args.kappa0 if args.kappa0 is not None else base.kappa0,
                                    args.kappa1 if args.kappa1 is not None else base.kappa1)
        else:
            cfg = DiagnosticsConfig.default(ds.p, args.kappa_c)
        diag = active_set_diagnostics(res, fits, ds, pen, cfg)
        _emit({"config": cfg.to_dict(), **diag.to_dict()}, args.out)
    elif args.command == "theory":
        if beta_star is None:
            raise InputError("theory needs a synthetic spec or --beta-star")
        if ds.family.kind != "gaussian":
            raise InputError("theory is only defined for the gaussian family")
        inp, _ = theory_input_for(beta_star, pen, ds.n, ds.family.noise_sd)
        _emit(solve_fixed_point(inp).to_dict(), args.out)
    return 0


def _cmd_theory_file(args):
    beta = _read_numeric_csv(args.beta_star, args.header)
    if beta.shape[1] != 1:
        raise InputError("--beta-star must be a single column")
    if args.n is None or args.lam is None or args.eta is None:
        raise InputError("--beta-star needs --n, --lambda and --eta")
    sd = args.noise_sd if args.noise_sd is not None else 1.0
    inp, _ = theory_input_for(beta[:, 0], Penalty(args.lam, args.eta), args.n, sd)
    _emit(solve_fixed_point(inp).to_dict(), args.out)
    return 0


def _cmd_experiment(args):
    text = _read_config(args.config)
    if text is None:
        cfg = default_config(args.name, full=args.full)
    else:
        d = json.loads(text) if text.strip() else {}
        if not isinstance(d, dict):
            raise InputError("config must be a JSON object")
        if d.setdefault("experiment", args.name) != args.name:
            raise InputError(f"config is for {d['experiment']!r}, not {args.name!r}")
        cfg = ExperimentConfig.from_dict(d)
        if args.full:
            cfg = cfg.replace(p_grid=list(FULL_P_GRID))
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.workers is not None:
        changes["workers"] = args.workers
    elif text is None:
        changes["workers"] = default_workers()
    if args.out is not None:
        changes["out_dir"] = args.out
    if args.replicates is not None:
        changes["replicates"] = args.replicates
    if changes:
        cfg = cfg.replace(**changes)
    run(cfg)
    sys.stdout.write(f"{cfg.experiment}: results in {cfg.out_dir}\n")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 1
    warnings.simplefilter("default")
    try:
        if args.command == "experiment":
            return _cmd_experiment(args)
        return _cmd_single(args)
    except InputError as exc:
        print(f"alo-enet: input error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"alo-enet: numeric error: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(f"alo-enet: input error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
