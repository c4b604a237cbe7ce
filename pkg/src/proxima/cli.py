"""Command line front end: ``proxima generate|calibrate|validate``."""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .config import RunConfig
from .data import read_fitting_csv, read_validation_csv, write_fitting_csv, write_validation_csv
from .engine import METHODS, MODES, EngineConfig, calibrate
from .errors import PreconditionError, ProximaError
from .modelio import read_model, write_model
from .sobol import sobol_points
from .validation import compute_figures, report

log = logging.getLogger("proxima")

DEFAULT_VALIDATION = "v:51:1000:1.0"


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------

def _synthetic_spec(cfg: RunConfig):
    from .synthetic import default_spec

    D = cfg.get_int("synthetic.dimension", 5)
    if not 1 <= D <= 21:
        raise PreconditionError(f"synthetic.dimension must be in 1..21, got {D}")
    seed = cfg.get_int("seed", 0)
    over = {}
    if "synthetic.terms" in cfg:
        over["terms"] = tuple(cfg.get_terms("synthetic.terms", D))
        over["beta"] = tuple(cfg.get_floats("synthetic.coefficients", []))
    for key, name in (("synthetic.asymmetry", "asymmetry"), ("synthetic.driver_scale", "driver_scale"),
                      ("synthetic.asset_level", "asset_level"), ("synthetic.asset_slope", "asset_slope")):
        if key in cfg:
            over[name] = cfg.get_float(key)
    if "synthetic.ell" in cfg:
        over["ell"] = tuple(cfg.get_floats("synthetic.ell"))
    if "synthetic.noise" in cfg:
        over["gamma"] = tuple(cfg.get_floats("synthetic.noise"))
    return default_spec(D, seed, **over)


def _validation_plan(text):
    """``label:n:inner_sims[:scale]`` entries, comma separated."""
    plan = []
    for item in text.split(","):
        parts = [p.strip() for p in item.split(":")]
        if not parts[0]:
            continue
        if len(parts) not in (3, 4):
            raise PreconditionError(f"validation set must be label:n:inner_sims[:scale], got {item.strip()!r}")
        scale = float(parts[3]) if len(parts) == 4 else 1.0
        plan.append((parts[0], int(parts[1]), int(parts[2]), scale))
    return plan


def cmd_generate(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    from .synthetic import make_fitting_set, make_validation_set

    spec = _synthetic_spec(cfg)
    D = spec.dimension
    fit_path = cfg.require("paths.fitting")
    out_dir = cfg.get("paths.output_dir", os.path.dirname(fit_path) or ".")
    N = cfg.get_int("synthetic.fitting_points", 2000)
    inner = cfg.get_int("synthetic.inner_sims", 2)
    if N < 1:
        raise PreconditionError("synthetic.fitting_points must be positive")
    fset = make_fitting_set(spec, sobol_points(D, N), inner)
    os.makedirs(out_dir, exist_ok=True)
    write_fitting_csv(fset, fit_path)
    print(f"fitting {fit_path} {fset.n} points", file=out)
    skip = N
    for stream, (label, n, sims, scale) in enumerate(
            _validation_plan(cfg.get("synthetic.validation", DEFAULT_VALIDATION)), start=1):
        X = np.clip(scale * sobol_points(D, n, skip=skip), -scale, scale)
        skip += n
        vset = make_validation_set(spec, X, sims, with_base=True, stream=stream, label=label)
        path = os.path.join(out_dir, f"validation_{label}.csv")
        write_validation_csv(vset, path)
        print(f"validation {path} {vset.n} points", file=out)
    return 0


# ---------------------------------------------------------------------------
# calibrate
# ---------------------------------------------------------------------------

def engine_config(cfg: RunConfig) -> EngineConfig:
    method = cfg.get("method", "ols")
    if method not in METHODS:
        raise UsageError(f"unknown method {method!r}; choose one of {', '.join(METHODS)}")
    mode = cfg.get("selection.mode", "stepwise")
    if mode not in MODES:
        raise UsageError(f"unknown selection.mode {mode!r}; choose one of {', '.join(MODES)}")
    options = {}
    if method in ("glm", "gam", "mars", "kernel"):
        options.update(cfg.section(method))
    if method == "gam":
        if "lambda_grid" in options:
            options["lambda_grid"] = cfg.get_floats("gam.lambda_grid")
    if method == "kernel" and "kernel.basis" not in cfg:
        raise PreconditionError("kernel.basis required")
    if method == "fgls":
        options.update({k: v for k, v in cfg.section("fgls").items() if k in ("tol", "max_iter")})
    return EngineConfig(cfg.restrictions(), method, mode, cfg.get_int("selection.stage_length", 1),
                        cfg.get_float("selection.proportion", 0.25), options)


def _run_fgls(fset, cfg, config, executor):
    from .fgls import fit_fgls, run_type2, select_variance_model_type1

    variant = cfg.get("fgls.variant", "type2")
    if variant not in ("type1", "type2"):
        raise PreconditionError(f"fgls.variant must be type1 or type2, got {variant!r}")
    ols_model, ols_trace = calibrate(fset, config.with_options(method="ols", options={}), executor)
    m_max = cfg.get_int("fgls.m_max", 3)
    tol = config.options.get("tol", 1e-6)
    max_iter = config.options.get("max_iter", 100)
    vm, fit, _ = select_variance_model_type1(fset, ols_model, m_max, float(tol), int(max_iter), executor)
    if variant == "type1":
        return fit_fgls(fset, ols_model.terms, vm.terms, float(tol), int(max_iter)), ols_trace
    return run_type2(fset, vm, config.restrictions, config, executor, return_trace=True)


def _trace_csv(trace, vsets) -> str:
    import io

    rows = list(csv.reader(io.StringIO(trace.to_csv())))
    header = rows[0] + [f"mae_{label}" for label, _ in vsets]
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for rec, row in zip(trace.records, rows[1:]):
        extra = []
        for _, vset in vsets:
            if rec.model is None:
                extra.append("")
            else:
                extra.append(f"{100 * compute_figures(rec.model, vset).mae_rel:.3f}")
        w.writerow(row + extra)
    return out.getvalue()


def cmd_calibrate(cfg: RunConfig, threads=None, out=None) -> int:
    out = out or sys.stdout
    config = engine_config(cfg)
    fset = read_fitting_csv(cfg.require("paths.fitting"))
    model_path = cfg.require("paths.model")
    trace_path = cfg.get("paths.trace", f"{model_path}.trace.csv")
    vsets = [(lab, read_validation_csv(p, lab)) for lab, p in cfg.validation_paths()]
    with ThreadPoolExecutor(max_workers=threads) if threads and threads > 1 else _null() as pool:
        if config.method == "fgls":
            model, trace = _run_fgls(fset, cfg, config, pool)
        else:
            model, trace = calibrate(fset, config, executor=pool)
    write_model(model, model_path, data_path=cfg.get("paths.fitting") if config.method == "kernel" else None)
    with open(trace_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(_trace_csv(trace, vsets))
    print(f"model {model_path} method={model.method} terms={len(model.terms)}", file=out)
    print(f"trace {trace_path} iterations={len(trace) - 1}", file=out)
    return 0


class _null:
    def __enter__(self):
        return None

    def __exit__(self, *exc):
        return False


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

def cmd_validate(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    model_path = cfg.require("paths.model")
    if not os.path.exists(model_path):
        raise PreconditionError(f"model file {model_path} does not exist")
    model = read_model(model_path)
    vsets = [(lab, read_validation_csv(p, lab)) for lab, p in cfg.validation_paths()]
    if not vsets:
        raise PreconditionError("paths.validation required")
    name = cfg.get("report.model_name", os.path.splitext(os.path.basename(model_path))[0])
    text = report([(name, model)], vsets)
    report_path = cfg.get("paths.report")
    if report_path:
        with open(report_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        print(f"report {report_path} rows={len(vsets)}", file=out)
    else:
        out.write(text)
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

COMMANDS = {"generate": cmd_generate, "calibrate": cmd_calibrate, "validate": cmd_validate}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="proxima", description="Adaptive proxy-function calibration.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="flat section.key = value configuration file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a configuration entry (repeatable)")
    p.add_argument("--threads", type=int, help="worker threads for candidate evaluation")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return p


def _threads(arg):
    if arg is not None:
        return arg
    env = os.environ.get("PROXIMA_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise PreconditionError(f"PROXIMA_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config:
            cfg = RunConfig.from_file(args.config).relative_to(os.path.dirname(os.path.abspath(args.config)))
        else:
            cfg = RunConfig()
        cfg = cfg.override(args.overrides)
        if args.command == "calibrate":
            return cmd_calibrate(cfg, _threads(args.threads))
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"proxima: error: {exc}", file=sys.stderr)
        return 2
    except (ProximaError, OSError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"proxima: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
