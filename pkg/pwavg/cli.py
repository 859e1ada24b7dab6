"""Command-line front end.

Exit codes: 0 success, 1 invalid input, 2 mathematical failure at run time
(sliding, tangency, Newton), 64 usage error. Diagnostics go to stderr as JSON
lines; a short human summary goes to stdout.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from loguru import logger

from .analysis.averaging import averaged_f1, certify, find_zeros, sample_f1
from .analysis.degree import DegreeDomain, DegreeMethod, brouwer_degree
from .analysis.shooting import epsilon_sweep
from .core.builtin_models import BUILTIN_NAMES, Prop1Coefficients, builtin_document
from .core.config import LoggingConfig, RunConfig
from .core.errors import (
    EXIT_OK,
    EXIT_RUNTIME,
    EXIT_VALIDATION,
    MissingManifoldError,
    PwavgError,
    UsageError,
)
from .core.flow import PiecewiseFlow
from .core.model import PiecewiseModel, file_hash, load_model_file
from .utils.export import report_header, write_csv, write_json
from .utils.logging import configure_logging


class _ArgumentParser(argparse.ArgumentParser):
    """Usage errors become UsageError (exit 64) instead of exit 2."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"Expected comma-separated numbers, got {text!r}") from None


class _Context:
    """Loaded config and model plus report plumbing for one command."""

    def __init__(self, args: argparse.Namespace, config: RunConfig):
        self.args = args
        self.config = config
        self.out_dir = Path(config.output.directory)
        self.model_path: Optional[Path] = Path(args.model) if getattr(args, "model", None) else None
        self._model: Optional[PiecewiseModel] = None

    @property
    def model(self) -> PiecewiseModel:
        if self._model is None:
            self._model = load_model_file(self.model_path)
        return self._model

    def header(self, command: str) -> Dict:
        model_hash = file_hash(self.model_path) if self.model_path is not None else None
        return report_header(command, self.config.effective(), model_hash)

    def write_frame(self, frame, name: str) -> None:
        if "csv" in self.config.output.formats:
            path = write_csv(frame, self.out_dir / f"{name}.csv")
            logger.debug(f"Wrote {path}")

    def write_report(self, payload: Dict, name: str) -> None:
        if "json" in self.config.output.formats:
            path = write_json(payload, self.out_dir / f"{name}.json")
            logger.debug(f"Wrote {path}")

    def manifold(self):
        if self.model.manifold is None:
            raise MissingManifoldError(f"{self.model_path} declares no manifold")
        return self.model.manifold


# ---------------------------------------------------------------- commands

def cmd_validate(ctx: _Context) -> int:
    model = ctx.model
    if model.manifold is not None:
        report = model.manifold_zone_report(model.manifold, tol_surface=ctx.config.integrator.tol_surface)
        if not report["consistent"]:
            logger.bind(code="model.manifold_boundary").warning(f"Manifold meets the discontinuity set inconsistently: {report}")
    print(f"{ctx.model_path}: OK (d={model.dimension}, {len(model.surfaces)} surface(s), {len(model.zones)} zone(s))")
    return EXIT_OK


def cmd_integrate(ctx: _Context) -> int:
    args, model = ctx.args, ctx.model
    z = _floats(args.z)
    tf = model.period if args.tf is None else args.tf
    trajectory = PiecewiseFlow(model, ctx.config.integrator).integrate(z, args.eps, (args.t0, tf))
    ctx.write_frame(trajectory.to_frame(), "trajectory")
    ctx.write_frame(trajectory.events_frame(), "events")
    report = ctx.header("integrate")
    report.update({
        "z": z,
        "eps": args.eps,
        "t_span": [args.t0, tf],
        "final_state": trajectory.final_state.tolist(),
        "events": trajectory.events_frame().to_dict(orient="records"),
    })
    ctx.write_report(report, "integrate")
    print(f"x({tf:.12g}) = {trajectory.final_state.tolist()} with {len(trajectory.events)} event(s)")
    return EXIT_OK


def cmd_avgfn(ctx: _Context) -> int:
    model, manifold = ctx.model, ctx.manifold()
    samples = sample_f1(model, manifold, ctx.config, grid=ctx.args.grid)
    ctx.write_frame(samples.to_frame(), "f1")
    report = ctx.header("avgfn")
    report.update({
        "summary": samples.hypothesis_summary(),
        "identically_zero": samples.identically_zero,
        "points": [r.to_dict() for r in samples.reports],
    })
    ctx.write_report(report, "hypotheses")
    summary = samples.hypothesis_summary()
    print(f"f1 sampled at {len(samples.alphas)} point(s); H {summary['h_pass']}, H2 {summary['h2_pass']}, H3 {summary['h3_pass']}")
    return EXIT_OK


def _degree_over_manifold(model, manifold, zeros, cfg: RunConfig) -> Dict:
    domain = DegreeDomain.box(manifold.box)
    method = None if manifold.k <= 2 else DegreeMethod.REGULAR_VALUE_SUM
    try:
        result = brouwer_degree(lambda a: averaged_f1(model, manifold, a, cfg), domain, method, cfg, zeros=zeros)
    except PwavgError as exc:
        logger.bind(code=exc.code).warning(f"Degree over V unavailable: {exc}")
        return {"degree": None, "error": exc.to_dict(), "domain": domain.to_dict()}
    return result.to_dict()


def cmd_find(ctx: _Context) -> int:
    model, manifold, cfg = ctx.model, ctx.manifold(), ctx.config
    samples = sample_f1(model, manifold, cfg, grid=ctx.args.grid)
    zeros = find_zeros(samples, model, manifold, cfg)
    degree = _degree_over_manifold(model, manifold, zeros, cfg) if not samples.identically_zero else {"degree": None}
    candidates = []
    for zero in zeros:
        entry = zero.to_dict()
        entry["local_degree"] = int(np.sign(zero.det))
        candidates.append(entry)
    certificate = certify(samples, zeros, model, manifold, degree.get("degree"), cfg)
    report = ctx.header("find")
    report.update({"candidates": candidates, "degree": degree, "certificate": certificate})
    ctx.write_report(report, "candidates")
    print(f"{len(zeros)} candidate zero(s); degree {degree.get('degree')}; certificate {certificate}")
    return EXIT_OK


def cmd_verify(ctx: _Context) -> int:
    model, manifold, cfg = ctx.model, ctx.manifold(), ctx.config
    eps_list = _floats(ctx.args.eps_list) if ctx.args.eps_list else list(cfg.shooting.eps_list)
    if not eps_list or any(e <= 0 for e in eps_list) or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise UsageError(f"--eps-list must be positive and strictly decreasing: {eps_list}")

    samples = sample_f1(model, manifold, cfg, grid=ctx.args.grid)
    zeros = find_zeros(samples, model, manifold, cfg)
    if zeros:
        z_a = zeros[0].z
    else:
        z_a = manifold.point(0.5 * (manifold.lower + manifold.upper))
        logger.bind(code="averaging.no_zero").warning(f"No zero of f1 found; sweeping from the box center {z_a.tolist()}")

    table = epsilon_sweep(model, manifold, z_a, eps_list, cfg)
    ctx.write_frame(table.to_frame(), "convergence")
    report = ctx.header("verify")
    report.update(table.to_dict())
    ctx.write_report(report, "convergence")

    converged = [row for row in table.rows if row.converged]
    if converged:
        final = converged[-1]
        orbit = PiecewiseFlow(model, cfg.integrator).integrate(final.z, final.eps, (0.0, model.period))
        ctx.write_frame(orbit.to_frame(), "orbit")
    print(f"{len(converged)}/{len(table.rows)} eps row(s) converged; fitted order {table.order}")
    return EXIT_OK if converged else EXIT_RUNTIME


def cmd_builtin(ctx: _Context) -> int:
    args = ctx.args
    try:
        coeffs = Prop1Coefficients.parse(args.coeffs or "")
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    document = builtin_document(args.name, coeffs)
    text = json.dumps(document, indent=2, sort_keys=True) + "\n"
    if args.out_file:
        path = Path(args.out_file)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        print(f"Wrote {args.name} to {path}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS: Dict[str, Callable[[_Context], int]] = {
    "validate": cmd_validate,
    "integrate": cmd_integrate,
    "avgfn": cmd_avgfn,
    "find": cmd_find,
    "verify": cmd_verify,
    "builtin": cmd_builtin,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="pwavg", description="Averaging theory for discontinuous piecewise systems")
    parser.add_argument("--config", help="YAML configuration file")
    parser.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="Override one config value")
    parser.add_argument("--out", dest="out_dir", help="Output directory")
    parser.add_argument("--threads", type=int, help="Worker threads for grid evaluations")
    parser.add_argument("--seed", type=int, help="Random seed for probe sampling")
    parser.add_argument("--log-level", help="stderr log level")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    p = sub.add_parser("validate", help="Check a model file")
    p.add_argument("model")

    p = sub.add_parser("integrate", help="Integrate one trajectory")
    p.add_argument("model")
    p.add_argument("--z", required=True, help="Initial state, comma separated")
    p.add_argument("--eps", type=float, default=0.0)
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--tf", type=float, default=None, help="Final time (default: the period)")

    p = sub.add_parser("avgfn", help="Sample f1 and check hypotheses on the manifold")
    p.add_argument("model")
    p.add_argument("--grid", type=int, default=None)

    p = sub.add_parser("find", help="Locate zeros of f1 and their degree")
    p.add_argument("model")
    p.add_argument("--grid", type=int, default=None)

    p = sub.add_parser("verify", help="Shoot periodic orbits for decreasing eps")
    p.add_argument("model")
    p.add_argument("--eps-list", dest="eps_list", default=None, help="Comma separated, strictly decreasing")
    p.add_argument("--grid", type=int, default=None)

    p = sub.add_parser("builtin", help="Emit a built-in model file")
    p.add_argument("--name", required=True, choices=BUILTIN_NAMES)
    p.add_argument("--coeffs", default="", help="name=value,... (unset names keep the pinned defaults)")
    p.add_argument("--out", dest="out_file", default=None, help="Model file to write (default: stdout)")
    return parser


def _load_config(args: argparse.Namespace) -> RunConfig:
    try:
        config = RunConfig.from_yaml(args.config) if args.config else RunConfig()
        config = config.with_overrides(args.set)
        if args.out_dir:
            config = config.update_section("output", directory=args.out_dir)
        if args.threads is not None:
            config = config.update_section("runtime", threads=args.threads)
        if args.seed is not None:
            config = config.update_section("runtime", seed=args.seed)
    except (ValueError, FileNotFoundError) as exc:
        raise UsageError(f"Invalid configuration: {exc}") from None
    return config


def _report_error(exc: PwavgError) -> None:
    details = {k: v for k, v in exc.details.items() if k not in ("code", "message")}
    logger.bind(code=exc.code, **details).error(exc.message)


def main(argv: Optional[Sequence[str]] = None) -> int:
    configure_logging(LoggingConfig(file=None), serialize_stderr=True, stderr_level="WARNING")
    try:
        args = build_parser().parse_args(argv)
        config = _load_config(args)
        configure_logging(config.logging, serialize_stderr=True, stderr_level=args.log_level or "WARNING")
        return COMMANDS[args.command](_Context(args, config))
    except PwavgError as exc:
        _report_error(exc)
        return exc.exit_code
    except FileNotFoundError as exc:
        logger.bind(code="io.not_found").error(str(exc))
        return EXIT_VALIDATION
    except ArithmeticError as exc:
        logger.bind(code="runtime.arithmetic").error(str(exc))
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
