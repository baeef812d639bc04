"""
Command-line entry point for building and exploring Taylor transfer maps.

    python main.py build --order 8 --out m8.map
    python main.py sweep --map-file m8.map --omega-min 1.24 --omega-max 1.30 --samples 600 --out m8.csv
    python main.py sweep --exact --omega-min 1.24 --omega-max 1.30 --samples 600 --out exact.csv

Data goes to --out (default: standard output); progress and summaries go
to standard error. Exit codes: 0 success, 1 usage error, 2 numerical failure.
"""
import argparse
import logging
import sys
import time
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from app.comparison import compare_maps, fit_slopes, log_period_three, period_three_scan, PERIOD_THREE_WINDOW
from app.config import Settings, load_settings
from app.duffing import DuffingParams, ExpansionPoint, duffing_system
from app.dynamics import (
    MIN_STRIDES,
    ConvergenceError,
    ExactMap,
    MapHandle,
    TaylorMap,
    detect_period,
    newton_fixed_point,
)
from app.feigenbaum import AttractorConfig, SweepConfig, attractor_cloud, sweep, trail_both_ways
from app.map_store import load_map, render_map, save_map
from app.poly import count_monomials
from app.reports import (
    open_output,
    write_attractor_csv,
    write_compare_csv,
    write_fixpoint_csv,
    write_sweep_csv,
)
from app.validators import (
    taylor_range_warning,
    validate_map_source,
    validate_omega_range,
    validate_order,
    validate_output_path,
    validate_radii,
)
from app.variational import NumericalFailure, integrate_map
from app.workers import shutdown_executor

logger = logging.getLogger("varmap")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2

# Parser bookkeeping that is not a run setting
_NON_SETTINGS = {"command", "config", "handler"}

_log_handler: Optional[logging.Handler] = None


class CliParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with EXIT_USAGE."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def configure_logging(quiet: bool = False):
    """Route the app and varmap loggers to the current standard error."""
    global _log_handler
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    level = logging.WARNING if quiet else logging.INFO
    for name in ("app", "varmap"):
        target = logging.getLogger(name)
        if _log_handler is not None:
            target.removeHandler(_log_handler)
        target.addHandler(handler)
        target.setLevel(level)
    _log_handler = handler


def _check(result):
    is_valid, error = result
    if not is_valid:
        raise ValueError(error)


# ---------------------------------------------------------------------------
# Map sources


def equation_params(s: Settings) -> DuffingParams:
    return DuffingParams(beta=s.beta, epsilon=s.epsilon, omega_d=s.omega_d)


def resolve_map(s: Settings) -> MapHandle:
    """Taylor map from --map-file, or the exact map from the equation flags."""
    _check(validate_map_source(s.map_file, s.exact))
    if s.map_file:
        poly_map = load_map(s.map_file)
        handle = TaylorMap(poly_map)
        logger.info("Using %s from %s", handle.describe(), s.map_file)
        return handle
    handle = ExactMap(equation_params(s), steps=s.exact_steps, time_base=s.time_base, fd_step=s.fd_step)
    logger.info("Using %s", handle.describe())
    return handle


def _warn_taylor_range(handle: MapHandle, omegas: Sequence[float], s: Settings):
    if isinstance(handle, TaylorMap):
        message = taylor_range_warning(omegas, handle.omega_bd, s.taylor_omega_bound)
        if message:
            logger.warning(message)


# ---------------------------------------------------------------------------
# Commands


def _time_applications(handle: MapHandle, q: float, p: float, omega: float, repeats: int = 20) -> float:
    handle.apply(q, p, omega)
    start = time.perf_counter()
    for _ in range(repeats):
        handle.apply(q, p, omega)
    return (time.perf_counter() - start) / repeats


def cmd_build(s: Settings) -> int:
    """Integrate the variational equations over one drive period and save the map."""
    _check(validate_order(s.order))
    _check(validate_output_path(s.out))
    params = equation_params(s)
    point = ExpansionPoint(q_bd=s.q_bd, p_bd=s.p_bd, omega_bd=s.omega_d)
    size = count_monomials(3, s.order)
    logger.info("Building order-%d map about (q, p, omega) = (%g, %g, %g), %s time base",
                s.order, point.q_bd, point.p_bd, point.omega_bd, s.time_base)
    logger.info("L(3,%d) = %d monomials, N_e = %d coefficient equations", s.order, size, 3 * size)

    system = duffing_system(params, s.order, s.time_base)
    start = time.perf_counter()
    poly_map = integrate_map(system, (point.q_bd, point.p_bd), 0.0, system.period, s.order, s.steps)
    build_time = time.perf_counter() - start
    logger.info("Build time: %.3f s (%d RK4 steps)", build_time, s.steps)

    if s.out == "-":
        sys.stdout.write(render_map(poly_map))
        sys.stdout.flush()
    else:
        save_map(poly_map, s.out)

    # Cost report: one exact period versus the build and one map application
    exact = ExactMap(params, steps=s.exact_steps, time_base=s.time_base)
    exact_time = _time_applications(exact, point.q_bd, point.p_bd, point.omega_bd)
    taylor_time = _time_applications(TaylorMap(poly_map), point.q_bd, point.p_bd, point.omega_bd)
    if exact_time > 0:
        logger.info("Build / exact period: %.1f (N_e/2 = %.1f)", build_time / exact_time, 1.5 * size)
    if exact_time > taylor_time:
        logger.info("Break-even after %d map applications", int(np.ceil(build_time / (exact_time - taylor_time))))
    else:
        logger.info("Taylor map application is not cheaper than one exact period at these settings")
    return EXIT_OK


def cmd_sweep(s: Settings, threads: int) -> int:
    _check(validate_omega_range(s.omega_min, s.omega_max, s.samples))
    _check(validate_output_path(s.out))
    handle = resolve_map(s)
    cfg = SweepConfig(
        omega_min=s.omega_min,
        omega_max=s.omega_max,
        samples=s.samples,
        transient=s.transient,
        keep=s.keep,
        seed_mode=s.seed_mode,
        seed=(s.seed_q, s.seed_p),
        direction=s.direction,
        period_max=s.max_period,
        period_tol=s.period_tol,
        escape_radius=s.escape_radius,
    )
    _warn_taylor_range(handle, (cfg.omega_min, cfg.omega_max), s)
    records = sweep(cfg, handle, threads)
    log_period_three(records, handle.describe())
    with open_output(s.out) as stream:
        rows = write_sweep_csv(records, stream)
    logger.info("Wrote %d rows", rows)
    return EXIT_OK


def cmd_attractor(s: Settings, threads: int) -> int:
    if s.omega is None:
        raise ValueError("--omega is required")
    _check(validate_output_path(s.out))
    handle = resolve_map(s)
    cfg = AttractorConfig(
        omega=s.omega,
        transient=s.attractor_transient,
        keep=s.attractor_keep,
        window=s.window_box,
        seed=(s.seed_q, s.seed_p),
        escape_radius=s.escape_radius,
    )
    _warn_taylor_range(handle, (cfg.omega,), s)
    cloud = attractor_cloud(cfg, handle, threads)
    if cloud.escaped and not len(cloud):
        logger.warning("Warning: no attractor at omega=%g; the orbit escaped (step %s)", cfg.omega, cloud.escape_step)
    elif cfg.window is None and not cloud.escaped:
        max_period = min(s.max_period, len(cloud) // (MIN_STRIDES + 1))
        if max_period >= 1:
            period = detect_period(cloud.points, s.period_tol, max_period)
            logger.info("Detected period: %s", period if period is not None else f"none <= {max_period}")
    with open_output(s.out) as stream:
        rows = write_attractor_csv(cloud.points, stream)
    logger.info("Wrote %d points", rows)
    return EXIT_OK


def cmd_fixpoint(s: Settings) -> int:
    _check(validate_output_path(s.out))
    ranged = s.omega_min is not None or s.omega_max is not None
    if ranged and s.omega is not None:
        raise ValueError("Use either --omega or --omega-min/--omega-max, not both")
    if not ranged and s.omega is None:
        raise ValueError("--omega or --omega-min/--omega-max is required")
    handle = resolve_map(s)
    guess = (s.q_bd if s.guess_q is None else s.guess_q, s.p_bd if s.guess_p is None else s.guess_p)

    if not ranged:
        _warn_taylor_range(handle, (s.omega,), s)
        result = newton_fixed_point(handle, s.period, guess, s.omega, s.newton_tol, s.newton_max_iter)
        if not result.converged:
            raise ConvergenceError(f"Newton failed at omega={s.omega:g}: {result.diagnostic}")
        results = [result]
    else:
        _check(validate_omega_range(s.omega_min, s.omega_max, s.samples))
        omegas = np.linspace(s.omega_min, s.omega_max, s.samples)
        _warn_taylor_range(handle, (s.omega_min, s.omega_max), s)
        start_omega = s.omega_min if s.omega_start is None else s.omega_start
        start = int(np.argmin(np.abs(omegas - start_omega)))
        results = trail_both_ways(omegas, start, s.period, guess, handle, s.newton_tol, s.newton_max_iter)
        logger.info("Trail spans omega in [%g, %g] (%d points)", results[0].omega, results[-1].omega, len(results))

    first = results[0]
    logger.info("Period-%d point at omega=%g: (%.10g, %.10g), %s, |multipliers| = %.6g, %.6g",
                first.period, first.omega, first.location[0], first.location[1],
                "stable" if first.stable else "unstable",
                abs(first.multipliers[0]), abs(first.multipliers[1]))
    with open_output(s.out) as stream:
        write_fixpoint_csv(results, stream)
    return EXIT_OK


def cmd_compare(s: Settings) -> int:
    paths: List[str] = s.map_file_list or ([s.map_file] if s.map_file else [])
    if not paths:
        raise ValueError("compare needs at least one --map-file")
    _check(validate_radii(s.radius_list))
    _check(validate_output_path(s.out))
    maps = [load_map(path) for path in paths]

    given = s.model_fields_set
    reference = maps[0].params
    for name in ("beta", "epsilon", "omega_d"):
        if name in given and reference is not None and getattr(s, name) != getattr(reference, name):
            raise ValueError(f"--{name.replace('_', '-')} {getattr(s, name)} differs from the map file value "
                             f"{getattr(reference, name)}")

    exact_steps = s.exact_steps if "exact_steps" in given else None
    rows = compare_maps(maps, s.radius_list, s.directions, exact_steps)
    for order, slope in fit_slopes(rows).items():
        logger.info("order %d: log-log error slope %.3f (expected about %d)", order, slope, order + 1)

    lo, hi = PERIOD_THREE_WINDOW
    for poly_map in maps:
        omega_bd = poly_map.expansion_point[-1]
        if poly_map.num_vars == 3 and max(abs(lo - omega_bd), abs(hi - omega_bd)) <= s.taylor_omega_bound:
            handle = TaylorMap(poly_map)
            records = period_three_scan(handle, (poly_map.expansion_point[0], poly_map.expansion_point[1]),
                                        s.transient, s.keep)
            log_period_three(records, handle.describe())

    with open_output(s.out) as stream:
        write_compare_csv(rows, stream)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def _common_flags() -> argparse.ArgumentParser:
    common = CliParser(add_help=False)
    common.add_argument("--config", help="key=value run-config file")
    common.add_argument("--threads", type=int, help="worker threads (default 1)")
    common.add_argument("--quiet", action="store_true", default=None, help="only warnings and errors")
    common.add_argument("--out", help="output path, '-' for standard output")
    return common


def _equation_flags() -> argparse.ArgumentParser:
    flags = CliParser(add_help=False)
    flags.add_argument("--beta", type=float)
    flags.add_argument("--epsilon", type=float)
    flags.add_argument("--omega-d", type=float)
    flags.add_argument("--time-base", choices=("normalized", "fixed"))
    flags.add_argument("--exact-steps", type=int, help="RK4 steps per drive period of the exact map")
    return flags


def _source_flags() -> argparse.ArgumentParser:
    flags = CliParser(add_help=False)
    flags.add_argument("--map-file", help="Taylor map file written by build")
    flags.add_argument("--exact", action="store_true", default=None, help="iterate the exact map")
    flags.add_argument("--fd-step", type=float, help="finite-difference step of the exact Jacobian")
    flags.add_argument("--seed-q", type=float)
    flags.add_argument("--seed-p", type=float)
    flags.add_argument("--escape-radius", type=float)
    flags.add_argument("--max-period", type=int)
    flags.add_argument("--period-tol", type=float)
    return flags


def build_parser() -> CliParser:
    parser = CliParser(prog="varmap", description="Taylor transfer maps of the driven Duffing oscillator")
    commands = parser.add_subparsers(dest="command", parser_class=CliParser)
    commands.required = True
    common, equation, source = _common_flags(), _equation_flags(), _source_flags()

    build = commands.add_parser("build", parents=[common, equation], help="build a map file")
    build.add_argument("--q-bd", type=float)
    build.add_argument("--p-bd", type=float)
    build.add_argument("--order", type=int)
    build.add_argument("--steps", type=int, help="RK4 steps over one period")
    build.set_defaults(handler="build")

    sweep_cmd = commands.add_parser("sweep", parents=[common, equation, source], help="Feigenbaum diagram data")
    sweep_cmd.add_argument("--omega-min", type=float)
    sweep_cmd.add_argument("--omega-max", type=float)
    sweep_cmd.add_argument("--samples", type=int)
    sweep_cmd.add_argument("--direction", choices=("up", "down"))
    sweep_cmd.add_argument("--seed-mode", choices=("continuation", "fixed_seed"))
    sweep_cmd.add_argument("--transient", type=int)
    sweep_cmd.add_argument("--keep", type=int)
    sweep_cmd.set_defaults(handler="sweep")

    attractor = commands.add_parser("attractor", parents=[common, equation, source], help="phase-portrait cloud")
    attractor.add_argument("--omega", type=float)
    attractor.add_argument("--transient", dest="attractor_transient", type=int)
    attractor.add_argument("--keep", dest="attractor_keep", type=int)
    attractor.add_argument("--window", help="q_lo,q_hi,p_lo,p_hi")
    attractor.set_defaults(handler="attractor")

    fixpoint = commands.add_parser("fixpoint", parents=[common, equation, source], help="fixed points of M^k")
    fixpoint.add_argument("--omega", type=float)
    fixpoint.add_argument("--omega-min", type=float)
    fixpoint.add_argument("--omega-max", type=float)
    fixpoint.add_argument("--omega-start", type=float, help="grid omega where the trail starts")
    fixpoint.add_argument("--samples", type=int)
    fixpoint.add_argument("--period", type=int, help="k in M^k(z) = z")
    fixpoint.add_argument("--guess-q", type=float)
    fixpoint.add_argument("--guess-p", type=float)
    fixpoint.add_argument("--newton-tol", type=float)
    fixpoint.add_argument("--newton-max-iter", type=int)
    fixpoint.set_defaults(handler="fixpoint")

    compare = commands.add_parser("compare", parents=[common, equation], help="Taylor vs exact error table")
    compare.add_argument("--map-file", dest="map_files", action="append", help="map file (repeatable)")
    compare.add_argument("--radii", help="comma-separated probe radii")
    compare.add_argument("--directions", type=int)
    compare.add_argument("--transient", type=int)
    compare.add_argument("--keep", type=int)
    compare.set_defaults(handler="compare")
    return parser


def settings_from_args(args: argparse.Namespace) -> Settings:
    overrides: Dict[str, Any] = {
        key: value for key, value in vars(args).items()
        if key not in _NON_SETTINGS and value is not None
    }
    if isinstance(overrides.get("map_files"), list):
        overrides["map_files"] = ",".join(overrides["map_files"])
    return load_settings(args.config, overrides)


def run(args: argparse.Namespace) -> int:
    s = settings_from_args(args)
    configure_logging(s.quiet)
    threads = s.threads
    if args.handler == "build":
        return cmd_build(s)
    if args.handler == "sweep":
        return cmd_sweep(s, threads)
    if args.handler == "attractor":
        return cmd_attractor(s, threads)
    if args.handler == "fixpoint":
        return cmd_fixpoint(s)
    return cmd_compare(s)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    configure_logging(bool(args.quiet))
    try:
        return run(args)
    except ValidationError as e:
        logger.error("Error: invalid settings:\n%s", e)
        return EXIT_USAGE
    except NumericalFailure as e:
        logger.error("Error: %s", e)
        return EXIT_NUMERICAL
    except ValueError as e:
        logger.error("Error: %s", e)
        return EXIT_USAGE
    finally:
        shutdown_executor()


if __name__ == "__main__":
    sys.exit(main())
