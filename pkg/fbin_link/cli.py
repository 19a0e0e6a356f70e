"""
Command-line front end: ``fbin-link predict|simulate|analyze|satellite|demo``.

Exit status is 0 on success, 1 for invalid configuration, usage or input
files, and 2 when the analysis itself fails.
"""

import argparse
import json
import logging
import math
import os
import sys
import warnings
from fractions import Fraction
from typing import Any, Callable, Dict, List, NoReturn, Optional, Sequence, Tuple

import numpy as np

from .channel import (
    COMPARISON_TABLE,
    PlatformTrajectory,
    TrajectoryMode,
    load_trajectory_csv,
    phase_change_rate,
    phase_of_flight,
    timing_budget,
)
from .config import (
    DEMO_DELTA_OMEGA,
    OMEGA_780NM,
    AnalysisSettings,
    RunManifest,
    ScenarioConfig,
    apply_overrides,
    build_config,
    demo_document,
    load_config,
)
from .constants import PS_PER_S
from .exceptions import (
    AnalysisError,
    ConfigError,
    DomainError,
    TagFileError,
    UsageError,
)
from .mcsim import REFERENCE_SYSTEMS, combine_jitter, simulate
from .qstate import (
    BinPair,
    JitterConvention,
    jitter_visibility,
    visibility_vs_jitter_curve,
    visibility_vs_spacing_curve,
)
from .tagproc import AnalysisResult, FoldingConfig, analyze_stream
from .tagstream import TagStream, as_fraction, read_tags, write_tags

log = logging.getLogger(__name__)

DEFAULT_V0 = 0.95
DEFAULT_JITTER_PS = 100.0
TARGET_FIDELITIES = (0.99, 0.999, 0.9999)
SWEEP_NAMES = ("delta_omega", "jitter")
STATES = ("Z0", "Z1", "X+", "vac")


def formatwarning(message, category, filepath, lineno, line=None):  # type: ignore
    """Make the warnings a bit prettier."""
    _, filename = os.path.split(filepath)
    return f"{filename}:{lineno} {category.__name__}: {message}\n"


warnings.formatwarning = formatwarning


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        raise UsageError(f"{self.prog}: {message}")


def _write_csv(
    path: str, header: str, columns: Sequence[Any], fmt: Any = "%.10g"
) -> None:
    if len(columns[0]):
        table = np.column_stack([np.asarray(c) for c in columns])
    else:
        table = np.zeros((0, len(columns)))
    with open(path, "w", newline="") as f:
        np.savetxt(f, table, fmt=fmt, delimiter=",", header=header, comments="")


def _write_json(path: str, doc: Any) -> None:
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


class Run:
    """Output directory bookkeeping shared by the subcommands."""

    def __init__(self, out: str, manifest: RunManifest) -> None:
        self.out = out
        self.manifest = manifest
        os.makedirs(out, exist_ok=True)

    def path(self, name: str) -> str:
        self.manifest.outputs.append(name)
        return os.path.join(self.out, name)

    def record_config(self, cfg: ScenarioConfig) -> None:
        self.manifest.config_digest = cfg.digest
        self.manifest.config = cfg.document


def _scenario_args(args: argparse.Namespace) -> List[str]:
    overrides = list(args.override or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"seed={args.seed}")
    return overrides


def parse_sweep(text: str) -> Tuple[str, np.ndarray]:
    """``name=start:stop:num`` → (name, grid)."""
    name, sep, grid = text.partition("=")
    parts = grid.split(":")
    if not sep or name not in SWEEP_NAMES or len(parts) != 3:
        raise UsageError(
            f"--sweep expects one of {SWEEP_NAMES} as name=start:stop:num, got {text!r}"
        )
    try:
        start, stop, num = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise UsageError(f"--sweep {text!r}: bad number") from None
    if num < 2 or stop <= start:
        raise UsageError(f"--sweep {text!r}: need num >= 2 and stop > start")
    return name, np.linspace(start, stop, num)


def cmd_predict(args: argparse.Namespace, run: Run) -> int:
    """Analytic visibility curves versus bin spacing and versus jitter."""
    sweeps = [parse_sweep(s) for s in args.sweep or []]
    if len(sweeps) > 1:
        raise UsageError("--sweep: sweep over exactly one of delta_omega, jitter")
    v0, delta_omega, jitter_ps = args.v0, args.delta_omega, args.jitter_ps
    convention = JitterConvention(args.convention)
    if args.config:
        cfg = load_config(args.config, _scenario_args(args))
        run.record_config(cfg)
        sc = cfg.scenario
        v0 = sc.factors.v_x_eps
        delta_omega = sc.pair.delta_omega
        jitter_ps = PS_PER_S * combine_jitter(
            [sc.detectors[0].jitter_fwhm, sc.tagger.jitter_fwhm]
        )
        convention = sc.jitter_convention

    wanted = {name for name, _ in sweeps} or set(SWEEP_NAMES)
    grids = dict(sweeps)
    if "delta_omega" in wanted:
        omegas = grids.get("delta_omega", np.linspace(0.0, 2.0 * math.pi * 2e9, 401))
        curve = visibility_vs_spacing_curve(
            v0, jitter_ps / PS_PER_S, omegas, convention
        )
        _write_csv(
            run.path("visibility_vs_spacing.csv"),
            "delta_omega_rad_per_s,visibility",
            [curve.abscissa, curve.visibility],
        )
    if "jitter" in wanted:
        jitters = grids.get("jitter", np.linspace(0.0, 400.0, 401))
        curve = visibility_vs_jitter_curve(
            v0, delta_omega, jitters / PS_PER_S, convention
        )
        _write_csv(
            run.path("visibility_vs_jitter.csv"),
            "jitter_fwhm_ps,visibility",
            [curve.abscissa * PS_PER_S, curve.visibility],
        )

    rows = []
    print(f"{'detector':<26}{'dT_FWHM (ps)':>14}{'model':>8}{'measured':>16}")
    for system in REFERENCE_SYSTEMS:
        fwhm = system.system_fwhm_ps
        model = float(jitter_visibility(v0, delta_omega, fwhm / PS_PER_S, convention))
        rows.append((fwhm, model, system.measured_visibility, system.measured_error))
        print(
            f"{system.detector:<26}{fwhm:>14.1f}{model:>8.3f}"
            f"{system.measured_visibility:>10.3f} ± {system.measured_error:.3f}"
        )
    _write_csv(
        run.path("jitter_table.csv"),
        "system_fwhm_ps,v_model,v_measured,v_measured_err",
        list(zip(*rows)),
    )
    return 0


def _load_scenario(
    args: argparse.Namespace, overrides: Optional[List[str]] = None
) -> ScenarioConfig:
    if overrides is None:
        overrides = _scenario_args(args)
    if args.config:
        return load_config(args.config, overrides)
    return build_config(dict(demo_document()), overrides)


def _simulate_into(
    cfg: ScenarioConfig, run: Run, workers: int, name: str = "tags.csv"
) -> TagStream:
    stream = simulate(cfg.scenario, workers=workers)
    meta = write_tags(stream, run.path(name))
    run.manifest.outputs.append(os.path.relpath(meta, run.out))
    return stream


def cmd_simulate(args: argparse.Namespace, run: Run) -> int:
    """Generate a tag stream; the replication scenario unless ``--config`` is given."""
    cfg = _load_scenario(args)
    run.record_config(cfg)
    run.manifest.seed = cfg.scenario.seed
    stream = _simulate_into(cfg, run, args.workers)
    print(f"{len(stream)} records, {stream.markers.size} markers")
    return 0


def _analysis_settings(args: argparse.Namespace, run: Run) -> AnalysisSettings:
    settings = AnalysisSettings()
    if args.config:
        cfg = load_config(args.config, args.override or [])
        run.record_config(cfg)
        settings = cfg.analysis
        if settings.delta_omega is None:
            settings = AnalysisSettings(
                cfg.scenario.pair.delta_omega,
                settings.bin_width_ps,
                settings.min_events,
                settings.state,
            )
    elif args.override:
        doc = apply_overrides({"analysis": {}}, args.override)
        unknown = sorted(set(doc) - {"analysis"})
        if unknown:
            raise UsageError(
                "--override without --config only accepts analysis.* keys,"
                f" got {unknown}"
            )
        settings = AnalysisSettings.from_json(doc["analysis"])

    def pick(cli: Any, configured: Any) -> Any:
        return configured if cli is None else cli

    width = None if args.bin_width_ps is None else as_fraction(args.bin_width_ps)
    return AnalysisSettings(
        pick(args.delta_omega, settings.delta_omega),
        pick(width, settings.bin_width_ps),
        pick(args.min_events, settings.min_events),
        pick(args.state, settings.state),
    )


def analyze_into(
    stream: TagStream, settings: AnalysisSettings, run: Run, prefix: str = ""
) -> AnalysisResult:
    meta = stream.metadata
    if settings.delta_omega is not None and not math.isclose(
        settings.delta_omega, meta.delta_omega, rel_tol=1e-9
    ):
        warnings.warn(
            f"delta_omega {settings.delta_omega:.6g} rad/s overrides"
            f" {meta.delta_omega:.6g} rad/s from the tag metadata"
        )
    folding = FoldingConfig.from_metadata(
        meta, settings.bin_width_ps, settings.delta_omega
    )
    result = analyze_stream(stream, folding, settings.state, settings.min_events)
    _write_json(run.path(f"{prefix}report.json"), result.report.to_json())
    h = result.histogram
    _write_csv(
        run.path(f"{prefix}histogram.csv"),
        "bin_index,tau_ps,count",
        [np.arange(h.counts.size), h.edges_ps[:-1], h.counts],
        fmt=["%d", "%.6f", "%d"],
    )
    for error in result.errors:
        print(f"analysis error: {error}", file=sys.stderr)
    return result


def _print_report(result: AnalysisResult) -> None:
    for key, value in result.report.to_json().items():
        if isinstance(value, float):
            print(f"{key:<16}{value:.6g}")
        elif value is not None:
            print(f"{key:<16}{value}")


def cmd_analyze(args: argparse.Namespace, run: Run) -> int:
    """Fold, histogram and fit a recorded or simulated tag file."""
    settings = _analysis_settings(args, run)
    stream = read_tags(args.tags)
    run.manifest.seed = stream.metadata.seed
    result = analyze_into(stream, settings, run)
    _print_report(result)
    return 0 if result.ok else 2


def cmd_satellite(args: argparse.Namespace, run: Run) -> int:
    """
    Phase profile of a moving platform and the timing budget to compensate it.

    With ``--config`` or ``--override`` the bins and the trajectory come from
    the scenario; ``--delta-omega`` and ``--trajectory`` still take precedence.
    """
    pair = BinPair.from_spacing(OMEGA_780NM, DEMO_DELTA_OMEGA)
    traj: Optional[PlatformTrajectory] = None
    if args.config or args.override:
        cfg = _load_scenario(args)
        run.record_config(cfg)
        pair = cfg.scenario.pair
        traj = cfg.scenario.channel.trajectory
    if args.delta_omega is not None:
        pair = BinPair.from_spacing(pair.bin0.omega_center, args.delta_omega)
    if args.trajectory:
        traj = load_trajectory_csv(args.trajectory)
    elif traj is None:
        traj = PlatformTrajectory.linear(args.velocity, args.range)
    if traj.mode is TrajectoryMode.SAMPLED:
        lo, hi = traj.span
        times = np.linspace(lo, hi, args.samples)
    else:
        times = np.linspace(0.0, args.duration, args.samples)
    delta_omega = pair.delta_omega

    ranges = np.asarray(traj.range_at(times))
    rates, _ = traj.range_rate_at(times)
    phases = np.asarray(phase_of_flight(pair, traj, times))
    df = phase_change_rate(pair, traj, times)
    _write_csv(
        run.path("phase_profile.csv"),
        "t_s,range_m,range_rate_m_per_s,delta_phi_rad,delta_f_hz",
        [times, ranges, rates, phases, df.hz],
    )
    budget = {
        f"{fid:g}": timing_budget(delta_omega, fid) * PS_PER_S
        for fid in TARGET_FIDELITIES
    }
    peak = float(np.max(np.abs(df.hz))) if np.size(df.hz) else 0.0
    comparison = {
        dof: {"sensitivity": sensitivity, "compensation": compensation}
        for dof, (sensitivity, compensation) in COMPARISON_TABLE.items()
    }
    _write_json(
        run.path("budget.json"),
        {
            "delta_omega_rad_per_s": delta_omega,
            "peak_delta_f_hz": peak,
            "timing_budget_ps": budget,
            "comparison": comparison,
        },
    )
    print(f"peak phase change rate {peak / 1e3:.3f} kHz")
    for fid, ps in budget.items():
        print(f"fidelity {fid:<7} timing budget {ps:.1f} ps")
    for dof, (sensitivity, compensation) in COMPARISON_TABLE.items():
        shown = f"{peak / 1e3:.2f} kHz" if dof == "frequency-bin" else sensitivity
        print(f"{dof:<14}{shown:>12}   {compensation}")
    return 0


def _percent(value: Optional[float], error: Optional[float]) -> str:
    if value is None:
        return "n/a"
    return f"{100 * value:.1f} ± {100 * (error or 0.0):.1f} %"


def cmd_demo(args: argparse.Namespace, run: Run) -> int:
    """
    Simulate and analyze both analyzer settings of one scenario: the
    replication scenario unless ``--config`` is given.
    """
    results: Dict[str, AnalysisResult] = {}
    digests = {}
    cfg: Optional[ScenarioConfig] = None
    for basis in ("Z", "X"):
        overrides = _scenario_args(args) + [f"receiver.basis={basis}"]
        if args.duration is not None:
            overrides.insert(0, f"run_duration_s={args.duration}")
        cfg = _load_scenario(args, overrides)
        digests[basis] = cfg.digest
        run.manifest.seed = cfg.scenario.seed
        prefix = f"{basis.lower()}_"
        stream = _simulate_into(cfg, run, args.workers, f"{prefix}tags.csv")
        results[basis] = analyze_into(stream, cfg.analysis, run, prefix)
    assert cfg is not None
    run.manifest.config_digest = digests["Z"]
    run.manifest.config = {"digests": digests}

    sc = cfg.scenario
    marker_rate = PS_PER_S / sc.tagger.marker_period_ps
    shutter_rate = 1.0 / sc.schedule.segments[0].duration
    z, x = results["Z"].report, results["X"].report
    print(f"{'delta_omega':<22}{sc.pair.delta_omega:.4g} rad/s")
    print(f"{'timing pulse rate':<22}{marker_rate / 1e3:.0f} kHz")
    print(f"{'shutter rate':<22}{shutter_rate:g} Hz")
    print(f"{'omega0 visibility':<22}{_percent(z.v_z_omega0, z.v_z_omega0_err)}")
    print(f"{'omega1 visibility':<22}{_percent(z.v_z_omega1, z.v_z_omega1_err)}")
    print(f"{'Z-basis visibility':<22}{_percent(z.v_z_combined, None)}")
    print(f"{'X-basis visibility':<22}{_percent(x.v_fit, x.v_fit_err)}")
    return 0 if all(r.ok for r in results.values()) else 2


def _common(p: argparse.ArgumentParser, seed: bool = True) -> None:
    p.add_argument("--config", help="scenario JSON document")
    p.add_argument("--out", default=".", help="output directory (default: .)")
    p.add_argument(
        "--override",
        action="append",
        metavar="KEY=VALUE",
        help="dotted-path edit of the scenario document, repeatable",
    )
    if seed:
        p.add_argument("--seed", type=int, help="RNG seed (overrides the scenario's)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="fbin-link",
        description="Frequency-bin link modeling and time-tag analysis.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("predict", help="analytic visibility curves")
    _common(p)
    p.add_argument(
        "--sweep",
        action="append",
        metavar="NAME=START:STOP:NUM",
        help="delta_omega (rad/s) or jitter (ps)",
    )
    p.add_argument("--v0", type=float, default=DEFAULT_V0)
    p.add_argument("--delta-omega", type=float, default=DEMO_DELTA_OMEGA, help="rad/s")
    p.add_argument(
        "--jitter-ps", type=float, default=DEFAULT_JITTER_PS, help="system FWHM jitter"
    )
    p.add_argument(
        "--convention",
        choices=[c.value for c in JitterConvention],
        default=JitterConvention.FWHM.value,
    )
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("simulate", help="Monte Carlo tag stream")
    _common(p)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("analyze", help="fold, histogram and fit a tag file")
    p.add_argument("tags", help="tag CSV with its .meta.json sidecar")
    _common(p, seed=False)
    p.add_argument("--state", choices=STATES, help="only detections sent in this state")
    p.add_argument(
        "--bin-width-ps",
        type=Fraction,
        help="histogram bin width (default: tagger resolution)",
    )
    p.add_argument("--delta-omega", type=float, help="rad/s, overrides the metadata")
    p.add_argument("--min-events", type=int)
    p.set_defaults(handler=cmd_analyze)

    p = sub.add_parser("satellite", help="moving-platform phase and timing budget")
    _common(p, seed=False)
    p.add_argument("--trajectory", help="CSV with header t_s,range_m")
    p.add_argument("--velocity", type=float, default=6000.0, help="m/s, linear")
    p.add_argument("--range", type=float, default=0.0, help="m at t = 0, linear")
    p.add_argument("--duration", type=float, default=10.0, help="s, linear")
    p.add_argument("--samples", type=int, default=101)
    p.add_argument(
        "--delta-omega", type=float, help="rad/s (default: scenario or 2π·260 MHz)"
    )
    p.set_defaults(handler=cmd_satellite)

    p = sub.add_parser("demo", help="simulate and analyze both analyzer settings")
    _common(p)
    p.add_argument(
        "--duration", type=float, help="s per setting (default: scenario, 60 s)"
    )
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(handler=cmd_demo)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    logging.basicConfig(
        level=max(logging.WARNING - 10 * args.verbose, logging.DEBUG),
        format="%(levelname)s %(name)s: %(message)s",
    )
    handler: Callable[[argparse.Namespace, Run], int] = args.handler
    manifest = RunManifest(command=args.command)
    status = 1
    run: Optional[Run] = None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            run = Run(args.out, manifest)
            log.info("%s: writing to %s", args.command, os.path.abspath(args.out))
            status = handler(args, run)
        except ConfigError as e:
            print("configuration error:", file=sys.stderr)
            for line in e.diagnostics:
                print(f"  {line}", file=sys.stderr)
        except (UsageError, TagFileError, DomainError) as e:
            print(f"error: {e}", file=sys.stderr)
        except AnalysisError as e:
            print(f"analysis error: {e}", file=sys.stderr)
            status = 2
    for w in caught:
        text = warnings.formatwarning(w.message, w.category, w.filename, w.lineno)
        sys.stderr.write(text)
        manifest.warnings.append(str(w.message))
    if run is not None and status != 1:
        manifest.write(os.path.join(run.out, "manifest.json"))
    return status


if __name__ == "__main__":
    sys.exit(main())
