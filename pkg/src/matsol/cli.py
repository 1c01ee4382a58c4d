"""Command-line front end.

    matsol <subcommand> [--scenario FILE | --preset NAME]
                        [--path det|fast] [--h STEP] [--order 2|4|6]
                        [--out DIR] [--shared-scale]

Subcommands: evaluate (grid run -> CSV + figure + report), verify
(residual certification -> report, exit 2 on violated bounds), diagnose
(functional candidates, energy partition, peak tracks), render (CSV +
per-entry PPM heatmaps + plot script + figure), selftest (built-in
invariant battery, exit 2 on failure).

Exit codes: 0 success, 1 invalid input (usage, parse, schema or
validation errors), 2 violated acceptance bound in verify/selftest,
3 I/O failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from typing import Callable, Dict, List, Optional

import numpy as np

from . import __version__
from . import diagnostics as diag
from . import export, plotting, report, scenario_io, verify
from .evaluate import evaluate_grid
from .spectral import (
    OperatorData,
    Scenario,
    ScenarioValidationError,
    build_operator_data,
)
from .verify import QuadratureSpec, StencilSpec, WindowError

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_THRESHOLD = 2
EXIT_IO = 3

MKDV_GATE = 1e-5
CHAIN_GATE = 1e-4
PARTITION_GATE = 1e-10
MIN_PEAK_HEIGHT = 0.25

Emit = Callable[[str], None]


class CliInputError(ValueError):
    """Bad command line or bad scenario input (exit 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliInputError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="matsol", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="subcommand", metavar="subcommand")
    for name, helptext in (
        ("evaluate", "evaluate the field on the scenario grid"),
        ("verify", "certify PDE residuals along the Miura chain"),
        ("diagnose", "conserved candidates, energy partition, peaks"),
        ("render", "CSV + PPM heatmaps + plot script"),
        ("selftest", "run the built-in invariant battery"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--scenario", metavar="FILE",
                       help="scenario document to run")
        p.add_argument("--preset", metavar="NAME",
                       help="named preset: " + "|".join(
                           scenario_io.PRESET_NAMES))
        p.add_argument("--path", choices=("det", "fast"),
                       help="evaluation path (default: scenario option "
                            "or fast)")
        p.add_argument("--h", type=float, default=1e-2, metavar="STEP",
                       help="finite-difference step (verify)")
        p.add_argument("--order", type=int, choices=(2, 4, 6), default=4,
                       help="finite-difference order (verify)")
        p.add_argument("--out", metavar="DIR", default="matsol-out",
                       help="output directory (default: matsol-out)")
        p.add_argument("--shared-scale", action="store_true",
                       help="one color scale across entries (render)")
    return parser


def _load_scenario(args) -> Optional[Scenario]:
    if args.scenario and args.preset:
        raise CliInputError("--scenario and --preset are exclusive")
    if args.subcommand == "selftest":
        if args.scenario or args.preset:
            raise CliInputError("selftest takes no scenario")
        return None
    if args.preset:
        return scenario_io.preset(args.preset)
    if args.scenario:
        try:
            with open(args.scenario, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as e:
            raise IOError(f"cannot read {args.scenario}: {e}") from None
        return scenario_io.parse_scenario(text)
    raise CliInputError(
        f"{args.subcommand} needs --scenario FILE or --preset NAME")


def _scenario_echo(s: Scenario, path: str) -> dict:
    return {
        "label": s.label,
        "d": s.d,
        "n_solitons": s.n_solitons,
        "eigenvalues": [[complex(e.k).real, complex(e.k).imag]
                        for e in s.entries],
        "grid": {"x": [s.grid.x_min, s.grid.x_max, s.grid.nx],
                 "t": [s.grid.t_min, s.grid.t_max, s.grid.nt]},
        "convention": {"imaginary_weights": s.imaginary_weights},
        "path": path,
        "warnings": list(s.warnings),
    }


def _field_summary(field) -> dict:
    total = field.grid.nx * field.grid.nt
    finite = np.nan_to_num(field.values)
    return {
        "points": total,
        "masked": field.masked_count,
        "masked_fraction": field.masked_count / total,
        "sup_norm": float(np.abs(finite).max()),
    }


def _emit_report(rep: dict, out_dir: str, emit: Emit,
                 title: str) -> None:
    jname, tname = report.write_report(rep, out_dir, title=title)
    emit(f"report: {os.path.join(out_dir, jname)}, "
         f"{os.path.join(out_dir, tname)}")


def _cmd_evaluate(s: Scenario, od: OperatorData, path: str, out: str,
                  shared: bool, emit: Emit, render: bool) -> int:
    timings: Dict[str, float] = {}
    t0 = time.perf_counter()
    field = evaluate_grid(od, s.grid, path=path)
    timings["evaluate_s"] = time.perf_counter() - t0

    stem = s.label or "field"
    outputs: Dict[str, object] = {}
    t0 = time.perf_counter()
    csv_name = f"{stem}.csv"
    export.write_field_csv(field, os.path.join(out, csv_name))
    outputs["csv"] = csv_name
    fig_name = f"{stem}.png"
    plotting.field_figure(field, os.path.join(out, fig_name),
                          shared_scale=shared, title=stem)
    outputs["figure"] = fig_name
    if render:
        ppm_meta = export.write_field_ppms(field, out, stem,
                                           shared_scale=shared)
        outputs["ppm"] = sorted(ppm_meta)
        outputs["ppm_scales"] = ppm_meta
        outputs["plot_script"] = export.write_plot_script(
            csv_name, field.d, out, stem)
    timings["export_s"] = time.perf_counter() - t0

    summary = _field_summary(field)
    rep = {
        "subcommand": "render" if render else "evaluate",
        "version": __version__,
        "scenario": _scenario_echo(s, path),
        "field": summary,
        "outputs": outputs,
        "timings": timings,
    }
    emit(f"evaluated {summary['points']} points "
         f"({summary['masked']} masked) on path '{path}'")
    _emit_report(rep, out, emit, title=f"{stem} field run")
    return EXIT_OK


def _draw_points(od: OperatorData, s: Scenario, spec: StencilSpec,
                 n: int, envelope: float, seed: int):
    rng = np.random.default_rng(seed)
    g = s.grid
    pad = max(10 * spec.h, 0.05 * (g.x_max - g.x_min))
    x_range = (g.x_min + pad, g.x_max - pad)
    t_range = (g.t_min + pad, g.t_max - pad)
    if g.x_max == g.x_min:
        x_range = (g.x_min, g.x_max)
    if g.t_max == g.t_min:
        t_range = (g.t_min, g.t_max)
    for count in (n, max(2, n // 2), 2):
        try:
            return verify.draw_unmasked_points(
                od, rng, count, x_range, t_range, spec,
                envelope=envelope)
        except WindowError:
            continue
    raise WindowError("no unmasked residual sites found on this grid")


def _cmd_verify(s: Scenario, od: OperatorData, path: str, h: float,
                order: int, out: str, emit: Emit) -> int:
    spec = StencilSpec(h=h, order=order, richardson=True)
    timings: Dict[str, float] = {}
    residuals: Dict[str, dict] = {}
    gates: List[dict] = []

    t0 = time.perf_counter()
    pts = _draw_points(od, s, spec, 12, envelope=4.0, seed=1001)
    mk = verify.residual_stats(
        lambda p, sp: verify.mkdv_residual(od, p, sp), pts, spec, "mkdv")
    residuals["mkdv"] = mk.to_dict()
    gates.append({"name": "mkdv sup <= 1e-5", "value": mk.sup,
                  "bound": MKDV_GATE, "ok": mk.sup <= MKDV_GATE})
    timings["mkdv_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    conv = verify.convergence_study(
        lambda p, sp: verify.mkdv_residual(od, p, sp), pts[:3],
        [0.16, 0.08, 0.04],
        StencilSpec(h=h, order=order, richardson=False), "mkdv")
    residuals["mkdv_convergence"] = conv.to_dict()
    timings["convergence_s"] = time.perf_counter() - t0

    probe_dict: Optional[dict] = None
    if s.d == 1:
        t0 = time.perf_counter()
        kdv_pts = _draw_points(od, s, spec, 4, envelope=8.0, seed=1002)
        probe = verify.miura_sign_probe(od, kdv_pts[:2], spec)
        probe_dict = {
            "residual_plus": probe.residual_plus,
            "residual_minus": probe.residual_minus,
            "selected": probe.selected,
        }
        u = verify.miura_sampler(od, spec, sign=probe.selected)
        kd = verify.residual_stats(
            lambda p, sp: verify.kdv_residual(u, p, sp), kdv_pts, spec,
            "kdv")
        residuals["kdv"] = kd.to_dict()
        gates.append({"name": "kdv sup <= 1e-4", "value": kd.sup,
                      "bound": CHAIN_GATE, "ok": kd.sup <= CHAIN_GATE})
        timings["kdv_s"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        quad = QuadratureSpec()
        x_cut = verify.find_x_cut(
            od, [p[1] for p in kdv_pts[:2]], s.grid.x_min - 5.0, spec,
            sign=probe.selected)
        w = verify.potential_sampler(od, x_cut, quad, spec,
                                     sign=probe.selected)
        pk = verify.residual_stats(
            lambda p, sp: verify.pkdv_residual(w, p, sp, u_sampler=u),
            kdv_pts[:2], spec, "pkdv")
        pk_dict = pk.to_dict()
        pk_dict["x_cut"] = x_cut
        residuals["pkdv"] = pk_dict
        gates.append({"name": "pkdv sup <= 1e-4", "value": pk.sup,
                      "bound": CHAIN_GATE, "ok": pk.sup <= CHAIN_GATE})
        timings["pkdv_s"] = time.perf_counter() - t0
    else:
        residuals["kdv"] = {"skipped": "Miura chain gated on scalar "
                                       "scenarios (d=1)"}
        residuals["pkdv"] = residuals["kdv"]

    fig_name = f"{s.label or 'scenario'}_convergence.png"
    plotting.convergence_figure(
        {"mkdv": [(e["h"], e["sup"])
                  for e in residuals["mkdv_convergence"]["sups_by_h"]]},
        os.path.join(out, fig_name), title="residual convergence")

    rep = {
        "subcommand": "verify",
        "version": __version__,
        "scenario": _scenario_echo(s, path),
        "stencil": {"h": h, "order": order, "richardson": True,
                    "effective_order": spec.effective_order},
        "miura_probe": probe_dict,
        "residuals": residuals,
        "gates": gates,
        "outputs": {"figure": fig_name},
        "timings": timings,
    }
    for gate in gates:
        emit(f"[{'PASS' if gate['ok'] else 'FAIL'}] {gate['name']}: "
             f"{gate['value']:.3e}")
    _emit_report(rep, out, emit, title=f"{s.label or 'scenario'} "
                                       f"verification")
    return EXIT_OK if all(g["ok"] for g in gates) else EXIT_THRESHOLD


def _series_table(out: str, stem: str,
                  series: List[diag.ConservedSeries]) -> str:
    name = f"{stem}_functionals.csv"
    cols = ["t"]
    arrays = [series[0].t_values]
    for s in series:
        vals = np.asarray(s.values)
        cols.append(f"{s.tag}_re")
        arrays.append(vals.real)
        if np.iscomplexobj(vals):
            cols.append(f"{s.tag}_im")
            arrays.append(vals.imag)
    lines = [",".join(cols)]
    for row in zip(*arrays):
        lines.append(",".join(format(v, ".17g") for v in row))
    with open(os.path.join(out, name), "w", encoding="ascii",
              newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return name


def _cmd_diagnose(s: Scenario, od: OperatorData, path: str, out: str,
                  emit: Emit) -> int:
    timings: Dict[str, float] = {}
    t0 = time.perf_counter()
    field = evaluate_grid(od, s.grid, path=path)
    timings["evaluate_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    series: List[diag.ConservedSeries] = []
    func_report = {}
    for tag in diag.FUNCTIONAL_TAGS:
        try:
            cs = diag.functional_series(field, tag)
            series.append(cs)
            func_report[tag] = cs.to_dict()
            emit(f"functional {tag}: drift {cs.drift:.3e}")
        except (diag.MaskedLineError, diag.WindowTooSmallError) as e:
            func_report[tag] = {"unavailable": str(e)}
            emit(f"functional {tag}: unavailable ({e})")

    part_report: dict
    partition = None
    partition_ok = True
    try:
        partition = diag.energy_partition(field)
        part_report = partition.to_dict()
        partition_ok = partition.sum_consistency <= PARTITION_GATE
        emit(f"energy partition: sum consistency "
             f"{partition.sum_consistency:.3e}")
    except (diag.MaskedLineError, diag.WindowTooSmallError) as e:
        part_report = {"unavailable": str(e)}
        emit(f"energy partition: unavailable ({e})")

    track = diag.track_peaks(field, MIN_PEAK_HEIGHT)
    emit(f"peak tracks: pre {len(track.pre_solitons)}, "
         f"post {len(track.post_solitons)} "
         f"(min height {MIN_PEAK_HEIGHT})")
    timings["diagnostics_s"] = time.perf_counter() - t0

    stem = s.label or "scenario"
    outputs: Dict[str, object] = {}
    if series:
        outputs["functionals_csv"] = _series_table(out, stem, series)
    fig = f"{stem}_diagnostics.png"
    plotting.diagnostics_figure(series, partition, track,
                                os.path.join(out, fig), title=stem)
    outputs["figure"] = fig

    rep = {
        "subcommand": "diagnose",
        "version": __version__,
        "scenario": _scenario_echo(s, path),
        "field": _field_summary(field),
        "functionals": func_report,
        "energy_partition": part_report,
        "peaks": track.to_dict(),
        "timings": timings,
        "outputs": outputs,
    }
    _emit_report(rep, out, emit, title=f"{stem} diagnostics")
    return EXIT_OK if partition_ok else EXIT_THRESHOLD


def _cmd_selftest(out: str, emit: Emit) -> int:
    from .selftest import run_selftest

    results = run_selftest(emit=emit)
    failures = [r for r in results if not r.ok]
    rep = {
        "subcommand": "selftest",
        "version": __version__,
        "checks": [r.to_dict() for r in results],
        "passed": len(results) - len(failures),
        "failed": len(failures),
    }
    _emit_report(rep, out, emit, title="selftest")
    return EXIT_THRESHOLD if failures else EXIT_OK


def run(subcommand: str, scenario: Optional[Scenario] = None,
        path: Optional[str] = None, h: float = 1e-2, order: int = 4,
        out_dir: str = "matsol-out", shared_scale: bool = False,
        emit: Emit = print) -> int:
    """Programmatic equivalent of the CLI; returns the exit code."""
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as e:
        emit(f"error: cannot create output directory: {e}")
        return EXIT_IO

    try:
        if subcommand == "selftest":
            return _cmd_selftest(out_dir, emit)
        if scenario is None:
            raise CliInputError(f"{subcommand} needs a scenario")
        eff_path = path or scenario.path_hint or "fast"
        od = build_operator_data(scenario)
        if subcommand == "evaluate":
            return _cmd_evaluate(scenario, od, eff_path, out_dir,
                                 shared_scale, emit, render=False)
        if subcommand == "render":
            return _cmd_evaluate(scenario, od, eff_path, out_dir,
                                 shared_scale, emit, render=True)
        if subcommand == "verify":
            return _cmd_verify(scenario, od, eff_path, h, order,
                               out_dir, emit)
        if subcommand == "diagnose":
            return _cmd_diagnose(scenario, od, eff_path, out_dir, emit)
        raise CliInputError(f"unknown subcommand {subcommand!r}")
    except (CliInputError, ScenarioValidationError, WindowError,
            ValueError) as e:
        emit(f"error: {e}")
        return EXIT_INVALID
    except OSError as e:
        emit(f"error: I/O failure: {e}")
        return EXIT_IO


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.subcommand:
            raise CliInputError("a subcommand is required "
                                "(evaluate|verify|diagnose|render|"
                                "selftest)")
        scenario = _load_scenario(args)
    except ValueError as e:
        # usage, syntax, schema and validation failures alike
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO

    return run(
        args.subcommand, scenario, path=args.path, h=args.h,
        order=args.order, out_dir=args.out,
        shared_scale=args.shared_scale,
    )


if __name__ == "__main__":
    sys.exit(main())
