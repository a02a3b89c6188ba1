"""CLI entry point for ion-stylus.

Usage:
    ion-stylus <command> [--config run.json] [--out DIR] [--rays N] [--seed S]
                         [--resolution L] [--format json|csv] [-v] [--no-cache]

Commands: analyze, contour, solid-angle, mirror, compensate, sense,
proximity, table1. A plain-text summary goes to stdout; reports are written
to the output directory. Exit status: 0 ok, 2 bad configuration, 3 physics
failure (e.g. no trapping minimum), 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import polars as pl

from ion_stylus.analysis import analyze_trap, find_null, proximity_sweep
from ion_stylus.compensation import LineChargeBasis, actuator_basis, micromotion_scan, solve_compensation
from ion_stylus.config import RunConfig
from ion_stylus.errors import ConfigError, PhysicsError
from ion_stylus.model import MICRON
from ion_stylus.optics import (
    CollectionPath,
    MirrorSpec,
    accessible_solid_angle,
    cavity_coupling_efficiency,
    cooperativity_for_efficiency,
    dipole_collection_efficiency,
    hit_map,
    hole_for_fraction,
    mirror_geometry,
    mirror_solid_angle,
    mirror_solid_angle_raycast,
    pair_rate_boost,
    scene_from_geometry,
)
from ion_stylus.presets import TABLE1
from ion_stylus.pseudopotential import EffectivePotential, contour_map
from ion_stylus.sensing import OscillatorSpec, sensitivity_budget, sensitivity_table
from ion_stylus.solver import STRAY_ROLES, CombinedBasis, solve_basis, stray_field_basis

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PHYSICS = 3
EXIT_IO = 4

COHERENCE_TARGET = 0.9


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"Cannot serialise {type(obj).__name__}")


def write_json(path: Path, payload: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2, default=_jsonable) + "\n", encoding="utf-8")
    return path


def write_csv(path: Path, frame: pl.DataFrame) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.write_csv(path)
    return path


class Run:
    """One command invocation: resolved config plus output helpers."""

    def __init__(self, command: str, cfg: RunConfig):
        self.command = command
        self.cfg = cfg
        self.out_dir = Path(cfg.data["output"]["dir"])
        self.format = cfg.data["output"]["format"]

    def path(self, suffix: str, stem: str | None = None) -> Path:
        return self.out_dir / f"{stem or self.command}.{suffix}"

    def report(self, payload: dict, frame: pl.DataFrame | None = None) -> list[Path]:
        """Write the JSON report, or the frame as CSV when the format is csv."""
        if self.format == "csv" and frame is not None:
            return [write_csv(self.path("csv"), frame)]
        return [write_json(self.path("json"), {"command": self.command, "config": self.cfg.to_dict(), **payload})]

    def effective_potential(self, basis=None) -> EffectivePotential:
        if basis is None:
            basis = self.basis()
        return EffectivePotential(basis, self.cfg.drive(), self.cfg.ion())

    def basis(self):
        s = self.cfg.data["solver"]
        return solve_basis(self.cfg.geometry(), s["resolution"], use_cache=s["use_cache"])

    def hint(self):
        hint_um = self.cfg.data["analysis"]["hint_um"]
        if hint_um is None:
            return None
        if len(hint_um) != 3:
            raise ConfigError("analysis.hint_um must have 3 components")
        return np.asarray(hint_um, dtype=float) * MICRON


def cmd_analyze(run: Run) -> list[Path]:
    report = analyze_trap(run.effective_potential(), None, run.hint(), run.cfg.data["analysis"]["with_depth"])
    d = report.to_dict()
    print(f"null at {np.round(report.null_position / MICRON, 2).tolist()} um, h = {d['ion_height_um']} um")
    print(f"axial {d['axial_MHz']:.4f} MHz, radial {d['radial_low_MHz']:.4f} / {d['radial_high_MHz']:.4f} MHz")
    if d["trap_depth_meV"] is not None:
        print(f"depth {d['trap_depth_meV']:.2f} meV")
    frame = pl.DataFrame({
        "mode": [m.label for m in report.modes],
        "frequency_MHz": [m.frequency_hz / 1e6 for m in report.modes],
        "axis_x": [float(m.axis[0]) for m in report.modes],
        "axis_y": [float(m.axis[1]) for m in report.modes],
        "axis_z": [float(m.axis[2]) for m in report.modes],
        "mathieu_q": [report.mathieu.q[m.label] for m in report.modes],
        "mathieu_a": [report.mathieu.a[m.label] for m in report.modes],
    })
    return run.report({"report": d}, frame)


def cmd_contour(run: Run) -> list[Path]:
    c = run.cfg.data["contour"]
    ep = run.effective_potential()
    cmap = contour_map(ep, c["plane"], tuple(map(tuple, c["extent_um"])), tuple(c["shape"]),
                       c["isoline_step_eV"], None, c["offset_um"], c["max_level_eV"])
    null_um = find_null(ep, None, run.hint()) / MICRON
    i, j = {"xz": (0, 2), "yz": (1, 2), "xy": (0, 1)}[c["plane"]]
    closed = cmap.closed_around((null_um[i], null_um[j]))
    print(f"{len(cmap.isolines)} isolines, {len(closed)} closed around the minimum")
    payload = {"contour": cmap.to_dict(), "closed_around_minimum": len(closed),
               "minimum_um": null_um.tolist()}
    return run.report(payload, cmap.to_frame())


def _ion_height(run: Run) -> float:
    h = run.cfg.data["solid_angle"]["ion_height_um"]
    if h is not None:
        return h
    preset = run.cfg.preset_id
    if preset is not None:
        return TABLE1[preset]["observed_h_um"]
    g = run.cfg.geometry()
    return float(find_null(run.effective_potential(), None, run.hint())[2] / MICRON - g.cgnd_top_um)


def _solid_angles(scene, method: str, rays: int, seed: int) -> dict:
    out = {}
    if method in ("analytic", "both"):
        out["analytic"] = accessible_solid_angle(scene, "analytic").to_dict()
    if method in ("raycast", "both"):
        out["raycast"] = accessible_solid_angle(scene, "raycast", rays, seed).to_dict()
    return out


def cmd_solid_angle(run: Run) -> list[Path]:
    s, r = run.cfg.data["solid_angle"], run.cfg.data["raycast"]
    h = _ion_height(run)
    scene = scene_from_geometry(run.cfg.geometry(), h, exclude=s["exclude"])
    results = _solid_angles(scene, s["method"], r["rays"], r["seed"])
    for name, res in results.items():
        print(f"{name}: {res['fraction']:.4f} of 4pi (stderr {res['stderr']:.2g}) at h = {h:.1f} um")
    paths = run.report({"ion_height_um": h, "solid_angle": results})
    frame = hit_map(scene, *s["hit_map_bins"])
    paths.append(write_csv(run.path("csv", f"{run.command}-hitmap"), frame))
    return paths


def cmd_mirror(run: Run) -> list[Path]:
    m, r = run.cfg.data["mirror"], run.cfg.data["raycast"]
    ms = run.cfg.mirror()
    theta = mirror_geometry(ms)
    bare = MirrorSpec(ms.focal_length, ms.depth_to_f)
    payload = {
        "theta_rim_deg": math.degrees(theta),
        "cos_theta_rim": math.cos(theta),
        "rim_radius_um": ms.rim_radius / MICRON,
        "hole_half_angle_deg": math.degrees(ms.hole_half_angle),
        "hole_radius_um": ms.hole_radius / MICRON,
        "intercepted_fraction": mirror_solid_angle(ms),
        "intercepted_fraction_no_hole": mirror_solid_angle(bare),
        "intercepted_fraction_raycast": mirror_solid_angle_raycast(ms, r["rays"], r["seed"]).to_dict(),
        "dipole_efficiency": dipole_collection_efficiency(ms),
        "cavity_efficiency": cavity_coupling_efficiency(m["cooperativity"]),
        "cooperativity_for_90pct": cooperativity_for_efficiency(COHERENCE_TARGET),
    }
    if m["target_fraction"] is not None:
        hole = hole_for_fraction(ms.depth_to_f, m["target_fraction"])
        payload["hole_for_target_deg"] = math.degrees(hole)
        payload["hole_for_target_radius_um"] = MirrorSpec(ms.focal_length, ms.depth_to_f, hole).hole_radius / MICRON
    baseline, coupling = run.cfg.collection_paths()
    payload["pair_rate_boost"] = pair_rate_boost(baseline, CollectionPath(payload["dipole_efficiency"], coupling))
    print(f"theta_rim {payload['theta_rim_deg']:.2f} deg, intercepted {payload['intercepted_fraction']:.4f}, "
          f"dipole {payload['dipole_efficiency']:.4f}")
    print(f"cavity eta {payload['cavity_efficiency']:.3f}, pair-rate boost {payload['pair_rate_boost']:.3g}")
    return run.report(payload)


def _merge(*voltages) -> dict[str, float]:
    out: dict[str, float] = {}
    for v in voltages:
        for k, x in v.items():
            out[str(k)] = out.get(str(k), 0.0) + float(x)
    return out


def cmd_compensate(run: Run) -> list[Path]:
    c = run.cfg.data["compensation"]
    g = run.cfg.geometry()
    bem = run.basis()
    ep = run.effective_potential(CombinedBasis(bem, LineChargeBasis(g), stray_field_basis()))
    dc = dict(ep.drive.dc_voltages)
    stray = dict(zip(STRAY_ROLES, map(float, c["stray_field_V_per_m"])))

    rf_null = find_null(ep, {}, run.hint())
    ab = actuator_basis(g, rf_null, basis=bem)
    e_stray = ep.basis.superpose(_merge(dc, stray), rf_null[None, :], order=1)[1][0]
    sol = solve_compensation(ab, e_stray)

    u = ep.drive.rf_amplitude
    u_list = c["rf_amplitudes_V"] or [0.5 * u, 0.75 * u, u]
    before = micromotion_scan(ep, _merge(dc, stray), u_list, c["threshold_um"])
    after = micromotion_scan(ep, _merge(dc, stray, sol.voltages), u_list, c["threshold_um"])
    frame = pl.concat([
        before.frame.with_columns(pl.lit("uncompensated").alias("state")),
        after.frame.with_columns(pl.lit("compensated").alias("state")),
    ])
    print(f"voltages {', '.join(f'{k}={v:.4g} V' for k, v in sol.voltages.items())}")
    print(f"residual {sol.residual_norm:.3g} V/m; "
          f"spread {before.max_pairwise_um:.3g} -> {after.max_pairwise_um:.3g} um")
    payload = {
        "solution": sol.to_dict(),
        "rf_null_um": (rf_null / MICRON).tolist(),
        "spread_uncompensated_um": before.max_pairwise_um,
        "spread_compensated_um": after.max_pairwise_um,
        "compensated": after.compensated,
    }
    paths = run.report(payload)
    paths.append(write_csv(run.path("csv", f"{run.command}-scan"), frame))
    return paths


def cmd_sense(run: Run) -> list[Path]:
    s = run.cfg.data["sensing"]
    os_ = run.cfg.oscillator()
    budget = sensitivity_budget(os_, run.cfg.ramsey(), s["averaging_times_s"])
    cryo = OscillatorSpec(os_.ion, os_.mode_frequency, 1.0)
    payload = {"budget": budget.to_dict(),
               "cryogenic_improvement": budget.force / sensitivity_budget(cryo, run.cfg.ramsey()).force}
    print(f"z0 {budget.z0 * 1e9:.3f} nm, force {budget.force * 1e24:.3f} yN/rtHz, "
          f"E-field {budget.efield * 1e6:.3f} uV/m/rtHz")
    for tau, b in budget.bfield.items():
        print(f"deltaB({tau:g} s) = {b:.3g} T")
    return run.report(payload, sensitivity_table(os_.ion))


def cmd_proximity(run: Run) -> list[Path]:
    p = run.cfg.data["proximity"]
    sweep = proximity_sweep(run.effective_potential(), None, p["heights_um"], run.cfg.data["solver"]["resolution"],
                            p["plane_radius_um"], p["min_depth_meV"], p["max_null_shift"])
    print(f"h = {sweep.ion_height_um} um, d_crit = {sweep.d_crit_um} um, d_crit/h = {sweep.d_crit_over_h}")
    payload = {"ion_height_um": sweep.ion_height_um, "d_crit_um": sweep.d_crit_um,
               "d_crit_over_h": sweep.d_crit_over_h, "sweep": sweep.frame.to_dicts()}
    return run.report(payload, sweep.frame)


def _deviation(published: float, simulated: float | None) -> float | None:
    if simulated is None or published == 0:
        return None
    return 100.0 * (simulated - published) / published


def table1_frame(run: Run) -> pl.DataFrame:
    """Simulated against published values for traps 1-3."""
    r = run.cfg.data["raycast"]
    rows = []
    for trap, ref in TABLE1.items():
        cfg = run.cfg.override("geometry", "preset", trap)
        cfg = cfg.override("drive", "rf_amplitude_V", ref["rf_voltage_V"])
        cfg = cfg.override("drive", "rf_frequency_Hz", ref["rf_frequency_MHz"] * 1e6)
        sub = Run(run.command, cfg)
        report = analyze_trap(sub.effective_potential())
        scene = scene_from_geometry(cfg.geometry(), ref["observed_h_um"], exclude=cfg.data["solid_angle"]["exclude"])
        analytic = accessible_solid_angle(scene, "analytic").fraction
        raycast = accessible_solid_angle(scene, "raycast", r["rays"], r["seed"]).fraction
        radial = sorted([ref["radial_AD_MHz"], ref["radial_BC_MHz"]])
        pairs = [
            ("axial_MHz", ref["axial_MHz"], report.mode("axial").frequency_hz / 1e6),
            ("radial_low_MHz", radial[0], report.mode("radial_low").frequency_hz / 1e6),
            ("radial_high_MHz", radial[1], report.mode("radial_high").frequency_hz / 1e6),
            ("trap_depth_meV", ref["trap_depth_meV"], report.depth.depth_meV if report.depth else None),
            ("ion_height_um", ref["observed_h_um"], report.ion_height_um),
            ("solid_angle_analytic", ref["solid_angle_fraction"], analytic),
            ("solid_angle_raycast", ref["solid_angle_fraction"], raycast),
        ]
        for quantity, published, simulated in pairs:
            rows.append({"trap": trap, "quantity": quantity, "published": float(published),
                         "simulated": None if simulated is None else float(simulated),
                         "deviation_pct": _deviation(published, simulated)})
    return pl.DataFrame(rows, schema={"trap": pl.Int64, "quantity": pl.Utf8, "published": pl.Float64,
                                      "simulated": pl.Float64, "deviation_pct": pl.Float64})


def cmd_table1(run: Run) -> list[Path]:
    frame = table1_frame(run)
    for row in frame.iter_rows(named=True):
        sim = "n/a" if row["simulated"] is None else f"{row['simulated']:.4g}"
        dev = "" if row["deviation_pct"] is None else f" ({row['deviation_pct']:+.1f}%)"
        print(f"trap {row['trap']} {row['quantity']:<22} published {row['published']:<8.4g} simulated {sim}{dev}")
    return run.report({"table1": frame.to_dicts()}, frame)


COMMANDS: dict[str, tuple[Callable[[Run], list[Path]], str]] = {
    "analyze": (cmd_analyze, "Locate the trap and report modes, Mathieu parameters and depth"),
    "contour": (cmd_contour, "Total-energy isolines on a plane"),
    "solid-angle": (cmd_solid_angle, "Accessible solid angle and hit map"),
    "mirror": (cmd_mirror, "Parabolic mirror and cavity collection figures"),
    "compensate": (cmd_compensate, "Stray-field compensation and micromotion scan"),
    "sense": (cmd_sense, "Force, electric and magnetic field sensitivity budget"),
    "proximity": (cmd_proximity, "Lower a grounded plane towards the ion"),
    "table1": (cmd_table1, "Simulate traps 1-3 and compare with published values"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--out", help="Output directory")
    common.add_argument("--rays", type=int, help="Ray count for Monte Carlo solid angles")
    common.add_argument("--seed", type=int, help="Ray-casting seed")
    common.add_argument("--resolution", type=int, help="Boundary-element refinement level")
    common.add_argument("--format", choices=("json", "csv"), help="Report format")
    common.add_argument("--no-cache", action="store_true", help="Do not read or write the basis cache")
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")

    parser = argparse.ArgumentParser(prog="ion-stylus", description="Stylus ion-trap simulation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig.from_dict({})
    overrides = [
        ("raycast", "rays", args.rays),
        ("raycast", "seed", args.seed),
        ("solver", "resolution", args.resolution),
        ("output", "format", args.format),
        ("output", "dir", args.out),
        ("solver", "use_cache", False if args.no_cache else None),
    ]
    for section, key, value in overrides:
        if value is not None:
            cfg = cfg.override(section, key, value)
    return cfg


def run(argv: Sequence[str] | None = None) -> int:
    """Run one command and return its exit status."""
    args = build_parser().parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")

    try:
        job = Run(args.command, resolve_config(args))
        for path in COMMANDS[args.command][0](job):
            print(f"wrote {path}")
    except PhysicsError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PHYSICS
    except (ConfigError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
