"""Command-line front end.

    slotcma <subcommand> [--config PATH] [--out DIR] [--freq-ghz F]

Subcommands: mesh, modes, sweep, nearfield, sar, plan, reproduce.  Every run
writes its exports plus ``manifest.json`` (input hash, versions, timings and
output checksums) into the output directory.
"""

from __future__ import annotations

import argparse
from concurrent.futures import ThreadPoolExecutor
import csv
import hashlib
import json
import logging
from pathlib import Path
import platform
import sys
import time

import numpy as np
import scipy

from . import __version__
from .cma import mode_current, track_modes, write_current_csv, write_modes_csv
from .config import RunConfig, default_config, dump_config, ensure_output_dir, load_config, preset_text
from .errors import ConfigError, SlotCmaError
from .fields import near_field, observation_line, observation_plane, write_field_csv
from .mesh import write_mesh
from .pipeline import analyze, drive, mesh_plate
from .planner import EvaluationOptions, evaluate_plan, plan, write_report
from .sar import sar_from_field, sar_ratio, sar_summary, tissue_plane, tissue_preset, write_sar_csv, write_sar_report
from .scenarios import reproduce_paper_scenarios

log = logging.getLogger("slotcma")

SUBCOMMANDS = ("mesh", "modes", "sweep", "nearfield", "sar", "plan", "reproduce")


def _ftag(f):
    return f"{f / 1e6:.6g}MHz"


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


class Run:
    """Output directory, timings and produced files of one invocation."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = ensure_output_dir(cfg.output_dir)
        self.timings = {}
        self.outputs = []

    def path(self, name):
        p = self.out / name
        self.outputs.append(p)
        return p

    def timed(self, key, fn, *args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        self.timings[key] = time.perf_counter() - t0
        return res


def _analyses(run: Run, plate=None):
    """One Analysis per configured frequency, all on the same mesh."""
    cfg = run.cfg
    plate = plate or cfg.plate
    plate, mesh, basis = run.timed("mesh_s", mesh_plate, plate, cfg.mesh_frequency)

    def one(f):
        return analyze(plate, f, num_modes=cfg.num_modes, mesh=mesh, basis=basis)

    t0 = time.perf_counter()
    if cfg.workers > 1 and len(cfg.frequencies) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            res = list(pool.map(one, cfg.frequencies))
    else:
        res = [one(f) for f in cfg.frequencies]
    run.timings["solve_s"] = time.perf_counter() - t0
    return res


def _export_modes(run: Run, analyses):
    write_modes_csv([a.modes for a in analyses], run.path("modes.csv"))
    normalize = run.cfg.current_normalization == "max"
    for a in analyses:
        for m in range(min(run.cfg.export_modes, len(a.modes))):
            cur = mode_current(a.modes, m, a.mesh, a.basis, normalize=normalize)
            write_current_csv(cur, a.mesh, run.path(f"mode{m + 1}_current_{_ftag(a.frequency)}.csv"))


def cmd_mesh(run: Run):
    cfg = run.cfg
    plate, mesh, basis = run.timed("mesh_s", mesh_plate, cfg.plate, cfg.mesh_frequency)
    write_mesh(mesh, run.path("mesh.txt"))
    with open(run.path("mesh_summary.json"), "w") as fh:
        json.dump({"triangles": mesh.num_triangles, "vertices": int(len(mesh.vertices)),
                   "unknowns": len(basis), "target_edge_m": plate.target_edge,
                   "fingerprint": mesh.fingerprint}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


def cmd_modes(run: Run):
    _export_modes(run, _analyses(run))
    return 0


def cmd_sweep(run: Run):
    cfg = run.cfg
    if len(cfg.frequencies) < 2:
        raise ConfigError("sweep needs at least two frequencies (use frequency.start/stop/points)")
    analyses = _analyses(run)
    write_modes_csv([a.modes for a in analyses], run.path("modes.csv"))
    trajectories = run.timed("track_s", track_modes, [a.modes for a in analyses])
    with open(run.path("trajectories.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trajectory", "f_Hz", "mode_id", "lambda"])
        for t_id, t in enumerate(trajectories):
            for f, m, lam in zip(t.frequencies, t.mode_ids, t.eigenvalues):
                w.writerow([t_id, f"{f:.12e}", m, f"{lam:.12e}"])
    summary = [{"trajectory": t_id, "start_mode": t.mode_ids[0], "start_hz": t.frequencies[0],
                "end_hz": t.frequencies[-1], "broken": t.broken, "resonances_hz": t.resonances()}
               for t_id, t in enumerate(trajectories)]
    with open(run.path("resonances.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


def cmd_nearfield(run: Run):
    cfg = run.cfg
    o = cfg.observation
    p = cfg.plate
    for a in _analyses(run):
        tag = _ftag(a.frequency)
        lines = {axis: observation_line(axis, o.line_offset, o.line_height, extent, o.line_samples, p)
                 for axis, extent in (("x", p.length_x), ("y", p.width_y))}
        plane = observation_plane(o.plane_height, *o.plane_samples, p)
        normalize = cfg.current_normalization == "max"
        for m in range(min(cfg.export_modes, len(a.modes))):
            cur = mode_current(a.modes, m, a.mesh, a.basis, normalize=normalize)
            for axis, obs in lines.items():
                write_field_csv(near_field(cur, a.mesh, obs, a.frequency),
                                run.path(f"mode{m + 1}_nearfield_{axis}_{tag}.csv"))
            write_field_csv(near_field(cur, a.mesh, plane, a.frequency),
                            run.path(f"mode{m + 1}_nearfield_plane_{tag}.csv"))
        driven = drive(a, cfg.feed, cfg.excitation_normalization)
        for axis, obs in lines.items():
            write_field_csv(near_field(driven.current, a.mesh, obs, a.frequency),
                            run.path(f"driven_nearfield_{axis}_{tag}.csv"))
        write_field_csv(near_field(driven.current, a.mesh, plane, a.frequency),
                        run.path(f"driven_nearfield_plane_{tag}.csv"))
    return 0


def _driven_sar(run: Run, analyses, label):
    cfg = run.cfg
    t = cfg.tissue
    out = {}
    summaries = []
    for a in analyses:
        lo, hi = a.bbox
        # the tissue plane is placed from the outer plate outline
        bbox = ((-a.plate.length_x / 2, -a.plate.width_y / 2, lo[2]),
                (a.plate.length_x / 2, a.plate.width_y / 2, hi[2]))
        plane = tissue_plane(bbox, t.separation, *t.size, *t.samples)
        driven = drive(a, cfg.feed, cfg.excitation_normalization)
        field = near_field(driven.current, a.mesh, plane, a.frequency)
        for name in t.names:
            res = sar_from_field(field, tissue_preset(name), plane.shape)
            out[a.frequency, name] = res
            write_sar_csv(res, run.path(f"{label}_{name}_sar_{_ftag(a.frequency)}.csv"))
            summaries.append(sar_summary(res, geometry=label, frequency_hz=a.frequency,
                                         normalization=cfg.excitation_normalization,
                                         input_power_w=driven.input_power))
    return out, summaries


def cmd_sar(run: Run):
    cfg = run.cfg
    results, summaries = _driven_sar(run, _analyses(run), "slotted" if cfg.plate.slot else "reference")
    ratios = {}
    if cfg.plate.slot is not None:
        ref, ref_summaries = _driven_sar(run, _analyses(run, cfg.plate.with_slot(None)), "reference")
        summaries = ref_summaries + summaries
        for (f, name), res in results.items():
            ratios[f"{name}@{_ftag(f)}"] = {"reference/slotted": sar_ratio(ref[f, name], res)}
    write_sar_report(summaries, ratios, run.path("sar_report.json"))
    return 0


def cmd_plan(run: Run):
    cfg = run.cfg
    pc = cfg.planner
    reference = cfg.plate.with_slot(None)
    f = cfg.frequencies[0]
    a = run.timed("reference_s", analyze, reference, f, mesh_frequency=cfg.mesh_frequency,
                  num_modes=cfg.num_modes)
    out = run.timed("plan_s", plan, a.modes, a.mesh, a.basis, a.plate, pc.desired_mode, pc.interferers,
                    cfg.feed.volts, pc.weighting, pc.slot_length, pc.slot_width)
    o, t = cfg.observation, cfg.tissue
    opts = EvaluationOptions(o.line_offset, o.line_height, o.line_samples, t.names[0], t.separation,
                             t.size, t.samples, cfg.excitation_normalization, cfg.mesh_frequency,
                             cfg.workers)
    evaluation = run.timed("evaluate_s", evaluate_plan, reference, out.slot, f, cfg.feed,
                           pc.target_mode, opts)
    write_report(out, evaluation, run.path("plan_report.json"))
    write_current_csv(out.j_und, a.mesh, run.path("j_und_current.csv"))
    return 0


def cmd_reproduce(run: Run):
    status = run.timed("reproduce_s", reproduce_paper_scenarios, run.out, run.cfg)
    run.outputs.extend(status.outputs)
    for scenario, checks in status.checks.items():
        for c in checks:
            print(f"{'PASS' if c.passed else 'FAIL'}  {scenario}: {c.name} = {c.value:.6g} ({c.bound})")
    if not status.passed:
        for scenario, names in status.failures().items():
            print(f"scenario {scenario} failed: {', '.join(names)}", file=sys.stderr)
        return 1
    return 0


COMMANDS = {"mesh": cmd_mesh, "modes": cmd_modes, "sweep": cmd_sweep, "nearfield": cmd_nearfield,
            "sar": cmd_sar, "plan": cmd_plan, "reproduce": cmd_reproduce}


def write_manifest(run: Run, subcommand, config_text, config_path, status):
    outputs = sorted({Path(p) for p in run.outputs})
    doc = {
        "subcommand": subcommand,
        "status": status,
        "config": {"path": config_path, "sha256": hashlib.sha256(config_text.encode()).hexdigest(),
                   "resolved": dump_config(run.cfg)},
        "versions": {"slotcma": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "timings_s": run.timings,
        "outputs": [{"file": str(p.relative_to(run.out)), "sha256": _sha256(p)} for p in outputs if p.exists()],
    }
    with open(run.out / "manifest.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _origin(exc):
    """Module in which ``exc`` was raised."""
    tb = exc.__traceback__
    while tb.tb_next is not None:
        tb = tb.tb_next
    return tb.tb_frame.f_globals.get("__name__", "?")


def build_parser():
    parser = argparse.ArgumentParser(prog="slotcma", description="Characteristic-mode slot planning for PEC plates.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="subcommand", metavar="{" + ",".join(SUBCOMMANDS) + "}")
    sub.required = True
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML run configuration (default: built-in preset)")
        p.add_argument("--out", help="output directory (overrides output.dir)")
        p.add_argument("--freq-ghz", type=float, help="analyse this single frequency instead")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config:
            config_path = args.config
            try:
                config_text = Path(config_path).read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config {config_path}: {exc}") from None
            cfg = load_config(config_path)
        else:
            config_path, config_text = "<preset>", preset_text()
            cfg = default_config()
        if args.freq_ghz is not None and not args.freq_ghz > 0:
            raise ConfigError(f"--freq-ghz must be positive, got {args.freq_ghz}")
        cfg = cfg.with_overrides(output_dir=args.out,
                                 frequency=None if args.freq_ghz is None else args.freq_ghz * 1e9)
        run = Run(cfg)
        t0 = time.perf_counter()
        status = COMMANDS[args.subcommand](run)
        run.timings["total_s"] = time.perf_counter() - t0
        write_manifest(run, args.subcommand, config_text, config_path, status)
        return status
    except ConfigError as exc:
        print(f"slotcma: config error: {exc}", file=sys.stderr)
        return 2
    except SlotCmaError as exc:
        print(f"slotcma: {_origin(exc)}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
