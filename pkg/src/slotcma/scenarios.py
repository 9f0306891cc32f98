"""End-to-end runs of the three canonical plates at 2.4 GHz.

Reference 50 x 40 mm plate, the same plate with a centred 30 x 0.2 mm
X-directed slot, and with the slot turned along Y.  Each run writes mode
tables, mode-current maps, near-field line scans and SAR grids, then checks
the qualitative behaviour expected of each geometry.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import json
from pathlib import Path

import numpy as np

from .cma import (concentration_near, match_modes, mode_current, polarization_means,
                  write_current_csv, write_modes_csv)
from .config import RunConfig, default_config
from .fields import near_field, observation_line, write_field_csv
from .mesh import PlateSpec, SlotSpec
from .pipeline import Analysis, analyze, drive
from .sar import (electrical_distance, sar_from_field, sar_ratio, sar_summary, tissue_plane,
                  tissue_preset, write_sar_csv, write_sar_report)

FREQUENCY = 2.4e9
PLATE = PlateSpec(50e-3, 40e-3)
X_SLOT = SlotSpec((0.0, 0.0), 30e-3, 0.2e-3)
Y_SLOT = SlotSpec((0.0, 0.0), 0.2e-3, 30e-3)
GEOMETRIES = {"reference": None, "x_slot": X_SLOT, "y_slot": Y_SLOT}

POLARIZATION_MARGIN = 3.0
SLOT_END_RADIUS = 2e-3
SLOT_END_SHARE = 0.60


def canonical_plate(name):
    return PLATE.with_slot(GEOMETRIES[name])


def slot_end_segments(slot: SlotSpec):
    """The two short sides of a slot as 3D segments."""
    x0, x1, y0, y1 = slot.bounds
    if slot.orientation == "x":
        return [((x0, y0, 0.0), (x0, y1, 0.0)), ((x1, y0, 0.0), (x1, y1, 0.0))]
    return [((x0, y0, 0.0), (x1, y0, 0.0)), ((x0, y1, 0.0), (x1, y1, 0.0))]


def counterpart(ref: Analysis, other: Analysis, mode):
    """Index in ``other`` of the mode whose current best matches ``ref`` mode ``mode``."""
    corr = match_modes(ref.modes, ref.mesh, ref.basis, other.modes, other.mesh, other.basis)
    j = int(np.argmax(corr[mode]))
    return j, float(corr[mode, j])


def _current(a: Analysis, mode, normalization):
    cur = mode_current(a.modes, mode, a.mesh, a.basis, normalize=(normalization == "max"))
    return cur


def line_levels(a: Analysis, mode, cfg: RunConfig, normalization=None):
    """Near fields of one mode along the x and y observation lines."""
    normalization = normalization or cfg.current_normalization
    cur = _current(a, mode, normalization)
    o = cfg.observation
    out = {}
    for axis, extent in (("x", PLATE.length_x), ("y", PLATE.width_y)):
        obs = observation_line(axis, o.line_offset, o.line_height, extent, o.line_samples, PLATE)
        out[axis] = near_field(cur, a.mesh, obs, a.frequency)
    return out


def mean_level_db(levels):
    return float(np.mean(np.concatenate([levels["x"].db, levels["y"].db])))


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    bound: str

    def as_dict(self):
        return {"name": self.name, "passed": bool(self.passed), "value": self.value, "bound": self.bound}


@dataclass
class ScenarioStatus:
    checks: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for cs in self.checks.values() for c in cs)

    def failures(self):
        return {k: [c.name for c in cs if not c.passed] for k, cs in self.checks.items()
                if any(not c.passed for c in cs)}

    def as_dict(self):
        return {"passed": self.passed,
                "checks": {k: [c.as_dict() for c in cs] for k, cs in self.checks.items()},
                "info": self.info}


def run_geometries(cfg: RunConfig, frequency=FREQUENCY):
    return {name: analyze(canonical_plate(name).with_target_edge(cfg.plate.target_edge)
                          if cfg.plate.target_edge is not None else canonical_plate(name),
                          frequency, mesh_frequency=frequency)
            for name in GEOMETRIES}


def reproduce_paper_scenarios(out_dir="out", cfg: RunConfig | None = None) -> ScenarioStatus:
    """Run and export all three canonical geometries; return per-scenario checks."""
    cfg = cfg or default_config()
    out = Path(out_dir) / "scenarios"
    out.mkdir(parents=True, exist_ok=True)
    status = ScenarioStatus()
    runs = run_geometries(cfg)
    ref = runs["reference"]

    for name, a in runs.items():
        path = out / f"{name}_modes.csv"
        write_modes_csv(a.modes, path)
        status.outputs.append(path)
        for m in range(min(cfg.export_modes, len(a.modes))):
            cur = mode_current(a.modes, m, a.mesh, a.basis, normalize=True)
            path = out / f"{name}_mode{m + 1}_current.csv"
            write_current_csv(cur, a.mesh, path)
            status.outputs.append(path)
            levels = line_levels(a, m, cfg)
            for axis, res in levels.items():
                path = out / f"{name}_mode{m + 1}_nearfield_{axis}.csv"
                write_field_csv(res, path)
                status.outputs.append(path)

    # driven SAR on the tissue plane
    plane = tissue_plane(((-PLATE.length_x / 2, -PLATE.width_y / 2, 0.0),
                          (PLATE.length_x / 2, PLATE.width_y / 2, 0.0)),
                         cfg.tissue.separation, *cfg.tissue.size, *cfg.tissue.samples)
    sar = {}
    summaries = []
    for name, a in runs.items():
        driven = drive(a, cfg.feed, cfg.excitation_normalization)
        field_ = near_field(driven.current, a.mesh, plane, a.frequency)
        for tname in cfg.tissue.names:
            res = sar_from_field(field_, tissue_preset(tname), plane.shape)
            sar[name, tname] = res
            path = out / f"{name}_{tname}_sar.csv"
            write_sar_csv(res, path)
            status.outputs.append(path)
            summaries.append(sar_summary(res, geometry=name, normalization=cfg.excitation_normalization,
                                         input_power_w=driven.input_power))
    ratios = {tname: {f"reference/{v}": sar_ratio(sar["reference", tname], sar[v, tname])
                      for v in ("x_slot", "y_slot")} for tname in cfg.tissue.names}
    path = out / "sar_report.json"
    write_sar_report(summaries, ratios, path)
    status.outputs.append(path)

    # qualitative checks
    c1 = mode_current(ref.modes, 0, ref.mesh, ref.basis)
    c2 = mode_current(ref.modes, 1, ref.mesh, ref.basis)
    jx1, jy1 = polarization_means(c1)
    jx2, jy2 = polarization_means(c2)
    status.checks["reference"] = [
        Check("mode1 X-polarized", jx1 > POLARIZATION_MARGIN * jy1, jx1 / jy1, f"> {POLARIZATION_MARGIN}"),
        Check("mode2 Y-polarized", jy2 > POLARIZATION_MARGIN * jx2, jy2 / jx2, f"> {POLARIZATION_MARGIN}"),
    ]

    xs = runs["x_slot"]
    j, corr = counterpart(ref, xs, 1)
    share = concentration_near(mode_current(xs.modes, j, xs.mesh, xs.basis), xs.mesh,
                               slot_end_segments(X_SLOT), SLOT_END_RADIUS)
    status.checks["x_slot"] = [
        Check("slot-mode concentration at slot ends", share >= SLOT_END_SHARE, share, f">= {SLOT_END_SHARE}")]
    status.info["x_slot_counterpart_of_mode2"] = {"mode": j + 1, "correlation": corr}

    ys = runs["y_slot"]
    j1, corr1 = counterpart(ref, ys, 0)
    drop = mean_level_db(line_levels(ys, j1, cfg)) - mean_level_db(line_levels(ref, 0, cfg))
    status.checks["y_slot"] = [
        Check("mode1 near-field suppression (dB)", drop < 0, drop, "< 0")]
    status.info["y_slot_counterpart_of_mode1"] = {"mode": j1 + 1, "correlation": corr1}
    status.info["sar_ratios"] = ratios
    status.info["tissue_electrical_distance_wavelengths"] = electrical_distance(cfg.tissue.separation, FREQUENCY)
    status.info["unknowns"] = {k: len(a.basis) for k, a in runs.items()}

    path = out / "scenario_status.json"
    with open(path, "w") as fh:
        json.dump(status.as_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    status.outputs.append(path)
    return status
