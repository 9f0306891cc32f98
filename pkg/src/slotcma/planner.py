"""Slot-orientation planning from characteristic modes.

Steps: feed at the maximum of the desired mode, delta-gap excitation there,
modal weights, the U strongest other modes by |alpha|, their |alpha|-weighted
current J_und, and a centred slot whose long axis is perpendicular to the
dominant polarization of J_und.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import json
import logging
import math

import numpy as np

from .cma import ModeSet, SurfaceCurrent, mode_current, modal_weights, match_modes
from .errors import PlanningError
from .fields import near_field, observation_line
from .mesh import PlateSpec, RwgSet, SlotSpec, TriMesh
from .mom import Excitation, excite_delta_gap
from .pipeline import FeedSpec, analyze, drive
from .sar import sar_from_field, sar_ratio, tissue_plane, tissue_preset

log = logging.getLogger(__name__)

DEFAULT_SLOT_LENGTH = 30e-3
DEFAULT_SLOT_WIDTH = 0.2e-3


@dataclass(frozen=True)
class RankEntry:
    mode: int
    magnitude: float
    negligible: bool


@dataclass(eq=False)
class PlanOutput:
    desired_mode: int
    feed_edge: int
    ranking: list
    j_und: SurfaceCurrent
    polarization_angle: float
    slot: SlotSpec
    frequency: float

    def as_dict(self):
        return {
            "frequency_hz": self.frequency,
            "desired_mode": self.desired_mode,
            "feed_edge": self.feed_edge,
            "ranking": [{"mode": r.mode, "abs_alpha": r.magnitude, "negligible": r.negligible}
                        for r in self.ranking],
            "polarization_angle_rad": self.polarization_angle,
            "slot": {"center_m": list(self.slot.center), "len_x_m": self.slot.len_x,
                     "len_y_m": self.slot.len_y, "orientation": self.slot.orientation},
        }


def select_feed(modes: ModeSet, i, mesh=None, basis=None, tie_rtol=1e-9):
    """Edge with the largest |I_i| coefficient.

    Entries within ``tie_rtol`` of the maximum count as tied (mirror-image
    edges differ only by rounding) and the lowest id wins.
    """
    vec = np.abs(modes.vector(i))
    return int(np.flatnonzero(vec >= vec.max() * (1.0 - tie_rtol))[0])


def rank_interferers(modes: ModeSet, exc: Excitation, i, u, rel_negligible=1e-12):
    """The ``u`` modes other than ``i`` with the largest |alpha_n|, descending."""
    if u < 1 or u + 1 > len(modes):
        raise PlanningError(f"interferer count {u} needs 1 <= U and U + 1 <= {len(modes)} retained modes")
    if not 0 <= i < len(modes):
        raise PlanningError(f"desired mode {i} outside the {len(modes)} retained modes")
    mag = np.abs(modal_weights(modes, exc).alpha)
    others = [n for n in range(len(modes)) if n != i]
    others.sort(key=lambda n: (-mag[n], n))
    scale = mag.max()
    floor = rel_negligible * scale if scale > 0 else 0.0
    return [RankEntry(n, float(mag[n]), bool(mag[n] <= floor)) for n in others[:u]]


def undesired_current(modes: ModeSet, ranking, mesh: TriMesh, basis: RwgSet, exc=None,
                      weighting="magnitude") -> SurfaceCurrent:
    """J_und = sum |alpha_n| J_n over the ranking (or complex alpha_n)."""
    if not ranking:
        raise PlanningError("empty interferer ranking")
    if weighting == "magnitude":
        weights = [r.magnitude for r in ranking]
    elif weighting == "complex":
        if exc is None:
            raise PlanningError("complex weighting needs the excitation")
        alpha = modal_weights(modes, exc).alpha
        weights = [alpha[r.mode] for r in ranking]
    else:
        raise PlanningError(f"unknown weighting {weighting!r}")
    total = np.zeros((mesh.num_triangles, 3), dtype=complex)
    for w, r in zip(weights, ranking):
        total += w * mode_current(modes, r.mode, mesh, basis).vectors
    return SurfaceCurrent(total, mesh.fingerprint, "j_und")


def polarization_axis(current: SurfaceCurrent, areas):
    """Principal in-plane axis of sum area * Re(J J^H); returns (unit vector, angle in [0, pi))."""
    j = current.vectors[:, :2]
    c = np.einsum("t,ti,tj->ij", areas, j, j.conj()).real
    if not np.any(c):
        raise PlanningError("undesired current is zero: nothing to suppress")
    w, v = np.linalg.eigh(c)
    axis = v[:, -1]
    angle = math.atan2(axis[1], axis[0]) % math.pi
    return axis, angle


def recommend_slot(j_und: SurfaceCurrent, mesh: TriMesh, patch: PlateSpec,
                   slot_length=DEFAULT_SLOT_LENGTH, slot_width=DEFAULT_SLOT_WIDTH,
                   tie_tol=1e-9):
    """Centred axis-aligned slot perpendicular to the dominant J_und polarization.

    Returns ``(SlotSpec, angle)``.  A polarization at 45 degrees snaps to an
    X-directed slot.
    """
    if j_und.mesh_ref != mesh.fingerprint:
        raise PlanningError("undesired current belongs to a different mesh")
    axis, angle = polarization_axis(j_und, mesh.areas)
    ax, ay = abs(axis[0]), abs(axis[1])
    if abs(ax - ay) <= tie_tol:
        log.info("polarization at 45 degrees (%.6f rad); tie resolved to an X-directed slot", angle)
        orientation = "x"
    else:
        orientation = "x" if ay > ax else "y"
    # plates are centred on the origin
    if orientation == "x":
        slot = SlotSpec((0.0, 0.0), slot_length, slot_width)
    else:
        slot = SlotSpec((0.0, 0.0), slot_width, slot_length)
    x0, x1, y0, y1 = slot.bounds
    if not (-patch.length_x / 2 < x0 and x1 < patch.length_x / 2
            and -patch.width_y / 2 < y0 and y1 < patch.width_y / 2):
        raise PlanningError(f"{orientation}-directed slot of length {slot_length:g} m does not fit the patch")
    log.info("J_und polarization %.2f deg -> %s-directed slot", math.degrees(angle), orientation)
    return slot, angle


def plan(modes: ModeSet, mesh: TriMesh, basis: RwgSet, patch: PlateSpec, desired_mode=0,
         interferers=1, volts=1.0, weighting="magnitude", slot_length=DEFAULT_SLOT_LENGTH,
         slot_width=DEFAULT_SLOT_WIDTH) -> PlanOutput:
    """Run all six planning steps on a solved reference geometry."""
    edge = select_feed(modes, desired_mode)
    exc = excite_delta_gap(basis, edge, volts)
    ranking = rank_interferers(modes, exc, desired_mode, interferers)
    j_und = undesired_current(modes, ranking, mesh, basis, exc, weighting)
    slot, angle = recommend_slot(j_und, mesh, patch, slot_length, slot_width)
    return PlanOutput(desired_mode, edge, ranking, j_und, angle, slot, modes.frequency)


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------

@dataclass
class EvaluationOptions:
    line_offset: float = 5e-3
    line_height: float = 5e-3
    line_samples: int = 51
    tissue: str = "skin"
    tissue_separation: float = 2e-3
    tissue_size: tuple = (0.085, 0.06)
    tissue_samples: tuple = (86, 61)
    normalization: str = "voltage"
    mesh_frequency: float | None = None
    workers: int = 1


def _chain(plate, frequency, feed, opts, reference_plate):
    a = analyze(plate, frequency, mesh_frequency=opts.mesh_frequency)
    driven = drive(a, feed, opts.normalization)
    lines = {}
    for axis, extent in (("x", reference_plate.length_x), ("y", reference_plate.width_y)):
        obs = observation_line(axis, opts.line_offset, opts.line_height, extent,
                               opts.line_samples, reference_plate)
        lines[axis] = near_field(driven.current, a.mesh, obs, frequency)
    plane = tissue_plane(((-reference_plate.length_x / 2, -reference_plate.width_y / 2, 0.0),
                          (reference_plate.length_x / 2, reference_plate.width_y / 2, 0.0)),
                         opts.tissue_separation, *opts.tissue_size, *opts.tissue_samples)
    field = near_field(driven.current, a.mesh, plane, frequency)
    sar = sar_from_field(field, tissue_preset(opts.tissue), plane.shape)
    return a, driven, lines, sar


def evaluate_plan(reference: PlateSpec, planned: SlotSpec | None, frequency, feed: FeedSpec,
                  target_mode=1, options: EvaluationOptions | None = None):
    """Compare the reference plate with its slotted variant under one feed.

    Returns a report with the targeted mode's MS change (matched by current
    shape), the mean near-field dB change along the x and y lines, and the
    peak SAR ratio reference / variant.
    """
    opts = options or EvaluationOptions()
    variant = reference.with_slot(planned)
    with ThreadPoolExecutor(max_workers=2 if opts.workers > 1 else 1) as pool:
        fut_ref = pool.submit(_chain, reference.with_slot(None), frequency, feed, opts, reference)
        fut_var = pool.submit(_chain, variant, frequency, feed, opts, reference)
        ref, var = fut_ref.result(), fut_var.result()
    a_ref, d_ref, lines_ref, sar_ref = ref
    a_var, d_var, lines_var, sar_var = var

    corr = match_modes(a_ref.modes, a_ref.mesh, a_ref.basis, a_var.modes, a_var.mesh, a_var.basis)
    counterpart = int(np.argmax(corr[target_mode]))
    ms_ref = float(a_ref.modes.modal_significance[target_mode])
    ms_var = float(a_var.modes.modal_significance[counterpart])
    nf = {axis: float(np.mean(lines_var[axis].db) - np.mean(lines_ref[axis].db)) for axis in ("x", "y")}
    return {
        "frequency_hz": float(frequency),
        "slot": None if planned is None else {"center_m": list(planned.center), "len_x_m": planned.len_x,
                                              "len_y_m": planned.len_y},
        "feed": {"point_m": list(feed.point), "direction": list(feed.direction), "volts": feed.volts},
        "normalization": opts.normalization,
        "target_mode": target_mode,
        "target_counterpart": counterpart,
        "target_correlation": float(corr[target_mode, counterpart]),
        "ms_reference": ms_ref,
        "ms_variant": ms_var,
        "delta_ms": ms_var - ms_ref,
        "near_field_delta_db": nf,
        "sar_tissue": opts.tissue,
        "sar_peak_reference": sar_ref.peak,
        "sar_peak_variant": sar_var.peak,
        "sar_ratio": sar_ratio(sar_ref, sar_var),
    }


def write_report(plan_out: PlanOutput | None, evaluation: dict | None, path):
    doc = {}
    if plan_out is not None:
        doc["plan"] = plan_out.as_dict()
    if evaluation is not None:
        doc["evaluation"] = evaluation
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
