"""Point SAR on a tissue plane from the incident (free-space) field.

SAR = sigma / rho * |E|^2 with |E| the peak-phasor magnitude as produced by
:mod:`slotcma.fields`.  The tissue does not react back on the antenna: every
result is an incident-field approximation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
import json

import numpy as np

from .constants import wavelength
from .errors import ConsistencyError
from .fields import FieldResult, ObservationSet

APPROXIMATION = "incident-field approximation"


@dataclass(frozen=True)
class TissueLayer:
    name: str
    sigma: float
    eps_r: float
    rho: float
    thickness: float

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if not self.eps_r >= 1:
            raise ValueError(f"eps_r must be >= 1, got {self.eps_r}")
        if not self.rho > 0:
            raise ValueError(f"rho must be > 0, got {self.rho}")
        if not self.thickness > 0:
            raise ValueError(f"thickness must be > 0, got {self.thickness}")

    @property
    def sar_per_field2(self):
        """sigma / rho in (W/kg) / (V/m)^2."""
        return self.sigma / self.rho


TISSUES = {
    "skin": TissueLayer("skin", 1.43, 38.1, 1100.0, 1.5e-3),
    "fat": TissueLayer("fat", 0.1, 5.29, 916.0, 1.5e-3),
}


def tissue_preset(name) -> TissueLayer:
    try:
        return TISSUES[name.strip().lower()]
    except KeyError:
        raise KeyError(f"unknown tissue {name!r}; available: {', '.join(sorted(TISSUES))}") from None


@dataclass(frozen=True, eq=False)
class SarResult:
    values: np.ndarray
    points: np.ndarray
    tissue: str
    frequency: float
    shape: tuple = ()
    label: str = APPROXIMATION

    @property
    def peak(self):
        return float(self.values.max())

    @property
    def peak_index(self):
        return int(np.argmax(self.values))

    @property
    def peak_location(self):
        return self.points[self.peak_index].copy()


def sar_from_field(field: FieldResult, tissue: TissueLayer, shape=()) -> SarResult:
    mag2 = np.sum(np.abs(field.e) ** 2, axis=1)
    return SarResult(tissue.sar_per_field2 * mag2, np.array(field.points), tissue.name,
                     field.frequency, tuple(shape))


def tissue_plane(antenna_bbox, separation, width=0.085, height=0.06, nx=86, nz=61) -> ObservationSet:
    """Grid parallel to the XZ-plane, ``separation`` beyond the +y extent.

    ``antenna_bbox`` is ``((xmin, ymin, zmin), (xmax, ymax, zmax))``.  The
    grid is centred on the bbox in x and z; x runs fastest.
    """
    if not separation > 0:
        raise ValueError("tissue separation must be positive")
    lo, hi = np.asarray(antenna_bbox[0], dtype=float), np.asarray(antenna_bbox[1], dtype=float)
    cx, cz = 0.5 * (lo[0] + hi[0]), 0.5 * (lo[2] + hi[2])
    x = cx + np.linspace(-0.5 * width, 0.5 * width, int(nx))
    z = cz + np.linspace(-0.5 * height, 0.5 * height, int(nz))
    zz, xx = np.meshgrid(z, x, indexing="ij")
    y = hi[1] + separation
    pts = np.column_stack([xx.ravel(), np.full(xx.size, y), zz.ravel()])
    return ObservationSet(pts, "plane-xz", (int(nz), int(nx)))


def electrical_distance(distance, frequency):
    """Distance in free-space wavelengths."""
    return distance / wavelength(frequency)


def sar_ratio(reference: SarResult, variant: SarResult):
    """max(SAR_reference) / max(SAR_variant)."""
    if reference.tissue != variant.tissue:
        raise ConsistencyError(f"tissues differ: {reference.tissue} vs {variant.tissue}")
    if reference.points.shape != variant.points.shape or not np.allclose(reference.points, variant.points):
        raise ConsistencyError("SAR grids differ")
    vp = variant.peak
    if vp == 0:
        raise ZeroDivisionError("variant peak SAR is zero")
    return reference.peak / vp


def write_sar_csv(result: SarResult, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "z", "SAR_W_per_kg"])
        for p, v in zip(result.points, result.values):
            w.writerow([f"{float(c):.12e}" for c in p] + [f"{float(v):.12e}"])


def sar_summary(result: SarResult, **extra):
    out = {
        "tissue": result.tissue,
        "frequency_hz": result.frequency,
        "peak_sar_w_per_kg": result.peak,
        "peak_location_m": [float(c) for c in result.peak_location],
        "model": result.label,
    }
    out.update(extra)
    return out


def write_sar_report(summaries, ratios, path):
    """JSON report: per-result summaries plus a ratio table by tissue."""
    doc = {"model": APPROXIMATION, "results": summaries, "ratios": ratios}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
