"""Run configuration: YAML with unit-suffixed keys, converted to SI.

Lengths take ``_m``, ``_mm`` or ``_um`` suffixes and frequencies ``_hz``,
``_khz``, ``_mhz`` or ``_ghz``; e.g. ``length_mm: 50`` becomes
``length = 0.05``.  Errors carry the line number of the offending node.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from importlib import resources
import os
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError
from .mesh import PlateSpec, SlotSpec
from .pipeline import FeedSpec
from .sar import TISSUES

LENGTH_UNITS = {"m": 1.0, "mm": 1e-3, "um": 1e-6}
FREQ_UNITS = {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9}
UNITS = {"length": LENGTH_UNITS, "freq": FREQ_UNITS}


@dataclass(frozen=True)
class SweepSpec:
    start: float
    stop: float
    points: int

    def frequencies(self):
        return tuple(float(f) for f in np.linspace(self.start, self.stop, self.points))


@dataclass(frozen=True)
class ObservationConfig:
    line_offset: float = 5e-3
    line_height: float = 5e-3
    line_samples: int = 51
    plane_height: float = 5e-3
    plane_samples: tuple = (51, 41)


@dataclass(frozen=True)
class TissueConfig:
    names: tuple = ("skin", "fat")
    separation: float = 2e-3
    size: tuple = (0.085, 0.06)
    samples: tuple = (86, 61)


@dataclass(frozen=True)
class PlannerConfig:
    desired_mode: int = 0
    interferers: int = 1
    weighting: str = "magnitude"
    slot_length: float = 30e-3
    slot_width: float = 0.2e-3
    target_mode: int = 1


@dataclass(frozen=True)
class RunConfig:
    plate: PlateSpec
    frequencies: tuple
    mesh_frequency: float
    feed: FeedSpec = FeedSpec((2e-3, 8.05e-3), (0.0, 1.0), 1.0)
    num_modes: int | None = None
    export_modes: int = 2
    observation: ObservationConfig = ObservationConfig()
    tissue: TissueConfig = TissueConfig()
    planner: PlannerConfig = PlannerConfig()
    current_normalization: str = "max"
    excitation_normalization: str = "voltage"
    output_dir: str = "out"
    workers: int = 1

    def __post_init__(self):
        f = self.frequencies
        if len(f) == 0:
            raise ConfigError("frequency list is empty")
        if any(b <= a for a, b in zip(f, f[1:])):
            raise ConfigError("frequencies must be strictly increasing")
        if self.current_normalization not in ("max", "power"):
            raise ConfigError(f"current normalization must be 'max' or 'power', got {self.current_normalization!r}")
        if self.excitation_normalization not in ("voltage", "power"):
            raise ConfigError("excitation normalization must be 'voltage' or 'power', "
                              f"got {self.excitation_normalization!r}")

    def with_overrides(self, output_dir=None, frequency=None):
        cfg = self
        if output_dir is not None:
            cfg = replace(cfg, output_dir=str(output_dir))
        if frequency is not None:
            # a single analysis frequency is also the mesh frequency
            cfg = replace(cfg, frequencies=(float(frequency),), mesh_frequency=float(frequency))
        return cfg


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------

def _line(node):
    return node.start_mark.line + 1 if node is not None else None


def _node_map(node):
    """Mapping node -> {key: (key_node, value_node)}."""
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError("expected a mapping", _line(node))
    out = {}
    for k, v in node.value:
        if k.value in out:
            raise ConfigError(f"duplicate key {k.value!r}", _line(k))
        out[k.value] = (k, v)
    return out


def _scalar(node, kind, where):
    value = yaml.safe_load(yaml.serialize(node)) if node is not None else None
    try:
        if kind in ("length", "freq", "float"):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError
            return float(value)
        if kind == "int":
            if isinstance(value, bool) or not isinstance(value, int):
                raise TypeError
            return int(value)
        if kind == "str":
            if not isinstance(value, str):
                raise TypeError
            return value
        if kind == "strlist":
            if isinstance(value, str):
                return (value,)
            if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
                raise TypeError
            return tuple(value)
        if kind.startswith("vec"):
            n = int(kind[3:])
            if (not isinstance(value, list) or len(value) != n
                    or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)):
                raise TypeError
            return tuple(float(v) for v in value)
        if kind.startswith("ints"):
            n = int(kind[4:])
            if not isinstance(value, list) or len(value) != n or not all(
                    isinstance(v, int) and not isinstance(v, bool) for v in value):
                raise TypeError
            return tuple(int(v) for v in value)
    except TypeError:
        raise ConfigError(f"{where}: expected {kind}, got {value!r}", _line(node)) from None
    raise AssertionError(kind)


# section -> {base name: (kind, unit family or None)}
SCHEMA = {
    "geometry": {"length": ("length", "length"), "width": ("length", "length"),
                 "target_edge": ("length", "length"), "slot": ("slot", None)},
    "slot": {"center": ("vec2", "length"), "len_x": ("length", "length"), "len_y": ("length", "length")},
    "frequency": {"list": ("freqlist", "freq"), "start": ("freq", "freq"), "stop": ("freq", "freq"),
                  "points": ("int", None), "mesh": ("freq", "freq")},
    "excitation": {"feed_point": ("vec2", "length"), "direction": ("vec2", None), "volts": ("float", None),
                   "normalization": ("str", None)},
    "modes": {"count": ("int", None), "export": ("int", None), "normalization": ("str", None)},
    "observation": {"line_offset": ("length", "length"), "line_height": ("length", "length"),
                    "line_samples": ("int", None), "plane_height": ("length", "length"),
                    "plane_samples": ("ints2", None)},
    "tissue": {"names": ("strlist", None), "separation": ("length", "length"), "size": ("vec2", "length"),
               "samples": ("ints2", None)},
    "planner": {"desired_mode": ("int", None), "interferers": ("int", None), "weighting": ("str", None),
                "slot_length": ("length", "length"), "slot_width": ("length", "length"),
                "target_mode": ("int", None)},
    "output": {"dir": ("str", None), "workers": ("int", None)},
}


def _section(mapping, name):
    """Parse one section into {base: (value, line)} with SI conversion."""
    schema = SCHEMA[name]
    out = {}
    for key, (knode, vnode) in mapping.items():
        base, factor = key, 1.0
        if key not in schema:
            head, _, suffix = key.rpartition("_")
            entry = schema.get(head)
            if entry is None or entry[1] is None or suffix not in UNITS[entry[1]]:
                allowed = sorted(schema)
                raise ConfigError(f"unknown key {key!r} in {name} (allowed bases: {', '.join(allowed)}; "
                                  "lengths need _m/_mm/_um and frequencies _hz/_khz/_mhz/_ghz)",
                                  _line(knode))
            base, factor = head, UNITS[entry[1]][suffix]
        elif schema[key][1] is not None:
            raise ConfigError(f"key {key!r} needs a unit suffix", _line(knode))
        if base in out:
            raise ConfigError(f"{name}.{base} given twice", _line(knode))
        kind = schema[base][0]
        where = f"{name}.{key}"
        if kind == "slot":
            if isinstance(vnode, yaml.ScalarNode) and vnode.tag.endswith(":null"):
                out[base] = (None, _line(vnode))
                continue
            out[base] = (_section(_node_map(vnode), "slot"), _line(vnode))
        elif kind == "freqlist":
            if not isinstance(vnode, yaml.SequenceNode) or not vnode.value:
                raise ConfigError(f"{where}: expected a nonempty list", _line(vnode))
            out[base] = (tuple(_scalar(n, "freq", where) * factor for n in vnode.value), _line(vnode))
        else:
            value = _scalar(vnode, kind, where)
            if kind in ("length", "freq"):
                value *= factor
            elif kind == "vec2" and schema[base][1] is not None:
                value = tuple(v * factor for v in value)
            out[base] = (value, _line(vnode))
    return out


def _get(sec, key, default=None):
    return sec[key][0] if key in sec else default


def parse_config(text, source="<config>") -> RunConfig:
    try:
        root = yaml.compose(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise ConfigError(f"{source}: {exc.problem}", mark.line + 1 if mark else None) from None
    if root is None:
        raise ConfigError(f"{source}: empty config", 1)
    top = _node_map(root)
    for key, (knode, _) in top.items():
        if key not in SCHEMA or key == "slot":
            raise ConfigError(f"unknown section {key!r} (expected one of: "
                              f"{', '.join(k for k in SCHEMA if k != 'slot')})", _line(knode))
    secs = {name: _section(_node_map(top[name][1]), name) if name in top else {}
            for name in SCHEMA if name != "slot"}

    g = secs["geometry"]
    for req in ("length", "width"):
        if req not in g:
            raise ConfigError(f"geometry.{req}_mm (or another length unit) is required",
                              _line(top["geometry"][0]) if "geometry" in top else 1)
    slot = None
    if _get(g, "slot") is not None:
        s = g["slot"][0]
        try:
            slot = SlotSpec(_get(s, "center", (0.0, 0.0)), _get(s, "len_x"), _get(s, "len_y"))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"geometry.slot: {exc}", g["slot"][1]) from None
    try:
        plate = PlateSpec(_get(g, "length"), _get(g, "width"), slot, _get(g, "target_edge"))
    except ValueError as exc:
        raise ConfigError(f"geometry: {exc}", _line(top["geometry"][1])) from None

    fr = secs["frequency"]
    if "list" in fr and any(k in fr for k in ("start", "stop", "points")):
        raise ConfigError("frequency: give either a list or start/stop/points", fr["list"][1])
    if "list" in fr:
        freqs = fr["list"][0]
    elif all(k in fr for k in ("start", "stop", "points")):
        if fr["points"][0] < 1:
            raise ConfigError("frequency.points must be >= 1", fr["points"][1])
        if fr["points"][0] == 1 and fr["start"][0] != fr["stop"][0]:
            raise ConfigError("a single-point sweep needs start == stop", fr["points"][1])
        freqs = SweepSpec(fr["start"][0], fr["stop"][0], fr["points"][0]).frequencies()
    elif not fr:
        freqs = (2.4e9,)
    else:
        line = next(iter(fr.values()))[1]
        raise ConfigError("frequency: start, stop and points must be given together", line)
    line_f = fr["list"][1] if "list" in fr else (fr["start"][1] if "start" in fr else None)
    if any(b <= a for a, b in zip(freqs, freqs[1:])):
        raise ConfigError("frequencies must be strictly increasing", line_f)
    if any(f <= 0 for f in freqs):
        raise ConfigError("frequencies must be positive", line_f)
    mesh_f = _get(fr, "mesh", max(freqs))

    ex = secs["excitation"]
    feed = FeedSpec(_get(ex, "feed_point", (2e-3, 8.05e-3)), _get(ex, "direction", (0.0, 1.0)),
                    _get(ex, "volts", 1.0))
    md = secs["modes"]
    ob = secs["observation"]
    obs = ObservationConfig(_get(ob, "line_offset", 5e-3), _get(ob, "line_height", 5e-3),
                            _get(ob, "line_samples", 51), _get(ob, "plane_height", 5e-3),
                            _get(ob, "plane_samples", (51, 41)))
    if obs.line_samples < 2:
        raise ConfigError("observation.line_samples must be >= 2", ob["line_samples"][1])
    ti = secs["tissue"]
    tissue = TissueConfig(_get(ti, "names", ("skin", "fat")), _get(ti, "separation", 2e-3),
                          _get(ti, "size", (0.085, 0.06)), _get(ti, "samples", (86, 61)))
    for n in tissue.names:
        if n not in TISSUES:
            raise ConfigError(f"unknown tissue {n!r}; available: {', '.join(sorted(TISSUES))}",
                              ti["names"][1])
    if not tissue.separation > 0:
        raise ConfigError("tissue.separation must be positive", ti["separation"][1])
    pl = secs["planner"]
    planner = PlannerConfig(_get(pl, "desired_mode", 0), _get(pl, "interferers", 1),
                            _get(pl, "weighting", "magnitude"), _get(pl, "slot_length", 30e-3),
                            _get(pl, "slot_width", 0.2e-3), _get(pl, "target_mode", 1))
    if planner.weighting not in ("magnitude", "complex"):
        raise ConfigError("planner.weighting must be 'magnitude' or 'complex'", pl["weighting"][1])
    for sec_name, allowed in (("modes", ("max", "power")), ("excitation", ("voltage", "power"))):
        sec = secs[sec_name]
        if "normalization" in sec and sec["normalization"][0] not in allowed:
            raise ConfigError(f"{sec_name}.normalization must be one of {', '.join(allowed)}",
                              sec["normalization"][1])
    out = secs["output"]
    return RunConfig(plate, tuple(freqs), mesh_f, feed, _get(md, "count"), _get(md, "export", 2),
                     obs, tissue, planner, _get(md, "normalization", "max"),
                     _get(ex, "normalization", "voltage"), _get(out, "dir", "out"),
                     _get(out, "workers", 1))


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))


def preset_text():
    return resources.files("slotcma").joinpath("presets/defaults.yaml").read_text()


def default_config() -> RunConfig:
    return parse_config(preset_text(), "defaults.yaml")


def config_to_dict(cfg: RunConfig):
    """Serialize with SI suffixes; ``parse_config(yaml.safe_dump(d))`` round-trips."""
    p = cfg.plate
    geometry = {"length_m": p.length_x, "width_m": p.width_y,
                "slot": None if p.slot is None else {"center_m": list(p.slot.center),
                                                     "len_x_m": p.slot.len_x, "len_y_m": p.slot.len_y}}
    if p.target_edge is not None:
        geometry["target_edge_m"] = p.target_edge
    modes = {"export": cfg.export_modes, "normalization": cfg.current_normalization}
    if cfg.num_modes is not None:
        modes["count"] = cfg.num_modes
    o, t, pl = cfg.observation, cfg.tissue, cfg.planner
    return {
        "geometry": geometry,
        "frequency": {"list_hz": list(cfg.frequencies), "mesh_hz": cfg.mesh_frequency},
        "excitation": {"feed_point_m": list(cfg.feed.point), "direction": list(cfg.feed.direction),
                       "volts": cfg.feed.volts, "normalization": cfg.excitation_normalization},
        "modes": modes,
        "observation": {"line_offset_m": o.line_offset, "line_height_m": o.line_height,
                        "line_samples": o.line_samples, "plane_height_m": o.plane_height,
                        "plane_samples": list(o.plane_samples)},
        "tissue": {"names": list(t.names), "separation_m": t.separation, "size_m": list(t.size),
                   "samples": list(t.samples)},
        "planner": {"desired_mode": pl.desired_mode, "interferers": pl.interferers,
                    "weighting": pl.weighting, "slot_length_m": pl.slot_length,
                    "slot_width_m": pl.slot_width, "target_mode": pl.target_mode},
        "output": {"dir": cfg.output_dir, "workers": cfg.workers},
    }


def dump_config(cfg: RunConfig):
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


def ensure_output_dir(path):
    """Create ``path`` and confirm it is writable."""
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory {path} cannot be created: {exc}") from None
    if not os.access(path, os.W_OK):
        raise ConfigError(f"output directory {path} is not writable")
    return path
