import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slotcma.config import (ObservationConfig, PlannerConfig, RunConfig, SweepSpec, TissueConfig, default_config,
                            dump_config, ensure_output_dir, load_config, parse_config, preset_text)
from slotcma.errors import ConfigError
from slotcma.mesh import PlateSpec, SlotSpec
from slotcma.pipeline import FeedSpec

MINIMAL = "geometry:\n  length_mm: 50\n  width_mm: 40\n"


def _error_line(text):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    return info.value.line, str(info.value)


def test_preset_defaults():
    cfg = default_config()
    assert cfg.plate == PlateSpec(50e-3, 40e-3)
    assert cfg.frequencies == (2.4e9,) and cfg.mesh_frequency == 2.4e9
    assert cfg.feed.point == pytest.approx((2e-3, 8.05e-3))
    assert cfg.tissue.names == ("skin", "fat")
    assert cfg.tissue.separation == pytest.approx(2e-3)
    assert cfg.observation.plane_height == pytest.approx(5e-3)
    assert cfg.planner.slot_length == pytest.approx(30e-3)
    assert cfg.planner.slot_width == pytest.approx(0.2e-3)


def test_minimal_config_uses_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.frequencies == (2.4e9,)
    assert cfg.observation == ObservationConfig()
    assert cfg.planner == PlannerConfig()


def test_preset_roundtrip():
    cfg = default_config()
    assert parse_config(dump_config(cfg)) == cfg


def test_units_are_converted():
    cfg = parse_config("geometry:\n  length_m: 0.05\n  width_um: 40000\n  target_edge_mm: 4\n"
                       "  slot: {center_mm: [1, -2], len_x_mm: 30, len_y_um: 200}\n"
                       "frequency:\n  list_mhz: [2400, 2450]\n  mesh_ghz: 3\n")
    assert cfg.plate.length_x == pytest.approx(0.05)
    assert cfg.plate.width_y == pytest.approx(0.04)
    assert cfg.plate.target_edge == pytest.approx(4e-3)
    slot = cfg.plate.slot
    assert slot.center == pytest.approx((1e-3, -2e-3))
    assert (slot.len_x, slot.len_y) == pytest.approx((30e-3, 0.2e-3))
    assert cfg.frequencies == pytest.approx((2.4e9, 2.45e9))
    assert cfg.mesh_frequency == pytest.approx(3e9)


def test_sweep_and_default_mesh_frequency():
    cfg = parse_config(MINIMAL + "frequency:\n  start_ghz: 2\n  stop_ghz: 4\n  points: 21\n")
    assert len(cfg.frequencies) == 21
    np.testing.assert_allclose(np.diff(cfg.frequencies), 0.1e9, rtol=1e-9)
    assert cfg.mesh_frequency == cfg.frequencies[-1] == 4e9
    assert SweepSpec(1.0, 1.0, 1).frequencies() == (1.0,)


def test_unknown_key_reports_line():
    line, msg = _error_line(MINIMAL + "  depth_mm: 3\n")
    assert line == 4
    assert msg.startswith("line 4: unknown key 'depth_mm'")


def test_unknown_section_and_missing_suffix():
    assert _error_line(MINIMAL + "antenna:\n  gain: 3\n")[0] == 4
    line, msg = _error_line("geometry:\n  length: 50\n  width_mm: 40\n")
    assert line == 2 and "unit suffix" in msg
    line, msg = _error_line(MINIMAL + "tissue:\n  separation_ft: 2\n")
    assert line == 5


def test_duplicate_keys_rejected():
    assert _error_line("geometry:\n  length_mm: 50\n  length_mm: 60\n  width_mm: 40\n")[0] == 3
    line, msg = _error_line("geometry:\n  length_mm: 50\n  length_m: 0.06\n  width_mm: 40\n")
    assert line == 3 and "twice" in msg


@pytest.mark.parametrize("body, line", [
    ("frequency:\n  list_ghz: [2.4, 2.4]\n", 5),
    ("frequency:\n  list_ghz: [3, 2]\n", 5),
    ("frequency:\n  list_ghz: [-1]\n", 5),
    ("frequency:\n  list_ghz: [2.4]\n  start_ghz: 2\n", 5),
    ("frequency:\n  start_ghz: 2\n", 5),
    ("frequency:\n  start_ghz: 2\n  stop_ghz: 3\n  points: 1\n", 7),
    ("modes:\n  normalization: unit\n", 5),
    ("excitation:\n  normalization: current\n", 5),
    ("tissue:\n  names: [skin, bone]\n", 5),
    ("planner:\n  weighting: phase\n", 5),
    ("observation:\n  line_samples: 1\n", 5),
    ("modes:\n  export: two\n", 5),
    ("observation:\n  plane_samples: [3]\n", 5),
])
def test_invalid_values_report_line(body, line):
    assert _error_line(MINIMAL + body)[0] == line


def test_geometry_errors():
    line, msg = _error_line("geometry:\n  width_mm: 40\n")
    assert "length" in msg and line == 1
    line, msg = _error_line("geometry:\n  length_mm: 50\n  width_mm: 40\n"
                            "  slot: {center_mm: [0, 0], len_x_mm: 60, len_y_mm: 0.2}\n")
    assert line == 2 and "slot" in msg
    assert _error_line("geometry: [1, 2]\n")[0] == 1
    assert "empty" in _error_line("")[1]
    assert _error_line("geometry:\n  length_mm: [50\n")[0] is not None


def test_tissue_names_accept_a_single_string():
    cfg = parse_config(MINIMAL + "tissue:\n  names: fat\n")
    assert cfg.tissue.names == ("fat",)


def test_run_config_validation():
    plate = PlateSpec(0.05, 0.04)
    with pytest.raises(ConfigError):
        RunConfig(plate, (), 1e9)
    with pytest.raises(ConfigError):
        RunConfig(plate, (2e9, 1e9), 2e9)
    with pytest.raises(ConfigError):
        RunConfig(plate, (1e9,), 1e9, current_normalization="unit")


def test_overrides():
    cfg = parse_config(MINIMAL + "frequency:\n  list_ghz: [2, 3]\n")
    new = cfg.with_overrides(output_dir="elsewhere", frequency=2.45e9)
    assert new.output_dir == "elsewhere"
    assert new.frequencies == (2.45e9,) and new.mesh_frequency == 2.45e9
    assert cfg.with_overrides() is cfg


def test_load_config_and_output_dir(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(preset_text())
    assert load_config(path) == default_config()
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.yaml")
    out = ensure_output_dir(tmp_path / "a" / "b")
    assert out.is_dir()
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(ConfigError):
        ensure_output_dir(blocker / "sub")


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_unwritable_output_dir(tmp_path):
    ro = tmp_path / "ro"
    ro.mkdir(mode=0o500)
    with pytest.raises(ConfigError, match="not writable"):
        ensure_output_dir(ro)


lengths = st.floats(1e-3, 0.2)
positive_ints = st.integers(2, 200)


@st.composite
def run_configs(draw):
    lx, wy = draw(lengths), draw(lengths)
    slot = None
    if draw(st.booleans()):
        slot = SlotSpec((0.0, 0.0), lx * draw(st.floats(0.1, 0.9)), wy * draw(st.floats(0.05, 0.9)))
    plate = PlateSpec(lx, wy, slot, draw(st.none() | st.floats(1e-4, 1e-2)))
    freqs = tuple(sorted(draw(st.sets(st.floats(1e8, 1e10), min_size=1, max_size=5))))
    feed = FeedSpec((draw(st.floats(-0.01, 0.01)), draw(st.floats(-0.01, 0.01))),
                    (draw(st.floats(-1, 1)), draw(st.floats(-1, 1))), draw(st.floats(0.1, 10)))
    obs = ObservationConfig(draw(lengths), draw(lengths), draw(positive_ints), draw(lengths),
                            (draw(positive_ints), draw(positive_ints)))
    tissue = TissueConfig(tuple(draw(st.lists(st.sampled_from(["skin", "fat"]), min_size=1, max_size=2))),
                          draw(lengths), (draw(lengths), draw(lengths)),
                          (draw(positive_ints), draw(positive_ints)))
    planner = PlannerConfig(draw(st.integers(0, 5)), draw(st.integers(1, 4)),
                            draw(st.sampled_from(["magnitude", "complex"])), draw(lengths), draw(lengths),
                            draw(st.integers(0, 5)))
    return RunConfig(plate, freqs, draw(st.floats(1e8, 1e10)), feed, draw(st.none() | positive_ints),
                     draw(st.integers(0, 10)), obs, tissue, planner, draw(st.sampled_from(["max", "power"])),
                     draw(st.sampled_from(["voltage", "power"])), draw(st.sampled_from(["out", "a/b", "x y"])),
                     draw(st.integers(1, 8)))


@settings(max_examples=60, deadline=None)
@given(run_configs())
def test_roundtrip_property(cfg):
    assert parse_config(dump_config(cfg)) == cfg
