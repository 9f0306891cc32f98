import numpy as np
import pytest

from slotcma.mesh import PlateSpec, build_plate, enumerate_rwg
from slotcma.mom import assemble_z
from slotcma.pipeline import analyze
from slotcma.scenarios import FREQUENCY, canonical_plate


@pytest.fixture(scope="session")
def canonical():
    """Reference, X-slot and Y-slot analyses at 2.4 GHz on their default meshes."""
    return {name: analyze(canonical_plate(name), FREQUENCY)
            for name in ("reference", "x_slot", "y_slot")}


@pytest.fixture(scope="session")
def small_system():
    """A coarse 30 x 20 mm plate at 3 GHz: quick to assemble, still well conditioned."""
    plate = PlateSpec(30e-3, 20e-3, target_edge=5e-3)
    mesh = build_plate(plate)
    basis = enumerate_rwg(mesh)
    return mesh, basis, assemble_z(mesh, basis, 3e9)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[VERDICTS] = []


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion, echoed in the summary."""
    def record(number, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} crit {number:>2}: {detail}"
        print(line)
        request.config.stash[VERDICTS].append((number, line))
        return passed
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines, key=lambda t: t[0]):
            terminalreporter.write_line(line)
