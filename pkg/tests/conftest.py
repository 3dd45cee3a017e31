from __future__ import annotations

import logging

import numpy as np
import pytest

from rgtransport.gaussian import SpectralMultiplier
from rgtransport.lattice import MassParams, build_geometry
from rgtransport.potentials import SineGordonParams, quadratic_model, sine_gordon_model


@pytest.fixture(autouse=True)
def _quiet_sine_gordon_dimension_warning(caplog):
    caplog.set_level(logging.ERROR, logger="rgtransport.potentials")


@pytest.fixture
def unit_mass():
    return MassParams(1.0)


@pytest.fixture
def one_site():
    return build_geometry(2, 1.0, 1.0)


@pytest.fixture
def square2():
    return build_geometry(2, 1.0, 0.5)


@pytest.fixture
def square4():
    return build_geometry(2, 1.0, 0.25)


def make_quadratic(geom, mass, b=1.0):
    return quadratic_model(geom, mass, SpectralMultiplier(geom, mass, np.full(geom.shape, float(b))))


def make_sine_gordon(geom, z, beta=4.0):
    return sine_gordon_model(geom, SineGordonParams(z, beta))


def z_score(a, sa, b, sb):
    return abs(a - b) / np.hypot(sa, sb)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, ok: bool, detail: str = "") -> bool:
    line = f"criterion {number:2d} [{'PASS' if ok else 'FAIL'}] {title}" + (f": {detail}" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
