"""Shared fixtures: solver discovery and the random network suite."""

from __future__ import annotations

import sys

import numpy as np
import pytest

from qnncheck import smt
from qnncheck.network import HyperRect, SafetyProperty
from qnncheck.zoo import random_net, robustness_property


@pytest.fixture(scope="session")
def solver():
    try:
        return smt.default_solver(timeout=120.0)
    except RuntimeError as exc:  # pragma: no cover - solver always bundled
        pytest.skip(f"no SMT solver available: {exc}")


def suite_net(i: int):
    """Net i of the deterministic 20-net random suite (ReLU, <=3 layers,
    <=25 neurons/layer)."""
    shapes = [
        [2, 3, 1], [2, 5, 2], [3, 4, 3], [3, 8, 2], [4, 6, 3],
        [2, 10, 4, 2], [3, 7, 5, 3], [4, 12, 6, 2], [5, 9, 4, 3],
        [3, 25, 2], [2, 16, 8, 2], [4, 5, 5, 5], [6, 10, 3],
        [3, 3, 3, 3], [5, 20, 4], [2, 6, 6, 1], [4, 15, 5, 2],
        [3, 12, 12, 3], [6, 8, 8, 4], [5, 25, 10, 3],
    ]
    dims = shapes[i % len(shapes)]
    return random_net(1000 + i, dims, weight_scale=1.0)


def suite_property(net, i: int) -> SafetyProperty:
    """Deterministic robustness property for suite net i."""
    rng = np.random.default_rng(2000 + i)
    center = [round(float(c), 3) for c in rng.uniform(-1, 1, net.input_dim)]
    radius = [0.05, 0.1, 0.2][i % 3]
    target = i % net.output_dim
    return robustness_property(net, center, radius, target)


@pytest.fixture(scope="session")
def random_suite():
    return [(suite_net(i), suite_property(suite_net(i), i))
            for i in range(20)]


def pytest_terminal_summary(terminalreporter):
    """One pass/fail line per acceptance criterion, after the run."""
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num, ok, desc in sorted(results):
        status = "pass" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {num:2d} [{status}] {desc}")
