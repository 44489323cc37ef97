from __future__ import annotations

import re

import numpy as np
import pytest

from wristsonar.chirp import ChirpSpec, generate_chirp
from wristsonar.sim import Reflector, SceneSpec, simulate

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+[ab]?)_([a-z0-9_]+)")


@pytest.fixture(scope="session")
def chirp_spec() -> ChirpSpec:
    return ChirpSpec()


@pytest.fixture(scope="session")
def tx(chirp_spec) -> np.ndarray:
    return generate_chirp(chirp_spec)


@pytest.fixture(scope="session")
def static_scene() -> SceneSpec:
    """One fixed reflector at 12 cm, no jitter, no noise."""
    return SceneSpec(
        reflectors=(Reflector(keyframes=((0.0, 0.12),), reflectivity=0.3 * 0.12**2),),
        duration=2.0,
    )


@pytest.fixture(scope="session")
def static_mic(static_scene) -> np.ndarray:
    return simulate(static_scene, seed=7)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one PASS/FAIL line per acceptance criterion at the end of the run."""
    results: dict[tuple[str, str], str] = {}
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            match = _CRITERION.search(getattr(report, "nodeid", ""))
            if match and getattr(report, "when", "call") in ("call", "setup"):
                key = (match.group(1), match.group(2))
                status = "PASS" if outcome == "passed" else "FAIL"
                if results.get(key) != "FAIL":
                    results[key] = status
    if not results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num, slug in sorted(results):
        terminalreporter.write_line(f"CRITERION {num} ({slug}): {results[(num, slug)]}")
