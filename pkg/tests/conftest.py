import time

import pytest

from jetconvex import build_extension, build_modulus, compute_slack
from jetconvex.verify import parabola_jet, reference_suite

SESSION_START = time.perf_counter()
ACCEPTANCE_LINES: dict[str, str] = {}


def make_model(ds, **cfg):
    from jetconvex import ExtensionConfig
    slack = compute_slack(ds)
    mod = build_modulus(slack)
    return build_extension(ds, slack, mod, None, ExtensionConfig(**cfg))


@pytest.fixture(scope="session")
def parabola():
    return parabola_jet()


@pytest.fixture(scope="session")
def parabola_model(parabola):
    return make_model(parabola)


@pytest.fixture(scope="session")
def reference_models():
    """The parabola plus twenty jets sampled from reference convex functions."""
    items = [("parabola", parabola_jet())] + reference_suite(20, seed=2024, max_points=20)
    return [(name, make_model(ds)) for name, ds in items]


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: int(k[1:])):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


def pytest_collection_modifyitems(config, items):
    # acceptance runs last so its runtime criterion sees the whole session
    items.sort(key=lambda item: item.fspath.basename == "test_acceptance.py")
