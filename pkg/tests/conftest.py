import numpy as np
import pytest

from refresh.synthetic import SyntheticSpec, make_synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def planted():
    """Five planted groups of four correlated features, no sensitive proxy."""
    return make_synthetic(SyntheticSpec(n_rows=1500, n_groups=5, group_size=4, seed=3))


@pytest.fixture(scope="session")
def proxy_data():
    """Planted groups plus a three-feature proxy of the sensitive attribute."""
    return make_synthetic(SyntheticSpec(n_rows=1500, n_groups=6, group_size=3, proxy_size=3,
                                        n_independent=4, seed=11))



# (criterion number, line) per acceptance criterion, echoed in the terminal summary so the
# verdicts show up without -s
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
