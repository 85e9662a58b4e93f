import sys
import numpy as np
import pytest

from padlab import ConvLayer, NetworkSpec, Padding


@pytest.fixture
def ones3():
    return np.ones((1, 1, 3, 3))


def ones_net(padding=Padding.none(), bias=0.0):
    return NetworkSpec((ConvLayer(np.ones((1, 1, 3, 3)), bias, padding),))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
