import numpy as np
import pytest

from stabpp.geometry import Window, synth_covariates
from stabpp.likelihood import build_fit_data
from stabpp.simulate import LogLinearModel, calibrate_intercept, sample_poisson, stream

ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_field():
    """Coarse 4-covariate field on the benchmark window."""
    return synth_covariates(3, 4, grid=(51, 26), window=Window(0, 250, 0, 125))


@pytest.fixture(scope="session")
def small_fit(small_field):
    truth = LogLinearModel(0.0, np.array([1.0, -0.5, 0.0, 0.0]))
    model = calibrate_intercept(truth, small_field, small_field.extent, 300)
    pattern = sample_poisson(model, small_field, small_field.extent, stream(11))
    return build_fit_data(pattern, small_field, small_field.extent), model, pattern
