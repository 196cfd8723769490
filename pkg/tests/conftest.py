import numpy as np
import pytest

from tailforge import _pykernels, kernels

BACKENDS = [pytest.param(_pykernels, id="python")]
if kernels.compiled_backend is not None:
    BACKENDS.append(pytest.param(kernels.compiled_backend, id="cython"))


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion reported in the summary")
    config._criteria = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "setup":
        item._setup_duration = report.duration
    if report.when == "call" or report.failed:
        n, title = marker.args
        elapsed = report.duration + (getattr(item, "_setup_duration", 0.0) if report.when == "call" else 0.0)
        item.config._criteria.append((n, title, report.passed, elapsed))


def pytest_terminal_summary(terminalreporter, config):
    if not config._criteria:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n, title, passed, duration in sorted(config._criteria):
        terminalreporter.write_line(f"criterion {n}: {'PASS' if passed else 'FAIL'}  {title}  ({duration:.2f} s)")
