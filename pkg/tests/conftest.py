import importlib
import os

import pytest
from hypothesis import HealthCheck, settings

from hybridfd import _pykernels

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=300,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def _backends():
    out = [pytest.param(_pykernels, id="python")]
    try:
        out.append(pytest.param(importlib.import_module("hybridfd._ckernels"), id="cython"))
    except ImportError:
        out.append(pytest.param(None, id="cython",
                                marks=pytest.mark.skip(reason="extension not built")))
    return out


@pytest.fixture(scope="session", params=_backends())
def backend(request):
    return request.param


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
