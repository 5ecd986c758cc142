import contextlib
import io

import numpy as np
import pytest

from tornadocast.cli import main
from tornadocast.synth import SynthConfig, generate, write_yearly_fixture

_acceptance = {}


@pytest.fixture(scope="session")
def yearly_raw(tmp_path_factory):
    return write_yearly_fixture(tmp_path_factory.mktemp("yearly"))


@pytest.fixture(scope="session")
def yearly_prepped(yearly_raw, tmp_path_factory):
    """Run ``prep`` once on the fixture; returns (exit code, stdout, output dir)."""
    weather, events = yearly_raw
    out = tmp_path_factory.mktemp("prepped")
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = main(["prep", str(weather), str(events), str(out / "samples.csv")])
    return code, buf.getvalue(), out


@pytest.fixture
def small_synth():
    return generate(SynthConfig(n_samples=600, n_features=4, tornado_rate=0.2, separability=4.0, seed=7))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _acceptance[name] = "SKIP" if report.skipped else report.outcome.upper()


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_acceptance, key=lambda n: int(n.split("_")[2])):
        terminalreporter.write_line(f"{_acceptance[name]:>7}  {name}")
