import pytest

from ionphotonics import waveoptics as wo
from ionphotonics.design import align_working_distance, asphere_only, default_config, design_assembly
from ionphotonics.raytrace import trace


@pytest.fixture(scope="session")
def cfg():
    return default_config()


@pytest.fixture(scope="session")
def wd(cfg):
    return align_working_distance(cfg)


@pytest.fixture(scope="session")
def collimated_bundle(cfg, wd):
    return trace(asphere_only(cfg, wd), 0.8, "grid", 65)


@pytest.fixture(scope="session")
def design_bundle(cfg, wd):
    return trace(design_assembly(cfg, working_distance=wd), 0.8, "grid", 97)


@pytest.fixture(scope="session")
def design_pupil(design_bundle):
    return wo.build_pupil(design_bundle, 256)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for cid in sorted(LINES):
            terminalreporter.write_line(LINES[cid])
