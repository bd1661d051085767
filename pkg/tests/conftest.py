import copy

import pytest

from metaopera.config import DEFAULT_CONFIG, build_world, parse_config


def small_config(**overrides):
    """The default scenario scaled down: shallow chains, short proofs, committee of 10."""
    raw = copy.deepcopy(DEFAULT_CONFIG)
    raw["params"] = {"block_interval": 5, "committee_size": 10, "t_proof": 10, "target_k": 3}
    raw["relay"].update({"k": 2, "nodes": 20, "committee_window": 60})
    for mv in raw["metaverses"]:
        if mv["kind"] == "DM":
            mv["k"] = 3
            mv["nodes"] = 5
    raw.update(overrides)
    return parse_config(raw)


@pytest.fixture
def small_cfg():
    return small_config()


@pytest.fixture
def small_world(small_cfg):
    return build_world(small_cfg)


@pytest.fixture(scope="session")
def default_cfg():
    return parse_config(copy.deepcopy(DEFAULT_CONFIG))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
