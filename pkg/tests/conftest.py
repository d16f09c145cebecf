import math

import numpy as np
import pytest

from concept_marl.env import AgentState, ArenaConfig, Outcome, Team, WorldState


def pytest_addoption(parser):
    parser.addoption(
        "--skip-slow",
        action="store_true",
        default=False,
        help="skip the long-running training studies in the acceptance suite",
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running training study")


def pytest_collection_modifyitems(config, items):
    if not config.getoption("--skip-slow"):
        return
    skip = pytest.mark.skip(reason="--skip-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def arena() -> ArenaConfig:
    return ArenaConfig()


def make_agent(x, y, heading=0.0, team=Team.ATTACKER, tagged=False, vel=(0.0, 0.0), cooldown=0):
    return AgentState(
        pos=np.array([x, y], dtype=np.float64),
        vel=np.array(vel, dtype=np.float64),
        hx=math.cos(heading),
        hy=math.sin(heading),
        tagged=tagged,
        team=team,
        cooldown=cooldown,
    )


def make_state(agents, t=0, seed=0) -> WorldState:
    return WorldState(
        agents=agents,
        t=t,
        rng=np.random.Generator(np.random.PCG64(seed)),
        outcome=Outcome.ONGOING,
    )


def random_state(rng, config: ArenaConfig) -> WorldState:
    """Arbitrary mid-episode world for geometry tests."""
    agents = []
    for i in range(config.n_agents):
        agents.append(
            make_agent(
                rng.uniform(-config.half_extent, config.half_extent),
                rng.uniform(-config.half_extent, config.half_extent),
                heading=rng.uniform(-math.pi, math.pi),
                team=Team.ATTACKER if i < config.n_per_team else Team.DEFENDER,
                tagged=bool(rng.random() < 0.15),
                vel=rng.uniform(-0.05, 0.05, size=2),
            )
        )
    return make_state(agents, t=int(rng.integers(0, config.max_steps)))
