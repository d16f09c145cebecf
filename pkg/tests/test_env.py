import math

import numpy as np
import pytest
from scipy import stats

from concept_marl.env import (
    Action,
    ArenaConfig,
    ConfigError,
    Outcome,
    Team,
    UsageError,
    observation_size,
    observe,
    reset,
    reward,
    step,
    tag_check,
    win_check,
    wrap_angle,
)

from conftest import make_agent, make_state


def test_reset_is_deterministic(arena):
    a = reset(arena, seed=7)
    b = reset(arena, seed=7)
    assert a.canonical_bytes() == b.canonical_bytes()
    c = reset(arena, seed=8)
    assert a.canonical_bytes() != c.canonical_bytes()


def test_reset_attackers_spawn_in_lower_half(arena):
    for seed in range(200):
        state = reset(arena, seed=seed)
        for i in range(arena.n_per_team):
            assert state.agents[i].pos[1] < 0.0
            assert state.agents[i].team == Team.ATTACKER


def test_reset_attacker_x_uniform_over_lower_half(arena):
    # chi-square goodness of fit over a 20-bin histogram of spawn x
    xs = []
    for seed in range(10000):
        state = reset(arena, seed=seed)
        xs.append(state.agents[0].pos[0])
    counts, _ = np.histogram(xs, bins=20, range=(-1.0, 1.0))
    _, p = stats.chisquare(counts)
    assert p > 0.001


def test_reset_rejects_bad_config():
    with pytest.raises(ConfigError):
        ArenaConfig(tag_range=0.0)
    with pytest.raises(ConfigError):
        ArenaConfig(max_steps=0)
    with pytest.raises(ConfigError):
        ArenaConfig(tag_half_angle=math.pi)


def test_noop_step_advances_by_velocity(arena):
    agents = [
        make_agent(0.0, -0.5, vel=(0.01, 0.02)),
        make_agent(0.5, -0.5),
        make_agent(0.0, 0.5, team=Team.DEFENDER),
        make_agent(0.5, 0.5, team=Team.DEFENDER),
    ]
    state = make_state(agents)
    nxt, rewards, info = step(state, [Action.NOOP] * 4, arena)
    np.testing.assert_allclose(nxt.agents[0].pos, [0.01, -0.48], rtol=0, atol=0)
    assert not info.tags and not info.misses
    assert nxt.t == 1


def test_step_after_terminal_raises(arena):
    state = reset(arena, seed=0)
    state.outcome = Outcome.DEFENDERS_WIN
    with pytest.raises(UsageError):
        step(state, [Action.NOOP] * 4, arena)


def test_tag_check_distance_boundary(arena):
    # defender at origin facing +x, attacker straight ahead
    for dist, expected in [(0.79, True), (0.5, True), (0.81, False)]:
        agents = [
            make_agent(dist, 0.0),
            make_agent(0.9, -0.9),
            make_agent(0.0, 0.0, team=Team.DEFENDER),
            make_agent(-0.9, -0.9, team=Team.DEFENDER),
        ]
        state = make_state(agents)
        assert tag_check(state, 2, 0, arena) is expected


def test_tag_check_angle_bound(arena):
    # attacker at distance 0.5, offset pi/4 from the defender's heading
    off = math.pi / 4
    agents = [
        make_agent(0.5 * math.cos(off), 0.5 * math.sin(off)),
        make_agent(0.9, -0.9),
        make_agent(0.0, 0.0, team=Team.DEFENDER),
        make_agent(-0.9, -0.9, team=Team.DEFENDER),
    ]
    state = make_state(agents)
    assert tag_check(state, 2, 0, arena) is False
    # within the pi/5 cone instead
    off = math.pi / 6
    agents[0] = make_agent(0.5 * math.cos(off), 0.5 * math.sin(off))
    state = make_state(agents)
    assert tag_check(state, 2, 0, arena) is True


def test_tag_check_same_team_raises(arena):
    state = reset(arena, seed=3)
    with pytest.raises(UsageError):
        tag_check(state, 0, 1, arena)


def test_tag_check_respects_cooldown_and_flag(arena):
    agents = [
        make_agent(0.5, 0.0),
        make_agent(0.9, -0.9),
        make_agent(0.0, 0.0, team=Team.DEFENDER, cooldown=3),
        make_agent(-0.9, -0.9, team=Team.DEFENDER),
    ]
    state = make_state(agents)
    assert tag_check(state, 2, 0, arena) is False
    assert tag_check(state, 2, 0, arena, ignore_cooldown=True) is True
    state.agents[0].tagged = True
    assert tag_check(state, 2, 0, arena, ignore_cooldown=True) is False


def test_step_tag_marks_attacker(arena):
    agents = [
        make_agent(0.5, 0.0),
        make_agent(0.9, -0.9),
        make_agent(0.0, 0.0, team=Team.DEFENDER),
        make_agent(-0.9, -0.9, team=Team.DEFENDER),
    ]
    state = make_state(agents)
    actions = [Action.NOOP, Action.NOOP, Action.TAG, Action.NOOP]
    nxt, rewards, info = step(state, actions, arena)
    assert nxt.agents[0].tagged
    assert (2, 0) in info.tags
    assert rewards[2] >= arena.r_tag - arena.r_ori_coeff
    assert nxt.agents[2].cooldown == arena.tag_cooldown


def test_step_tag_miss_penalized(arena):
    agents = [
        make_agent(0.5, 0.0),
        make_agent(0.9, -0.9),
        make_agent(0.0, 0.0, team=Team.DEFENDER, heading=math.pi),  # facing away
        make_agent(-0.9, -0.9, team=Team.DEFENDER),
    ]
    state = make_state(agents)
    nxt, rewards, info = step(state, [Action.NOOP, Action.NOOP, Action.TAG, Action.NOOP], arena)
    assert 2 in info.misses
    assert rewards[2] <= -arena.r_miss


def test_mutual_tags_resolve_simultaneously(arena):
    agents = [
        make_agent(0.5, 0.0, heading=math.pi),  # attacker facing defender
        make_agent(0.9, -0.9),
        make_agent(0.0, 0.0, team=Team.DEFENDER, heading=0.0),  # facing attacker
        make_agent(-0.9, -0.9, team=Team.DEFENDER),
    ]
    state = make_state(agents)
    nxt, _, info = step(state, [Action.TAG, Action.NOOP, Action.TAG, Action.NOOP], arena)
    assert nxt.agents[0].tagged and nxt.agents[2].tagged
    assert (0, 2) in info.tags and (2, 0) in info.tags


def test_attacker_reaching_goal_wins(arena):
    gx, gy = arena.goal_position
    agents = [
        make_agent(gx, gy - arena.goal_radius + 0.01),
        make_agent(0.9, -0.9),
        make_agent(-0.5, 0.0, team=Team.DEFENDER),
        make_agent(-0.9, -0.9, team=Team.DEFENDER),
    ]
    state = make_state(agents)
    nxt, rewards, info = step(state, [Action.NOOP] * 4, arena)
    assert nxt.outcome == Outcome.ATTACKERS_WIN
    assert info.attackers_won
    assert rewards[2] <= -arena.r_lose + 0.01


def test_win_check_cases(arena):
    state = reset(arena, seed=0)
    assert win_check(state, arena) == Outcome.ONGOING
    for i in range(arena.n_per_team):
        state.agents[i].tagged = True
    state.t = 3
    assert win_check(state, arena) == Outcome.DEFENDERS_WIN
    state2 = reset(arena, seed=0)
    state2.t = arena.max_steps
    assert win_check(state2, arena) == Outcome.DEFENDERS_WIN


def test_tagged_goal_attacker_does_not_win(arena):
    gx, gy = arena.goal_position
    agents = [
        make_agent(gx, gy, tagged=True),
        make_agent(0.9, -0.9, tagged=True),
        make_agent(-0.5, 0.0, team=Team.DEFENDER),
        make_agent(-0.9, -0.9, team=Team.DEFENDER),
    ]
    state = make_state(agents)
    assert win_check(state, arena) == Outcome.DEFENDERS_WIN


def test_defender_team_win_reward(arena):
    # one untagged attacker remains; defender tags it and the team wins
    agents = [
        make_agent(0.5, 0.0),
        make_agent(0.9, -0.9, tagged=True),
        make_agent(0.0, 0.0, team=Team.DEFENDER),
        make_agent(-0.9, -0.9, team=Team.DEFENDER),
    ]
    state = make_state(agents)
    nxt, rewards, info = step(state, [Action.NOOP, Action.NOOP, Action.TAG, Action.NOOP], arena)
    assert nxt.outcome == Outcome.DEFENDERS_WIN
    assert rewards[2] == pytest.approx(arena.r_tag + arena.r_win)
    assert rewards[3] == pytest.approx(arena.r_win - arena.r_ori_coeff * 0.0, abs=arena.r_ori_coeff)


def test_reward_zero_when_facing_and_uneventful(arena):
    agents = [
        make_agent(0.5, 0.0),
        make_agent(0.9, -0.9),
        make_agent(0.0, 0.0, team=Team.DEFENDER, heading=0.0),  # exactly facing nearest
        make_agent(-0.9, -0.9, team=Team.DEFENDER, heading=math.atan2(0.0, 1.0)),
    ]
    state = make_state(agents)
    nxt, rewards, info = step(state, [Action.NOOP] * 4, arena)
    assert rewards[2] == 0.0


def test_reward_requires_defender(arena):
    state = reset(arena, seed=1)
    nxt, _, info = step(state, [Action.NOOP] * 4, arena)
    with pytest.raises(UsageError):
        reward(state, nxt, info, 0, arena)


def test_observation_identity_case(arena):
    agents = [
        make_agent(0.3, -0.4, heading=0.7),
        make_agent(0.3, -0.4, heading=0.7),
        make_agent(0.0, 0.5, team=Team.DEFENDER),
        make_agent(0.1, 0.5, team=Team.DEFENDER),
    ]
    state = make_state(agents)
    obs = observe(state, 0, arena)
    np.testing.assert_allclose(obs[6:8], [0.0, 0.0], atol=1e-15)
    assert obs[10] == 0.0  # relative heading


def test_observation_opponent_ahead(arena):
    d = 0.62
    agents = [
        make_agent(d, 0.0),
        make_agent(0.9, -0.9),
        make_agent(0.0, 0.0, team=Team.DEFENDER, heading=0.0),
        make_agent(-0.9, -0.9, team=Team.DEFENDER),
    ]
    state = make_state(agents)
    obs = observe(state, 2, arena)
    # first other agent is attacker 0: forward distance d, lateral 0
    assert obs[6] == pytest.approx(d / arena.half_extent, abs=1e-12)
    assert obs[7] == pytest.approx(0.0, abs=1e-12)


def test_observation_matches_independent_geometry_oracle(arena):
    from conftest import random_state

    rng = np.random.default_rng(42)
    for _ in range(50):
        state = random_state(rng, arena)
        agent = int(rng.integers(0, arena.n_agents))
        obs = observe(state, agent, arena)
        a = state.agents[agent]
        # independent recomputation with rotation matrices
        theta = math.atan2(a.hy, a.hx)
        rot = np.array(
            [[math.cos(-theta), -math.sin(-theta)], [math.sin(-theta), math.cos(-theta)]]
        )
        expected = [
            a.pos[0] / arena.half_extent,
            a.pos[1] / arena.half_extent,
            math.cos(theta),
            math.sin(theta),
            *(rot @ a.vel),
        ]
        for idx, b in enumerate(state.agents):
            if idx == agent:
                continue
            rel = rot @ (b.pos - a.pos) / arena.half_extent
            relv = rot @ (b.vel - a.vel)
            expected.extend([rel[0], rel[1], relv[0], relv[1],
                             wrap_angle(b.heading - a.heading), float(b.tagged)])
        np.testing.assert_allclose(obs, expected, atol=1e-12)
    assert observation_size(arena.n_per_team) == len(obs)


def _random_episode(seed, arena, max_t=None):
    rng = np.random.default_rng(seed)
    state = reset(arena, seed=seed)
    states = [state]
    while state.outcome == Outcome.ONGOING and (max_t is None or state.t < max_t):
        actions = [Action(int(rng.integers(0, 6))) for _ in range(arena.n_agents)]
        state, _, _ = step(state, actions, arena)
        states.append(state)
    return states


def test_rollout_invariants(arena):
    for seed in range(5):
        states = _random_episode(seed, arena)
        assert states[-1].outcome != Outcome.ONGOING
        assert len(states) - 1 <= arena.max_steps
        tagged_prev = [False] * arena.n_agents
        for s in states:
            for i, a in enumerate(s.agents):
                assert abs(a.pos[0]) <= arena.half_extent + 1e-12
                assert abs(a.pos[1]) <= arena.half_extent + 1e-12
                if tagged_prev[i]:
                    assert a.tagged  # tagged is monotone
            tagged_prev = [a.tagged for a in s.agents]
            assert len(s.agents) == arena.n_agents


def test_step_determinism(arena):
    s1 = reset(arena, seed=11)
    s2 = reset(arena, seed=11)
    actions = [Action.ACCEL_FORWARD, Action.ROTATE_LEFT, Action.TAG, Action.ROTATE_RIGHT]
    a, _, _ = step(s1, actions, arena)
    b, _, _ = step(s2, actions, arena)
    assert a.canonical_bytes() == b.canonical_bytes()


MIRROR_ACTION = {
    Action.ROTATE_LEFT: Action.ROTATE_RIGHT,
    Action.ROTATE_RIGHT: Action.ROTATE_LEFT,
}


def _mirror_state(state, arena):
    mirrored = state.copy()
    for a in mirrored.agents:
        a.pos[0] = -a.pos[0]
        a.vel[0] = -a.vel[0]
        a.hx = -a.hx
    return mirrored


def test_mirror_symmetry_is_exact():
    # goal on the mirror axis so the arena is symmetric
    arena = ArenaConfig(goal_position=(0.0, 0.8))
    rng = np.random.default_rng(5)
    from conftest import random_state

    state = random_state(rng, arena)
    mirror = _mirror_state(state, arena)
    for _ in range(60):
        if state.outcome != Outcome.ONGOING:
            break
        actions = [Action(int(rng.integers(0, 6))) for _ in range(arena.n_agents)]
        m_actions = [MIRROR_ACTION.get(a, a) for a in actions]
        state, r1, _ = step(state, actions, arena)
        mirror, r2, _ = step(mirror, m_actions, arena)
        for a, b in zip(state.agents, mirror.agents):
            assert a.pos[0] == -b.pos[0] and a.pos[1] == b.pos[1]
            assert a.vel[0] == -b.vel[0] and a.vel[1] == b.vel[1]
            assert a.hx == -b.hx and a.hy == b.hy
            assert a.tagged == b.tagged
        assert state.outcome == mirror.outcome
        np.testing.assert_array_equal(r1, r2)
