import tempfile

import numpy as np
import pytest
import scipy.stats
import ubelt as ub

from safescale.core import (config_to_dict, default_scenario_fpath, load_config,
                            parse_config)
from safescale.plan import RandomPolicy, RoundRobinPolicy
from safescale.safety import eval_scaling
from safescale.sim import (COL_GH, COL_GR, COL_S, COL_T, COL_XH, COL_XR,
                           LOG_COLUMNS, TaskMetric, World, build_training_set,
                           read_log, read_metrics, run_episode, run_episodes,
                           step_sim, write_log, write_metrics)


@pytest.fixture(scope='module')
def config():
    return load_config(default_scenario_fpath())


def test_log_rows_follow_the_safety_function(config):
    result = run_episode(config, RandomPolicy(), duration=120.0, seed=3)
    log = result.log
    assert log.shape == (1200, len(LOG_COLUMNS))
    assert np.allclose(np.diff(log[:, COL_T]), config.sample_period)
    for row in log[::37]:
        expected = eval_scaling(config.safety, row[COL_XR], row[COL_XH])
        assert row[COL_S] == expected
    assert set(np.unique(log[:, COL_S])) <= set(config.safety.values)
    mus = {tuple(g.mu) for g in config.human_goals}
    assert {tuple(r) for r in log[:, COL_GH]} <= mus
    goals = {tuple(a.goal) for a in config.robot_actions}
    assert {tuple(r) for r in log[:, COL_GR]} <= goals


def test_robot_speed_is_scaled(config):
    result = run_episode(config, RandomPolicy(), duration=60.0, seed=5)
    log = result.log
    x_r = log[:, COL_XR]
    g_r = log[:-1, COL_GR]
    step = np.linalg.norm(np.diff(x_r, axis=0), axis=1)
    expected = config.robot_nominal_speed * log[:-1, COL_S] * config.sample_period
    assert (step <= expected + 1e-9).all()

    # Away from the goal at both ends of the tick the robot covers exactly
    # nominal speed times scaling times dt.
    moving = np.linalg.norm(x_r[:-1] - g_r, axis=1) > 1e-9
    arriving = np.linalg.norm(x_r[1:] - g_r, axis=1) <= 1e-9
    cruising = moving & ~arriving
    assert cruising.sum() > 100
    assert np.allclose(step[cruising], expected[cruising], atol=1e-9)

    # The last tick moves the robot past the last logged row.
    assert step.sum() <= result.robot_travelled + 1e-9
    assert result.robot_travelled - step.sum() <= expected.max() + 1e-9


def test_robot_stops_when_scaling_is_zero(config):
    world = World.create(config)
    world.robot.position = np.array([0.0, 0.0, 1.0])
    world.robot.goal = np.array([1.0, 0.0, 1.0])
    world.robot.phase = 'moving'
    world.human.position = np.array([0.1, 0.0, 1.0])
    world.human.dwell_remaining = 100.0
    step_sim(world)
    assert world.robot.current_scaling == 0.0
    assert world.robot.position.tolist() == [0.0, 0.0, 1.0]


def test_episodes_are_deterministic(config):
    a = run_episode(config, RandomPolicy(), task_limit=4, seed=11, episode=2)
    b = run_episode(config, RandomPolicy(), task_limit=4, seed=11, episode=2)
    assert np.array_equal(a.log, b.log)
    assert a.decisions == b.decisions
    c = run_episode(config, RandomPolicy(), task_limit=4, seed=11, episode=3)
    assert not np.array_equal(a.log[:50, COL_XH], c.log[:50, COL_XH])


def test_human_does_not_depend_on_policy(config):
    a = run_episode(config, RandomPolicy(), duration=40.0, seed=1)
    b = run_episode(config, RoundRobinPolicy(), duration=40.0, seed=1)
    assert np.array_equal(a.log[:, COL_XH], b.log[:, COL_XH])
    assert a.human_visits == b.human_visits


def test_human_visits_are_uniform(config):
    visits = []
    for result in run_episodes(config, RandomPolicy(), 6, seed=0, duration=300.0):
        visits.extend(result.human_visits)
    counts = np.bincount(visits, minlength=len(config.human_goals))
    assert counts.sum() > 150
    assert scipy.stats.chisquare(counts).pvalue > 0.01


def test_task_metrics(config):
    result = run_episode(config, RoundRobinPolicy(), task_limit=5, seed=2)
    assert len(result.metrics) == 5
    assert [m.action_id for m in result.metrics] == [1, 2, 3, 4, 1]
    for m in result.metrics:
        # Place dwell plus pick dwell bound every task from below.
        assert m.exec_time >= config.dwell.place + config.dwell.pick - 1e-9
        assert 0.0 <= m.mean_scaling <= 1.0
    starts = [m.start_t for m in result.metrics]
    assert starts == sorted(starts)
    assert [t for t, _ in result.decisions] == starts


def test_single_action_workspace():
    config = parse_config({
        'robot_actions': [{'id': 1, 'goal': [0.5, 0.0, 0.8]}],
        'human_goals': [{'id': 'far', 'mu': [5.0, 5.0, 1.0]}],
        'safety': {'thresholds': [1.0], 'values': [0.5, 1.0]},
        'dwell': {'pick': 0.0, 'place': 0.5, 'human': 1.0},
    })
    result = run_episode(config, RandomPolicy(), task_limit=3, seed=0)
    assert [m.action_id for m in result.metrics] == [1, 1, 1]


@pytest.mark.parametrize('lead_time', [0.5, 4.0])
def test_lead_time_uses_an_older_observation(lead_time):
    raw = config_to_dict(load_config(default_scenario_fpath()))
    raw['mc']['lead_time'] = lead_time
    config = parse_config(raw)
    assert lead_time != config.dwell.pick

    seen = []

    class Spy(RandomPolicy):
        def select(self, ctx):
            seen.append(ctx.x_h.copy())
            return super().select(ctx)

    result = run_episode(config, Spy(), task_limit=4, seed=4)
    log = result.log
    dt = config.sample_period
    assert len(result.observed_at) == len(result.decisions) == len(seen)
    for (t, _), obs_t, x_h in zip(result.decisions, result.observed_at, seen):
        assert obs_t == pytest.approx(max(0.0, t - lead_time))
        assert np.array_equal(x_h, log[int(round(obs_t / dt)), COL_XH])
    # Every decision after the first is late enough to see the full lag.
    ages = [t - obs_t for (t, _), obs_t in zip(result.decisions, result.observed_at)]
    assert ages[1:] == pytest.approx([lead_time] * (len(ages) - 1))


def test_zero_lead_time_observes_the_present(config):
    result = run_episode(config, RandomPolicy(), task_limit=3, seed=4)
    assert [t for t, _ in result.decisions] == result.observed_at


def test_build_training_set_windows(config):
    results = run_episodes(config, RandomPolicy(), 2, seed=0, duration=30.0)
    logs = [r.log for r in results]
    N = 50
    data = build_training_set(logs, N)
    assert len(data) == 2 * (300 - N)
    assert set(data.episodes.tolist()) == {0, 1}
    first = logs[0]
    assert np.isclose(data.targets[0], first[:N + 1, COL_S].mean())
    assert np.allclose(data.features[0], first[0, 2:14])
    # Concatenated logs give the same rows: windows never cross episodes.
    again = build_training_set(np.concatenate(logs), N)
    assert np.allclose(again.targets, data.targets)
    strided = build_training_set(logs, N, stride=10)
    assert len(strided) == 2 * 25


def test_build_training_set_too_short(config):
    log = run_episode(config, RandomPolicy(), duration=1.0).log
    with pytest.raises(ValueError, match='no trainable windows'):
        build_training_set(log, 10)


def test_log_and_metrics_files(config):
    result = run_episode(config, RandomPolicy(), task_limit=2, seed=0)
    dpath = ub.Path(tempfile.mkdtemp())
    fpath = write_log(dpath / 'log.csv', result.log)
    header = fpath.read_text().splitlines()[0]
    assert header == ','.join(LOG_COLUMNS)
    assert np.allclose(read_log(fpath), result.log, rtol=1e-11, atol=0)
    mpath = write_metrics(dpath / 'metrics.csv', result.metrics)
    again = read_metrics(mpath)
    assert [m.action_id for m in again] == [m.action_id for m in result.metrics]


def test_metrics_keep_ids_with_delimiters():
    metrics = [TaskMetric(0, 0, 'box, left', 0.0, 9.5, 0.75),
               TaskMetric(0, 1, 'shelf "A"', 9.5, 20.25, 0.5),
               TaskMetric(1, 0, 3, 0.0, 4.0, 1.0)]
    dpath = ub.Path(tempfile.mkdtemp())
    fpath = write_metrics(dpath / 'metrics.csv', metrics)
    assert read_metrics(fpath) == metrics
    assert len(fpath.read_text().splitlines()) == 4


def test_parallel_runs_match_serial(config):
    serial = run_episodes(config, RandomPolicy(), 2, seed=9, task_limit=2)
    parallel = run_episodes(config, RandomPolicy(), 2, seed=9, task_limit=2, workers=2)
    for a, b in zip(serial, parallel):
        assert np.array_equal(a.log, b.log)
