import itertools

import numpy as np
import pytest

from safescale.core import (GoalDistribution, MonteCarloParams, ProcessState,
                            RobotAction, available_actions,
                            default_scenario_fpath, load_config)
from safescale.plan import (PlannerContext, baseline_random,
                            baseline_reactive, baseline_round_robin,
                            greedy_select, make_policy, monte_carlo_select,
                            perform_rollout, propagate)

START = (9.0, 0.0, 0.0)

# Reward of the root step, keyed by the x coordinate of the action goal.
ROOT_REWARD = {0: 0.9, 1: 0.6, 2: 0.5}
# Reward of every later step, keyed by the x coordinate the robot comes from.
NEXT_REWARD = {0: 0.1, 1: 0.9, 2: 0.5}


class ToyPredictor:
    """
    Rewards that make the greedy choice (action 0) worse than action 1 once
    the step after it is taken into account.
    """

    def predict(self, x_r, x_h, g_r, g_h_mu):
        x_r = np.asarray(x_r, dtype=float)
        if np.allclose(x_r, START):
            return ROOT_REWARD[int(round(g_r[0]))]
        return NEXT_REWARD[int(round(x_r[0]))]


class LinearPredictor:
    def __init__(self, seed):
        self.weights = np.random.default_rng(seed).normal(size=12)

    def predict(self, x_r, x_h, g_r, g_h_mu):
        features = np.concatenate([np.asarray(v, dtype=float).reshape(3)
                                   for v in (x_r, x_h, g_r, g_h_mu)])
        return float(1 / (1 + np.exp(-features @ self.weights)))


class RecordingPredictor:
    def __init__(self):
        self.goals = []

    def predict(self, x_r, x_h, g_r, g_h_mu):
        self.goals.append(tuple(np.asarray(g_r, dtype=float).tolist()))
        return 0.5


def _toy_context(seed=0):
    actions = [RobotAction(i, (i, 0, 0)) for i in range(3)]
    goal = GoalDistribution('g', (5, 0, 0))
    return PlannerContext(START, (5, 0, 0), goal, actions,
                          rng=np.random.default_rng(seed),
                          predictor=ToyPredictor())


def _brute_force_value(action, max_len):
    """
    Exact expected value of a root action when every later action is chosen
    uniformly at random.
    """
    value = ROOT_REWARD[action]
    position = action
    dist = {position: 1.0}
    for _ in range(max_len - 1):
        step = sum(p * NEXT_REWARD[x] for x, p in dist.items())
        value += step
        dist = {x: 1 / 3 for x in range(3)}
    return value


def test_greedy_picks_highest_prediction():
    ctx = _toy_context()
    assert greedy_select(ctx).id == 0


def test_greedy_tie_breaks_on_lowest_id():
    class Flat:
        def predict(self, *args):
            return 0.5
    actions = [RobotAction(i, (i, 0, 0)) for i in (3, 1, 2)]
    ctx = PlannerContext(START, START, GoalDistribution('g', START), actions,
                         predictor=Flat())
    assert greedy_select(ctx).id == 1


def test_selection_rejects_empty_action_sets():
    ctx = _toy_context()
    ctx.available = []
    with pytest.raises(ValueError, match='no actions'):
        greedy_select(ctx)
    with pytest.raises(ValueError, match='no actions'):
        monte_carlo_select(ctx, MonteCarloParams(budget=None, rollouts=2))


def test_monte_carlo_looks_past_the_greedy_choice():
    brute = {a: _brute_force_value(a, 2) for a in range(3)}
    best = max(brute, key=brute.get)
    assert best == 1
    params = MonteCarloParams(gamma=0.9, budget=None, max_len=2, rollouts=50)
    chosen, results = monte_carlo_select(_toy_context(), params, return_results=True)
    assert chosen.id == best
    assert [r.action.id for r in results] == [0, 1, 2]
    assert all(r.iterations == 50 for r in results)
    assert results[1].rollout_rewards == [0.9] * 50


def test_monte_carlo_longer_sequences_agree_with_brute_force():
    brute = {a: _brute_force_value(a, 4) for a in range(3)}
    params = MonteCarloParams(gamma=1.0, budget=None, max_len=4, rollouts=400)
    chosen = monte_carlo_select(_toy_context(seed=3), params)
    assert chosen.id == max(brute, key=brute.get)


def test_depth_one_monte_carlo_equals_greedy():
    params = MonteCarloParams(budget=None, max_len=1, rollouts=5)
    rng = np.random.default_rng(0)
    for seed in range(100):
        predictor = LinearPredictor(seed)
        actions = [RobotAction(i, rng.uniform(-1, 1, 3)) for i in range(4)]
        goal = GoalDistribution('g', rng.uniform(-2, 2, 3))
        ctx = PlannerContext(rng.uniform(-1, 1, 3), rng.uniform(-2, 2, 3), goal,
                             actions, rng=np.random.default_rng(seed),
                             predictor=predictor)
        assert monte_carlo_select(ctx, params).id == greedy_select(ctx).id


def test_monte_carlo_finds_the_best_sequence_in_most_trials():
    brute = {a: _brute_force_value(a, 3) for a in range(3)}
    assert brute == pytest.approx({0: 1.5, 1: 2.0, 2: 1.5})
    params = MonteCarloParams(gamma=1.0, budget=None, max_len=3, rollouts=20)
    hits = sum(monte_carlo_select(_toy_context(seed), params).id == 1
               for seed in range(100))
    assert hits >= 95


def test_randomized_policies_need_a_generator():
    actions = [RobotAction(i, (i, 0, 0)) for i in range(3)]
    ctx = PlannerContext(START, START, GoalDistribution('g', START), actions,
                         predictor=ToyPredictor())
    with pytest.raises(ValueError, match='needs ctx.rng'):
        baseline_random(ctx)
    with pytest.raises(ValueError, match='needs ctx.rng'):
        monte_carlo_select(ctx, MonteCarloParams(budget=None, rollouts=2))
    # Deterministic selection works without one.
    assert greedy_select(ctx).id == 0


def test_monte_carlo_is_deterministic_with_fixed_rollouts():
    config = load_config(default_scenario_fpath())
    params = MonteCarloParams(budget=None, max_len=4, rollouts=20)

    def run():
        ctx = PlannerContext((0, 0, 0.8), (1.0, 1.0, 1.0), config.human_goals[0],
                             list(config.place_actions), rng=np.random.default_rng(5),
                             predictor=LinearPredictor(1), config=config,
                             state=ProcessState.initial(config))
        return monte_carlo_select(ctx, params, return_results=True)

    a, results_a = run()
    b, results_b = run()
    assert a.id == b.id
    for ra, rb in zip(results_a, results_b):
        assert ra.rollout_rewards == rb.rollout_rewards


def test_single_action_is_returned_without_search():
    actions = [RobotAction(7, (0, 0, 0))]
    ctx = PlannerContext(START, START, GoalDistribution('g', START), actions,
                         predictor=ToyPredictor())
    chosen, results = monte_carlo_select(ctx, MonteCarloParams(), return_results=True)
    assert chosen.id == 7
    assert results == []


def test_zero_rollouts_warns(monkeypatch):
    import safescale.plan

    class FakeClock:
        def __init__(self):
            self.counter = itertools.count()

        def perf_counter(self):
            return float(next(self.counter))

    monkeypatch.setattr(safescale.plan, 'time', FakeClock())
    params = MonteCarloParams(budget=0.5, max_len=3)
    with pytest.warns(UserWarning, match='no rollouts'):
        chosen, results = monte_carlo_select(_toy_context(), params, return_results=True)
    assert all(r.iterations == 0 for r in results)
    # Scored on the root reward alone, which is the greedy choice.
    assert chosen.id == 0


def test_rollouts_respect_batch_availability():
    config = load_config(default_scenario_fpath('batch'))
    state = ProcessState((('box1', 3), ('box2', 0), ('box3', 0), ('box4', 0)))
    available = available_actions(state, config)
    assert [a.id for a in available] == [2, 3, 4]
    recorder = RecordingPredictor()
    ctx = PlannerContext((0, 0, 0.8), (1.0, 1.0, 1.0), config.human_goals[0],
                         available, rng=np.random.default_rng(0),
                         predictor=recorder, config=config, state=state)
    params = MonteCarloParams(budget=None, max_len=2, rollouts=30)
    monte_carlo_select(ctx, params)
    box1 = tuple(config.action_by_id(1).goal)
    assert recorder.goals
    assert box1 not in recorder.goals


def test_perform_rollout_stops_at_max_len():
    recorder = RecordingPredictor()
    ctx = _toy_context()
    ctx.predictor = recorder
    total = perform_rollout(START, ctx, np.random.default_rng(0), max_len=5, depth=2)
    assert len(recorder.goals) == 3
    assert total == 1.5
    assert perform_rollout(START, ctx, np.random.default_rng(0), max_len=2, depth=2) == 0.0


def test_propagate_uses_observation_when_given():
    class EchoHuman:
        def predict(self, x_r, x_h, g_r, g_h_mu):
            return float(x_h[0])
    goal = GoalDistribution('g', (3.0, 0.0, 0.0))
    g_r, reward = propagate(START, goal, RobotAction(1, (1, 2, 3)), EchoHuman(),
                            np.random.default_rng(0), x_h=(0.25, 0, 0))
    assert g_r.tolist() == [1.0, 2.0, 3.0]
    assert reward == 0.25
    _, reward = propagate(START, goal, RobotAction(1, (1, 2, 3)), EchoHuman(),
                          np.random.default_rng(0))
    assert reward == 3.0


def test_baseline_random_is_uniform():
    actions = [RobotAction(i, (i, 0, 0)) for i in range(4)]
    ctx = PlannerContext(START, START, GoalDistribution('g', START), actions,
                         rng=np.random.default_rng(0))
    counts = np.bincount([baseline_random(ctx).id for _ in range(4000)], minlength=4)
    assert counts.min() > 850


def test_baseline_round_robin_skips_unavailable():
    config = load_config(default_scenario_fpath('batch'))
    state = ProcessState((('box1', 0), ('box2', 3), ('box3', 0), ('box4', 0)))
    ctx = PlannerContext((0, 0, 0), (0, 0, 0), config.human_goals[0],
                         available_actions(state, config), config=config, state=state)
    assert baseline_round_robin(ctx, cursor=1).id == 3
    assert baseline_round_robin(ctx, cursor=4).id == 1


def test_baseline_reactive_moves_away_from_the_human():
    config = load_config(default_scenario_fpath())
    left = config.human_goals[0]
    ctx = PlannerContext((0, 0, 0.8), left.mu, left, list(config.place_actions))
    chosen = baseline_reactive(ctx)
    assert chosen.goal.x > 0


def test_make_policy():
    assert make_policy('random').name == 'random'
    with pytest.raises(ValueError, match='needs a trained model'):
        make_policy('monte-carlo')
    with pytest.raises(KeyError):
        make_policy('oracle')
    policy = make_policy('greedy', predictor=ToyPredictor())
    assert policy.select(_toy_context()).id == 0
