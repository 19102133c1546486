import numpy as np
import pytest

from safescale.core import TrainingSchedule, default_scenario_fpath, load_config
from safescale.learn import (Dataset, TrainingDiverged, build_network,
                             evaluate_mse, grid_search_hidden,
                             split_by_episode, train)
from safescale.plan import RandomPolicy
from safescale.sim import build_training_set, run_episodes


def _synthetic(n=600, episodes=20, seed=0):
    """
    Targets are a smooth function of the robot-human distance, like a
    windowed average of a staircase would be.
    """
    rng = np.random.default_rng(seed)
    features = rng.uniform(-1.5, 1.5, size=(n, 12))
    dist = np.linalg.norm(features[:, 0:3] - features[:, 3:6], axis=1)
    targets = np.clip(dist / 3.0, 0, 1)
    return Dataset(features, targets, np.arange(n) % episodes)


def test_split_keeps_episodes_apart():
    data = _synthetic()
    train_set, test_set = split_by_episode(data, 0.2, seed=3)
    assert len(train_set) + len(test_set) == len(data)
    assert not set(train_set.episodes) & set(test_set.episodes)
    assert len(set(test_set.episodes)) == 4
    again = split_by_episode(data, 0.2, seed=3)[1]
    assert np.array_equal(again.episodes, test_set.episodes)


def test_split_with_one_episode_has_empty_test():
    data = Dataset(np.zeros((5, 12)), np.zeros(5), np.zeros(5, dtype=int))
    train_set, test_set = split_by_episode(data, 0.2)
    assert len(train_set) == 5
    assert len(test_set) == 0
    with pytest.raises(ValueError, match='empty split'):
        evaluate_mse(build_network(2, hidden_count=1, width=4), test_set)


def test_training_reduces_the_error():
    data = _synthetic()
    train_set, test_set = split_by_episode(data, 0.2, seed=0)
    net = build_network(3, hidden_count=2, width=16, seed=0)
    net.set_feature_stats(train_set.features)
    before = evaluate_mse(net, test_set)[0]
    schedule = TrainingSchedule(batch_size=64, learning_rate=3e-3, epochs=80, patience=80)
    net, history = train(net, train_set, schedule, test_set=test_set, seed=0)
    after = evaluate_mse(net, test_set)[0]
    assert after < before / 2
    assert len(history) == 80
    assert set(history[0]) == {'epoch', 'train_mse', 'test_mse'}
    best = min(history, key=lambda h: h['test_mse'])
    assert net.metadata['best_epoch'] == best['epoch']
    assert np.isclose(after, best['test_mse'])


def test_training_is_reproducible():
    data = _synthetic(n=200)
    schedule = TrainingSchedule(batch_size=32, epochs=5)
    a, _ = train(build_network(2, hidden_count=1, width=8, seed=1), data, schedule, seed=4)
    b, _ = train(build_network(2, hidden_count=1, width=8, seed=1), data, schedule, seed=4)
    assert np.array_equal(a.predict_batch(data.features), b.predict_batch(data.features))


def test_early_stopping():
    data = _synthetic(n=200)
    train_set, test_set = split_by_episode(data, 0.25, seed=0)
    schedule = TrainingSchedule(batch_size=32, learning_rate=1e-2, epochs=500, patience=3)
    _, history = train(build_network(2, hidden_count=1, width=8), train_set, schedule,
                       test_set=test_set)
    assert len(history) < 500


def test_divergence_keeps_a_checkpoint():
    data = _synthetic(n=128)
    net = build_network(2, hidden_count=1, width=4)
    original = net.loss_and_grads
    calls = {'n': 0}

    def poisoned(*args, **kwargs):
        calls['n'] += 1
        loss, grads = original(*args, **kwargs)
        if calls['n'] > 10:
            loss = float('nan')
        return loss, grads

    net.loss_and_grads = poisoned
    schedule = TrainingSchedule(batch_size=32, epochs=10)
    with pytest.raises(TrainingDiverged) as excinfo:
        train(net, data, schedule)
    assert excinfo.value.epoch == 2
    assert np.isfinite(excinfo.value.checkpoint.predict_batch(data.features)).all()


def test_training_needs_rows():
    empty = Dataset(np.zeros((0, 12)), np.zeros(0), np.zeros(0, dtype=int))
    with pytest.raises(ValueError, match='empty split'):
        train(build_network(2), empty)


def test_grid_search_keeps_the_best_count():
    data = _synthetic(n=300)
    train_set, test_set = split_by_episode(data, 0.2, seed=0)
    schedule = TrainingSchedule(batch_size=64, epochs=5, width=8)
    best, history, rows = grid_search_hidden(2, train_set, test_set, schedule,
                                             counts=(2, 1))
    assert [r['hidden_count'] for r in rows] == [1, 2]
    winner = min(rows, key=lambda r: r['test_mse'])
    assert best.hidden_count == winner['hidden_count']
    assert history


def test_learns_from_simulated_logs():
    config = load_config(default_scenario_fpath())
    results = run_episodes(config, RandomPolicy(), 8, seed=0, duration=90.0)
    data = build_training_set([r.log for r in results], N=30, stride=3)
    train_set, test_set = split_by_episode(data, 0.25, seed=0)
    net = build_network(config.safety.K, hidden_count=2, width=32, seed=0)
    schedule = TrainingSchedule(batch_size=128, learning_rate=3e-3, epochs=30, patience=30)
    net, _ = train(net, train_set, schedule, test_set=test_set)
    baseline = float(np.mean((test_set.targets - train_set.targets.mean()) ** 2))
    assert evaluate_mse(net, test_set)[0] < baseline
