import os

import numpy as np
import pytest

from safescale.core import default_scenario_fpath, load_config
from safescale.learn.clustering import estimate_k
from safescale.plan import RandomPolicy
from safescale.safety import scaling_at_distance, staircase_for_k
from safescale.sim import COL_S, run_episodes


@pytest.mark.parametrize('K', [3, 5])
def test_recovers_plateau_count_from_clean_samples(K):
    safety = staircase_for_k(K)
    rng = np.random.default_rng(K)
    distances = rng.uniform(0, 3, size=2000)
    samples = scaling_at_distance(safety, distances)
    assert estimate_k(samples, seed=0) == K


def _noisy_staircase_samples(K, seed, size=1000, noise=0.01):
    rng = np.random.default_rng(seed)
    distances = rng.uniform(0, 3, size=size)
    samples = scaling_at_distance(staircase_for_k(K), distances)
    return samples + rng.normal(0, noise, size=size)


@pytest.mark.parametrize('K', [3, 5, 10])
def test_recovers_plateau_count_from_noisy_samples(K):
    samples = _noisy_staircase_samples(K, seed=100 + K)
    assert estimate_k(samples, seed=0) == K


@pytest.mark.slow
@pytest.mark.skipif(not os.environ.get('SAFESCALE_SLOW'),
                    reason='set SAFESCALE_SLOW=1 to run experiment-scale checks')
@pytest.mark.parametrize('K', [3, 5, 10])
def test_recovers_plateau_count_in_every_seeded_trial(K):
    found = [estimate_k(_noisy_staircase_samples(K, seed=trial), seed=trial)
             for trial in range(10)]
    assert found == [K] * 10


def test_recovers_plateau_count_from_simulated_logs():
    config = load_config(default_scenario_fpath())
    results = run_episodes(config, RandomPolicy(), 4, seed=0, duration=120.0)
    samples = np.concatenate([r.log[:, COL_S] for r in results])
    observed = len(np.unique(samples))
    K = estimate_k(samples, seed=0)
    assert 2 <= K <= observed <= config.safety.K


def test_constant_samples_have_one_plateau():
    assert estimate_k(np.full(500, 0.75)) == 1


def test_needs_enough_samples():
    with pytest.raises(ValueError, match='insufficient data'):
        estimate_k(np.linspace(0, 1, 50))


def test_scores_are_reported_and_deterministic():
    samples = scaling_at_distance(staircase_for_k(4), np.linspace(0, 3, 400))
    k1, scores1 = estimate_k(samples, k_max=8, seed=2, return_scores=True)
    k2, scores2 = estimate_k(samples, k_max=8, seed=2, return_scores=True)
    assert k1 == k2 == 4
    assert scores1 == scores2
    # Only four distinct values, so larger counts are not tried.
    assert set(scores1) == {2, 3, 4}
