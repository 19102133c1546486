"""
Learning
========

Everything needed to turn simulator logs into a scaling predictor.

1. :func:`estimate_k` clusters the logged scaling values and returns the
   number of plateaus K of the (unknown) staircase safety function.

2. :func:`build_network` creates the predictor: hidden blocks of width 64 with
   batch normalization and ReLU, then a Softmax layer of width K and a linear
   output. The Softmax layer lets the output be read as a weighted mix of the
   plateau values.

3. :func:`train` fits it with mini-batch Adam on the windowed-average targets
   produced by :func:`safescale.sim.build_training_set`, after an
   episode-level split from :func:`split_by_episode`.

4. :func:`evaluate_mse` scores a split and returns the actual / predicted
   pairs used by the report's density table.

A minimal round trip on synthetic data:

.. code:: python

    import numpy as np
    from safescale.learn import Dataset, build_network, train, evaluate_mse

    rng = np.random.default_rng(0)
    features = rng.normal(size=(512, 12))
    targets = 1 / (1 + np.exp(-features[:, 0]))
    data = Dataset(features, targets, episodes=np.arange(512) // 32)
    net, history = train(build_network(K=5), data)
    print(evaluate_mse(net, data)[0])

:func:`gradient_check` compares the analytic gradients with central finite
differences and is run by the test-suite on random small networks.
"""
from .clustering import estimate_k
from .network import (ScalingPredictor, build_network, default_hidden_count,
                      expected_param_count, gradient_check, load_predictor,
                      save_predictor)
from .training import (Dataset, TrainingDiverged, TrainingSchedule,
                       evaluate_mse, grid_search_hidden, split_by_episode,
                       train)


def predict(predictor, x_r, x_h, g_r, g_h_mu, return_raw=False):
    """
    Functional form of :meth:`ScalingPredictor.predict`.
    """
    return predictor.predict(x_r, x_h, g_r, g_h_mu, return_raw=return_raw)


__all__ = [
    'estimate_k', 'ScalingPredictor', 'build_network', 'default_hidden_count',
    'expected_param_count', 'gradient_check', 'load_predictor',
    'save_predictor', 'Dataset', 'TrainingDiverged', 'TrainingSchedule',
    'evaluate_mse', 'grid_search_hidden', 'split_by_episode', 'train',
    'predict',
]
