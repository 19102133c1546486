"""
SafeScale
=========

Learned safety speed scaling for human-robot collaborative pick and place.

A safety system slows a collaborative robot down as the human comes closer.
:py:mod:`safescale` learns to predict the average slowdown the robot will
experience over the next few seconds for each candidate action, and uses that
prediction to choose the next action: greedily, or by parallel Monte Carlo
search over future action sequences.

Installation
============

.. code:: bash

    pip install safescale

    # with rich console output and report plots
    pip install safescale[optional]


Basic Usage
===========

The command line harness runs the whole pipeline in one output directory:

.. code:: bash

    safescale collect --episodes 200 --out runs/demo
    safescale estimate-k --out runs/demo
    safescale train --out runs/demo
    safescale evaluate --policy greedy --out runs/demo
    safescale evaluate --policy random --out runs/demo
    safescale report --out runs/demo

The same steps are available from Python:

.. code:: python

    from safescale.core import load_config, default_scenario_fpath
    from safescale.plan import GreedyPolicy, RandomPolicy
    from safescale.sim import run_episodes, build_training_set
    from safescale.learn import build_network, train, split_by_episode

    config = load_config(default_scenario_fpath())
    logs = [r.log for r in run_episodes(config, RandomPolicy(), 50)]
    data = build_training_set(logs, config.window_length)
    train_set, test_set = split_by_episode(data)
    net, history = train(build_network(config.safety.K), train_set,
                         config.train, test_set=test_set)
    results = run_episodes(config, GreedyPolicy(net), 5, phase_key=1)


Profiling
=========

The simulator step, the episode loop, the Monte Carlo rollout and the training
epoch are decorated with :py:obj:`line_profiler.profile`. Set
``LINE_PROFILE=1`` or pass ``--line-profile`` to the harness to get a
line-by-line timing report when the process exits.
"""
# NOTE: This needs to be in sync with safescale/cli.py
__version__ = '0.1.0'

from .core import (GoalDistribution, RobotAction, Vec3, WorkspaceConfig,
                   available_actions, get_robot_goal, load_config,
                   sample_goal)
from .safety import StaircaseSafety, eval_scaling, window_average
from .plan import greedy_select, make_policy, monte_carlo_select, propagate

__all__ = [
    '__version__', 'GoalDistribution', 'RobotAction', 'Vec3',
    'WorkspaceConfig', 'available_actions', 'get_robot_goal', 'load_config',
    'sample_goal', 'StaircaseSafety', 'eval_scaling', 'window_average',
    'greedy_select', 'make_policy', 'monte_carlo_select', 'propagate',
]
