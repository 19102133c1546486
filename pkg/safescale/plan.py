"""
Action selection policies.

Learning-based policies score an action by the predicted average scaling over
the next predictive window:

* :func:`greedy_select` takes the action whose single-window prediction is
  highest.
* :func:`monte_carlo_select` runs one worker per available action. Each
  worker propagates its action from the observed state and then repeats
  random rollouts (uniform action, uniform human goal) until its time or
  rollout budget is spent. The action with the best average accumulated
  reward wins.

Baselines that ignore the predictor are :func:`baseline_random`,
:func:`baseline_round_robin` and :func:`baseline_reactive`.

A predictor is anything with a ``predict(x_r, x_h, g_r, g_h_mu)`` method
returning a float, normally a :class:`safescale.learn.network.ScalingPredictor`.

Example:
    >>> from safescale.plan import *  # NOQA
    >>> from safescale.core import RobotAction, GoalDistribution
    >>> class Toy:
    >>>     def predict(self, x_r, x_h, g_r, g_h_mu):
    >>>         return {1.0: 0.6, 2.0: 0.9}[float(g_r[0])]
    >>> actions = [RobotAction(1, (1, 0, 0)), RobotAction(2, (2, 0, 0))]
    >>> ctx = PlannerContext(x_r=(0, 0, 0), x_h=(5, 0, 0),
    >>>                      current_goal=GoalDistribution('g', (5, 0, 0)),
    >>>                      available=actions, predictor=Toy())
    >>> greedy_select(ctx).id
    2
    >>> baseline_reactive(ctx).id
    1
"""
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import ubelt as ub
from line_profiler import profile

from .core import (MonteCarloParams, ProcessState, action_key,
                   available_actions, get_robot_goal, sample_goal)

__all__ = [
    'PlannerContext', 'MonteCarloParams', 'WorkerResult',
    'greedy_select', 'monte_carlo_select', 'perform_rollout', 'propagate',
    'baseline_random', 'baseline_round_robin', 'baseline_reactive',
    'RandomPolicy', 'RoundRobinPolicy', 'ReactivePolicy', 'GreedyPolicy',
    'MonteCarloPolicy', 'make_policy', 'POLICY_NAMES',
]

POLICY_NAMES = ('random', 'round-robin', 'reactive', 'greedy', 'monte-carlo')


@dataclass
class PlannerContext:
    """
    What a policy sees at a decision step.

    Attributes:
        x_r (ArrayLike): robot end-effector position.
        x_h (ArrayLike): observed human position.
        current_goal (GoalDistribution): goal the human currently works toward.
        available (List[RobotAction]): legal actions, non-empty.
        rng (numpy.random.Generator | None): generator owned by the policy
            stream. Only randomized selection needs it.
        predictor: scaling predictor, may be None for baselines.
        state (ProcessState | None): slot fill state, used by rollouts.
        config (WorkspaceConfig | None): scenario, used by rollouts for
            availability and the human goal set.
        human_goals (Tuple[GoalDistribution]): goal set sampled by rollouts;
            defaults to ``config.human_goals``.
    """
    x_r: object
    x_h: object
    current_goal: object
    available: list
    rng: object = None
    predictor: object = None
    state: object = None
    config: object = None
    human_goals: tuple = field(default=())

    def __post_init__(self):
        self.x_r = np.asarray(tuple(self.x_r), dtype=float)
        self.x_h = np.asarray(tuple(self.x_h), dtype=float)
        if not self.human_goals:
            if self.config is not None:
                self.human_goals = tuple(self.config.human_goals)
            else:
                self.human_goals = (self.current_goal,)
        if self.state is None:
            self.state = ProcessState()

    def actions_in(self, state):
        """
        Legal actions in a (possibly hypothetical) process state.
        """
        if self.config is None:
            return sorted(self.available, key=action_key)
        return available_actions(state, self.config)


def _sorted_or_raise(actions):
    if not actions:
        raise ValueError('no actions')
    return sorted(actions, key=action_key)


def _predict(predictor, x_r, x_h, g_r, g_h_mu):
    return float(predictor.predict(x_r, x_h, g_r, g_h_mu))


def _require_predictor(ctx):
    if ctx.predictor is None:
        raise ValueError('this policy needs a trained predictor')
    return ctx.predictor


def _require_rng(ctx):
    if ctx.rng is None:
        raise ValueError('this policy needs ctx.rng; pass a seeded numpy Generator')
    return ctx.rng


def greedy_select(ctx):
    """
    Action maximizing the predicted average scaling of the next window.
    Ties go to the lowest action id.

    Raises:
        ValueError: "no actions" for an empty action set.
    """
    actions = _sorted_or_raise(ctx.available)
    predictor = _require_predictor(ctx)
    g_h_mu = ctx.current_goal.mu.as_array()
    best, best_value = None, -np.inf
    for action in actions:
        value = _predict(predictor, ctx.x_r, ctx.x_h,
                         get_robot_goal(action).as_array(), g_h_mu)
        if value > best_value:
            best, best_value = action, value
    return best


def propagate(x_r, goal_dist, action, predictor, rng, x_h=None):
    """
    Apply ``action`` from robot position ``x_r`` against a human goal.

    Args:
        x_r (ArrayLike): current robot position.
        goal_dist (GoalDistribution): the human goal.
        action (RobotAction): the action to apply.
        predictor: scaling predictor.
        rng (numpy.random.Generator): used to sample ``x_h`` from
            ``goal_dist`` when ``x_h`` is not given.
        x_h (ArrayLike | None): observed human position; the root step of a
            search uses the observation instead of a sample.

    Returns:
        Tuple[ndarray, float]: the robot position after the action (its goal)
        and the predicted reward.

    Example:
        >>> import numpy as np
        >>> from safescale.plan import propagate
        >>> from safescale.core import RobotAction, GoalDistribution
        >>> class Dist:
        >>>     def predict(self, x_r, x_h, g_r, g_h_mu):
        >>>         return float(np.linalg.norm(np.asarray(x_h) - g_r))
        >>> goal = GoalDistribution('g', (0.0, 3.0, 0.0))
        >>> x_r, reward = propagate((0, 0, 0), goal, RobotAction(1, (0, 1, 0)),
        >>>                         Dist(), np.random.default_rng(0))
        >>> x_r.tolist(), reward
        ([0.0, 1.0, 0.0], 2.0)
    """
    g_r = get_robot_goal(action).as_array()
    if x_h is None:
        x_h = sample_goal(goal_dist, rng)
    reward = _predict(predictor, np.asarray(x_r, dtype=float), x_h, g_r,
                      goal_dist.mu.as_array())
    return g_r, reward


@profile
def perform_rollout(x_r, ctx, rng, max_len, state=None, depth=0):
    """
    Random continuation from ``x_r`` until a terminal state.

    A state is terminal when ``depth`` reaches ``max_len`` or no action is
    available. Each step picks a uniform available action and a uniform human
    goal, propagates and adds the (undiscounted) reward.

    Args:
        x_r (ArrayLike): robot position at the start of the rollout.
        ctx (PlannerContext): supplies the predictor, goal set and
            availability rule.
        rng (numpy.random.Generator): worker-owned generator.
        max_len (int): maximum sequence length including the root action.
        state (ProcessState | None): process state at the start.
        depth (int): steps already taken before the rollout starts.

    Returns:
        float: sum of rewards collected.
    """
    predictor = _require_predictor(ctx)
    state = ctx.state if state is None else state
    goals = ctx.human_goals
    total = 0.0
    while depth < max_len:
        actions = ctx.actions_in(state)
        if not actions:
            break
        action = actions[int(rng.integers(len(actions)))]
        goal = goals[int(rng.integers(len(goals)))]
        x_r, reward = propagate(x_r, goal, action, predictor, rng)
        if ctx.config is not None:
            state = state.after(action, ctx.config)
        total += reward
        depth += 1
    return total


@dataclass
class WorkerResult:
    """
    Accumulator of one Monte Carlo worker.

    Attributes:
        action (RobotAction): the root action evaluated.
        root_reward (float): reward of the root propagate step.
        total_reward (float): root reward plus discounted rollout rewards.
        iterations (int): completed rollouts.
        rollout_rewards (List[float]): raw rollout rewards in order.
    """
    action: object
    root_reward: float
    total_reward: float
    iterations: int
    rollout_rewards: list

    @property
    def score(self):
        return self.total_reward / max(1, self.iterations)


def _id_entropy(ident):
    if isinstance(ident, (int, np.integer)) and not isinstance(ident, bool):
        return int(ident) & 0xFFFFFFFF
    return int(ub.hash_data(str(ident), hasher='sha256')[:8], 16)


def _evaluate_action(ctx, action, params, master_seed):
    rng = np.random.default_rng(np.random.SeedSequence([master_seed, _id_entropy(action.id)]))
    predictor = ctx.predictor
    x_r, total = propagate(ctx.x_r, ctx.current_goal, action, predictor, rng, x_h=ctx.x_h)
    root_reward = total
    state = ctx.state.after(action, ctx.config) if ctx.config is not None else ctx.state
    rewards = []
    terminal = params.max_len <= 1 or not ctx.actions_in(state)
    if not terminal:
        start = time.perf_counter()
        i = 0
        while True:
            if params.rollouts is not None and i >= params.rollouts:
                break
            if params.budget is not None and time.perf_counter() - start >= params.budget:
                break
            reward = perform_rollout(x_r, ctx, rng, params.max_len, state=state, depth=1)
            total += params.gamma ** i * reward
            rewards.append(reward)
            i += 1
        if i == 0:
            warnings.warn(
                f'Monte Carlo worker for action {action.id!r} completed no '
                'rollouts within budget; scoring it by its root reward')
    return WorkerResult(action=action, root_reward=root_reward,
                        total_reward=total, iterations=len(rewards),
                        rollout_rewards=rewards)


def monte_carlo_select(ctx, params=None, return_results=False):
    """
    Parallel Monte Carlo action selection.

    Args:
        ctx (PlannerContext): decision context; ``ctx.rng`` seeds the workers.
        params (MonteCarloParams | None): defaults to ``ctx.config.mc``.
        return_results (bool): also return the per-action
            :class:`WorkerResult` list, in action id order.

    Returns:
        RobotAction | Tuple[RobotAction, List[WorkerResult]]

    Example:
        >>> from safescale.plan import *  # NOQA
        >>> from safescale.core import RobotAction, GoalDistribution
        >>> class Toy:
        >>>     def predict(self, x_r, x_h, g_r, g_h_mu):
        >>>         return float(g_r[0]) / 10
        >>> actions = [RobotAction(i, (i, 0, 0)) for i in range(3)]
        >>> ctx = PlannerContext((0, 0, 0), (5, 0, 0),
        >>>                      GoalDistribution('g', (5, 0, 0)), actions,
        >>>                      rng=np.random.default_rng(0), predictor=Toy())
        >>> params = MonteCarloParams(max_len=1)
        >>> monte_carlo_select(ctx, params).id
        2
    """
    actions = _sorted_or_raise(ctx.available)
    _require_predictor(ctx)
    if params is None:
        params = ctx.config.mc if ctx.config is not None else MonteCarloParams()
    if len(actions) == 1:
        return (actions[0], []) if return_results else actions[0]
    master_seed = int(_require_rng(ctx).integers(2 ** 63))
    with ThreadPoolExecutor(max_workers=len(actions)) as executor:
        futures = [executor.submit(_evaluate_action, ctx, action, params, master_seed)
                   for action in actions]
        results = [f.result() for f in futures]
    best = None
    for result in results:
        if best is None or result.score > best.score:
            best = result
    if return_results:
        return best.action, results
    return best.action


def baseline_random(ctx):
    """
    Uniformly random available action.
    """
    actions = _sorted_or_raise(ctx.available)
    return actions[int(_require_rng(ctx).integers(len(actions)))]


def baseline_round_robin(ctx, cursor=None):
    """
    Next action after ``cursor`` in cyclic id order, skipping unavailable
    ones.

    Args:
        ctx (PlannerContext): decision context.
        cursor (object | None): id of the previously chosen action.

    Example:
        >>> from safescale.plan import *  # NOQA
        >>> from safescale.core import RobotAction, GoalDistribution
        >>> actions = [RobotAction(i, (i, 0, 0)) for i in (1, 3, 4)]
        >>> ctx = PlannerContext((0, 0, 0), (0, 0, 0),
        >>>                      GoalDistribution('g', (0, 0, 0)), actions)
        >>> baseline_round_robin(ctx, cursor=1).id
        3
        >>> baseline_round_robin(ctx, cursor=4).id
        1
        >>> baseline_round_robin(ctx).id
        1
    """
    actions = _sorted_or_raise(ctx.available)
    if ctx.config is not None:
        cycle = sorted(ctx.config.place_actions, key=action_key)
    else:
        cycle = actions
    if cursor is None:
        return actions[0]
    ids = [a.id for a in cycle]
    available = {a.id: a for a in actions}
    start = ids.index(cursor) + 1 if cursor in ids else 0
    for offset in range(len(ids)):
        ident = ids[(start + offset) % len(ids)]
        if ident in available:
            return available[ident]
    return actions[0]


def baseline_reactive(ctx):
    """
    Available action whose goal is furthest from the current human position.
    Ties go to the lowest action id.
    """
    actions = _sorted_or_raise(ctx.available)
    best, best_dist = None, -np.inf
    for action in actions:
        dist = float(np.linalg.norm(get_robot_goal(action).as_array() - ctx.x_h))
        if dist > best_dist:
            best, best_dist = action, dist
    return best


class RandomPolicy:
    name = 'random'

    def select(self, ctx):
        return baseline_random(ctx)


class RoundRobinPolicy:
    """
    Round-robin baseline; remembers the last chosen id within an episode.
    """
    name = 'round-robin'

    def __init__(self):
        self.cursor = None

    def reset(self):
        self.cursor = None

    def select(self, ctx):
        action = baseline_round_robin(ctx, self.cursor)
        self.cursor = action.id
        return action


class ReactivePolicy:
    name = 'reactive'

    def select(self, ctx):
        return baseline_reactive(ctx)


class GreedyPolicy:
    name = 'greedy'

    def __init__(self, predictor):
        self.predictor = predictor

    def select(self, ctx):
        return greedy_select(replace(ctx, predictor=self.predictor))


class MonteCarloPolicy:
    name = 'monte-carlo'

    def __init__(self, predictor, params=None):
        self.predictor = predictor
        self.params = params

    def select(self, ctx):
        return monte_carlo_select(replace(ctx, predictor=self.predictor), self.params)


def make_policy(name, predictor=None, params=None):
    """
    Build a policy from its harness name.

    Args:
        name (str): one of :data:`POLICY_NAMES`.
        predictor: required by ``greedy`` and ``monte-carlo``.
        params (MonteCarloParams | None): Monte Carlo settings; None uses the
            scenario's ``mc`` section.

    Example:
        >>> from safescale.plan import make_policy
        >>> make_policy('round-robin').name
        'round-robin'
        >>> make_policy('greedy')
        Traceback (most recent call last):
        ...
        ValueError: policy 'greedy' needs a trained model
    """
    if name == 'random':
        return RandomPolicy()
    if name == 'round-robin':
        return RoundRobinPolicy()
    if name == 'reactive':
        return ReactivePolicy()
    if name in ('greedy', 'monte-carlo'):
        if predictor is None:
            raise ValueError(f'policy {name!r} needs a trained model')
        if name == 'greedy':
            return GreedyPolicy(predictor)
        return MonteCarloPolicy(predictor, params)
    raise KeyError(f'Unknown policy {name!r}, expected one of {POLICY_NAMES}')
