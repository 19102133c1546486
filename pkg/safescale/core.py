"""
Domain types shared by every other module: positions, human goal
distributions, robot actions, the workspace / scenario configuration and the
process state that decides which actions are currently available.

A scenario is described by a YAML file. The minimal shape is:

.. code:: yaml

    robot_actions:
      - {id: 0, kind: pick, goal: [0.0, 0.0, 0.8]}
      - {id: 1, kind: place, goal: [-0.8, 0.6, 0.8], slot: box1}
    human_goals:
      - {id: left, mu: [-1.4, 0.6, 1.0], sigma: [0.05, 0.05, 0.0]}
    safety:
      thresholds: [0.5, 1.0, 1.5, 2.0]
      values: [0.0, 0.25, 0.5, 0.75, 1.0]
    robot_nominal_speed: 0.25
    human_speed: 1.0
    sample_period: 0.1
    variant: continuous_flow
    dwell: {pick: 1.0, place: 1.0, human: 5.0}
    rng_seed: 0

Optional sections (``slots``, ``mc``, ``train``, ``horizon``, ...) fall back to
the defaults defined on the dataclasses below.
"""
import json
import math
from dataclasses import dataclass, field, fields, replace
from enum import Enum

import numpy as np
import ubelt as ub
import yaml

from .safety import StaircaseSafety

# Tolerance used when comparing times and timers against zero.
TIME_EPS = 1e-9


def _as_int(value, name):
    """
    Integer from a YAML scalar, which may arrive as a float or a string such
    as ``'1e3'``.

    Example:
        >>> from safescale.core import _as_int
        >>> _as_int('1e3', 'train.epochs'), _as_int(256.0, 'train.batch_size')
        (1000, 256)
        >>> _as_int(2.5, 'train.epochs')
        Traceback (most recent call last):
        ...
        ValueError: train.epochs must be an integer, got 2.5
    """
    if isinstance(value, bool):
        raise ValueError(f'{name} must be an integer, got {value!r}')
    number = float(value)
    if not number.is_integer():
        raise ValueError(f'{name} must be an integer, got {value!r}')
    return int(number)


@dataclass(frozen=True)
class Vec3:
    """
    Cartesian position in meters.

    Example:
        >>> from safescale.core import Vec3
        >>> v = Vec3(1.0, 0.5, 0.3)
        >>> v.as_array().tolist()
        [1.0, 0.5, 0.3]
        >>> Vec3.coerce([1, 2, 3])
        Vec3(x=1.0, y=2.0, z=3.0)
    """
    x: float
    y: float
    z: float

    def __post_init__(self):
        for name in ('x', 'y', 'z'):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f'Vec3.{name} must be finite, got {value!r}')
            object.__setattr__(self, name, value)

    def __iter__(self):
        yield self.x
        yield self.y
        yield self.z

    def as_array(self):
        return np.array([self.x, self.y, self.z], dtype=float)

    def to_list(self):
        return [self.x, self.y, self.z]

    @classmethod
    def coerce(cls, data):
        """
        Build a Vec3 from a Vec3, a length-3 sequence or a numpy array.
        """
        if isinstance(data, cls):
            return data
        values = [float(v) for v in data]
        if len(values) != 3:
            raise ValueError(f'Expected 3 coordinates, got {len(values)}')
        return cls(*values)


def as_array(vec):
    """
    Return a float array of shape (3,) for a Vec3 or any array-like.
    """
    if isinstance(vec, Vec3):
        return vec.as_array()
    return np.asarray(vec, dtype=float)


@dataclass(frozen=True)
class GoalDistribution:
    """
    Gaussian human goal with per-axis standard deviation. A zero ``sigma.z``
    keeps the noise in the horizontal plane.
    """
    id: object
    mu: Vec3
    sigma: Vec3 = Vec3(0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, 'mu', Vec3.coerce(self.mu))
        object.__setattr__(self, 'sigma', Vec3.coerce(self.sigma))
        if min(self.sigma) < 0:
            raise ValueError(f'Goal {self.id!r} has a negative sigma: {self.sigma}')


class ActionKind(str, Enum):
    PICK = 'pick'
    PLACE = 'place'


class Variant(str, Enum):
    """
    Availability semantics: boxes replaced as soon as they are full
    (``continuous_flow``) or only once all of them are full
    (``batch_replacement``).
    """
    CONTINUOUS_FLOW = 'continuous_flow'
    BATCH_REPLACEMENT = 'batch_replacement'


@dataclass(frozen=True)
class RobotAction:
    id: object
    goal: Vec3
    kind: ActionKind = ActionKind.PLACE
    slot: object = None

    def __post_init__(self):
        object.__setattr__(self, 'goal', Vec3.coerce(self.goal))
        object.__setattr__(self, 'kind', ActionKind(self.kind))


def action_key(action):
    """
    Sort key implementing the "lowest action id" tie-break. Integer ids sort
    numerically and before string ids.
    """
    ident = action.id if isinstance(action, RobotAction) else action
    if isinstance(ident, (int, np.integer)) and not isinstance(ident, bool):
        return (0, int(ident), '')
    return (1, 0, str(ident))


@dataclass(frozen=True)
class Slot:
    id: object
    capacity: int

    def __post_init__(self):
        if int(self.capacity) < 1:
            raise ValueError(f'Slot {self.id!r} needs a capacity >= 1')
        object.__setattr__(self, 'capacity', int(self.capacity))


@dataclass(frozen=True)
class DwellTimes:
    pick: float = 1.0
    place: float = 1.0
    human: float = 5.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f'dwell.{f.name} must be >= 0')


@dataclass(frozen=True)
class MonteCarloParams:
    """
    Parameters of the Monte Carlo action selection.

    Attributes:
        gamma (float): discount applied across successive rollouts, in (0, 1].
        budget (float | None): wall-clock seconds per worker. None disables the
            time limit, in which case ``rollouts`` must be set.
        max_len (int): maximum number of decision steps in a sequence,
            including the root action.
        lead_time (float): seconds before the decision at which the human
            state is observed (masked-time planning). 0 plans on fresh data.
        rollouts (int | None): maximum rollouts per worker.
    """
    gamma: float = 0.9
    budget: float = 1.0
    max_len: int = 6
    lead_time: float = 0.0
    rollouts: int = None

    def __post_init__(self):
        if not (0 < self.gamma <= 1):
            raise ValueError(f'mc.gamma must be in (0, 1], got {self.gamma}')
        if self.budget is not None and self.budget <= 0:
            raise ValueError(f'mc.budget must be > 0, got {self.budget}')
        if self.max_len < 1:
            raise ValueError(f'mc.max_len must be >= 1, got {self.max_len}')
        if self.lead_time < 0:
            raise ValueError('mc.lead_time must be >= 0')
        if self.rollouts is not None and self.rollouts < 1:
            raise ValueError('mc.rollouts must be >= 1 when given')
        if self.budget is None and self.rollouts is None:
            raise ValueError('mc needs a time budget or a rollout count')


@dataclass(frozen=True)
class TrainingSchedule:
    """
    Optimizer and architecture defaults for the scaling predictor.
    """
    batch_size: int = 256
    learning_rate: float = 1e-3
    epochs: int = 200
    patience: int = 20
    width: int = 64
    momentum: float = 0.9
    test_fraction: float = 0.2
    stride: int = 1

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(f.default, int):
                value = _as_int(value, f'train.{f.name}')
            else:
                value = float(value)
            object.__setattr__(self, f.name, value)
        if self.batch_size < 2:
            raise ValueError('train.batch_size must be >= 2')
        if self.learning_rate <= 0:
            raise ValueError('train.learning_rate must be > 0')
        if self.epochs < 1 or self.patience < 1:
            raise ValueError('train.epochs and train.patience must be >= 1')
        if not (0 <= self.test_fraction < 1):
            raise ValueError('train.test_fraction must be in [0, 1)')
        if self.stride < 1:
            raise ValueError('train.stride must be >= 1')


@dataclass(frozen=True)
class WorkspaceConfig:
    """
    Everything needed to simulate, learn and plan in one shared workspace.

    Example:
        >>> from safescale.core import *  # NOQA
        >>> config = load_config(default_scenario_fpath())
        >>> len(config.place_actions), len(config.human_goals)
        (4, 3)
        >>> config.safety.K
        5
        >>> get_robot_goal(config.pick_action)
        Vec3(x=0.0, y=0.0, z=0.8)
    """
    robot_actions: tuple
    human_goals: tuple
    safety: StaircaseSafety
    robot_nominal_speed: float = 0.25
    human_speed: float = 1.0
    sample_period: float = 0.1
    variant: Variant = Variant.CONTINUOUS_FLOW
    dwell: DwellTimes = field(default_factory=DwellTimes)
    rng_seed: int = 0
    slots: tuple = ()
    human_midpoint_sigma: float = 0.25
    tasks_per_episode: int = 12
    horizon: float = 14.0
    mc: MonteCarloParams = field(default_factory=MonteCarloParams)
    train: TrainingSchedule = field(default_factory=TrainingSchedule)

    def __post_init__(self):
        object.__setattr__(self, 'robot_actions', tuple(self.robot_actions))
        object.__setattr__(self, 'human_goals', tuple(self.human_goals))
        object.__setattr__(self, 'slots', tuple(self.slots))
        object.__setattr__(self, 'variant', Variant(self.variant))
        if not self.robot_actions:
            raise ValueError('A workspace needs at least one robot action')
        if not self.human_goals:
            raise ValueError('A workspace needs at least one human goal')
        if self.sample_period <= 0:
            raise ValueError('sample_period must be > 0')
        if self.robot_nominal_speed <= 0 or self.human_speed <= 0:
            raise ValueError('robot_nominal_speed and human_speed must be > 0')
        if self.human_midpoint_sigma < 0:
            raise ValueError('human_midpoint_sigma must be >= 0')
        if self.tasks_per_episode < 1:
            raise ValueError('tasks_per_episode must be >= 1')
        if self.horizon <= 0:
            raise ValueError('horizon must be > 0')
        ids = [a.id for a in self.robot_actions]
        if len(set(ids)) != len(ids):
            raise ValueError(f'Duplicate robot action ids: {ids}')
        goal_ids = [g.id for g in self.human_goals]
        if len(set(goal_ids)) != len(goal_ids):
            raise ValueError(f'Duplicate human goal ids: {goal_ids}')
        slot_ids = {s.id for s in self.slots}
        for action in self.robot_actions:
            if action.slot is not None and slot_ids and action.slot not in slot_ids:
                raise ValueError(f'Action {action.id!r} references unknown slot {action.slot!r}')

    @property
    def place_actions(self):
        return tuple(a for a in self.robot_actions if a.kind == ActionKind.PLACE)

    @property
    def pick_action(self):
        for action in self.robot_actions:
            if action.kind == ActionKind.PICK:
                return action
        return None

    @property
    def window_length(self):
        """
        Number of sample periods N covering the predictive horizon.
        """
        return int(round(self.horizon / self.sample_period))

    def action_by_id(self, ident):
        for action in self.robot_actions:
            if action.id == ident:
                return action
        raise KeyError(ident)

    def slot_capacities(self):
        """
        Map slot id -> capacity for every slot referenced by a place action.
        Slots without an explicit capacity are unlimited and omitted.
        """
        declared = {s.id: s.capacity for s in self.slots}
        return {a.slot: declared[a.slot] for a in self.place_actions
                if a.slot is not None and a.slot in declared}


def get_robot_goal(action):
    """
    Return the goal position associated with an action.

    Example:
        >>> from safescale.core import RobotAction, get_robot_goal
        >>> get_robot_goal(RobotAction(id=1, goal=(1.0, 0.5, 0.3)))
        Vec3(x=1.0, y=0.5, z=0.3)
    """
    return action.goal


def sample_goal(dist, rng):
    """
    Draw a concrete position from a human goal distribution.

    Args:
        dist (GoalDistribution): the goal to sample.
        rng (numpy.random.Generator): caller-owned generator.

    Returns:
        numpy.ndarray: position of shape (3,). Exactly ``mu`` on every axis
        whose sigma is zero.

    Example:
        >>> import numpy as np
        >>> from safescale.core import GoalDistribution, sample_goal
        >>> dist = GoalDistribution('g', mu=(1.0, 2.0, 1.0))
        >>> sample_goal(dist, np.random.default_rng(0)).tolist()
        [1.0, 2.0, 1.0]
    """
    mu = dist.mu.as_array()
    sigma = dist.sigma.as_array()
    noise = rng.normal(0.0, 1.0, size=3) * sigma
    return mu + noise


@dataclass(frozen=True)
class ProcessState:
    """
    Fill level of each capacity slot. Only meaningful for the batch
    replacement variant; continuous flow replaces full boxes immediately.
    """
    fill: tuple = ()

    @classmethod
    def initial(cls, config):
        return cls(tuple((slot_id, 0) for slot_id in config.slot_capacities()))

    def as_dict(self):
        return dict(self.fill)

    def all_full(self, config):
        capacities = config.slot_capacities()
        if not capacities:
            return False
        fill = self.as_dict()
        return all(fill.get(k, 0) >= cap for k, cap in capacities.items())

    def after(self, action, config):
        """
        Return the state reached once ``action`` has been committed.
        """
        if config.variant == Variant.CONTINUOUS_FLOW:
            return self
        capacities = config.slot_capacities()
        fill = self.as_dict()
        if self.all_full(config):
            fill = {k: 0 for k in capacities}
        if action.slot in capacities:
            fill[action.slot] = fill.get(action.slot, 0) + 1
        return ProcessState(tuple((k, fill.get(k, 0)) for k in capacities))


def available_actions(state, config):
    """
    Actions the robot may choose in ``state``.

    Under continuous flow every place action is available. Under batch
    replacement, actions whose slot is full are excluded until every slot is
    full, at which point all boxes are replaced and everything is available
    again. An empty list signals a terminal state.

    Example:
        >>> from safescale.core import *  # NOQA
        >>> config = load_config(default_scenario_fpath('batch'))
        >>> state = ProcessState((('box1', 3), ('box2', 0), ('box3', 3), ('box4', 1)))
        >>> [a.id for a in available_actions(state, config)]
        [2, 4]
    """
    places = sorted(config.place_actions, key=action_key)
    if config.variant == Variant.CONTINUOUS_FLOW:
        return places
    if state.all_full(config):
        return places
    capacities = config.slot_capacities()
    fill = state.as_dict()
    return [a for a in places
            if a.slot not in capacities or fill.get(a.slot, 0) < capacities[a.slot]]


# ---------------------------------------------------------------------------
# Config (de)serialization


def _parse_id(value, what):
    """
    Action and goal ids are non-empty strings or integers.
    """
    if isinstance(value, bool) or not isinstance(value, (int, str)):
        raise ValueError(f'{what} ids must be integers or strings, got {value!r}')
    if isinstance(value, str) and not value.strip():
        raise ValueError(f'{what} ids must not be empty')
    return value


def parse_config(data):
    """
    Build a :class:`WorkspaceConfig` from plain (YAML / JSON) data.
    """
    data = dict(data)
    missing = [k for k in ('robot_actions', 'human_goals', 'safety') if k not in data]
    if missing:
        raise ValueError(f'Scenario config is missing required keys: {missing}')
    actions = [
        RobotAction(id=_parse_id(item.get('id'), 'robot_actions'), goal=item['goal'],
                    kind=item.get('kind', 'place'), slot=item.get('slot', None))
        for item in data['robot_actions']
    ]
    goals = [
        GoalDistribution(id=_parse_id(item.get('id'), 'human_goals'), mu=item['mu'],
                         sigma=item.get('sigma', (0.0, 0.0, 0.0)))
        for item in data['human_goals']
    ]
    safety = StaircaseSafety(thresholds=data['safety'].get('thresholds', []),
                             values=data['safety']['values'])
    slots = [Slot(id=item['id'], capacity=item['capacity'])
             for item in data.get('slots', []) or []]
    kwargs = {}
    for key in ('robot_nominal_speed', 'human_speed', 'sample_period',
                'human_midpoint_sigma', 'horizon'):
        if key in data:
            kwargs[key] = float(data[key])
    for key in ('rng_seed', 'tasks_per_episode'):
        if key in data:
            kwargs[key] = _as_int(data[key], key)
    if 'variant' in data:
        kwargs['variant'] = Variant(data['variant'])
    if data.get('dwell'):
        kwargs['dwell'] = DwellTimes(**{k: float(v) for k, v in data['dwell'].items()})
    if data.get('mc'):
        mc = dict(data['mc'])
        kwargs['mc'] = MonteCarloParams(
            gamma=float(mc.get('gamma', 0.9)),
            budget=None if mc.get('budget', 1.0) is None else float(mc.get('budget', 1.0)),
            max_len=_as_int(mc.get('max_len', 6), 'mc.max_len'),
            lead_time=float(mc.get('lead_time', 0.0)),
            rollouts=None if mc.get('rollouts') is None else _as_int(mc['rollouts'], 'mc.rollouts'),
        )
    if data.get('train'):
        known = {f.name for f in fields(TrainingSchedule)}
        unknown = set(data['train']) - known
        if unknown:
            raise ValueError(f'Unknown train settings: {sorted(unknown)}')
        kwargs['train'] = TrainingSchedule(**data['train'])
    return WorkspaceConfig(robot_actions=actions, human_goals=goals,
                           safety=safety, slots=slots, **kwargs)


def config_to_dict(config):
    """
    Serialize a config to plain data using the scenario file field names.

    Example:
        >>> from safescale.core import *  # NOQA
        >>> config = load_config(default_scenario_fpath())
        >>> parse_config(config_to_dict(config)) == config
        True
    """
    actions = []
    for a in config.robot_actions:
        item = {'id': a.id, 'kind': a.kind.value, 'goal': a.goal.to_list()}
        if a.slot is not None:
            item['slot'] = a.slot
        actions.append(item)
    return {
        'robot_actions': actions,
        'human_goals': [{'id': g.id, 'mu': g.mu.to_list(), 'sigma': g.sigma.to_list()}
                        for g in config.human_goals],
        'safety': {'thresholds': list(config.safety.thresholds),
                   'values': list(config.safety.values)},
        'slots': [{'id': s.id, 'capacity': s.capacity} for s in config.slots],
        'robot_nominal_speed': config.robot_nominal_speed,
        'human_speed': config.human_speed,
        'sample_period': config.sample_period,
        'variant': config.variant.value,
        'dwell': {'pick': config.dwell.pick, 'place': config.dwell.place,
                  'human': config.dwell.human},
        'rng_seed': config.rng_seed,
        'human_midpoint_sigma': config.human_midpoint_sigma,
        'tasks_per_episode': config.tasks_per_episode,
        'horizon': config.horizon,
        'mc': {'gamma': config.mc.gamma, 'budget': config.mc.budget,
               'max_len': config.mc.max_len, 'lead_time': config.mc.lead_time,
               'rollouts': config.mc.rollouts},
        'train': {f.name: getattr(config.train, f.name) for f in fields(TrainingSchedule)},
    }


def load_config(fpath):
    with open(fpath, 'r') as file:
        data = yaml.safe_load(file)
    return parse_config(data)


def dump_config(config, fpath):
    text = yaml.safe_dump(config_to_dict(config), sort_keys=False)
    ub.Path(fpath).write_text(text)
    return fpath


LAYOUT_KEYS = (
    'robot_actions', 'human_goals', 'robot_nominal_speed', 'human_speed',
    'sample_period', 'dwell', 'human_midpoint_sigma',
)


def config_hash(config):
    """
    Content hash (sha256) of the canonical serialization of a config.
    """
    text = json.dumps(config_to_dict(config), sort_keys=True)
    return ub.hash_data(text, hasher='sha256')


def layout_hash(config):
    """
    Hash of the parts of a config that shape what a predictor learns: the
    cell geometry, the human goals, speeds, dwell times and the sample period.

    The safety function, the availability variant, slot capacities and the
    planner / training settings are left out, so a model trained in one cell
    can be evaluated under another safety function or variant of that cell.

    Example:
        >>> from safescale.core import *  # NOQA
        >>> from safescale.safety import inflate_thresholds
        >>> config = load_config(default_scenario_fpath())
        >>> batch = load_config(default_scenario_fpath('batch'))
        >>> layout_hash(config) == layout_hash(batch)
        True
        >>> other = with_safety(config, inflate_thresholds(config.safety))
        >>> layout_hash(other) == layout_hash(config), config_hash(other) == config_hash(config)
        (True, False)
    """
    full = config_to_dict(config)
    data = {k: full[k] for k in LAYOUT_KEYS}
    return ub.hash_data(json.dumps(data, sort_keys=True), hasher='sha256')


def with_safety(config, safety):
    return replace(config, safety=safety)


def default_scenario_fpath(name='pick_and_place'):
    """
    Path to a scenario shipped with the package. ``'batch'`` selects the
    batch replacement variant.
    """
    if name == 'batch':
        name = 'pick_and_place_batch'
    return ub.Path(__file__).parent / 'scenarios' / f'{name}.yaml'
