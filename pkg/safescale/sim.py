"""
Kinematic simulator of the shared pick and place workspace.

The robot end-effector moves in straight lines at ``nominal_speed * s`` where
``s`` is the staircase scaling evaluated at the start of every tick. A task is
"move to the chosen place goal, place, return to the pick point, pick"; the
robot asks its policy for the next action whenever it becomes idle. The
simulated human walks piecewise-linear paths (start, randomized midpoint,
randomized goal) between uniformly chosen goals and dwells at each of them.

Every tick emits one log row with the columns in :data:`LOG_COLUMNS`.

Randomness is split into independent streams derived from
``(seed, phase_key, episode, stream)``. The human stream never depends on the
robot, so two policies evaluated on the same seed face the same human.

Example:
    >>> from safescale.core import load_config, default_scenario_fpath
    >>> from safescale.plan import RandomPolicy
    >>> from safescale.sim import run_episode
    >>> config = load_config(default_scenario_fpath())
    >>> result = run_episode(config, RandomPolicy(), duration=60.0, seed=0)
    >>> len(result.log)
    600
    >>> result.log.shape[1]
    15
"""
import csv
import math
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import ubelt as ub
from line_profiler import profile

from .core import (ProcessState, TIME_EPS, action_key,
                   available_actions, get_robot_goal, sample_goal)
from .plan import PlannerContext
from .safety import ScalingTrace, eval_scaling

LOG_COLUMNS = [
    'episode', 't',
    'xr_x', 'xr_y', 'xr_z',
    'xh_x', 'xh_y', 'xh_z',
    'gr_x', 'gr_y', 'gr_z',
    'gh_x', 'gh_y', 'gh_z',
    's',
]

METRIC_COLUMNS = ['episode', 'task_index', 'action_id', 'start_t', 'end_t', 'mean_scaling']

# Column slices into a log array.
COL_EPISODE = 0
COL_T = 1
COL_XR = slice(2, 5)
COL_XH = slice(5, 8)
COL_GR = slice(8, 11)
COL_GH = slice(11, 14)
COL_S = 14
FEATURE_COLS = slice(2, 14)

STREAM_HUMAN = 0
STREAM_POLICY = 1


def episode_rng(seed, phase_key, episode, stream):
    """
    Independent generator for one (seed, phase, episode, stream) tuple.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(phase_key), int(episode), int(stream)]))


def _move_toward(position, target, distance):
    """
    Advance ``position`` by ``distance`` toward ``target``. Returns the new
    position and True if the target was reached.
    """
    delta = target - position
    remaining = float(np.linalg.norm(delta))
    if remaining <= distance + 1e-12:
        return target.copy(), True
    return position + delta * (distance / remaining), False


@dataclass
class HumanModel:
    """
    Simulated operator cycling through goal-directed operations.

    Attributes:
        position (ndarray): current centroid position.
        goal_index (int): index into ``config.human_goals`` of the current
            (or last reached) goal.
        path (List[ndarray]): waypoints of the current walk.
        segment (int): index of the waypoint currently walked toward.
        dwell_remaining (float): seconds left at the current goal.
        visits (List[int]): goal indices chosen so far, in order.
    """
    position: np.ndarray
    goal_index: int
    path: list
    speed: float
    dwell_remaining: float = 0.0
    segment: int = 0
    visits: list = field(default_factory=list)

    @classmethod
    def spawn(cls, config, rng):
        """
        Place the human at a uniformly chosen goal, part way through its
        dwell there.
        """
        index = int(rng.integers(len(config.human_goals)))
        position = sample_goal(config.human_goals[index], rng)
        dwell = float(rng.uniform(0.0, config.dwell.human))
        return cls(position=position, goal_index=index, path=[position.copy()],
                   speed=config.human_speed, dwell_remaining=dwell,
                   segment=1, visits=[index])

    @property
    def moving(self):
        return self.segment < len(self.path)

    def plan_next(self, config, rng):
        """
        Choose the next goal uniformly and lay out a path
        ``[start, midpoint, goal]``. The midpoint is the straight-line
        midpoint with horizontal Gaussian noise.
        """
        index = int(rng.integers(len(config.human_goals)))
        target = sample_goal(config.human_goals[index], rng)
        start = self.position.copy()
        midpoint = (start + target) / 2.0
        noise = rng.normal(0.0, 1.0, size=2) * config.human_midpoint_sigma
        midpoint[:2] += noise
        self.goal_index = index
        self.path = [start, midpoint, target]
        self.segment = 1
        self.visits.append(index)

    def step(self, config, rng, dt):
        if not self.moving:
            if self.dwell_remaining > TIME_EPS:
                self.dwell_remaining -= dt
                return
            self.plan_next(config, rng)
        budget = self.speed * dt
        while budget > 0 and self.moving:
            target = self.path[self.segment]
            before = self.position
            self.position, reached = _move_toward(self.position, target, budget)
            budget -= float(np.linalg.norm(self.position - before))
            if not reached:
                break
            self.segment += 1
        if not self.moving:
            self.dwell_remaining = config.dwell.human


class RobotPhase:
    IDLE = 'idle'
    MOVING = 'moving'
    DWELLING = 'dwelling'


@dataclass
class RobotModel:
    """
    End-effector point robot.

    Attributes:
        position (ndarray): end-effector position.
        goal (ndarray): current motion goal (logged as ``g_r``).
        home (ndarray | None): pick point the robot returns to after placing.
        leg (str): ``'place'`` while serving the chosen action, ``'pick'``
            while returning to and dwelling at the pick point.
    """
    position: np.ndarray
    goal: np.ndarray
    nominal_speed: float
    home: np.ndarray = None
    phase: str = RobotPhase.IDLE
    leg: str = 'pick'
    current_scaling: float = 1.0
    dwell_remaining: float = 0.0
    travelled: float = 0.0

    @classmethod
    def spawn(cls, config):
        pick = config.pick_action
        if pick is not None:
            home = get_robot_goal(pick).as_array()
        else:
            home = get_robot_goal(min(config.robot_actions, key=action_key)).as_array()
        return cls(position=home.copy(), goal=home.copy(),
                   nominal_speed=config.robot_nominal_speed,
                   home=home if pick is not None else None)

    def start_task(self, action):
        self.goal = get_robot_goal(action).as_array()
        self.leg = 'place'
        self.phase = RobotPhase.MOVING

    def step(self, config, dt):
        """
        Advance one tick using ``self.current_scaling``. Returns True when the
        task finished during this tick.
        """
        if self.phase == RobotPhase.MOVING:
            distance = self.nominal_speed * self.current_scaling * dt
            before = self.position
            self.position, reached = _move_toward(self.position, self.goal, distance)
            self.travelled += float(np.linalg.norm(self.position - before))
            if reached:
                self.phase = RobotPhase.DWELLING
                self.dwell_remaining = config.dwell.place if self.leg == 'place' else config.dwell.pick
                if self.dwell_remaining <= TIME_EPS:
                    return self._dwell_done()
            return False
        if self.phase == RobotPhase.DWELLING:
            self.dwell_remaining -= dt
            if self.dwell_remaining <= TIME_EPS:
                return self._dwell_done()
        return False

    def _dwell_done(self):
        self.dwell_remaining = 0.0
        if self.leg == 'place' and self.home is not None:
            self.leg = 'pick'
            self.goal = self.home.copy()
            self.phase = RobotPhase.MOVING
            return False
        self.leg = 'pick'
        self.phase = RobotPhase.IDLE
        return True


@dataclass
class World:
    """
    Complete mutable simulation state of one episode.
    """
    config: object
    human: HumanModel
    robot: RobotModel
    human_rng: np.random.Generator
    episode: int = 0
    tick: int = 0
    rows: list = field(default_factory=list)
    record: bool = True
    task_done: bool = False

    @classmethod
    def create(cls, config, seed=None, episode=0, phase_key=0, record=True):
        seed = config.rng_seed if seed is None else seed
        human_rng = episode_rng(seed, phase_key, episode, STREAM_HUMAN)
        return cls(config=config, human=HumanModel.spawn(config, human_rng),
                   robot=RobotModel.spawn(config), human_rng=human_rng,
                   episode=episode, record=record)

    @property
    def t(self):
        return self.tick * self.config.sample_period

    @property
    def human_goal(self):
        return self.config.human_goals[self.human.goal_index]


@profile
def step_sim(world, dt=None):
    """
    Advance the world by one tick.

    The scaling used for the whole tick is evaluated from the positions at
    the start of the tick, and that start-of-tick state is what gets logged.

    Args:
        world (World): mutated in place.
        dt (float | None): tick length; defaults to ``config.sample_period``.

    Returns:
        World: the same object, for chaining. ``world.task_done`` tells
        whether the robot finished its task during the tick.

    Example:
        >>> import numpy as np
        >>> from safescale.core import load_config, default_scenario_fpath
        >>> from safescale.sim import World, step_sim
        >>> world = World.create(load_config(default_scenario_fpath()))
        >>> world.robot.position = np.array([0.0, 0.0, 0.0])
        >>> world.robot.goal = np.array([1.0, 0.0, 0.0])
        >>> world.robot.phase = 'moving'
        >>> world.robot.nominal_speed = 0.5
        >>> world.human.position = np.array([1.0, 0.0, 0.0])
        >>> world.human.dwell_remaining = 100.0
        >>> _ = step_sim(world, 0.1)
        >>> round(float(world.robot.position[0]), 9)
        0.025
    """
    config = world.config
    dt = config.sample_period if dt is None else dt
    if dt <= 0:
        raise ValueError('dt must be > 0')
    robot = world.robot
    human = world.human
    scaling = eval_scaling(config.safety, robot.position, human.position)
    robot.current_scaling = scaling
    if world.record:
        gh = world.human_goal.mu
        world.rows.append((
            world.episode, world.t,
            *robot.position, *human.position, *robot.goal,
            gh.x, gh.y, gh.z, scaling,
        ))
    world.task_done = robot.step(config, dt)
    human.step(config, world.human_rng, dt)
    world.tick += 1
    return world


@dataclass(frozen=True)
class LogRecord:
    episode: int
    t: float
    x_r: tuple
    x_h: tuple
    g_r: tuple
    g_h_mu: tuple
    s: float


def iter_records(log):
    """
    Yield :class:`LogRecord` objects from a log array.
    """
    for row in np.asarray(log):
        yield LogRecord(int(row[COL_EPISODE]), float(row[COL_T]),
                        tuple(row[COL_XR]), tuple(row[COL_XH]),
                        tuple(row[COL_GR]), tuple(row[COL_GH]), float(row[COL_S]))


@dataclass(frozen=True)
class TaskMetric:
    episode: int
    task_index: int
    action_id: object
    start_t: float
    end_t: float
    mean_scaling: float

    @property
    def exec_time(self):
        return self.end_t - self.start_t


@dataclass
class EpisodeResult:
    """
    Output of :func:`run_episode`.

    Attributes:
        trace (ScalingTrace): scaling at every tick.
        log (ndarray): one row per tick, columns :data:`LOG_COLUMNS`.
        metrics (List[TaskMetric]): one entry per completed task.
        decisions (List[Tuple[float, object]]): decision instants and the
            chosen action ids.
        human_visits (List[int]): human goal indices in visiting order.
        observed_at (List[float]): for each decision, the instant at which
            the human state handed to the policy was observed.
    """
    trace: ScalingTrace
    log: np.ndarray
    metrics: list
    decisions: list
    human_visits: list
    robot_travelled: float = 0.0
    observed_at: list = field(default_factory=list)

    def records(self):
        return iter_records(self.log)


def _choose(world, policy, state, policy_rng, observation):
    config = world.config
    available = available_actions(state, config)
    if not available:
        return None
    x_h, goal_index = observation
    ctx = PlannerContext(
        x_r=world.robot.position.copy(), x_h=x_h,
        current_goal=config.human_goals[goal_index],
        available=available, rng=policy_rng, state=state, config=config)
    action = policy.select(ctx)
    if all(action.id != a.id for a in available):
        raise ValueError('illegal action')
    return action


@profile
def run_episode(config, policy, duration=None, task_limit=None, seed=None,
                episode=0, phase_key=0):
    """
    Simulate one episode.

    Args:
        config (WorkspaceConfig): scenario.
        policy: object with ``select(ctx) -> RobotAction`` and optionally
            ``reset()``, called once before the first decision.
        duration (float | None): stop after this many seconds.
        task_limit (int | None): stop once this many tasks completed.
            When neither limit is given ``config.tasks_per_episode`` is used.
        seed (int | None): master seed, defaults to ``config.rng_seed``.
        episode (int): episode index, part of every RNG stream key.
        phase_key (int): separates data collection (0) from evaluation (1).

    Returns:
        EpisodeResult

    Raises:
        ValueError: "illegal action" if the policy returns an unavailable
            action.
    """
    if duration is None and task_limit is None:
        task_limit = config.tasks_per_episode
    seed = config.rng_seed if seed is None else seed
    dt = config.sample_period
    max_ticks = None if duration is None else int(round(duration / dt))
    world = World.create(config, seed=seed, episode=episode, phase_key=phase_key)
    policy_rng = episode_rng(seed, phase_key, episode, STREAM_POLICY)
    if hasattr(policy, 'reset'):
        policy.reset()
    # Observations of the last ``lag`` ticks; the oldest one is what the
    # policy sees. Early decisions get the episode start.
    lag = int(round(config.mc.lead_time / dt))
    history = deque(maxlen=lag + 1)
    state = ProcessState.initial(config)
    metrics = []
    decisions = []
    observed_at = []
    current = None
    while True:
        if max_ticks is not None and world.tick >= max_ticks:
            break
        if task_limit is not None and len(metrics) >= task_limit:
            break
        robot = world.robot
        history.append((world.tick, world.human.position.copy(), world.human.goal_index))
        if robot.phase == RobotPhase.IDLE:
            obs_tick, x_h, goal_index = history[0]
            action = _choose(world, policy, state, policy_rng, (x_h.copy(), goal_index))
            if action is None:
                break
            state = state.after(action, config)
            robot.start_task(action)
            decisions.append((world.t, action.id))
            observed_at.append(obs_tick * dt)
            current = (action.id, world.tick)
        step_sim(world, dt)
        if world.task_done and current is not None:
            action_id, start_tick = current
            metrics.append((action_id, start_tick, world.tick))
            current = None

    log = np.array(world.rows, dtype=float).reshape(-1, len(LOG_COLUMNS))
    task_metrics = []
    for index, (action_id, start_tick, end_tick) in enumerate(metrics):
        window = log[start_tick:end_tick, COL_S]
        task_metrics.append(TaskMetric(
            episode=episode, task_index=index, action_id=action_id,
            start_t=start_tick * dt, end_t=end_tick * dt,
            mean_scaling=float(window.mean()) if len(window) else math.nan))
    trace = ScalingTrace(log[:, COL_T], log[:, COL_S])
    return EpisodeResult(trace=trace, log=log, metrics=task_metrics,
                         decisions=decisions, human_visits=list(world.human.visits),
                         robot_travelled=world.robot.travelled,
                         observed_at=observed_at)


def _run_episode_job(args):
    config, policy, seed, episode, phase_key, task_limit, duration = args
    return run_episode(config, policy, duration=duration, task_limit=task_limit,
                       seed=seed, episode=episode, phase_key=phase_key)


def run_episodes(config, policy, episodes, seed=None, phase_key=0,
                 task_limit=None, duration=None, workers=0, verbose=0):
    """
    Run episodes ``0 .. episodes - 1``, optionally across worker processes.
    Results are always returned in episode order.

    Args:
        workers (int): number of worker processes; 0 runs serially.
    """
    seed = config.rng_seed if seed is None else seed
    jobs = [(config, policy, seed, episode, phase_key, task_limit, duration)
            for episode in range(episodes)]
    if workers and workers > 0 and episodes > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            results = list(ub.ProgIter(executor.map(_run_episode_job, jobs),
                                       total=episodes, desc='episodes',
                                       verbose=verbose))
    else:
        results = [_run_episode_job(job)
                   for job in ub.ProgIter(jobs, desc='episodes', verbose=verbose)]
    return results


def build_training_set(logs, N, stride=1):
    """
    Cut logs into (features, target) training pairs.

    For every row with at least ``N`` later rows in the same episode the
    features are ``(x_r, x_h, g_r, g_h_mu)`` and the target is the mean of the
    ``N + 1`` scaling samples starting at that row. Windows never cross
    episodes.

    Args:
        logs (ndarray | List[ndarray]): log arrays with :data:`LOG_COLUMNS`.
        N (int): window length in samples.
        stride (int): keep every ``stride``-th window start.

    Returns:
        safescale.learn.training.Dataset

    Raises:
        ValueError: "no trainable windows" when every episode is too short.

    Example:
        >>> import numpy as np
        >>> from safescale.sim import build_training_set, LOG_COLUMNS
        >>> log = np.zeros((5, len(LOG_COLUMNS)))
        >>> log[:, -1] = [0.0, 0.25, 0.5, 0.75, 1.0]
        >>> data = build_training_set(log, 2)
        >>> data.targets.tolist()
        [0.25, 0.5, 0.75]
        >>> data.features.shape
        (3, 12)
    """
    from .learn.training import Dataset
    if N < 1:
        raise ValueError('N must be >= 1')
    if isinstance(logs, np.ndarray):
        logs = [logs]
    feature_parts, target_parts, episode_parts = [], [], []
    for log in logs:
        log = np.asarray(log, dtype=float)
        if log.size == 0:
            continue
        episodes = log[:, COL_EPISODE]
        # Split on episode changes so concatenated logs work too.
        cuts = np.flatnonzero(np.diff(episodes) != 0) + 1
        for chunk in np.split(log, cuts):
            n = len(chunk)
            if n <= N:
                continue
            starts = np.arange(0, n - N, stride)
            csum = np.concatenate([[0.0], np.cumsum(chunk[:, COL_S])])
            targets = (csum[starts + N + 1] - csum[starts]) / (N + 1)
            feature_parts.append(chunk[starts, FEATURE_COLS])
            target_parts.append(targets)
            episode_parts.append(chunk[starts, COL_EPISODE].astype(int))
    if not target_parts:
        raise ValueError('no trainable windows')
    return Dataset(features=np.concatenate(feature_parts),
                   targets=np.concatenate(target_parts),
                   episodes=np.concatenate(episode_parts))


def write_log(fpath, log):
    """
    Write a log array as CSV with the :data:`LOG_COLUMNS` header.
    """
    log = np.asarray(log, dtype=float).reshape(-1, len(LOG_COLUMNS))
    fmt = ['%d'] + ['%.12g'] * (len(LOG_COLUMNS) - 1)
    np.savetxt(fpath, log, delimiter=',', fmt=fmt,
               header=','.join(LOG_COLUMNS), comments='')
    return fpath


def read_log(fpath):
    """
    Read a log written by :func:`write_log`.

    Example:
        >>> import numpy as np
        >>> import ubelt as ub
        >>> from safescale.sim import read_log, write_log, LOG_COLUMNS
        >>> dpath = ub.Path.appdir('safescale/tests/doctest').ensuredir()
        >>> log = np.arange(2 * len(LOG_COLUMNS), dtype=float).reshape(2, -1) / 3
        >>> log[:, 0] = 4
        >>> fpath = write_log(dpath / 'log.csv', log)
        >>> np.allclose(read_log(fpath), log, rtol=1e-11)
        True
    """
    with open(fpath, 'r') as file:
        header = file.readline().strip()
    if header.split(',') != LOG_COLUMNS:
        raise ValueError(f'{fpath} does not have a log header')
    data = np.loadtxt(fpath, delimiter=',', skiprows=1, ndmin=2)
    return data.reshape(-1, len(LOG_COLUMNS))


def write_metrics(fpath, metrics):
    with open(fpath, 'w', newline='') as file:
        writer = csv.writer(file, lineterminator='\n')
        writer.writerow(METRIC_COLUMNS)
        for m in metrics:
            writer.writerow([m.episode, m.task_index, m.action_id,
                             f'{m.start_t:.12g}', f'{m.end_t:.12g}',
                             f'{m.mean_scaling:.12g}'])
    return fpath


def _parse_id(text):
    try:
        return int(text)
    except ValueError:
        return text


def read_metrics(fpath):
    """
    Read task metrics written by :func:`write_metrics`.

    Example:
        >>> import ubelt as ub
        >>> from safescale.sim import TaskMetric, read_metrics, write_metrics
        >>> dpath = ub.Path.appdir('safescale/tests/doctest').ensuredir()
        >>> metrics = [TaskMetric(0, 0, 'box, left', 0.0, 9.5, 0.75)]
        >>> read_metrics(write_metrics(dpath / 'metrics.csv', metrics)) == metrics
        True
    """
    with open(fpath, 'r', newline='') as file:
        reader = csv.reader(file)
        if next(reader, None) != METRIC_COLUMNS:
            raise ValueError(f'{fpath} does not have a metrics header')
        metrics = []
        for cells in reader:
            if not cells:
                continue
            episode, task_index, action_id, start_t, end_t, mean_scaling = cells
            metrics.append(TaskMetric(int(episode), int(task_index), _parse_id(action_id),
                                      float(start_t), float(end_t), float(mean_scaling)))
    return metrics
