"""
Staircase safety speed scaling.

The safety system slows the robot down as a function of the distance between
the robot end-effector and the human. Here that function is piecewise
constant: distance bands ``[d_{i-1}, d_i)`` with ``d_0 = 0`` and
``d_K = inf`` map to fixed plateau values. Band boundaries belong to the upper
band.

This module also holds the windowed-average quantities used as learning
targets: the mean scaling over ``N + 1`` samples starting at a time instant,
and its decomposition into per-plateau fractions.

Example:
    >>> from safescale.safety import *  # NOQA
    >>> safety = staircase_for_k(5)
    >>> safety.thresholds
    (0.5, 1.0, 1.5, 2.0)
    >>> safety.values
    (0.0, 0.25, 0.5, 0.75, 1.0)
    >>> eval_scaling(safety, (0, 0, 0), (1.2, 0, 0))
    0.5
    >>> eval_scaling(safety, (0, 0, 0), (1.0, 0, 0))
    0.5
"""
from dataclasses import dataclass

import numpy as np

# Tolerance for matching a sample against a plateau value.
PLATEAU_TOL = 1e-9

# Tolerance on the spacing of trace timestamps.
SPACING_TOL = 1e-9


@dataclass(frozen=True)
class StaircaseSafety:
    """
    Staircase speed scaling function.

    Attributes:
        thresholds (Tuple[float, ...]): strictly increasing positive distances
            ``d_1 < ... < d_{K-1}`` in meters.
        values (Tuple[float, ...]): strictly increasing plateau values in
            ``[0, 1]``, one more than there are thresholds.

    Example:
        >>> from safescale.safety import StaircaseSafety
        >>> StaircaseSafety((1.0,), (0.5, 1.0)).K
        2
        >>> StaircaseSafety((1.0,), (1.0, 0.5))
        Traceback (most recent call last):
        ...
        ValueError: safety.values must be strictly increasing
    """
    thresholds: tuple
    values: tuple

    def __post_init__(self):
        thresholds = tuple(float(d) for d in self.thresholds)
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, 'thresholds', thresholds)
        object.__setattr__(self, 'values', values)
        if len(values) != len(thresholds) + 1:
            raise ValueError(
                'safety.values needs exactly one more entry than '
                f'safety.thresholds (got {len(values)} and {len(thresholds)})')
        if not all(np.isfinite(thresholds)) or any(d <= 0 for d in thresholds):
            raise ValueError('safety.thresholds must be finite and > 0')
        if any(a >= b for a, b in zip(thresholds, thresholds[1:])):
            raise ValueError('safety.thresholds must be strictly increasing')
        if any(not (0.0 <= v <= 1.0) for v in values):
            raise ValueError('safety.values must lie in [0, 1]')
        if any(a >= b for a, b in zip(values, values[1:])):
            raise ValueError('safety.values must be strictly increasing')

    @property
    def K(self):
        return len(self.values)

    def plateau_index(self, distance):
        """
        Index (0-based) of the band that contains ``distance``. Works
        elementwise on arrays.
        """
        return np.searchsorted(self.thresholds, distance, side='right')


def _distance(x_r, x_h):
    x_r = np.asarray(tuple(x_r), dtype=float)
    x_h = np.asarray(tuple(x_h), dtype=float)
    return float(np.linalg.norm(x_r - x_h))


def eval_scaling(safety, x_r, x_h):
    """
    Scaling applied to the robot speed for the given robot and human
    positions.

    Args:
        safety (StaircaseSafety): the safety function.
        x_r (Vec3 | ArrayLike): robot end-effector position.
        x_h (Vec3 | ArrayLike): human centroid position.

    Returns:
        float: one of ``safety.values``.

    Example:
        >>> from safescale.safety import *  # NOQA
        >>> safety = staircase_for_k(5)
        >>> eval_scaling(safety, (0, 0, 0), (0, 0, 0))
        0.0
        >>> eval_scaling(safety, (0, 0, 0), (0, 2.0, 0))
        1.0
    """
    return safety.values[int(safety.plateau_index(_distance(x_r, x_h)))]


def scaling_at_distance(safety, distances):
    """
    Vectorized scaling lookup for an array of distances.

    Example:
        >>> from safescale.safety import *  # NOQA
        >>> scaling_at_distance(staircase_for_k(5), [0.1, 0.5, 3.0]).tolist()
        [0.0, 0.25, 1.0]
    """
    values = np.asarray(safety.values)
    return values[safety.plateau_index(np.asarray(distances, dtype=float))]


@dataclass(frozen=True)
class ScalingTrace:
    """
    Scaling samples taken at a constant period.

    Attributes:
        times (ndarray): strictly increasing timestamps with constant spacing.
        values (ndarray): scaling sample at each timestamp.
    """
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.shape != values.shape or times.ndim != 1:
            raise ValueError('ScalingTrace needs 1-D times and values of equal length')
        if len(times) > 1:
            steps = np.diff(times)
            if steps[0] <= 0 or np.abs(steps - steps[0]).max() > SPACING_TOL:
                raise ValueError('ScalingTrace timestamps must be uniformly spaced')
        object.__setattr__(self, 'times', times)
        object.__setattr__(self, 'values', values)

    def __len__(self):
        return len(self.times)

    @property
    def period(self):
        if len(self.times) < 2:
            return None
        return float(self.times[1] - self.times[0])

    @classmethod
    def from_samples(cls, values, period, start=0.0):
        values = np.asarray(values, dtype=float)
        times = start + np.arange(len(values)) * period
        return cls(times, values)

    def index_of(self, t_bar):
        if len(self.times) == 0:
            raise ValueError('insufficient trace')
        period = self.period or 1.0
        idx = int(round((t_bar - self.times[0]) / period))
        if idx < 0 or abs(self.times[0] + idx * period - t_bar) > 1e-6:
            raise ValueError(f'time {t_bar} is not a sample of the trace')
        return idx

    def window(self, t_bar, N):
        """
        The ``N + 1`` samples starting at ``t_bar``.
        """
        if N < 0:
            raise ValueError('window length must be >= 0')
        start = self.index_of(t_bar)
        stop = start + N + 1
        if stop > len(self.values):
            raise ValueError('insufficient trace')
        return self.values[start:stop]


def window_average(trace, t_bar, N):
    """
    Mean scaling over the ``N + 1`` samples at ``t_bar, t_bar + dt, ...,
    t_bar + N dt``.

    Raises:
        ValueError: "insufficient trace" if the window runs past the trace.

    Example:
        >>> from safescale.safety import *  # NOQA
        >>> trace = ScalingTrace.from_samples([0.25] * 6 + [0.75] * 5, 0.1)
        >>> round(window_average(trace, 0.0, 10), 5)
        0.47727
    """
    return float(np.mean(trace.window(t_bar, N)))


def alpha_decompose(trace, safety, t_bar, N):
    """
    Fraction of the window spent on each plateau.

    Returns:
        ndarray: ``alpha`` of length K with ``alpha.sum() == 1`` and
        ``alpha @ safety.values == window_average(trace, t_bar, N)``.

    Raises:
        ValueError: "off-staircase sample" if a sample matches no plateau.

    Example:
        >>> from safescale.safety import *  # NOQA
        >>> trace = ScalingTrace.from_samples([0.25] * 6 + [0.75] * 5, 0.1)
        >>> alpha = alpha_decompose(trace, staircase_for_k(5), 0.0, 10)
        >>> (alpha * 11).round(9).tolist()
        [0.0, 6.0, 0.0, 5.0, 0.0]
    """
    window = trace.window(t_bar, N)
    values = np.asarray(safety.values)
    match = np.abs(window[:, None] - values[None, :]) <= PLATEAU_TOL
    if not match.any(axis=1).all():
        raise ValueError('off-staircase sample')
    counts = np.bincount(match.argmax(axis=1), minlength=safety.K)
    return counts / len(window)


def staircase_for_k(K, d_max=2.0):
    """
    Evenly spaced staircase with K plateaus: thresholds ``d_max * i / (K - 1)``
    and values ``linspace(0, 1, K)``.

    Example:
        >>> from safescale.safety import staircase_for_k
        >>> staircase_for_k(3).thresholds
        (1.0, 2.0)
        >>> staircase_for_k(1).values
        (1.0,)
    """
    K = int(K)
    if K < 1:
        raise ValueError('K must be >= 1')
    if K == 1:
        return StaircaseSafety((), (1.0,))
    thresholds = [d_max * i / (K - 1) for i in range(1, K)]
    values = np.linspace(0.0, 1.0, K).tolist()
    return StaircaseSafety(tuple(thresholds), tuple(values))


def inflate_thresholds(safety, factor=1.2):
    """
    Copy of ``safety`` with every threshold multiplied by ``factor``.

    Example:
        >>> from safescale.safety import *  # NOQA
        >>> inflate_thresholds(staircase_for_k(5)).thresholds
        (0.6, 1.2, 1.8, 2.4)
    """
    if factor <= 0:
        raise ValueError('factor must be > 0')
    thresholds = tuple(round(d * factor, 12) for d in safety.thresholds)
    return StaircaseSafety(thresholds, safety.values)
