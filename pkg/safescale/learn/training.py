"""
Datasets, the training loop and evaluation of the scaling predictor.

Training minimizes the mean squared error between the network output and the
windowed-average scaling with mini-batch Adam. Batch-norm layers use batch
statistics while training and running averages in evaluation. Early stopping
watches the test MSE (or the train MSE when there is no test split) and the
best epoch's weights are restored at the end.
"""
from dataclasses import dataclass

import numpy as np
import ubelt as ub
from line_profiler import profile

from ..core import TrainingSchedule
from .network import build_network

__all__ = [
    'Dataset', 'TrainingSchedule', 'TrainingDiverged', 'split_by_episode',
    'train', 'evaluate_mse', 'grid_search_hidden',
]


@dataclass
class Dataset:
    """
    Training rows cut from simulator logs.

    Attributes:
        features (ndarray): shape (n, 12), ``(x_r, x_h, g_r, g_h_mu)``.
        targets (ndarray): shape (n,), windowed-average scaling.
        episodes (ndarray): shape (n,), episode of each row.
        tag (str): ``'all'``, ``'train'`` or ``'test'``.
    """
    features: np.ndarray
    targets: np.ndarray
    episodes: np.ndarray
    tag: str = 'all'

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float).reshape(-1, 12)
        self.targets = np.asarray(self.targets, dtype=float).reshape(-1)
        self.episodes = np.asarray(self.episodes, dtype=int).reshape(-1)
        if not (len(self.features) == len(self.targets) == len(self.episodes)):
            raise ValueError('Dataset arrays must have the same number of rows')

    def __len__(self):
        return len(self.targets)

    def subset(self, mask, tag=None):
        return Dataset(self.features[mask], self.targets[mask],
                       self.episodes[mask], self.tag if tag is None else tag)


def split_by_episode(dataset, test_fraction=0.2, seed=0):
    """
    Seeded train / test split that keeps every episode on one side.

    Example:
        >>> import numpy as np
        >>> from safescale.learn.training import Dataset, split_by_episode
        >>> data = Dataset(np.zeros((10, 12)), np.zeros(10), np.repeat(np.arange(5), 2))
        >>> train_set, test_set = split_by_episode(data, 0.2, seed=0)
        >>> len(train_set), len(test_set)
        (8, 2)
        >>> set(train_set.episodes) & set(test_set.episodes)
        set()
    """
    episodes = np.unique(dataset.episodes)
    rng = np.random.default_rng(seed)
    order = rng.permutation(episodes)
    n_test = int(round(test_fraction * len(episodes)))
    if test_fraction > 0 and len(episodes) >= 2:
        n_test = min(max(n_test, 1), len(episodes) - 1)
    test_eps = set(order[:n_test].tolist())
    mask = np.array([e in test_eps for e in dataset.episodes], dtype=bool)
    return dataset.subset(~mask, 'train'), dataset.subset(mask, 'test')


class TrainingDiverged(RuntimeError):
    """
    Raised when the loss becomes non-finite.

    Attributes:
        checkpoint (ScalingPredictor): weights of the last stable epoch.
        epoch (int): epoch during which training diverged.
    """

    def __init__(self, checkpoint, epoch):
        super().__init__(f'training diverged at epoch {epoch}')
        self.checkpoint = checkpoint
        self.epoch = epoch


class _Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1 - b1 ** self.t
        corr2 = 1 - b2 ** self.t
        for key, grad in grads.items():
            self.m[key] = b1 * self.m[key] + (1 - b1) * grad
            self.v[key] = b2 * self.v[key] + (1 - b2) * grad * grad
            m_hat = self.m[key] / corr1
            v_hat = self.v[key] / corr2
            params[key] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def evaluate_mse(predictor, dataset):
    """
    Mean squared error of the raw predictions on a split.

    Returns:
        Tuple[float, ndarray]: the MSE and an (n, 2) array of
        ``(actual, predicted)`` pairs.

    Raises:
        ValueError: "empty split" when the dataset has no rows.
    """
    if len(dataset) == 0:
        raise ValueError('empty split')
    predicted = predictor.predict_batch(dataset.features)
    mse = float(np.mean((predicted - dataset.targets) ** 2))
    pairs = np.stack([dataset.targets, predicted], axis=1)
    return mse, pairs


@profile
def _run_epoch(predictor, optimizer, dataset, batch_size, rng):
    order = rng.permutation(len(dataset))
    losses, weights = [], []
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        if len(idx) < 2:
            continue
        loss, grads = predictor.loss_and_grads(dataset.features[idx], dataset.targets[idx])
        if not np.isfinite(loss):
            return None
        optimizer.step(predictor.params, grads)
        losses.append(loss)
        weights.append(len(idx))
    if not losses:
        return float('nan')
    return float(np.average(losses, weights=weights))


def train(predictor, train_set, schedule=None, test_set=None, seed=0, verbose=0):
    """
    Fit the predictor.

    Args:
        predictor (ScalingPredictor): untrained network, modified in place.
        train_set (Dataset): rows to fit.
        schedule (TrainingSchedule | None): optimizer settings.
        test_set (Dataset | None): rows used for early stopping and reported
            every epoch.
        seed (int): shuffling seed.
        verbose (int): print one line per epoch when > 1.

    Returns:
        Tuple[ScalingPredictor, List[dict]]: the predictor (best epoch
        restored) and one history entry per epoch with keys ``epoch``,
        ``train_mse`` and ``test_mse``.

    Raises:
        TrainingDiverged: if the loss becomes NaN or infinite.

    Example:
        >>> import numpy as np
        >>> from safescale.learn.network import build_network
        >>> from safescale.learn.training import *  # NOQA
        >>> rng = np.random.default_rng(0)
        >>> data = Dataset(rng.normal(size=(64, 12)), np.full(64, 0.7), np.arange(64))
        >>> net = build_network(2, hidden_count=1, width=8)
        >>> schedule = TrainingSchedule(batch_size=16, learning_rate=1e-2, epochs=60)
        >>> net, history = train(net, data, schedule)
        >>> abs(net.predict_batch(data.features[:4]) - 0.7).max() < 0.05
        True
    """
    if len(train_set) == 0:
        raise ValueError('empty split')
    if len(train_set) < 2:
        raise ValueError('training needs at least 2 rows')
    schedule = TrainingSchedule() if schedule is None else schedule
    rng = np.random.default_rng(seed)
    predictor.set_feature_stats(train_set.features)
    optimizer = _Adam(predictor.params, schedule.learning_rate)
    has_test = test_set is not None and len(test_set) > 0
    best, best_score, best_epoch = predictor.copy(), np.inf, -1
    history = []
    stale = 0
    epochs = ub.ProgIter(range(schedule.epochs), desc='train', verbose=verbose)
    for epoch in epochs:
        train_mse = _run_epoch(predictor, optimizer, train_set, schedule.batch_size, rng)
        if train_mse is None:
            raise TrainingDiverged(best, epoch)
        test_mse = evaluate_mse(predictor, test_set)[0] if has_test else float('nan')
        score = test_mse if has_test else train_mse
        if not np.isfinite(score):
            raise TrainingDiverged(best, epoch)
        history.append({'epoch': epoch, 'train_mse': train_mse, 'test_mse': test_mse})
        if verbose > 1:
            print(f'epoch {epoch}: train_mse={train_mse:.6g} test_mse={test_mse:.6g}')
        if score < best_score:
            best, best_score, best_epoch = predictor.copy(), score, epoch
            stale = 0
        else:
            stale += 1
            if stale >= schedule.patience:
                break
    predictor.params = best.params
    predictor.running = best.running
    predictor.metadata['best_epoch'] = best_epoch
    return predictor, history


def grid_search_hidden(K, train_set, test_set, schedule=None, counts=(4, 5, 6, 7),
                       seed=0, verbose=0):
    """
    Train one network per hidden block count and keep the one with the
    lowest test MSE (ties toward fewer blocks).

    Returns:
        Tuple[ScalingPredictor, List[dict], List[dict]]: the best predictor,
        its history and one ``{'hidden_count', 'test_mse'}`` row per
        candidate.
    """
    schedule = TrainingSchedule() if schedule is None else schedule
    best = None
    rows = []
    for count in sorted(counts):
        net = build_network(K, hidden_count=count, seed=seed, width=schedule.width,
                            momentum=schedule.momentum)
        net, history = train(net, train_set, schedule, test_set=test_set,
                             seed=seed, verbose=verbose)
        mse = evaluate_mse(net, test_set)[0]
        rows.append({'hidden_count': count, 'test_mse': mse})
        if verbose:
            print(f'hidden_count={count}: test_mse={mse:.6g}')
        if best is None or mse < best[2]:
            best = (net, history, mse)
    return best[0], best[1], rows
