"""
Estimate the number of staircase plateaus from observed scaling values.

The logged scaling values of a staircase safety function concentrate on a few
levels. Clustering them in one dimension and picking the cluster count with
the best silhouette score recovers the number of plateaus K, which sets the
Softmax width of the predictor.
"""
import warnings

import numpy as np
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning
from sklearn.metrics import silhouette_score

MIN_SAMPLES = 100

# Sample spread under which everything is one plateau.
SPREAD_TOL = 1e-6


def estimate_k(samples, k_max=20, seed=0, max_samples=5000, return_scores=False):
    """
    Number of scaling plateaus by silhouette-maximizing 1-D k-means.

    Candidate counts run from 2 to ``k_max`` (capped by the number of distinct
    values). Ties are broken toward the smaller count.

    Args:
        samples (ArrayLike): observed scaling values in [0, 1].
        k_max (int): largest candidate count.
        seed (int): seeds both subsampling and k-means.
        max_samples (int): random subsample size used when more samples are
            given.
        return_scores (bool): also return ``{k: silhouette}``.

    Returns:
        int | Tuple[int, Dict[int, float]]

    Raises:
        ValueError: "insufficient data" for fewer than 100 samples.

    Example:
        >>> import numpy as np
        >>> from safescale.learn.clustering import estimate_k
        >>> rng = np.random.default_rng(0)
        >>> levels = rng.choice([0.0, 1.0], size=400)
        >>> estimate_k(levels + rng.normal(0, 0.01, size=400), k_max=6)
        2
        >>> estimate_k(np.ones(200))
        1
    """
    samples = np.asarray(samples, dtype=float).reshape(-1)
    if len(samples) < MIN_SAMPLES:
        raise ValueError('insufficient data')
    if samples.max() - samples.min() < SPREAD_TOL:
        return (1, {}) if return_scores else 1
    rng = np.random.default_rng(seed)
    if len(samples) > max_samples:
        samples = rng.choice(samples, size=max_samples, replace=False)
    X = samples[:, None]
    distinct = len(np.unique(samples))
    upper = min(k_max, distinct, len(samples) - 1)
    scores = {}
    for k in range(2, upper + 1):
        kmeans = KMeans(n_clusters=k, n_init=10, random_state=seed)
        with warnings.catch_warnings():
            warnings.simplefilter('ignore', ConvergenceWarning)
            labels = kmeans.fit_predict(X)
        if len(np.unique(labels)) < 2:
            continue
        scores[k] = float(silhouette_score(X, labels))
    if not scores:
        best = 1
    else:
        best = None
        for k in sorted(scores):
            if best is None or scores[k] > scores[best] + 1e-12:
                best = k
    if return_scores:
        return best, scores
    return best
