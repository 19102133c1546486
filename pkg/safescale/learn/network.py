"""
Feed-forward scaling predictor written directly in numpy.

Architecture::

    12 inputs (standardized)
      -> [Linear(no bias) -> BatchNorm -> ReLU] x hidden_count   (width 64)
      -> Linear(K) -> Softmax                                     (y')
      -> Linear(1):  y = beta_0 + sum_i beta_i * y'_i

Because ``y'`` lies on the probability simplex the output is a convex
combination of the ``beta_i`` shifted by ``beta_0``. With a staircase safety
function of K plateaus this lets the network express the windowed average as
"fraction of time on each plateau times plateau value".

Example:
    >>> from safescale.learn.network import build_network, expected_param_count
    >>> import numpy as np
    >>> net = build_network(K=5, seed=0)
    >>> net.hidden_count, net.width
    (5, 64)
    >>> net.num_params() == expected_param_count(5, 5)
    True
    >>> probs = net.penultimate(np.random.default_rng(0).normal(size=(4, 12)))
    >>> np.allclose(probs.sum(axis=1), 1)
    True
"""
import json

import numpy as np
import ubelt as ub

INPUT_DIM = 12
FORMAT_VERSION = 1


def default_hidden_count(K):
    """
    Number of hidden blocks used when none is requested: 5 up to K=5, 6 above.
    """
    return 5 if K <= 5 else 6


def expected_param_count(K, hidden_count, width=64, input_dim=INPUT_DIM):
    """
    Closed-form number of trainable parameters.

    Example:
        >>> from safescale.learn.network import expected_param_count
        >>> expected_param_count(5, 5)
        18123
    """
    first = input_dim * width + 2 * width
    rest = (hidden_count - 1) * (width * width + 2 * width)
    head = width * K + K
    out = K + 1
    return first + rest + head + out


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


class ScalingPredictor:
    """
    Predicts the average speed scaling over the next window from
    ``(x_r, x_h, g_r, g_h_mu)``.

    Attributes:
        K (int): width of the Softmax layer.
        hidden_count (int): number of hidden blocks.
        width (int): hidden width.
        params (Dict[str, ndarray]): trainable arrays.
        running (Dict[str, ndarray]): batch-norm running means / variances.
        feature_mean (ndarray): per-feature means from the training split.
        feature_std (ndarray): per-feature standard deviations.
        metadata (dict): provenance such as the training config hash.
    """

    def __init__(self, K, hidden_count, width=64, eps=1e-5, momentum=0.9):
        if K < 1 or hidden_count < 1 or width < 1:
            raise ValueError('K, hidden_count and width must all be >= 1')
        self.K = int(K)
        self.hidden_count = int(hidden_count)
        self.width = int(width)
        self.eps = float(eps)
        self.momentum = float(momentum)
        self.params = {}
        self.running = {}
        self.feature_mean = np.zeros(INPUT_DIM)
        self.feature_std = np.ones(INPUT_DIM)
        self.metadata = {}

    def __repr__(self):
        return (f'<ScalingPredictor K={self.K} hidden_count={self.hidden_count} '
                f'width={self.width}>')

    def param_names(self):
        names = []
        for i in range(self.hidden_count):
            names += [f'W{i}', f'gamma{i}', f'beta{i}']
        names += ['W_head', 'b_head', 'out_w', 'out_b']
        return names

    def num_params(self):
        return int(sum(self.params[k].size for k in self.param_names()))

    @property
    def beta(self):
        """
        Output layer weights as ``[beta_0, beta_1, ..., beta_K]``.
        """
        return np.concatenate([self.params['out_b'], self.params['out_w']])

    def initialize(self, seed=0):
        """
        He-normal weights for the hidden layers, scaled normal for the head,
        unit BN scales and zero shifts / biases.
        """
        rng = np.random.default_rng(seed)
        fan_in = INPUT_DIM
        for i in range(self.hidden_count):
            self.params[f'W{i}'] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, self.width))
            self.params[f'gamma{i}'] = np.ones(self.width)
            self.params[f'beta{i}'] = np.zeros(self.width)
            self.running[f'mean{i}'] = np.zeros(self.width)
            self.running[f'var{i}'] = np.ones(self.width)
            fan_in = self.width
        self.params['W_head'] = rng.normal(0.0, np.sqrt(1.0 / self.width), size=(self.width, self.K))
        self.params['b_head'] = np.zeros(self.K)
        self.params['out_w'] = rng.normal(0.0, np.sqrt(1.0 / self.K), size=self.K)
        self.params['out_b'] = np.zeros(1)
        return self

    def set_feature_stats(self, features):
        """
        Standardization statistics; constant features keep a unit scale.
        """
        features = np.asarray(features, dtype=float)
        self.feature_mean = features.mean(axis=0)
        std = features.std(axis=0)
        std[std < 1e-12] = 1.0
        self.feature_std = std

    def forward(self, features, training=False, update_stats=None, params=None):
        """
        Forward pass.

        Args:
            features (ndarray): raw (unstandardized) features, shape (n, 12).
            training (bool): batch-norm uses batch statistics when True and
                running averages otherwise.
            update_stats (bool | None): update the running averages; defaults
                to ``training``.
            params (Dict[str, ndarray] | None): parameters to use instead of
                ``self.params``.

        Returns:
            Tuple[ndarray, dict]: outputs of shape (n,) and the cache needed by
            :meth:`backward`.
        """
        params = self.params if params is None else params
        if update_stats is None:
            update_stats = training
        h = (np.asarray(features, dtype=float) - self.feature_mean) / self.feature_std
        blocks = []
        for i in range(self.hidden_count):
            z = h @ params[f'W{i}']
            if training:
                mu = z.mean(axis=0)
                var = z.var(axis=0)
                if update_stats:
                    m = self.momentum
                    self.running[f'mean{i}'] = m * self.running[f'mean{i}'] + (1 - m) * mu
                    self.running[f'var{i}'] = m * self.running[f'var{i}'] + (1 - m) * var
            else:
                mu = self.running[f'mean{i}']
                var = self.running[f'var{i}']
            inv_std = 1.0 / np.sqrt(var + self.eps)
            xhat = (z - mu) * inv_std
            a = params[f'gamma{i}'] * xhat + params[f'beta{i}']
            blocks.append((h, xhat, inv_std, a))
            h = np.maximum(a, 0.0)
        probs = _softmax(h @ params['W_head'] + params['b_head'])
        y = probs @ params['out_w'] + params['out_b'][0]
        cache = {'blocks': blocks, 'h_last': h, 'probs': probs, 'training': training}
        return y, cache

    def backward(self, dy, cache, params=None):
        """
        Gradients of a scalar loss with respect to every parameter, given
        ``dy = dL/dy`` of shape (n,).
        """
        params = self.params if params is None else params
        grads = {}
        probs = cache['probs']
        grads['out_w'] = probs.T @ dy
        grads['out_b'] = np.array([dy.sum()])
        dprobs = dy[:, None] * params['out_w'][None, :]
        dlogits = probs * (dprobs - (dprobs * probs).sum(axis=1, keepdims=True))
        grads['W_head'] = cache['h_last'].T @ dlogits
        grads['b_head'] = dlogits.sum(axis=0)
        dh = dlogits @ params['W_head'].T
        for i in reversed(range(self.hidden_count)):
            h_in, xhat, inv_std, a = cache['blocks'][i]
            da = dh * (a > 0)
            grads[f'gamma{i}'] = (da * xhat).sum(axis=0)
            grads[f'beta{i}'] = da.sum(axis=0)
            dxhat = da * params[f'gamma{i}']
            if cache['training']:
                n = dxhat.shape[0]
                dz = inv_std / n * (n * dxhat - dxhat.sum(axis=0)
                                    - xhat * (dxhat * xhat).sum(axis=0))
            else:
                dz = dxhat * inv_std
            grads[f'W{i}'] = h_in.T @ dz
            dh = dz @ params[f'W{i}'].T
        return grads

    def loss_and_grads(self, features, targets, training=True, update_stats=None):
        """
        Mean squared error on a batch and its parameter gradients.
        """
        y, cache = self.forward(features, training=training, update_stats=update_stats)
        diff = y - np.asarray(targets, dtype=float)
        loss = float(np.mean(diff ** 2))
        grads = self.backward(2.0 * diff / len(diff), cache)
        return loss, grads

    def predict_batch(self, features):
        """
        Raw (unclamped) predictions in evaluation mode.
        """
        features = np.asarray(features, dtype=float).reshape(-1, INPUT_DIM)
        if not np.all(np.isfinite(features)):
            raise ValueError('invalid feature')
        y, _ = self.forward(features, training=False)
        return y

    def penultimate(self, features):
        """
        Softmax activations ``y'`` in evaluation mode, shape (n, K).
        """
        features = np.asarray(features, dtype=float).reshape(-1, INPUT_DIM)
        _, cache = self.forward(features, training=False)
        return cache['probs']

    def predict(self, x_r, x_h, g_r, g_h_mu, return_raw=False):
        """
        Predicted average scaling for one state.

        Args:
            x_r, x_h, g_r, g_h_mu (Vec3 | ArrayLike): the four feature groups,
                in this order.
            return_raw (bool): also return the unclamped network output.

        Returns:
            float | Tuple[float, float]: prediction clamped to [0, 1]
            (and the raw value).

        Raises:
            ValueError: "invalid feature" for NaN / Inf inputs.
        """
        features = np.concatenate([np.asarray(tuple(v), dtype=float)
                                   for v in (x_r, x_h, g_r, g_h_mu)])
        raw = float(self.predict_batch(features[None, :])[0])
        clamped = min(1.0, max(0.0, raw))
        if return_raw:
            return clamped, raw
        return clamped

    def copy(self):
        new = ScalingPredictor(self.K, self.hidden_count, self.width,
                               eps=self.eps, momentum=self.momentum)
        new.params = {k: v.copy() for k, v in self.params.items()}
        new.running = {k: v.copy() for k, v in self.running.items()}
        new.feature_mean = self.feature_mean.copy()
        new.feature_std = self.feature_std.copy()
        new.metadata = dict(self.metadata)
        return new

    def state_dict(self):
        return {
            'version': FORMAT_VERSION,
            'K': self.K,
            'hidden_count': self.hidden_count,
            'width': self.width,
            'eps': self.eps,
            'momentum': self.momentum,
            'params': {k: self.params[k].tolist() for k in self.param_names()},
            'running': {k: v.tolist() for k, v in sorted(self.running.items())},
            'feature_mean': self.feature_mean.tolist(),
            'feature_std': self.feature_std.tolist(),
            'metadata': self.metadata,
        }

    @classmethod
    def from_state_dict(cls, state):
        if state.get('version') != FORMAT_VERSION:
            raise ValueError(f'Unsupported model version {state.get("version")!r}')
        self = cls(state['K'], state['hidden_count'], state['width'],
                   eps=state.get('eps', 1e-5), momentum=state.get('momentum', 0.9))
        self.params = {k: np.asarray(v, dtype=float) for k, v in state['params'].items()}
        self.running = {k: np.asarray(v, dtype=float) for k, v in state['running'].items()}
        self.feature_mean = np.asarray(state['feature_mean'], dtype=float)
        self.feature_std = np.asarray(state['feature_std'], dtype=float)
        self.metadata = dict(state.get('metadata', {}))
        return self


def build_network(K, hidden_count=None, seed=0, width=64, momentum=0.9):
    """
    Construct an untrained predictor.

    Args:
        K (int): Softmax width (number of staircase plateaus).
        hidden_count (int | None): hidden blocks; defaults to
            :func:`default_hidden_count`.
        seed (int): weight initialization seed.
        width (int): hidden width.

    Example:
        >>> from safescale.learn.network import build_network
        >>> build_network(10)
        <ScalingPredictor K=10 hidden_count=6 width=64>
        >>> a, b = build_network(3, seed=1), build_network(3, seed=1)
        >>> all((a.params[k] == b.params[k]).all() for k in a.params)
        True
    """
    if hidden_count is None:
        hidden_count = default_hidden_count(K)
    return ScalingPredictor(K, hidden_count, width=width, momentum=momentum).initialize(seed)


def save_predictor(predictor, fpath):
    """
    Write a predictor as JSON. Floats are written with their shortest exact
    representation, so loading reproduces predictions bit for bit.
    """
    text = json.dumps(predictor.state_dict(), indent=1, sort_keys=True)
    ub.Path(fpath).write_text(text + '\n')
    return fpath


def load_predictor(fpath):
    """
    Example:
        >>> import numpy as np
        >>> import ubelt as ub
        >>> from safescale.learn.network import *  # NOQA
        >>> dpath = ub.Path.appdir('safescale/tests/doctest').ensuredir()
        >>> net = build_network(2, hidden_count=1, width=4, seed=3)
        >>> x = np.random.default_rng(0).normal(size=(3, 12))
        >>> again = load_predictor(save_predictor(net, dpath / 'model.json'))
        >>> (again.predict_batch(x) == net.predict_batch(x)).all()
        True
    """
    fpath = ub.Path(fpath)
    if not fpath.exists():
        raise FileNotFoundError(f'No model at {fpath}')
    return ScalingPredictor.from_state_dict(json.loads(fpath.read_text()))


def _relu_masks(predictor, features, training, params):
    _, cache = predictor.forward(features, training=training, update_stats=False, params=params)
    return [a > 0 for (_, _, _, a) in cache['blocks']]


def gradient_check(predictor, features, targets, step=1e-5, max_coords=None,
                   seed=0, training=None, return_details=False):
    """
    Compare analytic loss gradients with central finite differences.

    Coordinates whose perturbation flips a ReLU (the loss is not smooth
    there) are skipped. The error of each parameter array is
    ``||analytic - numeric|| / (||analytic|| + ||numeric||)`` over the
    checked coordinates, 0 when both are zero.

    Args:
        predictor (ScalingPredictor): network, not modified.
        features (ndarray): batch of raw features (n, 12).
        targets (ndarray): batch targets (n,).
        step (float): finite difference step.
        max_coords (int | None): check at most this many random coordinates
            per array.
        training (bool | None): batch-norm mode; defaults to True for
            batches of 2 or more rows.
        return_details (bool): also return the per-array errors.

    Returns:
        float | Tuple[float, dict]: the maximum relative error.

    Example:
        >>> import numpy as np
        >>> from safescale.learn.network import build_network, gradient_check
        >>> net = build_network(3, hidden_count=2, width=6, seed=0)
        >>> rng = np.random.default_rng(0)
        >>> x, y = rng.normal(size=(8, 12)), rng.uniform(size=8)
        >>> gradient_check(net, x, y) < 1e-4
        True
    """
    features = np.asarray(features, dtype=float).reshape(-1, INPUT_DIM)
    targets = np.asarray(targets, dtype=float).reshape(-1)
    if training is None:
        training = len(features) >= 2
    scratch = predictor.copy()
    rng = np.random.default_rng(seed)

    def loss_at(params):
        y, _ = scratch.forward(features, training=training, update_stats=False, params=params)
        return float(np.mean((y - targets) ** 2))

    y, cache = scratch.forward(features, training=training, update_stats=False)
    analytic = scratch.backward(2.0 * (y - targets) / len(targets), cache)
    base_masks = _relu_masks(scratch, features, training, scratch.params)

    errors = {}
    for name in scratch.param_names():
        array = scratch.params[name]
        coords = np.arange(array.size)
        if max_coords is not None and array.size > max_coords:
            coords = rng.choice(array.size, size=max_coords, replace=False)
        flat = array.reshape(-1)
        numeric, kept = [], []
        for idx in coords:
            orig = flat[idx]
            flat[idx] = orig + step
            plus = loss_at(scratch.params)
            plus_masks = _relu_masks(scratch, features, training, scratch.params)
            flat[idx] = orig - step
            minus = loss_at(scratch.params)
            minus_masks = _relu_masks(scratch, features, training, scratch.params)
            flat[idx] = orig
            smooth = all((m0 == m1).all() and (m0 == m2).all()
                         for m0, m1, m2 in zip(base_masks, plus_masks, minus_masks))
            if smooth:
                numeric.append((plus - minus) / (2 * step))
                kept.append(idx)
        if not kept:
            errors[name] = 0.0
            continue
        a = analytic[name].reshape(-1)[kept]
        n = np.asarray(numeric)
        denom = np.linalg.norm(a) + np.linalg.norm(n)
        errors[name] = 0.0 if denom < 1e-10 else float(np.linalg.norm(a - n) / denom)
    worst = max(errors.values()) if errors else 0.0
    if return_details:
        return worst, errors
    return worst
