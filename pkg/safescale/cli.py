"""
Command line experiment harness.

Every verb reads and writes one output directory (``--out``):

.. code::

    out/
      manifest.json            content hashes (sha256) and settings of each phase
      config.yaml              canonical copy of the collection scenario
      logs/episode_0000.csv    one simulator log per collected episode
      logs/metrics.csv         per-task metrics of the collection run
      k_estimate.json          estimated plateau count and silhouette scores
      model.json               trained scaling predictor
      history.csv              train / test MSE per epoch
      predictions_test.csv     actual vs predicted targets on the test split
      eval/<label>/            log, metrics and scenario of one evaluation
      results.csv              one row per evaluated policy
      k_sweep.csv              test MSE per plateau count, models under sweep_k/
      report/                  report.txt, histograms.csv, density.csv, plots

A typical session:

.. code:: bash

    safescale collect --episodes 200 --seed 7 --out runs/demo
    safescale estimate-k --out runs/demo
    safescale train --out runs/demo
    safescale evaluate --policy random --episodes 20 --out runs/demo
    safescale evaluate --policy greedy --episodes 20 --out runs/demo
    safescale ablate --train-missing --episodes 20 --out runs/demo
    safescale sweep-k --k-list 3,5,10,20 --out runs/demo
    safescale report --out runs/demo

On failure a single line
``safescale-error: verb=<verb> type=<ExceptionName> message=<text>`` is written
to stderr and the exit code is 1.

Hot loops are decorated with :py:obj:`line_profiler.profile`; run with
``--line-profile`` (or ``LINE_PROFILE=1``) to profile them.
"""
import csv
import json
import sys
import warnings
from argparse import ArgumentParser
from dataclasses import dataclass, replace

import numpy as np
import ubelt as ub

from .core import (config_hash, default_scenario_fpath, dump_config,
                   layout_hash, load_config, with_safety)
from .learn import (build_network, estimate_k as _estimate_k, evaluate_mse,
                    grid_search_hidden, load_predictor, save_predictor,
                    split_by_episode, train as _train, TrainingDiverged)
from .plan import POLICY_NAMES, make_policy
from .report import (ReportWriter, ResultTable, density_grid,
                     scaling_histogram, summarize_run)
from .safety import inflate_thresholds, staircase_for_k
from .sim import (COL_S, build_training_set, read_log, run_episodes,
                  write_log, write_metrics)

# NOTE: This version needs to be manually maintained in
# safescale/__init__.py as well
__version__ = '0.1.0'

PHASES = ('collect', 'estimate-k', 'train', 'evaluate', 'ablate', 'sweep-k', 'report')

# Seeds of collection and evaluation runs live in separate RNG families.
PHASE_KEYS = {'collect': 0, 'evaluate': 1}

DEFAULT_COLLECT_EPISODES = 200
DEFAULT_EVAL_EPISODES = 20
LEARNED_POLICIES = ('greedy', 'monte-carlo')


@dataclass
class RunOptions:
    """
    Settings of one harness invocation.

    Attributes:
        config_path (str | None): scenario file; the packaged default when
            None.
        phase (str): one of :data:`PHASES`.
        policy (str): policy name for collect / evaluate.
        episodes (int | None): episode count; the phase default when None.
        seed (int | None): master seed; ``rng_seed`` of the scenario when None.
        out (str): output directory.
        model (str | None): model file; ``<out>/model.json`` when None.
    """
    config_path: str = None
    phase: str = 'collect'
    policy: str = None
    episodes: int = None
    seed: int = None
    out: str = 'safescale_out'
    model: str = None
    workers: int = 0
    verbose: int = 0
    epochs: int = None
    k: int = None
    horizon: float = None
    grid_hidden: bool = False
    label: str = None
    train_missing: bool = False
    collect_episodes: int = None
    k_list: tuple = None

    @property
    def dpath(self):
        return ub.Path(self.out)

    def load_config(self):
        fpath = self.config_path or default_scenario_fpath()
        return load_config(fpath)

    def resolve_seed(self, config):
        return config.rng_seed if self.seed is None else int(self.seed)


# ---------------------------------------------------------------------------
# Manifest


def _relpath(dpath, fpath):
    return ub.Path(fpath).relative_to(dpath).as_posix()


def read_manifest(dpath):
    fpath = ub.Path(dpath) / 'manifest.json'
    if not fpath.exists():
        return {'hash_algorithm': 'sha256', 'safescale_version': __version__,
                'phases': {}, 'files': {}}
    return json.loads(fpath.read_text())


def update_manifest(dpath, phase, info, files=(), key=None):
    """
    Record a phase's settings and the content hashes of the files it wrote.

    Args:
        dpath (PathLike): output directory.
        phase (str): phase name.
        info (dict): JSON-serializable settings / results.
        files (List[PathLike]): files written by the phase.
        key (str | None): sub-key for phases that run several times
            (evaluations are keyed by label).
    """
    dpath = ub.Path(dpath)
    manifest = read_manifest(dpath)
    if key is None:
        manifest['phases'][phase] = info
    else:
        manifest['phases'].setdefault(phase, {})[key] = info
    for fpath in files:
        manifest['files'][_relpath(dpath, fpath)] = ub.hash_file(fpath, hasher='sha256')
    text = json.dumps(manifest, indent=2, sort_keys=True)
    (dpath / 'manifest.json').write_text(text + '\n')
    return manifest


def _csv_cell(value):
    if value is None:
        return ''
    if isinstance(value, float):
        return f'{value:.12g}'
    return value


def _model_hash(fpath):
    return ub.hash_file(fpath, hasher='sha256')


# ---------------------------------------------------------------------------
# Verbs


def collect(options):
    """
    Run episodes with randomized human behavior and write their logs.

    Returns:
        List[ub.Path]: the episode log files.
    """
    config = options.load_config()
    episodes = DEFAULT_COLLECT_EPISODES if options.episodes is None else options.episodes
    if episodes < 1:
        raise ValueError('nothing to collect')
    policy_name = options.policy or 'random'
    if policy_name in LEARNED_POLICIES:
        raise ValueError('collect only supports predictor-free policies')
    seed = options.resolve_seed(config)
    dpath = options.dpath.ensuredir()
    log_dpath = (dpath / 'logs').ensuredir()
    config_fpath = dump_config(config, dpath / 'config.yaml')

    results = run_episodes(config, make_policy(policy_name), episodes, seed=seed,
                           phase_key=PHASE_KEYS['collect'], workers=options.workers,
                           verbose=options.verbose)
    log_fpaths = []
    metrics = []
    for episode, result in enumerate(results):
        fpath = log_dpath / f'episode_{episode:04d}.csv'
        write_log(fpath, result.log)
        log_fpaths.append(fpath)
        metrics.extend(result.metrics)
    metrics_fpath = write_metrics(log_dpath / 'metrics.csv', metrics)
    update_manifest(dpath, 'collect', {
        'episodes': episodes,
        'seed': seed,
        'policy': policy_name,
        'config_hash': config_hash(config),
        'layout_hash': layout_hash(config),
        'logs': [_relpath(dpath, f) for f in log_fpaths],
    }, files=[config_fpath, metrics_fpath] + log_fpaths)
    if options.verbose:
        print(f'Wrote {len(log_fpaths)} episode logs to {log_dpath}')
    return log_fpaths


def _collected(dpath):
    manifest = read_manifest(dpath)
    info = manifest['phases'].get('collect', None)
    if info is None:
        raise FileNotFoundError(f'No collected logs in {dpath}, run "collect" first')
    config = load_config(dpath / 'config.yaml')
    logs = [read_log(dpath / rel) for rel in info['logs']]
    return config, logs, info


def estimate_k(options):
    """
    Estimate the number of staircase plateaus from the collected logs.

    Returns:
        int: the estimated K.
    """
    dpath = options.dpath
    config, logs, _ = _collected(dpath)
    samples = np.concatenate([log[:, COL_S] for log in logs])
    seed = options.resolve_seed(config)
    K, scores = _estimate_k(samples, seed=seed, return_scores=True)
    fpath = dpath / 'k_estimate.json'
    fpath.write_text(json.dumps({'K': K, 'scores': {str(k): v for k, v in sorted(scores.items())}},
                                indent=2, sort_keys=True) + '\n')
    update_manifest(dpath, 'estimate-k', {'K': K, 'samples': int(len(samples))}, files=[fpath])
    if options.verbose:
        for k, v in sorted(scores.items()):
            print(f'K={k:2d} silhouette={v:.4f}')
        print(f'Estimated K={K}, wrote {fpath}')
    return K


def train(options):
    """
    Train the scaling predictor on the collected logs.

    Returns:
        ScalingPredictor
    """
    dpath = options.dpath
    config, logs, collect_info = _collected(dpath)
    seed = options.resolve_seed(config)
    if options.k is not None:
        K = int(options.k)
    elif (dpath / 'k_estimate.json').exists():
        K = json.loads((dpath / 'k_estimate.json').read_text())['K']
    else:
        K = estimate_k(options)
    horizon = config.horizon if options.horizon is None else float(options.horizon)
    N = int(round(horizon / config.sample_period))
    schedule = config.train
    if options.epochs is not None:
        schedule = replace(schedule, epochs=int(options.epochs))

    dataset = build_training_set(logs, N, stride=schedule.stride)
    train_set, test_set = split_by_episode(dataset, schedule.test_fraction, seed=seed)
    if options.verbose:
        print(f'Training K={K} N={N} on {len(train_set)} rows, testing on {len(test_set)}')

    model_fpath = dpath / 'model.json'
    grid_rows = []
    try:
        if options.grid_hidden:
            predictor, history, grid_rows = grid_search_hidden(
                K, train_set, test_set, schedule, seed=seed, verbose=options.verbose)
        else:
            predictor = build_network(K, seed=seed, width=schedule.width,
                                      momentum=schedule.momentum)
            predictor, history = _train(predictor, train_set, schedule,
                                        test_set=test_set, seed=seed, verbose=options.verbose)
    except TrainingDiverged as ex:
        save_predictor(ex.checkpoint, dpath / 'model_diverged.json')
        raise

    predictor.metadata.update({
        'config_hash': config_hash(config),
        'layout_hash': layout_hash(config),
        'safety': {'thresholds': list(config.safety.thresholds),
                   'values': list(config.safety.values)},
        'horizon': horizon,
        'N': N,
        'sample_period': config.sample_period,
        'seed': seed,
    })
    save_predictor(predictor, model_fpath)

    history_fpath = dpath / 'history.csv'
    with open(history_fpath, 'w', newline='') as file:
        writer = csv.writer(file, lineterminator='\n')
        writer.writerow(['epoch', 'train_mse', 'test_mse'])
        for h in history:
            writer.writerow([h['epoch'], _csv_cell(h['train_mse']), _csv_cell(h['test_mse'])])

    files = [model_fpath, history_fpath]
    test_mse = None
    if len(test_set):
        test_mse, pairs = evaluate_mse(predictor, test_set)
        pred_fpath = dpath / 'predictions_test.csv'
        np.savetxt(pred_fpath, pairs, delimiter=',', fmt='%.12g',
                   header='actual,predicted', comments='')
        files.append(pred_fpath)
    train_mse = evaluate_mse(predictor, train_set)[0]
    update_manifest(dpath, 'train', {
        'K': K,
        'hidden_count': predictor.hidden_count,
        'horizon': horizon,
        'N': N,
        'seed': seed,
        'epochs_run': len(history),
        'train_rows': len(train_set),
        'test_rows': len(test_set),
        'train_mse': train_mse,
        'test_mse': test_mse,
        'grid': grid_rows,
        'model_hash': _model_hash(model_fpath),
        'collect_config_hash': collect_info['config_hash'],
    }, files=files)
    if options.verbose:
        print(f'Wrote model to {model_fpath} (test MSE {test_mse})')
    return predictor


def _load_model_for(config, fpath):
    predictor = load_predictor(fpath)
    meta = predictor.metadata
    if 'layout_hash' in meta and meta['layout_hash'] != layout_hash(config):
        raise ValueError('stale model')
    safety = meta.get('safety', None)
    if safety is not None and (tuple(safety['thresholds']) != config.safety.thresholds
                               or tuple(safety['values']) != config.safety.values):
        warnings.warn(f'Model {fpath} was trained under a different safety function '
                      'than the evaluation scenario')
    return predictor


def _evaluate_policy(options, config, policy_name, label, model_fpath=None):
    dpath = options.dpath.ensuredir()
    episodes = DEFAULT_EVAL_EPISODES if options.episodes is None else options.episodes
    if episodes < 1:
        raise ValueError('nothing to evaluate')
    seed = options.resolve_seed(config)
    predictor = None
    model_hash = ''
    model_rel = ''
    if policy_name in LEARNED_POLICIES:
        model_fpath = ub.Path(model_fpath or options.model or dpath / 'model.json')
        predictor = _load_model_for(config, model_fpath)
        model_hash = _model_hash(model_fpath)
        try:
            model_rel = _relpath(dpath, model_fpath)
        except ValueError:
            model_rel = model_fpath.name
    policy = make_policy(policy_name, predictor=predictor)
    results = run_episodes(config, policy, episodes, seed=seed,
                           phase_key=PHASE_KEYS['evaluate'], workers=options.workers,
                           verbose=options.verbose)
    log = np.concatenate([r.log for r in results])
    metrics = [m for r in results for m in r.metrics]

    eval_dpath = (dpath / 'eval' / label).ensuredir()
    log_fpath = write_log(eval_dpath / 'log.csv', log)
    metrics_fpath = write_metrics(eval_dpath / 'metrics.csv', metrics)
    config_fpath = dump_config(config, eval_dpath / 'config.yaml')

    row = summarize_run(label, policy_name, metrics, log, seed, config_hash(config),
                        model=model_rel, model_hash=model_hash)
    results_fpath = dpath / 'results.csv'
    table = ResultTable.read_csv(results_fpath) if results_fpath.exists() else ResultTable()
    table.add(row)
    table.write_csv(results_fpath)
    update_manifest(dpath, 'evaluate', {
        'policy': policy_name,
        'episodes': episodes,
        'seed': seed,
        'config_hash': config_hash(config),
        'model_hash': model_hash,
    }, files=[log_fpath, metrics_fpath, config_fpath, results_fpath], key=label)
    if options.verbose:
        print(f'{label}: exec time {row["exec_time_mean"]:.3f} s '
              f'(std {row["exec_time_std"]:.3f}), scaling {row["scaling_mean"]:.3f}')
    return table


def evaluate(options):
    """
    Evaluate one policy and add its row to ``results.csv``.

    Returns:
        ResultTable: the updated table.
    """
    config = options.load_config()
    policy_name = options.policy or 'random'
    if policy_name not in POLICY_NAMES:
        raise ValueError(f'Unknown policy {policy_name!r}')
    label = options.label or policy_name
    return _evaluate_policy(options, config, policy_name, label)


ABLATION_SUBDIRS = {
    'greedy-inacc-1': 'k3',
    'greedy-inacc-2': 'inflated',
}


def _ablation_safety(config, name):
    if name == 'k3':
        return staircase_for_k(3, d_max=config.safety.thresholds[-1])
    if name == 'inflated':
        return inflate_thresholds(config.safety, 1.2)
    raise KeyError(name)


def _train_ablation_model(options, config, name):
    sub_dpath = (options.dpath / 'ablate' / name).ensuredir()
    sub_config = with_safety(config, _ablation_safety(config, name))
    config_fpath = dump_config(sub_config, sub_dpath / 'scenario.yaml')
    episodes = options.collect_episodes
    if episodes is None:
        info = read_manifest(options.dpath)['phases'].get('collect', {})
        episodes = info.get('episodes', DEFAULT_COLLECT_EPISODES)
    sub_options = replace(options, config_path=str(config_fpath), out=str(sub_dpath),
                       episodes=episodes, policy='random', k=None, label=None)
    collect(sub_options)
    estimate_k(sub_options)
    train(sub_options)
    return sub_dpath / 'model.json'


def ablate_inaccurate(options):
    """
    Compare greedy selection with the matched model against models trained
    under a K=3 staircase and under thresholds inflated by 1.2, all evaluated
    in the true scenario, alongside the random baseline.

    Returns:
        ResultTable
    """
    config = options.load_config()
    dpath = options.dpath
    models = {'greedy': ub.Path(options.model or dpath / 'model.json')}
    for label, name in ABLATION_SUBDIRS.items():
        fpath = dpath / 'ablate' / name / 'model.json'
        if not fpath.exists():
            if not options.train_missing:
                raise FileNotFoundError(
                    f'missing inaccurate model {fpath}; rerun with --train-missing')
            fpath = _train_ablation_model(options, config, name)
        models[label] = fpath
    if not models['greedy'].exists():
        raise FileNotFoundError(f'missing matched model {models["greedy"]}')
    table = None
    with warnings.catch_warnings():
        # Mismatched safety functions are the point of this experiment.
        warnings.filterwarnings('ignore', message='.*different safety function.*')
        for label, fpath in models.items():
            table = _evaluate_policy(options, config, 'greedy', label, model_fpath=fpath)
    table = _evaluate_policy(options, config, 'random', 'random')
    update_manifest(dpath, 'ablate', {
        'labels': sorted(models) + ['random'],
        'models': {label: _model_hash(fpath) for label, fpath in sorted(models.items())},
    })
    return table


DEFAULT_SWEEP_K = (3, 5, 10, 20)
SWEEP_COLUMNS = ['K', 'hidden_count', 'train_rows', 'test_rows', 'train_mse', 'test_mse']


def sweep_k(options):
    """
    Train one predictor per plateau count on matched data.

    For every K in ``options.k_list`` episodes are collected under an evenly
    spaced K-plateau staircase that ends at the scenario's outermost
    threshold, and a predictor of Softmax width K is trained on them. All
    collections share the master seed, so the human behaves the same in each.

    Returns:
        List[dict]: one :data:`SWEEP_COLUMNS` row per K, also written to
        ``k_sweep.csv``.
    """
    config = options.load_config()
    k_list = tuple(options.k_list or DEFAULT_SWEEP_K)
    if any(k < 2 for k in k_list) or len(set(k_list)) != len(k_list):
        raise ValueError(f'--k-list needs distinct plateau counts >= 2, got {list(k_list)}')
    d_max = config.safety.thresholds[-1] if config.safety.thresholds else 2.0
    dpath = options.dpath.ensuredir()
    episodes = options.episodes
    if episodes is None:
        info = read_manifest(dpath)['phases'].get('collect', {})
        episodes = info.get('episodes', DEFAULT_COLLECT_EPISODES)
    rows = []
    files = []
    for K in k_list:
        sub_dpath = (dpath / 'sweep_k' / f'k{K:02d}').ensuredir()
        sub_config = with_safety(config, staircase_for_k(K, d_max=d_max))
        config_fpath = dump_config(sub_config, sub_dpath / 'scenario.yaml')
        sub_options = replace(options, config_path=str(config_fpath), out=str(sub_dpath),
                              episodes=episodes, policy='random', k=K, label=None,
                              grid_hidden=False)
        collect(sub_options)
        train(sub_options)
        info = read_manifest(sub_dpath)['phases']['train']
        rows.append({'K': K, **{key: info[key] for key in SWEEP_COLUMNS[1:]}})
        files.append(sub_dpath / 'model.json')
        if options.verbose:
            print(f'K={K:2d} test MSE {info["test_mse"]}')

    fpath = dpath / 'k_sweep.csv'
    with open(fpath, 'w', newline='') as file:
        writer = csv.writer(file, lineterminator='\n')
        writer.writerow(SWEEP_COLUMNS)
        for row in rows:
            writer.writerow([_csv_cell(row[key]) for key in SWEEP_COLUMNS])
    update_manifest(dpath, 'sweep-k', {
        'k_list': list(k_list),
        'episodes': episodes,
        'd_max': d_max,
        'rows': rows,
    }, files=[fpath] + files)
    return rows


def report(options):
    """
    Render the policy table, scaling histograms and prediction density.

    Returns:
        str: the report text.
    """
    dpath = options.dpath
    results_fpath = dpath / 'results.csv'
    if not results_fpath.exists():
        raise FileNotFoundError(f'No results in {dpath}, run "evaluate" first')
    table = ResultTable.read_csv(results_fpath)
    if not len(table):
        raise ValueError('empty results')
    histograms = {}
    plateau_values = None
    for row in table.rows:
        eval_dpath = dpath / 'eval' / row['label']
        eval_config = load_config(eval_dpath / 'config.yaml')
        values = list(eval_config.safety.values)
        if plateau_values is None:
            plateau_values = values
        elif values != plateau_values:
            raise ValueError('results mix scenarios with different safety functions')
        log = read_log(eval_dpath / 'log.csv')
        histograms[row['label']] = scaling_histogram(log[:, COL_S], values)
    density = None
    pred_fpath = dpath / 'predictions_test.csv'
    if pred_fpath.exists():
        pairs = np.loadtxt(pred_fpath, delimiter=',', skiprows=1, ndmin=2)
        density = density_grid(pairs)
    writer = ReportWriter()
    writer.write_config['stdout'] = bool(options.verbose)
    report_dpath = dpath / 'report'
    text = writer.write(report_dpath, table, histograms, plateau_values, density,
                        verbose=options.verbose)
    files = [report_dpath / 'report.txt', report_dpath / 'histograms.csv']
    if density is not None:
        files.append(report_dpath / 'density.csv')
    update_manifest(dpath, 'report', {'labels': [r['label'] for r in table.rows]},
                    files=files)
    return text


VERBS = {
    'collect': collect,
    'estimate-k': estimate_k,
    'train': train,
    'evaluate': evaluate,
    'ablate': ablate_inaccurate,
    'sweep-k': sweep_k,
    'report': report,
}


def main(args=None):
    """
    Runs the command line interface
    """
    def positive_float(value):
        val = float(value)
        if val <= 0:
            raise ValueError(f'{value} is not > 0')
        return val

    def nonnegative_int(value):
        val = int(value)
        if val < 0:
            raise ValueError(f'{value} is < 0')
        return val

    def int_list(value):
        return tuple(int(v) for v in value.split(',') if v.strip())

    common = ArgumentParser(add_help=False)
    common.add_argument('--config', default=None,
                        help='Scenario YAML file (default: the packaged pick and place cell)')
    common.add_argument('--seed', type=int, default=None,
                        help='Master seed (default: rng_seed of the scenario)')
    common.add_argument('--episodes', type=nonnegative_int, default=None,
                        help='Number of episodes to collect or evaluate')
    common.add_argument('--out', default='safescale_out',
                        help='Output directory shared by all verbs')
    common.add_argument('--policy', default=None, choices=POLICY_NAMES,
                        help='Policy used by collect / evaluate')
    common.add_argument('--model', default=None,
                        help='Model file (default: <out>/model.json)')
    common.add_argument('--workers', type=nonnegative_int, default=0,
                        help='Worker processes for episodes (0 runs serially)')
    common.add_argument('-v', '--verbose', action='count', default=0,
                        help='Print progress; repeat for per-epoch output')
    common.add_argument('--line-profile', action='store_true',
                        help='Profile the decorated hot loops with line_profiler')

    parser = ArgumentParser(prog='safescale',
                            description='Learn safety speed scaling and plan robot actions.')
    parser.add_argument('-V', '--version', action='version', version=__version__)
    subparsers = parser.add_subparsers(dest='verb', required=True)
    subparsers.add_parser('collect', parents=[common],
                          help='Run randomized episodes and write logs')
    subparsers.add_parser('estimate-k', parents=[common],
                          help='Estimate the number of scaling plateaus')
    train_parser = subparsers.add_parser('train', parents=[common],
                                         help='Train the scaling predictor')
    train_parser.add_argument('--epochs', type=int, default=None)
    train_parser.add_argument('--k', type=int, default=None,
                              help='Softmax width (default: the estimated K)')
    train_parser.add_argument('--horizon', type=positive_float, default=None,
                              help='Predictive window in seconds')
    train_parser.add_argument('--grid-hidden', action='store_true',
                              help='Grid search the hidden block count over 4..7')
    eval_parser = subparsers.add_parser('evaluate', parents=[common],
                                        help='Evaluate a policy')
    eval_parser.add_argument('--label', default=None,
                             help='Row label in results.csv (default: the policy name)')
    ablate_parser = subparsers.add_parser('ablate', parents=[common],
                                          help='Inaccurate-model ablation')
    ablate_parser.add_argument('--train-missing', action='store_true',
                               help='Collect and train the mismatched models if absent')
    ablate_parser.add_argument('--collect-episodes', type=int, default=None,
                               help='Episodes collected for each mismatched model')
    ablate_parser.add_argument('--epochs', type=int, default=None,
                               help='Training epochs for each mismatched model')
    ablate_parser.add_argument('--horizon', type=positive_float, default=None,
                               help='Predictive window in seconds for each mismatched model')
    sweep_parser = subparsers.add_parser('sweep-k', parents=[common],
                                         help='Test MSE against the plateau count on matched data')
    sweep_parser.add_argument('--k-list', type=int_list, default=None,
                              help='Comma separated plateau counts (default: 3,5,10,20)')
    sweep_parser.add_argument('--epochs', type=int, default=None)
    sweep_parser.add_argument('--horizon', type=positive_float, default=None,
                              help='Predictive window in seconds')
    subparsers.add_parser('report', parents=[common],
                          help='Write the report from persisted results')

    ns = parser.parse_args(args=args)
    options = RunOptions(
        config_path=ns.config, phase=ns.verb, policy=ns.policy,
        episodes=ns.episodes, seed=ns.seed, out=ns.out, model=ns.model,
        workers=ns.workers, verbose=ns.verbose,
        epochs=getattr(ns, 'epochs', None), k=getattr(ns, 'k', None),
        horizon=getattr(ns, 'horizon', None),
        grid_hidden=getattr(ns, 'grid_hidden', False),
        label=getattr(ns, 'label', None),
        train_missing=getattr(ns, 'train_missing', False),
        collect_episodes=getattr(ns, 'collect_episodes', None),
        k_list=getattr(ns, 'k_list', None),
    )
    if ns.line_profile:
        from line_profiler import profile
        if profile.enabled:
            prefix = options.dpath.ensuredir() / 'line_profile'
            profile.enable(output_prefix=str(prefix))
        else:
            # The decorators were applied before the flag was seen.
            warnings.warn('--line-profile has no effect unless it is given on '
                          'the command line; set LINE_PROFILE=1 instead')
    try:
        VERBS[ns.verb](options)
    except Exception as ex:
        message = ' '.join(str(ex).split()) or repr(ex)
        sys.stderr.write(f'safescale-error: verb={ns.verb} type={type(ex).__name__} '
                         f'message={message}\n')
        return 1
    return 0


if __name__ == '__main__':
    sys.exit(main())
