import json
import os
import tempfile
from sys import executable

import pytest
import ubelt as ub

from safescale.core import (config_to_dict, default_scenario_fpath,
                            dump_config, load_config, parse_config)


def _fast_scenario(dpath, **overrides):
    """
    The default cell with short episodes and a fixed rollout count so the
    harness runs quickly and deterministically.
    """
    raw = config_to_dict(load_config(default_scenario_fpath()))
    raw['tasks_per_episode'] = 3
    raw['mc'].update({'budget': None, 'rollouts': 4, 'max_len': 3})
    raw.update(overrides)
    return dump_config(parse_config(raw), ub.Path(dpath) / 'scenario.yaml')


def _run(args, cwd):
    info = ub.cmd([executable, '-m', 'safescale'] + args, cwd=cwd, verbose=3)
    return info


def test_version():
    from safescale import __version__
    info = ub.cmd([executable, '-m', 'safescale', '--version'])
    assert info['ret'] == 0
    assert info['out'].strip() == __version__


def test_pipeline_end_to_end():
    """
    CommandLine:
        xdoctest -m ./tests/test_cli.py test_pipeline_end_to_end
    """
    dpath = ub.Path(tempfile.mkdtemp())
    scenario = os.fspath(_fast_scenario(dpath))
    out = os.fspath(dpath / 'out')
    common = ['--config', scenario, '--out', out, '--seed', '3']

    info = _run(['collect', '--episodes', '8'] + common, dpath)
    assert info['ret'] == 0
    assert (dpath / 'out' / 'logs' / 'episode_0007.csv').exists()

    info = _run(['estimate-k'] + common, dpath)
    assert info['ret'] == 0
    K = json.loads((dpath / 'out' / 'k_estimate.json').read_text())['K']
    assert 2 <= K <= 5

    info = _run(['train', '--epochs', '3', '--horizon', '4'] + common, dpath)
    assert info['ret'] == 0
    assert (dpath / 'out' / 'model.json').exists()
    assert (dpath / 'out' / 'predictions_test.csv').exists()

    for policy in ['random', 'round-robin', 'reactive', 'greedy', 'monte-carlo']:
        info = _run(['evaluate', '--policy', policy, '--episodes', '1'] + common, dpath)
        assert info['ret'] == 0

    info = _run(['report'] + common, dpath)
    assert info['ret'] == 0
    text = (dpath / 'out' / 'report' / 'report.txt').read_text()
    for label in ['random', 'round-robin', 'reactive', 'greedy', 'monte-carlo']:
        assert label in text

    results = (dpath / 'out' / 'results.csv').read_text().splitlines()
    assert len(results) == 1 + 5

    manifest = json.loads((dpath / 'out' / 'manifest.json').read_text())
    assert manifest['hash_algorithm'] == 'sha256'
    assert set(manifest['phases']) >= {'collect', 'estimate-k', 'train', 'evaluate', 'report'}
    assert 'model.json' in manifest['files']


def test_evaluation_is_reproducible():
    dpath = ub.Path(tempfile.mkdtemp())
    scenario = os.fspath(_fast_scenario(dpath))
    out1 = os.fspath(dpath / 'out1')
    out2 = os.fspath(dpath / 'out2')
    for out in [out1, out2]:
        info = _run(['evaluate', '--policy', 'round-robin', '--episodes', '2',
                     '--config', scenario, '--out', out, '--seed', '5'], dpath)
        assert info['ret'] == 0
    text1 = (ub.Path(out1) / 'results.csv').read_text()
    text2 = (ub.Path(out2) / 'results.csv').read_text()
    assert text1 == text2
    files1 = json.loads((ub.Path(out1) / 'manifest.json').read_text())['files']
    files2 = json.loads((ub.Path(out2) / 'manifest.json').read_text())['files']
    assert files1 == files2


def test_errors_are_reported_on_one_line():
    dpath = ub.Path(tempfile.mkdtemp())
    out = os.fspath(dpath / 'empty')
    info = _run(['evaluate', '--policy', 'greedy', '--out', out], dpath)
    assert info['ret'] == 1
    lines = info['err'].strip().splitlines()
    assert len(lines) == 1
    assert lines[0].startswith('safescale-error: verb=evaluate type=FileNotFoundError message=')

    info = _run(['report', '--out', out], dpath)
    assert info['ret'] == 1
    assert 'verb=report' in info['err']

    info = _run(['collect', '--episodes', '0', '--out', out], dpath)
    assert info['ret'] == 1
    assert 'nothing to collect' in info['err']


def test_stale_model_is_rejected():
    dpath = ub.Path(tempfile.mkdtemp())
    scenario = os.fspath(_fast_scenario(dpath))
    out = os.fspath(dpath / 'out')
    common = ['--config', scenario, '--out', out]
    assert _run(['collect', '--episodes', '4'] + common, dpath)['ret'] == 0
    assert _run(['train', '--epochs', '1', '--k', '5', '--horizon', '2'] + common, dpath)['ret'] == 0

    moved = load_config(scenario)
    raw = config_to_dict(moved)
    raw['robot_actions'][1]['goal'] = [-1.0, 0.6, 0.8]
    (dpath / 'moved').ensuredir()
    moved_fpath = dump_config(parse_config(raw), dpath / 'moved' / 'scenario.yaml')
    info = _run(['evaluate', '--policy', 'greedy', '--episodes', '1',
                 '--config', os.fspath(moved_fpath), '--out', out], dpath)
    assert info['ret'] == 1
    assert 'stale model' in info['err']


@pytest.mark.slow
@pytest.mark.skipif(not os.environ.get('SAFESCALE_SLOW'),
                    reason='set SAFESCALE_SLOW=1 to run the inaccurate-model ablation')
def test_ablation_trains_missing_models():
    dpath = ub.Path(tempfile.mkdtemp())
    scenario = os.fspath(_fast_scenario(dpath))
    out = os.fspath(dpath / 'out')
    common = ['--config', scenario, '--out', out, '--seed', '1']
    assert _run(['collect', '--episodes', '6'] + common, dpath)['ret'] == 0
    assert _run(['train', '--epochs', '2', '--horizon', '3'] + common, dpath)['ret'] == 0

    info = _run(['ablate', '--episodes', '1'] + common, dpath)
    assert info['ret'] == 1
    assert 'train-missing' in info['err']

    info = _run(['ablate', '--episodes', '1', '--train-missing',
                 '--collect-episodes', '6', '--epochs', '2', '--horizon', '3'] + common, dpath)
    assert info['ret'] == 0
    results = (dpath / 'out' / 'results.csv').read_text()
    for label in ['greedy', 'greedy-inacc-1', 'greedy-inacc-2', 'random']:
        assert label + ',' in results


def test_sweep_k_writes_one_row_per_plateau_count():
    dpath = ub.Path(tempfile.mkdtemp())
    scenario = os.fspath(_fast_scenario(dpath))
    out = dpath / 'out'
    common = ['--config', scenario, '--out', os.fspath(out), '--seed', '3']
    info = _run(['sweep-k', '--k-list', '3,5', '--episodes', '6', '--epochs', '2',
                 '--horizon', '3'] + common, dpath)
    assert info['ret'] == 0
    lines = (out / 'k_sweep.csv').read_text().splitlines()
    assert lines[0] == 'K,hidden_count,train_rows,test_rows,train_mse,test_mse'
    assert [line.split(',')[0] for line in lines[1:]] == ['3', '5']
    for K in [3, 5]:
        model = json.loads((out / 'sweep_k' / f'k{K:02d}' / 'model.json').read_text())
        assert model['K'] == K
        sub_config = load_config(out / 'sweep_k' / f'k{K:02d}' / 'config.yaml')
        assert sub_config.safety.K == K
        assert sub_config.safety.thresholds[-1] == pytest.approx(2.0)
    manifest = json.loads((out / 'manifest.json').read_text())
    assert manifest['phases']['sweep-k']['k_list'] == [3, 5]
    assert 'k_sweep.csv' in manifest['files']

    info = _run(['sweep-k', '--k-list', '1,5'] + common, dpath)
    assert info['ret'] == 1
    assert 'distinct plateau counts' in info['err']
