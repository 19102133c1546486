"""
Result tables and the experiment report.

The report has three parts:

* the policy comparison table (mean / std execution time per task and mean
  scaling of every evaluated policy),
* the distribution of logged scaling values per policy, binned at the plateau
  values of the staircase function,
* the actual versus predicted density of the trained model on its test rows.

Everything is written as plain text / CSV first; static plots are added when
matplotlib is importable. Console output can be colored with ``rich``, which
is enabled by default and can be switched off with ``SAFESCALE_RICH=0``.
"""
import csv
import io
import os
import sys
import warnings
from dataclasses import dataclass, field

import numpy as np
import ubelt as ub

_FALSY_STRINGS = {'', '0', 'off', 'false', 'no'}

RESULT_COLUMNS = [
    'label', 'policy', 'model', 'episodes', 'tasks',
    'exec_time_mean', 'exec_time_std', 'scaling_mean',
    'seed', 'config_hash', 'model_hash',
]

_FLOAT_COLUMNS = {'exec_time_mean', 'exec_time_std', 'scaling_mean'}
_INT_COLUMNS = {'episodes', 'tasks', 'seed'}


def _env_flag(name, default):
    value = os.environ.get(name, None)
    if value is None:
        return default
    return value.lower() not in _FALSY_STRINGS


@dataclass
class ResultTable:
    """
    One row per evaluated policy run, keyed by ``label``.

    Example:
        >>> from safescale.report import ResultTable
        >>> table = ResultTable()
        >>> table.add({'label': 'random', 'policy': 'random', 'model': '',
        >>>            'episodes': 2, 'tasks': 24, 'exec_time_mean': 10.5,
        >>>            'exec_time_std': 1.25, 'scaling_mean': 0.7, 'seed': 0,
        >>>            'config_hash': 'abc', 'model_hash': ''})
        >>> table.add(dict(table.rows[0], exec_time_mean=11.0))
        >>> len(table.rows), table.rows[0]['exec_time_mean']
        (1, 11.0)
    """
    rows: list = field(default_factory=list)

    def add(self, row):
        """
        Insert a row, replacing an existing row with the same label.
        """
        row = {k: row.get(k, '') for k in RESULT_COLUMNS}
        if not (0.0 <= float(row['scaling_mean']) <= 1.0):
            raise ValueError(f'scaling_mean out of range for {row["label"]!r}')
        if float(row['exec_time_std']) < 0:
            raise ValueError(f'negative exec_time_std for {row["label"]!r}')
        for idx, existing in enumerate(self.rows):
            if existing['label'] == row['label']:
                self.rows[idx] = row
                return
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def get(self, label):
        for row in self.rows:
            if row['label'] == label:
                return row
        raise KeyError(label)

    def write_csv(self, fpath):
        with open(fpath, 'w', newline='') as file:
            writer = csv.writer(file, lineterminator='\n')
            writer.writerow(RESULT_COLUMNS)
            for row in self.rows:
                writer.writerow([f'{float(row[key]):.12g}' if key in _FLOAT_COLUMNS
                                 else row[key] for key in RESULT_COLUMNS])
        return fpath

    @classmethod
    def read_csv(cls, fpath):
        fpath = ub.Path(fpath)
        if not fpath.exists():
            raise FileNotFoundError(f'No results at {fpath}')
        with open(fpath, 'r', newline='') as file:
            reader = csv.reader(file)
            header = next(reader, None)
            if header != RESULT_COLUMNS:
                raise ValueError(f'{fpath} does not have a results header')
            self = cls()
            for cells in reader:
                if not cells:
                    continue
                row = dict(zip(RESULT_COLUMNS, cells))
                for key in _FLOAT_COLUMNS:
                    row[key] = float(row[key])
                for key in _INT_COLUMNS:
                    row[key] = int(row[key])
                self.rows.append(row)
        return self


def summarize_run(label, policy, metrics, log, seed, config_hash,
                  model='', model_hash=''):
    """
    Build a result row from the task metrics and logs of an evaluation.

    The execution time is measured per task from its decision instant to the
    robot becoming idle again. The mean scaling is taken over every logged
    tick of the run, which weights each instant equally.

    Args:
        metrics (List[TaskMetric]): tasks of every episode.
        log (ndarray): concatenated episode logs.

    Example:
        >>> import numpy as np
        >>> from safescale.report import summarize_run
        >>> from safescale.sim import TaskMetric, LOG_COLUMNS
        >>> metrics = [TaskMetric(0, 0, 1, 0.0, 10.0, 1.0),
        >>>            TaskMetric(0, 1, 2, 10.0, 14.0, 0.5)]
        >>> log = np.zeros((4, len(LOG_COLUMNS)))
        >>> log[:, -1] = [1.0, 1.0, 0.5, 0.5]
        >>> row = summarize_run('x', 'random', metrics, log, 0, 'h')
        >>> row['exec_time_mean'], row['exec_time_std'], row['scaling_mean']
        (7.0, 3.0, 0.75)
    """
    if not metrics:
        raise ValueError(f'run {label!r} completed no tasks')
    exec_times = np.array([m.end_t - m.start_t for m in metrics], dtype=float)
    episodes = sorted({m.episode for m in metrics})
    scaling = np.asarray(log, dtype=float)[:, -1]
    return {
        'label': label,
        'policy': policy,
        'model': model,
        'episodes': len(episodes),
        'tasks': len(metrics),
        'exec_time_mean': float(exec_times.mean()),
        'exec_time_std': float(exec_times.std()),
        'scaling_mean': float(scaling.mean()),
        'seed': int(seed),
        'config_hash': config_hash,
        'model_hash': model_hash,
    }


def scaling_histogram(samples, plateau_values, tol=1e-9):
    """
    Frequency of each plateau value among logged scaling samples.

    Returns:
        ndarray: frequencies in plateau order, summing to 1.

    Example:
        >>> from safescale.report import scaling_histogram
        >>> scaling_histogram([0.0, 1.0, 1.0, 0.5], [0.0, 0.5, 1.0]).tolist()
        [0.25, 0.25, 0.5]
    """
    samples = np.asarray(samples, dtype=float).reshape(-1)
    values = np.asarray(plateau_values, dtype=float)
    if samples.size == 0:
        raise ValueError('no scaling samples')
    match = np.abs(samples[:, None] - values[None, :]) <= tol
    if not match.any(axis=1).all():
        raise ValueError('off-staircase sample')
    counts = np.bincount(match.argmax(axis=1), minlength=len(values))
    return counts / counts.sum()


def density_grid(pairs, bins=20):
    """
    2-D histogram of (actual, predicted) pairs on ``[0, 1]^2``. Predictions
    are clipped into the unit square first.

    Returns:
        Tuple[ndarray, ndarray]: counts of shape (bins, bins) indexed
        ``[actual_bin, predicted_bin]`` and the shared bin edges.
    """
    pairs = np.asarray(pairs, dtype=float).reshape(-1, 2)
    if len(pairs) == 0:
        raise ValueError('no prediction pairs')
    edges = np.linspace(0.0, 1.0, bins + 1)
    clipped = np.clip(pairs, 0.0, 1.0)
    counts, _, _ = np.histogram2d(clipped[:, 0], clipped[:, 1], bins=[edges, edges])
    return counts.astype(int), edges


def show_table(rows, columns, stream=None, rich=False, title=None):
    """
    Write a fixed-width text table. Column widths grow to fit the content.

    Args:
        rows (List[Dict[str, object]]): table rows.
        columns (List[Tuple[str, str, int]]): ``(key, header, min_width)``
            triples in display order.
        stream (io.TextIOBase | None): defaults to sys.stdout.
        rich (bool): if True, attempt to use rich highlighting.

    Example:
        >>> import io
        >>> from safescale.report import show_table
        >>> stream = io.StringIO()
        >>> show_table([{'a': 'greedy', 'b': 17.123}],
        >>>            [('a', 'Policy', 8), ('b', 'Time', 6)], stream=stream)
        >>> print(stream.getvalue())
          Policy   Time
        ===============
          greedy 17.123
        <BLANKLINE>
    """
    if stream is None:
        stream = sys.stdout

    if rich:
        try:
            from rich.console import Console
            from rich.highlighter import ReprHighlighter
            from rich.text import Text
        except ImportError:
            rich = 0

    display = []
    for row in rows:
        cells = []
        for key, _, _ in columns:
            value = row.get(key, '')
            if isinstance(value, float):
                text = '%.4f' % value if abs(value) < 1e5 else '%.4g' % value
                text = text.rstrip('0').rstrip('.') if '.' in text else text
            else:
                text = str(value)
            cells.append(text)
        display.append(cells)

    column_sizes = [width for _, _, width in columns]
    headers = [header for _, header, _ in columns]
    for idx, header in enumerate(headers):
        column_sizes[idx] = max(column_sizes[idx], len(header))
    for cells in display:
        for idx, text in enumerate(cells):
            column_sizes[idx] = max(column_sizes[idx], len(text))

    template = ' '.join('%' + str(size) + 's' for size in column_sizes)
    header = template % tuple(headers)
    lines = [header, '=' * len(header)]
    lines += [template % tuple(cells) for cells in display]
    if title:
        stream.write(title + '\n')
    if rich:
        text = Text('\n'.join(lines))
        ReprHighlighter().highlight(text)
        Console(file=stream, soft_wrap=True, color_system='standard').print(text)
    else:
        stream.write('\n'.join(lines) + '\n')


def show_text(text, stream=None, rich=False):
    """
    Write report text, highlighted with rich when requested and available.
    """
    if stream is None:
        stream = sys.stdout
    if rich:
        try:
            from rich.console import Console
            from rich.highlighter import ReprHighlighter
            from rich.text import Text
        except ImportError:
            rich = 0
    if rich:
        highlighted = Text(text.rstrip('\n'))
        ReprHighlighter().highlight(highlighted)
        Console(file=stream, soft_wrap=True, color_system='standard').print(highlighted)
    else:
        stream.write(text)


RESULT_DISPLAY = [
    ('label', 'Label', 8),
    ('policy', 'Policy', 8),
    ('episodes', 'Episodes', 8),
    ('tasks', 'Tasks', 6),
    ('exec_time_mean', 'Exec time (s)', 10),
    ('exec_time_std', 'Std (s)', 8),
    ('scaling_mean', 'Scaling', 8),
]


class ReportWriter:
    """
    Renders the report to text files, optional plots and stdout.

    Attributes:
        write_config (Dict[str, bool]):
            Which outputs are enabled: ``text`` (report.txt and CSV tables),
            ``plots`` (PNG files, needs matplotlib) and ``stdout``.

        show_config (Dict[str, bool]):
            Display options for stdout. ``rich`` defaults to the
            ``SAFESCALE_RICH`` environment flag (on when unset).

    Example:
        >>> from safescale.report import *  # NOQA
        >>> import numpy as np
        >>> import ubelt as ub
        >>> self = ReportWriter()
        >>> self.write_config['plots'] = False
        >>> self.write_config['stdout'] = False
        >>> table = ResultTable()
        >>> table.add({'label': 'random', 'policy': 'random', 'model': '',
        >>>            'episodes': 1, 'tasks': 12, 'exec_time_mean': 10.0,
        >>>            'exec_time_std': 1.0, 'scaling_mean': 0.5, 'seed': 0,
        >>>            'config_hash': 'abc', 'model_hash': ''})
        >>> hists = {'random': np.array([0.5, 0.5])}
        >>> dpath = ub.Path.appdir('safescale/tests/doctest/report').ensuredir()
        >>> text = self.write(dpath, table, hists, [0.0, 1.0])
        >>> 'Exec time (s)' in text
        True
    """

    def __init__(self):
        self.write_config = {
            'text': True,
            'plots': True,
            'stdout': True,
        }
        self.show_config = {
            'rich': _env_flag('SAFESCALE_RICH', True),
        }

    def render(self, table, histograms, plateau_values, density=None):
        """
        Build the report text.

        Args:
            table (ResultTable): policy comparison rows.
            histograms (Dict[str, ndarray]): plateau frequencies per label.
            plateau_values (List[float]): plateau values of the safety
                function used for evaluation.
            density (Tuple[ndarray, ndarray] | None): output of
                :func:`density_grid`.
        """
        if not len(table):
            raise ValueError('empty results')
        stream = io.StringIO()
        show_table(table.rows, RESULT_DISPLAY, stream=stream,
                   title='Policy comparison (per task)')
        stream.write('\n')
        hist_rows = []
        for label in sorted(histograms):
            row = {'label': label}
            for value, freq in zip(plateau_values, histograms[label]):
                row[f's={value:g}'] = float(freq)
            hist_rows.append(row)
        hist_columns = [('label', 'Label', 8)] + [
            (f's={v:g}', f's={v:g}', 7) for v in plateau_values]
        show_table(hist_rows, hist_columns, stream=stream,
                   title='Scaling value frequencies')
        if density is not None:
            counts, edges = density
            stream.write('\n')
            stream.write('Actual vs predicted density (test rows, '
                         f'{len(edges) - 1}x{len(edges) - 1} bins on [0, 1]^2)\n')
            total = int(counts.sum())
            diagonal = int(np.trace(counts))
            stream.write(f'rows: {total}, on diagonal bins: {diagonal}\n')
        return stream.getvalue()

    def write(self, dpath, table, histograms, plateau_values, density=None, verbose=0):
        """
        Write every enabled output into ``dpath`` and return the report text.
        """
        dpath = ub.Path(dpath).ensuredir()
        text = self.render(table, histograms, plateau_values, density)
        if self.write_config['text']:
            (dpath / 'report.txt').write_text(text)
            self._write_histograms(dpath / 'histograms.csv', histograms, plateau_values)
            if density is not None:
                self._write_density(dpath / 'density.csv', density)
            if verbose:
                print(f'Wrote report to {dpath / "report.txt"}')
        if self.write_config['plots']:
            self._write_plots(dpath, histograms, plateau_values, density, verbose)
        if self.write_config['stdout']:
            show_text(text, rich=self.show_config['rich'])
        return text

    @staticmethod
    def _write_histograms(fpath, histograms, plateau_values):
        with open(fpath, 'w', newline='') as file:
            writer = csv.writer(file, lineterminator='\n')
            writer.writerow(['label'] + [f'{v:.12g}' for v in plateau_values])
            for label in sorted(histograms):
                writer.writerow([label] + [f'{f:.12g}' for f in histograms[label]])

    @staticmethod
    def _write_density(fpath, density):
        counts, edges = density
        lines = ['actual_lo,actual_hi,predicted_lo,predicted_hi,count']
        for i in range(len(edges) - 1):
            for j in range(len(edges) - 1):
                lines.append(f'{edges[i]:.6g},{edges[i + 1]:.6g},'
                             f'{edges[j]:.6g},{edges[j + 1]:.6g},{counts[i, j]}')
        fpath.write_text('\n'.join(lines) + '\n')

    @staticmethod
    def _write_plots(dpath, histograms, plateau_values, density, verbose):
        try:
            import matplotlib
            matplotlib.use('Agg')
            import matplotlib.pyplot as plt
        except ImportError:
            warnings.warn('matplotlib is not available, skipping report plots')
            return
        metadata = {'Software': None}
        labels = sorted(histograms)
        if labels:
            fig, ax = plt.subplots(figsize=(6, 4))
            width = 0.8 / len(labels)
            x = np.arange(len(plateau_values))
            for idx, label in enumerate(labels):
                ax.bar(x + idx * width, histograms[label], width=width, label=label)
            ax.set_xticks(x + 0.4 - width / 2)
            ax.set_xticklabels([f'{v:g}' for v in plateau_values])
            ax.set_xlabel('scaling value')
            ax.set_ylabel('frequency')
            ax.legend()
            fig.tight_layout()
            fig.savefig(dpath / 'histograms.png', metadata=metadata)
            plt.close(fig)
        if density is not None:
            counts, edges = density
            fig, ax = plt.subplots(figsize=(5, 4))
            shown = np.log1p(counts.T)
            mesh = ax.pcolormesh(edges, edges, shown, cmap='viridis')
            ax.plot([0, 1], [0, 1], color='white', linewidth=0.8)
            ax.set_xlabel('actual average scaling')
            ax.set_ylabel('predicted average scaling')
            fig.colorbar(mesh, ax=ax, label='log(1 + count)')
            fig.tight_layout()
            fig.savefig(dpath / 'density.png', metadata=metadata)
            plt.close(fig)
        if verbose:
            print(f'Wrote plots to {dpath}')

