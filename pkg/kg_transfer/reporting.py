"""
Sweep reporting

Collects metrics JSON files into a run x metric CSV table and draws
metric-vs-overlap-ratio curves, one line per mode/label, averaged over
repeated runs (seeds) at the same ratio.
"""

import csv
import json
import logging
import os
from collections import defaultdict
from typing import Any, Dict, List, Optional, Sequence

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402

from .exceptions import DataError  # noqa: E402
from .serializers import RankingMetricsSerializer  # noqa: E402

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ('run', 'label', 'mode', 'ratio', 'mr', 'mrr', 'hits1', 'hits3', 'hits10', 'n_queries')
PLOT_METRICS = ('mrr', 'mr', 'hits10')


def run_name(path: str) -> str:
    """metrics.json files are named after their directory, other files after their stem"""
    base = os.path.basename(path)
    if base == 'metrics.json':
        return os.path.basename(os.path.dirname(os.path.abspath(path))) or base
    return os.path.splitext(base)[0]


def load_metrics_file(path: str) -> Dict[str, Any]:
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            payload = json.load(handle)
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: not valid JSON ({e})") from None

    serializer = RankingMetricsSerializer(data=payload)
    if not serializer.is_valid():
        problems = []
        for key, details in serializer.errors.items():
            for detail in details:
                if getattr(detail, 'code', None) == 'required':
                    problems.append(f"missing key '{key}'")
                else:
                    problems.append(f"{key}: {detail}")
        raise DataError(f"{path}: {'; '.join(problems)}")
    return dict(serializer.validated_data)


def collect_rows(paths: Sequence[str]) -> List[Dict[str, Any]]:
    rows = []
    for path in paths:
        metrics = load_metrics_file(path)
        row = {column: metrics.get(column) for column in REPORT_COLUMNS}
        row['run'] = run_name(path)
        rows.append(row)
    return rows


def write_report_csv(rows: Sequence[Dict[str, Any]], path: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as handle:
        writer = csv.DictWriter(handle, fieldnames=list(REPORT_COLUMNS), lineterminator='\n')
        writer.writeheader()
        for row in rows:
            writer.writerow({key: '' if row.get(key) is None else row[key] for key in REPORT_COLUMNS})


def _series_key(row: Dict[str, Any]) -> str:
    return row.get('mode') or row.get('label') or row['run']


def plot_metric_curves(
    rows: Sequence[Dict[str, Any]],
    out_dir: str,
    metrics: Sequence[str] = PLOT_METRICS,
) -> List[str]:
    """
    One PNG per metric

    Rows with a ratio are drawn as curves over the ratio; without any ratio
    the runs are drawn as bars.
    """
    os.makedirs(out_dir, exist_ok=True)
    with_ratio = [row for row in rows if row.get('ratio') is not None]
    written = []
    for metric in metrics:
        fig, ax = plt.subplots(figsize=(6, 4))
        if with_ratio:
            grouped: Dict[str, Dict[float, List[float]]] = defaultdict(lambda: defaultdict(list))
            for row in with_ratio:
                grouped[_series_key(row)][float(row['ratio'])].append(float(row[metric]))
            for name in sorted(grouped):
                ratios = sorted(grouped[name])
                means = [sum(grouped[name][r]) / len(grouped[name][r]) for r in ratios]
                ax.plot(ratios, means, marker='o', label=name)
            ax.set_xlabel('overlap ratio')
            ax.legend()
        else:
            ax.bar([row['run'] for row in rows], [float(row[metric]) for row in rows])
            ax.tick_params(axis='x', rotation=45)
        ax.set_ylabel(metric)
        ax.set_title(f"{metric} by run" if not with_ratio else f"{metric} vs overlap ratio")
        fig.tight_layout()
        path = os.path.join(out_dir, f"{metric}.png")
        fig.savefig(path, dpi=100)
        plt.close(fig)
        written.append(path)
    logger.info(f"Wrote {len(written)} plot(s) to {out_dir}")
    return written


def build_report(paths: Sequence[str], out_path: str, plot_dir: Optional[str] = None) -> Dict[str, Any]:
    if not paths:
        raise DataError("no metrics files given")
    rows = collect_rows(paths)
    write_report_csv(rows, out_path)
    plots = plot_metric_curves(rows, plot_dir) if plot_dir else []
    return {'rows': rows, 'csv': out_path, 'plots': plots}
