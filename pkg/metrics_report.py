"""
Metrics and Reporting
Ground-truth evaluation of runs and CSV emission of metrics, events and sweep summaries
"""

import logging
import os
from typing import Dict, Hashable, Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd
from sklearn.metrics import confusion_matrix

from api_docs import EVENT_COLUMNS, METRIC_COLUMNS, SUMMARY_KEY_COLUMNS, SUMMARY_MEAN_COLUMNS, TABLE_COLUMNS
from models import ClassificationCategory, DetectionTimeStats, EventLog, RunMetrics

logger = logging.getLogger(__name__)

HONEST_LABEL = 'honest'
SYBIL_LABEL = 'sybil'
FLOAT_FORMAT = '%.9g'


def confusion(ground_truth: Dict[Hashable, str], verdicts: Dict[Hashable, str]) -> Tuple[int, int, int, int]:
    """
    Confusion counts with Sybil as the positive class

    Args:
        ground_truth (dict): identity -> 'honest' | 'sybil'
        verdicts (dict): identity -> final category; missing identities count as Unknown

    Returns:
        tuple: (tp, fp, tn, fn)
    """
    unlabeled = [key for key in verdicts if key not in ground_truth]
    if unlabeled:
        raise ValueError(f"Verdicts for identities without ground truth: {sorted(map(str, unlabeled))[:5]}")
    if not ground_truth:
        return 0, 0, 0, 0

    keys = list(ground_truth)
    y_true = [1 if ground_truth[k] == SYBIL_LABEL else 0 for k in keys]
    y_pred = [1 if verdicts.get(k) == ClassificationCategory.MALICIOUS.value else 0 for k in keys]
    tn, fp, fn, tp = confusion_matrix(y_true, y_pred, labels=[0, 1]).ravel()
    return int(tp), int(fp), int(tn), int(fn)


def _ratio(numerator: float, denominator: float) -> Optional[float]:
    return numerator / denominator if denominator else None


def derive_scores(tp: int, fp: int, tn: int, fn: int) -> Tuple[Optional[float], Optional[float], Optional[float]]:
    """Accuracy, F1 and specificity; a score with a zero denominator is None"""
    accuracy = _ratio(tp + tn, tp + tn + fp + fn)
    f1 = _ratio(2 * tp, 2 * tp + fp + fn)
    specificity = _ratio(tn, tn + fp)
    return accuracy, f1, specificity


def precision_recall(tp: int, fp: int, fn: int) -> Tuple[Optional[float], Optional[float]]:
    return _ratio(tp, tp + fp), _ratio(tp, tp + fn)


def final_classifications(log: EventLog) -> Dict[Tuple[int, int], Tuple[str, int]]:
    """(observer, subject) -> (last classification category, epoch)"""
    final = {}
    for record in log.of_kind('classification'):
        final[(record.observer, record.subject)] = (record.category, record.epoch)
    return final


def first_seen(log: EventLog) -> Dict[Tuple[int, int], int]:
    """(observer, subject) -> epoch of the first processed beacon"""
    seen = {}
    for row in log.rows:
        if row.kind == 'trust':
            seen.setdefault((row.observer, row.subject), row.epoch)
    return seen


def identity_verdicts(log: EventLog) -> Dict[int, str]:
    """
    Network-level verdict per identity

    Malicious if any observer confirmed it, Honest if any observer verified it
    and none confirmed it, Unknown otherwise.
    """
    verdicts: Dict[int, str] = {}
    for (_, subject), (category, _) in sorted(final_classifications(log).items()):
        if category == ClassificationCategory.MALICIOUS.value:
            verdicts[subject] = category
        elif verdicts.get(subject) != ClassificationCategory.MALICIOUS.value:
            verdicts[subject] = category
    return verdicts


def detection_time_stats(log: EventLog) -> DetectionTimeStats:
    """
    Epochs from first delivered beacon to terminal classification, per (observer, identity)

    Malicious confirmations feed the detection times; verifications feed the
    honest-resolution times.
    """
    seen = first_seen(log)
    stats = DetectionTimeStats()
    for pair, (category, epoch) in sorted(final_classifications(log).items()):
        elapsed = epoch - seen[pair]
        if category == ClassificationCategory.MALICIOUS.value:
            stats.detection_epochs.append(elapsed)
        else:
            stats.honest_resolution_epochs.append(elapsed)

    if stats.detection_epochs:
        values = np.asarray(stats.detection_epochs, dtype=float)
        stats.mean = float(values.mean())
        stats.median = float(np.median(values))
        stats.max = int(values.max())
        if 'sybil_fraction' in log.meta:
            stats.by_density[float(log.meta['sybil_fraction'])] = stats.mean
    if stats.honest_resolution_epochs:
        stats.mean_honest_resolution = float(np.mean(stats.honest_resolution_epochs))
    return stats


def _ground_truth(log: EventLog, aggregation: str) -> Tuple[Dict[Hashable, str], Dict[Hashable, str]]:
    ghosts = set(log.meta.get('ghost_ids', []))
    honest = set(log.meta.get('honest_ids', []))
    label = {i: SYBIL_LABEL for i in ghosts}
    label.update({i: HONEST_LABEL for i in honest})

    # only identities some observer actually heard are evaluated
    pairs = sorted(first_seen(log))
    if aggregation == 'per_observer':
        truth = {pair: label[pair[1]] for pair in pairs}
        verdicts = {pair: category for pair, (category, _) in final_classifications(log).items()}
        return truth, verdicts
    if aggregation != 'identity':
        raise ValueError(f"Unknown aggregation mode: {aggregation}")
    observed = {subject for _, subject in pairs}
    truth = {identity: label[identity] for identity in sorted(observed)}
    return truth, identity_verdicts(log)


def compute_metrics(log: EventLog, aggregation: str = 'identity') -> RunMetrics:
    """
    Evaluate a finished run against its ground truth

    Args:
        log (EventLog): Complete event log; meta carries seed, fraction, lambda and identity labels
        aggregation (str): 'identity' or 'per_observer'

    Returns:
        RunMetrics: Confusion counts, scores and detection-time statistics
    """
    truth, verdicts = _ground_truth(log, aggregation)
    tp, fp, tn, fn = confusion(truth, verdicts)
    accuracy, f1, specificity = derive_scores(tp, fp, tn, fn)
    precision, recall = precision_recall(tp, fp, fn)
    times = detection_time_stats(log)

    return RunMetrics(
        seed=int(log.meta.get('seed', 0)),
        sybil_fraction=float(log.meta.get('sybil_fraction', 0.0)),
        lambda_=float(log.meta.get('lambda', 0.0)),
        tp=tp, fp=fp, tn=tn, fn=fn,
        accuracy=accuracy,
        f1=f1,
        specificity=specificity,
        precision=precision,
        recall=recall,
        detection_epochs=list(times.detection_epochs),
        mean_detection_epochs=times.mean,
        median_detection_epochs=times.median,
        max_detection_epochs=times.max,
        mean_honest_resolution_epochs=times.mean_honest_resolution,
        ghost_challenges=int(log.meta.get('ghost_challenges', 0)),
        ghost_challenges_answered=int(log.meta.get('ghost_challenges_answered', 0))
    )


# ============================================
# CSV OUTPUT
# ============================================

def metrics_row(metrics: RunMetrics, sweep_param: Optional[str] = None, sweep_value=None) -> dict:
    row = metrics.to_dict()
    row['sweep_param'] = sweep_param
    row['sweep_value'] = sweep_value
    return {column: row[column] for column in METRIC_COLUMNS}


def metrics_frame(rows: Iterable[dict]) -> pd.DataFrame:
    return pd.DataFrame(list(rows), columns=list(METRIC_COLUMNS))


def events_frame(log: EventLog) -> pd.DataFrame:
    frame = pd.DataFrame(log.rows, columns=list(EVENT_COLUMNS))
    # 64-bit nonces must not pass through float64
    frame['nonce'] = pd.Series([row[10] for row in log.rows], dtype=object)
    return frame


def tables_frame(log: EventLog) -> pd.DataFrame:
    """Final score-table state recorded by the run, empty when the log carries none"""
    return pd.DataFrame(log.meta.get('table_rows', []), columns=list(TABLE_COLUMNS))


def _write(frame: pd.DataFrame, path: str):
    try:
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    except OSError as e:
        raise OSError(f"Cannot write {path}: {e.strerror or e}") from e
    logger.info(f"Wrote {len(frame)} rows to {path}")


def emit_csv(metrics: RunMetrics, log: EventLog, out_dir: str,
             sweep_param: Optional[str] = None, sweep_value=None) -> List[str]:
    """
    Write metrics.csv, events.csv and tables.csv for one run

    Args:
        metrics (RunMetrics): Run evaluation
        log (EventLog): Run events
        out_dir (str): Destination directory, created if missing

    Returns:
        list: Paths written
    """
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as e:
        raise OSError(f"Cannot create output directory {out_dir}: {e.strerror or e}") from e

    metrics_path = os.path.join(out_dir, 'metrics.csv')
    events_path = os.path.join(out_dir, 'events.csv')
    tables_path = os.path.join(out_dir, 'tables.csv')
    _write(metrics_frame([metrics_row(metrics, sweep_param, sweep_value)]), metrics_path)
    _write(events_frame(log), events_path)
    _write(tables_frame(log), tables_path)
    return [metrics_path, events_path, tables_path]


def summarize_sweep(frame: pd.DataFrame) -> pd.DataFrame:
    """One row per swept value: run count and seed-averaged metrics"""
    if frame.empty:
        return pd.DataFrame(columns=list(SUMMARY_KEY_COLUMNS + SUMMARY_MEAN_COLUMNS))
    numeric = frame.copy()
    for column in SUMMARY_MEAN_COLUMNS:
        numeric[column] = pd.to_numeric(numeric[column], errors='coerce')
    grouped = numeric.groupby(['sweep_param', 'sweep_value'], sort=True)
    summary = grouped[list(SUMMARY_MEAN_COLUMNS)].mean()
    summary.insert(0, 'runs', grouped.size())
    return summary.reset_index()[list(SUMMARY_KEY_COLUMNS + SUMMARY_MEAN_COLUMNS)]


def write_sweep(rows: List[dict], out_dir: str) -> List[str]:
    """Write metrics.csv (rows sorted by sweep value then seed) and summary.csv"""
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as e:
        raise OSError(f"Cannot create output directory {out_dir}: {e.strerror or e}") from e

    ordered = sorted(rows, key=lambda r: (float(r['sweep_value']), r['seed']))
    frame = metrics_frame(ordered)
    metrics_path = os.path.join(out_dir, 'metrics.csv')
    summary_path = os.path.join(out_dir, 'summary.csv')
    _write(frame, metrics_path)
    _write(summarize_sweep(frame), summary_path)
    return [metrics_path, summary_path]
