"""
Replay Audit
Re-derives trust updates, suspect events and challenge verdicts from events.csv
with a separate, straightforward implementation of the detection procedure
"""

import logging
import math
from dataclasses import dataclass, field
from itertools import groupby
from typing import Dict, List, Optional, Set, Tuple

import numpy as np
import pandas as pd
from scipy import stats
from scipy.spatial.distance import pdist, squareform

from api_docs import EVENT_COLUMNS
from config import ScenarioConfig

logger = logging.getLogger(__name__)

TOLERANCE = 1e-6
# positions and velocities pass through nine significant digits in events.csv
ROUNDING_SLACK = 1e-5

ASSESSMENT, COLOCATION, CHALLENGE = 0, 1, 2


@dataclass
class AuditReport:
    """Result of replaying one events log"""
    trust_records: int = 0
    suspect_records: int = 0
    accepted_responses: int = 0
    mismatches: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches


@dataclass
class _Neighbor:
    trust: float
    window: List[float] = field(default_factory=list)
    category: str = 'Unknown'
    honest_since: Optional[int] = None


def load_events(path: str) -> pd.DataFrame:
    """Read events.csv keeping 64-bit nonces exact"""
    try:
        frame = pd.read_csv(path, dtype={'nonce': str, 'kind': str, 'category': str, 'detail': str})
    except OSError as e:
        raise OSError(f"Cannot read {path}: {e.strerror or e}") from e
    missing = [c for c in EVENT_COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError(f"{path} is missing columns: {', '.join(missing)}")
    return frame


def _present(value) -> bool:
    return value is not None and not (isinstance(value, float) and math.isnan(value))


def _rejects(window: List[float], limit: float, alpha: float, delta: float, min_n: int) -> Optional[bool]:
    """Velocity test decision, None when the p-value sits on the significance boundary"""
    sample = np.asarray(window, dtype=float)
    mean = sample.mean()
    if sample.size < min_n or np.ptp(sample) == 0.0:
        return abs(mean - limit) > delta * limit
    p = stats.ttest_1samp(sample, limit).pvalue
    if abs(p - alpha) < TOLERANCE:
        return None
    return p < alpha


def _in_beam(origin: Tuple[float, float], aim: Tuple[float, float], point: Tuple[float, float],
             beam_range: float, half_angle: float, focus_radius: float) -> bool:
    axis = np.subtract(aim, origin)
    offset = np.subtract(point, origin)
    distance = np.linalg.norm(offset)
    if distance == 0.0 or distance > beam_range + ROUNDING_SLACK:
        return False
    if np.linalg.norm(np.subtract(point, aim)) > focus_radius + ROUNDING_SLACK:
        return False
    cosine = np.dot(axis, offset) / (np.linalg.norm(axis) * distance)
    return math.degrees(math.acos(float(np.clip(cosine, -1.0, 1.0)))) <= half_angle + TOLERANCE


def _colocated(beacons: List[Tuple[int, float, float]], epsilon: float) -> Tuple[Set[int], Set[int]]:
    """Senders certainly within epsilon of another sender, and those possibly so after rounding"""
    if len(beacons) < 2:
        return set(), set()
    senders = np.array([b[0] for b in beacons], dtype=np.int64)
    distances = squareform(pdist(np.array([b[1:] for b in beacons], dtype=float)))
    distinct = senders[:, None] != senders[None, :]
    certain = (distances <= epsilon - ROUNDING_SLACK) & distinct
    possible = (distances <= epsilon + ROUNDING_SLACK) & distinct
    return ({int(s) for s in senders[certain.any(axis=1)]},
            {int(s) for s in senders[possible.any(axis=1)]})


def _phase(row) -> int:
    if row.kind == 'trust' or (row.kind == 'suspect' and row.detail != 'colocation'):
        return ASSESSMENT
    if row.kind == 'suspect':
        return COLOCATION
    return CHALLENGE


class _Replay:
    """Score tables rebuilt from nothing but the logged beacons and challenge outcomes"""

    def __init__(self, scenario: ScenarioConfig, report: AuditReport):
        self.scenario = scenario
        self.params = scenario.trust
        self.limit = scenario.road.speed_limit
        self.low = self.limit * (1 - self.params.delta)
        self.high = self.limit * (1 + self.params.delta)
        self.report = report
        self.tables: Dict[int, Dict[int, _Neighbor]] = {}
        self.challenges: Dict[str, Tuple[Tuple[float, float], Tuple[float, float]]] = {}

    def flag(self, seq: int, message: str):
        self.report.mismatches.append(f"seq {seq}: {message}")

    def average(self, observer: int) -> float:
        table = self.tables.get(observer)
        if not table:
            return 0.0
        return math.fsum(n.trust for n in table.values()) / len(table)

    def eligible(self, neighbor: _Neighbor, epoch: int) -> bool:
        if neighbor.category == 'Unknown':
            return True
        return (neighbor.category == 'Honest'
                and not (neighbor.honest_since is not None
                         and epoch - neighbor.honest_since < self.params.honest_grace_epochs))

    def check_trust(self, row, expected: float, what: str):
        if not _present(row.trust) or abs(expected - float(row.trust)) > TOLERANCE:
            self.flag(int(row.seq), f"{what} trust {row.trust} logged, replay gives {expected:.9g}")

    # ---------------------------------------------------------------- assessment

    def _branches(self, neighbor: _Neighbor, velocity: float, trust: float) -> Dict[str, float]:
        """Every branch the procedure could have taken, with its resulting trust"""
        p = self.params
        options: Dict[str, float] = {}
        near_edge = min(abs(velocity - self.low), abs(velocity - self.high)) < ROUNDING_SLACK
        if self.low <= velocity <= self.high or near_edge:
            options['increment'] = min(p.trust_max, max(p.trust_min, trust + (1 + p.beta * trust)))
        if not self.low <= velocity <= self.high or near_edge:
            decision = _rejects(neighbor.window, self.limit, p.alpha, p.delta, p.min_t_samples)
            if decision is None or decision:
                options['deduction'] = min(p.trust_max, max(p.trust_min, trust - (1 - p.beta * trust)))
            if decision is None or not decision:
                options['no_change'] = min(p.trust_max, max(p.trust_min, trust))
        return options

    def assessment(self, rows: List, positions: Dict[int, List[Tuple[int, float, float]]]):
        p = self.params
        expected_suspect: Optional[Tuple[int, int]] = None
        boundary: Optional[Tuple[int, int]] = None

        for row in rows:
            seq, epoch = int(row.seq), int(row.epoch)
            observer, subject = int(row.observer), int(row.subject)
            table = self.tables.setdefault(observer, {})

            if expected_suspect is not None and (row.kind != 'suspect' or (observer, subject) != expected_suspect):
                self.flag(seq, f"missing lambda suspect event for {expected_suspect[1]} "
                               f"at observer {expected_suspect[0]}")
                expected_suspect = None

            if row.kind == 'trust':
                self.report.trust_records += 1
                average = self.average(observer)
                neighbor = table.get(subject)
                if neighbor is None:
                    neighbor = table[subject] = _Neighbor(trust=average)
                velocity = float(row.velocity)
                neighbor.window = (neighbor.window + [velocity])[-p.window_size:]
                positions.setdefault(observer, []).append((subject, float(row.pos_x), float(row.pos_y)))

                trust = neighbor.trust
                if neighbor.category == 'Honest' and trust < average:
                    trust = average
                options = self._branches(neighbor, velocity, trust)
                if row.detail in options:
                    branch = row.detail
                else:
                    branch = next(iter(options))
                    self.flag(seq, f"branch {row.detail} logged, replay gives {branch}")
                neighbor.trust = options[branch]
                self.check_trust(row, neighbor.trust, 'updated')

                gap = average - neighbor.trust - p.lambda_ * average
                boundary = None
                if self.eligible(neighbor, epoch):
                    if gap >= TOLERANCE:
                        expected_suspect = (observer, subject)
                    elif abs(gap) < TOLERANCE:
                        boundary = (observer, subject)

            else:
                self.report.suspect_records += 1
                neighbor = table.get(subject)
                if neighbor is None:
                    self.flag(seq, f"suspect event for {subject} before any beacon")
                    continue
                if row.detail != 'lambda':
                    self.flag(seq, f"suspect event for {subject} with unknown reason {row.detail}")
                elif neighbor.category in ('Suspect', 'Malicious'):
                    self.flag(seq, f"repeated suspect event for {subject}")
                elif expected_suspect is None and boundary != (observer, subject):
                    self.flag(seq, f"lambda suspect event for {subject} not supported by the replayed trust")
                expected_suspect = None
                neighbor.category = 'Suspect'

        if expected_suspect is not None:
            self.flag(int(rows[-1].seq), f"missing lambda suspect event for {expected_suspect[1]} "
                                         f"at observer {expected_suspect[0]}")

    # ---------------------------------------------------------------- colocation

    def colocation(self, epoch: int, rows: List, positions: Dict[int, List[Tuple[int, float, float]]],
                   last_seq: int):
        epsilon = self.params.colocation_epsilon
        expected: Set[Tuple[int, int]] = set()
        possible: Set[Tuple[int, int]] = set()
        for observer in sorted(positions):
            certain, loose = _colocated(positions[observer], epsilon)
            table = self.tables[observer]
            for subject in loose:
                if not self.eligible(table[subject], epoch):
                    continue
                possible.add((observer, subject))
                if subject in certain:
                    expected.add((observer, subject))

        for row in rows:
            seq, observer, subject = int(row.seq), int(row.observer), int(row.subject)
            self.report.suspect_records += 1
            neighbor = self.tables.get(observer, {}).get(subject)
            if neighbor is None:
                self.flag(seq, f"suspect event for {subject} before any beacon")
                continue
            if neighbor.category in ('Suspect', 'Malicious'):
                self.flag(seq, f"repeated suspect event for {subject}")
            elif (observer, subject) not in possible:
                self.flag(seq, f"colocation suspect event for {subject} not supported by the logged positions")
            expected.discard((observer, subject))
            neighbor.category = 'Suspect'

        for observer, subject in sorted(expected):
            self.flag(last_seq, f"missing colocation suspect event for {subject} at observer {observer}")

    # ---------------------------------------------------------------- challenges

    def challenge(self, row):
        seq, epoch = int(row.seq), int(row.epoch)
        observer, subject = int(row.observer), int(row.subject)

        if row.kind == 'classification':
            neighbor = self.tables.get(observer, {}).get(subject)
            if neighbor is None:
                self.flag(seq, f"classification of {subject} before any beacon")
                return
            if neighbor.category == 'Malicious':
                self.flag(seq, f"{subject} reclassified after confirmation")
            if row.detail == 'verified':
                average = self.average(observer)
                neighbor.trust = max(neighbor.trust, average)
                neighbor.category = 'Honest'
                neighbor.honest_since = epoch
            elif row.detail == 'confirmed':
                neighbor.category = 'Malicious'
            else:
                self.flag(seq, f"classification of {subject} with unknown outcome {row.detail}")
                return
            if row.category != neighbor.category:
                self.flag(seq, f"{row.detail} classification logged as {row.category}")
            self.check_trust(row, neighbor.trust, f"{row.detail} classification")

        elif row.kind == 'challenge':
            self.challenges[str(row.nonce)] = ((row.pos_x, row.pos_y), (row.aim_x, row.aim_y))

        elif row.kind == 'response' and row.detail == 'accepted':
            self.report.accepted_responses += 1
            beam = self.challenges.get(str(row.nonce))
            channel = self.scenario.channel
            if beam is None:
                self.flag(seq, f"accepted response with unknown nonce {row.nonce}")
            elif not _in_beam(beam[0], beam[1], (row.pos_x, row.pos_y), channel.beam_range,
                              channel.beam_half_angle, channel.beam_focus_radius):
                self.flag(seq, f"accepted response from {subject} outside the challenge beam")

    def epoch(self, epoch: int, rows: List):
        phases = [_phase(row) for row in rows]
        for previous, current, row in zip(phases, phases[1:], rows[1:]):
            if current < previous:
                self.flag(int(row.seq), f"{row.kind} event out of phase order in epoch {epoch}")
                break

        positions: Dict[int, List[Tuple[int, float, float]]] = {}
        assessment = [r for r, ph in zip(rows, phases) if ph == ASSESSMENT]
        if assessment:
            self.assessment(assessment, positions)
        self.colocation(epoch, [r for r, ph in zip(rows, phases) if ph == COLOCATION], positions,
                        int(rows[-1].seq))
        for row, ph in zip(rows, phases):
            if ph == CHALLENGE:
                self.challenge(row)


def audit_events(frame: pd.DataFrame, scenario: Optional[ScenarioConfig] = None) -> AuditReport:
    """
    Replay an events table and collect every disagreement

    Trust is carried forward from the replay's own arithmetic, never from the
    logged values, so drift accumulating across rows is caught.

    Args:
        frame (DataFrame): events.csv contents in seq order
        scenario (ScenarioConfig): Parameters the run used

    Returns:
        AuditReport: Counts of checked records and mismatch descriptions
    """
    scenario = scenario or ScenarioConfig()
    report = AuditReport()
    replay = _Replay(scenario, report)

    ordered = frame.sort_values('seq').itertuples(index=False)
    for epoch, rows in groupby(ordered, key=lambda r: int(r.epoch)):
        replay.epoch(epoch, list(rows))

    logger.info(
        f"Audit replayed {report.trust_records} trust records, {report.suspect_records} suspect events: "
        f"{len(report.mismatches)} mismatches"
    )
    return report


def audit_file(path: str, scenario: Optional[ScenarioConfig] = None) -> AuditReport:
    try:
        return audit_events(load_events(path), scenario)
    except Exception as e:
        logger.error(f"Error auditing {path}: {str(e)}")
        raise
