"""
Domain Models for the VANET Sybil-detection simulator
Plain records shared by the trust engine, the challenge protocol and the simulator
"""

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Deque, Dict, List, NamedTuple, Optional, Set, Tuple

# Opaque broadcast identity (unsigned integer)
Pseudonym = int
Point = Tuple[float, float]


class ClassificationCategory(str, Enum):
    """Classification of a neighbor inside one observer's score table"""
    UNKNOWN = 'Unknown'
    HONEST = 'Honest'
    SUSPECT = 'Suspect'
    MALICIOUS = 'Malicious'


class Role(str, Enum):
    """Ground-truth role of a physical vehicle"""
    HONEST = 'honest'
    SYBIL_TRANSMITTER = 'sybil_transmitter'


class AttackerPolicy(str, Enum):
    """How a Sybil transmitter treats challenge packets it happens to receive"""
    SILENT = 'silent'
    OPPORTUNISTIC = 'opportunistic'


class ChallengeOutcome(str, Enum):
    PENDING = 'Pending'
    VERIFIED_HONEST = 'VerifiedHonest'
    CONFIRMED_MALICIOUS = 'ConfirmedMalicious'


@dataclass(frozen=True)
class BsmStatus:
    """Periodic status beacon: pseudonym, velocity, timestamp and GPS position"""
    sender: Pseudonym
    velocity: float
    timestamp: int
    position: Point


@dataclass
class ScoreEntry:
    """One row of an observer's score table"""
    pseudonym: Pseudonym
    last_position: Point
    last_velocity: float
    last_timestamp: int
    trust: float
    first_seen: int
    velocity_window: Deque[float]
    category: ClassificationCategory = ClassificationCategory.UNKNOWN
    prev_position: Optional[Point] = None
    honest_since: Optional[int] = None
    final_classified_at: Optional[int] = None


@dataclass
class ScoreTable:
    """Score table owned by a single observing vehicle"""
    owner: Pseudonym
    window_size: int = 20
    entries: Dict[Pseudonym, ScoreEntry] = field(default_factory=dict)
    suspect_list: Set[Pseudonym] = field(default_factory=set)

    def new_window(self) -> Deque[float]:
        return deque(maxlen=self.window_size)

    def rows(self, epoch: int) -> List[dict]:
        """Serializable table state: epoch, observer, subject, trust, category"""
        return [{
            'epoch': epoch,
            'observer': self.owner,
            'subject': pseudonym,
            'trust': entry.trust,
            'category': entry.category.value
        } for pseudonym, entry in sorted(self.entries.items())]


@dataclass(frozen=True)
class SuspectEvent:
    observer: Pseudonym
    subject: Pseudonym
    epoch: int
    reason: str = 'lambda'  # lambda, colocation


@dataclass(frozen=True)
class TTestResult:
    """Outcome of the two-tailed one-sample velocity test"""
    t_statistic: float
    degrees_of_freedom: int
    p_value: float
    reject: bool
    degenerate: bool


@dataclass(frozen=True)
class GhostTrack:
    """Fabricated identity emitted by a Sybil transmitter"""
    ghost_id: Pseudonym
    transmitter: Pseudonym
    claimed_arc_position: float
    claimed_speed: float
    lane: int
    offset_from_transmitter: float


@dataclass(frozen=True)
class VehicleState:
    """Physical ground truth for one vehicle"""
    id: Pseudonym
    arc_position: float
    lane: int
    true_speed: float
    role: Role = Role.HONEST
    ghost_ids: Tuple[Pseudonym, ...] = ()


@dataclass(frozen=True)
class ChallengePacket:
    challenger: Pseudonym
    target: Pseudonym
    nonce: int
    aim_xy: Point
    issued_epoch: int
    attempt: int
    challenger_xy: Point = (0.0, 0.0)


@dataclass(frozen=True)
class ChallengeResponse:
    responder: Pseudonym
    nonce: int
    epoch: int


@dataclass
class ChallengeState:
    """Presence verification of one target by one observer"""
    target: Pseudonym
    max_attempts: int
    per_attempt_timeout: int
    attempts_sent: int = 0
    outcome: ChallengeOutcome = ChallengeOutcome.PENDING
    outstanding: Optional[ChallengePacket] = None
    started_epoch: Optional[int] = None


class EventRecord(NamedTuple):
    """One row of the events log, in events.csv column order"""
    seq: int
    epoch: int
    kind: str  # trust, suspect, challenge, response, classification
    observer: Pseudonym
    subject: Pseudonym
    velocity: Optional[float] = None
    pos_x: Optional[float] = None
    pos_y: Optional[float] = None
    trust: Optional[float] = None
    category: Optional[str] = None
    nonce: Optional[int] = None
    attempt: Optional[int] = None
    aim_x: Optional[float] = None
    aim_y: Optional[float] = None
    detail: Optional[str] = None


class EventLog:
    """Append-only, epoch-ordered record of every simulator state mutation"""

    def __init__(self, meta: Optional[dict] = None):
        self.rows: List[EventRecord] = []
        self.meta = dict(meta or {})

    def append(self, epoch: int, kind: str, observer: Pseudonym, subject: Pseudonym, **payload) -> EventRecord:
        rows = self.rows
        if rows and epoch < rows[-1].epoch:
            raise ValueError(f"Event epoch {epoch} precedes last logged epoch {rows[-1].epoch}")
        record = EventRecord(len(rows), epoch, kind, observer, subject, **payload)
        rows.append(record)
        return record

    def of_kind(self, kind: str) -> List[EventRecord]:
        return [row for row in self.rows if row.kind == kind]

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)


@dataclass
class DetectionTimeStats:
    """Epochs between first delivered BSM and terminal classification"""
    detection_epochs: List[int] = field(default_factory=list)
    honest_resolution_epochs: List[int] = field(default_factory=list)
    mean: Optional[float] = None
    median: Optional[float] = None
    max: Optional[int] = None
    mean_honest_resolution: Optional[float] = None
    by_density: Dict[float, float] = field(default_factory=dict)


@dataclass
class RunMetrics:
    """Ground-truth evaluation of one run"""
    seed: int
    sybil_fraction: float
    lambda_: float
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    accuracy: Optional[float] = None
    f1: Optional[float] = None
    specificity: Optional[float] = None
    precision: Optional[float] = None
    recall: Optional[float] = None
    detection_epochs: List[int] = field(default_factory=list)
    mean_detection_epochs: Optional[float] = None
    median_detection_epochs: Optional[float] = None
    max_detection_epochs: Optional[int] = None
    mean_honest_resolution_epochs: Optional[float] = None
    ghost_challenges: int = 0
    ghost_challenges_answered: int = 0

    @property
    def fp_rate(self) -> Optional[float]:
        if self.specificity is None:
            return None
        return 1.0 - self.specificity

    def to_dict(self):
        return {
            'seed': self.seed,
            'sybil_fraction': self.sybil_fraction,
            'lambda': self.lambda_,
            'accuracy': self.accuracy,
            'f1': self.f1,
            'specificity': self.specificity,
            'mean_detection_epochs': self.mean_detection_epochs,
            'fp_rate': self.fp_rate,
            'tp': self.tp,
            'fp': self.fp,
            'tn': self.tn,
            'fn': self.fn,
            'precision': self.precision,
            'recall': self.recall,
            'median_detection_epochs': self.median_detection_epochs,
            'max_detection_epochs': self.max_detection_epochs,
            'mean_honest_resolution_epochs': self.mean_honest_resolution_epochs,
            'ghost_challenges': self.ghost_challenges,
            'ghost_challenges_answered': self.ghost_challenges_answered
        }


@dataclass(frozen=True)
class SweepSpec:
    """One-parameter experiment grid"""
    param: str
    values: Tuple[float, ...]
    seeds: int = 5
