"""
Trust Assessment Engine
Per-observer score table updates, velocity screening and suspect classification
"""

import logging
import math
from operator import attrgetter
from typing import Iterable, NamedTuple, Optional, Set

import numpy as np

from config import TrustParams
from models import BsmStatus, ClassificationCategory, Pseudonym, ScoreEntry, ScoreTable, SuspectEvent
from stat_tests import velocity_t_test

logger = logging.getLogger(__name__)

INCREMENT = 'increment'
DEDUCTION = 'deduction'
NO_CHANGE = 'no_change'

# absolute slack on the suspect inequality; decimal boundary cases count as met
SUSPECT_TOLERANCE = 1e-12

_trust_of = attrgetter('trust')


class StaleBsmError(ValueError):
    """Beacon older than the last one accepted from the same sender"""

    def __init__(self, sender: Pseudonym, timestamp: int, last_timestamp: int):
        super().__init__(f"Stale BSM from {sender}: timestamp {timestamp} < last accepted {last_timestamp}")
        self.sender = sender
        self.timestamp = timestamp
        self.last_timestamp = last_timestamp


class TrustOutcome(NamedTuple):
    """Everything one pass of the assessment procedure decided"""
    entry: ScoreEntry
    average_trust: float
    branch: str
    event: Optional[SuspectEvent] = None


def table_average_trust(table: ScoreTable) -> float:
    """Mean trust over all entries, 0.0 for an empty table"""
    if not table.entries:
        return 0.0
    return math.fsum(map(_trust_of, table.entries.values())) / len(table.entries)


def upsert_entry(table: ScoreTable, bsm: BsmStatus) -> ScoreEntry:
    """
    Record a beacon in the score table

    A new sender is seeded with the table average computed before insertion.
    Raises StaleBsmError without touching the table when the beacon is older
    than the sender's last accepted one.
    """
    entry = table.entries.get(bsm.sender)
    if entry is None:
        entry = ScoreEntry(
            pseudonym=bsm.sender,
            last_position=bsm.position,
            last_velocity=bsm.velocity,
            last_timestamp=bsm.timestamp,
            trust=table_average_trust(table),
            first_seen=bsm.timestamp,
            velocity_window=table.new_window()
        )
        table.entries[bsm.sender] = entry
    else:
        if bsm.timestamp < entry.last_timestamp:
            raise StaleBsmError(bsm.sender, bsm.timestamp, entry.last_timestamp)
        entry.prev_position = entry.last_position
        entry.last_position = bsm.position
        entry.last_velocity = bsm.velocity
        entry.last_timestamp = bsm.timestamp
    entry.velocity_window.append(bsm.velocity)
    return entry


def within_speed_threshold(velocity: float, speed_limit: float, delta: float) -> bool:
    if speed_limit <= 0:
        raise ValueError(f"speed_limit must be > 0, got {speed_limit}")
    return speed_limit * (1 - delta) <= velocity <= speed_limit * (1 + delta)


def _clamp(trust: float, params: TrustParams) -> float:
    return min(params.trust_max, max(params.trust_min, trust))


def trust_increment(trust: float, params: TrustParams) -> float:
    return _clamp(trust + (1 + params.beta * trust), params)


def trust_deduction(trust: float, params: TrustParams) -> float:
    return _clamp(trust - (1 - params.beta * trust), params)


def check_suspect(entry: ScoreEntry, average_trust: float, lambda_: float) -> bool:
    """Suspect inequality average - trust >= lambda * average, any sign of average, inclusive at the boundary"""
    return average_trust - entry.trust - lambda_ * average_trust >= -SUSPECT_TOLERANCE


def apply_honest_floor(entry: ScoreEntry, average_trust: float):
    if entry.category == ClassificationCategory.HONEST and entry.trust < average_trust:
        entry.trust = average_trust


def in_honest_grace(entry: ScoreEntry, epoch: int, params: TrustParams) -> bool:
    return (entry.category == ClassificationCategory.HONEST
            and entry.honest_since is not None
            and epoch - entry.honest_since < params.honest_grace_epochs)


def mark_suspect(table: ScoreTable, pseudonym: Pseudonym, epoch: int, params: TrustParams,
                 reason: str = 'lambda') -> Optional[SuspectEvent]:
    """
    Move an entry into Suspect and onto the suspect list

    Malicious entries, entries already Suspect and Honest entries still inside
    their grace period are left alone.

    Returns:
        SuspectEvent on the transition into Suspect, otherwise None
    """
    entry = table.entries[pseudonym]
    if entry.category in (ClassificationCategory.MALICIOUS, ClassificationCategory.SUSPECT):
        return None
    if in_honest_grace(entry, epoch, params):
        return None
    entry.category = ClassificationCategory.SUSPECT
    table.suspect_list.add(pseudonym)
    logger.debug(f"Observer {table.owner} suspects {pseudonym} at epoch {epoch} ({reason})")
    return SuspectEvent(observer=table.owner, subject=pseudonym, epoch=epoch, reason=reason)


def assess_bsm(table: ScoreTable, bsm: BsmStatus, speed_limit: float,
               params: TrustParams, epoch: int) -> TrustOutcome:
    """
    Run the full trust-assessment procedure for one delivered beacon

    Order: table average (once), upsert, honest floor, velocity gate with
    increment or t-test backed deduction, suspect rule.

    Args:
        table (ScoreTable): Receiver's score table
        bsm (BsmStatus): Delivered beacon
        speed_limit (float): Route speed limit (m/s)
        params (TrustParams): Trust constants
        epoch (int): Current epoch

    Returns:
        TrustOutcome: Updated entry, the average used, the branch taken and any suspect event
    """
    average_trust = table_average_trust(table)
    entry = upsert_entry(table, bsm)
    apply_honest_floor(entry, average_trust)

    if within_speed_threshold(bsm.velocity, speed_limit, params.delta):
        entry.trust = trust_increment(entry.trust, params)
        branch = INCREMENT
    else:
        result = velocity_t_test(entry.velocity_window, speed_limit, params.alpha,
                                 params.delta, params.min_t_samples)
        if result.reject:
            entry.trust = trust_deduction(entry.trust, params)
            branch = DEDUCTION
        else:
            branch = NO_CHANGE

    event = None
    if check_suspect(entry, average_trust, params.lambda_):
        event = mark_suspect(table, bsm.sender, epoch, params, reason='lambda')

    return TrustOutcome(entry=entry, average_trust=average_trust, branch=branch, event=event)


def process_bsm(table: ScoreTable, bsm: BsmStatus, speed_limit: float,
                params: TrustParams, epoch: int) -> Optional[SuspectEvent]:
    """Trust-assessment procedure returning only the suspect event, if any"""
    return assess_bsm(table, bsm, speed_limit, params, epoch).event


def detect_colocation(bsms_this_epoch: Iterable[BsmStatus], epsilon: float) -> Set[Pseudonym]:
    """
    Senders claiming positions within epsilon of another distinct sender

    Args:
        bsms_this_epoch (list): Beacons of a single epoch
        epsilon (float): Distance threshold (m)

    Returns:
        set: Every pseudonym in a too-close pair
    """
    bsms = list(bsms_this_epoch)
    if len({b.timestamp for b in bsms}) > 1:
        raise ValueError("detect_colocation expects beacons from one epoch")
    if len(bsms) < 2:
        return set()

    senders = np.array([b.sender for b in bsms], dtype=np.int64)
    xy = np.array([b.position for b in bsms], dtype=float)
    diff = xy[:, None, :] - xy[None, :, :]
    close = np.hypot(diff[..., 0], diff[..., 1]) <= epsilon
    close &= senders[:, None] != senders[None, :]
    return {int(s) for s in senders[close.any(axis=1)]}
