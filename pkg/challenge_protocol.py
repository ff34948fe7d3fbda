"""
Presence-Verification Challenge Protocol
Directed nonce challenges against suspects, response matching and timeout resolution
"""

import logging
from typing import Dict, List, Optional, Set, Tuple, Union

import numpy as np

from config import ChallengeConfig, ChannelConfig, RoadConfig
from models import (ChallengeOutcome, ChallengePacket, ChallengeResponse, ChallengeState,
                    ClassificationCategory, Point, Pseudonym, ScoreEntry, ScoreTable, VehicleState)
from radio_channel import (PhysicalSnapshot, anticipated_position, focused_beam_members, heading_from_reports,
                           snapshot)
from trust_engine import apply_honest_floor, table_average_trust

logger = logging.getLogger(__name__)


class ChallengeResolvedError(ValueError):
    """Challenge requested for a target whose verification already concluded"""

    def __init__(self, target: Pseudonym, outcome: str):
        super().__init__(f"Challenge for {target} already resolved ({outcome})")
        self.target = target
        self.outcome = outcome


def draw_nonce(rng: np.random.Generator, used_nonces: Optional[Set[int]] = None) -> int:
    """64-bit nonce from the seeded stream, unique within used_nonces when given"""
    while True:
        nonce = int(rng.integers(0, np.iinfo(np.uint64).max, dtype=np.uint64, endpoint=True))
        if used_nonces is None:
            return nonce
        if nonce not in used_nonces:
            used_nonces.add(nonce)
            return nonce


def aim_point(entry: ScoreEntry, epoch: int, epoch_duration: float) -> Point:
    """Anticipated position of a reported track at the given epoch"""
    heading = heading_from_reports(entry.prev_position, entry.last_position)
    elapsed = max(0, epoch - entry.last_timestamp) * epoch_duration
    return anticipated_position(entry.last_position, entry.last_velocity, heading, elapsed)


def issue_challenge(table: ScoreTable, target: Pseudonym, challenger_xy: Point, epoch: int,
                    rng: np.random.Generator, state: Optional[ChallengeState] = None,
                    epoch_duration: float = 0.1, used_nonces: Optional[Set[int]] = None) -> ChallengePacket:
    """
    Send the next challenge packet of a verification

    Args:
        table (ScoreTable): Challenger's score table
        target (int): Suspect pseudonym
        challenger_xy (tuple): Challenger's physical position
        epoch (int): Current epoch
        rng (Generator): Seeded nonce stream
        state (ChallengeState): Verification in progress; a fresh one is used when omitted
        epoch_duration (float): Seconds per epoch, for the anticipated position
        used_nonces (set): Run-wide nonce registry

    Returns:
        ChallengePacket: Packet aimed at the target's anticipated position
    """
    entry = table.entries.get(target)
    if entry is None:
        raise ValueError(f"Observer {table.owner} has no entry for {target}")
    if entry.category == ClassificationCategory.MALICIOUS:
        raise ChallengeResolvedError(target, ClassificationCategory.MALICIOUS.value)
    if state is None:
        defaults = ChallengeConfig()
        state = ChallengeState(target=target, max_attempts=defaults.max_attempts,
                               per_attempt_timeout=defaults.per_attempt_timeout)
    if state.outcome != ChallengeOutcome.PENDING:
        raise ChallengeResolvedError(target, state.outcome.value)
    if entry.category != ClassificationCategory.SUSPECT or target not in table.suspect_list:
        raise ValueError(f"Target {target} is not a suspect of observer {table.owner}")
    if state.attempts_sent >= state.max_attempts:
        raise ValueError(f"Challenge attempts for {target} exhausted ({state.max_attempts})")

    packet = ChallengePacket(
        challenger=table.owner,
        target=target,
        nonce=draw_nonce(rng, used_nonces),
        aim_xy=aim_point(entry, epoch, epoch_duration),
        issued_epoch=epoch,
        attempt=state.attempts_sent + 1,
        challenger_xy=tuple(challenger_xy)
    )
    state.attempts_sent += 1
    state.outstanding = packet
    if state.started_epoch is None:
        state.started_epoch = epoch
    return packet


def deliver_challenge(packet: ChallengePacket, all_vehicles: Union[PhysicalSnapshot, List[VehicleState]],
                      cfg: ChannelConfig, road: Optional[RoadConfig] = None) -> Set[Pseudonym]:
    """
    Physical vehicles inside the challenge beam and its focus around the aim point

    Ghost identities never appear: only physical radios are in the snapshot.
    A beam aimed at the challenger's own position reaches nobody.
    """
    if isinstance(all_vehicles, PhysicalSnapshot):
        snap = all_vehicles
    else:
        if road is None:
            raise ValueError("road is required to locate vehicle states")
        snap = snapshot(all_vehicles, road)
    if tuple(packet.aim_xy) == tuple(packet.challenger_xy):
        return set()
    return focused_beam_members(packet.challenger_xy, packet.aim_xy, snap, cfg)


def handle_response(state: ChallengeState, response: ChallengeResponse, table: ScoreTable,
                    average_trust: float) -> ChallengeOutcome:
    """
    Match a response against the outstanding packet

    A matching nonce from the target inside the attempt's timeout window
    verifies the target: category Honest, off the suspect list, honest floor
    applied. Anything else leaves the state untouched.

    Returns:
        ChallengeOutcome: Outcome after the response
    """
    if state.outcome != ChallengeOutcome.PENDING:
        return state.outcome
    packet = state.outstanding
    if packet is None or response.responder != state.target or response.nonce != packet.nonce:
        return state.outcome
    if not packet.issued_epoch <= response.epoch < packet.issued_epoch + state.per_attempt_timeout:
        return state.outcome

    state.outcome = ChallengeOutcome.VERIFIED_HONEST
    state.outstanding = None
    entry = table.entries[state.target]
    entry.category = ClassificationCategory.HONEST
    entry.honest_since = response.epoch
    entry.final_classified_at = response.epoch
    table.suspect_list.discard(state.target)
    apply_honest_floor(entry, average_trust)
    logger.info(f"Observer {table.owner} verified {state.target} at epoch {response.epoch}")
    return state.outcome


def resolve_timeouts(state: ChallengeState, epoch: int, table: Optional[ScoreTable] = None) -> ChallengeOutcome:
    """
    Expire the outstanding attempt once its timeout elapsed

    With attempts left the packet is dropped and the verification waits for a
    re-aimed attempt (see needs_reissue). With attempts exhausted the target is
    confirmed malicious, terminally.
    """
    if state.outcome != ChallengeOutcome.PENDING:
        return state.outcome
    packet = state.outstanding
    if packet is None or epoch < packet.issued_epoch + state.per_attempt_timeout:
        return state.outcome

    state.outstanding = None
    if state.attempts_sent < state.max_attempts:
        return state.outcome

    state.outcome = ChallengeOutcome.CONFIRMED_MALICIOUS
    if table is not None:
        entry = table.entries[state.target]
        entry.category = ClassificationCategory.MALICIOUS
        entry.final_classified_at = epoch
        table.suspect_list.add(state.target)
        logger.info(f"Observer {table.owner} confirmed {state.target} malicious at epoch {epoch}")
    return state.outcome


def needs_reissue(state: ChallengeState) -> bool:
    return (state.outcome == ChallengeOutcome.PENDING
            and state.outstanding is None
            and 0 < state.attempts_sent < state.max_attempts)


class ChallengeBook:
    """Challenge states owned by one observing vehicle"""

    def __init__(self, owner: Pseudonym, cfg: Optional[ChallengeConfig] = None, epoch_duration: float = 0.1):
        self.owner = owner
        self.cfg = cfg or ChallengeConfig()
        self.epoch_duration = epoch_duration
        self.states: Dict[Pseudonym, ChallengeState] = {}

    def open(self, table: ScoreTable, target: Pseudonym, challenger_xy: Point, epoch: int,
             rng: np.random.Generator, used_nonces: Optional[Set[int]] = None) -> ChallengePacket:
        """Start verifying a new suspect; a prior VerifiedHonest verification may be restarted"""
        existing = self.states.get(target)
        if existing is not None:
            if existing.outcome == ChallengeOutcome.CONFIRMED_MALICIOUS:
                raise ChallengeResolvedError(target, existing.outcome.value)
            if existing.outcome == ChallengeOutcome.PENDING:
                raise ValueError(f"Challenge for {target} is already pending")
        state = ChallengeState(target=target, max_attempts=self.cfg.max_attempts,
                               per_attempt_timeout=self.cfg.per_attempt_timeout)
        packet = issue_challenge(table, target, challenger_xy, epoch, rng, state,
                                 self.epoch_duration, used_nonces)
        self.states[target] = state
        return packet

    def pending(self) -> List[ChallengeState]:
        return [self.states[t] for t in sorted(self.states)
                if self.states[t].outcome == ChallengeOutcome.PENDING]

    def accept(self, response: ChallengeResponse, table: ScoreTable) -> Tuple[bool, ChallengeOutcome]:
        """Route a response to the verification it answers; returns (accepted, outcome)"""
        state = self.states.get(response.responder)
        if state is None:
            return False, ChallengeOutcome.PENDING
        before = state.outcome
        outcome = handle_response(state, response, table, table_average_trust(table))
        return before == ChallengeOutcome.PENDING and outcome == ChallengeOutcome.VERIFIED_HONEST, outcome

    def expire(self, epoch: int, table: ScoreTable, challenger_xy: Point, rng: np.random.Generator,
               used_nonces: Optional[Set[int]] = None) -> Tuple[List[ChallengePacket], List[Pseudonym]]:
        """
        Resolve timeouts for every pending verification

        Returns:
            tuple: (re-aimed packets sent, targets confirmed malicious)
        """
        reissued, confirmed = [], []
        for state in self.pending():
            outcome = resolve_timeouts(state, epoch, table)
            if outcome == ChallengeOutcome.CONFIRMED_MALICIOUS:
                confirmed.append(state.target)
            elif needs_reissue(state):
                reissued.append(issue_challenge(table, state.target, challenger_xy, epoch, rng, state,
                                                self.epoch_duration, used_nonces))
        return reissued, confirmed
