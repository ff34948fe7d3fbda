"""
Sybil Attack Model
Transmitter vehicles forging beacons for ghost identities with no physical radio
"""

import logging
from dataclasses import replace
from typing import Optional

import numpy as np

from config import AttackConfig, RoadConfig
from mobility import to_xy, wrap_arc
from models import (AttackerPolicy, BsmStatus, ChallengePacket, ChallengeResponse,
                    GhostTrack, Pseudonym, Role, VehicleState)

logger = logging.getLogger(__name__)


def spawn_sybil(transmitter: VehicleState, rng: np.random.Generator, road: RoadConfig,
                ghost_id: Pseudonym, attack: Optional[AttackConfig] = None,
                offset: Optional[float] = None) -> GhostTrack:
    """
    Fabricate one ghost identity ahead of a Sybil transmitter

    Args:
        transmitter (VehicleState): Physical carrier, role SYBIL_TRANSMITTER
        rng (Generator): Seeded ghost-offset stream
        road (RoadConfig): Loop geometry
        ghost_id (int): Fresh pseudonym for the ghost
        attack (AttackConfig): Offset bounds and claimed speed
        offset (float): Fixed arc offset; drawn from the bounds when omitted

    Returns:
        GhostTrack: Ghost placed transmitter position + offset, modulo road length
    """
    attack = attack or AttackConfig()
    if transmitter.role != Role.SYBIL_TRANSMITTER:
        raise ValueError(f"Vehicle {transmitter.id} is not a Sybil transmitter")
    if offset is None:
        offset = float(rng.uniform(attack.ghost_offset_min, attack.ghost_offset_max))

    ghost = GhostTrack(
        ghost_id=ghost_id,
        transmitter=transmitter.id,
        claimed_arc_position=wrap_arc(transmitter.arc_position + offset, road),
        claimed_speed=attack.claimed_speed,
        lane=transmitter.lane,
        offset_from_transmitter=offset
    )
    logger.debug(f"Ghost {ghost_id} spawned {offset:.1f} m ahead of transmitter {transmitter.id}")
    return ghost


def advance_ghost(ghost: GhostTrack, dt: float, road: RoadConfig) -> GhostTrack:
    """Move a ghost's claimed position at its claimed speed"""
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    return replace(ghost, claimed_arc_position=wrap_arc(ghost.claimed_arc_position + ghost.claimed_speed * dt, road))


def forge_bsm(ghost: GhostTrack, epoch: int, road: RoadConfig) -> BsmStatus:
    """Beacon for a ghost: claimed speed exactly, no measurement noise"""
    return BsmStatus(
        sender=ghost.ghost_id,
        velocity=ghost.claimed_speed,
        timestamp=epoch,
        position=to_xy(ghost.claimed_arc_position, ghost.lane, road)
    )


def attacker_respond(policy: AttackerPolicy, challenge_received_by_transmitter: bool,
                     challenge: ChallengePacket, epoch: Optional[int] = None) -> Optional[ChallengeResponse]:
    """
    What a Sybil transmitter sends back for a challenge addressed to its ghost

    Args:
        policy (AttackerPolicy): SILENT never answers; OPPORTUNISTIC echoes when it heard the packet
        challenge_received_by_transmitter (bool): Transmitter was inside the beam
        challenge (ChallengePacket): Packet aimed at the ghost
        epoch (int): Response epoch, defaults to the packet's issue epoch

    Returns:
        ChallengeResponse or None
    """
    if AttackerPolicy(policy) == AttackerPolicy.SILENT:
        return None
    if not challenge_received_by_transmitter:
        return None
    return ChallengeResponse(
        responder=challenge.target,
        nonce=challenge.nonce,
        epoch=challenge.issued_epoch if epoch is None else epoch
    )
