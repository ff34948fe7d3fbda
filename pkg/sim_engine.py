"""
Simulation Engine
Deterministic epoch loop: mobility, beacon delivery, trust assessment and challenges
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set, Tuple

import numpy as np

from attack_model import advance_ghost, attacker_respond, forge_bsm, spawn_sybil
from challenge_protocol import ChallengeBook, deliver_challenge
from config import ScenarioConfig
from mobility import advance, place_on_ring, report_velocity, to_xy
from metrics_report import compute_metrics
from models import (BsmStatus, ChallengeOutcome, ChallengePacket, ChallengeResponse, ClassificationCategory, EventLog,
                    GhostTrack, Point, Pseudonym, Role, RunMetrics, ScoreTable, SuspectEvent, VehicleState)
from radio_channel import PhysicalSnapshot, omni_neighbors, omni_recipients, snapshot
from trust_engine import StaleBsmError, assess_bsm, detect_colocation, mark_suspect

logger = logging.getLogger(__name__)

STREAM_NAMES = ('placement', 'identities', 'noise', 'nonces', 'ghost_offsets')
PSEUDONYM_SPACE = 2 ** 62


def named_streams(seed: int) -> Dict[str, np.random.Generator]:
    """Independent generators per concern, all derived from one root seed"""
    return {
        name: np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))
        for index, name in enumerate(STREAM_NAMES)
    }


def population(vehicles: int, sybil_fraction: float, ghosts_per_attacker: int = 1) -> Tuple[int, int, int]:
    """
    Split the identity count between honest vehicles and ghosts

    Returns:
        tuple: (honest vehicles, ghost identities, Sybil transmitters)
    """
    ghosts = int(math.floor(sybil_fraction * vehicles + 0.5))
    transmitters = -(-ghosts // ghosts_per_attacker)
    return vehicles - ghosts, ghosts, transmitters


@dataclass
class World:
    """Complete mutable state of one run"""
    config: ScenarioConfig
    epoch: int
    vehicles: Dict[Pseudonym, VehicleState]
    ghosts: Dict[Pseudonym, GhostTrack]
    tables: Dict[Pseudonym, ScoreTable]
    books: Dict[Pseudonym, ChallengeBook]
    streams: Dict[str, np.random.Generator]
    log: EventLog
    used_nonces: Set[int] = field(default_factory=set)
    packets_due: List[Tuple[int, ChallengePacket]] = field(default_factory=list)
    responses_due: List[Tuple[int, ChallengeResponse, ChallengePacket, Point]] = field(default_factory=list)
    ghost_challenges: int = 0
    ghost_challenges_answered: int = 0

    @property
    def honest_ids(self) -> List[Pseudonym]:
        return sorted(v.id for v in self.vehicles.values() if v.role == Role.HONEST)

    def physical_snapshot(self) -> PhysicalSnapshot:
        return snapshot(self.vehicles.values(), self.config.road)

    def identity_count(self) -> int:
        return len(self.honest_ids) + len(self.ghosts)

    def table_rows(self) -> List[dict]:
        """Every observer's table state as of the last completed epoch, observer then subject order"""
        epoch = max(self.epoch - 1, 0)
        return [row for observer in sorted(self.tables) for row in self.tables[observer].rows(epoch)]


def _draw_pseudonyms(rng: np.random.Generator, count: int) -> List[Pseudonym]:
    drawn: List[Pseudonym] = []
    seen: Set[Pseudonym] = set()
    while len(drawn) < count:
        candidate = int(rng.integers(1, PSEUDONYM_SPACE))
        if candidate not in seen:
            seen.add(candidate)
            drawn.append(candidate)
    return drawn


def initialize(config: ScenarioConfig) -> World:
    """
    Place vehicles, designate Sybil transmitters and spawn their ghosts

    Args:
        config (ScenarioConfig): Scenario; validated here

    Returns:
        World: Epoch-0 world with empty score tables
    """
    try:
        config.ensure_valid()
        streams = named_streams(config.seed)
        attack = config.attack
        honest, ghost_count, transmitter_count = population(
            config.vehicles, config.sybil_fraction, attack.ghosts_per_attacker)

        ids = _draw_pseudonyms(streams['identities'], honest + transmitter_count + ghost_count)
        honest_ids = ids[:honest]
        transmitter_ids = ids[honest:honest + transmitter_count]
        ghost_ids = ids[honest + transmitter_count:]

        placements = place_on_ring(streams['placement'], honest + transmitter_count, config.road)
        speed = config.road.speed_limit

        vehicles: Dict[Pseudonym, VehicleState] = {}
        for vid, (arc, lane) in zip(honest_ids, placements[:honest]):
            vehicles[vid] = VehicleState(id=vid, arc_position=arc, lane=lane, true_speed=speed)

        ghosts: Dict[Pseudonym, GhostTrack] = {}
        remaining = list(ghost_ids)
        for tid, (arc, lane) in zip(transmitter_ids, placements[honest:]):
            mine, remaining = remaining[:attack.ghosts_per_attacker], remaining[attack.ghosts_per_attacker:]
            transmitter = VehicleState(id=tid, arc_position=arc, lane=lane, true_speed=speed,
                                       role=Role.SYBIL_TRANSMITTER, ghost_ids=tuple(mine))
            vehicles[tid] = transmitter
            shared = None
            if attack.colocate_ghosts:
                shared = float(streams['ghost_offsets'].uniform(attack.ghost_offset_min, attack.ghost_offset_max))
            for gid in mine:
                ghosts[gid] = spawn_sybil(transmitter, streams['ghost_offsets'], config.road, gid,
                                          attack, offset=shared)

        tables = {vid: ScoreTable(owner=vid, window_size=config.trust.window_size) for vid in honest_ids}
        books = {vid: ChallengeBook(vid, config.challenge, config.epoch_duration) for vid in honest_ids}
        log = EventLog(meta={
            'seed': config.seed,
            'sybil_fraction': config.sybil_fraction,
            'lambda': config.trust.lambda_,
            'aggregation': config.metrics.aggregation,
            'honest_ids': sorted(honest_ids),
            'ghost_ids': sorted(ghost_ids),
            'transmitter_of': {gid: g.transmitter for gid, g in ghosts.items()},
            'beam_range': config.channel.beam_range,
            'beam_half_angle': config.channel.beam_half_angle,
            'beam_focus_radius': config.channel.beam_focus_radius
        })

        logger.info(
            f"World initialized: {honest} honest, {transmitter_count} transmitters, "
            f"{ghost_count} ghosts (seed {config.seed})"
        )
        return World(config=config, epoch=0, vehicles=vehicles, ghosts=ghosts, tables=tables,
                     books=books, streams=streams, log=log)

    except Exception as e:
        logger.error(f"Error initializing world: {str(e)}")
        raise


# ============================================
# EPOCH PHASES
# ============================================

def _emit_beacons(world: World, epoch: int) -> List[Tuple[BsmStatus, Pseudonym, Point]]:
    """Every identity's beacon with the physical radio that carries it"""
    road = world.config.road
    beacons = []
    for vid in world.honest_ids:
        vehicle = world.vehicles[vid]
        xy = to_xy(vehicle.arc_position, vehicle.lane, road)
        velocity = report_velocity(vehicle, world.config.noise_sigma, world.streams['noise'])
        beacons.append((BsmStatus(sender=vid, velocity=velocity, timestamp=epoch, position=xy), vid, xy))
    for gid in sorted(world.ghosts):
        ghost = world.ghosts[gid]
        carrier = world.vehicles[ghost.transmitter]
        radio_xy = to_xy(carrier.arc_position, carrier.lane, road)
        beacons.append((forge_bsm(ghost, epoch, road), carrier.id, radio_xy))
    return beacons


def _deliver_beacons(world: World, beacons, snap: PhysicalSnapshot) -> Dict[Pseudonym, List[BsmStatus]]:
    inbox: Dict[Pseudonym, List[BsmStatus]] = {vid: [] for vid in world.tables}
    neighbors = omni_neighbors(snap, world.config.channel)
    for bsm, radio_id, _ in beacons:
        for receiver in neighbors[radio_id]:
            if receiver in inbox:
                inbox[receiver].append(bsm)
    return inbox


def _log_suspect(world: World, event: SuspectEvent):
    entry = world.tables[event.observer].entries[event.subject]
    world.log.append(event.epoch, 'suspect', event.observer, event.subject,
                     trust=entry.trust, category=entry.category.value, detail=event.reason)


def _assess(world: World, epoch: int, inbox: Dict[Pseudonym, List[BsmStatus]]):
    params = world.config.trust
    speed_limit = world.config.road.speed_limit
    for observer in sorted(inbox):
        table = world.tables[observer]
        for bsm in sorted(inbox[observer], key=lambda b: b.sender):
            try:
                outcome = assess_bsm(table, bsm, speed_limit, params, epoch)
            except StaleBsmError as e:
                logger.warning(str(e))
                continue
            world.log.append(epoch, 'trust', observer, bsm.sender, velocity=bsm.velocity,
                             pos_x=bsm.position[0], pos_y=bsm.position[1], trust=outcome.entry.trust,
                             category=outcome.entry.category.value, detail=outcome.branch)
            if outcome.event is not None:
                _log_suspect(world, outcome.event)


def _colocation(world: World, epoch: int, inbox: Dict[Pseudonym, List[BsmStatus]]):
    params = world.config.trust
    for observer in sorted(inbox):
        table = world.tables[observer]
        for subject in sorted(detect_colocation(inbox[observer], params.colocation_epsilon)):
            if subject not in table.entries:
                continue
            event = mark_suspect(table, subject, epoch, params, reason='colocation')
            if event is not None:
                _log_suspect(world, event)


def _send_packet(world: World, epoch: int, packet: ChallengePacket):
    world.log.append(epoch, 'challenge', packet.challenger, packet.target,
                     pos_x=packet.challenger_xy[0], pos_y=packet.challenger_xy[1], nonce=packet.nonce,
                     attempt=packet.attempt, aim_x=packet.aim_xy[0], aim_y=packet.aim_xy[1])
    world.packets_due.append((epoch + world.config.channel.delivery_delay, packet))
    if packet.target in world.ghosts:
        world.ghost_challenges += 1


def _log_classification(world: World, epoch: int, observer: Pseudonym, subject: Pseudonym, detail: str):
    entry = world.tables[observer].entries[subject]
    world.log.append(epoch, 'classification', observer, subject, trust=entry.trust,
                     category=entry.category.value, detail=detail)


def _handle_due_responses(world: World, epoch: int):
    due = [r for r in world.responses_due if r[0] <= epoch]
    world.responses_due = [r for r in world.responses_due if r[0] > epoch]
    for _, response, packet, responder_xy in sorted(due, key=lambda r: (r[2].challenger, r[1].responder, r[1].nonce)):
        table = world.tables[packet.challenger]
        accepted, _ = world.books[packet.challenger].accept(response, table)
        world.log.append(epoch, 'response', packet.challenger, response.responder,
                         pos_x=responder_xy[0], pos_y=responder_xy[1], nonce=response.nonce,
                         attempt=packet.attempt, detail='accepted' if accepted else 'ignored')
        if accepted:
            _log_classification(world, epoch, packet.challenger, response.responder, 'verified')


def _resolve_timeouts(world: World, epoch: int, snap: PhysicalSnapshot):
    for observer in sorted(world.books):
        book = world.books[observer]
        if not book.states:
            continue
        challenger_xy = snap.position_of(observer)
        reissued, confirmed = book.expire(epoch, world.tables[observer], challenger_xy,
                                          world.streams['nonces'], world.used_nonces)
        for target in confirmed:
            _log_classification(world, epoch, observer, target, 'confirmed')
        for packet in reissued:
            _send_packet(world, epoch, packet)


def _open_challenges(world: World, epoch: int, snap: PhysicalSnapshot):
    for observer in sorted(world.tables):
        table = world.tables[observer]
        if not table.suspect_list:
            continue
        book = world.books[observer]
        challenger_xy = snap.position_of(observer)
        for target in sorted(table.suspect_list):
            if table.entries[target].category != ClassificationCategory.SUSPECT:
                continue
            if target in book.states and book.states[target].outcome == ChallengeOutcome.PENDING:
                continue
            packet = book.open(table, target, challenger_xy, epoch, world.streams['nonces'], world.used_nonces)
            _send_packet(world, epoch, packet)


def _deliver_packets(world: World, epoch: int, snap: PhysicalSnapshot):
    due = [p for p in world.packets_due if p[0] <= epoch]
    world.packets_due = [p for p in world.packets_due if p[0] > epoch]
    delay = world.config.channel.delivery_delay
    for _, packet in sorted(due, key=lambda p: (p[1].challenger, p[1].target, p[1].attempt)):
        receivers = deliver_challenge(packet, snap, world.config.channel)
        if packet.target in world.ghosts:
            transmitter = world.ghosts[packet.target].transmitter
            response = attacker_respond(world.config.attack.policy, transmitter in receivers, packet, epoch + delay)
            responder_radio = transmitter
            if response is not None:
                world.ghost_challenges_answered += 1
        elif packet.target in receivers:
            response = ChallengeResponse(responder=packet.target, nonce=packet.nonce, epoch=epoch + delay)
            responder_radio = packet.target
        else:
            response = None
        if response is None:
            continue
        responder_xy = snap.position_of(responder_radio)
        # replies travel omnidirectionally back to the challenger
        if packet.challenger not in omni_recipients(responder_xy, snap, world.config.channel, sender_id=responder_radio):
            continue
        world.responses_due.append((epoch + delay, response, packet, responder_xy))


def _challenge_phase(world: World, epoch: int, snap: PhysicalSnapshot):
    _handle_due_responses(world, epoch)
    _resolve_timeouts(world, epoch, snap)
    _open_challenges(world, epoch, snap)
    _deliver_packets(world, epoch, snap)
    _handle_due_responses(world, epoch)


def step_epoch(world: World) -> World:
    """
    Advance the world by one beacon interval

    Phases: move vehicles and ghosts, emit beacons, deliver them, assess in
    sender-id order per receiver, colocation screening, challenge lifecycle.
    Events are appended to the log as each phase produces them.
    """
    config = world.config
    if world.epoch >= config.duration_epochs:
        raise ValueError(f"Run already finished at epoch {world.epoch}")
    epoch = world.epoch
    dt = config.epoch_duration

    world.vehicles = {vid: advance(v, dt, config.road) for vid, v in world.vehicles.items()}
    world.ghosts = {gid: advance_ghost(g, dt, config.road) for gid, g in world.ghosts.items()}
    snap = world.physical_snapshot()

    beacons = _emit_beacons(world, epoch)
    inbox = _deliver_beacons(world, beacons, snap)
    _assess(world, epoch, inbox)
    _colocation(world, epoch, inbox)
    _challenge_phase(world, epoch, snap)

    world.epoch = epoch + 1
    return world


def run(config: ScenarioConfig, world: Optional[World] = None) -> Tuple[EventLog, RunMetrics]:
    """
    Execute a complete run and evaluate it against ground truth

    Args:
        config (ScenarioConfig): Scenario
        world (World): Pre-initialized world, built from config when omitted

    Returns:
        tuple: (EventLog, RunMetrics)
    """
    try:
        world = world or initialize(config)
        logger.info(f"Run started: {config.duration_epochs} epochs, seed {config.seed}")
        while world.epoch < config.duration_epochs:
            step_epoch(world)

        world.log.meta['ghost_challenges'] = world.ghost_challenges
        world.log.meta['ghost_challenges_answered'] = world.ghost_challenges_answered
        world.log.meta['table_rows'] = world.table_rows()
        metrics = compute_metrics(world.log, config.metrics.aggregation)
        logger.info(
            f"Run finished: {len(world.log)} events, accuracy {metrics.accuracy}, "
            f"mean detection {metrics.mean_detection_epochs} epochs"
        )
        return world.log, metrics

    except Exception as e:
        logger.error(f"Error running simulation: {str(e)}")
        raise
