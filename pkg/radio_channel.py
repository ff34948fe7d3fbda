"""
Radio delivery model: unit-disk beacon broadcast and the directional challenge beam
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Set, Union

import numpy as np

from config import ChannelConfig, RoadConfig
from mobility import tangent_at, to_xy
from models import Point, Pseudonym, VehicleState

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PhysicalSnapshot:
    """Positions of every physical radio at one instant"""
    ids: np.ndarray
    xy: np.ndarray

    def position_of(self, vehicle_id: Pseudonym) -> Point:
        index = int(np.flatnonzero(self.ids == vehicle_id)[0])
        return (float(self.xy[index, 0]), float(self.xy[index, 1]))


def snapshot(vehicles: Iterable[VehicleState], road: RoadConfig) -> PhysicalSnapshot:
    """Build the position arrays for a set of physical vehicles, ordered by id"""
    ordered = sorted(vehicles, key=lambda v: v.id)
    ids = np.array([v.id for v in ordered], dtype=np.int64)
    xy = np.array([to_xy(v.arc_position, v.lane, road) for v in ordered], dtype=float).reshape(-1, 2)
    return PhysicalSnapshot(ids=ids, xy=xy)


def _as_snapshot(all_vehicles: Union[PhysicalSnapshot, Iterable[VehicleState]],
                 road: Optional[RoadConfig]) -> PhysicalSnapshot:
    if isinstance(all_vehicles, PhysicalSnapshot):
        return all_vehicles
    if road is None:
        raise ValueError("road is required to locate vehicle states")
    return snapshot(all_vehicles, road)


def omni_recipients(sender_xy: Point, all_vehicles: Union[PhysicalSnapshot, Iterable[VehicleState]],
                    cfg: ChannelConfig, road: Optional[RoadConfig] = None,
                    sender_id: Optional[Pseudonym] = None) -> Set[Pseudonym]:
    """
    Vehicles that hear an omnidirectional broadcast

    Args:
        sender_xy (tuple): Position of the transmitting radio
        all_vehicles: PhysicalSnapshot or list of VehicleState
        cfg (ChannelConfig): omni_range
        road (RoadConfig): Needed when all_vehicles is a list of states
        sender_id: Physical radio that transmits; never a recipient. When absent,
            a vehicle located exactly at sender_xy is treated as the sender.

    Returns:
        set: Pseudonyms within Euclidean distance <= omni_range
    """
    snap = _as_snapshot(all_vehicles, road)
    if snap.ids.size == 0:
        return set()
    distances = np.hypot(snap.xy[:, 0] - sender_xy[0], snap.xy[:, 1] - sender_xy[1])
    mask = distances <= cfg.omni_range
    if sender_id is not None:
        mask &= snap.ids != sender_id
    else:
        mask &= distances > 0.0
    return {int(i) for i in snap.ids[mask]}


def omni_neighbors(snap: PhysicalSnapshot, cfg: ChannelConfig) -> Dict[Pseudonym, Set[Pseudonym]]:
    """
    Recipients of every radio's omnidirectional broadcast at once

    Equivalent to omni_recipients(xy, snap, cfg, sender_id=radio) for each radio
    of the snapshot, from a single pairwise distance matrix.
    """
    if snap.ids.size == 0:
        return {}
    dx = snap.xy[:, 0][:, None] - snap.xy[:, 0][None, :]
    dy = snap.xy[:, 1][:, None] - snap.xy[:, 1][None, :]
    reach = np.hypot(dx, dy) <= cfg.omni_range
    np.fill_diagonal(reach, False)
    ids = snap.ids
    return {int(ids[row]): {int(i) for i in ids[reach[row]]} for row in range(ids.size)}


def beam_contains(origin_xy: Point, aim_xy: Point, point_xy: Point, cfg: ChannelConfig) -> bool:
    """
    Whether a point lies inside the directional beam

    Args:
        origin_xy (tuple): Antenna position
        aim_xy (tuple): Point the beam is steered at (must differ from origin)
        point_xy (tuple): Candidate receiver position
        cfg (ChannelConfig): beam_range and beam_half_angle (degrees)

    Returns:
        bool: True iff within beam_range and within beam_half_angle of the axis
    """
    ax, ay = aim_xy[0] - origin_xy[0], aim_xy[1] - origin_xy[1]
    if ax == 0.0 and ay == 0.0:
        raise ValueError("Beam aim point coincides with its origin")
    px, py = point_xy[0] - origin_xy[0], point_xy[1] - origin_xy[1]
    distance = math.hypot(px, py)
    if distance == 0.0 or distance > cfg.beam_range:
        return False
    angle = math.atan2(abs(ax * py - ay * px), ax * px + ay * py)
    return angle <= math.radians(cfg.beam_half_angle)


def beam_members(origin_xy: Point, aim_xy: Point, snap: PhysicalSnapshot, cfg: ChannelConfig) -> Set[Pseudonym]:
    """Vectorised beam_contains over every physical radio of a snapshot"""
    ax, ay = aim_xy[0] - origin_xy[0], aim_xy[1] - origin_xy[1]
    if ax == 0.0 and ay == 0.0:
        raise ValueError("Beam aim point coincides with its origin")
    if snap.ids.size == 0:
        return set()
    px = snap.xy[:, 0] - origin_xy[0]
    py = snap.xy[:, 1] - origin_xy[1]
    distance = np.hypot(px, py)
    angle = np.arctan2(np.abs(ax * py - ay * px), ax * px + ay * py)
    mask = (distance > 0.0) & (distance <= cfg.beam_range) & (angle <= math.radians(cfg.beam_half_angle))
    return {int(i) for i in snap.ids[mask]}


def within_focus(aim_xy: Point, point_xy: Point, cfg: ChannelConfig) -> bool:
    """Whether a point lies within beam_focus_radius of the aim point"""
    return math.hypot(point_xy[0] - aim_xy[0], point_xy[1] - aim_xy[1]) <= cfg.beam_focus_radius


def focused_beam_members(origin_xy: Point, aim_xy: Point, snap: PhysicalSnapshot,
                         cfg: ChannelConfig) -> Set[Pseudonym]:
    """
    Radios a directed message steered at aim_xy reaches

    A receiver must lie inside the beam cone and within beam_focus_radius of
    the aim point: the message is addressed to a location, not to the whole cone.
    """
    in_cone = beam_members(origin_xy, aim_xy, snap, cfg)
    if not in_cone:
        return set()
    near = np.hypot(snap.xy[:, 0] - aim_xy[0], snap.xy[:, 1] - aim_xy[1]) <= cfg.beam_focus_radius
    return in_cone & {int(i) for i in snap.ids[near]}


def anticipated_position(last_xy: Point, claimed_speed: float, heading_unit: Point, elapsed: float) -> Point:
    """
    Where a reported track should be after `elapsed` seconds

    Args:
        last_xy (tuple): Last reported position
        claimed_speed (float): Last reported velocity (m/s)
        heading_unit (tuple): Unit direction of travel
        elapsed (float): Seconds since the last report, >= 0

    Returns:
        tuple: last_xy + claimed_speed * elapsed * heading_unit
    """
    if elapsed < 0:
        raise ValueError(f"elapsed must be >= 0, got {elapsed}")
    if abs(math.hypot(heading_unit[0], heading_unit[1]) - 1.0) > 1e-9:
        raise ValueError("heading_unit must have unit length")
    step = claimed_speed * elapsed
    return (last_xy[0] + step * heading_unit[0], last_xy[1] + step * heading_unit[1])


def heading_from_reports(prev_xy: Optional[Point], last_xy: Point) -> Point:
    """Unit vector between the last two reported positions, or the road tangent"""
    if prev_xy is not None:
        dx, dy = last_xy[0] - prev_xy[0], last_xy[1] - prev_xy[1]
        norm = math.hypot(dx, dy)
        if norm > 0.0:
            return (dx / norm, dy / norm)
    return tangent_at(last_xy)
