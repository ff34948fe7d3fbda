"""
Ring-road geometry and constant-speed vehicle kinematics
"""

import logging
import math
from dataclasses import replace
from typing import List, Optional, Tuple

import numpy as np

from config import RoadConfig
from models import GhostTrack, Point, Role, VehicleState

logger = logging.getLogger(__name__)

MAX_PLACEMENT_TRIES = 10000


def ring_radius(road: RoadConfig) -> float:
    return road.length / (2.0 * math.pi)


def advance(vehicle: VehicleState, dt: float, road: RoadConfig) -> VehicleState:
    """
    Move a vehicle along the loop

    Args:
        vehicle (VehicleState): Current state
        dt (float): Elapsed seconds, > 0
        road (RoadConfig): Loop geometry

    Returns:
        VehicleState: State with arc_position advanced modulo the loop length
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    return replace(vehicle, arc_position=wrap_arc(vehicle.arc_position + vehicle.true_speed * dt, road))


def wrap_arc(arc_position: float, road: RoadConfig) -> float:
    wrapped = arc_position % road.length
    # x % L can round up to L for tiny negative x
    return 0.0 if wrapped >= road.length else wrapped


def to_xy(arc_position: float, lane: int, road: RoadConfig) -> Point:
    """
    Map a loop coordinate onto the plane

    The loop is a circle of circumference road.length centred at the origin;
    lane k sits k * lane_offset further out. Arc position increases
    counter-clockwise from the positive x axis.

    Args:
        arc_position (float): Meters along lane 0, in [0, length)
        lane (int): Lane index
        road (RoadConfig): Loop geometry

    Returns:
        tuple: (x, y) in meters
    """
    theta = 2.0 * math.pi * arc_position / road.length
    radius = ring_radius(road) + lane * road.lane_offset
    return (radius * math.cos(theta), radius * math.sin(theta))


def tangent_at(xy: Point) -> Point:
    """Unit direction of travel at a point of the plane (counter-clockwise)"""
    norm = math.hypot(xy[0], xy[1])
    if norm == 0.0:
        return (1.0, 0.0)
    return (-xy[1] / norm, xy[0] / norm)


def report_velocity(vehicle: VehicleState, noise_sigma: float, rng: np.random.Generator,
                    ghost: Optional[GhostTrack] = None) -> float:
    """
    Velocity a vehicle puts into its status beacon

    Args:
        vehicle (VehicleState): Reporting vehicle
        noise_sigma (float): Gaussian measurement noise for honest vehicles (m/s)
        rng (Generator): Seeded noise stream
        ghost (GhostTrack): Forged identity, required for Sybil transmitters

    Returns:
        float: Reported velocity (m/s), never negative
    """
    if noise_sigma < 0:
        raise ValueError(f"noise_sigma must be >= 0, got {noise_sigma}")
    if vehicle.role == Role.SYBIL_TRANSMITTER:
        if ghost is None:
            raise ValueError(f"Sybil transmitter {vehicle.id} only reports through a ghost identity")
        return ghost.claimed_speed
    if noise_sigma == 0:
        return vehicle.true_speed
    return max(0.0, vehicle.true_speed + float(rng.normal(0.0, noise_sigma)))


def arc_gap(a, b, road: RoadConfig):
    """Shortest distance between arc positions around the loop; broadcasts over arrays"""
    d = np.abs(np.subtract(a, b)) % road.length
    return np.minimum(d, road.length - d)


def place_on_ring(rng: np.random.Generator, count: int, road: RoadConfig) -> List[Tuple[float, int]]:
    """
    Uniform random (arc_position, lane) placements with same-lane spacing

    Args:
        rng (Generator): Seeded placement stream
        count (int): Number of vehicles
        road (RoadConfig): Loop geometry and min_spacing

    Returns:
        list: (arc_position, lane) per vehicle, in draw order
    """
    try:
        occupied = [np.empty(0) for _ in range(road.lanes)]
        placements = []
        for index in range(count):
            for _ in range(MAX_PLACEMENT_TRIES):
                lane = int(rng.integers(0, road.lanes))
                arc = float(rng.uniform(0.0, road.length))
                taken = occupied[lane]
                if taken.size:
                    if arc_gap(taken, arc, road).min() < road.min_spacing:
                        continue
                occupied[lane] = np.append(taken, arc)
                placements.append((arc, lane))
                break
            else:
                raise ValueError(
                    f"Could not place vehicle {index} of {count}: road too dense for min_spacing {road.min_spacing}"
                )
        logger.info(f"Placed {count} vehicles on a {road.length:.0f} m loop")
        return placements

    except Exception as e:
        logger.error(f"Error placing vehicles: {str(e)}")
        raise
