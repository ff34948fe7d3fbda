"""
Omnidirectional delivery and the directional beam
"""

import math

import numpy as np
import pytest

from config import ChannelConfig, RoadConfig
from models import VehicleState
from radio_channel import (PhysicalSnapshot, anticipated_position, beam_contains, beam_members, focused_beam_members,
                           heading_from_reports, omni_neighbors, omni_recipients, snapshot, within_focus)

CHANNEL = ChannelConfig()


def _snap(points):
    ids = np.arange(1, len(points) + 1, dtype=np.int64)
    return PhysicalSnapshot(ids=ids, xy=np.asarray(points, dtype=float).reshape(-1, 2))


class TestOmni:
    def test_range_and_sender_exclusion(self):
        snap = _snap([(0.0, 0.0), (100.0, 0.0), (301.0, 0.0), (0.0, 300.0)])
        assert omni_recipients((0.0, 0.0), snap, CHANNEL, sender_id=1) == {2, 4}

    def test_sender_inferred_from_position(self):
        snap = _snap([(0.0, 0.0), (100.0, 0.0)])
        assert omni_recipients((0.0, 0.0), snap, CHANNEL) == {2}

    def test_accepts_vehicle_states(self):
        road = RoadConfig()
        vehicles = [VehicleState(id=5, arc_position=0.0, lane=0, true_speed=15.0),
                    VehicleState(id=6, arc_position=50.0, lane=0, true_speed=15.0),
                    VehicleState(id=7, arc_position=1000.0, lane=0, true_speed=15.0)]
        sender_xy = snapshot(vehicles, road).position_of(5)
        assert omni_recipients(sender_xy, vehicles, CHANNEL, road, sender_id=5) == {6}

    def test_empty_snapshot(self):
        assert omni_recipients((0.0, 0.0), _snap([]), CHANNEL) == set()

    def test_symmetric(self):
        rng = np.random.default_rng(2)
        points = rng.uniform(0.0, 600.0, (30, 2))
        snap = _snap(points)
        heard = {int(i): omni_recipients(tuple(points[i - 1]), snap, CHANNEL, sender_id=int(i)) for i in snap.ids}
        for a in heard:
            for b in heard[a]:
                assert a in heard[b]

    def test_neighbor_map_agrees_with_per_sender_delivery(self):
        rng = np.random.default_rng(8)
        points = rng.uniform(0.0, 700.0, (40, 2))
        snap = _snap(points)
        neighbors = omni_neighbors(snap, CHANNEL)
        assert set(neighbors) == {int(i) for i in snap.ids}
        for i in snap.ids:
            assert neighbors[int(i)] == omni_recipients(tuple(points[i - 1]), snap, CHANNEL, sender_id=int(i))

    def test_neighbor_map_of_empty_snapshot(self):
        assert omni_neighbors(_snap([]), CHANNEL) == {}


class TestBeam:
    ORIGIN = (0.0, 0.0)
    AIM = (100.0, 0.0)

    @pytest.mark.parametrize('point, expected', [
        ((50.0, 10.0), True),
        ((50.0, 20.0), False),
        ((-50.0, 0.0), False),
        ((400.0, 0.0), False),
        ((300.0, 0.0), True),
        ((0.0, 0.0), False),
    ])
    def test_membership(self, point, expected):
        assert beam_contains(self.ORIGIN, self.AIM, point, CHANNEL) is expected

    def test_aim_at_origin_rejected(self):
        with pytest.raises(ValueError):
            beam_contains(self.ORIGIN, self.ORIGIN, (10.0, 0.0), CHANNEL)
        with pytest.raises(ValueError):
            beam_members(self.ORIGIN, self.ORIGIN, _snap([(10.0, 0.0)]), CHANNEL)

    def test_vectorised_agrees_with_scalar(self):
        rng = np.random.default_rng(9)
        points = rng.uniform(-350.0, 350.0, (200, 2))
        snap = _snap(points)
        aim = (120.0, 45.0)
        expected = {i + 1 for i, p in enumerate(points) if beam_contains(self.ORIGIN, aim, tuple(p), CHANNEL)}
        assert beam_members(self.ORIGIN, aim, snap, CHANNEL) == expected

    def test_focus_limits_reach_around_aim_point(self):
        # cone members at 10 m, 20 m and 60 m from the aim point, one outside the cone
        snap = _snap([(110.0, 0.0), (80.0, 0.0), (40.0, 0.0), (100.0, 30.0)])
        assert beam_members(self.ORIGIN, self.AIM, snap, CHANNEL) == {1, 2, 3}
        assert focused_beam_members(self.ORIGIN, self.AIM, snap, CHANNEL) == {1, 2}
        assert within_focus(self.AIM, (80.0, 0.0), CHANNEL)
        assert not within_focus(self.AIM, (40.0, 0.0), CHANNEL)

    def test_focused_subset_of_cone(self):
        rng = np.random.default_rng(21)
        snap = _snap(rng.uniform(-350.0, 350.0, (300, 2)))
        aim = (150.0, 30.0)
        focused = focused_beam_members(self.ORIGIN, aim, snap, CHANNEL)
        assert focused <= beam_members(self.ORIGIN, aim, snap, CHANNEL)
        for vid in focused:
            assert within_focus(aim, snap.position_of(vid), CHANNEL)

    def test_invariant_under_rigid_motion(self):
        rng = np.random.default_rng(13)
        half = math.radians(CHANNEL.beam_half_angle)
        for _ in range(200):
            origin = tuple(rng.uniform(-500, 500, 2))
            aim = tuple(np.add(origin, rng.uniform(-200, 200, 2)))
            point = tuple(np.add(origin, rng.uniform(-350, 350, 2)))
            axis = np.subtract(aim, origin)
            offset = np.subtract(point, origin)
            angle = math.atan2(abs(axis[0] * offset[1] - axis[1] * offset[0]), float(np.dot(axis, offset)))
            distance = float(np.hypot(*offset))
            if abs(angle - half) < 1e-6 or abs(distance - CHANNEL.beam_range) < 1e-6:
                continue

            theta = rng.uniform(0, 2 * math.pi)
            shift = rng.uniform(-1000, 1000, 2)
            rotation = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])

            def move(p):
                return tuple(rotation @ np.asarray(p) + shift)

            assert (beam_contains(origin, aim, point, CHANNEL)
                    == beam_contains(move(origin), move(aim), move(point), CHANNEL))


class TestAnticipation:
    def test_straight_line_projection(self):
        assert anticipated_position((100.0, 0.0), 2.0, (1.0, 0.0), 0.1) == pytest.approx((100.2, 0.0))

    def test_zero_elapsed_returns_last_report(self):
        assert anticipated_position((3.0, 4.0), 15.0, (0.0, 1.0), 0.0) == (3.0, 4.0)

    def test_heading_must_be_unit(self):
        with pytest.raises(ValueError):
            anticipated_position((0.0, 0.0), 2.0, (2.0, 0.0), 0.1)

    def test_elapsed_must_be_non_negative(self):
        with pytest.raises(ValueError):
            anticipated_position((0.0, 0.0), 2.0, (1.0, 0.0), -0.1)

    def test_heading_from_consecutive_reports(self):
        assert heading_from_reports((99.8, 0.0), (100.0, 0.0)) == pytest.approx((1.0, 0.0))

    def test_heading_falls_back_to_tangent(self):
        assert heading_from_reports(None, (10.0, 0.0)) == pytest.approx((0.0, 1.0))
        assert heading_from_reports((10.0, 0.0), (10.0, 0.0)) == pytest.approx((0.0, 1.0))
