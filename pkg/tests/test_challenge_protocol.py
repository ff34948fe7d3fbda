"""
Challenge issue, directional delivery, response matching and timeouts
"""

from collections import deque

import numpy as np
import pytest

from challenge_protocol import (ChallengeBook, ChallengeResolvedError, deliver_challenge, draw_nonce,
                                handle_response, issue_challenge, needs_reissue, resolve_timeouts)
from config import ChallengeConfig, ChannelConfig
from models import (ChallengeOutcome, ChallengeResponse, ChallengeState, ClassificationCategory,
                    ScoreEntry, ScoreTable)
from radio_channel import PhysicalSnapshot

CHALLENGER_XY = (0.0, 0.0)


def _suspect_table(target=7, trust=-1.0):
    table = ScoreTable(owner=1)
    table.entries[target] = ScoreEntry(
        pseudonym=target, last_position=(100.0, 0.0), last_velocity=2.0, last_timestamp=0, trust=trust,
        first_seen=0, velocity_window=deque([2.0], maxlen=20), category=ClassificationCategory.SUSPECT,
        prev_position=(99.8, 0.0)
    )
    table.entries[2] = ScoreEntry(
        pseudonym=2, last_position=(50.0, 50.0), last_velocity=15.0, last_timestamp=0, trust=4.0,
        first_seen=0, velocity_window=deque([15.0], maxlen=20)
    )
    table.suspect_list.add(target)
    return table


def _state():
    return ChallengeState(target=7, max_attempts=3, per_attempt_timeout=2)


class TestIssue:
    def test_aims_at_anticipated_position(self):
        packet = issue_challenge(_suspect_table(), 7, CHALLENGER_XY, 1, np.random.default_rng(0), _state())
        assert packet.aim_xy == pytest.approx((100.2, 0.0))
        assert packet.issued_epoch == 1
        assert packet.attempt == 1
        assert packet.challenger == 1

    def test_nonces_distinct_and_registered(self):
        table, state, used = _suspect_table(), _state(), set()
        rng = np.random.default_rng(0)
        first = issue_challenge(table, 7, CHALLENGER_XY, 1, rng, state, used_nonces=used)
        second = issue_challenge(table, 7, CHALLENGER_XY, 3, rng, state, used_nonces=used)
        assert first.nonce != second.nonce
        assert used == {first.nonce, second.nonce}
        assert (first.attempt, second.attempt) == (1, 2)
        assert state.outstanding is second

    def test_nonce_is_unsigned_64_bit(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            assert 0 <= draw_nonce(rng) < 2 ** 64

    def test_malicious_target_rejected(self):
        table = _suspect_table()
        table.entries[7].category = ClassificationCategory.MALICIOUS
        with pytest.raises(ChallengeResolvedError):
            issue_challenge(table, 7, CHALLENGER_XY, 1, np.random.default_rng(0), _state())

    def test_non_suspect_target_rejected(self):
        with pytest.raises(ValueError):
            issue_challenge(_suspect_table(), 2, CHALLENGER_XY, 1, np.random.default_rng(0), _state())

    def test_unknown_target_rejected(self):
        with pytest.raises(ValueError):
            issue_challenge(_suspect_table(), 99, CHALLENGER_XY, 1, np.random.default_rng(0), _state())

    def test_attempts_exhausted(self):
        state = _state()
        state.attempts_sent = 3
        with pytest.raises(ValueError):
            issue_challenge(_suspect_table(), 7, CHALLENGER_XY, 1, np.random.default_rng(0), state)


class TestDelivery:
    def test_only_radios_inside_beam(self):
        packet = issue_challenge(_suspect_table(), 7, CHALLENGER_XY, 0, np.random.default_rng(0), _state())
        # target on axis, transmitter 40 degrees off axis, bystander next to the aim point
        snap = PhysicalSnapshot(ids=np.array([7, 8, 9], dtype=np.int64),
                                xy=np.array([[100.0, 0.0], [76.6, 64.3], [110.0, 2.0]]))
        assert deliver_challenge(packet, snap, ChannelConfig()) == {7, 9}

    def test_radios_in_cone_far_from_aim_point_excluded(self):
        packet = issue_challenge(_suspect_table(), 7, CHALLENGER_XY, 0, np.random.default_rng(0), _state())
        # on axis but 60 m short of and 50 m past the anticipated position
        snap = PhysicalSnapshot(ids=np.array([8, 9], dtype=np.int64),
                                xy=np.array([[40.0, 0.0], [150.0, 0.0]]))
        assert deliver_challenge(packet, snap, ChannelConfig()) == set()
        assert deliver_challenge(packet, snap, ChannelConfig(beam_focus_radius=60.0)) == {8, 9}

    def test_aim_at_challenger_reaches_nobody(self):
        table = _suspect_table()
        table.entries[7].last_position = CHALLENGER_XY
        table.entries[7].prev_position = None
        packet = issue_challenge(table, 7, CHALLENGER_XY, 0, np.random.default_rng(0), _state())
        snap = PhysicalSnapshot(ids=np.array([7], dtype=np.int64), xy=np.array([[5.0, 0.0]]))
        assert deliver_challenge(packet, snap, ChannelConfig()) == set()


class TestResponses:
    def test_matching_response_verifies(self):
        table, state = _suspect_table(), _state()
        packet = issue_challenge(table, 7, CHALLENGER_XY, 0, np.random.default_rng(0), state)
        outcome = handle_response(state, ChallengeResponse(7, packet.nonce, 0), table, 2.5)

        entry = table.entries[7]
        assert outcome == ChallengeOutcome.VERIFIED_HONEST
        assert entry.category == ClassificationCategory.HONEST
        assert entry.trust == 2.5
        assert entry.honest_since == 0
        assert entry.final_classified_at == 0
        assert 7 not in table.suspect_list

    def test_wrong_nonce_ignored(self):
        table, state = _suspect_table(), _state()
        packet = issue_challenge(table, 7, CHALLENGER_XY, 0, np.random.default_rng(0), state)
        outcome = handle_response(state, ChallengeResponse(7, packet.nonce ^ 1, 0), table, 2.5)
        assert outcome == ChallengeOutcome.PENDING
        assert table.entries[7].category == ClassificationCategory.SUSPECT

    def test_wrong_responder_ignored(self):
        table, state = _suspect_table(), _state()
        packet = issue_challenge(table, 7, CHALLENGER_XY, 0, np.random.default_rng(0), state)
        assert handle_response(state, ChallengeResponse(2, packet.nonce, 0), table, 2.5) == ChallengeOutcome.PENDING

    def test_late_response_ignored(self):
        table, state = _suspect_table(), _state()
        packet = issue_challenge(table, 7, CHALLENGER_XY, 0, np.random.default_rng(0), state)
        late = ChallengeResponse(7, packet.nonce, packet.issued_epoch + state.per_attempt_timeout)
        assert handle_response(state, late, table, 2.5) == ChallengeOutcome.PENDING

    def test_response_after_confirmation_ignored(self):
        table, state = _suspect_table(), _state()
        state.attempts_sent = 2
        packet = issue_challenge(table, 7, CHALLENGER_XY, 0, np.random.default_rng(0), state)
        assert resolve_timeouts(state, 2, table) == ChallengeOutcome.CONFIRMED_MALICIOUS
        outcome = handle_response(state, ChallengeResponse(7, packet.nonce, 1), table, 2.5)
        assert outcome == ChallengeOutcome.CONFIRMED_MALICIOUS
        assert table.entries[7].category == ClassificationCategory.MALICIOUS


class TestTimeouts:
    def test_not_due_before_timeout(self):
        table, state = _suspect_table(), _state()
        issue_challenge(table, 7, CHALLENGER_XY, 4, np.random.default_rng(0), state)
        assert resolve_timeouts(state, 5, table) == ChallengeOutcome.PENDING
        assert state.outstanding is not None

    def test_expired_attempt_waits_for_reissue(self):
        table, state = _suspect_table(), _state()
        issue_challenge(table, 7, CHALLENGER_XY, 4, np.random.default_rng(0), state)
        assert resolve_timeouts(state, 6, table) == ChallengeOutcome.PENDING
        assert state.outstanding is None
        assert needs_reissue(state)

    def test_silent_target_confirmed_after_all_attempts(self):
        table, book = _suspect_table(), ChallengeBook(1, ChallengeConfig(), 0.1)
        rng, used = np.random.default_rng(0), set()
        book.open(table, 7, CHALLENGER_XY, 10, rng, used)

        timeline = {}
        for epoch in range(11, 17):
            reissued, confirmed = book.expire(epoch, table, CHALLENGER_XY, rng, used)
            timeline[epoch] = ([p.attempt for p in reissued], confirmed)

        assert timeline[12] == ([2], [])
        assert timeline[14] == ([3], [])
        assert timeline[16] == ([], [7])
        assert all(timeline[e] == ([], []) for e in (11, 13, 15))
        entry = table.entries[7]
        assert entry.category == ClassificationCategory.MALICIOUS
        assert entry.final_classified_at == 16
        assert 7 in table.suspect_list
        assert len(used) == 3

    def test_second_attempt_answered(self):
        table, book = _suspect_table(), ChallengeBook(1, ChallengeConfig(), 0.1)
        rng = np.random.default_rng(0)
        first = book.open(table, 7, CHALLENGER_XY, 10, rng)
        reissued, _ = book.expire(12, table, CHALLENGER_XY, rng)
        second = reissued[0]

        # only the current nonce is outstanding
        assert book.accept(ChallengeResponse(7, first.nonce, 12), table) == (False, ChallengeOutcome.PENDING)
        assert book.accept(ChallengeResponse(7, second.nonce, 12), table) == (True, ChallengeOutcome.VERIFIED_HONEST)
        assert book.expire(14, table, CHALLENGER_XY, rng) == ([], [])
        assert book.states[7].attempts_sent == 2
        assert table.entries[7].category == ClassificationCategory.HONEST


class TestChallengeBook:
    def test_one_pending_verification_per_target(self):
        table, book = _suspect_table(), ChallengeBook(1)
        book.open(table, 7, CHALLENGER_XY, 0, np.random.default_rng(0))
        with pytest.raises(ValueError):
            book.open(table, 7, CHALLENGER_XY, 1, np.random.default_rng(1))

    def test_confirmed_target_cannot_be_reopened(self):
        table, book = _suspect_table(), ChallengeBook(1, ChallengeConfig(max_attempts=1))
        rng = np.random.default_rng(0)
        book.open(table, 7, CHALLENGER_XY, 0, rng)
        book.expire(2, table, CHALLENGER_XY, rng)
        with pytest.raises(ChallengeResolvedError):
            book.open(table, 7, CHALLENGER_XY, 3, rng)

    def test_verified_target_can_be_challenged_again(self):
        table, book = _suspect_table(), ChallengeBook(1)
        rng = np.random.default_rng(0)
        packet = book.open(table, 7, CHALLENGER_XY, 0, rng)
        book.accept(ChallengeResponse(7, packet.nonce, 0), table)

        table.entries[7].category = ClassificationCategory.SUSPECT
        table.suspect_list.add(7)
        again = book.open(table, 7, CHALLENGER_XY, 60, rng)
        assert again.attempt == 1
        assert book.states[7].outcome == ChallengeOutcome.PENDING

    def test_response_for_unknown_target(self):
        table, book = _suspect_table(), ChallengeBook(1)
        assert book.accept(ChallengeResponse(42, 1, 0), table) == (False, ChallengeOutcome.PENDING)
