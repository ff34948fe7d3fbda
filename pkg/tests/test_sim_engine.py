"""
Epoch loop, population set-up and end-to-end runs
"""

import time
from dataclasses import replace

import numpy as np
import pytest

from config import RoadConfig, ScenarioConfig, with_parameter
from metrics_report import identity_verdicts
from models import AttackerPolicy, ClassificationCategory, Role
from radio_channel import beam_contains, within_focus
from sim_engine import initialize, named_streams, population, run, step_epoch
from test_utils import TestDataGenerator


def _observed_ghosts(log):
    ghosts = set(log.meta['ghost_ids'])
    return {r.subject for r in log.of_kind('trust') if r.subject in ghosts}


@pytest.fixture(scope='module')
def silent_run():
    return run(TestDataGenerator.small_scenario())


@pytest.fixture(scope='module')
def opportunistic_run():
    scenario = TestDataGenerator.opportunistic_scenario()
    log, metrics = run(scenario)
    return scenario, log, metrics


@pytest.fixture(scope='module')
def answering_run():
    scenario = TestDataGenerator.answering_scenario(duration_epochs=60)
    log, metrics = run(scenario)
    return scenario, log, metrics


def _trend_scenario(**overrides) -> ScenarioConfig:
    """40 vehicles on the default loop, one minute of beacons"""
    return replace(ScenarioConfig(vehicles=40, duration_epochs=60), **overrides).ensure_valid()


class TestPopulation:
    @pytest.mark.parametrize('vehicles, fraction, per_attacker, expected', [
        (100, 0.10, 1, (90, 10, 10)),
        (500, 0.30, 1, (350, 150, 150)),
        (100, 0.10, 2, (90, 10, 5)),
        (30, 0.10, 2, (27, 3, 2)),
        (10, 0.05, 1, (9, 1, 1)),
        (100, 0.0, 1, (100, 0, 0)),
    ])
    def test_split(self, vehicles, fraction, per_attacker, expected):
        assert population(vehicles, fraction, per_attacker) == expected

    def test_streams_reproducible_and_independent(self):
        first, second = named_streams(42), named_streams(42)
        assert first['noise'].normal() == second['noise'].normal()
        fresh = named_streams(42)
        assert fresh['noise'].integers(0, 2 ** 32) != fresh['nonces'].integers(0, 2 ** 32)


class TestInitialize:
    def test_counts_and_roles(self):
        world = initialize(TestDataGenerator.small_scenario())
        transmitters = [v for v in world.vehicles.values() if v.role == Role.SYBIL_TRANSMITTER]
        assert len(world.honest_ids) == 27
        assert len(world.ghosts) == 3
        assert len(transmitters) == 3
        assert world.identity_count() == 30
        assert set(world.tables) == set(world.honest_ids)

    def test_pseudonyms_unique_and_ghosts_have_no_radio(self):
        world = initialize(TestDataGenerator.small_scenario())
        ids = list(world.vehicles) + list(world.ghosts)
        assert len(ids) == len(set(ids))
        assert not set(world.ghosts) & set(world.vehicles)
        for gid, ghost in world.ghosts.items():
            assert gid in world.vehicles[ghost.transmitter].ghost_ids

    def test_same_seed_same_world(self):
        first = initialize(TestDataGenerator.small_scenario(seed=5))
        second = initialize(TestDataGenerator.small_scenario(seed=5))
        assert first.vehicles == second.vehicles
        assert first.ghosts == second.ghosts

    def test_no_sybils(self):
        world = initialize(TestDataGenerator.small_scenario(sybil_fraction=0.0))
        assert world.ghosts == {}
        assert len(world.honest_ids) == 30

    def test_colocated_ghosts_share_a_position(self):
        world = initialize(TestDataGenerator.colocated_scenario())
        for transmitter in world.vehicles.values():
            positions = {world.ghosts[g].claimed_arc_position for g in transmitter.ghost_ids}
            assert len(positions) <= 1


class TestStepEpoch:
    def test_honest_pair_first_exchange(self):
        scenario = TestDataGenerator.small_scenario(vehicles=2, sybil_fraction=0.0, noise_sigma=0.0,
                                                    duration_epochs=1, road=RoadConfig(length=400.0))
        world = step_epoch(initialize(scenario))
        a, b = world.honest_ids
        assert set(world.tables[a].entries) == {b}
        assert set(world.tables[b].entries) == {a}
        assert world.tables[a].entries[b].trust == 1.0
        assert world.tables[b].entries[a].trust == 1.0
        assert [r.kind for r in world.log] == ['trust', 'trust']
        assert world.epoch == 1

    def test_vehicle_out_of_range_stays_unknown(self):
        scenario = TestDataGenerator.small_scenario(vehicles=3, sybil_fraction=0.0, duration_epochs=1)
        world = initialize(scenario)
        a, b, far = world.honest_ids
        world.vehicles[a] = replace(world.vehicles[a], arc_position=0.0, lane=0)
        world.vehicles[b] = replace(world.vehicles[b], arc_position=10.0, lane=0)
        world.vehicles[far] = replace(world.vehicles[far], arc_position=1000.0, lane=0)
        step_epoch(world)
        assert set(world.tables[a].entries) == {b}
        assert set(world.tables[b].entries) == {a}
        assert world.tables[far].entries == {}

    def test_ghost_reports_claimed_speed_exactly(self):
        world = initialize(TestDataGenerator.small_scenario(duration_epochs=25))
        for _ in range(25):
            step_epoch(world)
        windows = [list(table.entries[gid].velocity_window)
                   for table in world.tables.values() for gid in world.ghosts if gid in table.entries]
        assert windows
        for window in windows:
            assert window == [2.0] * len(window)

    def test_finished_world_cannot_step(self):
        world = initialize(TestDataGenerator.small_scenario(duration_epochs=0))
        with pytest.raises(ValueError):
            step_epoch(world)

    def test_log_is_epoch_ordered(self, silent_run):
        log, _ = silent_run
        epochs = [row[1] for row in log.rows]
        assert epochs == sorted(epochs)
        assert [row[0] for row in log.rows] == list(range(len(log)))


class TestRun:
    def test_deterministic(self):
        scenario = TestDataGenerator.small_scenario(duration_epochs=40)
        first_log, first_metrics = run(scenario)
        second_log, second_metrics = run(scenario)
        assert first_log.rows == second_log.rows
        assert first_metrics == second_metrics

    def test_seed_changes_the_run(self):
        first_log, _ = run(TestDataGenerator.small_scenario(duration_epochs=20, seed=1))
        second_log, _ = run(TestDataGenerator.small_scenario(duration_epochs=20, seed=2))
        assert first_log.rows != second_log.rows

    def test_zero_duration(self):
        log, metrics = run(TestDataGenerator.small_scenario(duration_epochs=0))
        assert len(log) == 0
        assert (metrics.tp, metrics.fp, metrics.tn, metrics.fn) == (0, 0, 0, 0)
        assert metrics.accuracy is None

    def test_silent_ghosts_never_verified(self, silent_run):
        log, metrics = silent_run
        ghosts = set(log.meta['ghost_ids'])
        assert not [r for r in log.of_kind('classification')
                    if r.subject in ghosts and r.category == ClassificationCategory.HONEST.value]
        assert not [r for r in log.of_kind('response') if r.subject in ghosts and r.detail == 'accepted']
        assert metrics.ghost_challenges > 0
        assert metrics.ghost_challenges_answered == 0

    def test_silent_ghosts_confirmed_by_every_observer(self, silent_run):
        log, _ = silent_run
        ghosts = set(log.meta['ghost_ids'])
        seen = {}
        for record in log.of_kind('trust'):
            seen.setdefault((record.observer, record.subject), record.epoch)
        final = {}
        for record in log.of_kind('classification'):
            final[(record.observer, record.subject)] = record.category

        pairs = [pair for pair, epoch in seen.items() if pair[1] in ghosts and epoch <= 80]
        assert pairs
        for pair in pairs:
            assert final.get(pair) == ClassificationCategory.MALICIOUS.value

    def test_silent_run_metrics(self, silent_run):
        log, metrics = silent_run
        assert metrics.tp == len(_observed_ghosts(log)) > 0
        assert metrics.fp == 0
        assert metrics.accuracy == 1.0
        assert min(metrics.detection_epochs) >= 6
        assert 6 <= metrics.mean_detection_epochs <= 30

    def test_answered_ghost_challenges_came_from_inside_the_beam(self, answering_run):
        scenario, log, metrics = answering_run
        ghosts = set(log.meta['ghost_ids'])
        challenges = {r.nonce: r for r in log.of_kind('challenge')}
        answered = [r for r in log.of_kind('response') if r.subject in ghosts and r.detail == 'accepted']
        assert answered
        for response in answered:
            challenge = challenges[response.nonce]
            aim = (challenge.aim_x, challenge.aim_y)
            assert beam_contains((challenge.pos_x, challenge.pos_y), aim,
                                 (response.pos_x, response.pos_y), scenario.channel)
            assert within_focus(aim, (response.pos_x, response.pos_y), scenario.channel)
        assert 0 < metrics.ghost_challenges_answered <= metrics.ghost_challenges

    def test_default_focus_keeps_transmitters_out(self, opportunistic_run):
        _, log, metrics = opportunistic_run
        assert metrics.ghost_challenges > 0
        assert metrics.ghost_challenges_answered < 0.10 * metrics.ghost_challenges
        assert log.meta['beam_focus_radius'] == 20.0

    def test_final_table_state_matches_last_logged_values(self, silent_run):
        log, _ = silent_run
        last = {}
        for record in log:
            if record.kind in ('trust', 'suspect', 'classification'):
                last[(record.observer, record.subject)] = (record.trust, record.category)
        state = {(row['observer'], row['subject']): (row['trust'], row['category'])
                 for row in log.meta['table_rows']}
        assert state == last
        assert {row['epoch'] for row in log.meta['table_rows']} == {log.rows[-1].epoch}
        keys = [(row['observer'], row['subject']) for row in log.meta['table_rows']]
        assert keys == sorted(keys)

    def test_colocated_run_confirms_ghosts(self):
        log, metrics = run(TestDataGenerator.colocated_scenario(duration_epochs=60))
        assert metrics.tp == len(_observed_ghosts(log)) > 0
        assert metrics.fp == 0


class TestDetectionTrends:
    SEEDS = range(10)

    def test_silent_ghosts_heard_long_enough_are_confirmed(self):
        eligible, confirmed = 0, 0
        for seed in self.SEEDS:
            log, _ = run(_trend_scenario(seed=seed, duration_epochs=50))
            ghosts = set(log.meta['ghost_ids'])
            heard = {}
            for record in log.of_kind('trust'):
                if record.subject in ghosts:
                    key = (record.observer, record.subject)
                    heard[key] = heard.get(key, 0) + 1
            long_heard = {subject for (_, subject), count in heard.items() if count >= 30}
            verdicts = identity_verdicts(log)
            eligible += len(long_heard)
            confirmed += sum(verdicts.get(g) == ClassificationCategory.MALICIOUS.value for g in long_heard)
            assert not [g for g in ghosts if verdicts.get(g) == ClassificationCategory.HONEST.value]
        assert eligible > 0
        assert confirmed >= 0.95 * eligible

    def test_opportunistic_answers_stay_rare(self):
        challenges, answered = 0, 0
        for seed in self.SEEDS:
            scenario = _trend_scenario(seed=seed, duration_epochs=40)
            scenario = replace(scenario, attack=replace(scenario.attack, policy=AttackerPolicy.OPPORTUNISTIC))
            _, metrics = run(scenario)
            challenges += metrics.ghost_challenges
            answered += metrics.ghost_challenges_answered
        assert challenges > 0
        assert answered < 0.10 * challenges

    def test_accuracy_and_detection_stable_across_density(self):
        accuracy, detection = {}, {}
        for fraction in (0.05, 0.10, 0.20, 0.30):
            runs = [run(_trend_scenario(seed=seed, sybil_fraction=fraction))[1] for seed in range(3)]
            accuracy[fraction] = np.mean([m.accuracy for m in runs])
            detection[fraction] = np.mean([m.mean_detection_epochs for m in runs])

        assert min(accuracy.values()) >= 0.80
        assert max(accuracy.values()) - min(accuracy.values()) <= 0.10
        assert all(5.0 <= d <= 30.0 for d in detection.values())
        assert max(detection.values()) / min(detection.values()) <= 2.0

    def test_larger_lambda_detects_no_sooner(self):
        detection, specificity = [], []
        for lambda_ in (0.05, 0.15, 0.30):
            runs = [run(with_parameter(_trend_scenario(seed=seed), 'lambda', lambda_))[1] for seed in range(3)]
            detection.append(np.mean([m.mean_detection_epochs for m in runs]))
            specificity.append(np.mean([m.specificity for m in runs]))

        assert detection == sorted(detection)
        assert specificity == sorted(specificity)
        assert detection[0] == pytest.approx(6.0)

    def test_desk_density_minute_runs_quickly(self):
        started = time.perf_counter()
        _, metrics = run(ScenarioConfig(duration_epochs=60))
        elapsed = time.perf_counter() - started
        assert metrics.tp > 0
        assert elapsed < 15.0
