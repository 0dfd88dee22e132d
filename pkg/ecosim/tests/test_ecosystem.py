from concurrent.futures import ProcessPoolExecutor
import os

import pytest

from ecosim.ecosystem import (
    Ecosystem, EcosystemConfig, ExecutionRecord, JoinConfig, WorkloadConfig, WorkloadModel,
    build_ecosystem, mean_generations_to_threshold, migration_feedback, run_simulation, step_round,
)
from ecosim.events import EventType, is_ordered, replay_uses
from ecosim.evolution import EvaluatedIndividual, GAConfig
from ecosim.exception import ConfigError
from ecosim.habitat import Habitat, Strategy
from ecosim.model import AgentSequence, validate_description
from ecosim import rng as rngs
from ecosim.__main__ import compare_runs
from ecosim.metrics import clustering_coefficient, format_csv, intra_community_mass, \
    random_clustering_baseline
from .helpers import request_of, small_config


def types_of(events):
    return [e.type for e in events]


def community_alignment(seed):
    """(intra-community mass reaches 0.7, clustering beats a random graph) after 200 rounds."""
    eco = run_simulation(EcosystemConfig(), seed, 200).ecosystem
    g = eco.network.graph()
    baseline = random_clustering_baseline(g, 100, rngs.stream(seed, rngs.BASELINE))
    return intra_community_mass(eco) >= 0.7, clustering_coefficient(g) > baseline


def single_user_config(**kwargs):
    return small_config(
        workload=WorkloadConfig(communities=1, users_per_community=1, request_rate=1.0,
                                request_size_min=1, request_size_max=1, noise_rate=0.0,
                                description_size_min=1, description_size_max=1,
                                community_tokens=((1,),)),
        **kwargs)


def test_workload_model():
    workload = WorkloadModel.from_config(WorkloadConfig(communities=3, community_pool_size=8), 64)
    assert [c.tokens for c in workload.communities] == [
        tuple(range(0, 8)), tuple(range(8, 16)), tuple(range(16, 24))]

    workload.community(1).members.append(4)
    assert workload.community_of(4) == 1
    assert workload.community_of(5) is None

    rng = rngs.stream(1)
    for _ in range(50):
        desc = workload.sample_description(2, rng)
        assert 1 <= len(desc) <= 3
        assert desc.tokens <= set(range(16, 24))


def test_workload_requests_stay_in_community_without_noise():
    workload = WorkloadModel.from_config(WorkloadConfig(noise_rate=0.0), 64)
    workload.community(0).members.append(0)
    habitat = Habitat(0, 0)
    rng = rngs.stream(2)
    for _ in range(50):
        req = workload.sample_request(habitat, 7, rng)
        assert 1 <= len(req) <= 5
        assert req.tokens <= set(range(0, 8))
        assert req.round == 7


def test_config_validation():
    with pytest.raises(ConfigError) as e:
        EcosystemConfig(ga=GAConfig(crossover_rate=1.5)).validate()
    assert e.value.field == 'ga.crossover_rate'

    with pytest.raises(ConfigError) as e:
        EcosystemConfig(workload=WorkloadConfig(community_tokens=((1,), (2,), (3,), (4,)))).validate()
    assert e.value.field == 'workload.community.3.tokens'

    with pytest.raises(ConfigError):
        EcosystemConfig(execution_threshold=1.5).validate()

    assert EcosystemConfig().theta_exec == 0.95
    assert EcosystemConfig(execution_threshold=0.5).theta_exec == 0.5


def test_build_ecosystem():
    cfg = EcosystemConfig(workload=WorkloadConfig(communities=2, users_per_community=5))
    eco = build_ecosystem(cfg, 1)

    assert len(eco.habitats) == 10
    originals = [a for a in eco.registry.agents.values() if a.lineage is None]
    assert len(originals) == 30
    assert sorted(len(c.members) for c in eco.workload.communities) == [5, 5]
    for agent in originals:
        tokens = eco.workload.community(eco.habitats[agent.owner].community).tokens
        assert agent.description.tokens <= set(tokens)
    assert is_ordered(eco.event_log)
    assert {e.round for e in eco.event_log} == {0}


def test_build_single_user():
    cfg = small_config(workload=WorkloadConfig(communities=1, users_per_community=1))
    eco = build_ecosystem(cfg, 1)
    assert len(eco.habitats) == 1
    assert eco.network.all_connections() == []
    assert eco.registry.alive_count() == 3


def test_build_is_deterministic():
    assert build_ecosystem(small_config(), 5).event_log.to_jsonl() == \
        build_ecosystem(small_config(), 5).event_log.to_jsonl()


def test_quiet_round():
    cfg = small_config(workload=WorkloadConfig(communities=2, users_per_community=3,
                                               request_rate=0.0))
    eco = build_ecosystem(cfg, 1)
    events = len(eco.event_log)
    agents = eco.registry.alive_count()

    step_round(eco)
    assert eco.round == 1
    assert len(eco.event_log) == events
    assert eco.registry.alive_count() == agents
    assert len(eco.metrics) == 1
    assert eco.metrics[0].executed_count == 0
    assert eco.metrics[0].mean_best_fitness == 0.0


def test_single_habitat_executes_without_migrating():
    eco = build_ecosystem(single_user_config(), 1)
    step_round(eco)

    log_types = types_of(eco.event_log)
    assert EventType.EXECUTED in log_types
    assert EventType.MIGRATED not in log_types
    [executed] = eco.event_log.of_type(EventType.EXECUTED)
    assert executed.payload['fitness'] >= 0.95
    assert len(eco.habitats[0].pool.sequences) == 1
    assert eco.metrics[0].executed_count == 1
    for agent_id, uses in replay_uses(eco.event_log).items():
        assert eco.registry.agent(agent_id).uses == uses


def test_requests_seen_unused_counts_non_members():
    eco = build_ecosystem(single_user_config(), 1)
    step_round(eco)
    [executed] = eco.event_log.of_type(EventType.EXECUTED)
    members = set(executed.payload['agents'])
    for agent in eco.habitats[0].pool.sorted_agents():
        if agent.id in members:
            assert agent.requests_seen_unused == 0
            assert agent.uses == 1
        else:
            assert agent.requests_seen_unused == 1
            assert agent.uses == 0


def test_empty_pool_skips_request():
    eco = build_ecosystem(single_user_config(agents_per_user=0), 1)
    step_round(eco)
    [skipped] = eco.event_log.of_type(EventType.SKIPPED)
    assert skipped.habitat == 0
    assert eco.records == []


def feedback_ecosystem(size):
    eco = Ecosystem(small_config(), 0)
    for _ in range(size):
        eco.network.add_habitat(0)
    return eco


def executed_record(eco, h, agents, provenance=()):
    seq = AgentSequence(tuple(a.id for a in agents), provenance)
    best = EvaluatedIndividual(seq, 1.0, 0.0, 1.0)
    return ExecutionRecord(request_of(1, habitat=h, round=1), best, 0, True)


def test_feedback_for_local_sequence():
    eco = feedback_ecosystem(2)
    agent = eco.registry.create(validate_description({1}), 1, 2)
    assert migration_feedback(eco, executed_record(eco, 1, [agent], (1,))) == []
    assert eco.network.all_connections() == []


def test_feedback_reinforces_direct_migration():
    eco = feedback_ecosystem(2)
    eco.network.connect(0, 1, 0.5)
    original = eco.registry.create(validate_description({1}), 0, 2)
    copy = eco.registry.copy(original, 1, 2)

    assert migration_feedback(eco, executed_record(eco, 1, [copy], (1,))) == [(0, 1)]
    assert eco.network.connection(0, 1).p == pytest.approx(0.6)


def test_feedback_links_multi_hop_origin():
    eco = feedback_ecosystem(3)
    eco.network.connect(0, 2, 0.5)
    eco.network.connect(2, 1, 0.5)
    original = eco.registry.create(validate_description({1}), 0, 2)
    hop = eco.registry.copy(original, 2, 2)
    arrived = eco.registry.copy(hop, 1, 2)
    assert arrived.migration_history == [0, 2, 1]

    migration_feedback(eco, executed_record(eco, 1, [arrived], (1,)))
    assert eco.network.connection(0, 1).p == 0.5
    assert eco.network.connection(2, 1).p == pytest.approx(0.6)
    [created] = eco.event_log.of_type(EventType.LINK_CREATED)[-1:]
    assert created.payload == {'source': 0, 'target': 1, 'p': 0.5}
    assert created.habitat == 1


def test_feedback_credits_sequence_provenance():
    eco = feedback_ecosystem(3)
    agent = eco.registry.create(validate_description({1}), 1, 2)
    migration_feedback(eco, executed_record(eco, 1, [agent], (2, 1)))
    assert eco.network.connection(2, 1).p == 0.5


def test_run_simulation_rounds():
    result = run_simulation(small_config(), 1, 1)
    assert len(result.metrics) == 1
    assert result.ecosystem.round == 1

    with pytest.raises(ConfigError):
        run_simulation(small_config(), 1, 0)


def test_run_simulation_invariants():
    result = run_simulation(small_config(), 4, 12)
    eco = result.ecosystem

    assert is_ordered(result.event_log)
    uses = replay_uses(result.event_log)
    for agent in eco.registry.agents.values():
        assert agent.uses == uses[agent.id]
    for record in eco.records:
        if record.executed:
            assert record.best.fitness >= eco.cfg.theta_exec
        assert record.best.length <= eco.cfg.ga.max_length
    for conn in eco.network.all_connections():
        assert eco.cfg.habitat.p_min <= conn.p <= 1.0
    threshold = eco.cfg.habitat.unused_threshold
    for h in eco.network.sorted_habitats():
        keys = {s.agents for s in h.pool.sequences}
        assert set(h.pool.unused) == set(h.pool.arrivals) <= keys
        assert all(count < threshold for count in h.pool.unused.values())
        assert all(eco.registry.alive(i) for key in keys for i in key)
    assert [row.round for row in result.metrics] == list(range(1, 13))


def test_run_simulation_is_deterministic():
    first = run_simulation(small_config(), 9, 10)
    second = run_simulation(small_config(), 9, 10)
    assert first.event_log.to_jsonl() == second.event_log.to_jsonl()
    assert format_csv(first.metrics) == format_csv(second.metrics)


def test_run_without_migration():
    result = run_simulation(small_config(migration_enabled=False), 2, 10)
    log_types = set(types_of(result.event_log))
    assert EventType.MIGRATED not in log_types
    assert EventType.LINK_CREATED not in log_types
    assert EventType.ESCAPE not in log_types
    assert all(a.lineage is None for a in result.ecosystem.registry.agents.values())


def test_late_joiners():
    cfg = small_config(join=JoinConfig(late_users=2, start_round=2, strategy=Strategy.CLONE))
    result = run_simulation(cfg, 3, 4)
    eco = result.ecosystem

    assert eco.joined_late == 2
    assert len(eco.habitats) == 8
    assert 6 in eco.workload.community(0).members
    assert 7 in eco.workload.community(1).members
    assert eco.network.connection(6, min(eco.workload.community(0).members)) is not None
    assert is_ordered(result.event_log)


def test_mean_generations_to_threshold():
    def record(round, generations, executed):
        best = EvaluatedIndividual(AgentSequence((0,)), 1.0, 0.0, 1.0)
        return ExecutionRecord(request_of(1, round=round), best, generations, executed)

    records = [record(1, 10, True), record(2, 4, True), record(3, 2, True), record(3, 50, False)]
    assert mean_generations_to_threshold(records) == pytest.approx(16 / 3)
    assert mean_generations_to_threshold(records, after_round=1) == 3.0
    assert mean_generations_to_threshold(records, after_round=3) is None

    assert mean_generations_to_threshold(records, censor_at=100) == pytest.approx(116 / 4)
    assert mean_generations_to_threshold(records, after_round=2, censor_at=100) == 51.0
    assert mean_generations_to_threshold(records, after_round=3, censor_at=100) is None


@pytest.mark.slow
def test_parallel_evolution_does_not_change_output():
    cfg = small_config()
    serial = run_simulation(cfg, 6, 15, threads=1)
    parallel = run_simulation(cfg, 6, 15, threads=8)
    assert serial.event_log.to_jsonl() == parallel.event_log.to_jsonl()
    assert format_csv(serial.metrics) == format_csv(parallel.metrics)


@pytest.mark.slow
def test_migration_accelerates_adaptation():
    report = compare_runs(EcosystemConfig(), list(range(1, 21)), rounds=150, warmup=50,
                          jobs=os.cpu_count() or 1)
    assert all(pair['on'] is not None and pair['off'] is not None for pair in report['pairs'])
    assert report['ratio'] <= 0.8

@pytest.mark.slow
def test_topology_follows_communities():
    with ProcessPoolExecutor(max_workers=os.cpu_count() or 1) as executor:
        outcomes = list(executor.map(community_alignment, range(1, 21)))
    assert sum(aligned for aligned, _ in outcomes) >= 16
    assert sum(clustered for _, clustered in outcomes) >= 16

@pytest.mark.slow
def test_parsimony_shortens_sequences():
    shorter = 0
    for seed in range(1, 21):
        lengths = []
        for parsimony in (0.05, 0.0):
            cfg = EcosystemConfig(ga=GAConfig(parsimony=parsimony))
            result = run_simulation(cfg, seed, 100)
            lengths.append(result.metrics[-1].mean_sequence_length)
            assert all(r.best.length <= cfg.ga.max_length for r in result.ecosystem.records)
        if lengths[0] < lengths[1]:
            shorter += 1
    assert shorter >= 18
