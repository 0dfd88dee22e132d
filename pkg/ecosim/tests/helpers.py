from ecosim.ecosystem import EcosystemConfig, WorkloadConfig
from ecosim.events import EventLog
from ecosim.evolution import EvaluatedIndividual, GAConfig, PoolSnapshot
from ecosim.habitat import HabitatConfig, HabitatNetwork
from ecosim.model import Agent, AgentSequence, validate_description, validate_request
from ecosim.registry import AgentRegistry


def agents_of(*descriptions, uses=None):
    uses = uses or {}
    return [Agent(i, validate_description(tokens), 0, [0], uses=uses.get(i, 0))
            for i, tokens in enumerate(descriptions)]


def pool_of(*descriptions, uses=None, sequences=()):
    return PoolSnapshot.from_agents(agents_of(*descriptions, uses=uses), sequences)


def request_of(*tokens, habitat=0, round=0):
    return validate_request(tokens, habitat, round)


def individual(semantic_score, usage_score, length, fitness=0.0, first=0):
    return EvaluatedIndividual(AgentSequence((first,) * length), semantic_score,
                               usage_score, fitness)


def network_of(size, cfg=None, migration_enabled=True, communities=None):
    network = HabitatNetwork(cfg or HabitatConfig(), AgentRegistry(), EventLog(),
                             migration_enabled=migration_enabled)
    for i in range(size):
        network.add_habitat(communities[i] if communities else 0)
    return network


def connect_both(network, pairs, p=0.5):
    for source, target in pairs:
        network.connect(source, target, p)
        network.connect(target, source, p)


def place_agent(network, habitat_id, tokens, escapes_remaining=2):
    agent = network.registry.create(validate_description(tokens), habitat_id, escapes_remaining)
    network.habitat(habitat_id).pool.add(agent)
    return agent


def small_config(**kwargs):
    """A configuration that keeps full simulations within unit-test time."""
    settings = dict(
        ga=GAConfig(population_size=12, generations_max=15),
        workload=WorkloadConfig(communities=2, users_per_community=3),
    )
    settings.update(kwargs)
    return EcosystemConfig(**settings).validate()
