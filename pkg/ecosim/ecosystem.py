import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .events import EventLog, EventType, Phase
from .evolution import EvaluatedIndividual, EvolutionResult, GAConfig, PoolSnapshot, run_evolution
from .exception import ConfigError
from .habitat import Habitat, HabitatConfig, HabitatNetwork, JoinStrategy, Strategy
from .metrics import MetricsRow, snapshot_row
from .model import Request, SemanticDescription, redundant_count, validate_description
from .registry import AgentRegistry
from . import rng as rngs


log = logging.getLogger(__name__)


@dataclass(frozen=True)
class WorkloadConfig:
    communities: int = 3
    users_per_community: int = 5
    community_pool_size: int = 8
    request_rate: float = 0.3
    request_size_min: int = 2
    request_size_max: int = 5
    noise_rate: float = 0.1
    description_size_min: int = 1
    description_size_max: int = 3
    community_tokens: Tuple[Tuple[int, ...], ...] = ()

    def validate(self, alphabet_size: int, prefix: str = 'workload') -> 'WorkloadConfig':
        def check(name, ok, message):
            if not ok:
                raise ConfigError(f'{prefix}.{name}', message)
        check('communities', self.communities >= 1, 'must be positive')
        check('users_per_community', self.users_per_community >= 1, 'must be positive')
        check('community_pool_size', 1 <= self.community_pool_size <= alphabet_size,
              'must be in [1, alphabet_size]')
        check('request_rate', 0 <= self.request_rate <= 1, 'must be in [0, 1]')
        check('request_size_min', self.request_size_min >= 1, 'must be positive')
        check('request_size_max', self.request_size_max >= self.request_size_min,
              'must not be below request_size_min')
        check('noise_rate', 0 <= self.noise_rate <= 1, 'must be in [0, 1]')
        check('description_size_min', self.description_size_min >= 1, 'must be positive')
        check('description_size_max', self.description_size_max >= self.description_size_min,
              'must not be below description_size_min')
        for index, tokens in enumerate(self.community_tokens):
            name = f'community.{index}.tokens'
            check(name, index < self.communities, 'no such community')
            if tokens:
                check(name, all(0 <= t < alphabet_size for t in tokens),
                      f'tokens must be in [0, {alphabet_size})')
        return self


@dataclass(frozen=True)
class JoinConfig:
    late_users: int = 0
    start_round: int = 10
    strategy: Strategy = Strategy.RANDOM

    def validate(self, prefix: str = 'join') -> 'JoinConfig':
        if self.late_users < 0:
            raise ConfigError(f'{prefix}.late_users', 'must not be negative')
        if self.start_round < 1:
            raise ConfigError(f'{prefix}.start_round', 'must be positive')
        return self


@dataclass(frozen=True)
class EcosystemConfig:
    ga: GAConfig = field(default_factory=GAConfig)
    habitat: HabitatConfig = field(default_factory=HabitatConfig)
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    join: JoinConfig = field(default_factory=JoinConfig)
    alphabet_size: int = 64
    agents_per_user: int = 3
    execution_threshold: Optional[float] = None
    migration_enabled: bool = True

    @property
    def theta_exec(self) -> float:
        if self.execution_threshold is None:
            return self.ga.fitness_threshold
        return self.execution_threshold

    def validate(self) -> 'EcosystemConfig':
        if self.alphabet_size < 1:
            raise ConfigError('alphabet_size', 'must be positive')
        if self.agents_per_user < 0:
            raise ConfigError('agents_per_user', 'must not be negative')
        if self.execution_threshold is not None and not 0 <= self.execution_threshold <= 1:
            raise ConfigError('execution_threshold', 'must be in [0, 1]')
        self.ga.validate()
        self.habitat.validate()
        self.workload.validate(self.alphabet_size)
        self.join.validate()
        return self


@dataclass
class Community:
    id: int
    tokens: Tuple[int, ...]
    members: List[int] = field(default_factory=list)


@dataclass
class WorkloadModel:
    """Who belongs to which community, and what each community asks for."""
    communities: List[Community]
    request_rate: float
    request_size: Tuple[int, int]
    noise_rate: float
    description_size: Tuple[int, int]
    alphabet_size: int

    @classmethod
    def from_config(cls, cfg: WorkloadConfig, alphabet_size: int) -> 'WorkloadModel':
        communities = []
        for c in range(cfg.communities):
            explicit = cfg.community_tokens[c] if c < len(cfg.community_tokens) else ()
            tokens = tuple(sorted(set(explicit))) if explicit else \
                tuple(sorted({(c * cfg.community_pool_size + j) % alphabet_size
                              for j in range(cfg.community_pool_size)}))
            communities.append(Community(c, tokens))
        return cls(communities, cfg.request_rate,
                   (cfg.request_size_min, cfg.request_size_max), cfg.noise_rate,
                   (cfg.description_size_min, cfg.description_size_max), alphabet_size)

    def community(self, community_id: int) -> Community:
        return self.communities[community_id]

    def community_of(self, habitat_id: int) -> Optional[int]:
        for community in self.communities:
            if habitat_id in community.members:
                return community.id
        return None

    def sample_description(self, community_id: int, rng) -> SemanticDescription:
        tokens = self.community(community_id).tokens
        size = min(len(tokens), rngs.randint(rng, self.description_size[0], self.description_size[1] + 1))
        chosen = rng.choice(len(tokens), size=size, replace=False)
        return validate_description((tokens[int(i)] for i in chosen), self.alphabet_size)

    def sample_request(self, habitat: Habitat, round: int, rng) -> Request:
        pool = self.community(habitat.community).tokens
        outside = sorted(set(range(self.alphabet_size)) - set(pool))
        size = rngs.randint(rng, self.request_size[0], self.request_size[1] + 1)
        tokens = set()
        for _ in range(size):
            if outside and rng.random() < self.noise_rate:
                tokens.add(rngs.pick(rng, outside))
            else:
                tokens.add(rngs.pick(rng, pool))
        return Request(frozenset(tokens), habitat.id, round)


@dataclass
class ExecutionRecord:
    request: Request
    best: EvaluatedIndividual
    generations_used: int
    executed: bool
    redundant: int = 0

    @property
    def habitat(self) -> int:
        return self.request.origin_habitat

    @property
    def round(self) -> int:
        return self.request.round


class Ecosystem:
    """The union of the Habitats, plus the workload that drives them."""
    def __init__(self, cfg: EcosystemConfig, seed: int, threads: int = 1):
        self.cfg = cfg
        self.seed = seed
        self.threads = max(1, threads)
        self.round = 0
        self.registry = AgentRegistry()
        self.event_log = EventLog()
        self.network = HabitatNetwork(cfg.habitat, self.registry, self.event_log,
                                      migration_enabled=cfg.migration_enabled)
        self.workload = WorkloadModel.from_config(cfg.workload, cfg.alphabet_size)
        self.records: List[ExecutionRecord] = []
        self.metrics: List[MetricsRow] = []
        self.joined_late = 0

    @property
    def habitats(self) -> Dict[int, Habitat]:
        return self.network.habitats

    def snapshot(self, h: Habitat) -> PoolSnapshot:
        sequences = list(h.pool.sequences)
        members = sorted({i for s in sequences for i in s.agents})
        return PoolSnapshot.from_agents(h.pool.sorted_agents(), sequences,
                                        [self.registry.agent(i) for i in members])

    def add_user(self, community_id: int, strategy: JoinStrategy, rng) -> Habitat:
        h = self.network.join_network(community_id, strategy, rng)
        self.workload.community(community_id).members.append(h.id)
        return h

    def deploy_initial_agents(self, h: Habitat, rng):
        for _ in range(self.cfg.agents_per_user):
            self.network.deploy_agent(h, self.workload.sample_description(h.community, rng), rng)

    def _map(self, fn, jobs: Sequence) -> List:
        if self.threads == 1 or len(jobs) < 2:
            return [fn(job) for job in jobs]
        with ThreadPoolExecutor(max_workers=self.threads) as executor:
            return list(executor.map(fn, jobs))


def build_ecosystem(cfg: EcosystemConfig, seed: int, threads: int = 1) -> Ecosystem:
    cfg.validate()
    eco = Ecosystem(cfg, seed, threads)
    eco.event_log.at(0, Phase.SETUP)
    rng = rngs.stream(seed, rngs.BUILD)
    for user in range(cfg.workload.communities * cfg.workload.users_per_community):
        h = eco.add_user(user // cfg.workload.users_per_community, JoinStrategy.random(), rng)
        eco.deploy_initial_agents(h, rng)
    log.info(f'built: habitats={len(eco.habitats)}, agents={eco.registry.alive_count()}, seed={seed}')
    return eco


def _join_late_user(eco: Ecosystem):
    join = eco.cfg.join
    if eco.joined_late >= join.late_users or eco.round < join.start_round:
        return
    rng = rngs.stream(eco.seed, rngs.JOIN, eco.round)
    community_id = eco.joined_late % len(eco.workload.communities)
    strategy = JoinStrategy.random()
    members = eco.workload.community(community_id).members
    if join.strategy == Strategy.CLONE and members:
        strategy = JoinStrategy.clone(min(members))
    h = eco.add_user(community_id, strategy, rng)
    eco.deploy_initial_agents(h, rng)
    eco.joined_late += 1


def migration_feedback(eco: Ecosystem, record: ExecutionRecord) -> List[Tuple[int, int]]:
    """Reinforce or create the links an executed solution's parts arrived on."""
    h = record.habitat
    members = [eco.registry.agent(i) for i in sorted(set(record.best.seq.agents))]
    pairs = set()
    for origin in [a.creation_habitat for a in members] + list(record.best.seq.provenance):
        if origin != h and origin in eco.habitats:
            pairs.add((origin, h))
    for agent in members:
        if not agent.at_home and agent.location == h:
            pairs.add((agent.migration_history[-2], h))
    p0 = eco.cfg.habitat.initial_probability
    for source, target in sorted(pairs):
        if eco.network.connection(source, target) is None:
            eco.network.connect(source, target, p0, log_habitat=h)
        else:
            eco.network.reinforce(source, target, True, log_habitat=h)
    return sorted(pairs)


def step_round(eco: Ecosystem) -> Ecosystem:
    eco.round += 1
    r = eco.round
    events = eco.event_log
    network = eco.network

    events.at(r, Phase.SETUP)
    _join_late_user(eco)

    events.at(r, Phase.REQUESTS)
    rng = rngs.stream(eco.seed, rngs.REQUESTS, r)
    requests = []
    for h in network.sorted_habitats():
        if rng.random() < eco.workload.request_rate:
            req = eco.workload.sample_request(h, r, rng)
            requests.append(req)
            events.emit(EventType.REQUEST, h.id, tokens=sorted(req.tokens))

    events.at(r, Phase.EVOLUTION)
    pools = [(req, eco.snapshot(network.habitat(req.origin_habitat))) for req in requests]
    jobs = [(pool, req, rngs.stream(eco.seed, rngs.EVOLUTION, req.origin_habitat, r))
            for req, pool in pools if len(pool) > 0]

    def evolve(job) -> EvolutionResult:
        pool, req, job_rng = job
        return run_evolution(pool, req, eco.cfg.ga, job_rng)

    results = iter(eco._map(evolve, jobs))
    round_records = []
    for req, pool in pools:
        if len(pool) == 0:
            events.emit(EventType.SKIPPED, req.origin_habitat, reason='empty pool')
            log.warning(f'skipped: request at habitat {req.origin_habitat} with an empty pool')
            continue
        result = next(results)
        best = result.best
        redundant = redundant_count(best.seq, req, pool.descriptions)
        events.emit(EventType.EVOLVED, req.origin_habitat, fitness=best.fitness,
                    generations=result.generations_used, length=best.length,
                    redundant=redundant, pareto=len(result.pareto_front))
        round_records.append(ExecutionRecord(req, best, result.generations_used,
                                             best.fitness >= eco.cfg.theta_exec, redundant))

    events.at(r, Phase.APPLY)
    for record in round_records:
        h = network.habitat(record.habitat)
        seq = record.best.seq
        if network.register_sequence(h, seq):
            events.emit(EventType.REGISTERED, h.id, agents=list(seq.agents))
        members = set()
        if record.executed:
            members = set(seq.agents)
            events.emit(EventType.EXECUTED, h.id, agents=list(seq.agents),
                        fitness=record.best.fitness)
            for agent_id in sorted(members):
                agent = eco.registry.agent(agent_id)
                agent.uses += 1
                agent.requests_seen_unused = 0
        for agent in h.pool.sorted_agents():
            if agent.id not in members:
                agent.requests_seen_unused += 1
        h.pool.note_request(members)
    eco.records.extend(round_records)
    executed = [rec for rec in round_records if rec.executed]

    if eco.cfg.migration_enabled:
        events.at(r, Phase.FEEDBACK)
        for record in executed:
            migration_feedback(eco, record)

        events.at(r, Phase.MIGRATION)
        rng = rngs.stream(eco.seed, rngs.MIGRATION, r)
        for record in executed:
            h = network.habitat(record.habitat)
            network.migrate_copy(record.best.seq.with_provenance(h.id), h, rng)

    events.at(r, Phase.PRUNE)
    rng = rngs.stream(eco.seed, rngs.ESCAPE, r)
    for h in network.sorted_habitats():
        network.prune_unused(h, rng)
        network.prune_sequences(h)
        if eco.cfg.migration_enabled and len(eco.habitats) > 1 and network.is_isolated(h):
            events.emit(EventType.DISCONNECTED, h.id)
            log.warning(f'disconnected: {h}, rejoining at random')
            network.join_network(h.community, JoinStrategy.random(), rng, habitat=h)

    eco.metrics.append(snapshot_row(eco, round_records))
    log.info(f'round {r}: requests={len(requests)}, executed={len(executed)}, '
             f'agents={eco.registry.alive_count()}')
    return eco


@dataclass
class SimulationResult:
    ecosystem: Ecosystem
    event_log: EventLog
    metrics: List[MetricsRow]


def run_simulation(cfg: EcosystemConfig, seed: int, rounds: int, threads: int = 1) -> SimulationResult:
    if rounds < 1:
        raise ConfigError('rounds', 'must be positive')
    eco = build_ecosystem(cfg, seed, threads)
    for _ in range(rounds):
        step_round(eco)
    return SimulationResult(eco, eco.event_log, eco.metrics)


def mean_generations_to_threshold(records: Sequence[ExecutionRecord], after_round: int = 0,
                                  censor_at: Optional[int] = None) -> Optional[float]:
    """Mean generations over executed requests after `after_round`.

    With `censor_at` set, requests that never reached the threshold count too,
    at `censor_at` generations."""
    measured = [rec.generations_used if rec.executed else censor_at
                for rec in records
                if rec.round > after_round and (rec.executed or censor_at is not None)]
    if not measured:
        return None
    return sum(measured) / len(measured)


def measure_run(arm: Tuple[EcosystemConfig, int, int, int, int]) -> Dict[str, Any]:
    """One arm of a paired migration comparison, reduced to plain data."""
    cfg, seed, rounds, warmup, threads = arm
    result = run_simulation(cfg, seed, rounds, threads=threads)
    records = result.ecosystem.records
    return {
        'seed': seed,
        'migration_enabled': cfg.migration_enabled,
        'mean': mean_generations_to_threshold(records, warmup, censor_at=cfg.ga.generations_max),
        'executed_mean': mean_generations_to_threshold(records, warmup),
        'links_created': sum(1 for e in result.event_log if e.type == EventType.LINK_CREATED),
    }
