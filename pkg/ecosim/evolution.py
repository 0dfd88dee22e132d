import itertools
import logging
import math
from dataclasses import dataclass, field, fields, replace
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from cacheout import Cache

from .exception import ConfigError, OracleSizeError, SeedingError
from .model import Agent, AgentSequence, Request, SemanticDescription, coverage
from . import rng as rngs


log = logging.getLogger(__name__)
FITNESS_CACHE_SIZE = 4096
SEED_LENGTH_MAX = 4
ORACLE_POOL_MAX = 8
ORACLE_LENGTH_MAX = 4


@dataclass(frozen=True)
class GAConfig:
    population_size: int = 50
    generations_max: int = 100
    fitness_threshold: float = 0.95
    tournament_size: int = 2
    crossover_rate: float = 0.7
    mutation_insert_rate: float = 0.1
    mutation_delete_rate: float = 0.1
    mutation_replace_rate: float = 0.1
    max_length: int = 16
    parsimony: float = 0.02
    eval_probability: float = 1.0
    usage_halfsat: int = 5
    usage_weight_max: float = 0.3
    rng_seed: int = 0

    def validate(self, prefix: str = 'ga') -> 'GAConfig':
        def check(name, ok, message):
            if not ok:
                raise ConfigError(f'{prefix}.{name}', message)
        check('population_size', self.population_size >= 1, 'must be positive')
        check('generations_max', self.generations_max >= 1, 'must be positive')
        check('fitness_threshold', 0 < self.fitness_threshold <= 1, 'must be in (0, 1]')
        check('tournament_size', self.tournament_size >= 2, 'must be at least 2')
        for name in ('crossover_rate', 'mutation_insert_rate',
                     'mutation_delete_rate', 'mutation_replace_rate'):
            check(name, 0 <= getattr(self, name) <= 1, 'must be in [0, 1]')
        check('max_length', self.max_length >= 1, 'must be positive')
        check('parsimony', self.parsimony >= 0, 'must not be negative')
        check('eval_probability', 0 < self.eval_probability <= 1, 'must be in (0, 1]')
        check('usage_halfsat', self.usage_halfsat >= 1, 'must be positive')
        check('usage_weight_max', 0 <= self.usage_weight_max < 1, 'must be in [0, 1)')
        return self

    @classmethod
    def field_names(cls) -> List[str]:
        return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class EvaluatedIndividual:
    seq: AgentSequence
    semantic_score: float
    usage_score: float
    fitness: float
    skipped: bool = False

    @property
    def length(self) -> int:
        return len(self.seq)

    @property
    def objectives(self) -> Tuple[float, float, int]:
        return (self.semantic_score, self.usage_score, -self.length)


@dataclass
class Population:
    request: Request
    individuals: List[EvaluatedIndividual]
    generation: int
    rng: object

    @property
    def mean_length(self) -> float:
        return sum(i.length for i in self.individuals) / len(self.individuals)

    def best(self) -> EvaluatedIndividual:
        return self.individuals[_best_index(self.individuals, range(len(self.individuals)))]


@dataclass(frozen=True)
class PoolSnapshot:
    """Immutable view of a habitat's pool taken before evolution starts.

    `descriptions` and `uses` cover the local agents and every member of the
    registered sequences, wherever those members live."""
    agents: Tuple[int, ...]
    sequences: Tuple[AgentSequence, ...]
    descriptions: Mapping[int, SemanticDescription]
    uses: Mapping[int, int]

    @classmethod
    def from_agents(cls, agents: Iterable[Agent], sequences: Iterable[AgentSequence] = (),
                    members: Iterable[Agent] = ()) -> 'PoolSnapshot':
        local = sorted(agents, key=lambda a: a.id)
        everyone = {a.id: a for a in itertools.chain(local, members)}
        return cls(tuple(a.id for a in local), tuple(sequences),
                   {i: a.description for i, a in everyone.items()},
                   {i: a.uses for i, a in everyone.items()})

    def __len__(self) -> int:
        return len(self.agents)

    @property
    def mean_description_size(self) -> float:
        if not self.agents:
            return 1.0
        return sum(len(self.descriptions[i]) for i in self.agents) / len(self.agents)

    def relevant_sequences(self, req: Request) -> List[AgentSequence]:
        relevant = []
        for seq in self.sequences:
            if any(self.descriptions[i].tokens & req.tokens for i in seq.agents):
                relevant.append(seq)
        return relevant


@dataclass
class EvolutionResult:
    best: EvaluatedIndividual
    generations_used: int
    trajectory: List[Tuple[float, float]]
    pareto_front: List[EvaluatedIndividual] = field(default_factory=list)


def parsimony_baseline(req: Request, mean_description_size: float) -> int:
    return math.ceil(len(req.tokens) / mean_description_size)


def score_sequence(seq: AgentSequence, req: Request, resolve: Mapping[int, SemanticDescription],
                   uses: Mapping[int, int], cfg: GAConfig,
                   mean_description_size: float) -> EvaluatedIndividual:
    """Fitness of a sequence with the reduced-evaluation mechanism left out."""
    semantic_score = coverage(seq, req, resolve) / len(req.tokens)
    k = cfg.usage_halfsat
    member_uses = [uses.get(i, 0) for i in seq.agents]
    least = min(member_uses)
    w_eff = cfg.usage_weight_max * least / (least + k)
    usage_score = sum(u / (u + k) for u in member_uses) / len(member_uses)
    raw = (1 - w_eff) * semantic_score + w_eff * usage_score
    excess = max(0, len(seq) - parsimony_baseline(req, mean_description_size))
    fitness = max(0.0, raw - cfg.parsimony * excess)
    return EvaluatedIndividual(seq, semantic_score, usage_score, fitness)


def evaluate_fitness(seq: AgentSequence, req: Request, resolve: Mapping[int, SemanticDescription],
                     uses: Mapping[int, int], cfg: GAConfig, gen_mean_length: float, rng,
                     mean_description_size: float = 1.0) -> EvaluatedIndividual:
    scored = score_sequence(seq, req, resolve, uses, cfg, mean_description_size)
    return _maybe_skip(scored, cfg, gen_mean_length, rng)


def _maybe_skip(scored: EvaluatedIndividual, cfg: GAConfig, gen_mean_length: float,
                rng) -> EvaluatedIndividual:
    if cfg.eval_probability < 1 and scored.length > gen_mean_length:
        if rng.random() >= cfg.eval_probability:
            return replace(scored, fitness=0.0, skipped=True)
    return scored


class Evaluator:
    """Scores sequences for one request against one pool snapshot.

    Scores depend only on the agent-id list, so they are memoised for the
    lifetime of the Population."""
    def __init__(self, pool: PoolSnapshot, req: Request, cfg: GAConfig):
        self.pool = pool
        self.req = req
        self.cfg = cfg
        self.mean_description_size = pool.mean_description_size
        self._scores = Cache(maxsize=FITNESS_CACHE_SIZE, ttl=0, default=None)
        self.evaluations = 0

    def score(self, seq: AgentSequence) -> EvaluatedIndividual:
        cached: Optional[EvaluatedIndividual] = self._scores.get(seq.agents)
        if cached is None:
            self.evaluations += 1
            cached = score_sequence(seq, self.req, self.pool.descriptions, self.pool.uses,
                                    self.cfg, self.mean_description_size)
            self._scores.set(seq.agents, cached)
        if cached.seq.provenance != seq.provenance:
            return replace(cached, seq=seq)
        return cached

    def evaluate(self, seq: AgentSequence, gen_mean_length: float, rng) -> EvaluatedIndividual:
        return _maybe_skip(self.score(seq), self.cfg, gen_mean_length, rng)

    def evaluate_all(self, seqs: Sequence[AgentSequence], rng,
                     exempt: Iterable[int] = ()) -> List[EvaluatedIndividual]:
        exempt = set(exempt)
        mean_length = sum(len(s) for s in seqs) / len(seqs)
        return [self.score(s) if i in exempt else self.evaluate(s, mean_length, rng)
                for i, s in enumerate(seqs)]


def dominates(a: EvaluatedIndividual, b: EvaluatedIndividual) -> bool:
    va, vb = a.objectives, b.objectives
    return all(x >= y for x, y in zip(va, vb)) and any(x > y for x, y in zip(va, vb))


def pareto_front(individuals: Sequence[EvaluatedIndividual]) -> List[EvaluatedIndividual]:
    unique: Dict[Tuple[int, ...], EvaluatedIndividual] = {}
    for individual in individuals:
        if not individual.skipped:
            unique.setdefault(individual.seq.agents, individual)
    candidates = list(unique.values())
    return [a for a in candidates if not any(dominates(b, a) for b in candidates)]


def _best_index(individuals: Sequence[EvaluatedIndividual], indices: Iterable[int]) -> int:
    return min(indices, key=lambda i: (-individuals[i].fitness, individuals[i].length, i))


def tournament_select(pop: Population, cfg: GAConfig, rng) -> AgentSequence:
    n = len(pop.individuals)
    contestants = [rngs.randint(rng, 0, n) for _ in range(cfg.tournament_size)]
    return pop.individuals[_best_index(pop.individuals, contestants)].seq


def _merge_provenance(a: Tuple[int, ...], b: Tuple[int, ...]) -> Tuple[int, ...]:
    return a + tuple(h for h in b if h not in a)


def crossover(p1: AgentSequence, p2: AgentSequence, rng, max_length: int) -> AgentSequence:
    """Head of p1 joined to tail of p2.

    Provenance comes only from the parents that contribute agents."""
    c1 = rngs.randint(rng, 0, len(p1) + 1)
    c2 = rngs.randint(rng, 0, len(p2) + 1)
    head, tail = p1.agents[:c1], p2.agents[c2:]
    if not head and not tail:
        head = p1.agents[:1]
    provenance = p1.provenance if head else ()
    if tail and len(head) < max_length:
        provenance = _merge_provenance(provenance, p2.provenance)
    return AgentSequence((head + tail)[:max_length], provenance)


def mutate(seq: AgentSequence, pool: Sequence[int], cfg: GAConfig, rng) -> AgentSequence:
    agents = list(seq.agents)
    inherited = [True] * len(agents)
    if rng.random() < cfg.mutation_insert_rate and len(agents) < cfg.max_length:
        position = rngs.randint(rng, 0, len(agents) + 1)
        agents.insert(position, rngs.pick(rng, pool))
        inherited.insert(position, False)
    if rng.random() < cfg.mutation_delete_rate and len(agents) > 1:
        position = rngs.randint(rng, 0, len(agents))
        del agents[position]
        del inherited[position]
    if rng.random() < cfg.mutation_replace_rate:
        position = rngs.randint(rng, 0, len(agents))
        agents[position] = rngs.pick(rng, pool)
        inherited[position] = False
    if agents == list(seq.agents):
        return seq
    return AgentSequence(tuple(agents), seq.provenance if any(inherited) else ())


def seed_population(pool: PoolSnapshot, req: Request, cfg: GAConfig, rng,
                    evaluator: Optional[Evaluator] = None) -> Population:
    if len(pool) == 0:
        raise SeedingError(f'Empty pool, cannot seed a population for request {sorted(req.tokens)}')
    evaluator = evaluator or Evaluator(pool, req, cfg)
    relevant = pool.relevant_sequences(req)
    seed_length_max = min(SEED_LENGTH_MAX, cfg.max_length)
    seqs = []
    for _ in range(cfg.population_size):
        if relevant and rng.random() < 0.5:
            registered = rngs.pick(rng, relevant)
            seqs.append(AgentSequence(registered.agents[:cfg.max_length], registered.provenance))
            continue
        length = rngs.randint(rng, 1, seed_length_max + 1)
        seqs.append(AgentSequence(tuple(rngs.pick(rng, pool.agents) for _ in range(length))))
    return Population(req, evaluator.evaluate_all(seqs, rng), 0, rng)


def evolve_generation(pop: Population, pool: PoolSnapshot, cfg: GAConfig, rng=None,
                      evaluator: Optional[Evaluator] = None) -> Population:
    rng = rng if rng is not None else pop.rng
    evaluator = evaluator or Evaluator(pool, pop.request, cfg)
    seqs = [pop.best().seq]
    while len(seqs) < cfg.population_size:
        child = tournament_select(pop, cfg, rng)
        if rng.random() < cfg.crossover_rate:
            child = crossover(child, tournament_select(pop, cfg, rng), rng, cfg.max_length)
        seqs.append(mutate(child, pool.agents, cfg, rng))
    individuals = evaluator.evaluate_all(seqs, rng, exempt=[0])
    return Population(pop.request, individuals, pop.generation + 1, rng)


def _better(a: EvaluatedIndividual, b: Optional[EvaluatedIndividual]) -> bool:
    if b is None:
        return True
    return (a.fitness, -a.length) > (b.fitness, -b.length)


def run_evolution(pool: PoolSnapshot, req: Request, cfg: GAConfig, rng=None) -> EvolutionResult:
    rng = rng if rng is not None else rngs.stream(cfg.rng_seed)
    evaluator = Evaluator(pool, req, cfg)
    pop = seed_population(pool, req, cfg, rng, evaluator)
    best = None
    trajectory = []
    while True:
        current = pop.best()
        if _better(current, best):
            best = current
        trajectory.append((current.fitness, pop.mean_length))
        if best.fitness >= cfg.fitness_threshold or pop.generation >= cfg.generations_max:
            break
        pop = evolve_generation(pop, pool, cfg, rng, evaluator)
    log.debug(f'evolved: request={sorted(req.tokens)}, fitness={best.fitness:.4f}, '
              f'generations={pop.generation}, evaluations={evaluator.evaluations}')
    return EvolutionResult(best, pop.generation, trajectory, pareto_front(pop.individuals))


def brute_force_oracle(agents: Sequence[Agent], req: Request, cfg: GAConfig,
                       l_bound: int) -> Tuple[float, AgentSequence]:
    """Best fitness over every sequence of length 1 to `l_bound` drawn from `agents`.

    Candidates are enumerated in shortlex order: shorter sequences first, then
    lexicographically by agent id. Ties keep the first maximum found, so the
    answer is the shortest, then lexicographically least, optimal sequence."""
    if not agents:
        raise OracleSizeError('Oracle needs at least one agent')
    if len(agents) > ORACLE_POOL_MAX:
        raise OracleSizeError(f'Oracle pool of {len(agents)} agents exceeds {ORACLE_POOL_MAX}')
    if l_bound < 1 or l_bound > ORACLE_LENGTH_MAX:
        raise OracleSizeError(f'Oracle length bound {l_bound} outside [1, {ORACLE_LENGTH_MAX}]')
    pool = PoolSnapshot.from_agents(agents)
    mean_description_size = pool.mean_description_size
    best_fitness, best_agents = -1.0, None
    for length in range(1, l_bound + 1):
        for candidate in itertools.product(pool.agents, repeat=length):
            scored = score_sequence(AgentSequence(candidate), req, pool.descriptions, pool.uses,
                                    cfg, mean_description_size)
            if scored.fitness > best_fitness:
                best_fitness, best_agents = scored.fitness, candidate
    return best_fitness, AgentSequence(best_agents)
