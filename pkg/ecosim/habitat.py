import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, List, Optional, Tuple, Union

import networkx as nx
from cacheout import Cache

from .events import EventLog, EventType
from .exception import ConfigError, UnknownHabitatError
from .model import Agent, AgentSequence, SemanticDescription
from .registry import AgentRegistry
from . import rng as rngs


log = logging.getLogger(__name__)
DELETED = 'DELETED'


@dataclass(frozen=True)
class HabitatConfig:
    p_min: float = 0.05
    learning_rate: float = 0.2
    initial_probability: float = 0.5
    initial_links: int = 2
    min_escape_range: int = 2
    unused_threshold: int = 10
    decay_on_escape: bool = False

    def validate(self, prefix: str = 'habitat') -> 'HabitatConfig':
        def check(name, ok, message):
            if not ok:
                raise ConfigError(f'{prefix}.{name}', message)
        check('p_min', 0 <= self.p_min <= 1, 'must be in [0, 1]')
        check('learning_rate', 0 < self.learning_rate < 1, 'must be in (0, 1)')
        check('initial_probability', self.p_min <= self.initial_probability <= 1,
              'must be in [p_min, 1]')
        check('initial_links', self.initial_links >= 1, 'must be positive')
        check('min_escape_range', self.min_escape_range >= 1, 'must be positive')
        check('unused_threshold', self.unused_threshold >= 1, 'must be positive')
        return self


@dataclass
class Connection:
    source: int
    target: int
    p: float


def hebbian_update(conn: Connection, success: bool, eta: float) -> float:
    """Move the migration probability toward 1 on success, toward 0 on failure."""
    if success:
        conn.p = conn.p + eta * (1 - conn.p)
    else:
        conn.p = conn.p * (1 - eta)
    return conn.p


class AgentPool:
    """The Agents and registered Agent-sequences held at a Habitat.

    A sequence that migrated in remembers the Habitat it came from and counts
    the local requests it has gone without being used."""
    agents: Dict[int, Agent]
    sequences: List[AgentSequence]

    def __init__(self):
        self.agents = {}
        self.sequences = []
        self._sequence_keys = set()
        self.arrivals: Dict[Tuple[int, ...], int] = {}
        self.unused: Dict[Tuple[int, ...], int] = {}

    def add(self, agent: Agent):
        self.agents[agent.id] = agent

    def remove(self, agent_id: int) -> Agent:
        return self.agents.pop(agent_id)

    def register(self, seq: AgentSequence, arrived_from: Optional[int] = None) -> bool:
        if seq.agents in self._sequence_keys:
            return False
        self._sequence_keys.add(seq.agents)
        self.sequences.append(seq)
        if arrived_from is not None:
            self.arrivals[seq.agents] = arrived_from
            self.unused[seq.agents] = 0
        return True

    def unregister(self, key: Tuple[int, ...]) -> Optional[int]:
        """Drop a registered sequence; returns the Habitat it arrived from, if any."""
        self._sequence_keys.discard(key)
        self.sequences = [s for s in self.sequences if s.agents != key]
        self.unused.pop(key, None)
        return self.arrivals.pop(key, None)

    def note_request(self, used: Iterable[int]):
        """Count one local request against every migrated-in sequence it did not use."""
        used = set(used)
        for key in self.unused:
            if used.intersection(key):
                self.unused[key] = 0
            else:
                self.unused[key] += 1

    def unused_sequences(self, threshold: int) -> List[Tuple[int, ...]]:
        return sorted(key for key, count in self.unused.items() if count >= threshold)

    def sequences_with(self, agent_id: int) -> List[Tuple[int, ...]]:
        return [s.agents for s in self.sequences if agent_id in s.agents]

    def sorted_agents(self) -> List[Agent]:
        return [self.agents[i] for i in sorted(self.agents)]

    def distinct_descriptions(self) -> int:
        return len({a.description for a in self.agents.values()})

    def __len__(self) -> int:
        return len(self.agents)


class Habitat:
    """One user's node: an Agent-pool and directed connections out of it."""
    def __init__(self, id: int, community: int, unused_threshold: int = 10):
        self.id = id
        self.community = community
        self.unused_threshold = unused_threshold
        self.pool = AgentPool()
        self.out_connections: Dict[int, Connection] = {}

    def __str__(self) -> str:
        return f'<Habitat [id={self.id}, community={self.community}, ' \
            f'agents={len(self.pool)}, out={self.neighbors}]>'

    @property
    def neighbors(self) -> List[int]:
        return sorted(self.out_connections)

    def connections(self) -> List[Connection]:
        return [self.out_connections[t] for t in self.neighbors]


class Strategy(Enum):
    RANDOM = 'random'
    CLONE = 'clone'


@dataclass(frozen=True)
class JoinStrategy:
    kind: Strategy = Strategy.RANDOM
    similar: Optional[int] = None

    @classmethod
    def random(cls) -> 'JoinStrategy':
        return cls(Strategy.RANDOM)

    @classmethod
    def clone(cls, similar: int) -> 'JoinStrategy':
        return cls(Strategy.CLONE, similar)


class HabitatNetwork:
    """All Habitats, their connections, and the operations that move Agents.

    Mutations happen on the caller's thread only; evolution reads snapshots."""
    habitats: Dict[int, Habitat]

    def __init__(self, cfg: HabitatConfig, registry: AgentRegistry, events: EventLog,
                 migration_enabled: bool = True):
        self.cfg = cfg
        self.registry = registry
        self.events = events
        self.migration_enabled = migration_enabled
        self.habitats = {}
        self.offset_id = 0
        self._cluster_sizes = Cache(maxsize=1024, ttl=0, default=None)

    def habitat(self, habitat_id: int) -> Habitat:
        if habitat_id not in self.habitats:
            raise UnknownHabitatError(habitat_id)
        return self.habitats[habitat_id]

    def sorted_habitats(self) -> List[Habitat]:
        return [self.habitats[i] for i in sorted(self.habitats)]

    def connection(self, source: int, target: int) -> Optional[Connection]:
        habitat = self.habitats.get(source)
        if habitat is None:
            return None
        return habitat.out_connections.get(target)

    def all_connections(self) -> List[Connection]:
        return [c for h in self.sorted_habitats() for c in h.connections()]

    def invalidate(self):
        self._cluster_sizes.clear()

    def connect(self, source: int, target: int, p: float, log_habitat: Optional[int] = None) -> Connection:
        if source == target:
            raise ValueError(f'Self-connection at habitat {source}')
        habitat = self.habitat(source)
        self.habitat(target)
        existing = habitat.out_connections.get(target)
        if existing is not None:
            return existing
        conn = Connection(source, target, p)
        habitat.out_connections[target] = conn
        self.invalidate()
        self.events.emit(EventType.LINK_CREATED, source if log_habitat is None else log_habitat,
                         source=source, target=target, p=p)
        log.debug(f'link created: {source}->{target}, p={p}')
        return conn

    def remove_connection(self, source: int, target: int, log_habitat: Optional[int] = None):
        conn = self.habitat(source).out_connections.pop(target)
        self.invalidate()
        self.events.emit(EventType.LINK_REMOVED, source if log_habitat is None else log_habitat,
                         source=source, target=target, p=conn.p)
        log.debug(f'link removed: {source}->{target}, p={conn.p}')

    def reinforce(self, source: int, target: int, success: bool,
                  log_habitat: Optional[int] = None) -> Optional[float]:
        """Hebbian update of an existing connection; drops it below p_min."""
        conn = self.connection(source, target)
        if conn is None:
            return None
        p = hebbian_update(conn, success, self.cfg.learning_rate)
        if p < self.cfg.p_min:
            self.remove_connection(source, target, log_habitat=log_habitat)
            return None
        return p

    def graph(self, p_min: Optional[float] = None) -> nx.Graph:
        """Undirected projection: {a, b} is an edge when either direction reaches p_min."""
        p_min = self.cfg.p_min if p_min is None else p_min
        g = nx.Graph()
        g.add_nodes_from(sorted(self.habitats))
        for conn in self.all_connections():
            if conn.p >= p_min:
                g.add_edge(conn.source, conn.target)
        return g

    def cluster_size(self, habitat_id: int) -> int:
        size = self._cluster_sizes.get(habitat_id)
        if size is None:
            size = len(nx.node_connected_component(self.graph(), habitat_id))
            self._cluster_sizes.set(habitat_id, size)
        return size

    def escape_range(self, h: Habitat) -> int:
        # bit_length(n) == floor(log2(n)) + 1 for n >= 1
        return max(self.cfg.min_escape_range, self.cluster_size(h.id).bit_length())

    def in_degree(self, habitat_id: int) -> int:
        return sum(1 for h in self.habitats.values() if habitat_id in h.out_connections)

    def is_isolated(self, h: Habitat) -> bool:
        return not h.out_connections and self.in_degree(h.id) == 0

    def deploy_agent(self, h: Habitat, desc: SemanticDescription, rng) -> Agent:
        agent = self.registry.create(desc, h.id, self.escape_range(h))
        h.pool.add(agent)
        if self.migration_enabled:
            self.migrate_copy(agent, h, rng)
        return agent

    def migrate_copy(self, item: Union[Agent, AgentSequence], source: Habitat, rng) -> List[int]:
        destinations = []
        for conn in source.connections():
            if not rng.random() < conn.p:
                continue
            destination = self.habitat(conn.target)
            if isinstance(item, Agent):
                copy = self.registry.copy(item, destination.id, self.escape_range(destination))
                destination.pool.add(copy)
                self.events.emit(EventType.MIGRATED, source.id, kind='agent', agent=item.id,
                                 copy=copy.id, to=destination.id)
            else:
                destination.pool.register(item, arrived_from=source.id)
                self.events.emit(EventType.MIGRATED, source.id, kind='sequence',
                                 agents=list(item.agents), to=destination.id)
            destinations.append(destination.id)
        log.debug(f'migrate_copy: from={source.id}, to={destinations}')
        return destinations

    def register_sequence(self, h: Habitat, seq: AgentSequence) -> bool:
        return h.pool.register(seq.with_provenance(h.id))

    def escape_move(self, agent: Agent, source: Habitat, rng) -> Union[int, str]:
        arrival = tuple(agent.migration_history[-2:]) if not agent.at_home else None
        if self.cfg.decay_on_escape and arrival is not None:
            self.reinforce(arrival[0], arrival[1], False, log_habitat=source.id)
        if agent.escapes_remaining > 0 and source.out_connections:
            destination = self.habitat(rngs.pick(rng, source.neighbors))
            source.pool.remove(agent.id)
            destination.pool.add(agent)
            agent.escapes_remaining -= 1
            agent.requests_seen_unused = 0
            agent.migration_history.append(destination.id)
            self.events.emit(EventType.ESCAPE, source.id, agent=agent.id, to=destination.id,
                             remaining=agent.escapes_remaining)
            log.debug(f'escape: agent={agent.id}, from={source.id}, to={destination.id}')
            return destination.id
        reason = 'exhausted' if agent.escapes_remaining == 0 else 'stranded'
        source.pool.remove(agent.id)
        self.registry.delete(agent.id)
        self.forget_sequences_with(agent.id)
        self.events.emit(EventType.DELETED, source.id, agent=agent.id, reason=reason)
        log.debug(f'deleted: agent={agent.id}, at={source.id}, reason={reason}')
        if agent.uses == 0 and arrival is not None and not self.cfg.decay_on_escape:
            self.reinforce(arrival[0], arrival[1], False, log_habitat=source.id)
        return DELETED

    def prune_unused(self, h: Habitat, rng) -> List[Tuple[int, Union[int, str]]]:
        if not self.migration_enabled:
            return []
        outcomes = []
        # Only agents that migrated in can escape; an owner's own agents stay put.
        for agent in h.pool.sorted_agents():
            if agent.at_home or agent.requests_seen_unused < h.unused_threshold:
                continue
            outcomes.append((agent.id, self.escape_move(agent, h, rng)))
        return outcomes

    def prune_sequences(self, h: Habitat) -> List[Tuple[int, ...]]:
        """Drop migrated-in sequences left unused for `unused_threshold` requests.

        Each one counts as a failed migration over the link it arrived on."""
        if not self.migration_enabled:
            return []
        dropped = h.pool.unused_sequences(h.unused_threshold)
        for key in dropped:
            source = h.pool.unregister(key)
            self.events.emit(EventType.DELETED, h.id, kind='sequence', agents=list(key),
                             reason='unused')
            log.debug(f'deleted: sequence={list(key)}, at={h.id}, arrived from={source}')
            self.reinforce(source, h.id, False, log_habitat=h.id)
        return dropped

    def forget_sequences_with(self, agent_id: int):
        for h in self.sorted_habitats():
            for key in h.pool.sequences_with(agent_id):
                h.pool.unregister(key)

    def add_habitat(self, community: int) -> Habitat:
        habitat = Habitat(self.offset_id, community, self.cfg.unused_threshold)
        self.offset_id += 1
        self.habitats[habitat.id] = habitat
        self.invalidate()
        return habitat

    def join_network(self, community: int, strategy: JoinStrategy, rng,
                     habitat: Optional[Habitat] = None) -> Habitat:
        """Connect a new user's Habitat (or rewire an existing, isolated one)."""
        similar = None
        if strategy.kind == Strategy.CLONE:
            similar = self.habitat(strategy.similar)
        new = habitat or self.add_habitat(community)
        if not self.migration_enabled:
            log.info(f'joined as an island: habitat={new}')
            return new
        p0 = self.cfg.initial_probability
        if similar is not None:
            for conn in similar.connections():
                if conn.target != new.id:
                    self.connect(new.id, conn.target, conn.p, log_habitat=new.id)
            self.connect(new.id, similar.id, p0, log_habitat=new.id)
            self.connect(similar.id, new.id, p0, log_habitat=new.id)
        else:
            existing = [i for i in sorted(self.habitats) if i != new.id]
            count = min(self.cfg.initial_links, len(existing))
            chosen = sorted(int(i) for i in rng.choice(existing, size=count, replace=False)) \
                if count else []
            for target in chosen:
                self.connect(new.id, target, p0, log_habitat=new.id)
                self.connect(target, new.id, p0, log_habitat=new.id)
        self._merge_pools(new)
        log.info(f'joined: habitat={new}, strategy={strategy.kind.value}')
        return new

    def _merge_pools(self, new: Habitat):
        escapes = self.escape_range(new)
        for neighbor in [self.habitats[i] for i in new.neighbors]:
            for agent in neighbor.pool.sorted_agents():
                copy = self.registry.copy(agent, new.id, escapes)
                new.pool.add(copy)
                self.events.emit(EventType.MIGRATED, new.id, kind='merge', agent=agent.id,
                                 copy=copy.id, to=new.id)
            for seq in neighbor.pool.sequences:
                new.pool.register(seq, arrived_from=neighbor.id)
