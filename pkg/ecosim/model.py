import logging
from dataclasses import dataclass, field
from typing import Iterable, List, Mapping, Optional, Tuple

from .exception import DescriptionError, UnknownAgentError


log = logging.getLogger(__name__)
DEFAULT_ALPHABET_SIZE = 64


@dataclass(frozen=True)
class SemanticDescription:
    """Attribute tokens standing for both the service and its description."""
    tokens: frozenset

    def __len__(self) -> int:
        return len(self.tokens)

    def __str__(self) -> str:
        return '{' + ','.join(str(t) for t in sorted(self.tokens)) + '}'


@dataclass(frozen=True)
class Request:
    tokens: frozenset
    origin_habitat: int
    round: int

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass
class Agent:
    id: int
    description: SemanticDescription
    owner: int
    migration_history: List[int]
    escapes_remaining: int = 0
    uses: int = 0
    requests_seen_unused: int = 0
    lineage: Optional[int] = None

    @property
    def location(self) -> int:
        return self.migration_history[-1]

    @property
    def creation_habitat(self) -> int:
        return self.migration_history[0]

    @property
    def at_home(self) -> bool:
        return len(self.migration_history) == 1

    def __str__(self) -> str:
        return f'<Agent [id={self.id}, desc={self.description}, at={self.location}]>'


@dataclass(frozen=True)
class AgentSequence:
    agents: Tuple[int, ...]
    provenance: Tuple[int, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if len(self.agents) == 0:
            raise ValueError('Agent-sequence must not be empty')

    def __len__(self) -> int:
        return len(self.agents)

    def with_provenance(self, habitat_id: int) -> 'AgentSequence':
        if habitat_id in self.provenance:
            return self
        return AgentSequence(self.agents, self.provenance + (habitat_id,))


def validate_description(tokens: Iterable[int], alphabet_size: int = DEFAULT_ALPHABET_SIZE) -> SemanticDescription:
    tokens = frozenset(int(t) for t in tokens)
    if not tokens:
        raise DescriptionError('Description must not be empty')
    for token in sorted(tokens):
        if token < 0 or token >= alphabet_size:
            raise DescriptionError(f'Token {token} out of range [0, {alphabet_size})')
    return SemanticDescription(tokens)


def validate_request(tokens: Iterable[int], origin_habitat: int, round: int,
                     alphabet_size: int = DEFAULT_ALPHABET_SIZE) -> Request:
    description = validate_description(tokens, alphabet_size)
    return Request(description.tokens, origin_habitat, round)


def _contributions(seq: AgentSequence, req: Request,
                   resolve: Mapping[int, SemanticDescription]) -> List[frozenset]:
    contributions = []
    for agent_id in seq.agents:
        try:
            description = resolve[agent_id]
        except KeyError:
            raise UnknownAgentError(agent_id)
        contributions.append(description.tokens & req.tokens)
    return contributions


def coverage(seq: AgentSequence, req: Request, resolve: Mapping[int, SemanticDescription]) -> int:
    covered = set()
    for tokens in _contributions(seq, req, resolve):
        covered |= tokens
    return len(covered)


def redundant_count(seq: AgentSequence, req: Request, resolve: Mapping[int, SemanticDescription]) -> int:
    """Count agents that can be dropped without losing coverage.

    Positions are tested left to right; a dropped position stays dropped for
    the positions tested after it.
    """
    contributions = _contributions(seq, req, resolve)
    full = len(frozenset().union(*contributions))
    kept = list(range(len(contributions)))
    redundant = 0
    for i in range(len(contributions)):
        rest = [j for j in kept if j != i]
        covered = frozenset().union(*(contributions[j] for j in rest))
        if len(covered) == full:
            kept = rest
            redundant += 1
    return redundant
