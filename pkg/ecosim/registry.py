import logging
from typing import Dict, Iterator, Mapping, Optional

from .exception import UnknownAgentError
from .model import Agent, SemanticDescription


log = logging.getLogger(__name__)


class AgentRegistry(Mapping[int, SemanticDescription]):
    """The global agent table.

    Deleted agents keep their entry so that descriptions stay resolvable for
    anything that still names them; `alive` tells the two apart. As a
    mapping it resolves agent ids to descriptions."""
    agents: Dict[int, Agent]
    offset_id: int

    def __init__(self, offset_id: int = 0):
        self.agents = {}
        self.offset_id = offset_id
        self._deleted = set()

    def allocate_id(self) -> int:
        new_id = self.offset_id
        self.offset_id += 1
        return new_id

    def create(self, description: SemanticDescription, owner: int,
               escapes_remaining: int) -> Agent:
        agent = Agent(self.allocate_id(), description, owner, [owner],
                      escapes_remaining=escapes_remaining)
        self.agents[agent.id] = agent
        log.debug(f'created: agent={agent}')
        return agent

    def copy(self, original: Agent, destination: int, escapes_remaining: int) -> Agent:
        agent = Agent(self.allocate_id(), original.description, original.owner,
                      original.migration_history + [destination],
                      escapes_remaining=escapes_remaining,
                      lineage=original.lineage if original.lineage is not None else original.id)
        self.agents[agent.id] = agent
        return agent

    def agent(self, agent_id: int) -> Agent:
        if agent_id not in self.agents:
            raise UnknownAgentError(agent_id)
        return self.agents[agent_id]

    def delete(self, agent_id: int):
        self.agent(agent_id)
        self._deleted.add(agent_id)

    def alive(self, agent_id: int) -> bool:
        return agent_id in self.agents and agent_id not in self._deleted

    def alive_count(self) -> int:
        return len(self.agents) - len(self._deleted)

    def __getitem__(self, agent_id: int) -> SemanticDescription:
        return self.agent(agent_id).description

    def __iter__(self) -> Iterator[int]:
        return iter(self.agents)

    def __len__(self) -> int:
        return len(self.agents)

    def get_agent(self, agent_id: int) -> Optional[Agent]:
        return self.agents.get(agent_id)
