import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, List, Tuple


log = logging.getLogger(__name__)


class EventType(Enum):
    REQUEST = 'REQUEST'
    EVOLVED = 'EVOLVED'
    EXECUTED = 'EXECUTED'
    SKIPPED = 'SKIPPED'
    REGISTERED = 'REGISTERED'
    MIGRATED = 'MIGRATED'
    LINK_CREATED = 'LINK_CREATED'
    LINK_REMOVED = 'LINK_REMOVED'
    ESCAPE = 'ESCAPE'
    DELETED = 'DELETED'
    DISCONNECTED = 'DISCONNECTED'


class Phase:
    SETUP = 0
    REQUESTS = 1
    EVOLUTION = 2
    APPLY = 3
    FEEDBACK = 4
    MIGRATION = 5
    PRUNE = 6


@dataclass(frozen=True)
class Event:
    round: int
    phase: int
    type: EventType
    habitat: int
    payload: Dict[str, Any] = field(default_factory=dict)
    seq: int = 0

    @property
    def key(self) -> Tuple[int, int, int, int]:
        return (self.round, self.phase, self.habitat, self.seq)

    def to_json(self) -> str:
        return json.dumps({
            'round': self.round,
            'phase': self.phase,
            'type': self.type.value,
            'habitat': self.habitat,
            'payload': self.payload,
        }, ensure_ascii=False)


class EventLog:
    """Append-only record of everything the ecosystem does.

    The writer sets the clock with `at(round, phase)`; events are stamped
    with it and with a global sequence number."""
    events: List[Event]

    def __init__(self):
        self.events = []
        self.round = 0
        self.phase = Phase.SETUP

    def at(self, round: int, phase: int) -> 'EventLog':
        self.round = round
        self.phase = phase
        return self

    def emit(self, type: EventType, habitat: int, **payload) -> Event:
        event = Event(self.round, self.phase, type, habitat, payload, len(self.events))
        if self.events and not self.events[-1].key < event.key:
            log.warning(f'Out-of-order event: {event} after {self.events[-1]}')
        self.events.append(event)
        return event

    def of_type(self, type: EventType) -> List[Event]:
        return [e for e in self.events if e.type == type]

    def to_jsonl(self) -> str:
        return ''.join(e.to_json() + '\n' for e in self.events)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)


def is_ordered(events: Iterable[Event]) -> bool:
    keys = [e.key for e in events]
    return all(a < b for a, b in zip(keys, keys[1:]))


def replay_uses(events: Iterable[Event]) -> Counter:
    uses = Counter()
    for event in events:
        if event.type == EventType.EXECUTED:
            uses.update(set(event.payload['agents']))
    return uses
