import json

from ecosim.events import EventLog, EventType, Phase, is_ordered, replay_uses


def test_emit_stamps_clock():
    events = EventLog()
    events.at(3, Phase.APPLY)
    event = events.emit(EventType.EXECUTED, 2, agents=[4, 5], fitness=1.0)

    assert (event.round, event.phase, event.habitat, event.seq) == (3, Phase.APPLY, 2, 0)
    assert json.loads(event.to_json()) == {
        'round': 3,
        'phase': 3,
        'type': 'EXECUTED',
        'habitat': 2,
        'payload': {'agents': [4, 5], 'fitness': 1.0},
    }


def test_ordering():
    events = EventLog()
    events.at(1, Phase.REQUESTS).emit(EventType.REQUEST, 0, tokens=[1])
    events.emit(EventType.REQUEST, 2, tokens=[2])
    events.at(1, Phase.EVOLUTION).emit(EventType.SKIPPED, 0, reason='empty pool')
    assert is_ordered(events)

    events.at(1, Phase.EVOLUTION).emit(EventType.SKIPPED, 0, reason='empty pool')
    assert is_ordered(events)

    events.at(1, Phase.REQUESTS).emit(EventType.REQUEST, 1, tokens=[3])
    assert not is_ordered(events)
    assert len(events) == 5


def test_to_jsonl():
    events = EventLog()
    events.emit(EventType.LINK_CREATED, 0, source=0, target=1, p=0.5)
    events.emit(EventType.LINK_CREATED, 1, source=1, target=0, p=0.5)

    lines = events.to_jsonl().splitlines()
    assert len(lines) == 2
    assert events.to_jsonl().endswith('\n')
    assert [json.loads(line)['habitat'] for line in lines] == [0, 1]
    assert list(json.loads(lines[0])) == ['round', 'phase', 'type', 'habitat', 'payload']
    assert EventLog().to_jsonl() == ''


def test_replay_uses():
    events = EventLog()
    events.at(1, Phase.APPLY)
    events.emit(EventType.EXECUTED, 0, agents=[1, 2, 1], fitness=1.0)
    events.emit(EventType.REGISTERED, 0, agents=[1, 2, 1])
    events.emit(EventType.EXECUTED, 1, agents=[2], fitness=0.96)

    uses = replay_uses(events)
    assert uses[1] == 1
    assert uses[2] == 2
    assert uses[3] == 0
    assert len(events.of_type(EventType.EXECUTED)) == 2
