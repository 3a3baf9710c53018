import json
import logging
from datetime import datetime, timedelta

import pytest

from src.agents import (
    CLOSE_DOOR,
    DEFAULT_TICK,
    OPEN_DOOR,
    AgentState,
    Intention,
    Location,
    Rule,
    World,
    door_event_log,
    export_trace,
    group_agent,
    move_to,
    replay_door,
    run,
    select_intention,
    send,
    tick,
)
from src.ingest import HOUR
from src.markov import simulate
from src.rng import RandomStream


def always(beliefs, clock):
    return True


def test_tick_must_divide_half_hour(tuesday):
    with pytest.raises(ValueError):
        World(start=tuesday, tick_length=timedelta(minutes=7))


def test_rule_priorities_must_be_unique():
    with pytest.raises(ValueError):
        AgentState("A", rules=[Rule("a", always, OPEN_DOOR, priority=1), Rule("b", always, CLOSE_DOOR, priority=1)])


def test_agent_names_must_be_unique(tuesday):
    with pytest.raises(ValueError):
        World(start=tuesday, agents=[AgentState("A"), AgentState("A")])


def test_select_intention_respects_priority_and_degenerate_probabilities(tuesday):
    agent = AgentState(
        "A",
        rules=[
            Rule("never", always, OPEN_DOOR, probability=0.0, priority=3),
            Rule("sure", always, CLOSE_DOOR, probability=1.0, priority=2),
            Rule("low", always, OPEN_DOOR, priority=1),
        ],
        rng=RandomStream(0),
    )
    intention = select_intention(agent, tuesday)
    assert intention.rule == "sure"
    assert agent.rng is not None and agent.rng.draws == 0


def test_select_intention_falls_through_failed_check(tuesday):
    class Above:
        draws = 0

        def random(self):
            self.draws += 1
            return 0.99

    agent = AgentState(
        "A",
        rules=[Rule("maybe", always, OPEN_DOOR, probability=0.5, priority=2), Rule("else", always, CLOSE_DOOR, priority=1)],
        rng=Above(),
    )
    assert select_intention(agent, tuesday).rule == "else"


def test_last_door_writer_wins(tuesday):
    opener = AgentState("Opener", rules=[Rule("open", always, OPEN_DOOR, priority=1)])
    closer = AgentState("Closer", rules=[Rule("close", always, CLOSE_DOOR, priority=1)])
    world = tick(World(start=tuesday, agents=[opener, closer]))
    assert world.door.is_open is False

    opener = AgentState("Opener", rules=[Rule("open", always, OPEN_DOOR, priority=1)])
    closer = AgentState("Closer", rules=[Rule("close", always, CLOSE_DOOR, priority=1)])
    world = tick(World(start=tuesday, agents=[closer, opener]))
    assert world.door.is_open is True


def test_messages_are_delivered_next_tick_only(tuesday):
    sender = AgentState(
        "A", rules=[Rule("ping", lambda b, clock: clock == tuesday, (send("A", "B", "hi"),), priority=1)]
    )
    receiver = AgentState("B")
    world = World(start=tuesday, agents=[sender, receiver])

    tick(world)
    assert len(world.message_queue) == 1
    tick(world)
    inbox = world.agent("B").beliefs["inbox"]
    assert [message.topic for message in inbox] == ["hi"]
    tick(world)
    assert world.agent("B").beliefs["inbox"] == ()


def test_message_to_unknown_agent_is_dropped_with_warning(tuesday, caplog):
    sender = AgentState("A", rules=[Rule("ping", lambda b, clock: clock == tuesday, (send("A", "Nobody", "hi"),), priority=1)])
    world = World(start=tuesday, agents=[sender])
    with caplog.at_level(logging.WARNING):
        tick(world)
        tick(world)
    assert "Nobody" in caplog.text
    assert world.message_queue == []


def test_pending_intention_takes_precedence(tuesday):
    later = Intention("later", (OPEN_DOOR,))

    def plan(agent, clock):
        return Intention("plan", (CLOSE_DOOR,), followups=((DEFAULT_TICK, later),))

    agent = AgentState(
        "A",
        rules=[
            Rule("plan", lambda b, clock: clock == tuesday, plan, priority=2),
            Rule("close", always, CLOSE_DOOR, priority=1),
        ],
    )
    world = World(start=tuesday, agents=[agent])
    for _ in range(3):
        tick(world)
    assert [event.detail["rule"] for event in world.trace] == ["plan", "later", "close"]
    assert world.door.is_open is False


def test_perception_is_one_snapshot_for_all_agents(tuesday):
    seen = []

    def watch(agent, snapshot):
        seen.append((agent.name, snapshot.present))

    mover = AgentState("Mover", rules=[Rule("enter", always, move_to(Location.OFFICE), priority=1)])
    watcher = AgentState("Watcher", perception_hook=watch)
    world = World(start=tuesday, agents=[mover, watcher])
    tick(world)
    tick(world)
    assert seen[0] == ("Watcher", frozenset())
    assert seen[1] == ("Watcher", frozenset({"Mover"}))


def test_run_requires_aligned_future_end(tuesday):
    world = World(start=tuesday)
    with pytest.raises(ValueError):
        run(world, tuesday + timedelta(minutes=30))
    with pytest.raises(ValueError):
        run(world, tuesday)


def test_door_event_log_starts_with_initial_state(tuesday):
    agent = AgentState("A", rules=[Rule("open", lambda b, clock: clock.hour == 10 and clock.minute == 0, OPEN_DOOR, priority=1)])
    world, _ = run(World(start=tuesday, agents=[agent]), tuesday + timedelta(days=1))
    log = door_event_log(world.trace, tuesday)
    assert log.entries == ((tuesday, 0), (tuesday.replace(hour=10), 1))


@pytest.mark.parametrize("seed", [0, 1, 2, 42])
def test_group_agent_reproduces_markov_chain(fixture_model, tuesday, seed):
    until = tuesday + timedelta(days=7)
    world = World(start=tuesday, seed=seed, schedule=fixture_model.schedule, agents=[group_agent(fixture_model)])
    world, states = run(world, until)
    expected = simulate(fixture_model, tuesday, until - HOUR, RandomStream(seed))
    assert states == expected


def test_replay_matches_accumulated_door(fixture_model, tuesday):
    until = tuesday + timedelta(days=3)
    world = World(start=tuesday, seed=9, agents=[group_agent(fixture_model)])
    world, states = run(world, until)
    assert replay_door(world.trace, tuesday, until, world.initial_door_open) == states


def test_export_trace_is_json_lines(fixture_model, tuesday):
    world, _ = run(World(start=tuesday, agents=[group_agent(fixture_model)]), tuesday + timedelta(days=1))
    lines = export_trace(world).splitlines()
    assert len(lines) == len(world.trace) > 0
    first = json.loads(lines[0])
    assert set(first) == {"time", "agent", "event", "detail"}
    assert first["agent"] == "Group"
    assert first["time"] == datetime(2013, 10, 1).isoformat()
