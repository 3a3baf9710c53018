from datetime import date, datetime, time, timedelta

import pytest

from src.agents import Location, run, tick
from src.ingest import DoorState
from src.markov import TimeSlotSchedule
from src.rng import RandomStream
from src.scenario import (
    AUDREY,
    KHADIJA,
    STEPHANE,
    VISITORS,
    ScenarioConfig,
    ScenarioConfigError,
    ScenarioPlanner,
    audrey_present_on,
    build_scenario,
    load_scenario_config,
    parse_scenario_config,
    realize_presence,
)

# 2013-10-07 - понедельник нечётной ISO-недели 41
ODD_MONDAY = date(2013, 10, 7)
EVEN_TUESDAY = date(2013, 10, 1)


def fixed(hour, minute=0):
    return {"mean": f"{hour:02d}:{minute:02d}", "jitter_minutes": 0}


def test_defaults_are_valid():
    cfg = ScenarioConfig()
    assert cfg.p_khadija_close_after_morning_open == 0.8
    assert cfg.p_stephane_accepts_coffee == 0.5
    assert cfg.p_stephane_busy == 0.5
    assert cfg.p_visitors_leave_open == 0.8
    assert cfg.visitor_rate == 1.0
    assert cfg.audrey_weeks == "even"


@pytest.mark.parametrize(
    "data, field",
    [
        ({"p_stephane_busy": 1.5}, "p_stephane_busy"),
        ({"p_visitors_leave_open": -0.1}, "p_visitors_leave_open"),
        ({"unknown_key": 1}, "unknown_key"),
        ({"lunch_window": {"start": "07:00", "end": "13:00"}}, "lunch_window"),
        ({"khadija_arrival": {"mean": "08:30", "jitter_minutes": -1}}, "khadija_arrival"),
        ({"audrey_weeks": "sometimes"}, "audrey_weeks"),
        ({"meeting_window": {"start": "12:30", "end": "13:00"}}, "meeting_window"),
    ],
)
def test_invalid_config_names_field(data, field):
    with pytest.raises(ScenarioConfigError) as excinfo:
        parse_scenario_config(data)
    assert excinfo.value.field.startswith(field)


def test_load_scenario_config_from_json():
    cfg = load_scenario_config('{"visitor_rate": 0, "lunch_window": {"start": "12:00", "end": "13:00"}}')
    assert cfg.visitor_rate == 0
    assert cfg.lunch_window.start == time(12, 0)
    with pytest.raises(ScenarioConfigError):
        load_scenario_config("[1, 2]")


def test_audrey_weeks():
    cfg = ScenarioConfig()
    assert audrey_present_on(cfg, EVEN_TUESDAY)
    assert not audrey_present_on(cfg, ODD_MONDAY)
    assert audrey_present_on(ScenarioConfig(audrey_weeks="odd"), ODD_MONDAY)


def test_zero_jitter_arrivals_are_exact_and_ordered():
    cfg = parse_scenario_config(
        {
            "khadija_arrival": fixed(8, 30),
            "stephane_arrival": fixed(9, 15),
            "audrey_arrival": fixed(9, 45),
            "visitor_rate": 0,
        }
    )
    calendar = realize_presence(cfg, EVEN_TUESDAY, RandomStream(0))
    starts = [calendar.intervals[name][0].start.time() for name in (KHADIJA, STEPHANE, AUDREY)]
    assert starts == [time(8, 30), time(9, 15), time(9, 45)]


def test_unsatisfiable_order_is_clamped_to_means():
    # Средние идут не по порядку: перевыборка не поможет
    cfg = parse_scenario_config(
        {
            "khadija_arrival": fixed(9, 30),
            "stephane_arrival": fixed(9, 0),
            "audrey_arrival": fixed(8, 45),
        }
    )
    calendar = realize_presence(cfg, EVEN_TUESDAY, RandomStream(0))
    starts = [calendar.intervals[name][0].start.time() for name in (KHADIJA, STEPHANE, AUDREY)]
    assert starts == [time(9, 30), time(9, 30), time(9, 30)]


def test_weekend_and_off_week_calendars():
    cfg = ScenarioConfig()
    saturday = realize_presence(cfg, date(2013, 10, 5), RandomStream(0))
    assert all(intervals == () for intervals in saturday.intervals.values())
    off_week = realize_presence(cfg, ODD_MONDAY, RandomStream(0))
    assert off_week.intervals[AUDREY] == ()
    assert off_week.intervals[KHADIJA]


def test_stephane_lectures_on_lecture_days():
    calendar = realize_presence(ScenarioConfig(), EVEN_TUESDAY, RandomStream(4))
    lectures = [interval for interval in calendar.intervals[STEPHANE] if interval.activity == "lecture"]
    assert len(lectures) == 1
    assert lectures[0].location is Location.LECTURE
    assert lectures[0].start.time() == time(10, 0)
    assert lectures[0].end.time() == time(12, 0)


def test_intervals_are_ordered_and_disjoint():
    cfg = ScenarioConfig(visitor_rate=3.0)
    for offset in range(20):
        day = EVEN_TUESDAY + timedelta(days=offset)
        calendar = realize_presence(cfg, day, RandomStream.derive(1, day.isoformat()))
        for name, intervals in calendar.intervals.items():
            for interval in intervals:
                assert interval.start < interval.end
            for a, b in zip(intervals, intervals[1:]):
                assert a.end <= b.start, name


def test_visits_fall_inside_stephane_office_time():
    cfg = ScenarioConfig(visitor_rate=3.0)
    for offset in range(30):
        day = EVEN_TUESDAY + timedelta(days=offset)
        calendar = realize_presence(cfg, day, RandomStream.derive(2, day.isoformat()))
        for visit in calendar.intervals[VISITORS]:
            host = calendar.at(STEPHANE, visit.start)
            assert host is not None and host.location is Location.OFFICE
            assert calendar.at(STEPHANE, visit.end) is not None


def test_khadija_usually_arrives_first():
    cfg = ScenarioConfig()
    planner = ScenarioPlanner(cfg, seed=0)
    first = total = 0
    day = EVEN_TUESDAY
    while total < 1000:
        if day.weekday() < 5:
            calendar = planner.calendar(day)
            arrivals = {name: intervals[0].start for name, intervals in calendar.intervals.items() if intervals and name != VISITORS}
            first += arrivals[KHADIJA] == min(arrivals.values())
            total += 1
        day += timedelta(days=1)
    assert first / total >= 0.9


def test_build_scenario_agent_order(tuesday):
    world = build_scenario(ScenarioConfig(), seed=1, start=tuesday)
    assert [agent.name for agent in world.agents] == [KHADIJA, STEPHANE, AUDREY, VISITORS]
    assert all(not agent.uses_shared_stream for agent in world.agents)


def test_absent_audrey_never_acts(tuesday):
    cfg = ScenarioConfig(audrey_weeks="never", visitor_rate=0)
    world, _ = run(build_scenario(cfg, seed=3, start=tuesday), tuesday + timedelta(days=14))
    assert not [event for event in world.trace if event.agent == AUDREY]
    assert not [event for event in world.trace if event.agent == VISITORS]


def test_equal_seeds_give_identical_traces(tuesday):
    until = tuesday + timedelta(days=5)
    a, states_a = run(build_scenario(ScenarioConfig(), seed=5, start=tuesday), until)
    b, states_b = run(build_scenario(ScenarioConfig(), seed=5, start=tuesday), until)
    assert a.trace == b.trace
    assert states_a == states_b


def test_night_and_weekend_hours_are_closed(tuesday):
    world, states = run(build_scenario(ScenarioConfig(), seed=8, start=tuesday), tuesday + timedelta(days=14))
    schedule = TimeSlotSchedule()
    for hour, state in zip(states.hours(), states.states):
        if schedule.is_forced_closed(hour):
            assert state is DoorState.CLOSED


def test_first_arrival_opens_the_door(tuesday):
    cfg = ScenarioConfig(visitor_rate=0, p_khadija_close_after_morning_open=0.0)
    world, _ = run(build_scenario(cfg, seed=2, start=tuesday), tuesday + timedelta(days=1))
    morning = [event for event in world.trace if event.event in ("open_door", "close_door")]
    assert morning[0].agent == KHADIJA
    assert morning[0].event == "open_door"
    assert morning[0].detail["rule"] == "enter_office"


def test_khadija_closes_after_morning_open_when_certain(tuesday):
    cfg = ScenarioConfig(visitor_rate=0, p_khadija_close_after_morning_open=1.0)
    world, _ = run(build_scenario(cfg, seed=2, start=tuesday), tuesday + timedelta(days=1))
    rules = [event.detail["rule"] for event in world.trace if event.agent == KHADIJA]
    assert "close_after_opening" in rules


def test_audrey_closes_door_after_visitor_leaves(tuesday):
    cfg = ScenarioConfig(visitor_rate=3.0, audrey_weeks="always", p_visitors_leave_open=1.0)
    world = build_scenario(cfg, seed=6, start=tuesday)
    until = tuesday + timedelta(days=5)
    departures = 0
    while world.clock < until:
        tick(world)
        left = [event for event in world.trace if event.time == world.clock - world.tick_length and event.detail["rule"] == "visitors_leave"]
        if left and world.agent(AUDREY).location is Location.OFFICE:
            departures += 1
            tick(world)
            # Следующий посетитель может войти в тот же тик и открыть дверь
            assert world.door.is_open is False or VISITORS in world.snapshot().present
    assert departures > 0


def test_stephane_leaves_door_open_for_meeting_without_audrey():
    # Понедельник нечётной недели: встреча, Audrey нет
    start = datetime.combine(ODD_MONDAY, time())
    cfg = ScenarioConfig(visitor_rate=0)
    world = build_scenario(cfg, seed=1, start=start)
    run(world, start + timedelta(days=1))
    leaving = [event for event in world.trace if event.agent == STEPHANE and event.detail["rule"] == "leave_for_meeting"]
    assert [event.event for event in leaving if event.event != "move_to"] == ["open_door"]


def test_stephane_closes_door_for_meeting_with_audrey():
    start = datetime.combine(ODD_MONDAY, time())
    cfg = ScenarioConfig(visitor_rate=0, audrey_weeks="always")
    world = build_scenario(cfg, seed=1, start=start)
    run(world, start + timedelta(days=1))
    leaving = [event for event in world.trace if event.agent == STEPHANE and event.detail["rule"] == "leave_for_meeting"]
    assert [event.event for event in leaving if event.event != "move_to"] == ["close_door"]


def door_events(world, agent, rule):
    return [
        event.event
        for event in world.trace
        if event.agent == agent and event.detail["rule"] == rule and event.event != "move_to"
    ]


def test_busy_stephane_gets_coffee_and_door_left_open_without_audrey(tuesday):
    cfg = ScenarioConfig(
        visitor_rate=0,
        audrey_weeks="never",
        p_stephane_accepts_coffee=0.0,
        p_stephane_busy=1.0,
    )
    world, _ = run(build_scenario(cfg, seed=3, start=tuesday), tuesday + timedelta(days=5))
    doors = door_events(world, KHADIJA, "leave_for_coffee")
    assert doors
    assert set(doors) == {"open_door"}


def test_busy_stephane_with_audrey_keeps_door_as_is(tuesday):
    cfg = ScenarioConfig(
        visitor_rate=0,
        audrey_weeks="always",
        p_stephane_accepts_coffee=0.0,
        p_stephane_busy=1.0,
        p_audrey_joins_coffee=0.0,
    )
    world, _ = run(build_scenario(cfg, seed=3, start=tuesday), tuesday + timedelta(days=5))
    doors = door_events(world, KHADIJA, "leave_for_coffee")
    assert doors
    assert "open_door" not in doors


def test_audrey_closes_door_before_joining_coffee(tuesday):
    cfg = ScenarioConfig(visitor_rate=0, audrey_weeks="always", p_audrey_joins_coffee=1.0)
    world, _ = run(build_scenario(cfg, seed=5, start=tuesday), tuesday + timedelta(days=5))
    going = [event for event in world.trace if event.agent == AUDREY and event.detail["rule"] == "go_for_coffee"]
    assert going
    by_tick = {}
    for event in going:
        by_tick.setdefault(event.time, []).append(event.event)
    # Сначала дверь, потом уход
    assert all(events == ["close_door", "move_to"] for events in by_tick.values())
    assert any(event.detail.get("location") == Location.CAFETERIA.value for event in going if event.event == "move_to")


@pytest.mark.parametrize("probability, expected", [(0.0, {"close_door"}), (1.0, {"open_door"})])
def test_visitor_door_follows_probability(tuesday, probability, expected):
    cfg = ScenarioConfig(visitor_rate=3.0, p_visitors_leave_open=probability)
    world, _ = run(build_scenario(cfg, seed=8, start=tuesday), tuesday + timedelta(days=10))
    doors = {event.event for event in world.trace if event.agent == VISITORS and event.event != "move_to"}
    assert doors == expected


def test_visitors_mostly_leave_door_open(tuesday):
    cfg = ScenarioConfig(visitor_rate=3.0)
    world, _ = run(build_scenario(cfg, seed=8, start=tuesday), tuesday + timedelta(days=20))
    doors = [event.event for event in world.trace if event.agent == VISITORS and event.event != "move_to"]
    assert doors.count("open_door") > doors.count("close_door") > 0
    rules = {event.detail["rule"] for event in world.trace if event.agent == VISITORS}
    assert rules == {"visitors_arrive", "visitors_arrive_closing", "visitors_leave", "visitors_leave_closing"}


def test_coffee_invitation_gets_a_reply(tuesday):
    cfg = ScenarioConfig(visitor_rate=0)
    world, _ = run(build_scenario(cfg, seed=4, start=tuesday), tuesday + timedelta(days=5))
    invites = [event for event in world.trace if event.detail["rule"] == "invite_for_coffee"]
    replies = [
        event
        for event in world.trace
        if event.event == "send" and event.detail.get("recipient") == KHADIJA
    ]
    assert invites
    assert replies
    assert {event.detail["topic"] for event in replies} <= {"accept", "bring_coffee", "decline", "join"}
