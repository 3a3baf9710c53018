import json
import logging
from dataclasses import dataclass
from datetime import date, datetime, time, timedelta
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .agents import (
    CLOSE_DOOR,
    DEFAULT_TICK,
    LEAVE_DOOR,
    OPEN_DOOR,
    AgentState,
    Intention,
    Location,
    Rule,
    World,
    move_to,
    send,
)
from .rng import RandomStream

logger = logging.getLogger(__name__)

KHADIJA = "Khadija"
STEPHANE = "Stephane"
AUDREY = "Audrey"
VISITORS = "Visitors"
AGENT_ORDER = (KHADIJA, STEPHANE, AUDREY, VISITORS)

DEFAULT_START = datetime(2013, 10, 1)
DAY_START = time(8, 0)
DAY_END = time(20, 0)
MAX_REDRAWS = 100
VISIT_LEAD = timedelta(minutes=5)
VISIT_MARGIN = timedelta(minutes=10)

INVITE = "coffee?"
ACCEPT = "accept"
BRING_COFFEE = "bring_coffee"
DECLINE = "decline"
JOIN = "join"
REPLY_TOPICS = (ACCEPT, BRING_COFFEE, DECLINE, JOIN)
COFFEE_DEPARTURES = ("leave_for_coffee", "go_for_coffee_alone")


class ScenarioConfigError(ValueError):
    """Ошибка конфигурации сценария с именем поля."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


def _minutes(moment: time) -> float:
    return moment.hour * 60 + moment.minute + moment.second / 60


class JitteredTime(BaseModel):
    """Время суток mean ± jitter_minutes (равномерно)."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    mean: time
    jitter_minutes: float = Field(default=0.0, ge=0.0)

    @property
    def bounds(self) -> tuple[float, float]:
        centre = _minutes(self.mean)
        return centre - self.jitter_minutes, centre + self.jitter_minutes


class TimeWindow(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    start: time
    end: time

    @model_validator(mode="after")
    def _ordered(self):
        if self.start >= self.end:
            raise ValueError(f"начало {self.start} не раньше конца {self.end}")
        return self

    @property
    def bounds(self) -> tuple[float, float]:
        return _minutes(self.start), _minutes(self.end)

    def overlaps(self, other: "TimeWindow") -> bool:
        return self.start < other.end and other.start < self.end


class ScenarioConfig(BaseModel):
    """Параметры сценария офиса. Все поля необязательны."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    khadija_arrival: JitteredTime = JitteredTime(mean=time(8, 30), jitter_minutes=20)
    stephane_arrival: JitteredTime = JitteredTime(mean=time(9, 15), jitter_minutes=30)
    audrey_arrival: JitteredTime = JitteredTime(mean=time(9, 45), jitter_minutes=20)
    khadija_departure: JitteredTime = JitteredTime(mean=time(17, 30), jitter_minutes=30)
    stephane_departure: JitteredTime = JitteredTime(mean=time(18, 0), jitter_minutes=30)
    audrey_departure: JitteredTime = JitteredTime(mean=time(17, 0), jitter_minutes=30)
    audrey_weeks: Literal["even", "odd", "always", "never"] = "even"
    stephane_lecture_days: frozenset[int] = frozenset({1, 3})
    lecture_window: TimeWindow = TimeWindow(start=time(10, 0), end=time(12, 0))
    stephane_meeting_days: frozenset[int] = frozenset({0, 2})
    meeting_window: TimeWindow = TimeWindow(start=time(14, 30), end=time(15, 30))
    visitor_rate: float = Field(default=1.0, ge=0.0)
    visitor_stay_minutes: tuple[float, float] = (20.0, 40.0)
    lunch_window: TimeWindow = TimeWindow(start=time(12, 15), end=time(13, 45))
    coffee_time: JitteredTime = JitteredTime(mean=time(15, 30), jitter_minutes=30)
    coffee_minutes: float = Field(default=15.0, gt=0.0)
    p_khadija_close_after_morning_open: float = Field(default=0.8, ge=0.0, le=1.0)
    p_stephane_accepts_coffee: float = Field(default=0.5, ge=0.0, le=1.0)
    p_stephane_busy: float = Field(default=0.5, ge=0.0, le=1.0)
    p_audrey_joins_coffee: float = Field(default=0.8, ge=0.0, le=1.0)
    p_visitors_leave_open: float = Field(default=0.8, ge=0.0, le=1.0)

    @field_validator(
        "khadija_arrival",
        "stephane_arrival",
        "audrey_arrival",
        "khadija_departure",
        "stephane_departure",
        "audrey_departure",
        "coffee_time",
        "lecture_window",
        "meeting_window",
        "lunch_window",
    )
    @classmethod
    def _within_working_day(cls, value):
        low, high = value.bounds
        if low < _minutes(DAY_START) or high > _minutes(DAY_END):
            raise ValueError(f"окно должно лежать в {DAY_START:%H:%M}-{DAY_END:%H:%M}")
        return value

    @field_validator("stephane_lecture_days", "stephane_meeting_days")
    @classmethod
    def _weekdays(cls, value):
        if any(not 0 <= day <= 6 for day in value):
            raise ValueError("дни недели должны лежать в 0..6")
        return value

    @field_validator("visitor_stay_minutes")
    @classmethod
    def _stay(cls, value):
        if not 0 < value[0] <= value[1]:
            raise ValueError("ожидалось 0 < минимум <= максимум")
        return value

    @model_validator(mode="after")
    def _consistent(self):
        for name in ("khadija", "stephane", "audrey"):
            arrival = getattr(self, f"{name}_arrival")
            departure = getattr(self, f"{name}_departure")
            if arrival.bounds[1] >= departure.bounds[0]:
                raise ScenarioConfigError(f"{name}_departure", "уход может оказаться раньше прихода")
        for field in ("lecture_window", "meeting_window"):
            if getattr(self, field).overlaps(self.lunch_window):
                raise ScenarioConfigError(field, "пересекается с обедом")
        if self.lecture_window.overlaps(self.meeting_window):
            raise ScenarioConfigError("meeting_window", "пересекается с лекцией")
        return self


def parse_scenario_config(data: dict) -> ScenarioConfig:
    """
    Проверяет словарь конфигурации и строит ScenarioConfig.

    Args:
        data (dict): Поля конфигурации (неизвестные ключи запрещены)

    Returns:
        ScenarioConfig: Конфигурация

    Raises:
        ScenarioConfigError: Некорректное поле
    """
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        original = first.get("ctx", {}).get("error")
        if isinstance(original, ScenarioConfigError):
            raise original from None
        field = ".".join(str(part) for part in first["loc"]) or "config"
        raise ScenarioConfigError(field, first["msg"]) from None


def load_scenario_config(text: str) -> ScenarioConfig:
    """
    Разбирает JSON конфигурации сценария.

    Args:
        text (str): Содержимое файла

    Returns:
        ScenarioConfig: Проверенная конфигурация
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioConfigError("config", f"некорректный JSON: {e}") from None
    if not isinstance(data, dict):
        raise ScenarioConfigError("config", "ожидался JSON-объект")
    return parse_scenario_config(data)


@dataclass(frozen=True)
class PresenceInterval:
    start: datetime
    end: datetime
    location: Location
    activity: str


@dataclass(frozen=True)
class PresenceCalendar:
    """Распорядок одного дня: интервалы присутствия по агентам и время кофе."""

    day: date
    intervals: dict
    coffee_at: Optional[datetime] = None

    def at(self, name: str, moment: datetime) -> Optional[PresenceInterval]:
        for interval in self.intervals.get(name, ()):
            if interval.start <= moment < interval.end:
                return interval
        return None

    def at_work(self, name: str) -> bool:
        return bool(self.intervals.get(name))


def audrey_present_on(cfg: ScenarioConfig, day: date) -> bool:
    """Работает ли Audrey в этот день по чётности ISO-недели."""
    week = day.isocalendar()[1]
    if cfg.audrey_weeks == "always":
        return True
    if cfg.audrey_weeks == "never":
        return False
    return (week % 2 == 0) == (cfg.audrey_weeks == "even")


def _draw(window: JitteredTime, substream: RandomStream) -> float:
    low, high = window.bounds
    return substream.uniform(low, high) if high > low else low


def _arrivals(cfg: ScenarioConfig, names: list, substream: RandomStream) -> dict:
    windows = [getattr(cfg, f"{name.lower()}_arrival") for name in names]
    for _ in range(MAX_REDRAWS + 1):
        drawn = [_draw(window, substream) for window in windows]
        if all(a <= b for a, b in zip(drawn, drawn[1:])):
            return dict(zip(names, drawn))
    # Не удалось: средние значения, упорядоченные нарастающим максимумом
    ordered, floor = [], float("-inf")
    for window in windows:
        floor = max(floor, _minutes(window.mean))
        ordered.append(floor)
    return dict(zip(names, ordered))


def _day_plan(arrival: datetime, departure: datetime, blocks: list) -> tuple:
    intervals = []
    cursor = arrival
    for start, end, location, activity in sorted(blocks, key=lambda block: block[0]):
        start, end = max(start, arrival), min(end, departure)
        if start >= end:
            continue
        if cursor < start:
            intervals.append(PresenceInterval(cursor, start, Location.OFFICE, "work"))
        intervals.append(PresenceInterval(start, end, location, activity))
        cursor = end
    if cursor < departure:
        intervals.append(PresenceInterval(cursor, departure, Location.OFFICE, "work"))
    return tuple(intervals)


def _visits(cfg: ScenarioConfig, stephane: tuple, substream: RandomStream) -> tuple:
    count = substream.poisson(cfg.visitor_rate) if cfg.visitor_rate > 0 else 0
    visits: list[PresenceInterval] = []
    for _ in range(count):
        stay = timedelta(minutes=substream.uniform(*cfg.visitor_stay_minutes))
        feasible = []
        for interval in stephane:
            if interval.location is not Location.OFFICE:
                continue
            low = interval.start + VISIT_LEAD
            high = interval.end - VISIT_MARGIN - stay
            if high > low:
                feasible.append((low, high))
        if not feasible:
            logger.warning(f"Визит на {stay} не помещается в присутствие Stephane")
            continue

        # Начало равномерно по объединению допустимых отрезков
        room = sum((high - low for low, high in feasible), timedelta())
        offset = timedelta(minutes=substream.uniform(0.0, room / timedelta(minutes=1)))
        for low, high in feasible:
            if offset <= high - low:
                start = low + offset
                break
            offset -= high - low
        else:
            start = feasible[-1][1]

        visit = PresenceInterval(start, start + stay, Location.OFFICE, "visit")
        if any(visit.start < other.end + VISIT_LEAD and other.start < visit.end + VISIT_LEAD for other in visits):
            logger.debug(f"Визит в {start:%H:%M} пересекается с другим и пропущен")
            continue
        visits.append(visit)
    return tuple(sorted(visits, key=lambda visit: visit.start))


def realize_presence(cfg: ScenarioConfig, day: date, substream: RandomStream) -> PresenceCalendar:
    """
    Разыгрывает распорядок дня из конфигурации.

    Приходы упорядочены Khadija <= Stephane <= Audrey: нарушающие выборки
    перетягиваются (до 100 раз), затем берутся упорядоченные средние.
    Stephane уходит на лекции и встречи в свои дни, Audrey приходит только
    в свои недели, визиты попадают в присутствие Stephane в офисе.

    Args:
        cfg (ScenarioConfig): Конфигурация
        day (date): День
        substream (RandomStream): Поток сценария для этого дня

    Returns:
        PresenceCalendar: Распорядок дня
    """
    if day.weekday() >= 5:
        return PresenceCalendar(day, {name: () for name in AGENT_ORDER})

    midnight = datetime.combine(day, time())

    def at(minutes: float) -> datetime:
        return midnight + timedelta(minutes=minutes)

    def window(tw) -> tuple:
        return at(tw.bounds[0]), at(tw.bounds[1])

    present = [KHADIJA, STEPHANE] + ([AUDREY] if audrey_present_on(cfg, day) else [])
    arrivals = _arrivals(cfg, present, substream)
    departures = {name: _draw(getattr(cfg, f"{name.lower()}_departure"), substream) for name in present}

    lunch = (*window(cfg.lunch_window), Location.CAFETERIA, "lunch")
    intervals = {name: () for name in AGENT_ORDER}
    for name in present:
        blocks = [lunch]
        if name == STEPHANE:
            if day.weekday() in cfg.stephane_lecture_days:
                blocks.append((*window(cfg.lecture_window), Location.LECTURE, "lecture"))
            if day.weekday() in cfg.stephane_meeting_days:
                blocks.append((*window(cfg.meeting_window), Location.MEETING_ROOM, "meeting"))
        intervals[name] = _day_plan(at(arrivals[name]), at(departures[name]), blocks)

    coffee_at = at(_draw(cfg.coffee_time, substream))
    intervals[VISITORS] = _visits(cfg, intervals[STEPHANE], substream)
    return PresenceCalendar(day, intervals, coffee_at)


class ScenarioPlanner:
    """Лениво разыгрывает распорядки дней и отдаёт убеждения агентам сценария."""

    def __init__(self, cfg: ScenarioConfig, seed: int, tick_length: timedelta = DEFAULT_TICK):
        self.cfg = cfg
        self.seed = seed
        self.tick_length = tick_length
        self._calendars: dict = {}
        self._schedule_clock = None
        self._schedule: dict = {}

    def calendar(self, day: date) -> PresenceCalendar:
        if day not in self._calendars:
            substream = RandomStream.derive(self.seed, f"presence:{day.isoformat()}")
            self._calendars[day] = realize_presence(self.cfg, day, substream)
        return self._calendars[day]

    def schedule_at(self, moment: datetime) -> dict:
        if moment != self._schedule_clock:
            calendar = self.calendar(moment.date())
            self._schedule = {name: calendar.at(name, moment) for name in AGENT_ORDER}
            self._schedule_clock = moment
        return self._schedule

    def perceive(self, agent: AgentState, snapshot) -> None:
        beliefs = agent.beliefs
        clock = snapshot.clock
        today = clock.date()
        calendar = self.calendar(today)
        now = self.schedule_at(clock)

        mine = now[agent.name]
        beliefs["scheduled"] = mine.location if mine else Location.AWAY
        beliefs["activity"] = mine.activity if mine else "off"
        beliefs["others_staying"] = frozenset(
            name
            for name in snapshot.present
            if name != agent.name and now[name] is not None and now[name].location is Location.OFFICE
        )
        beliefs["audrey_in_office"] = AUDREY in snapshot.present
        beliefs["audrey_at_work"] = calendar.at_work(AUDREY)
        beliefs["stephane_in_office"] = STEPHANE in snapshot.present
        beliefs["visitor_in_office"] = VISITORS in snapshot.present
        beliefs["just_entered"] = (
            beliefs["previous_location"] is not Location.OFFICE and agent.location is Location.OFFICE
        )
        beliefs["opened_on_entry"] = (
            beliefs["just_entered"] and not beliefs["previous_door_open"] and snapshot.door_open
        )

        beliefs["coffee_at"] = calendar.coffee_at
        invited = agent.memory.get("invite_for_coffee")
        beliefs["invited_at"] = invited if invited is not None and invited.date() == today else None
        beliefs["coffee_done"] = any(
            agent.memory.get(rule) is not None and agent.memory[rule].date() == today
            for rule in COFFEE_DEPARTURES
        )
        replies = dict(beliefs.get("coffee_replies", {})) if beliefs.get("replies_day") == today else {}
        invites = []
        for message in beliefs.get("inbox", ()):
            if message.topic in REPLY_TOPICS:
                replies[message.sender] = message.topic
            elif message.topic == INVITE:
                invites.append(message)
        beliefs["coffee_replies"] = replies
        beliefs["replies_day"] = today
        beliefs["coffee_invites"] = tuple(invites)


def _in_office(beliefs) -> bool:
    return beliefs["location"] is Location.OFFICE


def _leaving_for(activity):
    return lambda beliefs, clock: _in_office(beliefs) and beliefs["activity"] == activity


def _leaving_for_day(beliefs, clock) -> bool:
    return _in_office(beliefs) and beliefs["scheduled"] is Location.AWAY


def _should_enter(beliefs, clock) -> bool:
    return (
        not _in_office(beliefs)
        and beliefs["scheduled"] is Location.OFFICE
        and not beliefs["has_pending"]
    )


def _should_follow_schedule(beliefs, clock) -> bool:
    return (
        not _in_office(beliefs)
        and beliefs["scheduled"] is not Location.OFFICE
        and beliefs["location"] is not beliefs["scheduled"]
        and not beliefs["has_pending"]
    )


def _invited_to_coffee(beliefs, clock) -> bool:
    return _in_office(beliefs) and bool(beliefs["coffee_invites"])


def _follow_schedule(agent: AgentState, clock: datetime) -> Intention:
    return Intention("follow_schedule", (move_to(agent.beliefs["scheduled"]),))


def _resume(entry):
    """Возврат после отлучки: в офис по привычке агента или туда, где он должен быть."""

    def resume(agent: AgentState, clock: datetime) -> Intention:
        if agent.beliefs["scheduled"] is Location.OFFICE:
            return entry(agent, clock)
        return Intention("resume_schedule", (move_to(agent.beliefs["scheduled"]),))

    return resume


def _lunch_rule(priority: int) -> Rule:
    # Уходя на обед, дверь закрывает каждый
    return Rule("go_to_lunch", _leaving_for("lunch"), (move_to(Location.CAFETERIA), CLOSE_DOOR), priority=priority)


def khadija(cfg: ScenarioConfig, planner: ScenarioPlanner) -> AgentState:
    coffee_break = timedelta(minutes=cfg.coffee_minutes)
    reply_wait = 2 * planner.tick_length

    def enter(agent, clock):
        # Первый пришедший открывает дверь
        door = LEAVE_DOOR if agent.beliefs["door_open"] else OPEN_DOOR
        return Intention("enter_office", (move_to(Location.OFFICE), door))

    def leave_for_day(agent, clock):
        door = LEAVE_DOOR if agent.beliefs["others_staying"] else CLOSE_DOOR
        return Intention("leave_for_day", (move_to(Location.AWAY), door))

    def invite(agent, clock):
        beliefs = agent.beliefs
        actions = []
        if beliefs["stephane_in_office"]:
            actions.append(send(KHADIJA, STEPHANE, INVITE))
        if beliefs["audrey_in_office"]:
            actions.append(send(KHADIJA, AUDREY, INVITE))
        return Intention("invite_for_coffee", tuple(actions))

    def leave_for_coffee(agent, clock):
        beliefs = agent.beliefs
        replies = beliefs["coffee_replies"]
        if replies.get(STEPHANE) == BRING_COFFEE and not beliefs["audrey_at_work"]:
            # С кофе в каждой руке дверь на обратном пути не открыть
            door = OPEN_DOOR
        elif replies.get(AUDREY) == JOIN:
            door = LEAVE_DOOR
        else:
            staying = beliefs["others_staying"] - ({STEPHANE} if replies.get(STEPHANE) == ACCEPT else set())
            door = LEAVE_DOOR if staying else CLOSE_DOOR
        return Intention(
            "leave_for_coffee",
            (move_to(Location.CAFETERIA), door),
            followups=((coffee_break, _resume(enter)),),
        )

    def coffee_alone(agent, clock):
        door = LEAVE_DOOR if agent.beliefs["others_staying"] else CLOSE_DOOR
        return Intention(
            "go_for_coffee_alone",
            (move_to(Location.CAFETERIA), door),
            followups=((coffee_break, _resume(enter)),),
        )

    def coffee_due(beliefs, clock) -> bool:
        return (
            _in_office(beliefs)
            and beliefs["activity"] == "work"
            and beliefs["coffee_at"] is not None
            and clock >= beliefs["coffee_at"]
            and beliefs["invited_at"] is None
            and not beliefs["coffee_done"]
        )

    rules = [
        _lunch_rule(60),
        Rule("leave_for_day", _leaving_for_day, leave_for_day, priority=50),
        Rule(
            "leave_for_coffee",
            lambda b, clock: _in_office(b)
            and b["invited_at"] is not None
            and not b["coffee_done"]
            and clock >= b["invited_at"] + reply_wait,
            leave_for_coffee,
            priority=45,
        ),
        # Утром, открыв дверь, обычно сразу её закрывает
        Rule(
            "close_after_opening",
            lambda b, clock: _in_office(b) and clock.hour < 12 and b["opened_on_entry"] and b["door_open"],
            CLOSE_DOOR,
            probability=cfg.p_khadija_close_after_morning_open,
            priority=40,
        ),
        Rule(
            "invite_for_coffee",
            lambda b, clock: coffee_due(b, clock) and (b["stephane_in_office"] or b["audrey_in_office"]),
            invite,
            priority=30,
        ),
        Rule(
            "go_for_coffee_alone",
            lambda b, clock: coffee_due(b, clock) and not b["stephane_in_office"] and not b["audrey_in_office"],
            coffee_alone,
            priority=25,
        ),
        Rule("enter_office", _should_enter, enter, priority=20),
        Rule("follow_schedule", _should_follow_schedule, _follow_schedule, priority=10),
    ]
    return AgentState(KHADIJA, rules=rules, perception_hook=planner.perceive)


def stephane(cfg: ScenarioConfig, planner: ScenarioPlanner) -> AgentState:
    coffee_break = timedelta(minutes=cfg.coffee_minutes)

    def door_habit(beliefs):
        # Без Audrey в офисе оставляет дверь открытой
        return CLOSE_DOOR if beliefs["audrey_in_office"] else OPEN_DOOR

    def enter(agent, clock):
        return Intention("enter_office", (move_to(Location.OFFICE), door_habit(agent.beliefs)))

    def leave_for(location, rule):
        def leave(agent, clock):
            return Intention(rule, (move_to(location), door_habit(agent.beliefs)))

        return leave

    def leave_for_day(agent, clock):
        beliefs = agent.beliefs
        door = door_habit(beliefs) if beliefs["others_staying"] else CLOSE_DOOR
        return Intention("leave_for_day", (move_to(Location.AWAY), door))

    def accept(agent, clock):
        go = Intention(
            "go_for_coffee",
            (move_to(Location.CAFETERIA), LEAVE_DOOR),
            followups=((coffee_break, _resume(enter)),),
        )
        return Intention(
            "accept_coffee",
            (send(STEPHANE, KHADIJA, ACCEPT),),
            followups=((planner.tick_length, go),),
        )

    rules = [
        _lunch_rule(60),
        Rule("leave_for_meeting", _leaving_for("meeting"), leave_for(Location.MEETING_ROOM, "leave_for_meeting"), priority=55),
        Rule("leave_for_lecture", _leaving_for("lecture"), leave_for(Location.LECTURE, "leave_for_lecture"), priority=54),
        Rule("leave_for_day", _leaving_for_day, leave_for_day, priority=50),
        Rule("accept_coffee", _invited_to_coffee, accept, probability=cfg.p_stephane_accepts_coffee, priority=42),
        Rule(
            "bring_me_coffee",
            _invited_to_coffee,
            (send(STEPHANE, KHADIJA, BRING_COFFEE),),
            probability=cfg.p_stephane_busy,
            priority=41,
        ),
        Rule("decline_coffee", _invited_to_coffee, (send(STEPHANE, KHADIJA, DECLINE),), priority=40),
        Rule("enter_office", _should_enter, enter, priority=20),
        Rule("follow_schedule", _should_follow_schedule, _follow_schedule, priority=10),
    ]
    return AgentState(STEPHANE, rules=rules, perception_hook=planner.perceive)


def audrey(cfg: ScenarioConfig, planner: ScenarioPlanner) -> AgentState:
    coffee_break = timedelta(minutes=cfg.coffee_minutes)
    enter = Intention("enter_office", (move_to(Location.OFFICE), CLOSE_DOOR))

    def join(agent, clock):
        # Закрывает дверь перед уходом в кафетерий
        go = Intention(
            "go_for_coffee",
            (CLOSE_DOOR, move_to(Location.CAFETERIA)),
            followups=((coffee_break, _resume(lambda agent, clock: enter)),),
        )
        return Intention("join_coffee", (send(AUDREY, KHADIJA, JOIN),), followups=((planner.tick_length, go),))

    rules = [
        # Сидит у самой двери и всегда её закрывает
        Rule(
            "close_door",
            lambda b, clock: _in_office(b) and b["door_open"] and not b["visitor_in_office"],
            CLOSE_DOOR,
            priority=90,
        ),
        _lunch_rule(60),
        Rule("leave_for_day", _leaving_for_day, (move_to(Location.AWAY), CLOSE_DOOR), priority=50),
        Rule("join_coffee", _invited_to_coffee, join, probability=cfg.p_audrey_joins_coffee, priority=42),
        Rule("decline_coffee", _invited_to_coffee, (send(AUDREY, KHADIJA, DECLINE),), priority=40),
        Rule("enter_office", _should_enter, enter.actions, priority=20),
        Rule("follow_schedule", _should_follow_schedule, _follow_schedule, priority=10),
    ]
    return AgentState(AUDREY, rules=rules, perception_hook=planner.perceive)


def visitors(cfg: ScenarioConfig, planner: ScenarioPlanner) -> AgentState:
    # Посетители чаще оставляют дверь открытой и при входе, и при уходе
    def leaving(b, clock) -> bool:
        return _in_office(b) and b["scheduled"] is not Location.OFFICE

    leave = (move_to(Location.AWAY),)
    arrive = (move_to(Location.OFFICE),)
    rules = [
        Rule("visitors_leave", leaving, leave + (OPEN_DOOR,), probability=cfg.p_visitors_leave_open, priority=40),
        Rule("visitors_leave_closing", leaving, leave + (CLOSE_DOOR,), priority=30),
        Rule("visitors_arrive", _should_enter, arrive + (OPEN_DOOR,), probability=cfg.p_visitors_leave_open, priority=20),
        Rule("visitors_arrive_closing", _should_enter, arrive + (CLOSE_DOOR,), priority=10),
    ]
    return AgentState(VISITORS, rules=rules, perception_hook=planner.perceive)


def build_scenario(
    cfg: ScenarioConfig,
    seed: int,
    start: datetime = DEFAULT_START,
    tick_length: timedelta = DEFAULT_TICK,
) -> World:
    """
    Собирает мир офиса: Khadija, Stephane, Audrey и посетители (в этом порядке).

    Args:
        cfg (ScenarioConfig): Конфигурация сценария
        seed (int): Глобальное зерно
        start (datetime): Начало моделирования (начало часа)
        tick_length (timedelta): Длина тика

    Returns:
        World: Мир, готовый к run()
    """
    if not isinstance(cfg, ScenarioConfig):
        cfg = parse_scenario_config(cfg)
    planner = ScenarioPlanner(cfg, seed, tick_length)
    agents = [builder(cfg, planner) for builder in (khadija, stephane, audrey, visitors)]
    world = World(start=start, seed=seed, tick_length=tick_length, agents=agents)
    world.context["planner"] = planner
    logger.debug(f"Сценарий собран: seed={seed}, начало {start.isoformat()}")
    return world
