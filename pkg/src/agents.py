import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from enum import Enum
from typing import Any, Callable, Optional, Union

from .ingest import (
    HOUR,
    DoorState,
    EventLog,
    HourlyRatioSeries,
    Source,
    StateSeries,
    Thresholds,
    _check_hour,
    apply_closure_assumptions,
    discretize,
    hourly_open_ratio,
)
from .markov import MarkovModel, Slot, TimeSlotSchedule, step
from .rng import RandomStream

logger = logging.getLogger(__name__)

DEFAULT_TICK = timedelta(minutes=5)
HALF_HOUR = timedelta(minutes=30)
DOOR_EVENTS = ("open_door", "close_door")


class Location(str, Enum):
    OFFICE = "office"
    CORRIDOR = "corridor"
    CAFETERIA = "cafeteria"
    MEETING_ROOM = "meeting_room"
    LECTURE = "lecture"
    AWAY = "away"


class ActionKind(str, Enum):
    OPEN_DOOR = "open_door"
    CLOSE_DOOR = "close_door"
    LEAVE_DOOR = "leave_door"
    MOVE_TO = "move_to"
    SEND = "send"
    NOOP = "noop"


@dataclass(frozen=True)
class Message:
    sender: str
    recipient: str
    topic: str
    payload: Any = None


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    location: Optional[Location] = None
    message: Optional[Message] = None


OPEN_DOOR = Action(ActionKind.OPEN_DOOR)
CLOSE_DOOR = Action(ActionKind.CLOSE_DOOR)
LEAVE_DOOR = Action(ActionKind.LEAVE_DOOR)
NOOP = Action(ActionKind.NOOP)


def move_to(location: Location) -> Action:
    return Action(ActionKind.MOVE_TO, location=location)


def send(sender: str, recipient: str, topic: str, payload: Any = None) -> Action:
    return Action(ActionKind.SEND, message=Message(sender, recipient, topic, payload))


@dataclass(frozen=True)
class Intention:
    """Выбранный агентом план: действия сейчас и отложенные продолжения.

    followups - пары (задержка, намерение или фабрика намерения); они
    становятся обязательствами агента и исполняются в свой тик.
    """

    rule: str
    actions: tuple = ()
    followups: tuple = ()


IDLE = Intention("noop", (NOOP,))

Guard = Callable[[dict, datetime], bool]
PlanFactory = Callable[["AgentState", datetime], Intention]
Deferred = Union[Intention, PlanFactory]


@dataclass(frozen=True)
class Rule:
    """Правило: охранное условие, действие, вероятность срабатывания и приоритет."""

    name: str
    guard: Guard
    action: Union[Action, tuple, PlanFactory]
    probability: float = 1.0
    priority: int = 0

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError(f"Правило {self.name}: вероятность {self.probability} вне [0, 1]")

    def intention(self, agent: "AgentState", clock: datetime) -> Intention:
        if isinstance(self.action, Action):
            return Intention(self.name, (self.action,))
        if isinstance(self.action, tuple):
            return Intention(self.name, self.action)
        return self.action(agent, clock)


@dataclass(frozen=True)
class Perception:
    """Снимок мира до действий текущего тика; все агенты видят один и тот же."""

    clock: datetime
    door_open: bool
    last_hour_state: Optional[DoorState]
    locations: dict
    present: frozenset


@dataclass
class AgentState:
    name: str
    location: Location = Location.AWAY
    beliefs: dict = field(default_factory=dict)
    rules: list = field(default_factory=list)
    perception_hook: Optional[Callable[["AgentState", Perception], None]] = None
    uses_shared_stream: bool = False
    rng: Optional[RandomStream] = None
    pending: list = field(default_factory=list)
    memory: dict = field(default_factory=dict)

    def __post_init__(self):
        priorities = [rule.priority for rule in self.rules]
        if len(set(priorities)) != len(priorities):
            raise ValueError(f"У агента {self.name} повторяются приоритеты правил: {sorted(priorities)}")
        self.rules = sorted(self.rules, key=lambda rule: rule.priority, reverse=True)


@dataclass
class Door:
    """Дверь и накопитель минут открытия по часам."""

    is_open: bool = False
    open_minutes: dict = field(default_factory=dict)

    def accumulate(self, clock: datetime, tick_length: timedelta) -> None:
        hour = clock.replace(minute=0, second=0, microsecond=0)
        minutes = self.open_minutes.get(hour, 0.0)
        if self.is_open:
            minutes += tick_length.total_seconds() / 60.0
        self.open_minutes[hour] = minutes

    def ratio(self, hour: datetime) -> float:
        return min(1.0, self.open_minutes.get(hour, 0.0) / 60.0)


@dataclass(frozen=True)
class TraceEvent:
    time: datetime
    agent: str
    event: str
    detail: dict

    def to_dict(self) -> dict:
        return {"time": self.time.isoformat(), "agent": self.agent, "event": self.event, "detail": self.detail}


@dataclass
class World:
    """Состояние агентной модели: часы, дверь, агенты, очередь сообщений и трасса."""

    start: datetime
    seed: int = 0
    tick_length: timedelta = DEFAULT_TICK
    schedule: TimeSlotSchedule = field(default_factory=TimeSlotSchedule)
    thresholds: Thresholds = field(default_factory=Thresholds)
    door: Door = field(default_factory=Door)
    agents: list = field(default_factory=list)
    message_queue: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    context: dict = field(default_factory=dict)

    def __post_init__(self):
        _check_hour(self.start)
        if self.tick_length <= timedelta(0) or HALF_HOUR % self.tick_length:
            raise ValueError(f"Длина тика должна делить 30 минут, получено {self.tick_length}")
        self.clock = self.start
        self.initial_door_open = self.door.is_open
        # Общий поток: его расходует только групповой агент, как и simulate()
        self.rng = RandomStream(self.seed)
        agents, self.agents = self.agents, []
        for agent in agents:
            self.add_agent(agent)

    def add_agent(self, agent: AgentState) -> AgentState:
        if any(existing.name == agent.name for existing in self.agents):
            raise ValueError(f"Агент {agent.name} уже есть в мире")
        agent.rng = self.rng if agent.uses_shared_stream else RandomStream.derive(self.seed, agent.name)
        self.agents.append(agent)
        return agent

    def agent(self, name: str) -> AgentState:
        for agent in self.agents:
            if agent.name == name:
                return agent
        raise KeyError(name)

    def snapshot(self) -> Perception:
        previous_hour = self.clock.replace(minute=0, second=0, microsecond=0) - HOUR
        last_hour_state = None
        if previous_hour in self.door.open_minutes:
            last_hour_state = self.thresholds.classify(self.door.ratio(previous_hour))
        locations = {agent.name: agent.location for agent in self.agents}
        present = frozenset(name for name, location in locations.items() if location is Location.OFFICE)
        return Perception(self.clock, self.door.is_open, last_hour_state, locations, present)

    def record(self, agent: str, event: str, detail: dict) -> None:
        self.trace.append(TraceEvent(self.clock, agent, event, detail))


def perceive(agent: AgentState, snapshot: Perception) -> None:
    beliefs = agent.beliefs
    beliefs["previous_location"] = beliefs.get("location", agent.location)
    beliefs["previous_door_open"] = beliefs.get("door_open", snapshot.door_open)
    beliefs.update(
        clock=snapshot.clock,
        weekday=snapshot.clock.weekday(),
        door_open=snapshot.door_open,
        door_state=snapshot.last_hour_state,
        location=agent.location,
        locations=snapshot.locations,
        present=snapshot.present,
        has_pending=bool(agent.pending),
    )
    if agent.perception_hook is not None:
        agent.perception_hook(agent, snapshot)


def select_intention(agent: AgentState, clock: datetime) -> Intention:
    """
    Выбирает намерение: правила просматриваются по убыванию приоритета.

    Первое правило с истинным условием проходит вероятностную проверку на
    собственном потоке агента; при неудаче просмотр продолжается. Вероятности
    0 и 1 решаются без розыгрыша.

    Args:
        agent (AgentState): Агент
        clock (datetime): Текущее время

    Returns:
        Intention: Намерение агента (IDLE, если ничего не сработало)
    """
    for rule in agent.rules:
        if not rule.guard(agent.beliefs, clock):
            continue
        if rule.probability <= 0.0:
            continue
        if rule.probability < 1.0 and agent.rng.random() >= rule.probability:
            continue
        return rule.intention(agent, clock)
    return IDLE


def _resolve(deferred: Deferred, agent: AgentState, clock: datetime) -> Intention:
    return deferred if isinstance(deferred, Intention) else deferred(agent, clock)


def _deliberate(agent: AgentState, clock: datetime) -> Intention:
    # Принятые обязательства важнее нового выбора
    if agent.pending and agent.pending[0][0] <= clock:
        _, deferred = agent.pending.pop(0)
        return _resolve(deferred, agent, clock)
    return select_intention(agent, clock)


def _deliver_messages(world: World) -> None:
    inboxes = {agent.name: [] for agent in world.agents}
    for message in world.message_queue:
        if message.recipient in inboxes:
            inboxes[message.recipient].append(message)
        else:
            logger.warning(f"Сообщение {message.topic!r} для неизвестного агента {message.recipient}")
    world.message_queue = []
    for agent in world.agents:
        agent.beliefs["inbox"] = tuple(inboxes[agent.name])


def _execute(world: World, agent: AgentState, intention: Intention) -> None:
    acted = False
    for action in intention.actions:
        kind = action.kind
        if kind is ActionKind.NOOP:
            continue
        acted = True
        if kind is ActionKind.OPEN_DOOR:
            world.door.is_open = True
            world.record(agent.name, kind.value, {"rule": intention.rule})
        elif kind is ActionKind.CLOSE_DOOR:
            world.door.is_open = False
            world.record(agent.name, kind.value, {"rule": intention.rule})
        elif kind is ActionKind.LEAVE_DOOR:
            world.record(agent.name, kind.value, {"rule": intention.rule})
        elif kind is ActionKind.MOVE_TO:
            agent.location = action.location
            world.record(agent.name, kind.value, {"rule": intention.rule, "location": action.location.value})
        elif kind is ActionKind.SEND:
            world.message_queue.append(action.message)
            world.record(
                agent.name,
                kind.value,
                {"rule": intention.rule, "recipient": action.message.recipient, "topic": action.message.topic},
            )
    if acted:
        agent.memory[intention.rule] = world.clock
    for delay, deferred in intention.followups:
        agent.pending.append((world.clock + delay, deferred))
    agent.pending.sort(key=lambda item: item[0])


def tick(world: World) -> World:
    """
    Один шаг модели. Фазы идут в фиксированном порядке:

    1. доставка сообщений прошлого тика во входящие получателей;
    2. восприятие: каждый агент обновляет убеждения по одному снимку мира;
    3. выбор намерений по правилам (или принятых ранее обязательств);
    4. исполнение в порядке списка агентов, последнее действие с дверью побеждает;
    5. накопление времени открытия двери и сдвиг часов.

    Мир изменяется на месте и возвращается.
    """
    _deliver_messages(world)
    snapshot = world.snapshot()
    for agent in world.agents:
        perceive(agent, snapshot)
    intentions = [_deliberate(agent, world.clock) for agent in world.agents]
    for agent, intention in zip(world.agents, intentions):
        _execute(world, agent, intention)
    world.door.accumulate(world.clock, world.tick_length)
    world.clock += world.tick_length
    return world


def door_series(world: World, until: datetime) -> StateSeries:
    """Дискретизирует накопленные доли открытия и применяет допущения о закрытии."""
    hours = int((until - world.start) / HOUR)
    ratios = HourlyRatioSeries(
        world.start,
        tuple((world.door.ratio(world.start + i * HOUR), Source.MEASURED) for i in range(hours)),
    )
    return apply_closure_assumptions(discretize(ratios, world.thresholds), world.schedule)


def run(world: World, until: datetime) -> tuple[World, StateSeries]:
    """
    Выполняет тики, пока часы мира не достигнут until.

    Args:
        world (World): Мир
        until (datetime): Момент окончания (начало часа)

    Returns:
        tuple: (мир, почасовой ряд состояний двери с начала мира)
    """
    _check_hour(until)
    if until <= world.clock:
        raise ValueError(f"Момент окончания {until.isoformat()} не позже часов мира {world.clock.isoformat()}")
    while world.clock < until:
        tick(world)
    logger.debug(f"Прогон до {until.isoformat()}: {len(world.trace)} событий в трассе")
    return world, door_series(world, until)


def door_event_log(trace, start: datetime, initial_open: bool = False) -> EventLog:
    """Превращает действия с дверью из трассы в журнал событий датчика."""
    events = [(start, int(initial_open))]
    events.extend((event.time, int(event.event == "open_door")) for event in trace if event.event in DOOR_EVENTS)
    return EventLog.from_events(events)


def replay_door(
    trace,
    start: datetime,
    until: datetime,
    initial_open: bool = False,
    thresholds: Thresholds = Thresholds(),
    schedule: TimeSlotSchedule = TimeSlotSchedule(),
) -> StateSeries:
    """
    Восстанавливает почасовые состояния по событиям двери в трассе.

    Args:
        trace: События трассы мира
        start (datetime): Начало моделирования
        until (datetime): Конец моделирования (не включительно)
        initial_open (bool): Открыта ли дверь в начале
        thresholds (Thresholds): Пороги дискретизации
        schedule (TimeSlotSchedule): Расписание для принудительного закрытия

    Returns:
        StateSeries: Почасовой ряд состояний
    """
    ratios = hourly_open_ratio(door_event_log(trace, start, initial_open), start, until - HOUR)
    return apply_closure_assumptions(discretize(ratios, thresholds), schedule)


def export_trace(world: World) -> str:
    """Трасса мира в JSON Lines, одно событие на строку."""
    return "".join(json.dumps(event.to_dict(), ensure_ascii=False) + "\n" for event in world.trace)


def group_agent(model: MarkovModel, name: str = "Group") -> AgentState:
    """
    Групповой агент, поведение которого и есть цепь Маркова.

    В начале каждого часа агент воспринимает состояние двери за прошлый час,
    выбирает следующее состояние функцией step на общем потоке мира и
    удерживает дверь на весь час: Open - открыта, Closed - закрыта, Move -
    открыта ровно первую половину часа. В закрытых слотах дверь закрывается
    без розыгрыша.

    Args:
        model (MarkovModel): Модель цепи
        name (str): Имя агента

    Returns:
        AgentState: Агент, использующий общий поток мира
    """

    def hourly_step(agent: AgentState, clock: datetime) -> Intention:
        slot = model.schedule.slot_of(clock)
        if slot is Slot.FORCED_CLOSED:
            return Intention("forced_closure", (CLOSE_DOOR,))
        previous = agent.beliefs.get("door_state")
        if previous is None:
            previous = model.initial_state
        state = step(previous, model.matrix_for(slot), agent.rng)
        if state is DoorState.OPEN:
            return Intention("markov_step", (OPEN_DOOR,))
        if state is DoorState.CLOSED:
            return Intention("markov_step", (CLOSE_DOOR,))
        return Intention(
            "markov_step",
            (OPEN_DOOR,),
            followups=((HALF_HOUR, Intention("markov_half_hour", (CLOSE_DOOR,))),),
        )

    rule = Rule(
        name="markov_step",
        guard=lambda beliefs, clock: clock.minute == 0,
        action=hourly_step,
        priority=1,
    )
    return AgentState(name=name, location=Location.OFFICE, rules=[rule], uses_shared_stream=True)
