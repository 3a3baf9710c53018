import logging
from datetime import datetime, timedelta

from .ingest import HOUR, DoorState, EventLog
from .markov import MarkovModel, simulate
from .rng import RandomStream

logger = logging.getLogger(__name__)

# Все элементы >= 0.05: любой переход наблюдаем за два месяца
DEFAULT_FIXTURE_MODEL = MarkovModel(
    tm_working=[
        [0.60, 0.25, 0.15],
        [0.30, 0.40, 0.30],
        [0.10, 0.20, 0.70],
    ],
    tm_lunch=[
        [0.30, 0.20, 0.50],
        [0.15, 0.25, 0.60],
        [0.05, 0.10, 0.85],
    ],
)

MOVE_RANGE = (0.3, 0.7)
BRIEF_OPENING_MAX = 0.15
BRIEF_OPENING_PROBABILITY = 0.3
DEFAULT_LOSS = 0.02


def _realize_hour(hour: datetime, state: DoorState, noise: RandomStream) -> list:
    """События датчика внутри одного часа для заданного состояния."""
    minutes = 60.0
    if state is DoorState.OPEN:
        return [(hour, 1)]
    if state is DoorState.MOVE:
        fraction = noise.uniform(*MOVE_RANGE)
    elif noise.random() < BRIEF_OPENING_PROBABILITY:
        fraction = noise.uniform(0.01, BRIEF_OPENING_MAX - 0.01)
    else:
        return [(hour, 0)]

    duration = fraction * minutes
    offset = noise.uniform(0.0, minutes - duration)
    opened = hour + timedelta(seconds=round(offset * 60))
    closed = opened + timedelta(seconds=round(duration * 60))
    return [(hour, 0), (opened, 1), (closed, 0)]


def synthetic_event_log(
    model: MarkovModel,
    start: datetime,
    days: int,
    seed: int,
    loss: float = DEFAULT_LOSS,
) -> EventLog:
    """
    Синтетический журнал датчика двери по известной модели.

    Почасовые состояния моделируются цепью, затем каждый час превращается в
    события: Open - дверь открыта весь час, Move - открыта 30-70 % часа,
    Closed - закрыта, изредка кратко открывается (меньше 15 % часа).
    В журнал попадают только смены значения; каждое событие теряется с
    вероятностью loss, как потерянное радиосообщение датчика.

    Args:
        model (MarkovModel): Модель, порождающая состояния
        start (datetime): Начало (начало часа)
        days (int): Число суток
        seed (int): Зерно
        loss (float): Вероятность потери события

    Returns:
        EventLog: Журнал событий
    """
    if days < 1:
        raise ValueError(f"Число дней должно быть положительным: {days}")
    if not 0.0 <= loss < 1.0:
        raise ValueError(f"Вероятность потери {loss} вне [0, 1)")

    states = simulate(model, start, start + timedelta(days=days) - HOUR, RandomStream.derive(seed, "fixture:states"))
    noise = RandomStream.derive(seed, "fixture:events")

    events = []
    current = None
    for hour, state in zip(states.hours(), states.states):
        for timestamp, value in _realize_hour(hour, state, noise):
            if value == current:
                continue
            current = value
            if loss > 0.0 and noise.random() < loss:
                continue
            events.append((timestamp, value))

    log = EventLog.from_events(events)
    logger.info(f"Синтетический журнал: {days} дней, {len(log)} событий, seed={seed}")
    return log
