import logging
import re
from dataclasses import dataclass
from datetime import datetime, timedelta
from enum import Enum, IntEnum

import pandas as pd

logger = logging.getLogger(__name__)

HOUR = timedelta(hours=1)
EVENT_HEADER = "timestamp,value"
STATE_HEADER = "hour,state"
# YYYY-MM-DDThh:mm[:ss[.ffffff]], местное время без пояса
LOCAL_TIMESTAMP = re.compile(r"\d{4}-\d{2}-\d{2}T\d{2}:\d{2}(:\d{2}(\.\d{1,6})?)?")


class ParseError(ValueError):
    """Ошибка разбора CSV с указанием номера строки."""

    def __init__(self, line_number, message):
        super().__init__(f"строка {line_number}: {message}")
        self.line_number = line_number


class DoorState(IntEnum):
    """Почасовое состояние двери. Порядок совпадает с вектором (P_o, P_m, P_c)."""

    OPEN = 0
    MOVE = 1
    CLOSED = 2

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "DoorState":
        try:
            return cls[label.strip().upper()]
        except KeyError:
            raise ValueError(f"Неизвестное состояние двери: {label!r}") from None


class Source(str, Enum):
    MEASURED = "measured"
    ASSUMED = "assumed"


def _check_hour(moment: datetime) -> None:
    if moment.minute or moment.second or moment.microsecond:
        raise ValueError(f"Час должен начинаться в :00, получено {moment.isoformat()}")


@dataclass(frozen=True)
class EventLog:
    """Журнал событий датчика контакта: пары (время, значение), 1 = открыто."""

    entries: tuple[tuple[datetime, int], ...] = ()

    def __post_init__(self):
        for timestamp, value in self.entries:
            if value not in (0, 1):
                raise ValueError(f"Значение {value} вне {{0, 1}} для {timestamp.isoformat()}")

    @classmethod
    def from_events(cls, events) -> "EventLog":
        """
        Сортирует события по времени; при совпадении времени остаётся последнее значение.

        Args:
            events: Итерируемое из пар (datetime, int)

        Returns:
            EventLog: Упорядоченный журнал
        """
        ordered: list[tuple[datetime, int]] = []
        for timestamp, value in sorted(events, key=lambda item: item[0]):
            if ordered and ordered[-1][0] == timestamp:
                ordered[-1] = (timestamp, value)
            else:
                ordered.append((timestamp, value))
        return cls(tuple(ordered))

    def __len__(self):
        return len(self.entries)


@dataclass(frozen=True)
class HourlyRatioSeries:
    """Почасовые доли открытия с пометкой источника (Measured или Assumed)."""

    start: datetime
    entries: tuple[tuple[float, Source], ...]

    def __post_init__(self):
        _check_hour(self.start)
        for ratio, _ in self.entries:
            if not 0.0 <= ratio <= 1.0:
                raise ValueError(f"Доля открытия {ratio} вне [0, 1]")

    @property
    def ratios(self) -> list[float]:
        return [ratio for ratio, _ in self.entries]

    @property
    def sources(self) -> list[Source]:
        return [source for _, source in self.entries]

    def hours(self) -> list[datetime]:
        return [self.start + i * HOUR for i in range(len(self.entries))]


@dataclass(frozen=True)
class StateSeries:
    """Непрерывный почасовой ряд состояний двери."""

    start: datetime
    states: tuple[DoorState, ...]

    def __post_init__(self):
        _check_hour(self.start)
        if not self.states:
            raise ValueError("Ряд состояний не может быть пустым")

    def __len__(self):
        return len(self.states)

    @property
    def last(self) -> datetime:
        return self.start + (len(self.states) - 1) * HOUR

    def hours(self) -> list[datetime]:
        return [self.start + i * HOUR for i in range(len(self.states))]

    def with_states(self, states) -> "StateSeries":
        return StateSeries(self.start, tuple(states))


@dataclass(frozen=True)
class Thresholds:
    """Пороги дискретизации: <= closed_max закрыто, >= open_min открыто."""

    closed_max: float = 0.2
    open_min: float = 0.8

    def __post_init__(self):
        if not 0.0 < self.closed_max < self.open_min < 1.0:
            raise ValueError(
                f"Нужно 0 < closed_max < open_min < 1, получено {self.closed_max}, {self.open_min}"
            )

    def classify(self, ratio: float) -> DoorState:
        # Крайние классы забирают границы, Move - открытый интервал
        if ratio <= self.closed_max:
            return DoorState.CLOSED
        if ratio >= self.open_min:
            return DoorState.OPEN
        return DoorState.MOVE


def parse_local_timestamp(stamp: str) -> datetime:
    """
    Разбирает метку времени строго вида YYYY-MM-DDThh:mm[:ss].

    Дата без времени, пробел вместо "T", сжатая запись и часовой пояс
    отвергаются, хотя datetime.fromisoformat их принимает.

    Args:
        stamp (str): Метка времени

    Returns:
        datetime: Местное время без часового пояса
    """
    if not LOCAL_TIMESTAMP.fullmatch(stamp):
        raise ValueError(f"некорректная дата {stamp!r}, ожидалось YYYY-MM-DDThh:mm:ss")
    try:
        return datetime.fromisoformat(stamp)
    except ValueError:
        raise ValueError(f"некорректная дата {stamp!r}") from None


def parse_event_log(text: str) -> EventLog:
    """
    Разбирает CSV с событиями датчика: "<ISO datetime>,<0|1>".

    Пустые строки и одна необязательная строка заголовка "timestamp,value"
    пропускаются. Допускаются окончания строк LF и CRLF.

    Args:
        text (str): Содержимое файла

    Returns:
        EventLog: Журнал событий
    """
    events = []
    seen_data = False
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip().lstrip("\ufeff")
        if not line:
            continue
        if not seen_data and line == EVENT_HEADER:
            seen_data = True
            continue
        seen_data = True

        fields = line.split(",")
        if len(fields) != 2:
            raise ParseError(line_number, f"ожидалось два поля, получено {len(fields)}")
        stamp, value = (field.strip() for field in fields)
        try:
            timestamp = parse_local_timestamp(stamp)
        except ValueError as e:
            raise ParseError(line_number, str(e)) from None
        if value not in ("0", "1"):
            raise ParseError(line_number, f"значение {value!r} вне {{0, 1}}")
        events.append((timestamp, int(value)))

    log = EventLog.from_events(events)
    logger.debug(f"Разобрано событий: {len(log)}")
    return log


def serialize_event_log(log: EventLog) -> str:
    """
    Пишет журнал в CSV с заголовком "timestamp,value" и окончаниями LF.

    Args:
        log (EventLog): Журнал событий

    Returns:
        str: Текст CSV
    """
    lines = [EVENT_HEADER]
    lines.extend(f"{timestamp.isoformat()},{value}" for timestamp, value in log.entries)
    return "\n".join(lines) + "\n"


def hourly_open_ratio(log: EventLog, first: datetime, last: datetime) -> HourlyRatioSeries:
    """
    Пересчитывает события в долю времени открытия для каждого часа диапазона.

    Между событиями дверь сохраняет последнее значение (удержание нулевого
    порядка). До первого события дверь считается закрытой, такие часы
    помечаются как Assumed. Час считается Measured, если хотя бы часть его
    покрыта значением датчика.

    Args:
        log (EventLog): Журнал событий
        first (datetime): Первый час диапазона
        last (datetime): Последний час диапазона (включительно)

    Returns:
        HourlyRatioSeries: Ряд долей открытия
    """
    _check_hour(first)
    _check_hour(last)
    if last < first:
        raise ValueError(f"Пустой диапазон: {first.isoformat()} > {last.isoformat()}")

    hours = pd.date_range(first, last, freq="h")
    if not log.entries:
        # Молчание датчика не ошибка: информации нет, дверь считаем закрытой
        return HourlyRatioSeries(first, tuple((0.0, Source.ASSUMED) for _ in hours))

    end = hours[-1] + pd.Timedelta(hours=1)
    events = pd.Series(
        [float(value) for _, value in log.entries],
        index=pd.DatetimeIndex([timestamp for timestamp, _ in log.entries]),
    )
    grid = hours.append(pd.DatetimeIndex([end]))
    held = events.reindex(events.index.union(grid)).ffill()
    held = held[(held.index >= grid[0]) & (held.index <= end)]

    seconds = held.index.to_series().diff().shift(-1).dt.total_seconds()
    segments = pd.DataFrame(
        {
            "open": held.fillna(0.0) * seconds,
            "measured": held.notna() * seconds,
        }
    ).iloc[:-1]
    per_hour = segments.groupby(segments.index.floor("h")).sum().reindex(hours, fill_value=0.0)

    entries = []
    for open_seconds, measured_seconds in zip(per_hour["open"], per_hour["measured"]):
        ratio = min(1.0, max(0.0, float(open_seconds) / HOUR.total_seconds()))
        source = Source.MEASURED if measured_seconds > 0 else Source.ASSUMED
        entries.append((ratio, source))
    return HourlyRatioSeries(first, tuple(entries))


def discretize(series: HourlyRatioSeries, th: Thresholds = Thresholds()) -> StateSeries:
    """
    Переводит доли открытия в состояния по порогам: ratio <= closed_max
    даёт Closed, ratio >= open_min даёт Open, остальное Move.

    Args:
        series (HourlyRatioSeries): Ряд долей открытия
        th (Thresholds): Пороги классификации

    Returns:
        StateSeries: Ряд состояний той же длины
    """
    return StateSeries(series.start, tuple(th.classify(ratio) for ratio in series.ratios))


def apply_closure_assumptions(series: StateSeries, schedule) -> StateSeries:
    """
    Закрывает дверь в выходные и ночью (часы ForcedClosed расписания).

    Args:
        series (StateSeries): Исходный ряд
        schedule (TimeSlotSchedule): Расписание временных слотов

    Returns:
        StateSeries: Ряд с принудительно закрытыми часами
    """
    return series.with_states(
        DoorState.CLOSED if schedule.is_forced_closed(hour) else state
        for hour, state in zip(series.hours(), series.states)
    )


def serialize_state_series(series: StateSeries) -> str:
    """Пишет ряд состояний в CSV "hour,state", одна строка на час."""
    lines = [STATE_HEADER]
    lines.extend(
        f"{hour.isoformat()},{state.label}" for hour, state in zip(series.hours(), series.states)
    )
    return "\n".join(lines) + "\n"


def parse_state_series(text: str) -> StateSeries:
    """
    Разбирает CSV "hour,state" в непрерывный почасовой ряд.

    Args:
        text (str): Содержимое файла

    Returns:
        StateSeries: Ряд состояний
    """
    start = None
    states: list[DoorState] = []
    seen_data = False
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip().lstrip("\ufeff")
        if not line:
            continue
        if not seen_data and line == STATE_HEADER:
            seen_data = True
            continue
        seen_data = True

        fields = line.split(",")
        if len(fields) != 2:
            raise ParseError(line_number, f"ожидалось два поля, получено {len(fields)}")
        try:
            hour = parse_local_timestamp(fields[0].strip())
            state = DoorState.from_label(fields[1])
        except ValueError as e:
            raise ParseError(line_number, str(e)) from None

        if start is None:
            if hour.minute or hour.second or hour.microsecond:
                raise ParseError(line_number, "час должен начинаться в :00")
            start = hour
        elif hour != start + len(states) * HOUR:
            raise ParseError(line_number, f"разрыв в почасовом ряду на {hour.isoformat()}")
        states.append(state)

    if start is None:
        raise ParseError(0, "ряд состояний пуст")
    return StateSeries(start, tuple(states))
