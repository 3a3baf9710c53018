import json
import logging
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum

import numpy as np

from .ingest import HOUR, DoorState, StateSeries, _check_hour

logger = logging.getLogger(__name__)

N_STATES = len(DoorState)
ROW_TOLERANCE = 1e-9
DEFAULT_WEEKEND_DAYS = frozenset({5, 6})


class InsufficientDataError(ValueError):
    pass


class ModelValidationError(ValueError):
    pass


class Slot(str, Enum):
    WORKING = "working"
    LUNCH = "lunch"
    FORCED_CLOSED = "forced_closed"


@dataclass(frozen=True)
class TimeSlotSchedule:
    """Расписание временных слотов: рабочее время, обед, остальное закрыто."""

    working_hours: frozenset = field(default_factory=lambda: frozenset([*range(8, 12), *range(14, 20)]))
    lunch_hours: frozenset = field(default_factory=lambda: frozenset({12, 13}))
    weekend_days: frozenset = DEFAULT_WEEKEND_DAYS

    def __post_init__(self):
        object.__setattr__(self, "working_hours", frozenset(self.working_hours))
        object.__setattr__(self, "lunch_hours", frozenset(self.lunch_hours))
        object.__setattr__(self, "weekend_days", frozenset(self.weekend_days))
        if self.working_hours & self.lunch_hours:
            raise ValueError(
                f"Рабочие и обеденные часы пересекаются: {sorted(self.working_hours & self.lunch_hours)}"
            )
        for hour in self.working_hours | self.lunch_hours:
            if not (isinstance(hour, int) and 0 <= hour <= 23):
                raise ValueError(f"Час вне 0..23: {hour!r}")
        for day in self.weekend_days:
            if not (isinstance(day, int) and 0 <= day <= 6):
                raise ValueError(f"День недели вне 0..6: {day!r}")

    def slot_of(self, t: datetime) -> Slot:
        if t.weekday() in self.weekend_days:
            return Slot.FORCED_CLOSED
        if t.hour in self.lunch_hours:
            return Slot.LUNCH
        if t.hour in self.working_hours:
            return Slot.WORKING
        return Slot.FORCED_CLOSED

    def is_forced_closed(self, t: datetime) -> bool:
        return self.slot_of(t) is Slot.FORCED_CLOSED


def slot_of(t: datetime, schedule: TimeSlotSchedule = TimeSlotSchedule()) -> Slot:
    return schedule.slot_of(t)


def validate_transition_matrix(tm, name="tm") -> np.ndarray:
    """
    Проверяет стохастичность матрицы переходов 3x3.

    Args:
        tm: Матрица (вложенные списки или ndarray)
        name (str): Имя матрицы для сообщения об ошибке

    Returns:
        np.ndarray: Матрица float64
    """
    try:
        matrix = np.asarray(tm, dtype=float)
    except (TypeError, ValueError):
        raise ModelValidationError(f"{name}: не числовая матрица") from None
    if matrix.shape != (N_STATES, N_STATES):
        raise ModelValidationError(f"{name}: ожидалась матрица 3x3, получено {matrix.shape}")
    if not np.all(np.isfinite(matrix)) or np.any(matrix < 0.0) or np.any(matrix > 1.0):
        raise ModelValidationError(f"{name}: элементы должны лежать в [0, 1]")
    row_sums = matrix.sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > ROW_TOLERANCE):
        raise ModelValidationError(f"{name}: суммы строк {row_sums.tolist()} не равны 1")
    return matrix


@dataclass(frozen=True, eq=False)
class MarkovModel:
    """Две матрицы переходов (рабочее время и обед), расписание и начальное состояние."""

    tm_working: np.ndarray
    tm_lunch: np.ndarray
    schedule: TimeSlotSchedule = field(default_factory=TimeSlotSchedule)
    initial_state: DoorState = DoorState.CLOSED

    def __post_init__(self):
        object.__setattr__(self, "tm_working", validate_transition_matrix(self.tm_working, "tm_working"))
        object.__setattr__(self, "tm_lunch", validate_transition_matrix(self.tm_lunch, "tm_lunch"))

    def matrix_for(self, slot: Slot) -> np.ndarray:
        if slot is Slot.WORKING:
            return self.tm_working
        if slot is Slot.LUNCH:
            return self.tm_lunch
        raise ValueError("Для закрытого слота матрицы нет")

    def to_dict(self) -> dict:
        """
        Поля файла модели. weekend_days пишется, только если отличается от {5, 6}.

        Returns:
            dict: Словарь, пригодный для json.dumps
        """
        data = {
            "tm_working": self.tm_working.tolist(),
            "tm_lunch": self.tm_lunch.tolist(),
            "working_hours": sorted(self.schedule.working_hours),
            "lunch_hours": sorted(self.schedule.lunch_hours),
            "initial_state": self.initial_state.label,
        }
        if self.schedule.weekend_days != DEFAULT_WEEKEND_DAYS:
            data["weekend_days"] = sorted(self.schedule.weekend_days)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "MarkovModel":
        """
        Восстанавливает модель из словаря файла и проверяет все инварианты.

        Args:
            data (dict): Разобранный JSON

        Returns:
            MarkovModel: Модель
        """
        expected = {"tm_working", "tm_lunch", "working_hours", "lunch_hours", "initial_state"}
        if not isinstance(data, dict):
            raise ModelValidationError("Файл модели должен содержать JSON-объект")
        missing = expected - data.keys()
        if missing:
            raise ModelValidationError(f"В модели нет полей: {sorted(missing)}")
        unknown = data.keys() - expected - {"weekend_days"}
        if unknown:
            raise ModelValidationError(f"Неизвестные поля модели: {sorted(unknown)}")
        try:
            schedule = TimeSlotSchedule(
                working_hours=frozenset(data["working_hours"]),
                lunch_hours=frozenset(data["lunch_hours"]),
                weekend_days=frozenset(data.get("weekend_days", DEFAULT_WEEKEND_DAYS)),
            )
            initial_state = DoorState.from_label(str(data["initial_state"]))
        except (TypeError, ValueError) as e:
            raise ModelValidationError(str(e)) from None
        return cls(data["tm_working"], data["tm_lunch"], schedule, initial_state)


def save_model(model: MarkovModel) -> str:
    """Сериализует модель в JSON с отступом 2 и переводом строки в конце."""
    return json.dumps(model.to_dict(), indent=2) + "\n"


def load_model(text: str) -> MarkovModel:
    """
    Разбирает JSON модели.

    Args:
        text (str): Содержимое файла модели

    Returns:
        MarkovModel: Проверенная модель
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelValidationError(f"Некорректный JSON модели: {e}") from None
    return MarkovModel.from_dict(data)


def count_transitions(series: StateSeries, schedule: TimeSlotSchedule) -> tuple[np.ndarray, np.ndarray]:
    """
    Считает переходы между соседними часами отдельно для каждого слота.

    Переход t -> t+1 относится к слоту часа назначения t+1; переходы в
    часы ForcedClosed не считаются.

    Args:
        series (StateSeries): Почасовой ряд состояний
        schedule (TimeSlotSchedule): Расписание слотов

    Returns:
        tuple: Матрицы счётчиков (рабочее время, обед), int64 3x3
    """
    if len(series) < 2:
        raise InsufficientDataError("insufficient data: нужно минимум два часа наблюдений")

    counts = {
        Slot.WORKING: np.zeros((N_STATES, N_STATES), dtype=np.int64),
        Slot.LUNCH: np.zeros((N_STATES, N_STATES), dtype=np.int64),
    }
    hours = series.hours()
    for i in range(1, len(series)):
        slot = schedule.slot_of(hours[i])
        if slot is Slot.FORCED_CLOSED:
            continue
        counts[slot][series.states[i - 1], series.states[i]] += 1
    return counts[Slot.WORKING], counts[Slot.LUNCH]


def normalize(counts) -> np.ndarray:
    """Делит строки на их суммы; строка без наблюдений становится петлёй."""
    counts = np.asarray(counts, dtype=float)
    row_sums = counts.sum(axis=1, keepdims=True)
    tm = np.divide(counts, row_sums, out=np.zeros_like(counts), where=row_sums > 0)
    for i in np.flatnonzero(row_sums[:, 0] == 0):
        tm[i, i] = 1.0
    return validate_transition_matrix(tm)


def step(current: DoorState, tm: np.ndarray, rng) -> DoorState:
    """
    Выбирает следующее состояние по строке матрицы (функция D).

    Полуоткрытые интервалы [0, P_o), [P_o, P_o + P_m), [P_o + P_m, 1)
    разбивают [0, 1).

    Args:
        current (DoorState): Текущее состояние
        tm (np.ndarray): Матрица переходов
        rng (RandomStream): Поток случайных чисел

    Returns:
        DoorState: Следующее состояние
    """
    p_open, p_move, p_closed = tm[current]
    r = rng.random()
    if r < p_open:
        return DoorState.OPEN
    if r < p_open + p_move:
        return DoorState.MOVE
    if p_closed > 0.0:
        return DoorState.CLOSED
    # Хвост интервала от округления суммы не должен выбирать нулевую вероятность
    return DoorState.MOVE if p_move > 0.0 else DoorState.OPEN


def simulate(model: MarkovModel, first: datetime, last: datetime, rng) -> StateSeries:
    """
    Моделирует почасовые состояния двери цепью Маркова.

    В часы ForcedClosed выдаётся Closed без расхода случайных чисел; эти
    часы участвуют в цепочке, поэтому каждое утро начинается с Closed.

    Args:
        model (MarkovModel): Модель
        first (datetime): Первый час
        last (datetime): Последний час (включительно)
        rng (RandomStream): Поток случайных чисел

    Returns:
        StateSeries: Смоделированный ряд
    """
    _check_hour(first)
    _check_hour(last)
    if last < first:
        raise ValueError(f"Пустой диапазон: {first.isoformat()} > {last.isoformat()}")

    states = []
    previous = model.initial_state
    hour = first
    while hour <= last:
        slot = model.schedule.slot_of(hour)
        if slot is Slot.FORCED_CLOSED:
            current = DoorState.CLOSED
        else:
            current = step(previous, model.matrix_for(slot), rng)
        states.append(current)
        previous = current
        hour += HOUR
    return StateSeries(first, tuple(states))


def empirical_tm(series: StateSeries, schedule: TimeSlotSchedule) -> tuple[np.ndarray, np.ndarray]:
    """
    Оценивает матрицы переходов по ряду: счётчики по слотам, затем нормировка строк.

    Args:
        series (StateSeries): Почасовой ряд состояний
        schedule (TimeSlotSchedule): Расписание слотов

    Returns:
        tuple: Матрицы (рабочее время, обед), строки суммируются в 1
    """
    working, lunch = count_transitions(series, schedule)
    return normalize(working), normalize(lunch)


def fit_model(
    series: StateSeries,
    schedule: TimeSlotSchedule = TimeSlotSchedule(),
    initial_state: DoorState = DoorState.CLOSED,
) -> MarkovModel:
    """
    Строит модель по наблюдённому ряду.

    Args:
        series (StateSeries): Ряд не короче двух часов
        schedule (TimeSlotSchedule): Расписание слотов
        initial_state (DoorState): Начальное состояние для моделирования

    Returns:
        MarkovModel: Оценённая модель
    """
    tm_working, tm_lunch = empirical_tm(series, schedule)
    logger.info(f"Модель оценена по {len(series)} часам, начиная с {series.start.isoformat()}")
    return MarkovModel(tm_working, tm_lunch, schedule, initial_state)


def state_probabilities(model: MarkovModel, first: datetime, last: datetime) -> np.ndarray:
    """
    Распространяет вектор вероятностей P(t) = P(t-1) x TM по диапазону.

    В часы ForcedClosed вектор сбрасывается в (0, 0, 1).

    Args:
        model (MarkovModel): Модель
        first (datetime): Первый час
        last (datetime): Последний час (включительно)

    Returns:
        np.ndarray: Массив (часы x 3) вероятностей (P_o, P_m, P_c)
    """
    _check_hour(first)
    _check_hour(last)
    closed = np.eye(N_STATES)[DoorState.CLOSED]
    probabilities = []
    current = np.eye(N_STATES)[model.initial_state]
    hour = first
    while hour <= last:
        slot = model.schedule.slot_of(hour)
        current = closed if slot is Slot.FORCED_CLOSED else current @ model.matrix_for(slot)
        probabilities.append(current)
        hour += HOUR
    return np.array(probabilities)
