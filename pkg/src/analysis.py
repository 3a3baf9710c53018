import json
import logging
from dataclasses import dataclass, field
from datetime import datetime
from typing import Optional

import numpy as np
import pandas as pd

from .ingest import DoorState, StateSeries
from .markov import MarkovModel, TimeSlotSchedule, count_transitions, normalize, state_probabilities

logger = logging.getLogger(__name__)

HOURS_PER_DAY = 24
# Move - середина полосы 20-80 %
OPEN_FRACTION = {DoorState.OPEN: 1.0, DoorState.MOVE: 0.5, DoorState.CLOSED: 0.0}
SOURCES = ("recorded", "markov", "agent")
PROFILE_HEADER = "hour,recorded,markov,agent"


class RangeMismatchError(ValueError):
    pass


def _check_same_range(a: StateSeries, b: StateSeries) -> None:
    if a.start != b.start or len(a) != len(b):
        raise RangeMismatchError(
            f"Диапазоны не совпадают: {a.start.isoformat()}+{len(a)}ч и {b.start.isoformat()}+{len(b)}ч"
        )


def hourly_profile(series: StateSeries) -> np.ndarray:
    """
    Средняя доля открытия по часам суток (Open=1, Move=0.5, Closed=0).

    Args:
        series (StateSeries): Почасовой ряд состояний

    Returns:
        np.ndarray: 24 значения в [0, 1]; часы без наблюдений дают 0
    """
    index = pd.DatetimeIndex(series.hours())
    fractions = pd.Series([OPEN_FRACTION[state] for state in series.states], index=index)
    profile = fractions.groupby(index.hour).mean().reindex(range(HOURS_PER_DAY), fill_value=0.0)
    return profile.to_numpy(dtype=float)


def average_profile(runs) -> np.ndarray:
    """
    Усредняет почасовые профили нескольких прогонов.

    Args:
        runs: Итерируемое из StateSeries

    Returns:
        np.ndarray: 24 значения в [0, 1]
    """
    runs = list(runs)
    if not runs:
        raise ValueError("Нет прогонов для усреднения профиля")
    return np.mean([hourly_profile(series) for series in runs], axis=0)


def expected_profile(model: MarkovModel, first: datetime, last: datetime) -> np.ndarray:
    """Аналитический профиль модели по распространённым вероятностям состояний."""
    probabilities = state_probabilities(model, first, last)
    weights = np.array([OPEN_FRACTION[state] for state in DoorState])
    index = pd.date_range(first, last, freq="h")
    fractions = pd.Series(probabilities @ weights, index=index)
    profile = fractions.groupby(index.hour).mean().reindex(range(HOURS_PER_DAY), fill_value=0.0)
    return profile.to_numpy(dtype=float)


def state_match_rate(a: StateSeries, b: StateSeries) -> float:
    """
    Доля часов, в которых состояния двух рядов совпадают.

    Args:
        a (StateSeries): Первый ряд
        b (StateSeries): Второй ряд с тем же диапазоном часов

    Returns:
        float: Значение в [0, 1]
    """
    _check_same_range(a, b)
    matches = np.asarray(a.states) == np.asarray(b.states)
    return float(matches.mean())


def profile_tvd(p, q) -> float:
    """Половина среднего модуля разности профилей; лежит в [0, 0.5]."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"Профили разной длины: {p.shape} и {q.shape}")
    return float(0.5 * np.mean(np.abs(p - q)))


def tm_max_dev(runs, recorded: StateSeries, schedule: TimeSlotSchedule) -> dict:
    """
    Наибольшее отклонение эмпирических матриц прогонов от записанных данных.

    Счётчики переходов всех прогонов суммируются до нормировки.

    Returns:
        dict: {"working": float, "lunch": float}
    """
    recorded_working, recorded_lunch = count_transitions(recorded, schedule)
    pooled_working = np.zeros_like(recorded_working)
    pooled_lunch = np.zeros_like(recorded_lunch)
    for series in runs:
        working, lunch = count_transitions(series, schedule)
        pooled_working += working
        pooled_lunch += lunch
    return {
        "working": float(np.max(np.abs(normalize(pooled_working) - normalize(recorded_working)))),
        "lunch": float(np.max(np.abs(normalize(pooled_lunch) - normalize(recorded_lunch)))),
    }


@dataclass
class ComparisonReport:
    """Сравнение записанного ряда с прогонами цепи Маркова и агентной модели."""

    first: datetime
    last: datetime
    hours: int
    profiles: dict
    state_match_rate: dict
    profile_tvd: dict
    tm_max_dev: dict
    run_match_rates: dict
    seeds: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "first": self.first.isoformat(),
            "last": self.last.isoformat(),
            "hours": self.hours,
            "seeds": self.seeds,
            "profiles": {name: [float(value) for value in profile] for name, profile in self.profiles.items()},
            "state_match_rate": self.state_match_rate,
            "profile_tvd": self.profile_tvd,
            "profile_tvd_definition": "0.5 * mean_h |p_h - q_h|",
            "tm_max_dev": self.tm_max_dev,
            "run_match_rates": self.run_match_rates,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def build_report(
    recorded: StateSeries,
    markov_runs,
    agent_runs,
    schedule: TimeSlotSchedule = TimeSlotSchedule(),
    markov_seeds: Optional[list] = None,
    agent_seeds: Optional[list] = None,
) -> ComparisonReport:
    """
    Собирает отчёт сравнения.

    Прогоны каждого источника усредняются в один профиль. Для каждой пары
    источников считаются средняя доля совпадения состояний и расстояние
    профилей; прогоны Маркова и агентов сопоставляются попарно по индексу.
    Источник без прогонов в отчёт не попадает.

    Args:
        recorded (StateSeries): Записанный ряд
        markov_runs (list): Прогоны цепи Маркова
        agent_runs (list): Прогоны агентной модели
        schedule (TimeSlotSchedule): Расписание слотов для tm_max_dev
        markov_seeds (list, optional): Зёрна прогонов Маркова
        agent_seeds (list, optional): Зёрна агентных прогонов

    Returns:
        ComparisonReport: Отчёт
    """
    runs = {"markov": list(markov_runs), "agent": list(agent_runs)}
    for series in runs["markov"] + runs["agent"]:
        _check_same_range(recorded, series)

    profiles = {"recorded": hourly_profile(recorded)}
    run_match_rates = {}
    deviations = {}
    for name, source_runs in runs.items():
        if not source_runs:
            continue
        profiles[name] = average_profile(source_runs)
        run_match_rates[name] = [state_match_rate(recorded, series) for series in source_runs]
        deviations[name] = tm_max_dev(source_runs, recorded, schedule)

    match_rates = {
        f"recorded-{name}": float(np.mean(rates)) for name, rates in run_match_rates.items()
    }
    if runs["markov"] and runs["agent"]:
        pairs = list(zip(runs["markov"], runs["agent"]))
        match_rates["markov-agent"] = float(np.mean([state_match_rate(a, b) for a, b in pairs]))

    present = [name for name in SOURCES if name in profiles]
    distances = {
        f"{a}-{b}": profile_tvd(profiles[a], profiles[b])
        for i, a in enumerate(present)
        for b in present[i + 1 :]
    }

    seeds = {}
    if markov_seeds is not None:
        seeds["markov"] = list(markov_seeds)
    if agent_seeds is not None:
        seeds["agent"] = list(agent_seeds)

    report = ComparisonReport(
        first=recorded.start,
        last=recorded.last,
        hours=len(recorded),
        profiles=profiles,
        state_match_rate=match_rates,
        profile_tvd=distances,
        tm_max_dev=deviations,
        run_match_rates=run_match_rates,
        seeds=seeds,
    )
    logger.info(f"Отчёт собран: {len(recorded)} часов, источники {present}")
    return report


def profile_table_csv(report: ComparisonReport) -> str:
    """Таблица профилей "hour,recorded,markov,agent"; отсутствующий источник - пустая ячейка."""
    lines = [PROFILE_HEADER]
    for hour in range(HOURS_PER_DAY):
        cells = [str(hour)]
        for name in SOURCES:
            profile = report.profiles.get(name)
            cells.append("" if profile is None else f"{float(profile[hour]):.6f}")
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
