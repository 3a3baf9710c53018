import asyncio
import logging
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Optional

from .agents import World, door_event_log, export_trace, group_agent, run
from .ingest import HOUR, StateSeries, serialize_event_log
from .markov import MarkovModel, simulate
from .rng import RandomStream
from .scenario import ScenarioConfig, build_scenario

logger = logging.getLogger(__name__)

ENGINES = ("markov", "group-agent", "scenario")


@dataclass(frozen=True)
class SimulationResult:
    """Результат одного прогона: ряд состояний и, для агентных движков, трасса."""

    seed: int
    states: StateSeries
    trace: Optional[str] = None
    door_log: Optional[str] = None


def _end_of(start: datetime, days: int) -> datetime:
    if days < 1:
        raise ValueError(f"Число дней должно быть положительным: {days}")
    return start + timedelta(days=days)


class MarkovEngine:
    """Прямое моделирование цепью Маркова."""

    def __init__(self, model: MarkovModel):
        self.model = model

    def run(self, seed, start, days) -> SimulationResult:
        until = _end_of(start, days)
        states = simulate(self.model, start, until - HOUR, RandomStream(seed))
        return SimulationResult(seed, states)


class AgentEngine:
    """Общая часть агентных движков: прогон мира, трасса и журнал двери."""

    def build(self, seed, start) -> World:
        raise NotImplementedError

    def run(self, seed, start, days) -> SimulationResult:
        until = _end_of(start, days)
        world = self.build(seed, start)
        initial_open = world.initial_door_open
        world, states = run(world, until)
        door_log = serialize_event_log(door_event_log(world.trace, start, initial_open))
        return SimulationResult(seed, states, export_trace(world), door_log)


class GroupAgentEngine(AgentEngine):
    """Один групповой агент, поведение которого совпадает с цепью Маркова."""

    def __init__(self, model: MarkovModel):
        self.model = model

    def build(self, seed, start) -> World:
        return World(start=start, seed=seed, schedule=self.model.schedule, agents=[group_agent(self.model)])


class ScenarioEngine(AgentEngine):
    """Сценарий офиса с Khadija, Stephane, Audrey и посетителями."""

    def __init__(self, config: ScenarioConfig):
        self.config = config

    def build(self, seed, start) -> World:
        return build_scenario(self.config, seed, start)


class Simulation:
    """Класс-обертка для выбора движка моделирования."""

    def __init__(self, engine: str, model: Optional[MarkovModel] = None, config: Optional[ScenarioConfig] = None):
        """
        Инициализация моделирования.

        Args:
            engine (str): markov, group-agent или scenario
            model (MarkovModel, optional): Модель для markov и group-agent
            config (ScenarioConfig, optional): Конфигурация сценария (по умолчанию стандартная)
        """
        self.engine = engine
        if engine == "markov":
            if model is None:
                raise ValueError("Движку markov нужна модель")
            self.backend = MarkovEngine(model)
        elif engine == "group-agent":
            if model is None:
                raise ValueError("Движку group-agent нужна модель")
            self.backend = GroupAgentEngine(model)
        elif engine == "scenario":
            self.backend = ScenarioEngine(config if config is not None else ScenarioConfig())
        else:
            raise ValueError(f"Неизвестный движок {engine!r}, ожидался один из {ENGINES}")
        logger.debug(f"Инициализирован движок {engine}")

    def run(self, seed, start, days) -> SimulationResult:
        """
        Выполняет один прогон.

        Args:
            seed (int): Зерно
            start (datetime): Начало (начало часа)
            days (int): Число суток

        Returns:
            SimulationResult: Результат прогона
        """
        result = self.backend.run(seed, start, days)
        logger.info(f"Прогон {self.engine} завершён: seed={seed}, {len(result.states)} часов")
        return result

    async def run_many(self, seeds, start, days) -> list:
        """
        Выполняет прогоны по нескольким зёрнам параллельно.

        Каждый прогон строит собственный мир и поток, поэтому порядок
        завершения не влияет на результаты. Результаты идут в порядке seeds.

        Args:
            seeds (list): Зёрна
            start (datetime): Начало
            days (int): Число суток

        Returns:
            list: Список SimulationResult
        """
        try:
            loop = asyncio.get_running_loop()
            futures = [loop.run_in_executor(None, self.backend.run, seed, start, days) for seed in seeds]
            results = await asyncio.gather(*futures)
            logger.info(f"Серия {self.engine} завершена: {len(results)} прогонов")
            return list(results)
        except Exception as e:
            logger.error(f"Ошибка в серии прогонов {self.engine}: {e}")
            raise
