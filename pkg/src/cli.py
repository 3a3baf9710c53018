"""
Командная строка конвейера: ingest -> fit -> simulate -> compare.

Команды:
- ingest: журнал датчика -> почасовые состояния двери
- fit: состояния -> модель цепи Маркова (JSON)
- simulate: модель или сценарий -> состояния (+ трасса для агентных движков)
- compare: записанные состояния против прогонов -> отчёт JSON и профиль CSV
- fixture: синтетический журнал датчика по известной модели
- rerun: повтор команды по манифесту с проверкой контрольных сумм

Коды выхода: 0 - успех, 2 - ошибка входных данных, 3 - ошибка ввода-вывода.
"""

import functools
import logging
import sys
import tempfile
from datetime import datetime
from pathlib import Path

import click

from . import __version__
from .analysis import build_report, profile_table_csv
from .engines import ENGINES, Simulation
from .fixtures import DEFAULT_FIXTURE_MODEL, DEFAULT_LOSS, synthetic_event_log
from .ingest import (
    Thresholds,
    apply_closure_assumptions,
    discretize,
    hourly_open_ratio,
    parse_event_log,
    parse_state_series,
    serialize_event_log,
    serialize_state_series,
)
from .markov import TimeSlotSchedule, fit_model, load_model, save_model
from .output_manager import MANIFEST_SUFFIX, OutputManager, sha256_file
from .scenario import load_scenario_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_IO = 3

DEFAULT_SEED = 0
DEFAULT_DAYS = 60
DEFAULT_START = "2013-10-01T00:00:00"

# Параметры команд, в которые пишутся выходные файлы
OUTPUT_PARAMS = {
    "ingest": ("output_path",),
    "fit": ("output_path",),
    "simulate": ("output_path", "trace_path", "door_log_path"),
    "compare": ("output_path", "profile_path"),
    "fixture": ("output_path",),
}


class ReproducibilityError(ValueError):
    pass


def exit_codes(func):
    """Переводит исключения команды в коды выхода: ValueError -> 2, OSError -> 3."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs) -> int:
        try:
            func(*args, **kwargs)
            return EXIT_OK
        except ValueError as e:
            logger.error(f"Ошибка входных данных в {func.__name__}: {e}")
            click.echo(f"Ошибка: {e}", err=True)
            return EXIT_INVALID
        except OSError as e:
            logger.error(f"Ошибка ввода-вывода в {func.__name__}: {e}")
            click.echo(f"Ошибка ввода-вывода: {e}", err=True)
            return EXIT_IO

    return wrapper


def _hour(text: str) -> datetime:
    moment = datetime.fromisoformat(text)
    if moment.minute or moment.second or moment.microsecond:
        raise ValueError(f"Ожидалось начало часа: {text}")
    return moment


def _sibling(path, suffix: str) -> str:
    path = Path(path)
    return str(path.with_name(path.name.split(".")[0] + suffix))


def _seed_of(path):
    manifest_path = Path(f"{path}{MANIFEST_SUFFIX}")
    if not manifest_path.exists():
        return None
    return OutputManager().load_manifest(manifest_path).seed


@exit_codes
def cmd_ingest(input_path, output_path=None, first=None, last=None, closed_max=0.2, open_min=0.8):
    """
    Журнал датчика -> CSV почасовых состояний.

    Без явного диапазона берутся целые сутки от первого до последнего события.

    Args:
        input_path (str): CSV событий
        output_path (str, optional): CSV состояний
        first (str, optional): Первый час (ISO)
        last (str, optional): Последний час (ISO, включительно)
        closed_max (float): Порог Closed
        open_min (float): Порог Open
    """
    om = OutputManager()
    output_path = str(om.resolve(output_path, "states.csv"))
    thresholds = Thresholds(closed_max, open_min)
    log = parse_event_log(om.read_text(input_path))

    if first is None or last is None:
        if not log.entries:
            raise ValueError("Журнал пуст: укажите диапазон --first/--last")
        first = first or log.entries[0][0].replace(hour=0, minute=0, second=0, microsecond=0).isoformat()
        last = last or log.entries[-1][0].replace(hour=23, minute=0, second=0, microsecond=0).isoformat()

    params = {
        "input_path": str(input_path),
        "output_path": output_path,
        "first": first,
        "last": last,
        "closed_max": closed_max,
        "open_min": open_min,
    }
    manifest = om.start_manifest("ingest", params)
    om.add_input(manifest, input_path)

    ratios = hourly_open_ratio(log, _hour(first), _hour(last))
    states = apply_closure_assumptions(discretize(ratios, thresholds), TimeSlotSchedule())
    om.write_text(output_path, serialize_state_series(states))
    om.add_output(manifest, output_path)
    om.write_manifest(manifest, output_path)
    click.echo(f"Состояния: {output_path} ({len(states)} часов)")


@exit_codes
def cmd_fit(input_path, output_path=None):
    """CSV состояний -> JSON модели (по умолчанию model.json в OUTPUT_FOLDER)."""
    om = OutputManager()
    output_path = str(om.resolve(output_path, "model.json"))
    manifest = om.start_manifest("fit", {"input_path": str(input_path), "output_path": output_path})
    om.add_input(manifest, input_path)

    model = fit_model(parse_state_series(om.read_text(input_path)))
    om.write_text(output_path, save_model(model))
    om.add_output(manifest, output_path)
    om.write_manifest(manifest, output_path)
    click.echo(f"Модель: {output_path}")


@exit_codes
def cmd_simulate(
    model_path=None,
    output_path=None,
    engine="markov",
    seed=DEFAULT_SEED,
    days=DEFAULT_DAYS,
    start=DEFAULT_START,
    config_path=None,
    trace_path=None,
    door_log_path=None,
):
    """
    Моделирование выбранным движком.

    Агентные движки дополнительно пишут трассу JSON lines (по умолчанию
    рядом с выходом, <имя>.trace.jsonl) и, если задан путь, журнал двери.
    """
    om = OutputManager()
    output_path = str(om.resolve(output_path, f"{engine}-{seed}.csv"))
    if engine != "markov" and trace_path is None:
        trace_path = _sibling(output_path, ".trace.jsonl")

    params = {
        "model_path": model_path and str(model_path),
        "output_path": output_path,
        "engine": engine,
        "seed": seed,
        "days": days,
        "start": start,
        "config_path": config_path and str(config_path),
        "trace_path": trace_path and str(trace_path),
        "door_log_path": door_log_path and str(door_log_path),
    }
    manifest = om.start_manifest("simulate", params, seed=seed)

    model = None
    if model_path is not None:
        om.add_input(manifest, model_path)
        model = load_model(om.read_text(model_path))
    elif engine != "scenario":
        raise ValueError(f"Движку {engine} нужна модель (--model)")
    config = None
    if config_path is not None:
        om.add_input(manifest, config_path)
        config = load_scenario_config(om.read_text(config_path))

    result = Simulation(engine, model, config).run(seed, _hour(start), days)
    om.write_text(output_path, serialize_state_series(result.states))
    om.add_output(manifest, output_path)
    if result.trace is not None and trace_path is not None:
        om.write_text(trace_path, result.trace)
        om.add_output(manifest, trace_path)
    if result.door_log is not None and door_log_path is not None:
        om.write_text(door_log_path, result.door_log)
        om.add_output(manifest, door_log_path)
    om.write_manifest(manifest, output_path)
    click.echo(f"Состояния: {output_path}")


@exit_codes
def cmd_compare(recorded_path, output_path=None, markov_paths=(), agent_paths=(), profile_path=None):
    """
    Сравнивает записанный ряд с прогонами движков.

    Args:
        recorded_path: CSV записанных состояний
        output_path: JSON отчёта
        markov_paths: CSV прогонов цепи Маркова
        agent_paths: CSV прогонов агентной модели
        profile_path: CSV таблицы профилей, по умолчанию рядом с отчётом

    Returns:
        int: Код выхода
    """
    om = OutputManager()
    output_path = str(om.resolve(output_path, "report.json"))
    if profile_path is None:
        profile_path = _sibling(output_path, ".profile.csv")
    markov_paths = [str(path) for path in markov_paths]
    agent_paths = [str(path) for path in agent_paths]
    if not markov_paths and not agent_paths:
        raise ValueError("Нужен хотя бы один смоделированный ряд (--markov или --agent)")

    params = {
        "recorded_path": str(recorded_path),
        "output_path": output_path,
        "markov_paths": markov_paths,
        "agent_paths": agent_paths,
        "profile_path": str(profile_path),
    }
    manifest = om.start_manifest("compare", params)
    for path in [recorded_path, *markov_paths, *agent_paths]:
        om.add_input(manifest, path)

    recorded = parse_state_series(om.read_text(recorded_path))
    markov_runs = [parse_state_series(om.read_text(path)) for path in markov_paths]
    agent_runs = [parse_state_series(om.read_text(path)) for path in agent_paths]
    report = build_report(
        recorded,
        markov_runs,
        agent_runs,
        markov_seeds=[_seed_of(path) for path in markov_paths],
        agent_seeds=[_seed_of(path) for path in agent_paths],
    )

    om.write_text(output_path, report.to_json())
    om.write_text(profile_path, profile_table_csv(report))
    om.add_output(manifest, output_path)
    om.add_output(manifest, profile_path)
    om.write_manifest(manifest, output_path)
    for pair, rate in report.state_match_rate.items():
        click.echo(f"{pair}: совпадение {rate:.3f}")
    for pair, distance in report.profile_tvd.items():
        click.echo(f"{pair}: расстояние профилей {distance:.4f}")


@exit_codes
def cmd_fixture(output_path=None, seed=DEFAULT_SEED, days=DEFAULT_DAYS, start=DEFAULT_START, model_path=None, loss=DEFAULT_LOSS):
    """Синтетический журнал датчика по известной модели."""
    om = OutputManager()
    output_path = str(om.resolve(output_path, "fixture_events.csv"))
    params = {
        "output_path": output_path,
        "seed": seed,
        "days": days,
        "start": start,
        "model_path": model_path and str(model_path),
        "loss": loss,
    }
    manifest = om.start_manifest("fixture", params, seed=seed)
    model = DEFAULT_FIXTURE_MODEL
    if model_path is not None:
        om.add_input(manifest, model_path)
        model = load_model(om.read_text(model_path))

    log = synthetic_event_log(model, _hour(start), days, seed, loss)
    om.write_text(output_path, serialize_event_log(log))
    om.add_output(manifest, output_path)
    om.write_manifest(manifest, output_path)
    click.echo(f"Журнал: {output_path} ({len(log)} событий)")


COMMANDS = {
    "ingest": cmd_ingest,
    "fit": cmd_fit,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "fixture": cmd_fixture,
}


@exit_codes
def cmd_rerun(manifest_path):
    """
    Повторяет команду из манифеста во временную папку и сверяет выходы.

    Входы должны совпадать с записанными в манифесте; любое расхождение
    контрольных сумм - ошибка (код 2).

    Args:
        manifest_path (str): Путь к манифесту
    """
    om = OutputManager()
    manifest = om.load_manifest(manifest_path)
    command = COMMANDS.get(manifest.command)
    if command is None:
        raise ValueError(f"Неизвестная команда в манифесте: {manifest.command}")

    for recorded in manifest.inputs:
        if sha256_file(recorded.path) != recorded.sha256:
            raise ReproducibilityError(f"Вход изменился с момента запуска: {recorded.path}")

    recorded_digests = {output.path: output.sha256 for output in manifest.outputs}
    with tempfile.TemporaryDirectory() as tmp:
        params = dict(manifest.params)
        redirected = {}
        for i, key in enumerate(OUTPUT_PARAMS[manifest.command]):
            if params.get(key):
                redirected[params[key]] = Path(tmp) / f"{i}-{Path(params[key]).name}"
                params[key] = str(redirected[params[key]])

        code = command(**params)
        if code != EXIT_OK:
            raise ReproducibilityError(f"Повтор команды {manifest.command} завершился с кодом {code}")

        mismatched = [
            original
            for original, replayed in redirected.items()
            if original in recorded_digests and sha256_file(replayed) != recorded_digests[original]
        ]
    if mismatched:
        raise ReproducibilityError(f"Выходы не совпали: {', '.join(mismatched)}")
    click.echo(f"Воспроизведено побайтно: {manifest.command}, выходов {len(redirected)}")


@click.group()
@click.version_option(version=__version__)
def cli():
    """Моделирование состояния двери офиса: цепь Маркова и агентная модель."""


@cli.command()
@click.argument("input_path", type=click.Path(dir_okay=False))
@click.option("--out", "output_path", default=None, help="CSV состояний")
@click.option("--first", default=None, help="Первый час диапазона (ISO)")
@click.option("--last", default=None, help="Последний час диапазона (ISO, включительно)")
@click.option("--closed-max", default=0.2, show_default=True, type=float)
@click.option("--open-min", default=0.8, show_default=True, type=float)
def ingest(input_path, output_path, first, last, closed_max, open_min):
    """Журнал датчика двери -> почасовые состояния."""
    sys.exit(cmd_ingest(input_path, output_path, first, last, closed_max, open_min))


@cli.command()
@click.argument("input_path", type=click.Path(dir_okay=False))
@click.option("--out", "output_path", default=None, help="JSON модели")
def fit(input_path, output_path):
    """Оценка матриц переходов по CSV состояний."""
    sys.exit(cmd_fit(input_path, output_path))


@cli.command()
@click.option("--model", "model_path", default=None, help="JSON модели (для markov и group-agent)")
@click.option("--engine", type=click.Choice(ENGINES), default="markov", show_default=True)
@click.option("--seed", default=DEFAULT_SEED, show_default=True, type=click.IntRange(min=0))
@click.option("--days", default=DEFAULT_DAYS, show_default=True, type=click.IntRange(min=1))
@click.option("--start", default=DEFAULT_START, show_default=True, help="Начало моделирования (ISO)")
@click.option("--config", "config_path", default=None, help="JSON конфигурации сценария")
@click.option("--out", "output_path", default=None, help="CSV состояний")
@click.option("--trace", "trace_path", default=None, help="Трасса JSON lines")
@click.option("--door-log", "door_log_path", default=None, help="CSV событий двери из трассы")
def simulate(model_path, engine, seed, days, start, config_path, output_path, trace_path, door_log_path):
    """Моделирование почасовых состояний двери."""
    sys.exit(cmd_simulate(model_path, output_path, engine, seed, days, start, config_path, trace_path, door_log_path))


@cli.command()
@click.argument("recorded_path", type=click.Path(dir_okay=False))
@click.option("--markov", "markov_paths", multiple=True, help="CSV прогона цепи Маркова (можно несколько)")
@click.option("--agent", "agent_paths", multiple=True, help="CSV агентного прогона (можно несколько)")
@click.option("--out", "output_path", default=None, help="JSON отчёта")
@click.option("--profile", "profile_path", default=None, help="CSV профилей")
def compare(recorded_path, markov_paths, agent_paths, output_path, profile_path):
    """Сравнение записанных состояний с прогонами."""
    sys.exit(cmd_compare(recorded_path, output_path, markov_paths, agent_paths, profile_path))


@cli.command()
@click.option("--out", "output_path", default=None, help="CSV событий")
@click.option("--seed", default=DEFAULT_SEED, show_default=True, type=click.IntRange(min=0))
@click.option("--days", default=DEFAULT_DAYS, show_default=True, type=click.IntRange(min=1))
@click.option("--start", default=DEFAULT_START, show_default=True)
@click.option("--model", "model_path", default=None, help="JSON модели (по умолчанию встроенная)")
@click.option("--loss", default=DEFAULT_LOSS, show_default=True, type=float)
def fixture(output_path, seed, days, start, model_path, loss):
    """Синтетический журнал датчика по известной модели."""
    sys.exit(cmd_fixture(output_path, seed, days, start, model_path, loss))


@cli.command()
@click.argument("manifest_path", type=click.Path(dir_okay=False))
def rerun(manifest_path):
    """Повтор команды по манифесту с побайтной проверкой выходов."""
    sys.exit(cmd_rerun(manifest_path))
