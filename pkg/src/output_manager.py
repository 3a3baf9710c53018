import hashlib
import json
import logging
import os
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, ConfigDict

from . import __version__

logger = logging.getLogger(__name__)

MANIFEST_SUFFIX = ".manifest.json"


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class FileDigest(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    path: str
    sha256: str


class RunManifest(BaseModel):
    """Манифест запуска: команда, параметры, входы и выходы с контрольными суммами."""

    model_config = ConfigDict(extra="forbid")

    command: str
    params: dict
    inputs: list[FileDigest] = []
    outputs: list[FileDigest] = []
    seed: Optional[int] = None
    config_digest: str
    tool_version: str = __version__
    started_at: str
    finished_at: Optional[str] = None


class OutputManager:
    """Класс для записи результатов и манифестов"""

    def __init__(self, output_folder=None):
        """
        Инициализация менеджера выходных файлов.

        Args:
            output_folder (str, optional): Папка по умолчанию (OUTPUT_FOLDER или "output")
        """
        self.output_folder = Path(output_folder or os.getenv("OUTPUT_FOLDER", "output"))

    def resolve(self, path, default_name: str) -> Path:
        """Явный путь как есть, иначе файл default_name в папке по умолчанию."""
        if path:
            return Path(path)
        return self.output_folder / default_name

    def read_text(self, path) -> str:
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
        logger.debug(f"Прочитан файл: {path}")
        return text

    def write_text(self, path, text: str) -> Path:
        """
        Записывает текст (UTF-8, окончания строк LF), создавая папки.

        Args:
            path: Путь к файлу
            text (str): Содержимое

        Returns:
            Path: Путь к записанному файлу
        """
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", encoding="utf-8", newline="\n") as handle:
                handle.write(text)
            logger.info(f"Файл записан: {path}")
            return path
        except OSError as e:
            logger.error(f"Ошибка при записи файла {path}: {e}")
            raise

    def start_manifest(self, command: str, params: dict, seed: Optional[int] = None) -> RunManifest:
        canonical = json.dumps(params, sort_keys=True, ensure_ascii=False)
        return RunManifest(
            command=command,
            params=params,
            seed=seed,
            config_digest=sha256_text(canonical),
            started_at=datetime.now(timezone.utc).isoformat(),
        )

    def add_input(self, manifest: RunManifest, path) -> None:
        manifest.inputs.append(FileDigest(path=str(path), sha256=sha256_file(path)))

    def add_output(self, manifest: RunManifest, path) -> None:
        manifest.outputs.append(FileDigest(path=str(path), sha256=sha256_file(path)))

    def write_manifest(self, manifest: RunManifest, primary_output) -> Path:
        """Пишет манифест рядом с основным выходом: <выход>.manifest.json."""
        manifest.finished_at = datetime.now(timezone.utc).isoformat()
        path = Path(f"{primary_output}{MANIFEST_SUFFIX}")
        return self.write_text(path, manifest.model_dump_json(indent=2) + "\n")

    def load_manifest(self, path) -> RunManifest:
        return RunManifest.model_validate_json(self.read_text(path))
