import os
import logging
from dotenv import load_dotenv

# Загрузка переменных окружения из файла .env
load_dotenv()

from src.cli import cli  # noqa: E402


def setup_logging():
    """Настройка логирования"""
    logging.basicConfig(
        level=os.getenv("LOG_LEVEL", "INFO").upper(),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )


# Определение логгера
logger = logging.getLogger(__name__)

if __name__ == "__main__":
    setup_logging()
    logger.debug("Запуск командной строки")
    cli()
