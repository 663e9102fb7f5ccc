"""
Конфигурация SLIM: дефолты retrieval-протокола и настройка логирования.

Дефолты протокола (beta, пороги pruning, top-k) зафиксированы константами и
НЕ переопределяются через окружение: CLI обязан отдавать ровно эти значения.

Через .env / окружение настраиваются только эксплуатационные параметры:
    - SLIM_LOG: уровень логирования (DEBUG, INFO, WARNING, ...)
    - SLIM_LOG_FILE: путь к файлу лога (опционально)
    - SLIM_MAX_QUERY_TOKENS: максимум токенов в запросе
    - SLIM_MEMORY_BUDGET_MB: бюджет памяти на построение индекса
    - SLIM_REFINE_BLOCK_DOCS: размер блока документов при точном скоринге
"""
import os
import sys
import logging
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

load_dotenv()

# --- Дефолты retrieval-протокола ---
DEFAULT_BETA = 0.01
DEFAULT_WEIGHT_THRESHOLD = 0.5
DEFAULT_IDF_THRESHOLD = 3.0
DEFAULT_FIRST_STAGE_K = 4000
DEFAULT_FINAL_K = 1000

# Сетка sweep (минимальный IDF и top-k первой стадии)
DEFAULT_IDF_GRID = (0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0)
DEFAULT_K_GRID = (1000, 1500, 2000, 2500, 3000, 3500, 4000)

INDEX_FORMAT_VERSION = 1


def _env_int(name: str, default: int) -> int:
    """Читает целое из окружения, при мусоре возвращает default"""
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        logging.getLogger(__name__).warning(f"[Config] {name}={raw!r} не число, используется {default}")
        return default


MAX_QUERY_TOKENS = _env_int('SLIM_MAX_QUERY_TOKENS', 256)
MEMORY_BUDGET_MB = _env_int('SLIM_MEMORY_BUDGET_MB', 8192)
REFINE_BLOCK_DOCS = _env_int('SLIM_REFINE_BLOCK_DOCS', 1024)

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'

_logging_configured = False


def setup_logging(level: Optional[str] = None, log_file: Optional[str] = None) -> logging.Logger:
    """
    Настраивает root logger (однократно).

    stdout зарезервирован под машиночитаемые сводки CLI, поэтому консольный
    handler пишет в stderr.

    Args:
        level: Уровень логирования (по умолчанию из SLIM_LOG, иначе WARNING)
        log_file: Файл лога (по умолчанию из SLIM_LOG_FILE, иначе без файла)

    Returns:
        Настроенный root logger
    """
    global _logging_configured

    level_name = (level or os.getenv('SLIM_LOG') or 'WARNING').upper()
    numeric_level = getattr(logging, level_name, None)
    if not isinstance(numeric_level, int):
        numeric_level = logging.WARNING

    root_logger = logging.getLogger()
    root_logger.setLevel(numeric_level)

    if _logging_configured:
        return root_logger

    formatter = logging.Formatter(LOG_FORMAT)

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(formatter)
    root_logger.addHandler(console_handler)

    log_file = log_file or os.getenv('SLIM_LOG_FILE')
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_file, encoding='utf-8')
        file_handler.setFormatter(formatter)
        root_logger.addHandler(file_handler)

    # Отключаем DEBUG логи от сторонних библиотек
    logging.getLogger('numexpr').setLevel(logging.WARNING)

    _logging_configured = True
    return root_logger
